#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sos/detail/hash.hpp"
#include "sos/detail/rng.hpp"
#include "sos/detail/strings.hpp"
#include "sos/error.hpp"

namespace sos {

struct TaskRow {
    std::string input;
    std::string target;
};

// A task dataset D of (input, target) pairs; rows keep file order.
struct TaskDataset {
    std::string name;
    std::vector<TaskRow> rows;

    std::string content_hash() const {
        std::string material;
        for (const TaskRow& r : rows) {
            material += r.input;
            material += '\x1f';
            material += r.target;
            material += '\x1e';
        }
        return detail::sha256_hex(material);
    }
};

struct SecurityProbe {
    std::string probe;
    std::string category;
};

// Adversarial probes grouped into a closed category set. `categories` lists
// the closed set in declaration (or first-seen) order.
struct SecurityProbeSet {
    std::vector<SecurityProbe> probes;
    std::vector<std::string> categories;

    std::string content_hash() const {
        std::string material;
        for (const SecurityProbe& p : probes) {
            material += p.probe;
            material += '\x1f';
            material += p.category;
            material += '\x1e';
        }
        return detail::sha256_hex(material);
    }
};

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line, const std::string& path,
                                       std::size_t line_no) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": not a JSON object");
    }
    return j;
}

inline std::string require_string_field(const nlohmann::json& j, const char* field,
                                        const std::string& path, std::size_t line_no) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": missing string field '" +
                         field + "'");
    }
    return j[field].get<std::string>();
}

}  // namespace detail

// Newline-delimited records {"input": ..., "target": ...}; blank lines are
// skipped. Errors carry the 1-based line number.
inline TaskDataset load_task_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("dataset: cannot open " + path.string());

    TaskDataset d;
    d.name = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j = detail::parse_jsonl_line(line, path.string(), line_no);
        TaskRow row;
        row.input = detail::require_string_field(j, "input", path.string(), line_no);
        row.target = detail::require_string_field(j, "target", path.string(), line_no);
        if (row.target.empty()) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": empty target");
        }
        d.rows.push_back(std::move(row));
    }
    if (d.rows.empty()) throw DataError("dataset: " + path.string() + " holds zero rows");
    return d;
}

// Newline-delimited records {"probe": ..., "category": ...}. An optional
// first-line header {"categories": [...]} declares the closed category set;
// without one the set is the distinct categories in first-seen order.
inline SecurityProbeSet load_security_probes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("probes: cannot open " + path.string());

    SecurityProbeSet s;
    std::set<std::string> declared;
    bool has_header = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j = detail::parse_jsonl_line(line, path.string(), line_no);
        if (s.probes.empty() && !has_header && j.contains("categories")) {
            if (!j["categories"].is_array()) {
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": 'categories' must be an array");
            }
            for (const auto& c : j["categories"]) {
                if (!c.is_string() || c.get<std::string>().empty()) {
                    throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                     ": categories must be non-empty strings");
                }
                if (declared.insert(c.get<std::string>()).second) {
                    s.categories.push_back(c.get<std::string>());
                }
            }
            has_header = true;
            continue;
        }
        SecurityProbe p;
        p.probe = detail::require_string_field(j, "probe", path.string(), line_no);
        p.category = detail::require_string_field(j, "category", path.string(), line_no);
        if (p.category.empty()) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": empty category");
        }
        if (has_header) {
            if (!declared.count(p.category)) {
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": category '" + p.category + "' not declared in header");
            }
        } else if (declared.insert(p.category).second) {
            s.categories.push_back(p.category);
        }
        s.probes.push_back(std::move(p));
    }
    if (s.probes.empty()) throw DataError("probes: " + path.string() + " holds zero probes");
    return s;
}

// Seeded uniform shuffle, then the first dev_n rows and the next test_n rows.
// The two outputs never share a row.
inline std::pair<TaskDataset, TaskDataset> split_dev_test(const TaskDataset& d, std::size_t dev_n,
                                                          std::size_t test_n,
                                                          std::uint64_t seed) {
    if (dev_n + test_n > d.rows.size()) {
        throw DataError("split: dev " + std::to_string(dev_n) + " + test " +
                        std::to_string(test_n) + " exceeds " + std::to_string(d.rows.size()) +
                        " rows");
    }
    std::mt19937_64 rng(detail::derive_seed(seed, std::string_view("split_dev_test")));
    std::vector<std::size_t> idx(d.rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::shuffle(idx, rng);

    TaskDataset dev{d.name + ".dev", {}};
    TaskDataset test{d.name + ".test", {}};
    for (std::size_t i = 0; i < dev_n; ++i) dev.rows.push_back(d.rows[idx[i]]);
    for (std::size_t i = 0; i < test_n; ++i) test.rows.push_back(d.rows[idx[dev_n + i]]);
    return {std::move(dev), std::move(test)};
}

// Exactly per_category probes from every category, sampled without
// replacement with a per-category derived seed. Output is grouped by the
// closed-set category order; within a category the original file order holds.
inline SecurityProbeSet stratified_sample(const SecurityProbeSet& s, std::size_t per_category,
                                          std::uint64_t seed) {
    SecurityProbeSet out;
    out.categories = s.categories;
    for (const std::string& category : s.categories) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < s.probes.size(); ++i) {
            if (s.probes[i].category == category) pool.push_back(i);
        }
        if (pool.size() < per_category) {
            throw DataError("stratified_sample: category '" + category + "' holds " +
                            std::to_string(pool.size()) + " probes, need " +
                            std::to_string(per_category));
        }
        std::mt19937_64 rng(detail::derive_seed(seed, category));
        std::vector<std::size_t> chosen = detail::sample_indices(pool.size(), per_category, rng);
        std::sort(chosen.begin(), chosen.end());
        for (std::size_t c : chosen) out.probes.push_back(s.probes[pool[c]]);
    }
    return out;
}

}  // namespace sos
