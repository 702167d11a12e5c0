#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sos/core.hpp"
#include "sos/detail/strings.hpp"
#include "sos/error.hpp"

namespace sos {

// The single placeholder contract shared by all meta-prompt templates.
inline constexpr std::string_view kPayloadPlaceholder = "{passed in data}";

// Canonical template ids; these double as file stems under the template
// directory.
inline constexpr const char* kSemanticTemplate = "semantic";
inline constexpr const char* kCrossoverTemplate = "crossover";
inline constexpr const char* kFeedbackImproverTemplate = "feedback_improver";
inline constexpr const char* kFeedbackGeneratorKpiTemplate = "feedback_generator_kpi";
inline constexpr const char* kFeedbackGeneratorSecurityTemplate = "feedback_generator_security";

// Loads meta-prompt text files and renders them against placeholder
// bindings. Bindings map placeholder names (without braces) to payload text.
class TemplateStore {
  public:
    static TemplateStore from_directory(const std::filesystem::path& dir) {
        TemplateStore store;
        store.dir_ = dir;
        if (!std::filesystem::is_directory(dir)) {
            throw TemplateError("templates: directory not found: " + dir.string());
        }
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".txt") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& path : files) {
            std::ifstream in(path, std::ios::binary);
            std::ostringstream body;
            body << in.rdbuf();
            store.templates_[path.stem().string()] = body.str();
        }
        return store;
    }

    bool has(const std::string& id) const { return templates_.count(id) != 0; }

    const std::string& text(const std::string& id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) {
            std::string where = dir_.empty() ? std::string() : " under " + dir_.string();
            throw TemplateError("templates: missing template file '" + id + ".txt'" + where);
        }
        return it->second;
    }

    // Substitutes every "{name}" occurrence per binding, then verifies no
    // payload placeholder survived unbound.
    std::string render(const std::string& id,
                       const std::map<std::string, std::string>& bindings) const {
        std::string out = text(id);
        for (const auto& [name, value] : bindings) {
            out = detail::replace_all(out, "{" + name + "}", value);
        }
        if (detail::contains(out, kPayloadPlaceholder)) {
            throw TemplateError("templates: unbound placeholder " +
                                std::string(kPayloadPlaceholder) + " in '" + id + "'");
        }
        return out;
    }

    void put(const std::string& id, std::string body) { templates_[id] = std::move(body); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [id, body] : templates_) out.push_back(id);
        return out;
    }

  private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> templates_;
};

// Composition and parsing of the "{passed in data}" payloads. Operators build
// payloads with these functions; the deterministic mock backends parse them
// back, so the two sides must stay inverse to each other.
namespace payload {

inline constexpr std::string_view kCurrentPromptKey = "current prompt: ";
inline constexpr std::string_view kParent1Key = "Parent prompt 1: ";
inline constexpr std::string_view kParent2Key = "Parent prompt 2: ";
inline constexpr std::string_view kPromptKey = "prompt: ";
inline constexpr std::string_view kFeedbackKey = "feedback: ";

// Prompts are single logical lines in payloads; newlines inside a prompt
// would break line-oriented parsing, so they fold to spaces.
inline std::string fold_line(std::string_view text) {
    return detail::collapse_whitespace(text);
}

inline std::string semantic(std::string_view prompt) {
    return std::string(kCurrentPromptKey) + fold_line(prompt);
}

inline std::string crossover(std::string_view parent1, std::string_view parent2) {
    return std::string(kParent1Key) + fold_line(parent1) + "\n" + std::string(kParent2Key) +
           fold_line(parent2);
}

inline std::string feedback_generator(std::string_view prompt,
                                      std::span<const MistakeCase> mistakes) {
    std::string out = std::string(kPromptKey) + fold_line(prompt);
    std::size_t n = 0;
    for (const MistakeCase& m : mistakes) {
        ++n;
        out += "\nCase " + std::to_string(n) + ":";
        out += "\n  input: " + fold_line(m.input);
        if (m.expected) out += "\n  expected: " + fold_line(*m.expected);
        out += "\n  output: " + fold_line(m.model_output);
        out += "\n  verdict: " + std::string(to_string(m.verdict));
        if (m.category) out += "\n  category: " + fold_line(*m.category);
    }
    return out;
}

inline std::string feedback_improver(std::string_view prompt, std::string_view feedback) {
    return std::string(kPromptKey) + fold_line(prompt) + "\n" + std::string(kFeedbackKey) +
           detail::collapse_whitespace(feedback);
}

// Extracts the text following `key` on the first line that starts with it.
inline std::string extract_line(std::string_view payload, std::string_view key) {
    std::size_t pos = 0;
    while (pos <= payload.size()) {
        std::size_t end = payload.find('\n', pos);
        if (end == std::string_view::npos) end = payload.size();
        std::string_view line = payload.substr(pos, end - pos);
        if (detail::starts_with(line, key)) {
            return std::string(line.substr(key.size()));
        }
        if (end == payload.size()) break;
        pos = end + 1;
    }
    throw ParseError("payload: expected line starting with '" + std::string(key) + "'");
}

}  // namespace payload

}  // namespace sos
