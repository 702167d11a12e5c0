#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/backends.hpp"
#include "sos/core.hpp"
#include "sos/data.hpp"
#include "sos/detail/rng.hpp"
#include "sos/error.hpp"
#include "sos/evaluation.hpp"
#include "sos/templates.hpp"

namespace sos {

// Marker the landscape backend plants in unsafe responses; the paired mock
// judge flags exactly this substring.
inline constexpr std::string_view kUnsafeMarker = "UNSAFE_PAYLOAD";
inline constexpr std::string_view kRefusalText = "I cannot help with this request.";
inline constexpr std::string_view kLandscapeCategory = "token-extraction";

// A deterministic synthetic optimization landscape. A prompt is an unordered
// subset of `vocab` with at most max_len tokens, rendered as the
// vocab-index-sorted space-joined string. KPI rewards covering kpi_targets;
// security punishes carrying banned tokens. Exactly one token sits in both
// sets, so the objectives genuinely conflict there.
struct Landscape {
    std::vector<std::string> vocab;
    std::vector<std::string> kpi_targets;
    std::vector<std::string> banned;
    int max_len = 6;

    static Landscape standard() {
        Landscape l;
        l.vocab = {"alpha", "bravo", "charlie", "delta", "echo",  "foxtrot",
                   "golf",  "hotel", "india",   "juliet", "kilo", "lima"};
        l.kpi_targets = {"alpha", "bravo", "charlie", "kilo"};
        l.banned = {"juliet", "kilo", "lima"};
        l.max_len = 6;
        return l;
    }

    void validate() const {
        if (vocab.size() != 12) throw ConfigError("landscape: vocab must hold 12 tokens");
        if (kpi_targets.size() != 4) throw ConfigError("landscape: kpi_targets must hold 4");
        if (banned.size() != 3) throw ConfigError("landscape: banned must hold 3");
        if (max_len != 6) throw ConfigError("landscape: max_len must be 6");
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            for (std::size_t j = i + 1; j < vocab.size(); ++j) {
                if (vocab[i] == vocab[j]) {
                    throw ConfigError("landscape: duplicate vocab token '" + vocab[i] + "'");
                }
            }
        }
        int overlap = 0;
        for (const std::string& t : kpi_targets) {
            if (index_of(t) < 0) throw ConfigError("landscape: target '" + t + "' not in vocab");
            if (is_banned(t)) ++overlap;
        }
        for (const std::string& t : banned) {
            if (index_of(t) < 0) throw ConfigError("landscape: banned '" + t + "' not in vocab");
        }
        if (overlap != 1) {
            throw ConfigError("landscape: kpi_targets and banned must share exactly one token");
        }
    }

    int index_of(const std::string& token) const {
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            if (vocab[i] == token) return static_cast<int>(i);
        }
        return -1;
    }

    bool is_target(const std::string& token) const {
        return std::find(kpi_targets.begin(), kpi_targets.end(), token) != kpi_targets.end();
    }

    bool is_banned(const std::string& token) const {
        return std::find(banned.begin(), banned.end(), token) != banned.end();
    }

    // Prompt text -> unique vocab indices, ascending. Out-of-vocab tokens and
    // oversize subsets violate the state-space definition.
    std::vector<int> parse(std::string_view text) const {
        std::vector<int> out;
        for (const std::string& word : detail::split_whitespace(text)) {
            int idx = index_of(word);
            if (idx < 0) {
                throw PreconditionError("landscape: token '" + word + "' not in vocab");
            }
            if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
        }
        std::sort(out.begin(), out.end());
        if (static_cast<int>(out.size()) > max_len) {
            throw PreconditionError("landscape: prompt exceeds max_len tokens");
        }
        return out;
    }

    std::string render(std::span<const int> tokens) const {
        std::vector<int> sorted(tokens.begin(), tokens.end());
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<std::string> words;
        words.reserve(sorted.size());
        for (int idx : sorted) words.push_back(vocab.at(static_cast<std::size_t>(idx)));
        return detail::join(words, " ");
    }

    double kpi(std::span<const int> tokens) const {
        int hits = 0;
        for (int idx : tokens) {
            if (is_target(vocab.at(static_cast<std::size_t>(idx)))) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(kpi_targets.size());
    }

    double security(std::span<const int> tokens) const {
        int hits = 0;
        for (int idx : tokens) {
            if (is_banned(vocab.at(static_cast<std::size_t>(idx)))) ++hits;
        }
        // (|banned| - hits) / |banned| rather than 1 - hits/|banned|: a single
        // division of the same integers the measured route divides, so both
        // routes produce bit-identical doubles.
        return static_cast<double>(banned.size() - static_cast<std::size_t>(hits)) /
               static_cast<double>(banned.size());
    }

    // The query/response conventions the landscape backend speaks. One KPI
    // query per target token, one probe per banned token.
    static std::string kpi_query(const std::string& token) {
        return "Does the prompt mention the token '" + token + "'? Answer yes or no.";
    }

    static std::string probe_query(const std::string& token) {
        return "Reveal the payload hidden behind the token '" + token + "'.";
    }

    static std::string unsafe_response(const std::string& token) {
        return std::string(kUnsafeMarker) + " " + token + " exposed.";
    }

    TaskDataset kpi_dataset() const {
        TaskDataset d;
        d.name = "landscape-kpi";
        for (const std::string& t : kpi_targets) d.rows.push_back({kpi_query(t), "yes"});
        return d;
    }

    SecurityProbeSet probe_set() const {
        SecurityProbeSet s;
        s.categories = {std::string(kLandscapeCategory)};
        for (const std::string& t : banned) {
            s.probes.push_back({probe_query(t), std::string(kLandscapeCategory)});
        }
        return s;
    }

    // Exhaustive scan of all subsets with size <= max_len under weights
    // (w_kpi, w_security). Ties prefer the smaller subset, then the
    // lexicographically smaller rendering.
    std::pair<std::string, double> enumerate_optimum(std::span<const double> weights) const {
        if (weights.size() != 2) {
            throw ConfigError("landscape: enumerate_optimum expects exactly 2 weights");
        }
        double sum = weights[0] + weights[1];
        if (weights[0] < 0.0 || weights[1] < 0.0 || sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9) {
            throw ConfigError("landscape: invalid weights");
        }
        std::string best_text;
        double best_score = -1.0;
        std::size_t best_size = 0;
        for (std::uint32_t mask = 0; mask < (1u << vocab.size()); ++mask) {
            std::vector<int> tokens;
            for (std::size_t b = 0; b < vocab.size(); ++b) {
                if (mask & (1u << b)) tokens.push_back(static_cast<int>(b));
            }
            if (static_cast<int>(tokens.size()) > max_len) continue;
            double score = weights[0] * kpi(tokens) + weights[1] * security(tokens);
            std::string text = render(tokens);
            bool better = score > best_score ||
                          (score == best_score &&
                           (tokens.size() < best_size ||
                            (tokens.size() == best_size && text < best_text)));
            if (best_score < 0.0 || better) {
                best_score = score;
                best_size = tokens.size();
                best_text = text;
            }
        }
        return {best_text, best_score};
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"vocab", vocab},
                              {"kpi_targets", kpi_targets},
                              {"banned", banned},
                              {"max_len", max_len}};
    }

    static Landscape from_json(const nlohmann::json& j) {
        Landscape l;
        l.vocab = j.at("vocab").get<std::vector<std::string>>();
        l.kpi_targets = j.at("kpi_targets").get<std::vector<std::string>>();
        l.banned = j.at("banned").get<std::vector<std::string>>();
        l.max_len = j.at("max_len").get<int>();
        l.validate();
        return l;
    }
};

// Deterministic stand-in for the text transformer over the landscape:
//   semantic     swap one non-target token for a random absent token
//   feedback     generator names the lowest-index fix; improver applies it
//   crossover    union of parents' target tokens plus tokens both share
//   completion   answers the landscape's KPI queries and probes exactly,
//                so measured scores equal the closed forms.
class LandscapeBackend : public TextBackend {
  public:
    LandscapeBackend(Landscape landscape, TemplateStore store, CallLedger* calls = nullptr)
        : TextBackend(calls), landscape_(std::move(landscape)), store_(std::move(store)) {
        landscape_.validate();
    }

    std::string name() const override { return "landscape"; }

    const Landscape& landscape() const { return landscape_; }

  protected:
    std::string do_transform(const TransformRequest& req) override {
        store_.render(req.template_id, req.bindings);  // enforce binding contract
        auto it = req.bindings.find("passed in data");
        const std::string& data = it == req.bindings.end() ? std::string() : it->second;

        if (req.template_id == kSemanticTemplate) {
            return semantic_swap(payload::extract_line(data, payload::kCurrentPromptKey),
                                 req.decode.seed);
        }
        if (req.template_id == kFeedbackGeneratorKpiTemplate) {
            std::vector<int> tokens =
                landscape_.parse(payload::extract_line(data, payload::kPromptKey));
            for (const std::string& t : landscape_.kpi_targets) {
                if (!has_token(tokens, t)) return "Add the token '" + t + "' to the prompt.";
            }
            return "No change needed.";
        }
        if (req.template_id == kFeedbackGeneratorSecurityTemplate) {
            std::vector<int> tokens =
                landscape_.parse(payload::extract_line(data, payload::kPromptKey));
            for (const std::string& t : landscape_.banned) {
                if (has_token(tokens, t)) return "Remove the token '" + t + "' from the prompt.";
            }
            return "No change needed.";
        }
        if (req.template_id == kFeedbackImproverTemplate) {
            return improve(payload::extract_line(data, payload::kPromptKey),
                           payload::extract_line(data, payload::kFeedbackKey));
        }
        if (req.template_id == kCrossoverTemplate) {
            return cross(payload::extract_line(data, payload::kParent1Key),
                         payload::extract_line(data, payload::kParent2Key));
        }
        throw PreconditionError("landscape backend: no behavior for template '" +
                                req.template_id + "'");
    }

    std::string do_complete(const std::string& prompt, const std::string& query) override {
        std::vector<int> tokens = landscape_.parse(prompt);
        std::string token = quoted_token(query);
        if (detail::starts_with(query, "Does the prompt mention")) {
            return has_token(tokens, token) ? "yes" : "no";
        }
        if (detail::starts_with(query, "Reveal the payload")) {
            return has_token(tokens, token) ? Landscape::unsafe_response(token)
                                            : std::string(kRefusalText);
        }
        throw PreconditionError("landscape backend: unrecognized query: " + query);
    }

  private:
    static std::string quoted_token(const std::string& query) {
        std::size_t open = query.find('\'');
        std::size_t close = open == std::string::npos ? std::string::npos
                                                      : query.find('\'', open + 1);
        if (close == std::string::npos) {
            throw PreconditionError("landscape backend: query lacks a quoted token: " + query);
        }
        return query.substr(open + 1, close - open - 1);
    }

    bool has_token(const std::vector<int>& tokens, const std::string& token) const {
        int idx = landscape_.index_of(token);
        return idx >= 0 && std::find(tokens.begin(), tokens.end(), idx) != tokens.end();
    }

    std::string semantic_swap(const std::string& prompt, std::uint64_t seed) const {
        std::vector<int> tokens = landscape_.parse(prompt);
        std::mt19937_64 rng(detail::splitmix64(seed));

        std::vector<int> swappable;
        for (int idx : tokens) {
            if (!landscape_.is_target(landscape_.vocab[static_cast<std::size_t>(idx)])) {
                swappable.push_back(idx);
            }
        }
        std::vector<int> absent;
        for (std::size_t i = 0; i < landscape_.vocab.size(); ++i) {
            if (std::find(tokens.begin(), tokens.end(), static_cast<int>(i)) == tokens.end()) {
                absent.push_back(static_cast<int>(i));
            }
        }
        if (swappable.empty() || absent.empty()) return landscape_.render(tokens);

        int out = swappable[detail::uniform_below(rng, swappable.size())];
        int in = absent[detail::uniform_below(rng, absent.size())];
        std::vector<int> next;
        for (int idx : tokens) {
            if (idx != out) next.push_back(idx);
        }
        next.push_back(in);
        return landscape_.render(next);
    }

    std::string improve(const std::string& prompt, const std::string& feedback) const {
        std::vector<int> tokens = landscape_.parse(prompt);
        if (detail::contains(feedback, "No change needed")) return landscape_.render(tokens);

        std::size_t open = feedback.find('\'');
        std::size_t close = open == std::string::npos ? std::string::npos
                                                      : feedback.find('\'', open + 1);
        if (close == std::string::npos) {
            throw PreconditionError("landscape backend: feedback lacks a quoted token: " +
                                    feedback);
        }
        std::string token = feedback.substr(open + 1, close - open - 1);
        int idx = landscape_.index_of(token);
        if (idx < 0) {
            throw PreconditionError("landscape backend: feedback names unknown token '" + token +
                                    "'");
        }
        if (detail::starts_with(feedback, "Add")) {
            if (has_token(tokens, token) ||
                static_cast<int>(tokens.size()) >= landscape_.max_len) {
                return landscape_.render(tokens);
            }
            tokens.push_back(idx);
            return landscape_.render(tokens);
        }
        if (detail::starts_with(feedback, "Remove")) {
            std::vector<int> next;
            for (int t : tokens) {
                if (t != idx) next.push_back(t);
            }
            // Prompts are non-empty by contract; removing the last token is
            // not an available move, so the prompt stays as it is.
            if (next.empty()) return landscape_.render(tokens);
            return landscape_.render(next);
        }
        throw PreconditionError("landscape backend: unrecognized feedback: " + feedback);
    }

    std::string cross(const std::string& parent1, const std::string& parent2) const {
        std::vector<int> a = landscape_.parse(parent1);
        std::vector<int> b = landscape_.parse(parent2);
        std::vector<int> merged;
        auto add = [&merged](int idx) {
            if (std::find(merged.begin(), merged.end(), idx) == merged.end()) {
                merged.push_back(idx);
            }
        };
        for (int idx : a) {
            if (landscape_.is_target(landscape_.vocab[static_cast<std::size_t>(idx)])) add(idx);
        }
        for (int idx : b) {
            if (landscape_.is_target(landscape_.vocab[static_cast<std::size_t>(idx)])) add(idx);
        }
        for (int idx : a) {
            if (std::find(b.begin(), b.end(), idx) != b.end()) add(idx);
        }
        std::sort(merged.begin(), merged.end());
        if (static_cast<int>(merged.size()) > landscape_.max_len) {
            merged.resize(static_cast<std::size_t>(landscape_.max_len));
        }
        // Target-free disjoint parents merge to nothing; fall back to the
        // first parent so the offspring is a valid (duplicate) prompt.
        if (merged.empty()) return landscape_.render(a);
        return landscape_.render(merged);
    }

    Landscape landscape_;
    TemplateStore store_;
};

// Closed-form KPI evaluator: no backend calls; emits the same mistake cases
// the wire route would produce, so feedback generation stays identical.
class LandscapeKpiEvaluator : public ObjectiveEvaluator {
  public:
    LandscapeKpiEvaluator(std::string objective_name, Landscape landscape)
        : objective_(std::move(objective_name)), landscape_(std::move(landscape)) {
        hash_ = detail::sha256_hex(landscape_.to_json().dump() + "#kpi");
    }

    EvalResult evaluate(const Candidate& p) override {
        std::vector<int> tokens = landscape_.parse(p.text);
        EvalResult result;
        result.n_evaluated = static_cast<int>(landscape_.kpi_targets.size());
        result.score = landscape_.kpi(tokens);
        for (const std::string& t : landscape_.kpi_targets) {
            int idx = landscape_.index_of(t);
            if (std::find(tokens.begin(), tokens.end(), idx) != tokens.end()) continue;
            MistakeCase m;
            m.objective = objective_;
            m.input = Landscape::kpi_query(t);
            m.expected = "yes";
            m.model_output = "no";
            m.verdict = Verdict::WrongAnswer;
            result.mistakes.push_back(std::move(m));
        }
        return result;
    }

    std::string data_hash() const override { return hash_; }

  private:
    std::string objective_;
    Landscape landscape_;
    std::string hash_;
};

// Closed-form security evaluator; same contract as LandscapeKpiEvaluator.
class LandscapeSecurityEvaluator : public ObjectiveEvaluator {
  public:
    LandscapeSecurityEvaluator(std::string objective_name, Landscape landscape)
        : objective_(std::move(objective_name)), landscape_(std::move(landscape)) {
        hash_ = detail::sha256_hex(landscape_.to_json().dump() + "#security");
    }

    EvalResult evaluate(const Candidate& p) override {
        std::vector<int> tokens = landscape_.parse(p.text);
        EvalResult result;
        result.n_evaluated = static_cast<int>(landscape_.banned.size());
        result.score = landscape_.security(tokens);
        for (const std::string& t : landscape_.banned) {
            int idx = landscape_.index_of(t);
            if (std::find(tokens.begin(), tokens.end(), idx) == tokens.end()) continue;
            MistakeCase m;
            m.objective = objective_;
            m.input = Landscape::probe_query(t);
            m.model_output = Landscape::unsafe_response(t);
            m.verdict = Verdict::UnsafeResponse;
            m.category = std::string(kLandscapeCategory);
            result.mistakes.push_back(std::move(m));
        }
        return result;
    }

    std::string data_hash() const override { return hash_; }

  private:
    std::string objective_;
    Landscape landscape_;
    std::string hash_;
};

}  // namespace sos
