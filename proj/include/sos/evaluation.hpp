#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sos/backends.hpp"
#include "sos/core.hpp"
#include "sos/data.hpp"
#include "sos/detail/parallel.hpp"
#include "sos/detail/strings.hpp"
#include "sos/error.hpp"

namespace sos {

// Canonical form used before exact-match comparison: lowercase, trimmed,
// internal whitespace collapsed, terminal punctuation stripped.
inline std::string normalize_output(std::string_view s) {
    return detail::strip_terminal_punctuation(
        detail::collapse_whitespace(detail::to_lower(s)));
}

struct EvalResult {
    double score = 0.0;
    int n_evaluated = 0;
    std::vector<MistakeCase> mistakes;
};

// Exact-match accuracy of the prompted backend over the dataset: one
// completion per row, mismatches recorded as wrong_answer cases. With n rows
// the score is an exact multiple of 1/n.
inline EvalResult kpi_score(const Candidate& p, const TaskDataset& d, TextBackend& backend,
                            const std::string& objective_name, int workers = 1) {
    if (d.rows.empty()) throw PreconditionError("kpi_score: empty dataset");

    std::vector<std::string> outputs = detail::parallel_map<std::string>(
        d.rows.size(), workers,
        [&](std::size_t i) { return backend.complete_task(p.text, d.rows[i].input); });

    EvalResult result;
    result.n_evaluated = static_cast<int>(d.rows.size());
    int correct = 0;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        if (normalize_output(outputs[i]) == normalize_output(d.rows[i].target)) {
            ++correct;
            continue;
        }
        MistakeCase m;
        m.objective = objective_name;
        m.input = d.rows[i].input;
        m.expected = d.rows[i].target;
        m.model_output = outputs[i];
        m.verdict = Verdict::WrongAnswer;
        result.mistakes.push_back(std::move(m));
    }
    result.score = static_cast<double>(correct) / static_cast<double>(d.rows.size());
    return result;
}

// Judged-safe fraction of the prompted backend's responses to the probes;
// unsafe responses are recorded as unsafe_response cases with the probe's
// category.
inline EvalResult security_score(const Candidate& p, const SecurityProbeSet& probes,
                                 TextBackend& backend, SafetyJudge& judge,
                                 const std::string& objective_name, int workers = 1) {
    if (probes.probes.empty()) throw PreconditionError("security_score: empty probe set");

    std::vector<std::string> outputs = detail::parallel_map<std::string>(
        probes.probes.size(), workers,
        [&](std::size_t i) { return backend.complete_task(p.text, probes.probes[i].probe); });
    std::vector<char> safe = detail::parallel_map<char>(
        probes.probes.size(), workers, [&](std::size_t i) {
            return static_cast<char>(judge.judge_safety(probes.probes[i].probe, outputs[i]));
        });

    EvalResult result;
    result.n_evaluated = static_cast<int>(probes.probes.size());
    int safe_count = 0;
    for (std::size_t i = 0; i < probes.probes.size(); ++i) {
        if (safe[i]) {
            ++safe_count;
            continue;
        }
        MistakeCase m;
        m.objective = objective_name;
        m.input = probes.probes[i].probe;
        m.model_output = outputs[i];
        m.verdict = Verdict::UnsafeResponse;
        m.category = probes.probes[i].category;
        result.mistakes.push_back(std::move(m));
    }
    result.score = static_cast<double>(safe_count) / static_cast<double>(probes.probes.size());
    return result;
}

// Weighted sum of the per-objective scores; weights are validated to sum to 1.
inline double holistic_score(const ScoreVector& v, std::span<const ObjectiveSpec> objectives) {
    double total = 0.0;
    for (const ObjectiveSpec& o : objectives) total += o.weight * v.score(o.name);
    return total;
}

struct RankedEntry {
    Candidate candidate;
    ScoreVector scores;
    double holistic = 0.0;
};

namespace detail {

// Ranking order: holistic descending, then the first security-kind score
// descending, then candidate id ascending.
inline bool ranked_before(const RankedEntry& a, const RankedEntry& b,
                          std::span<const ObjectiveSpec> objectives) {
    if (a.holistic != b.holistic) return a.holistic > b.holistic;
    for (const ObjectiveSpec& o : objectives) {
        if (!is_security_kind(o.evaluator)) continue;
        double sa = a.scores.score(o.name);
        double sb = b.scores.score(o.name);
        if (sa != sb) return sa > sb;
        break;
    }
    return a.candidate.id < b.candidate.id;
}

}  // namespace detail

inline std::vector<RankedEntry> rank_top_k(const Pool& pool,
                                           std::span<const ObjectiveSpec> objectives,
                                           std::size_t k) {
    std::vector<RankedEntry> entries;
    entries.reserve(pool.size());
    for (const auto& [id, member] : pool.members) {
        RankedEntry e{member.candidate, member.scores,
                      holistic_score(member.scores, objectives)};
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [&](const RankedEntry& a, const RankedEntry& b) {
        return detail::ranked_before(a, b, objectives);
    });
    if (entries.size() > k) entries.resize(k);
    return entries;
}

// Reranks the already-evaluated pool under substituted weights. Weights must
// be non-negative and sum to 1; scores are reused, never recomputed.
inline std::vector<RankedEntry> rerank_with_weights(const Pool& pool,
                                                    std::span<const ObjectiveSpec> objectives,
                                                    std::span<const double> weights,
                                                    std::size_t k) {
    if (weights.size() != objectives.size()) {
        throw ConfigError("rerank: expected " + std::to_string(objectives.size()) +
                          " weights, got " + std::to_string(weights.size()));
    }
    std::vector<ObjectiveSpec> substituted(objectives.begin(), objectives.end());
    for (std::size_t i = 0; i < substituted.size(); ++i) substituted[i].weight = weights[i];
    validate_objectives(substituted);
    return rank_top_k(pool, substituted, k);
}

// One objective bound to its data and backend route. data_hash identifies
// the evaluation inputs for caching.
class ObjectiveEvaluator {
  public:
    virtual ~ObjectiveEvaluator() = default;
    virtual EvalResult evaluate(const Candidate& p) = 0;
    virtual std::string data_hash() const = 0;
};

class TaskAccuracyEvaluator : public ObjectiveEvaluator {
  public:
    TaskAccuracyEvaluator(std::string objective_name, TaskDataset dataset, TextBackend& backend,
                          int workers = 1)
        : objective_(std::move(objective_name)),
          dataset_(std::move(dataset)),
          backend_(backend),
          workers_(workers),
          hash_(dataset_.content_hash()) {}

    EvalResult evaluate(const Candidate& p) override {
        return kpi_score(p, dataset_, backend_, objective_, workers_);
    }

    std::string data_hash() const override { return hash_; }

  private:
    std::string objective_;
    TaskDataset dataset_;
    TextBackend& backend_;
    int workers_;
    std::string hash_;
};

class SafetyRateEvaluator : public ObjectiveEvaluator {
  public:
    SafetyRateEvaluator(std::string objective_name, SecurityProbeSet probes, TextBackend& backend,
                        SafetyJudge& judge, int workers = 1)
        : objective_(std::move(objective_name)),
          probes_(std::move(probes)),
          backend_(backend),
          judge_(judge),
          workers_(workers),
          hash_(probes_.content_hash()) {}

    EvalResult evaluate(const Candidate& p) override {
        return security_score(p, probes_, backend_, judge_, objective_, workers_);
    }

    std::string data_hash() const override { return hash_; }

  private:
    std::string objective_;
    SecurityProbeSet probes_;
    TextBackend& backend_;
    SafetyJudge& judge_;
    int workers_;
    std::string hash_;
};

using EvaluatorMap = std::map<std::string, std::shared_ptr<ObjectiveEvaluator>>;

// Memoizes evaluations by (candidate id, objective, dataset hash) so a
// candidate is never re-scored on the same data.
class EvalCache {
  public:
    const EvalResult* find(const std::string& candidate_id, const std::string& objective,
                           const std::string& data_hash) const {
        auto it = cache_.find(std::make_tuple(candidate_id, objective, data_hash));
        return it == cache_.end() ? nullptr : &it->second;
    }

    void store(const std::string& candidate_id, const std::string& objective,
               const std::string& data_hash, EvalResult result) {
        cache_[std::make_tuple(candidate_id, objective, data_hash)] = std::move(result);
    }

    std::size_t size() const { return cache_.size(); }

  private:
    std::map<std::tuple<std::string, std::string, std::string>, EvalResult> cache_;
};

}  // namespace sos
