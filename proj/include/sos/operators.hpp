#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sos/backends.hpp"
#include "sos/core.hpp"
#include "sos/detail/rng.hpp"
#include "sos/error.hpp"
#include "sos/templates.hpp"

namespace sos {

// Mistake cases passed to one feedback-generator call are capped here;
// overflow is cut by a seeded subsample, not truncation.
inline constexpr int kMistakeCap = 10;

struct OperatorChild {
    Candidate candidate;
    int calls_used = 1;
};

struct SemanticResult {
    std::vector<OperatorChild> children;
    // Calls burned by attempts dropped as parent duplicates; one entry per
    // dropped attempt so call accounting stays exact.
    std::vector<int> dropped_calls;
    std::vector<std::string> warnings;
};

// n paraphrases of p, each tagged semantic and parented to p. An output that
// collapses to p's own text is regenerated once with a fresh sub-seed, then
// dropped with a warning. Duplicates among siblings survive here; pools
// dedup them on insertion.
inline SemanticResult semantic_mutate(const Candidate& p, int n, TextBackend& backend,
                                      std::uint64_t seed) {
    if (n < 1) throw PreconditionError("semantic_mutate: n must be >= 1");

    SemanticResult result;
    for (int i = 0; i < n; ++i) {
        std::uint64_t child_seed = detail::derive_seed(seed, static_cast<std::uint64_t>(i));
        TransformRequest req = make_transform_request(
            kSemanticTemplate, payload::semantic(p.text), child_seed);
        std::string text = backend.transform(req);
        int calls = 1;
        if (candidate_id(text) == p.id || detail::trim(text).empty()) {
            req.decode.seed = detail::derive_seed(child_seed, std::string_view("regenerate"));
            text = backend.transform(req);
            calls = 2;
        }
        if (candidate_id(text) == p.id || detail::trim(text).empty()) {
            result.dropped_calls.push_back(calls);
            result.warnings.push_back("semantic_mutate: variant " + std::to_string(i) +
                                      " collapsed to the parent text twice; dropped");
            continue;
        }
        result.children.push_back(
            {make_candidate(text, std::span<const Candidate>(&p, 1), OperatorTag::semantic()),
             calls});
    }
    return result;
}

// The candidate's recorded mistakes on the objective, capped at kMistakeCap
// by a seeded subsample that preserves the original case order.
inline std::vector<MistakeCase> collect_mistakes(const PoolMember& member,
                                                 const ObjectiveSpec& objective,
                                                 std::uint64_t seed, int cap = kMistakeCap) {
    if (!member.scores.has(objective.name)) {
        throw StateError("collect_mistakes: candidate " + member.candidate.id +
                         " not evaluated on '" + objective.name + "'");
    }
    const std::vector<MistakeCase>& all = member.scores.mistakes.at(objective.name);
    if (static_cast<int>(all.size()) <= cap) return all;

    std::mt19937_64 rng(
        detail::derive_seed(seed, member.candidate.id + "|" + objective.name));
    std::vector<std::size_t> chosen =
        detail::sample_indices(all.size(), static_cast<std::size_t>(cap), rng);
    std::sort(chosen.begin(), chosen.end());
    std::vector<MistakeCase> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(all[i]);
    return out;
}

// One generator call: the objective's feedback-generator template over the
// prompt and its mistake cases, returning a free-text suggestion block.
inline std::string generate_feedback(const Candidate& p, std::span<const MistakeCase> mistakes,
                                     const ObjectiveSpec& objective, TextBackend& backend,
                                     std::uint64_t seed) {
    if (mistakes.empty()) {
        throw PreconditionError("generate_feedback: no mistake cases for candidate " + p.id);
    }
    TransformRequest req = make_transform_request(
        objective.feedback_generator_template, payload::feedback_generator(p.text, mistakes),
        seed);
    return backend.transform(req);
}

// The raw improver completion for (p, feedback). May be empty or degenerate
// when the backend misbehaves; callers decide whether that is fatal.
inline std::string improver_output(const Candidate& p, const std::string& feedback,
                                   const ObjectiveSpec& objective, TextBackend& backend,
                                   std::uint64_t seed) {
    if (detail::trim(feedback).empty()) {
        throw PreconditionError("apply_feedback: empty feedback");
    }
    TransformRequest req = make_transform_request(
        objective.feedback_improver_template, payload::feedback_improver(p.text, feedback),
        seed);
    return backend.transform(req);
}

// One improver call: applies the feedback to p, yielding a feedback-tagged
// child. An empty improver output is a PreconditionError here; the pool-level
// operator drops such children instead.
inline Candidate apply_feedback(const Candidate& p, const std::string& feedback,
                                const ObjectiveSpec& objective, TextBackend& backend,
                                std::uint64_t seed) {
    std::string text = improver_output(p, feedback, objective, backend, seed);
    return make_candidate(text, std::span<const Candidate>(&p, 1),
                          OperatorTag::feedback(objective.name));
}

struct FeedbackMutateStats {
    int imperfect = 0;
    int flawless = 0;
    int duplicates_dropped = 0;
    int empty_dropped = 0;
    // Parents whose child was dropped (duplicate or empty improver output);
    // each such attempt still used the generator + improver call pair.
    std::vector<std::string> dropped_parent_ids;
};

// One feedback child per imperfect member of C (objective score < 1);
// flawless members contribute nothing. Members are processed in id order, so
// the result is order-deterministic. Children duplicating an existing C id
// or an earlier child are dropped: C' is disjoint from C by id.
inline Pool feedback_mutate(const Pool& pool, const ObjectiveSpec& objective,
                            TextBackend& backend, std::uint64_t seed,
                            FeedbackMutateStats* stats = nullptr) {
    Pool children;
    children.generation_counter = pool.generation_counter + 1;
    FeedbackMutateStats local;
    for (const auto& [id, member] : pool.members) {
        if (member.scores.score(objective.name) >= 1.0) {
            ++local.flawless;
            continue;
        }
        ++local.imperfect;
        std::vector<MistakeCase> mistakes = collect_mistakes(member, objective, seed);
        if (mistakes.empty()) {
            throw StateError("feedback_mutate: candidate " + id +
                             " is imperfect on '" + objective.name +
                             "' but carries no mistake evidence");
        }
        std::uint64_t member_seed = detail::derive_seed(seed, id + "#" + objective.name);
        std::string feedback = generate_feedback(member.candidate, mistakes, objective, backend,
                                                 member_seed);
        std::string text = improver_output(
            member.candidate, feedback, objective, backend,
            detail::derive_seed(member_seed, std::string_view("improve")));
        if (detail::trim(text).empty()) {
            ++local.empty_dropped;
            local.dropped_parent_ids.push_back(id);
            continue;
        }
        Candidate child = make_candidate(text, std::span<const Candidate>(&member.candidate, 1),
                                         OperatorTag::feedback(objective.name));
        if (pool.contains(child.id) || children.contains(child.id)) {
            ++local.duplicates_dropped;
            local.dropped_parent_ids.push_back(id);
            continue;
        }
        children.insert(PoolMember{std::move(child), {}});
    }
    if (stats) *stats = local;
    return children;
}

// The raw crossover completion for a parent pair; may be degenerate when the
// backend misbehaves.
inline std::string crossover_output(const Candidate& p1, const Candidate& p2,
                                    TextBackend& backend, std::uint64_t seed) {
    if (p1.id == p2.id) throw PreconditionError("crossover: parents share one id");
    TransformRequest req = make_transform_request(
        kCrossoverTemplate, payload::crossover(p1.text, p2.text), seed);
    return backend.transform(req);
}

// Crossover of two distinct parents into one offspring. An empty backend
// output is a PreconditionError here; the pool-level operator drops it.
inline Candidate crossover(const Candidate& p1, const Candidate& p2, TextBackend& backend,
                           std::uint64_t seed) {
    std::string text = crossover_output(p1, p2, backend, seed);
    Candidate parents[2] = {p1, p2};
    return make_candidate(text, parents, OperatorTag::crossover());
}

struct CrossoverStats {
    int pairs_attempted = 0;
    int duplicates_dropped = 0;
    int empty_dropped = 0;
    // Pairs whose offspring was dropped (duplicate or empty output); one
    // call each.
    std::vector<std::pair<std::string, std::string>> dropped_pairs;
};

// Pairing policy: per-objective champions are crossed pairwise first (i < j
// in objective order), then seeded random distinct pairs fill up to
// min(|C|, max_crossover_offspring) attempted pairs. Offspring duplicating a
// C member or an earlier offspring are dropped. |C| < 2 or a zero cap yields
// an empty pool.
inline Pool crossover_phase(const Pool& pool, TextBackend& backend, const StrategyConfig& cfg,
                            std::uint64_t seed, CrossoverStats* stats = nullptr) {
    Pool offspring;
    offspring.generation_counter = pool.generation_counter + 1;
    CrossoverStats local;
    if (pool.size() < 2 || cfg.max_crossover_offspring == 0) {
        if (stats) *stats = local;
        return offspring;
    }

    std::vector<std::string> ids = pool.ids();
    std::size_t target = std::min<std::size_t>(pool.size(),
                                               static_cast<std::size_t>(cfg.max_crossover_offspring));

    // Champions: per-objective argmax, ties to the smallest id (ids iterate
    // ascending and the comparison is strict).
    std::vector<std::string> champions;
    for (const ObjectiveSpec& o : cfg.objectives) {
        const std::string* best_id = nullptr;
        double best = -1.0;
        for (const std::string& id : ids) {
            double s = pool.at(id).scores.score(o.name);
            if (s > best) {
                best = s;
                best_id = &id;
            }
        }
        champions.push_back(*best_id);
    }

    std::vector<std::pair<std::string, std::string>> pairs;
    auto add_pair = [&pairs](const std::string& a, const std::string& b) {
        if (a == b) return;
        std::pair<std::string, std::string> key = a < b ? std::make_pair(a, b)
                                                        : std::make_pair(b, a);
        if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) pairs.push_back(key);
    };
    for (std::size_t i = 0; i < champions.size(); ++i) {
        for (std::size_t j = i + 1; j < champions.size(); ++j) {
            add_pair(champions[i], champions[j]);
        }
    }

    // Random fill from the remaining distinct pairs.
    std::vector<std::pair<std::string, std::string>> rest;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            std::pair<std::string, std::string> key(ids[i], ids[j]);
            if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) rest.push_back(key);
        }
    }
    std::mt19937_64 rng(detail::derive_seed(seed, std::string_view("crossover_fill")));
    detail::shuffle(rest, rng);
    for (const auto& pair : rest) {
        if (pairs.size() >= target) break;
        pairs.push_back(pair);
    }
    if (pairs.size() > target) pairs.resize(target);

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ++local.pairs_attempted;
        const Candidate& p1 = pool.at(pairs[i].first).candidate;
        const Candidate& p2 = pool.at(pairs[i].second).candidate;
        std::string text = crossover_output(p1, p2, backend,
                                            detail::derive_seed(seed, static_cast<std::uint64_t>(i)));
        if (detail::trim(text).empty()) {
            ++local.empty_dropped;
            local.dropped_pairs.push_back(pairs[i]);
            continue;
        }
        Candidate parents[2] = {p1, p2};
        Candidate child = make_candidate(text, parents, OperatorTag::crossover());
        if (pool.contains(child.id) || offspring.contains(child.id)) {
            ++local.duplicates_dropped;
            local.dropped_pairs.push_back(pairs[i]);
            continue;
        }
        offspring.insert(PoolMember{std::move(child), {}});
    }
    if (stats) *stats = local;
    return offspring;
}

}  // namespace sos
