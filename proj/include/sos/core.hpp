#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sos/detail/hash.hpp"
#include "sos/detail/strings.hpp"
#include "sos/error.hpp"

namespace sos {

enum class OperatorKind { Seed, Semantic, Feedback, Crossover };

// Provenance of a candidate. Feedback tags carry the objective they targeted,
// so the string form is one of: seed, semantic, feedback:<objective>, crossover.
struct OperatorTag {
    OperatorKind kind = OperatorKind::Seed;
    std::string objective;  // set iff kind == Feedback

    static OperatorTag seed() { return {OperatorKind::Seed, {}}; }
    static OperatorTag semantic() { return {OperatorKind::Semantic, {}}; }
    static OperatorTag feedback(std::string objective) {
        return {OperatorKind::Feedback, std::move(objective)};
    }
    static OperatorTag crossover() { return {OperatorKind::Crossover, {}}; }

    std::string str() const {
        switch (kind) {
            case OperatorKind::Seed: return "seed";
            case OperatorKind::Semantic: return "semantic";
            case OperatorKind::Feedback: return "feedback:" + objective;
            case OperatorKind::Crossover: return "crossover";
        }
        throw StateError("operator tag: unknown kind");
    }

    static OperatorTag parse(std::string_view s) {
        if (s == "seed") return seed();
        if (s == "semantic") return semantic();
        if (s == "crossover") return crossover();
        if (detail::starts_with(s, "feedback:") && s.size() > 9) {
            return feedback(std::string(s.substr(9)));
        }
        throw ParseError("operator tag: unrecognized value '" + std::string(s) + "'");
    }

    bool operator==(const OperatorTag&) const = default;
};

// One prompt string plus its lineage. `id` is the SHA-256 of the trimmed
// text, so identical text always maps to an identical id.
struct Candidate {
    std::string id;
    std::string text;
    std::vector<std::string> parent_ids;
    OperatorTag tag;
    int generation = 0;
};

inline std::string candidate_id(std::string_view text) {
    return detail::sha256_hex(detail::trim(text));
}

// Parent arity implied by each tag: seed 0, semantic/feedback 1, crossover 2.
inline std::size_t expected_parent_count(const OperatorTag& tag) {
    switch (tag.kind) {
        case OperatorKind::Seed: return 0;
        case OperatorKind::Semantic: return 1;
        case OperatorKind::Feedback: return 1;
        case OperatorKind::Crossover: return 2;
    }
    throw StateError("operator tag: unknown kind");
}

inline Candidate make_candidate(std::string_view text, std::span<const Candidate> parents,
                                OperatorTag tag) {
    std::string trimmed = detail::trim(text);
    if (trimmed.empty()) {
        throw PreconditionError("make_candidate: text is empty after trimming");
    }
    if (parents.size() != expected_parent_count(tag)) {
        throw PreconditionError("make_candidate: tag '" + tag.str() + "' requires " +
                                std::to_string(expected_parent_count(tag)) + " parents, got " +
                                std::to_string(parents.size()));
    }
    Candidate c;
    c.text = std::move(trimmed);
    c.id = detail::sha256_hex(c.text);
    c.tag = std::move(tag);
    int max_gen = -1;
    for (const Candidate& p : parents) {
        c.parent_ids.push_back(p.id);
        max_gen = std::max(max_gen, p.generation);
    }
    c.generation = max_gen + 1;
    return c;
}

enum class EvaluatorKind { TaskAccuracy, SafetyRate, LandscapeKpi, LandscapeSecurity };

inline const char* to_string(EvaluatorKind k) {
    switch (k) {
        case EvaluatorKind::TaskAccuracy: return "task_accuracy";
        case EvaluatorKind::SafetyRate: return "safety_rate";
        case EvaluatorKind::LandscapeKpi: return "landscape_kpi";
        case EvaluatorKind::LandscapeSecurity: return "landscape_security";
    }
    throw StateError("evaluator kind: unknown value");
}

inline EvaluatorKind evaluator_kind_from(std::string_view s) {
    if (s == "task_accuracy") return EvaluatorKind::TaskAccuracy;
    if (s == "safety_rate") return EvaluatorKind::SafetyRate;
    if (s == "landscape_kpi") return EvaluatorKind::LandscapeKpi;
    if (s == "landscape_security") return EvaluatorKind::LandscapeSecurity;
    throw ConfigError("evaluator: unrecognized kind '" + std::string(s) + "'");
}

// Security-kind objectives measure judged-safe fractions; they break ranking
// ties and drive the unsafe_response verdict.
inline bool is_security_kind(EvaluatorKind k) {
    return k == EvaluatorKind::SafetyRate || k == EvaluatorKind::LandscapeSecurity;
}

struct ObjectiveSpec {
    std::string name;
    double weight = 0.0;
    EvaluatorKind evaluator = EvaluatorKind::TaskAccuracy;
    std::string feedback_generator_template;
    std::string feedback_improver_template;
};

// Weights over a configured objective set must be non-negative and sum to 1
// within 1e-9; names must be unique and non-empty.
inline void validate_objectives(std::span<const ObjectiveSpec> objectives) {
    if (objectives.empty()) throw ConfigError("objectives: at least one objective required");
    double total = 0.0;
    for (const ObjectiveSpec& o : objectives) {
        if (o.name.empty()) throw ConfigError("objectives: empty objective name");
        if (o.weight < 0.0) {
            throw ConfigError("objectives: negative weight for '" + o.name + "'");
        }
        total += o.weight;
        for (const ObjectiveSpec& other : objectives) {
            if (&o != &other && o.name == other.name) {
                throw ConfigError("objectives: duplicate name '" + o.name + "'");
            }
        }
    }
    if (total < 1.0 - 1e-9 || total > 1.0 + 1e-9) {
        throw ConfigError("objectives: weights sum to " + std::to_string(total) + ", expected 1");
    }
}

enum class Verdict { WrongAnswer, UnsafeResponse };

inline const char* to_string(Verdict v) {
    return v == Verdict::WrongAnswer ? "wrong_answer" : "unsafe_response";
}

inline Verdict verdict_from(std::string_view s) {
    if (s == "wrong_answer") return Verdict::WrongAnswer;
    if (s == "unsafe_response") return Verdict::UnsafeResponse;
    throw ParseError("verdict: unrecognized value '" + std::string(s) + "'");
}

// One piece of evaluation evidence: a query the candidate got wrong or
// answered unsafely. `expected` is null for security probes; `category` is
// null outside security probe sets.
struct MistakeCase {
    std::string objective;
    std::string input;
    std::optional<std::string> expected;
    std::string model_output;
    Verdict verdict = Verdict::WrongAnswer;
    std::optional<std::string> category;

    // Content-derived reference; two cases with identical content share one.
    std::string ref() const {
        auto opt_field = [](const std::optional<std::string>& v) {
            return v ? "1" + *v : std::string("0");
        };
        std::string material = objective;
        material += '\x1f';
        material += input;
        material += '\x1f';
        material += opt_field(expected);
        material += '\x1f';
        material += model_output;
        material += '\x1f';
        material += to_string(verdict);
        material += '\x1f';
        material += opt_field(category);
        return detail::sha256_hex(material);
    }

    bool operator==(const MistakeCase&) const = default;
};

// Per-objective scores in [0,1] plus the evidence backing them.
struct ScoreVector {
    std::map<std::string, double> scores;
    std::map<std::string, int> n_evaluated;
    std::map<std::string, std::vector<MistakeCase>> mistakes;

    bool has(const std::string& objective) const { return scores.count(objective) != 0; }

    double score(const std::string& objective) const {
        auto it = scores.find(objective);
        if (it == scores.end()) {
            throw StateError("score vector: objective '" + objective + "' not evaluated");
        }
        return it->second;
    }

    void set(const std::string& objective, double score, int n, std::vector<MistakeCase> cases) {
        if (score < 0.0 || score > 1.0) {
            throw PreconditionError("score vector: score outside [0,1] for '" + objective + "'");
        }
        scores[objective] = score;
        n_evaluated[objective] = n;
        mistakes[objective] = std::move(cases);
    }

    std::vector<std::string> mistake_refs(const std::string& objective) const {
        std::vector<std::string> out;
        auto it = mistakes.find(objective);
        if (it == mistakes.end()) return out;
        out.reserve(it->second.size());
        for (const MistakeCase& m : it->second) out.push_back(m.ref());
        return out;
    }

    std::size_t objectives_evaluated() const { return scores.size(); }
};

struct PoolMember {
    Candidate candidate;
    ScoreVector scores;
};

// The living candidate set C. Members are keyed by candidate id (exact-text
// dedup) and iterate in id order, which keeps every consumer deterministic.
struct Pool {
    std::map<std::string, PoolMember> members;
    int generation_counter = 0;

    bool empty() const { return members.empty(); }
    std::size_t size() const { return members.size(); }
    bool contains(const std::string& id) const { return members.count(id) != 0; }

    const PoolMember& at(const std::string& id) const {
        auto it = members.find(id);
        if (it == members.end()) throw StateError("pool: unknown candidate id " + id);
        return it->second;
    }

    // Dedup rule: when the id is already present, the entry evaluated on more
    // objectives wins; an equally-evaluated incumbent stays. Returns true when
    // the pool content changed.
    bool insert(PoolMember member) {
        auto it = members.find(member.candidate.id);
        if (it == members.end()) {
            members.emplace(member.candidate.id, std::move(member));
            return true;
        }
        if (member.scores.objectives_evaluated() > it->second.scores.objectives_evaluated()) {
            it->second = std::move(member);
            return true;
        }
        return false;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(members.size());
        for (const auto& [id, member] : members) out.push_back(id);
        return out;
    }
};

inline Pool pool_union(const Pool& a, const Pool& b) {
    Pool out = a;
    for (const auto& [id, member] : b.members) out.insert(member);
    out.generation_counter = std::max(a.generation_counter, b.generation_counter);
    return out;
}

enum class Strategy { Exhaustive, Sequential, Parallel };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::Exhaustive: return "exhaustive";
        case Strategy::Sequential: return "sequential";
        case Strategy::Parallel: return "parallel";
    }
    throw StateError("strategy: unknown value");
}

inline Strategy strategy_from(std::string_view s) {
    if (s == "exhaustive") return Strategy::Exhaustive;
    if (s == "sequential") return Strategy::Sequential;
    if (s == "parallel") return Strategy::Parallel;
    throw ConfigError("strategy: unrecognized value '" + std::string(s) + "'");
}

struct StrategyConfig {
    std::vector<ObjectiveSpec> objectives;
    double delta = 1e-5;
    double delta_f = 0.01;
    int n_init = 50;
    int top_k = 5;
    std::uint64_t rng_seed = 0;
    int max_phase_iters = 10;
    int max_crossover_offspring = 10;
    Strategy strategy = Strategy::Exhaustive;

    void validate() const {
        validate_objectives(objectives);
        if (!(delta > 0.0)) throw ConfigError("config: delta must be > 0");
        if (delta_f < 0.0) throw ConfigError("config: delta_f must be >= 0");
        if (n_init < 1) throw ConfigError("config: n_init must be >= 1");
        if (top_k < 1) throw ConfigError("config: top_k must be >= 1");
        if (max_phase_iters < 1) throw ConfigError("config: max_phase_iters must be >= 1");
        if (max_crossover_offspring < 0) {
            throw ConfigError("config: max_crossover_offspring must be >= 0");
        }
    }
};

}  // namespace sos
