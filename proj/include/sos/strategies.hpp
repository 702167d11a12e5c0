#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sos/backends.hpp"
#include "sos/core.hpp"
#include "sos/error.hpp"
#include "sos/evaluation.hpp"
#include "sos/ledger.hpp"
#include "sos/operators.hpp"
#include "sos/selection.hpp"

namespace sos {

enum class StopCause { Threshold, IterationCap, EmptyMutation };

inline const char* to_string(StopCause c) {
    switch (c) {
        case StopCause::Threshold: return "threshold";
        case StopCause::IterationCap: return "iteration_cap";
        case StopCause::EmptyMutation: return "empty_mutation";
    }
    throw StateError("stop cause: unknown value");
}

// One objective phase's trajectory: gains[i] is the pg of iteration i.
struct PhaseReport {
    std::string objective;
    int iterations = 0;
    std::vector<double> gains;
    StopCause stopped_by = StopCause::Threshold;
};

struct RunResult {
    Pool final_pool;
    std::vector<PhaseReport> phase_reports;
    std::string ledger_path;
    std::vector<RankedEntry> top_k;
};

// Alg. 1's pg: best holistic in C' minus best holistic in C. An empty C'
// returns the -1 sentinel, which forces any threshold check to stop.
inline double performance_gain(const Pool& next, const Pool& current,
                               std::span<const ObjectiveSpec> objectives) {
    if (current.empty()) throw StateError("performance_gain: reference pool is empty");
    if (next.empty()) return -1.0;

    auto best = [&objectives](const Pool& pool) {
        double best_score = 0.0;
        bool first = true;
        for (const auto& [id, member] : pool.members) {
            double h = holistic_score(member.scores, objectives);
            if (first || h > best_score) best_score = h;
            first = false;
        }
        return best_score;
    };
    return best(next) - best(current);
}

// Drives one configured strategy over a backend and a set of per-objective
// evaluators. The engine is single-threaded and deterministic: pools iterate
// in id order, every random draw comes from a seed derived from
// (cfg.rng_seed, structural position), and ledger events are emitted in a
// fixed order.
class Engine {
  public:
    Engine(StrategyConfig cfg, TextBackend& backend, EvaluatorMap evaluators,
           LedgerSink* ledger = nullptr)
        : cfg_(std::move(cfg)), backend_(backend), evaluators_(std::move(evaluators)),
          ledger_(ledger) {
        cfg_.validate();
        for (const ObjectiveSpec& o : cfg_.objectives) {
            if (!evaluators_.count(o.name)) {
                throw ConfigError("engine: no evaluator bound for objective '" + o.name + "'");
            }
        }
    }

    const StrategyConfig& config() const { return cfg_; }

    // Every candidate fully evaluated during the run, keyed by id. Feeds
    // strategy comparison statistics.
    const std::map<std::string, PoolMember>& evaluated_census() const { return census_; }

    RunResult run(const std::string& initial_prompt) {
        Candidate p0 = make_candidate(initial_prompt, {}, OperatorTag::seed());
        emit("init", nlohmann::json{{"config", config_json()},
                                    {"strategy", to_string(cfg_.strategy)},
                                    {"seed_candidate",
                                     {{"id", p0.id}, {"text", p0.text}, {"tag", p0.tag.str()}}}});

        RunResult result;
        Pool pool = initialize(p0);
        switch (cfg_.strategy) {
            case Strategy::Exhaustive:
                result = run_exhaustive(std::move(pool));
                break;
            case Strategy::Sequential:
                result = run_sequential(std::move(pool));
                break;
            case Strategy::Parallel:
                result = run_parallel(std::move(pool));
                break;
        }
        if (ledger_) result.ledger_path = ledger_->path();
        return result;
    }

    // Alg. 1 lines 1-2: the seed plus n_init-1 semantic variants, all
    // evaluated on all objectives, then locally-optimal selection. Aborts
    // when more than half of the initial evaluations fail.
    Pool initialize(const Candidate& p0) {
        Pool pool;
        pool.generation_counter = 0;
        pool.insert(PoolMember{p0, {}});

        if (cfg_.n_init > 1) {
            SemanticResult variants =
                semantic_mutate(p0, cfg_.n_init - 1, backend_,
                                detail::derive_seed(cfg_.rng_seed, std::string_view("init")));
            for (const OperatorChild& child : variants.children) {
                emit_mutate(child.candidate, "semantic", child.calls_used, "init");
                pool.insert(PoolMember{child.candidate, {}});
            }
            for (int calls : variants.dropped_calls) emit_dropped("semantic", calls, "init");
        }

        std::size_t requested = pool.size();
        std::size_t failed = evaluate_pool(pool, /*drop_failures=*/true);
        if (failed * 2 > requested) {
            throw BackendError("initialize: " + std::to_string(failed) + " of " +
                                   std::to_string(requested) + " initial evaluations failed",
                               /*retryable=*/false);
        }
        Pool selected = local_optimal_selection(pool, cfg_.objectives, cfg_.delta);
        emit_select("init", pool, selected);
        return selected;
    }

  private:
    // One exhaustive feedback loop on `objective`. `selection_objectives`
    // and `gain_objectives` differ from the full set only inside
    // run_parallel's single-objective populations.
    PhaseReport run_phase(Pool& pool, const ObjectiveSpec& objective,
                          std::span<const ObjectiveSpec> selection_objectives,
                          std::span<const ObjectiveSpec> gain_objectives,
                          const std::string& phase_label, std::uint64_t phase_seed) {
        PhaseReport report;
        report.objective = objective.name;
        report.stopped_by = StopCause::IterationCap;
        for (int iter = 0; iter < cfg_.max_phase_iters; ++iter) {
            std::uint64_t iter_seed =
                detail::derive_seed(phase_seed, static_cast<std::uint64_t>(iter));
            FeedbackMutateStats stats;
            Pool children = feedback_mutate(pool, objective, backend_, iter_seed, &stats);
            for (const auto& [id, member] : children.members) {
                emit_mutate(member.candidate, "feedback", 2, phase_label);
            }
            for (const std::string& parent : stats.dropped_parent_ids) {
                emit_dropped("feedback", 2, phase_label, parent);
            }
            evaluate_pool(children, /*drop_failures=*/false);

            double pg = performance_gain(children, pool, gain_objectives);
            report.gains.push_back(pg);
            ++report.iterations;
            emit("gain", nlohmann::json{{"phase", phase_label},
                                        {"objective", objective.name},
                                        {"iteration", iter},
                                        {"pg", pg}});

            // Alg. 1 ordering: union and selection run every iteration,
            // including the one whose pg stops the loop.
            Pool merged = pool_union(pool, children);
            Pool selected =
                local_optimal_selection(merged, selection_objectives, cfg_.delta);
            emit_select(phase_label, merged, selected);
            pool = std::move(selected);

            if (children.empty()) {
                report.stopped_by = StopCause::EmptyMutation;
                break;
            }
            if (!(pg > cfg_.delta_f)) {
                report.stopped_by = StopCause::Threshold;
                break;
            }
        }
        return report;
    }

    // Final crossover round shared by all strategies: offspring, union,
    // selection, ranking.
    RunResult finish(Pool pool, std::vector<PhaseReport> reports) {
        CrossoverStats stats;
        Pool offspring = crossover_phase(
            pool, backend_, cfg_,
            detail::derive_seed(cfg_.rng_seed, std::string_view("crossover")), &stats);
        for (const auto& [id, member] : offspring.members) {
            emit_mutate(member.candidate, "crossover", 1, "crossover");
        }
        for (const auto& pair : stats.dropped_pairs) {
            emit_dropped("crossover", 1, "crossover", pair.first + "+" + pair.second);
        }
        emit("crossover", nlohmann::json{{"offspring", offspring.ids()},
                                         {"pairs_attempted", stats.pairs_attempted},
                                         {"duplicates_dropped", stats.duplicates_dropped}});
        evaluate_pool(offspring, /*drop_failures=*/false);

        Pool merged = pool_union(pool, offspring);
        Pool selected = local_optimal_selection(merged, cfg_.objectives, cfg_.delta);
        emit_select("crossover", merged, selected);

        RunResult result;
        result.final_pool = std::move(selected);
        result.phase_reports = std::move(reports);
        result.top_k = rank_top_k(result.final_pool, cfg_.objectives,
                                  static_cast<std::size_t>(cfg_.top_k));
        emit_rank(result.top_k);
        return result;
    }

    RunResult run_exhaustive(Pool pool) {
        std::vector<PhaseReport> reports;
        for (std::size_t i = 0; i < cfg_.objectives.size(); ++i) {
            const ObjectiveSpec& o = cfg_.objectives[i];
            reports.push_back(run_phase(
                pool, o, cfg_.objectives, cfg_.objectives, "exhaustive:" + o.name,
                detail::derive_seed(cfg_.rng_seed, "phase:" + o.name)));
        }
        return finish(std::move(pool), std::move(reports));
    }

    // One feedback round per objective per cycle; the run stops when a full
    // cycle's summed pg drops to delta_f or below, or at the cycle cap. Each
    // objective's PhaseReport aggregates its per-cycle gains.
    RunResult run_sequential(Pool pool) {
        std::map<std::string, PhaseReport> by_objective;
        for (const ObjectiveSpec& o : cfg_.objectives) {
            by_objective[o.name].objective = o.name;
            by_objective[o.name].stopped_by = StopCause::IterationCap;
        }

        for (int cycle = 0; cycle < cfg_.max_phase_iters; ++cycle) {
            double cycle_total = 0.0;
            bool all_empty = true;
            for (const ObjectiveSpec& o : cfg_.objectives) {
                std::uint64_t round_seed = detail::derive_seed(
                    cfg_.rng_seed, "cycle:" + std::to_string(cycle) + ":" + o.name);
                std::string phase_label = "sequential:" + o.name;
                FeedbackMutateStats stats;
                Pool children = feedback_mutate(pool, o, backend_, round_seed, &stats);
                for (const auto& [id, member] : children.members) {
                    emit_mutate(member.candidate, "feedback", 2, phase_label);
                }
                for (const std::string& parent : stats.dropped_parent_ids) {
                    emit_dropped("feedback", 2, phase_label, parent);
                }
                evaluate_pool(children, /*drop_failures=*/false);

                double pg = performance_gain(children, pool, cfg_.objectives);
                cycle_total += pg;
                if (!children.empty()) all_empty = false;

                PhaseReport& report = by_objective[o.name];
                report.gains.push_back(pg);
                ++report.iterations;
                emit("gain", nlohmann::json{{"phase", phase_label},
                                            {"objective", o.name},
                                            {"iteration", cycle},
                                            {"pg", pg}});

                Pool merged = pool_union(pool, children);
                Pool selected = local_optimal_selection(merged, cfg_.objectives, cfg_.delta);
                emit_select(phase_label, merged, selected);
                pool = std::move(selected);
            }
            if (!(cycle_total > cfg_.delta_f)) {
                StopCause cause = all_empty ? StopCause::EmptyMutation : StopCause::Threshold;
                for (auto& [name, report] : by_objective) report.stopped_by = cause;
                break;
            }
        }

        std::vector<PhaseReport> reports;
        for (const ObjectiveSpec& o : cfg_.objectives) {
            reports.push_back(by_objective[o.name]);
        }
        return finish(std::move(pool), std::move(reports));
    }

    // Independent single-objective exhaustive loops from copies of the
    // initial pool, run in objective order; afterwards the per-objective
    // champions are cross-mutated pairwise, everything is unioned, selected
    // under the full objective set, and ranked.
    RunResult run_parallel(Pool initial) {
        std::vector<PhaseReport> reports;
        std::vector<Pool> populations;
        for (const ObjectiveSpec& o : cfg_.objectives) {
            ObjectiveSpec one_hot = o;
            one_hot.weight = 1.0;
            std::span<const ObjectiveSpec> one(&one_hot, 1);
            Pool population = initial;
            reports.push_back(run_phase(population, o, one, one, "parallel:" + o.name,
                                        detail::derive_seed(cfg_.rng_seed,
                                                            "parallel:" + o.name)));
            populations.push_back(std::move(population));
        }

        Pool merged = initial;
        for (const Pool& population : populations) merged = pool_union(merged, population);

        // Champion of each population on its own objective; distinct
        // champions cross pairwise.
        std::vector<std::string> champions;
        for (std::size_t i = 0; i < cfg_.objectives.size(); ++i) {
            const Pool& population = populations[i];
            const std::string* best_id = nullptr;
            double best = -1.0;
            for (const auto& [id, member] : population.members) {
                double s = member.scores.score(cfg_.objectives[i].name);
                if (s > best) {
                    best = s;
                    best_id = &id;
                }
            }
            if (best_id) champions.push_back(*best_id);
        }
        Pool offspring;
        offspring.generation_counter = merged.generation_counter + 1;
        CrossoverStats stats;
        std::size_t pair_index = 0;
        for (std::size_t i = 0; i < champions.size(); ++i) {
            for (std::size_t j = i + 1; j < champions.size(); ++j) {
                if (champions[i] == champions[j]) continue;
                ++stats.pairs_attempted;
                const Candidate& p1 = merged.at(champions[i]).candidate;
                const Candidate& p2 = merged.at(champions[j]).candidate;
                std::string text = crossover_output(
                    p1, p2, backend_,
                    detail::derive_seed(cfg_.rng_seed, "parallel_cross:" +
                                                           std::to_string(pair_index++)));
                if (detail::trim(text).empty()) {
                    ++stats.empty_dropped;
                    stats.dropped_pairs.emplace_back(champions[i], champions[j]);
                    continue;
                }
                Candidate parents[2] = {p1, p2};
                Candidate child = make_candidate(text, parents, OperatorTag::crossover());
                if (merged.contains(child.id) || offspring.contains(child.id)) {
                    ++stats.duplicates_dropped;
                    stats.dropped_pairs.emplace_back(champions[i], champions[j]);
                    continue;
                }
                offspring.insert(PoolMember{std::move(child), {}});
            }
        }
        for (const auto& [id, member] : offspring.members) {
            emit_mutate(member.candidate, "crossover", 1, "parallel:merge");
        }
        for (const auto& pair : stats.dropped_pairs) {
            emit_dropped("crossover", 1, "parallel:merge", pair.first + "+" + pair.second);
        }
        emit("crossover", nlohmann::json{{"offspring", offspring.ids()},
                                         {"pairs_attempted", stats.pairs_attempted},
                                         {"duplicates_dropped", stats.duplicates_dropped}});
        evaluate_pool(offspring, /*drop_failures=*/false);

        Pool unioned = pool_union(merged, offspring);
        Pool selected = local_optimal_selection(unioned, cfg_.objectives, cfg_.delta);
        emit_select("parallel:merge", unioned, selected);

        RunResult result;
        result.final_pool = std::move(selected);
        result.phase_reports = std::move(reports);
        result.top_k = rank_top_k(result.final_pool, cfg_.objectives,
                                  static_cast<std::size_t>(cfg_.top_k));
        emit_rank(result.top_k);
        return result;
    }

    // Fills every missing (member, objective) score, via the cache when the
    // same candidate was scored on the same data earlier in the run. Returns
    // the number of members dropped; members are only dropped when
    // drop_failures is set and the backend failed for them after retries.
    std::size_t evaluate_pool(Pool& pool, bool drop_failures) {
        std::vector<std::string> failed;
        for (auto& [id, member] : pool.members) {
            try {
                for (const ObjectiveSpec& o : cfg_.objectives) {
                    if (member.scores.has(o.name)) continue;
                    ObjectiveEvaluator& evaluator = *evaluators_.at(o.name);
                    const std::string data_hash = evaluator.data_hash();
                    const EvalResult* cached = cache_.find(id, o.name, data_hash);
                    EvalResult result;
                    if (cached) {
                        result = *cached;
                    } else {
                        result = evaluator.evaluate(member.candidate);
                        cache_.store(id, o.name, data_hash, result);
                        emit("evaluate",
                             nlohmann::json{{"id", id},
                                            {"objective", o.name},
                                            {"score", result.score},
                                            {"n", result.n_evaluated},
                                            {"mistake_count",
                                             static_cast<int>(result.mistakes.size())}});
                    }
                    member.scores.set(o.name, result.score, result.n_evaluated,
                                      std::move(result.mistakes));
                }
                census_[id] = member;
            } catch (const BackendError&) {
                if (!drop_failures) throw;
                failed.push_back(id);
            }
        }
        for (const std::string& id : failed) pool.members.erase(id);
        return failed.size();
    }

    nlohmann::json config_json() const {
        nlohmann::json objectives = nlohmann::json::array();
        for (const ObjectiveSpec& o : cfg_.objectives) {
            objectives.push_back({{"name", o.name},
                                  {"weight", o.weight},
                                  {"evaluator", to_string(o.evaluator)},
                                  {"feedback_generator_template", o.feedback_generator_template},
                                  {"feedback_improver_template", o.feedback_improver_template}});
        }
        return nlohmann::json{{"objectives", objectives},
                              {"delta", cfg_.delta},
                              {"delta_f", cfg_.delta_f},
                              {"n_init", cfg_.n_init},
                              {"top_k", cfg_.top_k},
                              {"rng_seed", cfg_.rng_seed},
                              {"max_phase_iters", cfg_.max_phase_iters},
                              {"max_crossover_offspring", cfg_.max_crossover_offspring},
                              {"strategy", to_string(cfg_.strategy)}};
    }

    void emit(const std::string& event, nlohmann::json payload) {
        if (ledger_) ledger_->append(event, std::move(payload));
    }

    void emit_mutate(const Candidate& c, const std::string& op, int calls_used,
                     const std::string& phase) {
        emit("mutate", nlohmann::json{{"id", c.id},
                                      {"text", c.text},
                                      {"parent_ids", c.parent_ids},
                                      {"tag", c.tag.str()},
                                      {"generation", c.generation},
                                      {"operator", op},
                                      {"calls_used", calls_used},
                                      {"phase", phase}});
    }

    // A mutation attempt that produced no surviving candidate; recorded so
    // ledger call totals stay exact.
    void emit_dropped(const std::string& op, int calls_used, const std::string& phase,
                      const std::string& parent = "") {
        nlohmann::json payload{{"dropped", true},
                               {"operator", op},
                               {"calls_used", calls_used},
                               {"phase", phase}};
        if (!parent.empty()) payload["parent"] = parent;
        emit("mutate", std::move(payload));
    }

    void emit_select(const std::string& phase, const Pool& before, const Pool& after) {
        emit("select", nlohmann::json{{"phase", phase},
                                      {"before", before.size()},
                                      {"after", after.size()},
                                      {"retained", after.ids()}});
    }

    void emit_rank(const std::vector<RankedEntry>& ranked) {
        nlohmann::json entries = nlohmann::json::array();
        for (const RankedEntry& e : ranked) {
            nlohmann::json scores = nlohmann::json::object();
            for (const auto& [name, value] : e.scores.scores) scores[name] = value;
            entries.push_back(
                {{"id", e.candidate.id}, {"scores", scores}, {"holistic", e.holistic}});
        }
        nlohmann::json weights = nlohmann::json::array();
        for (const ObjectiveSpec& o : cfg_.objectives) weights.push_back(o.weight);
        emit("rank", nlohmann::json{{"weights", weights},
                                    {"k", cfg_.top_k},
                                    {"entries", entries}});
    }

    StrategyConfig cfg_;
    TextBackend& backend_;
    EvaluatorMap evaluators_;
    LedgerSink* ledger_;
    EvalCache cache_;
    std::map<std::string, PoolMember> census_;
};

struct CompareCell {
    Strategy strategy;
    double w1 = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    std::size_t count = 0;
};

// Mean and population variance of holistic scores over a candidate census.
inline std::pair<double, double> census_stats(const std::map<std::string, PoolMember>& census,
                                              std::span<const ObjectiveSpec> objectives) {
    if (census.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (const auto& [id, member] : census) {
        sum += holistic_score(member.scores, objectives);
    }
    double mean = sum / static_cast<double>(census.size());
    double var = 0.0;
    for (const auto& [id, member] : census) {
        double d = holistic_score(member.scores, objectives) - mean;
        var += d * d;
    }
    var /= static_cast<double>(census.size());
    return {mean, var};
}

// Runs every strategy at every grid weight and reports holistic mean and
// variance over all candidates evaluated during each run. Requires exactly
// two objectives: w1 goes to the first, 1-w1 to the second. `run` executes
// one engine run for the given config and returns its evaluated census.
template <typename RunFn>
std::vector<CompareCell> compare_strategies(const StrategyConfig& base,
                                            std::span<const double> weight_grid, RunFn&& run) {
    if (base.objectives.size() != 2) {
        throw ConfigError("compare: exactly two objectives required");
    }
    for (double w1 : weight_grid) {
        if (w1 < 0.0 || w1 > 1.0) throw ConfigError("compare: grid weight outside [0,1]");
    }

    std::vector<CompareCell> cells;
    for (Strategy strategy : {Strategy::Exhaustive, Strategy::Sequential, Strategy::Parallel}) {
        for (double w1 : weight_grid) {
            StrategyConfig cfg = base;
            cfg.strategy = strategy;
            cfg.objectives[0].weight = w1;
            cfg.objectives[1].weight = 1.0 - w1;
            std::map<std::string, PoolMember> census = run(cfg);
            auto [mean, variance] = census_stats(census, cfg.objectives);
            cells.push_back({strategy, w1, mean, variance, census.size()});
        }
    }
    return cells;
}

}  // namespace sos
