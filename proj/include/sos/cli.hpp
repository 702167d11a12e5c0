#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/config.hpp"
#include "sos/error.hpp"
#include "sos/ledger.hpp"
#include "sos/report.hpp"
#include "sos/strategies.hpp"

namespace sos {

struct OptimizeArgs {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    bool mock_landscape = false;
};

struct ReportArgs {
    std::filesystem::path ledger_path;
    double w1 = 0.5;
    std::size_t k = 5;
    std::optional<std::filesystem::path> out_dir;
};

struct CompareArgs {
    std::filesystem::path config_path;
    std::string grid = "1,0.75,0.5,0.25,0";
    std::filesystem::path out_dir = "compare_out";
};

namespace detail {

// %g keeps grid tokens short and stable for file names: 1, 0.75, 0.5, ...
inline std::string weight_token(double w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", w);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("output: cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw ConfigError("output: write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json pool_json(const Pool& pool) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& [id, member] : pool.members) {
        members.push_back({{"id", member.candidate.id},
                           {"text", member.candidate.text},
                           {"tag", member.candidate.tag.str()},
                           {"generation", member.candidate.generation},
                           {"parent_ids", member.candidate.parent_ids},
                           {"scores", member.scores.scores},
                           {"n_evaluated", member.scores.n_evaluated}});
    }
    return nlohmann::json{{"generation_counter", pool.generation_counter},
                          {"members", members}};
}

inline nlohmann::json topk_json(const std::vector<RankedEntry>& entries,
                                std::span<const ObjectiveSpec> objectives, std::size_t k) {
    nlohmann::json weights = nlohmann::json::object();
    for (const ObjectiveSpec& o : objectives) weights[o.name] = o.weight;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        rows.push_back({{"rank", i + 1},
                        {"id", entries[i].candidate.id},
                        {"text", entries[i].candidate.text},
                        {"scores", entries[i].scores.scores},
                        {"holistic", entries[i].holistic}});
    }
    return nlohmann::json{{"weights", weights}, {"k", k}, {"entries", rows}};
}

inline std::string topk_text(const std::vector<RankedEntry>& entries,
                             std::span<const ObjectiveSpec> objectives) {
    std::ostringstream out;
    out << "rank";
    for (const ObjectiveSpec& o : objectives) out << "  " << o.name;
    out << "  holistic  prompt\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out << (i + 1);
        for (const ObjectiveSpec& o : objectives) {
            out << "  " << format_score(entries[i].scores.score(o.name));
        }
        out << "  " << format_score(entries[i].holistic) << "  " << entries[i].candidate.text
            << "\n";
    }
    return out.str();
}

inline nlohmann::json calls_json(const CallLedger& calls) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [backend, purpose, count] : calls.snapshot()) {
        rows.push_back({{"backend", backend}, {"purpose", to_string(purpose)}, {"count", count}});
    }
    return nlohmann::json{
        {"backends", rows},
        {"totals",
         {{"mutation", calls.total(CallPurpose::Mutation)},
          {"task_completion", calls.total(CallPurpose::TaskCompletion)},
          {"judging", calls.total(CallPurpose::Judging)},
          {"total", calls.total()}}}};
}

inline std::vector<double> parse_grid(const std::string& grid) {
    // getline drops a final empty segment, so a trailing comma needs its own
    // check to be rejected rather than ignored.
    if (!grid.empty() && grid.back() == ',') {
        throw ConfigError("compare: trailing comma in --grid '" + grid + "'");
    }
    std::vector<double> weights;
    std::stringstream in(grid);
    std::string token;
    while (std::getline(in, token, ',')) {
        token = sos::detail::trim(token);
        if (token.empty()) throw ConfigError("compare: empty entry in --grid '" + grid + "'");
        try {
            std::size_t used = 0;
            double w = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            weights.push_back(w);
        } catch (const std::exception&) {
            throw ConfigError("compare: cannot parse grid weight '" + token + "'");
        }
    }
    if (weights.empty()) throw ConfigError("compare: --grid is empty");
    return weights;
}

}  // namespace detail

// Runs the configured strategy and persists the audit trail: ledger.jsonl,
// pool.json, topk.json/.txt, calls.json, and landscape.json when a synthetic
// landscape is bound. Exit 0 on success, 2 on configuration problems, 3 when
// the backend gives out (the ledger keeps everything flushed so far).
inline int cmd_optimize(const OptimizeArgs& args, std::ostream& err = std::cerr) {
    RunConfig cfg;
    std::optional<RunBundle> bundle;
    try {
        cfg = RunConfig::from_file(args.config_path);
        if (args.seed) cfg.strategy.rng_seed = *args.seed;
        if (args.strategy) cfg.strategy.strategy = strategy_from(*args.strategy);
        if (args.mock_landscape) cfg.apply_mock_landscape();
        cfg.strategy.validate();

        std::error_code ec;
        std::filesystem::create_directories(args.out_dir, ec);
        if (ec) throw ConfigError("output: cannot create " + args.out_dir.string());

        bundle.emplace(materialize(cfg));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        FileLedger ledger(args.out_dir / "ledger.jsonl");
        Engine engine(cfg.strategy, *bundle->backend, bundle->evaluators, &ledger);
        RunResult result = engine.run(cfg.initial_prompt);

        detail::write_json_file(args.out_dir / "pool.json", detail::pool_json(result.final_pool));
        detail::write_json_file(
            args.out_dir / "topk.json",
            detail::topk_json(result.top_k, cfg.strategy.objectives, cfg.strategy.top_k));
        detail::write_text_file(args.out_dir / "topk.txt",
                                detail::topk_text(result.top_k, cfg.strategy.objectives));
        detail::write_json_file(args.out_dir / "calls.json", detail::calls_json(*bundle->calls));
        if (bundle->landscape) {
            detail::write_json_file(args.out_dir / "landscape.json",
                                    bundle->landscape->to_json());
        }
        return 0;
    } catch (const BackendError& e) {
        err << "error: backend exhausted: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

// Reranks a finished run's final pool under substituted weights, straight
// from the ledger: no backend, no re-evaluation. Writes the table next to
// the ledger (or under --out) and prints the human-readable form.
inline int cmd_report(const ReportArgs& args, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    LedgerView view;
    try {
        view = LedgerView::load(args.ledger_path);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const StateError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }

    try {
        nlohmann::json report = rank_report_json(view, args.w1, args.k);
        std::string text = rank_report_text(report);

        std::filesystem::path dir =
            args.out_dir ? *args.out_dir : args.ledger_path.parent_path();
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("output: cannot create " + dir.string());
        std::string stem =
            "report_w1_" + detail::weight_token(args.w1) + "_k" + std::to_string(args.k);
        detail::write_json_file(dir / (stem + ".json"), report);
        detail::write_text_file(dir / (stem + ".txt"), text);

        out << text;
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

// Runs every strategy over the weight grid with paired seeds and reports
// mean/variance of holistic score across each run's evaluated candidates.
// Per-cell ledgers land under <out>/ledgers/ so any cell can be re-derived.
inline int cmd_compare(const CompareArgs& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    RunConfig cfg;
    std::vector<double> grid;
    try {
        cfg = RunConfig::from_file(args.config_path);
        grid = detail::parse_grid(args.grid);
        for (double w1 : grid) {
            if (w1 < 0.0 || w1 > 1.0) {
                throw ConfigError("compare: grid weight " + detail::weight_token(w1) +
                                  " outside [0,1]");
            }
        }

        std::error_code ec;
        std::filesystem::create_directories(args.out_dir / "ledgers", ec);
        if (ec) throw ConfigError("output: cannot create " + args.out_dir.string());
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        std::vector<CompareCell> cells = compare_strategies(
            cfg.strategy, grid, [&](const StrategyConfig& cell_cfg) {
                RunConfig run_cfg = cfg;
                run_cfg.strategy = cell_cfg;
                RunBundle bundle = materialize(run_cfg);
                std::string name = std::string(to_string(cell_cfg.strategy)) + "-w1-" +
                                   detail::weight_token(cell_cfg.objectives[0].weight) +
                                   ".jsonl";
                FileLedger ledger(args.out_dir / "ledgers" / name);
                Engine engine(run_cfg.strategy, *bundle.backend, bundle.evaluators, &ledger);
                engine.run(run_cfg.initial_prompt);
                return engine.evaluated_census();
            });

        std::string text = compare_report_text(cells);
        detail::write_json_file(args.out_dir / "compare.json", compare_report_json(cells));
        detail::write_text_file(args.out_dir / "compare.txt", text);
        out << text;
        return 0;
    } catch (const BackendError& e) {
        err << "error: backend exhausted: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sos
