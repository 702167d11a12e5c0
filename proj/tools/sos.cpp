// sos: evolve prompt pools against weighted KPI/security objectives, then
// rerank and compare finished runs from their ledgers.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sos/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-objective prompt optimization"};
    app.require_subcommand(1);

    sos::OptimizeArgs opt;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    CLI::App* optimize = app.add_subcommand("optimize", "Run an optimization");
    optimize->add_option("--config", opt.config_path, "Run configuration (JSON)")->required();
    optimize->add_option("--out", opt.out_dir, "Output directory")->required();
    optimize->add_option("--seed", seed, "Override the configured RNG seed");
    optimize->add_option("--strategy", strategy, "Override the configured strategy")
        ->check(CLI::IsMember({"exhaustive", "sequential", "parallel"}));
    optimize->add_flag("--mock-landscape", opt.mock_landscape,
                       "Run against the synthetic token landscape");

    sos::ReportArgs rep;
    std::optional<std::string> report_out;
    CLI::App* report = app.add_subcommand("report", "Rerank a finished run from its ledger");
    report->add_option("--ledger", rep.ledger_path, "Ledger file (JSONL)")->required();
    report->add_option("--w1", rep.w1, "Weight of the first objective")->required();
    report->add_option("--k", rep.k, "Rows to report")->required();
    report->add_option("--out", report_out, "Output directory (default: beside the ledger)");

    sos::CompareArgs cmp;
    CLI::App* compare = app.add_subcommand("compare", "Strategy x weight-grid comparison");
    compare->add_option("--config", cmp.config_path, "Run configuration (JSON)")->required();
    compare->add_option("--grid", cmp.grid, "Comma-separated w1 grid")->required();
    compare->add_option("--out", cmp.out_dir, "Output directory (default: compare_out)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (optimize->parsed()) {
            opt.seed = seed;
            opt.strategy = strategy;
            return sos::cmd_optimize(opt);
        }
        if (report->parsed()) {
            if (report_out) rep.out_dir = *report_out;
            return sos::cmd_report(rep);
        }
        if (compare->parsed()) {
            return sos::cmd_compare(cmp);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
