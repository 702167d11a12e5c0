#pragma once

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sos/core.hpp"
#include "sos/error.hpp"
#include "sos/evaluation.hpp"
#include "sos/ledger.hpp"
#include "sos/strategies.hpp"

namespace sos {

// A run ledger reconstructed far enough to rerank and audit: the configured
// objectives, every candidate's scores, the final retained pool, and the
// rank event. Reports built from this view never touch a backend.
struct LedgerView {
    nlohmann::json config;
    std::vector<ObjectiveSpec> objectives;
    Pool final_pool;
    std::vector<LedgerRecord> records;
    nlohmann::json rank_payload;

    static LedgerView from_records(std::vector<LedgerRecord> records) {
        LedgerView view;
        view.records = std::move(records);

        const LedgerRecord* init = nullptr;
        for (const LedgerRecord& r : view.records) {
            if (r.event == "init") {
                init = &r;
                break;
            }
        }
        if (!init) throw StateError("ledger: truncated: no init event");
        view.config = init->payload.at("config");
        for (const auto& o : view.config.at("objectives")) {
            ObjectiveSpec spec;
            spec.name = o.at("name").get<std::string>();
            spec.weight = o.at("weight").get<double>();
            spec.evaluator = evaluator_kind_from(o.at("evaluator").get<std::string>());
            spec.feedback_generator_template =
                o.value("feedback_generator_template", std::string());
            spec.feedback_improver_template =
                o.value("feedback_improver_template", std::string());
            view.objectives.push_back(std::move(spec));
        }

        // Candidate texts and lineage come from init/mutate events; scores
        // from evaluate events (evidence cases are not persisted, only their
        // counts, so reconstructed mistake lists are empty).
        std::map<std::string, Candidate> candidates;
        std::map<std::string, ScoreVector> scores;
        const LedgerRecord* last_select = nullptr;
        const LedgerRecord* rank = nullptr;
        for (const LedgerRecord& r : view.records) {
            if (r.event == "init") {
                const auto& seed = r.payload.at("seed_candidate");
                Candidate c;
                c.id = seed.at("id").get<std::string>();
                c.text = seed.at("text").get<std::string>();
                c.tag = OperatorTag::seed();
                candidates[c.id] = std::move(c);
            } else if (r.event == "mutate") {
                if (r.payload.value("dropped", false)) continue;
                Candidate c;
                c.id = r.payload.at("id").get<std::string>();
                c.text = r.payload.at("text").get<std::string>();
                c.parent_ids = r.payload.at("parent_ids").get<std::vector<std::string>>();
                c.tag = OperatorTag::parse(r.payload.at("tag").get<std::string>());
                c.generation = r.payload.at("generation").get<int>();
                candidates[c.id] = std::move(c);
            } else if (r.event == "evaluate") {
                scores[r.payload.at("id").get<std::string>()].set(
                    r.payload.at("objective").get<std::string>(),
                    r.payload.at("score").get<double>(), r.payload.at("n").get<int>(), {});
            } else if (r.event == "select") {
                last_select = &r;
            } else if (r.event == "rank") {
                rank = &r;
            }
        }
        if (!rank) throw StateError("ledger: truncated: no rank event");
        if (!last_select) throw StateError("ledger: truncated: no select event");
        view.rank_payload = rank->payload;

        for (const auto& id : last_select->payload.at("retained")) {
            const std::string& cid = id.get_ref<const std::string&>();
            auto cit = candidates.find(cid);
            auto sit = scores.find(cid);
            if (cit == candidates.end() || sit == scores.end()) {
                throw StateError("ledger: retained candidate " + cid +
                                 " lacks an earlier init/mutate or evaluate event");
            }
            view.final_pool.insert(PoolMember{cit->second, sit->second});
        }
        return view;
    }

    static LedgerView load(const std::filesystem::path& path) {
        return from_records(read_ledger(path));
    }
};

namespace detail {

inline std::string format_score(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4) << v;
    return out.str();
}

}  // namespace detail

// Rank table under substituted weights (w1 to the first objective, 1-w1 to
// the second); pure function of the ledger view.
inline nlohmann::json rank_report_json(const LedgerView& view, double w1, std::size_t k) {
    if (view.objectives.size() != 2) {
        throw ConfigError("report: --w1 reranking requires exactly two objectives");
    }
    double weights[2] = {w1, 1.0 - w1};
    std::vector<RankedEntry> ranked =
        rerank_with_weights(view.final_pool, view.objectives, weights, k);

    nlohmann::json rows = nlohmann::json::array();
    std::size_t rank = 0;
    for (const RankedEntry& e : ranked) {
        ++rank;
        nlohmann::json scores = nlohmann::json::object();
        for (const auto& [name, value] : e.scores.scores) scores[name] = value;
        rows.push_back({{"rank", rank},
                        {"id", e.candidate.id},
                        {"text", e.candidate.text},
                        {"scores", scores},
                        {"holistic", e.holistic}});
    }
    return nlohmann::json{
        {"weights", {w1, 1.0 - w1}},
        {"objectives", {view.objectives[0].name, view.objectives[1].name}},
        {"k", k},
        {"rows", rows}};
}

inline std::string rank_report_text(const nlohmann::json& report) {
    const std::string o1 = report.at("objectives")[0].get<std::string>();
    const std::string o2 = report.at("objectives")[1].get<std::string>();
    std::ostringstream out;
    out << "rank  " << o1 << "  " << o2 << "  holistic  prompt\n";
    for (const auto& row : report.at("rows")) {
        out << row.at("rank").get<std::size_t>() << "     "
            << detail::format_score(row.at("scores").at(o1).get<double>()) << "  "
            << detail::format_score(row.at("scores").at(o2).get<double>()) << "  "
            << detail::format_score(row.at("holistic").get<double>()) << "    "
            << row.at("text").get<std::string>() << "\n";
    }
    return out.str();
}

// Strategy x weight grid of mean/variance cells.
inline nlohmann::json compare_report_json(const std::vector<CompareCell>& cells) {
    nlohmann::json rows = nlohmann::json::array();
    for (const CompareCell& cell : cells) {
        rows.push_back({{"strategy", to_string(cell.strategy)},
                        {"w1", cell.w1},
                        {"mean", cell.mean},
                        {"variance", cell.variance},
                        {"count", cell.count}});
    }
    return nlohmann::json{{"cells", rows}};
}

inline std::string compare_report_text(const std::vector<CompareCell>& cells) {
    // Rows are grid weights, columns strategies, in first-seen order.
    std::vector<double> grid;
    for (const CompareCell& cell : cells) {
        if (std::find(grid.begin(), grid.end(), cell.w1) == grid.end()) grid.push_back(cell.w1);
    }
    auto find_cell = [&cells](Strategy s, double w1) -> const CompareCell* {
        for (const CompareCell& cell : cells) {
            if (cell.strategy == s && cell.w1 == w1) return &cell;
        }
        return nullptr;
    };

    std::ostringstream out;
    out << "w1      exhaustive            sequential            parallel\n";
    for (double w1 : grid) {
        out << detail::format_score(w1);
        for (Strategy s :
             {Strategy::Exhaustive, Strategy::Sequential, Strategy::Parallel}) {
            const CompareCell* cell = find_cell(s, w1);
            if (cell) {
                out << "  " << detail::format_score(cell->mean) << " ("
                    << detail::format_score(cell->variance) << ")";
            } else {
                out << "  -";
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace sos
