#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sos/backends.hpp"
#include "sos/core.hpp"
#include "sos/data.hpp"
#include "sos/error.hpp"
#include "sos/evaluation.hpp"
#include "sos/http_backend.hpp"
#include "sos/landscape.hpp"
#include "sos/templates.hpp"

namespace sos {

// Per-objective data wiring on top of the ObjectiveSpec: where the dataset
// lives and how to split or sample it. Negative counts mean "not requested".
struct ObjectiveConfig {
    ObjectiveSpec spec;
    std::filesystem::path dataset_path;
    int split_dev = -1;
    int split_test = -1;
    std::string split_use = "dev";
    std::uint64_t split_seed = 0;
    int per_category = -1;
    std::uint64_t sample_seed = 0;
};

// One declarative run configuration: strategy knobs, objectives, backend
// and judge selection, template directory. Secrets never appear here; HTTP
// credentials come from SOS_LLM_KEY / SOS_JUDGE_KEY only.
struct RunConfig {
    StrategyConfig strategy;
    std::vector<ObjectiveConfig> objectives;
    std::string initial_prompt;
    std::filesystem::path template_dir;
    std::string backend_kind = "mock";  // mock | landscape | http
    std::string judge_kind = "mock";    // mock | landscape | http
    std::vector<std::string> judge_banned_markers;
    std::string http_model = "default";
    std::string judge_model = "default";
    int http_timeout_seconds = 60;
    std::optional<Landscape> landscape;
    int workers = 1;

    static RunConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path.string());
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw ConfigError("config: " + path.string() + " is not a JSON object");
        }
        return from_json(j, path.parent_path());
    }

    // Relative paths resolve against the config file's directory, so a
    // config stays runnable from any working directory.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
        RunConfig cfg;
        try {
            cfg.initial_prompt = j.at("initial_prompt").get<std::string>();
            cfg.template_dir = resolve(base_dir, j.at("template_dir").get<std::string>());

            cfg.strategy.strategy = strategy_from(j.value("strategy", "exhaustive"));
            cfg.strategy.rng_seed = j.value("seed", std::uint64_t{0});
            cfg.strategy.n_init = j.value("n_init", 50);
            cfg.strategy.top_k = j.value("top_k", 5);
            cfg.strategy.delta = j.value("delta", 1e-5);
            cfg.strategy.delta_f = j.value("delta_f", 0.01);
            cfg.strategy.max_phase_iters = j.value("max_phase_iters", 10);
            cfg.strategy.max_crossover_offspring = j.value("max_crossover_offspring", 10);
            cfg.workers = j.value("workers", 1);

            if (j.contains("backend")) {
                const auto& b = j.at("backend");
                cfg.backend_kind = b.value("kind", "mock");
                cfg.http_model = b.value("model", "default");
                cfg.http_timeout_seconds = b.value("timeout_seconds", 60);
            }
            if (j.contains("judge")) {
                const auto& jj = j.at("judge");
                cfg.judge_kind = jj.value("kind", "mock");
                cfg.judge_model = jj.value("model", "default");
                if (jj.contains("banned_markers")) {
                    cfg.judge_banned_markers =
                        jj.at("banned_markers").get<std::vector<std::string>>();
                }
            }
            if (j.contains("landscape")) {
                cfg.landscape = Landscape::from_json(j.at("landscape"));
            }

            for (const auto& o : j.at("objectives")) {
                ObjectiveConfig oc;
                oc.spec.name = o.at("name").get<std::string>();
                oc.spec.weight = o.at("weight").get<double>();
                oc.spec.evaluator = evaluator_kind_from(o.at("evaluator").get<std::string>());
                oc.spec.feedback_generator_template =
                    o.at("feedback_generator_template").get<std::string>();
                oc.spec.feedback_improver_template =
                    o.at("feedback_improver_template").get<std::string>();
                if (o.contains("dataset")) {
                    oc.dataset_path = resolve(base_dir, o.at("dataset").get<std::string>());
                }
                if (o.contains("split")) {
                    const auto& s = o.at("split");
                    oc.split_dev = s.at("dev").get<int>();
                    oc.split_test = s.at("test").get<int>();
                    oc.split_use = s.value("use", "dev");
                    oc.split_seed = s.value("seed", std::uint64_t{0});
                }
                if (o.contains("per_category")) {
                    oc.per_category = o.at("per_category").get<int>();
                    oc.sample_seed = o.value("sample_seed", std::uint64_t{0});
                }
                cfg.strategy.objectives.push_back(oc.spec);
                cfg.objectives.push_back(std::move(oc));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        cfg.strategy.validate();
        return cfg;
    }

    // The --mock-landscape override: synthetic backend and judge, datasets
    // generated from the landscape, file paths ignored.
    void apply_mock_landscape() {
        backend_kind = "landscape";
        judge_kind = "landscape";
        if (!landscape) landscape = Landscape::standard();
    }

  private:
    static std::filesystem::path resolve(const std::filesystem::path& base,
                                         const std::filesystem::path& p) {
        return p.is_absolute() ? p : base / p;
    }
};

// Everything a run needs with ownership in one place; Engine borrows from
// this.
struct RunBundle {
    TemplateStore store;
    std::shared_ptr<CallLedger> calls;
    std::unique_ptr<TextBackend> backend;
    std::unique_ptr<SafetyJudge> judge;
    EvaluatorMap evaluators;
    std::optional<Landscape> landscape;
};

namespace detail {

inline TaskDataset objective_dataset(const ObjectiveConfig& oc,
                                     const std::optional<Landscape>& landscape,
                                     bool landscape_backend) {
    TaskDataset d;
    if (landscape_backend) {
        d = landscape->kpi_dataset();
    } else {
        if (oc.dataset_path.empty()) {
            throw ConfigError("config: objective '" + oc.spec.name + "' needs a dataset path");
        }
        d = load_task_dataset(oc.dataset_path);
    }
    if (oc.split_dev >= 0) {
        auto [dev, test] = split_dev_test(d, static_cast<std::size_t>(oc.split_dev),
                                          static_cast<std::size_t>(oc.split_test),
                                          oc.split_seed);
        if (oc.split_use == "dev") return dev;
        if (oc.split_use == "test") return test;
        throw ConfigError("config: split.use must be dev or test");
    }
    return d;
}

inline SecurityProbeSet objective_probes(const ObjectiveConfig& oc,
                                         const std::optional<Landscape>& landscape,
                                         bool landscape_backend) {
    SecurityProbeSet s;
    if (landscape_backend) {
        s = landscape->probe_set();
    } else {
        if (oc.dataset_path.empty()) {
            throw ConfigError("config: objective '" + oc.spec.name + "' needs a probe file");
        }
        s = load_security_probes(oc.dataset_path);
    }
    if (oc.per_category >= 0) {
        s = stratified_sample(s, static_cast<std::size_t>(oc.per_category), oc.sample_seed);
    }
    return s;
}

}  // namespace detail

// Loads templates and datasets, builds the backend, judge, and one evaluator
// per objective. Fails fast with precise messages: missing template files
// surface here, not mid-run.
inline RunBundle materialize(const RunConfig& cfg) {
    RunBundle bundle;
    bundle.store = TemplateStore::from_directory(cfg.template_dir);
    bundle.calls = std::make_shared<CallLedger>();
    bundle.landscape = cfg.landscape;

    bool uses_landscape =
        cfg.backend_kind == "landscape" || cfg.judge_kind == "landscape";
    for (const ObjectiveConfig& oc : cfg.objectives) {
        if (oc.spec.evaluator == EvaluatorKind::LandscapeKpi ||
            oc.spec.evaluator == EvaluatorKind::LandscapeSecurity) {
            uses_landscape = true;
        }
    }
    if (uses_landscape && !bundle.landscape) bundle.landscape = Landscape::standard();

    // Every referenced template must exist before any backend call happens.
    bundle.store.text(kSemanticTemplate);
    bundle.store.text(kCrossoverTemplate);
    for (const ObjectiveConfig& oc : cfg.objectives) {
        bundle.store.text(oc.spec.feedback_generator_template);
        bundle.store.text(oc.spec.feedback_improver_template);
    }

    if (cfg.backend_kind == "mock") {
        bundle.backend = std::make_unique<MockTextBackend>(bundle.store, bundle.calls.get());
    } else if (cfg.backend_kind == "landscape") {
        bundle.backend = std::make_unique<LandscapeBackend>(*bundle.landscape, bundle.store,
                                                            bundle.calls.get());
    } else if (cfg.backend_kind == "http") {
        HttpEndpointConfig http = HttpEndpointConfig::llm_from_env();
        http.model = cfg.http_model;
        http.timeout_seconds = cfg.http_timeout_seconds;
        bundle.backend =
            std::make_unique<HttpChatBackend>(std::move(http), bundle.store, bundle.calls.get());
    } else {
        throw ConfigError("config: unknown backend kind '" + cfg.backend_kind + "'");
    }

    bool needs_judge = false;
    for (const ObjectiveConfig& oc : cfg.objectives) {
        if (oc.spec.evaluator == EvaluatorKind::SafetyRate) needs_judge = true;
    }
    if (needs_judge) {
        if (cfg.judge_kind == "mock") {
            std::vector<std::string> markers = cfg.judge_banned_markers;
            if (markers.empty()) markers.push_back(std::string(kUnsafeMarker));
            bundle.judge = std::make_unique<MockJudge>(std::move(markers), bundle.calls.get());
        } else if (cfg.judge_kind == "landscape") {
            bundle.judge = std::make_unique<MockJudge>(
                std::vector<std::string>{std::string(kUnsafeMarker)}, bundle.calls.get());
        } else if (cfg.judge_kind == "http") {
            HttpEndpointConfig http = HttpEndpointConfig::judge_from_env();
            http.model = cfg.judge_model;
            http.timeout_seconds = cfg.http_timeout_seconds;
            bundle.judge = std::make_unique<HttpSafetyJudge>(std::move(http), bundle.calls.get());
        } else {
            throw ConfigError("config: unknown judge kind '" + cfg.judge_kind + "'");
        }
    }

    bool landscape_backend = cfg.backend_kind == "landscape";
    for (const ObjectiveConfig& oc : cfg.objectives) {
        switch (oc.spec.evaluator) {
            case EvaluatorKind::TaskAccuracy:
                bundle.evaluators[oc.spec.name] = std::make_shared<TaskAccuracyEvaluator>(
                    oc.spec.name,
                    detail::objective_dataset(oc, bundle.landscape, landscape_backend),
                    *bundle.backend, cfg.workers);
                break;
            case EvaluatorKind::SafetyRate:
                bundle.evaluators[oc.spec.name] = std::make_shared<SafetyRateEvaluator>(
                    oc.spec.name,
                    detail::objective_probes(oc, bundle.landscape, landscape_backend),
                    *bundle.backend, *bundle.judge, cfg.workers);
                break;
            case EvaluatorKind::LandscapeKpi:
                bundle.evaluators[oc.spec.name] =
                    std::make_shared<LandscapeKpiEvaluator>(oc.spec.name, *bundle.landscape);
                break;
            case EvaluatorKind::LandscapeSecurity:
                bundle.evaluators[oc.spec.name] =
                    std::make_shared<LandscapeSecurityEvaluator>(oc.spec.name,
                                                                 *bundle.landscape);
                break;
        }
    }
    return bundle;
}

}  // namespace sos
