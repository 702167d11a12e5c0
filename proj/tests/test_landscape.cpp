#include <catch_amalgamated.hpp>

#include <set>

#include "sos/landscape.hpp"

using namespace sos;

namespace {

TemplateStore repo_templates() {
    return TemplateStore::from_directory(std::filesystem::path(SOS_SOURCE_DIR) / "templates");
}

std::string run_transform(LandscapeBackend& backend, const char* template_id, std::string data,
                          std::uint64_t seed = 0) {
    return backend.transform(make_transform_request(template_id, std::move(data), seed));
}

}  // namespace

TEST_CASE("closed-form scores match hand computation") {
    Landscape l = Landscape::standard();
    l.validate();

    // {alpha, bravo, charlie}: 3 of 4 targets, no banned tokens.
    std::vector<int> abc = l.parse("alpha bravo charlie");
    CHECK(l.kpi(abc) == 0.75);
    CHECK(l.security(abc) == 1.0);
    CHECK(0.5 * l.kpi(abc) + 0.5 * l.security(abc) == 0.875);

    // Adding kilo completes KPI but costs a third of security.
    std::vector<int> abck = l.parse("alpha bravo charlie kilo");
    CHECK(l.kpi(abck) == 1.0);
    CHECK(l.security(abck) == Catch::Approx(2.0 / 3.0));

    // All three banned tokens floor security.
    std::vector<int> jkl = l.parse("juliet kilo lima");
    CHECK(l.kpi(jkl) == 0.25);  // kilo is also a target
    CHECK(l.security(jkl) == 0.0);

    CHECK(l.kpi(std::vector<int>{}) == 0.0);
    CHECK(l.security(std::vector<int>{}) == 1.0);
}

TEST_CASE("parse sorts, dedups, and rejects invalid prompts") {
    Landscape l = Landscape::standard();

    std::vector<int> t = l.parse("kilo alpha  alpha");
    CHECK(t == std::vector<int>{0, 10});
    CHECK(l.render(t) == "alpha kilo");

    // render sorts and dedups unconditionally.
    CHECK(l.render(std::vector<int>{10, 0, 10}) == "alpha kilo");
    CHECK(l.render(std::vector<int>{}) == "");

    CHECK_THROWS_AS(l.parse("alpha zulu"), PreconditionError);
    CHECK_THROWS_AS(l.parse("alpha bravo charlie delta echo foxtrot golf"), PreconditionError);
}

TEST_CASE("structural validation names the violated rule") {
    Landscape ok = Landscape::standard();
    CHECK_NOTHROW(ok.validate());

    Landscape small = Landscape::standard();
    small.vocab.pop_back();
    CHECK_THROWS_AS(small.validate(), ConfigError);

    Landscape dup = Landscape::standard();
    dup.vocab[1] = "alpha";
    CHECK_THROWS_AS(dup.validate(), ConfigError);

    Landscape stray = Landscape::standard();
    stray.kpi_targets[0] = "zulu";
    CHECK_THROWS_AS(stray.validate(), ConfigError);

    // Two overlapping tokens instead of one.
    Landscape wide = Landscape::standard();
    wide.kpi_targets[3] = "lima";
    wide.kpi_targets[0] = "kilo";
    CHECK_THROWS_AS(wide.validate(), ConfigError);
}

TEST_CASE("json round trip preserves the landscape and validates on load") {
    Landscape l = Landscape::standard();
    Landscape back = Landscape::from_json(l.to_json());
    CHECK(back.vocab == l.vocab);
    CHECK(back.kpi_targets == l.kpi_targets);
    CHECK(back.banned == l.banned);
    CHECK(back.max_len == l.max_len);

    nlohmann::json bad = l.to_json();
    bad["banned"] = {"alpha", "bravo", "charlie"};  // overlap becomes 3
    CHECK_THROWS_AS(Landscape::from_json(bad), ConfigError);
}

TEST_CASE("exhaustive optimum at equal weights is 0.875") {
    Landscape l = Landscape::standard();
    double half[2] = {0.5, 0.5};
    auto [text, score] = l.enumerate_optimum(half);
    CHECK(score == 0.875);
    CHECK(text == "alpha bravo charlie");

    double kpi_only[2] = {1.0, 0.0};
    auto [kt, ks] = l.enumerate_optimum(kpi_only);
    CHECK(ks == 1.0);
    CHECK(kt == "alpha bravo charlie kilo");

    double sec_only[2] = {0.0, 1.0};
    auto [st, ss] = l.enumerate_optimum(sec_only);
    CHECK(ss == 1.0);
    CHECK(st == "");  // smallest perfect-security subset is the empty one

    double bad[2] = {0.7, 0.7};
    CHECK_THROWS_AS(l.enumerate_optimum(bad), ConfigError);
}

TEST_CASE("semantic swap replaces one non-target token") {
    TemplateStore store = repo_templates();
    LandscapeBackend backend(Landscape::standard(), store);
    Landscape l = Landscape::standard();

    std::string out = run_transform(backend, kSemanticTemplate, payload::semantic("alpha juliet"),
                                    /*seed=*/3);
    std::vector<int> tokens = l.parse(out);
    CHECK(tokens.size() == 2);
    CHECK(std::find(tokens.begin(), tokens.end(), l.index_of("alpha")) != tokens.end());
    CHECK(std::find(tokens.begin(), tokens.end(), l.index_of("juliet")) == tokens.end());

    // Deterministic in the seed; varies across seeds.
    CHECK(run_transform(backend, kSemanticTemplate, payload::semantic("alpha juliet"), 3) == out);
    std::set<std::string> seen;
    for (std::uint64_t s = 0; s < 20; ++s) {
        seen.insert(run_transform(backend, kSemanticTemplate, payload::semantic("alpha juliet"),
                                  s));
    }
    CHECK(seen.size() > 1);

    // All-target prompts have nothing to swap and pass through.
    CHECK(run_transform(backend, kSemanticTemplate,
                        payload::semantic("alpha bravo charlie kilo"), 5) ==
          "alpha bravo charlie kilo");
}

TEST_CASE("feedback generators name the lowest-index fix") {
    TemplateStore store = repo_templates();
    LandscapeBackend backend(Landscape::standard(), store);

    CHECK(run_transform(backend, kFeedbackGeneratorKpiTemplate,
                        payload::feedback_generator("alpha", {})) ==
          "Add the token 'bravo' to the prompt.");
    CHECK(run_transform(backend, kFeedbackGeneratorKpiTemplate,
                        payload::feedback_generator("alpha bravo charlie kilo", {})) ==
          "No change needed.");

    CHECK(run_transform(backend, kFeedbackGeneratorSecurityTemplate,
                        payload::feedback_generator("alpha kilo", {})) ==
          "Remove the token 'kilo' from the prompt.");
    CHECK(run_transform(backend, kFeedbackGeneratorSecurityTemplate,
                        payload::feedback_generator("alpha delta", {})) ==
          "No change needed.");
}

TEST_CASE("improver applies add and remove edits within bounds") {
    TemplateStore store = repo_templates();
    LandscapeBackend backend(Landscape::standard(), store);

    auto improve = [&](const std::string& prompt, const std::string& feedback) {
        return run_transform(backend, kFeedbackImproverTemplate,
                             payload::feedback_improver(prompt, feedback));
    };

    CHECK(improve("alpha", "Add the token 'bravo' to the prompt.") == "alpha bravo");
    CHECK(improve("alpha", "No change needed.") == "alpha");
    // Already present: no-op.
    CHECK(improve("alpha bravo", "Add the token 'bravo' to the prompt.") == "alpha bravo");
    // At max_len: add is not available.
    CHECK(improve("alpha bravo charlie delta echo foxtrot",
                  "Add the token 'kilo' to the prompt.") ==
          "alpha bravo charlie delta echo foxtrot");

    CHECK(improve("alpha kilo", "Remove the token 'kilo' from the prompt.") == "alpha");
    // Removing the only token would empty the prompt; the move is refused.
    CHECK(improve("kilo", "Remove the token 'kilo' from the prompt.") == "kilo");

    CHECK_THROWS_AS(improve("alpha", "Add the token 'zulu' to the prompt."), PreconditionError);
    CHECK_THROWS_AS(improve("alpha", "Rewrite everything."), PreconditionError);
}

TEST_CASE("crossover keeps targets from both parents plus shared tokens") {
    TemplateStore store = repo_templates();
    LandscapeBackend backend(Landscape::standard(), store);

    auto cross = [&](const std::string& a, const std::string& b) {
        return run_transform(backend, kCrossoverTemplate, payload::crossover(a, b));
    };

    CHECK(cross("alpha juliet", "bravo kilo delta") == "alpha bravo kilo");
    CHECK(cross("alpha delta echo", "delta echo lima") == "alpha delta echo");
    // Asymmetric in general: shared-token rule uses parent order only for
    // iteration, the result set is the same.
    CHECK(cross("bravo kilo delta", "alpha juliet") == "alpha bravo kilo");
    // Target-free disjoint parents would merge to nothing; the offspring
    // falls back to the first parent.
    CHECK(cross("delta", "echo") == "delta");
}

TEST_CASE("task completion answers landscape queries exactly") {
    TemplateStore store = repo_templates();
    CallLedger calls;
    LandscapeBackend backend(Landscape::standard(), store, &calls);

    CHECK(backend.complete_task("alpha bravo", Landscape::kpi_query("alpha")) == "yes");
    CHECK(backend.complete_task("alpha bravo", Landscape::kpi_query("kilo")) == "no");
    CHECK(backend.complete_task("alpha kilo", Landscape::probe_query("kilo")) ==
          Landscape::unsafe_response("kilo"));
    CHECK(backend.complete_task("alpha", Landscape::probe_query("kilo")) ==
          std::string(kRefusalText));
    CHECK(calls.count("landscape", CallPurpose::TaskCompletion) == 4);

    CHECK_THROWS_AS(backend.complete_task("alpha", "What is the weather?"), PreconditionError);
}

TEST_CASE("judge flags exactly the planted marker") {
    MockJudge judge({std::string(kUnsafeMarker)});
    CHECK_FALSE(judge.judge_safety("q", Landscape::unsafe_response("kilo")));
    CHECK(judge.judge_safety("q", std::string(kRefusalText)));
    CHECK(judge.judge_safety("q", "yes"));
}

TEST_CASE("closed-form evaluators agree with the wire route") {
    Landscape l = Landscape::standard();
    TemplateStore store = repo_templates();
    LandscapeBackend backend(l, store);
    MockJudge judge({std::string(kUnsafeMarker)});

    LandscapeKpiEvaluator kpi_eval("kpi", l);
    LandscapeSecurityEvaluator sec_eval("security", l);
    TaskDataset kpi_data = l.kpi_dataset();
    SecurityProbeSet probes = l.probe_set();

    for (const std::string& text :
         {std::string("alpha bravo charlie"), std::string("alpha bravo charlie kilo"),
          std::string("delta echo"), std::string("juliet kilo lima"),
          std::string("alpha bravo charlie delta echo foxtrot")}) {
        Candidate p = make_candidate(text, {}, OperatorTag::seed());

        EvalResult closed_kpi = kpi_eval.evaluate(p);
        EvalResult wire_kpi = kpi_score(p, kpi_data, backend, "kpi");
        CHECK(closed_kpi.score == wire_kpi.score);
        CHECK(closed_kpi.n_evaluated == wire_kpi.n_evaluated);
        REQUIRE(closed_kpi.mistakes.size() == wire_kpi.mistakes.size());
        for (std::size_t i = 0; i < closed_kpi.mistakes.size(); ++i) {
            CHECK(closed_kpi.mistakes[i].input == wire_kpi.mistakes[i].input);
            CHECK(closed_kpi.mistakes[i].expected == wire_kpi.mistakes[i].expected);
            CHECK(closed_kpi.mistakes[i].model_output == wire_kpi.mistakes[i].model_output);
            CHECK(closed_kpi.mistakes[i].verdict == wire_kpi.mistakes[i].verdict);
        }

        EvalResult closed_sec = sec_eval.evaluate(p);
        EvalResult wire_sec = security_score(p, probes, backend, judge, "security");
        CHECK(closed_sec.score == wire_sec.score);
        CHECK(closed_sec.n_evaluated == wire_sec.n_evaluated);
        REQUIRE(closed_sec.mistakes.size() == wire_sec.mistakes.size());
        for (std::size_t i = 0; i < closed_sec.mistakes.size(); ++i) {
            CHECK(closed_sec.mistakes[i].input == wire_sec.mistakes[i].input);
            CHECK(closed_sec.mistakes[i].category == wire_sec.mistakes[i].category);
            CHECK(closed_sec.mistakes[i].model_output == wire_sec.mistakes[i].model_output);
            CHECK(closed_sec.mistakes[i].verdict == wire_sec.mistakes[i].verdict);
        }

        // Closed forms themselves.
        CHECK(closed_kpi.score == l.kpi(l.parse(text)));
        CHECK(closed_sec.score == l.security(l.parse(text)));
    }
}

TEST_CASE("evaluator hashes separate objectives over the same landscape") {
    Landscape l = Landscape::standard();
    LandscapeKpiEvaluator kpi_eval("kpi", l);
    LandscapeSecurityEvaluator sec_eval("security", l);
    CHECK(kpi_eval.data_hash() != sec_eval.data_hash());
    CHECK(LandscapeKpiEvaluator("kpi", l).data_hash() == kpi_eval.data_hash());
}
