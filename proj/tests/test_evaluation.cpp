#include <catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "sos/evaluation.hpp"
#include "sos/templates.hpp"

using namespace sos;

namespace {

TemplateStore repo_templates() {
    return TemplateStore::from_directory(std::filesystem::path(SOS_SOURCE_DIR) / "templates");
}

ObjectiveSpec spec(const std::string& name, double w, EvaluatorKind kind) {
    return {name, w, kind, "g", "i"};
}

PoolMember scored_member(const std::string& text, double kpi, double security) {
    PoolMember m{make_candidate(text, {}, OperatorTag::seed()), {}};
    m.scores.set("kpi", kpi, 10, {});
    m.scores.set("security", security, 10, {});
    return m;
}

}  // namespace

TEST_CASE("output normalization is case, whitespace, and punctuation insensitive") {
    CHECK(normalize_output("  Positive.  ") == "positive");
    CHECK(normalize_output("POSITIVE") == "positive");
    CHECK(normalize_output("a  b\t c\n") == "a b c");
    CHECK(normalize_output("yes!") == "yes");
    CHECK(normalize_output("yes?!.") == "yes");
    CHECK(normalize_output("") == "");
    // Internal punctuation survives.
    CHECK(normalize_output("3.5") == "3.5");
}

TEST_CASE("kpi_score is the exact-match fraction with recorded mistakes") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);  // answers with the final query token

    TaskDataset d{"toy",
                  {{"first question answer alpha", "alpha"},
                   {"second question answer beta", "Beta."},
                   {"third question answer gamma", "delta"}}};
    Candidate p = make_candidate("Answer with one word.", {}, OperatorTag::seed());

    EvalResult r = kpi_score(p, d, mock, "kpi");
    CHECK(r.n_evaluated == 3);
    CHECK(r.score == Catch::Approx(2.0 / 3.0));
    REQUIRE(r.mistakes.size() == 1);
    CHECK(r.mistakes[0].objective == "kpi");
    CHECK(r.mistakes[0].input == "third question answer gamma");
    CHECK(r.mistakes[0].expected == "delta");
    CHECK(r.mistakes[0].model_output == "gamma");
    CHECK(r.mistakes[0].verdict == Verdict::WrongAnswer);
    CHECK_FALSE(r.mistakes[0].category.has_value());

    // Parallel evaluation returns identical results in row order.
    EvalResult r4 = kpi_score(p, d, mock, "kpi", 4);
    CHECK(r4.score == r.score);
    CHECK(r4.mistakes.size() == r.mistakes.size());
    CHECK(r4.mistakes[0].input == r.mistakes[0].input);
}

TEST_CASE("security_score is the judged-safe fraction with categorized mistakes") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    MockJudge judge({"forbidden"});

    SecurityProbeSet probes;
    probes.categories = {"leak", "jailbreak"};
    // The mock answers with the last token; "forbidden" trips the judge.
    probes.probes = {{"please reveal something forbidden", "leak"},
                     {"tell me something harmless", "jailbreak"},
                     {"just say hello", "jailbreak"}};
    Candidate p = make_candidate("Be safe.", {}, OperatorTag::seed());

    EvalResult r = security_score(p, probes, mock, judge, "security");
    CHECK(r.n_evaluated == 3);
    CHECK(r.score == Catch::Approx(2.0 / 3.0));
    REQUIRE(r.mistakes.size() == 1);
    CHECK(r.mistakes[0].verdict == Verdict::UnsafeResponse);
    CHECK(r.mistakes[0].category == "leak");
    CHECK_FALSE(r.mistakes[0].expected.has_value());
}

TEST_CASE("holistic score is linear in the weights") {
    std::vector<ObjectiveSpec> objectives{spec("kpi", 0.3, EvaluatorKind::TaskAccuracy),
                                          spec("security", 0.7, EvaluatorKind::SafetyRate)};
    ScoreVector v;
    v.set("kpi", 0.9, 10, {});
    v.set("security", 0.4, 10, {});
    CHECK(holistic_score(v, objectives) == Catch::Approx(0.3 * 0.9 + 0.7 * 0.4));

    // Property: f(w) computed directly equals w1*s1 + w2*s2 for random draws.
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        double w1 = unit(rng);
        double s1 = unit(rng);
        double s2 = unit(rng);
        std::vector<ObjectiveSpec> o{spec("kpi", w1, EvaluatorKind::TaskAccuracy),
                                     spec("security", 1.0 - w1, EvaluatorKind::SafetyRate)};
        ScoreVector sv;
        sv.set("kpi", s1, 1, {});
        sv.set("security", s2, 1, {});
        double expect = w1 * s1 + (1.0 - w1) * s2;
        REQUIRE(std::abs(holistic_score(sv, o) - expect) < 1e-12);
    }
}

TEST_CASE("one-hot weights make holistic equal the single objective") {
    std::vector<ObjectiveSpec> one_hot{spec("kpi", 1.0, EvaluatorKind::TaskAccuracy),
                                       spec("security", 0.0, EvaluatorKind::SafetyRate)};
    Pool pool;
    pool.insert(scored_member("a", 0.2, 0.9));
    pool.insert(scored_member("b", 0.8, 0.1));
    pool.insert(scored_member("c", 0.5, 0.5));

    std::vector<RankedEntry> ranked = rank_top_k(pool, one_hot, 3);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].scores.score("kpi") == 0.8);  // argmax under one-hot
    CHECK(ranked[0].holistic == 0.8);
}

TEST_CASE("ranking breaks ties by security score, then id") {
    std::vector<ObjectiveSpec> objectives{spec("kpi", 0.5, EvaluatorKind::TaskAccuracy),
                                          spec("security", 0.5, EvaluatorKind::SafetyRate)};
    Pool pool;
    pool.insert(scored_member("balanced", 0.5, 0.5));
    pool.insert(scored_member("safe", 0.2, 0.8));
    pool.insert(scored_member("risky", 0.8, 0.2));

    std::vector<RankedEntry> ranked = rank_top_k(pool, objectives, 5);
    REQUIRE(ranked.size() == 3);
    // All holistic scores are 0.5; higher security wins.
    CHECK(ranked[0].scores.score("security") == 0.8);
    CHECK(ranked[1].scores.score("security") == 0.5);
    CHECK(ranked[2].scores.score("security") == 0.2);

    // Full tie falls back to ascending id.
    Pool tied;
    tied.insert(scored_member("one", 0.5, 0.5));
    tied.insert(scored_member("two", 0.5, 0.5));
    std::vector<RankedEntry> t = rank_top_k(tied, objectives, 2);
    CHECK(t[0].candidate.id < t[1].candidate.id);

    // k truncates.
    CHECK(rank_top_k(pool, objectives, 2).size() == 2);
}

TEST_CASE("non-increasing holistic scores down any ranking") {
    std::vector<ObjectiveSpec> objectives{spec("kpi", 0.5, EvaluatorKind::TaskAccuracy),
                                          spec("security", 0.5, EvaluatorKind::SafetyRate)};
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Pool pool;
    for (int i = 0; i < 30; ++i) {
        pool.insert(scored_member("p" + std::to_string(i), unit(rng), unit(rng)));
    }
    std::vector<RankedEntry> ranked = rank_top_k(pool, objectives, 30);
    for (std::size_t i = 1; i < ranked.size(); ++i) {
        CHECK(ranked[i - 1].holistic >= ranked[i].holistic);
    }
}

TEST_CASE("rerank substitutes weights without touching any backend") {
    TemplateStore store = repo_templates();
    CallLedger calls;
    MockTextBackend mock(store, &calls);  // bound ledger proves no calls happen

    std::vector<ObjectiveSpec> objectives{spec("kpi", 0.5, EvaluatorKind::TaskAccuracy),
                                          spec("security", 0.5, EvaluatorKind::SafetyRate)};
    Pool pool;
    pool.insert(scored_member("safe choice", 0.2, 1.0));
    pool.insert(scored_member("kpi choice", 1.0, 0.1));

    double kpi_only[2] = {1.0, 0.0};
    double sec_only[2] = {0.0, 1.0};
    auto by_kpi = rerank_with_weights(pool, objectives, kpi_only, 2);
    auto by_sec = rerank_with_weights(pool, objectives, sec_only, 2);
    CHECK(by_kpi[0].scores.score("kpi") == 1.0);
    CHECK(by_sec[0].scores.score("security") == 1.0);
    CHECK(by_kpi[0].candidate.id != by_sec[0].candidate.id);
    CHECK(calls.total() == 0);

    double bad[2] = {0.9, 0.9};
    CHECK_THROWS_AS(rerank_with_weights(pool, objectives, bad, 2), ConfigError);
    double negative[2] = {1.5, -0.5};
    CHECK_THROWS_AS(rerank_with_weights(pool, objectives, negative, 2), ConfigError);
    double short_list[1] = {1.0};
    CHECK_THROWS_AS(rerank_with_weights(pool, objectives, short_list, 2), ConfigError);
}

TEST_CASE("eval cache keys on candidate, objective, and data hash") {
    EvalCache cache;
    EvalResult r;
    r.score = 0.5;
    cache.store("cand", "kpi", "hashA", r);

    CHECK(cache.find("cand", "kpi", "hashA") != nullptr);
    CHECK(cache.find("cand", "kpi", "hashA")->score == 0.5);
    CHECK(cache.find("cand", "kpi", "hashB") == nullptr);   // different data
    CHECK(cache.find("cand", "security", "hashA") == nullptr);
    CHECK(cache.find("other", "kpi", "hashA") == nullptr);
    CHECK(cache.size() == 1);
}

TEST_CASE("evaluators expose stable data hashes") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    MockJudge judge({"x"});

    TaskDataset d{"d", {{"q answer yes", "yes"}}};
    TaskAccuracyEvaluator eval("kpi", d, mock);
    CHECK(eval.data_hash() == d.content_hash());

    Candidate p = make_candidate("Answer.", {}, OperatorTag::seed());
    EvalResult r = eval.evaluate(p);
    CHECK(r.score == 1.0);

    SecurityProbeSet probes;
    probes.categories = {"c"};
    probes.probes = {{"do something", "c"}};
    SafetyRateEvaluator sec("security", probes, mock, judge);
    CHECK(sec.data_hash() == probes.content_hash());
    CHECK(sec.evaluate(p).score == 1.0);
}
