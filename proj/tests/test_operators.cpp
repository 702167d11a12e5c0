#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "helpers.hpp"
#include "sos/operators.hpp"

using namespace sos;

namespace {

TemplateStore repo_templates() {
    return TemplateStore::from_directory(std::filesystem::path(SOS_SOURCE_DIR) / "templates");
}

// Test double with a per-template script of outputs, consumed in call order.
class ScriptedBackend : public TextBackend {
  public:
    explicit ScriptedBackend(CallLedger* calls = nullptr) : TextBackend(calls) {}

    std::string name() const override { return "scripted"; }

    void script(std::string template_prefix, std::vector<std::string> outputs) {
        scripts_[std::move(template_prefix)] = std::move(outputs);
    }

    int transforms_served = 0;

  protected:
    std::string do_transform(const TransformRequest& req) override {
        ++transforms_served;
        for (auto& [prefix, outputs] : scripts_) {
            if (detail::starts_with(req.template_id, prefix)) {
                if (outputs.empty()) throw StateError("scripted backend: script exhausted");
                std::string out = outputs.front();
                outputs.erase(outputs.begin());
                return out;
            }
        }
        throw StateError("scripted backend: no script for " + req.template_id);
    }

    std::string do_complete(const std::string&, const std::string&) override {
        throw StateError("scripted backend: no completions");
    }

  private:
    std::map<std::string, std::vector<std::string>> scripts_;
};

ObjectiveSpec kpi_spec() {
    return {"kpi", 0.5, EvaluatorKind::TaskAccuracy, "feedback_generator_kpi",
            "feedback_improver"};
}

ObjectiveSpec security_spec() {
    return {"security", 0.5, EvaluatorKind::SafetyRate, "feedback_generator_security",
            "feedback_improver"};
}

PoolMember member_with_score(const std::string& text, const std::string& objective,
                             double score, int n_mistakes) {
    PoolMember m{make_candidate(text, {}, OperatorTag::seed()), {}};
    std::vector<MistakeCase> mistakes;
    for (int i = 0; i < n_mistakes; ++i) {
        mistakes.push_back({objective, "input " + std::to_string(i), "want", "got",
                            Verdict::WrongAnswer, std::nullopt});
    }
    m.scores.set(objective, score, std::max(n_mistakes, 1), std::move(mistakes));
    return m;
}

}  // namespace

TEST_CASE("semantic mutation produces n tagged children of the parent") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    Candidate p = make_candidate("Classify the sentiment of the sentence.", {},
                                 OperatorTag::seed());

    SemanticResult result = semantic_mutate(p, 5, mock, 11);
    CHECK(result.children.size() + result.dropped_calls.size() == 5);
    CHECK(result.children.size() >= 4);  // duplicates of the parent are rare at this seed
    for (const OperatorChild& child : result.children) {
        CHECK(child.candidate.tag == OperatorTag::semantic());
        CHECK(child.candidate.parent_ids == std::vector<std::string>{p.id});
        CHECK(child.candidate.generation == 1);
        CHECK(child.candidate.id != p.id);
        CHECK(child.calls_used >= 1);
    }

    // Deterministic under the same seed.
    SemanticResult again = semantic_mutate(p, 5, mock, 11);
    REQUIRE(again.children.size() == result.children.size());
    for (std::size_t i = 0; i < again.children.size(); ++i) {
        CHECK(again.children[i].candidate.id == result.children[i].candidate.id);
    }

    CHECK_THROWS_AS(semantic_mutate(p, 0, mock, 1), PreconditionError);
}

TEST_CASE("semantic mutation regenerates parent-echoes once, then drops them") {
    ScriptedBackend backend;
    Candidate p = make_candidate("the prompt", {}, OperatorTag::seed());

    SECTION("echo then fresh text costs two calls") {
        backend.script("semantic", {"the prompt", "a new prompt"});
        SemanticResult r = semantic_mutate(p, 1, backend, 1);
        REQUIRE(r.children.size() == 1);
        CHECK(r.children[0].candidate.text == "a new prompt");
        CHECK(r.children[0].calls_used == 2);
        CHECK(r.dropped_calls.empty());
    }

    SECTION("double echo is dropped with a warning and two calls recorded") {
        backend.script("semantic", {"the prompt", "  the prompt  "});
        SemanticResult r = semantic_mutate(p, 1, backend, 1);
        CHECK(r.children.empty());
        REQUIRE(r.dropped_calls.size() == 1);
        CHECK(r.dropped_calls[0] == 2);
        REQUIRE(r.warnings.size() == 1);
        CHECK(r.warnings[0].find("dropped") != std::string::npos);
    }

    SECTION("empty outputs are treated like parent echoes") {
        backend.script("semantic", {"", "   ", ""});
        SemanticResult r = semantic_mutate(p, 1, backend, 1);
        CHECK(r.children.empty());
        REQUIRE(r.dropped_calls.size() == 1);
        CHECK(r.dropped_calls[0] == 2);
    }
}

TEST_CASE("collect_mistakes returns everything under the cap, a seeded sample above it") {
    PoolMember small = member_with_score("p", "kpi", 0.5, 4);
    std::vector<MistakeCase> got = collect_mistakes(small, kpi_spec(), 7);
    CHECK(got.size() == 4);
    CHECK(got == small.scores.mistakes.at("kpi"));

    PoolMember big = member_with_score("p", "kpi", 0.5, 25);
    std::vector<MistakeCase> capped = collect_mistakes(big, kpi_spec(), 7);
    CHECK(capped.size() == 10);

    // Sampled cases preserve original order and repeat under the same seed.
    const auto& all = big.scores.mistakes.at("kpi");
    std::size_t cursor = 0;
    for (const MistakeCase& m : capped) {
        while (cursor < all.size() && !(all[cursor] == m)) ++cursor;
        REQUIRE(cursor < all.size());  // order preserved
        ++cursor;
    }
    CHECK(collect_mistakes(big, kpi_spec(), 7) == capped);
    CHECK(collect_mistakes(big, kpi_spec(), 8) != capped);

    PoolMember unevaluated{make_candidate("q", {}, OperatorTag::seed()), {}};
    CHECK_THROWS_AS(collect_mistakes(unevaluated, kpi_spec(), 7), StateError);
}

TEST_CASE("generate_feedback requires evidence and apply_feedback tags the child") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    Candidate p = make_candidate("Answer the question.", {}, OperatorTag::seed());

    CHECK_THROWS_AS(generate_feedback(p, {}, kpi_spec(), mock, 1), PreconditionError);

    std::vector<MistakeCase> mistakes{
        {"kpi", "2+2?", "4", "5", Verdict::WrongAnswer, std::nullopt}};
    std::string feedback = generate_feedback(p, mistakes, kpi_spec(), mock, 1);
    CHECK_FALSE(feedback.empty());

    Candidate child = apply_feedback(p, feedback, kpi_spec(), mock, 2);
    CHECK(child.tag == OperatorTag::feedback("kpi"));
    CHECK(child.parent_ids == std::vector<std::string>{p.id});
    CHECK(child.text.find("Answer the question.") == 0);

    CHECK_THROWS_AS(apply_feedback(p, "   ", kpi_spec(), mock, 2), PreconditionError);
}

TEST_CASE("feedback_mutate doubles the imperfect subpopulation") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);

    Pool pool;
    for (int i = 0; i < 6; ++i) {
        pool.insert(member_with_score("prompt variant " + std::to_string(i), "kpi", 0.5, 2));
    }
    pool.insert(member_with_score("the flawless one", "kpi", 1.0, 0));

    FeedbackMutateStats stats;
    Pool children = feedback_mutate(pool, kpi_spec(), mock, 5, &stats);

    CHECK(stats.imperfect == 6);
    CHECK(stats.flawless == 1);
    CHECK(children.size() + static_cast<std::size_t>(stats.duplicates_dropped +
                                                     stats.empty_dropped) == 6);
    CHECK(children.size() == 6);  // mock improver output is parent + suffix: no collisions
    CHECK(children.generation_counter == pool.generation_counter + 1);
    for (const auto& [id, member] : children.members) {
        CHECK(member.candidate.tag == OperatorTag::feedback("kpi"));
        CHECK_FALSE(pool.contains(id));  // C' disjoint from C
    }
}

TEST_CASE("feedback_mutate drops duplicate and empty improver outputs") {
    ScriptedBackend backend;
    Pool pool;
    pool.insert(member_with_score("alpha prompt", "kpi", 0.5, 1));
    pool.insert(member_with_score("beta prompt", "kpi", 0.5, 1));
    pool.insert(member_with_score("gamma prompt", "kpi", 0.5, 1));

    // Three parents in id order: first child collides with an existing pool
    // member, second comes back empty, third survives.
    std::vector<std::string> ids = pool.ids();
    backend.script("feedback_generator", {"fix it", "fix it", "fix it"});
    backend.script("feedback_improver",
                   {pool.at(ids[1]).candidate.text, "   ", "a brand new prompt"});

    FeedbackMutateStats stats;
    Pool children = feedback_mutate(pool, kpi_spec(), backend, 5, &stats);

    CHECK(stats.imperfect == 3);
    CHECK(stats.duplicates_dropped == 1);
    CHECK(stats.empty_dropped == 1);
    CHECK(stats.dropped_parent_ids == std::vector<std::string>{ids[0], ids[1]});
    REQUIRE(children.size() == 1);
    CHECK(children.members.begin()->second.candidate.text == "a brand new prompt");
    CHECK(backend.transforms_served == 6);  // generator + improver per imperfect parent
}

TEST_CASE("feedback_mutate refuses imperfect candidates without evidence") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    Pool pool;
    PoolMember m{make_candidate("p", {}, OperatorTag::seed()), {}};
    m.scores.set("kpi", 0.5, 4, {});  // imperfect, but no recorded mistakes
    pool.insert(m);
    CHECK_THROWS_AS(feedback_mutate(pool, kpi_spec(), mock, 1), StateError);
}

TEST_CASE("crossover rejects a self-pair and tags offspring with both parents") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    Candidate a = make_candidate("First do this.", {}, OperatorTag::seed());
    Candidate b = make_candidate("Then do that.", {}, OperatorTag::seed());

    Candidate child = crossover(a, b, mock, 3);
    CHECK(child.tag == OperatorTag::crossover());
    CHECK(child.parent_ids == std::vector<std::string>{a.id, b.id});
    CHECK(child.text == "First do this. Then do that.");

    CHECK_THROWS_AS(crossover(a, a, mock, 3), PreconditionError);
}

TEST_CASE("crossover_phase crosses per-objective champions first, then random fill") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    StrategyConfig cfg;
    cfg.objectives = {kpi_spec(), security_spec()};
    cfg.max_crossover_offspring = 3;

    Pool pool;
    auto add = [&pool](const std::string& text, double kpi, double security) {
        PoolMember m{make_candidate(text, {}, OperatorTag::seed()), {}};
        m.scores.set("kpi", kpi, 4, {});
        m.scores.set("security", security, 3, {});
        pool.insert(m);
        return m.candidate.id;
    };
    std::string kpi_champ = add("kpi champion prompt", 1.0, 0.2);
    std::string sec_champ = add("security champion prompt", 0.1, 1.0);
    add("filler one", 0.5, 0.5);
    add("filler two", 0.4, 0.4);

    CrossoverStats stats;
    Pool offspring = crossover_phase(pool, mock, cfg, 17, &stats);

    // target = min(4, 3) = 3 attempts, champion pair first.
    CHECK(stats.pairs_attempted == 3);
    CHECK(offspring.size() + static_cast<std::size_t>(stats.duplicates_dropped +
                                                      stats.empty_dropped) == 3);
    bool champion_pair_seen = false;
    for (const auto& [id, member] : offspring.members) {
        REQUIRE(member.candidate.parent_ids.size() == 2);
        std::set<std::string> parents(member.candidate.parent_ids.begin(),
                                      member.candidate.parent_ids.end());
        if (parents == std::set<std::string>{kpi_champ, sec_champ}) champion_pair_seen = true;
    }
    CHECK(champion_pair_seen);

    // Deterministic pair selection and outputs under one seed.
    CrossoverStats stats2;
    Pool again = crossover_phase(pool, mock, cfg, 17, &stats2);
    CHECK(again.ids() == offspring.ids());
}

TEST_CASE("crossover_phase respects degenerate pools and the zero cap") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    StrategyConfig cfg;
    cfg.objectives = {kpi_spec(), security_spec()};

    Pool empty;
    CHECK(crossover_phase(empty, mock, cfg, 1).empty());

    Pool one;
    PoolMember m{make_candidate("solo", {}, OperatorTag::seed()), {}};
    m.scores.set("kpi", 0.5, 4, {});
    m.scores.set("security", 0.5, 3, {});
    one.insert(m);
    CHECK(crossover_phase(one, mock, cfg, 1).empty());

    Pool two = one;
    PoolMember m2{make_candidate("duet", {}, OperatorTag::seed()), {}};
    m2.scores.set("kpi", 0.6, 4, {});
    m2.scores.set("security", 0.6, 3, {});
    two.insert(m2);
    cfg.max_crossover_offspring = 0;
    CHECK(crossover_phase(two, mock, cfg, 1).empty());
}

TEST_CASE("crossover_phase caps attempts at the pool size") {
    TemplateStore store = repo_templates();
    MockTextBackend mock(store);
    StrategyConfig cfg;
    cfg.objectives = {kpi_spec(), security_spec()};
    cfg.max_crossover_offspring = 50;

    Pool pool;
    for (int i = 0; i < 3; ++i) {
        PoolMember m{make_candidate("prompt " + std::to_string(i), {}, OperatorTag::seed()), {}};
        m.scores.set("kpi", 0.2 * i, 4, {});
        m.scores.set("security", 0.1 * i, 3, {});
        pool.insert(m);
    }
    CrossoverStats stats;
    crossover_phase(pool, mock, cfg, 9, &stats);
    CHECK(stats.pairs_attempted == 3);  // min(|C|, cap) = 3
}
