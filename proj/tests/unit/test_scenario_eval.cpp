#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "unislide/metric_lab.hpp"
#include "unislide/scenario_eval.hpp"

using namespace unislide;
using namespace unislide::eval;

namespace {

Errc error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::precondition;
}

gateway::MockRule rule(const std::string& kind, const std::string& contains, const std::string& response) {
    gateway::MockRule r;
    r.kind = kind;
    r.contains = contains;
    r.responses = {response};
    return r;
}

struct Generated {
    task::Task task;
    task::Deck deck;
};

Generated generated(const std::string& name, const support::TempDir& dir) {
    auto t = task::load_task(support::fixture(name));
    auto deck = support::generate_deck(t, dir / name).deck;
    return {std::move(t), std::move(deck)};
}

}  // namespace

TEST(ScenarioFormulas, WeightedStateMean) {
    const std::vector<WeightedItemState> items = {{"a", 2, 1.0, ""}, {"b", 1, 0.5, ""}, {"c", 1, 0.0, ""}};
    EXPECT_NEAR(weighted_state_mean(items), 10.0 * 2.5 / 4.0, 1e-12);
    EXPECT_EQ(error_of([] { weighted_state_mean({}); }), Errc::empty_item_list);
    const std::vector<WeightedItemState> bad = {{"a", 0, 1.0, ""}};
    EXPECT_EQ(error_of([&] { weighted_state_mean(bad); }), Errc::non_positive_weight);
}

TEST(ScenarioFormulas, WeightedMeanMatchesDirectSum) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> w(0.1, 5);
    const double states[] = {0.0, 0.5, 1.0};
    for (int t = 0; t < 300; ++t) {
        std::vector<WeightedItemState> items(1 + rng() % 10);
        double num = 0, den = 0;
        for (auto& it : items) {
            it.weight = w(rng);
            it.state = states[rng() % 3];
            num += it.weight * it.state;
            den += it.weight;
        }
        const double v = weighted_state_mean(items);
        EXPECT_NEAR(v, 10.0 * num / den, 1e-9);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 10.0);
    }
}

TEST(ScenarioFormulas, StateMeanAndFaithfulness) {
    const std::vector<double> s = {1.0, 0.5, 0.0, 1.0};
    EXPECT_DOUBLE_EQ(state_mean(s), 6.25);
    EXPECT_EQ(error_of([] { state_mean({}); }), Errc::empty_item_list);
    std::vector<AtomicClaim> claims(4);
    claims[0].verdict = 1;
    claims[2].verdict = 1;
    claims[3].verdict = 1;
    EXPECT_DOUBLE_EQ(faithfulness(claims), 7.5);
    EXPECT_EQ(error_of([] { faithfulness({}); }), Errc::empty_item_list);
}

TEST(ScenarioFormulas, SourceCoverageUsesProductWeights) {
    const std::vector<ContributionState> items = {{"b1", 2, 1, 1.0}, {"i1", 1, 2, 0.0}, {"i2", 1, 1, 0.5}};
    EXPECT_NEAR(source_coverage(items), 10.0 * (2 + 0 + 0.5) / 5.0, 1e-12);
}

TEST(ScenarioFormulas, DeduplicationOnlyCountsApplicableGroups) {
    const std::vector<OverlapState> none = {{"g1", 1, false, 1.0}, {"g2", 3, false, 0.0}};
    EXPECT_FALSE(deduplication(none).has_value());
    const std::vector<OverlapState> some = {{"g1", 1, true, 1.0}, {"g2", 3, false, 0.0}, {"g3", 1, true, 0.5}};
    ASSERT_TRUE(deduplication(some).has_value());
    EXPECT_NEAR(*deduplication(some), 7.5, 1e-12);
}

TEST(ScenarioFormulas, MetricIdsPerSetting) {
    EXPECT_TRUE(scenario_metric_ids(task::Setting::vague_prompt).empty());
    EXPECT_EQ(scenario_metric_ids(task::Setting::long_doc).size(), 2u);
    EXPECT_EQ(scenario_metric_ids(task::Setting::multi_modal).size(), 3u);
    EXPECT_EQ(scenario_metric_ids(task::Setting::multi_source).size(), 3u);
}

class ScenarioFixtures : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new support::TempDir("scen");
        for (const char* name : {"long_doc", "multi_modal", "multi_source", "vague_prompt"})
            decks_->emplace(name, generated(name, *dir_));
    }
    static void TearDownTestSuite() {
        decks_->clear();
        delete dir_;
    }
    static const Generated& get(const std::string& name) { return decks_->at(name); }

    static ScenarioScores score(const std::string& name, gateway::MockScript script = {}) {
        auto judge = sim::make_mock(std::move(script));
        gateway::JudgeContext ctx;
        ctx.backend = judge.get();
        return score_scenario(get(name).deck, get(name).task, ctx);
    }

    static support::TempDir* dir_;
    static std::map<std::string, Generated>* decks_;
};
support::TempDir* ScenarioFixtures::dir_ = nullptr;
std::map<std::string, Generated>* ScenarioFixtures::decks_ = new std::map<std::string, Generated>();

TEST_F(ScenarioFixtures, VaguePromptHasNoScenarioMetrics) {
    const auto s = score("vague_prompt");
    EXPECT_TRUE(s.metrics.empty());
    EXPECT_TRUE(s.traces.empty());
}

TEST_F(ScenarioFixtures, EachSettingReportsItsMetrics) {
    for (const char* name : {"long_doc", "multi_modal", "multi_source"}) {
        const auto s = score(name);
        for (const auto& id : scenario_metric_ids(get(name).task.setting)) {
            const bool scored = s.metrics.count(id) > 0;
            const bool skipped = std::find(s.not_applicable.begin(), s.not_applicable.end(), id) != s.not_applicable.end();
            EXPECT_TRUE(scored != skipped) << name << " " << id;
        }
        for (const auto& [id, v] : s.metrics) {
            EXPECT_GE(v, 0.0) << id;
            EXPECT_LE(v, 10.0) << id;
        }
        EXPECT_FALSE(s.traces.empty());
    }
}

TEST_F(ScenarioFixtures, ScriptedCoverageStatesDriveTheScore) {
    gateway::MockScript script;
    script.rules.push_back(rule("coverage_point", "ITEM: p1", "STATE: 0"));
    script.rules.push_back(rule("coverage_point", "", "STATE: 1"));
    script.rules.push_back(rule("claim_verify", "", "VERDICT: unsupported\nSTATE: 0"));
    const auto s = score("long_doc", script);
    // p1 carries weight 2 of a total 5
    EXPECT_NEAR(s.metrics.at("key_coverage"), 10.0 * 3.0 / 5.0, 1e-12);
    if (s.metrics.count("faithfulness")) EXPECT_EQ(s.metrics.at("faithfulness"), 0.0);
}

TEST_F(ScenarioFixtures, ChartFidelityIsNotApplicableWithoutRequiredVisuals) {
    auto g = get("multi_modal");
    for (auto& v : g.task.annotations.critical_visuals) v.fidelity_required = false;
    auto judge = sim::make_mock({});
    gateway::JudgeContext ctx;
    ctx.backend = judge.get();
    const auto s = score_scenario(g.deck, g.task, ctx);
    EXPECT_FALSE(s.metrics.count("chart_fidelity"));
    EXPECT_NE(std::find(s.not_applicable.begin(), s.not_applicable.end(), "chart_fidelity"), s.not_applicable.end());
}

TEST_F(ScenarioFixtures, AlignmentIsZeroWithoutVisuals) {
    auto g = get("multi_modal");
    const auto plain = support::markup_deck({"<div class=\"slide\"><h1>Urban heat</h1></div>",
                                             "<div class=\"slide\"><p>Thanks</p></div>"});
    auto judge = sim::make_mock({});
    gateway::JudgeContext ctx;
    ctx.backend = judge.get();
    const auto s = score_scenario(plain, g.task, ctx);
    EXPECT_EQ(s.metrics.at("alignment"), 0.0);
    EXPECT_FALSE(s.warnings.empty());
}

TEST_F(ScenarioFixtures, MissingAnnotationsAreRejected) {
    auto judge = sim::make_mock({});
    gateway::JudgeContext ctx;
    ctx.backend = judge.get();
    for (const char* name : {"long_doc", "multi_modal", "multi_source"}) {
        auto g = get(name);
        g.task.annotations = {};
        EXPECT_EQ(error_of([&] { score_scenario(g.deck, g.task, ctx); }), Errc::missing_annotations) << name;
    }
}

TEST_F(ScenarioFixtures, PerturbationsMoveOnlyTheirMetric) {
    struct Case {
        const char* fixture;
        lab::PerturbationKind kind;
        const char* metric;
    };
    const Case cases[] = {
        {"long_doc", lab::PerturbationKind::delete_key_segments, "key_coverage"},
        {"multi_modal", lab::PerturbationKind::replace_visuals, "utilization"},
        {"multi_source", lab::PerturbationKind::inject_redundancy, "deduplication"},
    };
    for (const auto& c : cases) {
        const auto& g = get(c.fixture);
        const auto base = score(c.fixture);
        lab::PerturbationSpec spec;
        spec.kind = c.kind;
        spec.intensity = 0.5;
        const auto p = lab::perturb_deck(g.deck, g.task, spec);
        auto judge = sim::make_mock({});
        gateway::JudgeContext ctx;
        ctx.backend = judge.get();
        const auto after = score_scenario(p.deck, g.task, ctx);
        ASSERT_TRUE(base.metrics.count(c.metric)) << c.fixture;
        ASSERT_TRUE(after.metrics.count(c.metric)) << c.fixture;
        EXPECT_LT(after.metrics.at(c.metric), base.metrics.at(c.metric)) << c.fixture;
    }
}
