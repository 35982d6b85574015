#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "unislide/html.hpp"
#include "unislide/metric_lab.hpp"

using namespace unislide;
using namespace unislide::lab;

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

double ref_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Distinct values only: 1 - 6 sum d^2 / (n (n^2 - 1)).
double ref_spearman_distinct(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto rank = [&](const std::vector<double>& v, std::size_t i) {
        double r = 1;
        for (std::size_t j = 0; j < n; ++j)
            if (v[j] < v[i]) r += 1;
        return r;
    };
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = rank(x, i) - rank(y, i);
        d2 += d * d;
    }
    const double dn = static_cast<double>(n);
    return 1 - 6 * d2 / (dn * (dn * dn - 1));
}

PreferenceRecord pair(char choice, std::map<std::string, double> a, std::map<std::string, double> b) {
    PreferenceRecord r;
    r.pair_id = "p";
    r.human_choice = choice;
    r.scores_a = std::move(a);
    r.scores_b = std::move(b);
    return r;
}

std::vector<PreferenceRecord> random_records(std::mt19937& rng, const std::vector<std::string>& metrics, int n) {
    std::uniform_real_distribution<double> d(0, 10);
    std::vector<PreferenceRecord> out;
    for (int i = 0; i < n; ++i) {
        std::map<std::string, double> a, b;
        for (const auto& m : metrics) {
            a[m] = std::round(d(rng));
            b[m] = std::round(d(rng));
        }
        out.push_back(pair(rng() % 2 ? 'A' : 'B', a, b));
    }
    return out;
}

struct Generated {
    task::Task task;
    task::Deck deck;
};

}  // namespace

TEST(Stats, PearsonMatchesClosedForm) {
    std::mt19937 rng(21);
    std::normal_distribution<double> d(0, 1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(3 + rng() % 20), y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = d(rng);
            y[i] = 0.5 * x[i] + d(rng);
        }
        EXPECT_NEAR(pearson(x, y), ref_pearson(x, y), 1e-9);
    }
    EXPECT_EQ(error_of([] { pearson({1, 2}, {1, 2, 3}); }), Errc::arity);
    EXPECT_EQ(error_of([] { pearson({1}, {1}); }), Errc::arity);
    EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
}

TEST(Stats, SpearmanMatchesRankDifferenceFormula) {
    std::mt19937 rng(22);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 3 + rng() % 15;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(i) + 0.001 * static_cast<double>(rng() % 1000) / 1000.0;
            y[i] = static_cast<double>(rng() % 100000) / 7.0 + static_cast<double>(i) * 1e-7;
        }
        std::shuffle(x.begin(), x.end(), rng);
        EXPECT_NEAR(spearman(x, y), ref_spearman_distinct(x, y), 1e-9);
    }
    EXPECT_EQ(error_of([] { spearman({1, 2}, {2, 1}); }), Errc::arity);
}

TEST(Stats, MeanRanksAverageTies) {
    EXPECT_EQ(mean_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
    EXPECT_EQ(mean_ranks({1, 1, 1}), (std::vector<double>{2, 2, 2}));
}

TEST(Stats, SpearmanIsInvariantUnderMonotoneMaps) {
    const std::vector<double> x = {3, 1, 4, 1.5, 9, 2.6};
    const std::vector<double> y = {2, 7, 1, 8, 2.8, 1.8};
    std::vector<double> ex;
    for (double v : x) ex.push_back(std::exp(v));
    EXPECT_NEAR(spearman(x, y), spearman(ex, y), 1e-12);
    EXPECT_NEAR(spearman(x, x), 1.0, 1e-12);
}

TEST(Selection, AgreementRateCountsTiesAsHalf) {
    const std::vector<PreferenceRecord> r = {pair('A', {{"m", 5}}, {{"m", 3}}), pair('B', {{"m", 5}}, {{"m", 3}}),
                                             pair('A', {{"m", 4}}, {{"m", 4}}), pair('B', {{"m", 1}}, {{"m", 2}})};
    EXPECT_DOUBLE_EQ(agreement_rate(r, "m"), (1 + 0 + 0.5 + 1) / 4.0);
    EXPECT_EQ(error_of([] { agreement_rate({}, "m"); }), Errc::empty_item_list);
    EXPECT_EQ(error_of([&] { agreement_rate(r, "zz"); }), Errc::schema_violation);
    EXPECT_DOUBLE_EQ(combination_agreement(r, {}), 0.5);
    EXPECT_DOUBLE_EQ(combination_agreement(r, {"m"}), agreement_rate(r, "m"));
}

TEST(Selection, GreedyMatchesExhaustiveOnDesignedFixture) {
    // m1 agrees on 6 of 8 pairs, m2 fixes two of m1's misses, m3 is noise
    std::vector<PreferenceRecord> r;
    for (int i = 0; i < 6; ++i) r.push_back(pair('A', {{"m1", 8}, {"m2", 5}, {"m3", 1}}, {{"m1", 4}, {"m2", 5}, {"m3", 9}}));
    for (int i = 0; i < 2; ++i) r.push_back(pair('A', {{"m1", 4}, {"m2", 9}, {"m3", 5}}, {{"m1", 5}, {"m2", 1}, {"m3", 5}}));
    const std::vector<std::string> cands = {"m1", "m2", "m3"};
    const auto steps = greedy_frontier_select(cands, r);
    ASSERT_FALSE(steps.empty());
    EXPECT_EQ(steps[0].metric, "m1");
    std::vector<std::string> chosen;
    for (const auto& s : steps) {
        chosen.push_back(s.metric);
        EXPECT_GT(s.gain, 0.0);
    }
    double best = 0;
    for (int mask = 1; mask < 8; ++mask) {
        std::vector<std::string> subset;
        for (int i = 0; i < 3; ++i)
            if (mask & (1 << i)) subset.push_back(cands[static_cast<std::size_t>(i)]);
        best = std::max(best, combination_agreement(r, subset));
    }
    EXPECT_NEAR(combination_agreement(r, chosen), best, 1e-12);
    EXPECT_NEAR(steps.back().agreement, best, 1e-12);
}

TEST(Selection, GreedyStopsAtALocalOptimum) {
    std::mt19937 rng(23);
    const std::vector<std::string> metrics = {"a", "b", "c", "d", "e"};
    for (int t = 0; t < 100; ++t) {
        const auto r = random_records(rng, metrics, 12);
        const auto steps = greedy_frontier_select(metrics, r);
        std::vector<std::string> chosen;
        double prev = 0.5;
        for (const auto& s : steps) {
            chosen.push_back(s.metric);
            EXPECT_NEAR(s.agreement - prev, s.gain, 1e-12);
            prev = s.agreement;
        }
        const double final_agreement = combination_agreement(r, chosen);
        for (const auto& m : metrics) {
            if (std::find(chosen.begin(), chosen.end(), m) != chosen.end()) continue;
            auto more = chosen;
            more.push_back(m);
            EXPECT_LE(combination_agreement(r, more), final_agreement + 1e-12);
        }
    }
}

TEST(Selection, BudgetLimitsTheFrontier) {
    std::vector<PreferenceRecord> r;
    for (int i = 0; i < 4; ++i) r.push_back(pair('A', {{"cheap", 6}, {"dear", 9}}, {{"cheap", 5}, {"dear", 1}}));
    r.push_back(pair('B', {{"cheap", 6}, {"dear", 1}}, {{"cheap", 5}, {"dear", 9}}));
    const auto unlimited = greedy_frontier_select({"cheap", "dear"}, r, {{"cheap", 1}, {"dear", 5}});
    ASSERT_FALSE(unlimited.empty());
    EXPECT_EQ(unlimited[0].metric, "dear");
    const auto tight = greedy_frontier_select({"cheap", "dear"}, r, {{"cheap", 1}, {"dear", 5}}, 2.0);
    ASSERT_EQ(tight.size(), 1u);
    EXPECT_EQ(tight[0].metric, "cheap");
}

TEST(Selection, PruneCorrelatedKeepsPriorityOrder) {
    const Matrix scores = {{1, 2, 9, 5}, {2, 4, 7, 5}, {3, 6, 8, 5}, {4, 8.5, 1, 5}};
    const auto c = pairwise_correlation(scores);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_NEAR(c[0][1], ref_pearson({1, 2, 3, 4}, {2, 4, 6, 8.5}), 1e-12);
    EXPECT_NEAR(c[1][0], c[0][1], 1e-15);
    EXPECT_TRUE(std::isnan(c[0][3]));
    const auto kept = prune_correlated({"m0", "m1", "m2", "m3"}, c, 0.85);
    EXPECT_EQ(kept, (std::vector<std::string>{"m0", "m2", "m3"}));
    EXPECT_EQ(prune_correlated({"m1", "m0", "m2", "m3"}, c).front(), "m1");
    EXPECT_EQ(error_of([] { pairwise_correlation({{1, 2}, {2, 3}}); }), Errc::arity);
}

TEST(Protocol, DeltaPercentAndReliability) {
    EXPECT_DOUBLE_EQ(delta_percent(8, 6), -25.0);
    EXPECT_DOUBLE_EQ(delta_percent(-4, -2), -50.0);
    EXPECT_EQ(error_of([] { delta_percent(0, 3); }), Errc::division_by_zero);
    EXPECT_DOUBLE_EQ(reliability_std({7, 7, 7}), 0.0);
    EXPECT_NEAR(reliability_std({6, 8}), 1.0, 1e-12);
    EXPECT_EQ(error_of([] { reliability_std({7}); }), Errc::arity);
}

TEST(Protocol, JudgeRobustnessUnderOffsetAndReversal) {
    const std::vector<double> a = {6.1, 7.4, 5.2, 8.8};
    std::vector<double> b;
    for (double v : a) b.push_back(v + 0.7);
    const auto r = judge_robustness(a, b);
    EXPECT_NEAR(r.spearman, 1.0, 1e-12);
    EXPECT_NEAR(r.mean_delta, 0.7, 1e-12);
    EXPECT_NEAR(r.std_delta, 0.0, 1e-12);
    const auto rev = judge_robustness(a, {4, 3, 5, 1});
    EXPECT_NEAR(rev.spearman, -1.0, 1e-12);
    EXPECT_EQ(error_of([] { judge_robustness({1, 2}, {1, 2}); }), Errc::arity);
}

TEST(Perturbation, KindsAreLegalPerSetting) {
    EXPECT_TRUE(kinds_for(task::Setting::vague_prompt).empty());
    EXPECT_EQ(kinds_for(task::Setting::long_doc).size(), 2u);
    EXPECT_EQ(kinds_for(task::Setting::multi_modal).size(), 1u);
    EXPECT_EQ(kinds_for(task::Setting::multi_source).size(), 3u);
    for (auto k : {PerturbationKind::delete_key_segments, PerturbationKind::corrupt_facts,
                   PerturbationKind::replace_visuals, PerturbationKind::drop_source_content,
                   PerturbationKind::weaken_integration, PerturbationKind::inject_redundancy})
        EXPECT_EQ(parse_perturbation_kind(to_string(k)), k);
    EXPECT_FALSE(parse_perturbation_kind("shuffle").has_value());
}

class PerturbFixtures : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new support::TempDir("perturb");
        for (const char* name : {"long_doc", "multi_modal", "multi_source"}) {
            auto t = task::load_task(support::fixture(name));
            auto deck = support::generate_deck(t, *dir_ / name).deck;
            decks_->emplace(name, Generated{std::move(t), std::move(deck)});
        }
    }
    static void TearDownTestSuite() {
        decks_->clear();
        delete dir_;
    }
    static const Generated& get(const std::string& name) { return decks_->at(name); }

    static support::TempDir* dir_;
    static std::map<std::string, Generated>* decks_;
};
support::TempDir* PerturbFixtures::dir_ = nullptr;
std::map<std::string, Generated>* PerturbFixtures::decks_ = new std::map<std::string, Generated>();

TEST_F(PerturbFixtures, EditsAreLocalized) {
    for (const char* name : {"long_doc", "multi_modal", "multi_source"}) {
        const auto& g = get(name);
        for (auto kind : kinds_for(g.task.setting)) {
            PerturbationSpec spec;
            spec.kind = kind;
            spec.intensity = 1.0;
            const auto p = perturb_deck(g.deck, g.task, spec);
            ASSERT_EQ(p.deck.slides.size(), g.deck.slides.size());
            std::set<std::size_t> modified;
            for (const auto& i : p.manifest["modified_slides"]) modified.insert(i.get<std::size_t>());
            EXPECT_FALSE(modified.empty()) << name << " " << to_string(kind);
            for (std::size_t i = 0; i < p.deck.slides.size(); ++i) {
                if (modified.count(i)) {
                    EXPECT_NE(p.deck.slides[i].html, g.deck.slides[i].html);
                    EXPECT_TRUE(html::parse(*p.deck.slides[i].html).errors.empty());
                } else {
                    EXPECT_EQ(p.deck.slides[i].html, g.deck.slides[i].html) << name << " slide " << i;
                }
            }
            EXPECT_EQ(p.manifest["kind"], std::string(to_string(kind)));
            EXPECT_EQ(p.manifest["source_deck"], g.deck.id);
        }
    }
}

TEST_F(PerturbFixtures, CorruptFactsAppendsTheClause) {
    const auto& g = get("long_doc");
    PerturbationSpec spec;
    spec.kind = PerturbationKind::corrupt_facts;
    spec.target_ids = {"p2"};
    const auto p = perturb_deck(g.deck, g.task, spec);
    bool found = false;
    for (const auto& s : p.deck.slides) found |= s.html->find(kFabricatedClause) != std::string::npos;
    EXPECT_TRUE(found);
}

TEST_F(PerturbFixtures, ReplaceVisualsUsesThePlaceholder) {
    const auto& g = get("multi_modal");
    PerturbationSpec spec;
    spec.kind = PerturbationKind::replace_visuals;
    spec.target_ids = {"fig1"};
    const auto p = perturb_deck(g.deck, g.task, spec);
    bool found = false;
    for (const auto& s : p.deck.slides) found |= s.html->find(kPlaceholderImage) != std::string::npos;
    EXPECT_TRUE(found);
    support::TempDir out("saved");
    save_perturbed(p, out / "deck");
    EXPECT_TRUE(std::filesystem::exists(out / "deck" / kPlaceholderImage));
    const auto manifest = nlohmann::json::parse(task::read_file(out / "deck" / "perturbation.json"));
    EXPECT_EQ(manifest["targets"], nlohmann::json::array({"fig1"}));
    EXPECT_EQ(task::load_deck(out / "deck").slides.size(), p.deck.slides.size());
}

TEST_F(PerturbFixtures, BadSpecsAreRejected) {
    const auto& g = get("long_doc");
    PerturbationSpec spec;
    spec.kind = PerturbationKind::delete_key_segments;
    spec.target_ids = {"p99"};
    EXPECT_EQ(error_of([&] { perturb_deck(g.deck, g.task, spec); }), Errc::target_not_found);
    spec.kind = PerturbationKind::inject_redundancy;
    spec.target_ids = {};
    EXPECT_EQ(error_of([&] { perturb_deck(g.deck, g.task, spec); }), Errc::precondition);
    spec.kind = PerturbationKind::delete_key_segments;
    spec.intensity = 0;
    EXPECT_EQ(error_of([&] { perturb_deck(g.deck, g.task, spec); }), Errc::precondition);
    const auto blank = support::markup_deck({"<div class=\"slide\"><p>Nothing relevant</p></div>"});
    spec.intensity = 1.0;
    EXPECT_EQ(error_of([&] { perturb_deck(blank, g.task, spec); }), Errc::target_not_found);
}

TEST_F(PerturbFixtures, ProtocolReportCoversEveryLegalKind) {
    const auto& g = get("multi_source");
    auto judge_a = sim::make_mock({});
    gateway::MockScript shifted;
    shifted.seed = 3;
    auto judge_b = sim::make_mock(shifted);
    std::vector<task::Deck> decks = {g.deck};
    for (const char* cfg : {"a", "c"}) {
        support::TempDir d("proto");
        decks.push_back(support::generate_deck(g.task, d / cfg, cfg).deck);
        decks.back().id = cfg;
    }
    ProtocolOptions o;
    o.evaluation.runs = 2;
    const auto r = validate_protocol(g.task, decks, *judge_a, judge_b.get(), o);
    EXPECT_EQ(r.perturbations.size(), 3u);
    for (const auto& p : r.perturbations) EXPECT_TRUE(p.error.empty()) << p.error;
    EXPECT_EQ(r.reliability, 0.0);
    ASSERT_TRUE(r.robustness.has_value());
    EXPECT_EQ(r.judge_a_avgs.size(), 3u);

    const auto md = protocol_markdown(r);
    EXPECT_NE(md.find("## Validity"), std::string::npos);
    EXPECT_NE(md.find("inject_redundancy"), std::string::npos);
    EXPECT_NE(md.find("## Robustness"), std::string::npos);
    const auto j = to_json(r);
    EXPECT_EQ(j["perturbations"].size(), 3u);
}
