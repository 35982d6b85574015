// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria (0 when everything passes).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "test_support.hpp"
#include "unislide/evaluation.hpp"
#include "unislide/metric_lab.hpp"
#include "unislide/narrative.hpp"
#include "unislide/preference.hpp"
#include "unislide/scenario_eval.hpp"
#include "unislide/shared_eval.hpp"
#include "unislide/style.hpp"
#include "unislide/text.hpp"
#include "unislide/visual_design.hpp"

using namespace unislide;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kFormulaTol = 1e-9;
constexpr double kTableTol = 0.1;
constexpr int kTableRowsRequired = 6;
constexpr double kFormulaSeconds = 5.0;
constexpr double kSelectivitySeconds = 30.0;
constexpr double kSelectivityRatio = 2.0;
constexpr double kJitter = 0.3;
constexpr double kJitterStdMax = 0.3;
constexpr double kRobustTol = 1e-9;
constexpr std::size_t kMaxPassages = 12;
constexpr std::size_t kMaxChars = 2000;
constexpr double kCoarseThreshold = 0.30;
constexpr std::size_t kMaxFiguresPerPage = 5;
constexpr int kHtmlRetries = 3;
constexpr int kRefineCap = 5;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int decimals = 4) { return text::fixed(v, decimals); }

// ---------------------------------------------------------------------------
// 1. Formula oracle

Outcome formula_oracle() {
    Outcome o;
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> count(1, 25);
    std::uniform_real_distribution<double> weight(0.05, 5.0);
    std::uniform_int_distribution<int> tern(0, 2);
    std::uniform_int_distribution<int> bin(0, 1);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    auto check = [&](double got, double want, const char* metric) {
        const double err = std::abs(got - want);
        worst = std::max(worst, err);
        if (err > kFormulaTol) o.require(false, std::string(metric) + " off by " + num(err, 12));
    };
    auto weighted_brute = [](const std::vector<double>& w, const std::vector<double>& s) {
        double num = 0, den = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            num += w[i] * s[i];
            den += w[i];
        }
        return num / den * 10.0;
    };
    auto mean_brute = [](const std::vector<double>& s) {
        double total = 0;
        for (double v : s) total += v;
        return total / static_cast<double>(s.size()) * 10.0;
    };

    for (int set = 0; set < 1000; ++set) {
        // key_coverage, integration and chart_fidelity: weighted state means
        for (const char* metric : {"key_coverage", "integration", "chart_fidelity"}) {
            const int n = count(rng);
            std::vector<eval::WeightedItemState> items;
            std::vector<double> w, s;
            const bool binary = std::string(metric) == "chart_fidelity";
            for (int i = 0; i < n; ++i) {
                w.push_back(weight(rng));
                s.push_back(binary ? bin(rng) : tern(rng) * 0.5);
                items.push_back({"i" + std::to_string(i), w.back(), s.back(), ""});
            }
            check(eval::weighted_state_mean(items), weighted_brute(w, s), metric);
        }
        // utilization (binary) and alignment (ternary): unweighted means
        {
            const int n = count(rng);
            std::vector<double> u, a;
            for (int i = 0; i < n; ++i) u.push_back(bin(rng));
            for (int i = 0; i < n; ++i) a.push_back(tern(rng) * 0.5);
            check(eval::state_mean(u), mean_brute(u), "utilization");
            check(eval::state_mean(a), mean_brute(a), "alignment");
        }
        // faithfulness
        {
            const int n = count(rng);
            std::vector<eval::AtomicClaim> claims;
            int supported = 0;
            for (int i = 0; i < n; ++i) {
                eval::AtomicClaim c;
                c.verdict = bin(rng);
                supported += c.verdict;
                claims.push_back(c);
            }
            check(eval::faithfulness(claims), 10.0 * supported / n, "faithfulness");
        }
        // source_coverage with composite weights
        {
            const int n = count(rng);
            std::vector<eval::ContributionState> items;
            double num = 0, den = 0;
            for (int i = 0; i < n; ++i) {
                eval::ContributionState c{"p" + std::to_string(i), weight(rng), weight(rng), tern(rng) * 0.5};
                num += c.source_weight * c.point_weight * c.state;
                den += c.source_weight * c.point_weight;
                items.push_back(c);
            }
            check(eval::source_coverage(items), num / den * 10.0, "source_coverage");
        }
        // deduplication over applicable groups only
        {
            const int n = count(rng);
            std::vector<eval::OverlapState> groups;
            double num = 0, den = 0;
            for (int i = 0; i < n; ++i) {
                eval::OverlapState g{"g" + std::to_string(i), weight(rng), bin(rng) == 1, tern(rng) * 0.5};
                if (g.applicable) {
                    num += g.weight * g.state;
                    den += g.weight;
                }
                groups.push_back(g);
            }
            const auto got = eval::deduplication(groups);
            if (den == 0) {
                o.require(!got.has_value(), "deduplication should be not-applicable");
            } else if (!got) {
                o.require(false, "deduplication missing");
            } else {
                check(*got, num / den * 10.0, "deduplication");
            }
        }
        // visual integrity
        {
            const int n = count(rng);
            eval::DefectFlagSheet flags;
            int errors = 0;
            for (int i = 0; i < n; ++i) {
                const bool bad = bin(rng) == 1;
                errors += bad;
                flags.has_critical_defect.push_back(bad);
            }
            check(eval::visual_integrity(flags), 10.0 * (1.0 - static_cast<double>(errors) / n), "visual_integrity");
        }
    }
    const double elapsed = seconds_since(t0);
    o.require(elapsed < kFormulaSeconds, "took " + num(elapsed, 2) + " s");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "1000 sets, max error " + num(worst, 14) + ", " +
               num(elapsed, 3) + " s";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Published table rows

struct TableRow {
    const char* label;
    double shared;
    std::vector<double> scenario;
    double avg;
};

Outcome table_rows() {
    // Shared, scenario values and Avg as printed (two decimals).
    const std::vector<TableRow> rows = {
        {"NotebookLM vague", 8.47, {}, 8.47},
        {"Manus vague", 9.40, {}, 9.40},
        {"NotebookLM multi-source", 8.44, {4.29, 5.22, 10.00}, 7.71},
        {"Manus multi-source", 8.35, {7.79, 7.78, 7.92}, 8.16},
        {"Canvas multi-source", 7.14, {6.38, 3.70, 7.40}, 6.65},
        {"Kimi multi-source", 5.07, {7.30, 6.89, 10.00}, 6.19},
        {"Skywork multi-source", 6.48, {6.37, 4.93, 8.33}, 6.50},
        {"Ours-Gemini multi-source", 6.87, {7.92, 7.76, 9.38}, 7.43},
        {"Ours-Qwen multi-source", 6.92, {7.60, 8.04, 7.88}, 7.26},
        {"Human-Reference multi-source", 8.92, {7.15, 7.51, 10.00}, 8.66},
        {"NotebookLM long-doc", 8.33, {7.47, 3.88}, 7.57},
        {"Manus long-doc", 9.49, {9.55, 6.26}, 9.04},
        {"Canvas long-doc", 8.81, {8.55, 5.39}, 8.28},
        {"Kimi long-doc", 6.96, {9.48, 8.28}, 7.50},
        {"Skywork long-doc", 7.13, {5.11, 3.83}, 6.37},
        {"AutoSlides long-doc", 4.78, {4.90, 3.93}, 4.67},
        {"EvoPresent long-doc", 5.23, {4.74, 1.48}, 4.63},
        {"Ours-Gemini long-doc", 6.70, {7.40, 5.01}, 6.71},
        {"Ours-Qwen long-doc", 6.79, {6.96, 5.00}, 6.56},
        {"Human-Reference long-doc", 9.20, {9.39, 10.00}, 9.34},
        {"NotebookLM multi-modal", 9.60, {8.83, 8.83, 6.00}, 9.02},
        {"Manus multi-modal", 9.13, {4.33, 3.87, 8.40}, 7.78},
        {"Canvas multi-modal", 7.67, {1.50, 1.92, 6.20}, 6.00},
        {"Kimi multi-modal", 5.26, {4.17, 3.12, 8.00}, 5.20},
        {"Skywork multi-modal", 8.84, {3.23, 2.17, 8.00}, 7.20},
        {"AutoSlides multi-modal", 7.06, {9.50, 9.50, 8.75}, 7.88},
        {"EvoPresent multi-modal", 7.66, {7.93, 7.93, 6.60}, 7.60},
        {"Ours-Gemini multi-modal", 8.14, {8.03, 8.97, 8.00}, 8.25},
        {"Ours-Qwen multi-modal", 7.41, {8.33, 7.37, 7.40}, 7.52},
        {"Human-Reference multi-modal", 8.74, {8.08, 8.85, 8.50}, 8.64},
    };
    Outcome o;
    int matched = 0;
    std::vector<std::string> misses;
    for (const auto& r : rows) {
        const std::vector<double> shared(5, r.shared);
        const double avg = eval::setting_avg(shared, r.scenario);
        if (std::abs(avg - r.avg) <= kTableTol) {
            ++matched;
        } else {
            misses.push_back(std::string(r.label) + " " + num(avg, 2) + " vs " + num(r.avg, 2));
        }
    }
    o.require(matched >= kTableRowsRequired, "only " + std::to_string(matched) + " rows matched");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + std::to_string(matched) + "/" +
               std::to_string(rows.size()) + " rows within 0.1";
    if (!misses.empty()) o.detail += " (outside: " + text::join(misses, ", ") + ")";
    return o;
}

// ---------------------------------------------------------------------------
// 3. Perturbation selectivity

task::ScoreReport score(const task::Deck& deck, const task::Task& t, std::uint64_t seed = 7) {
    gateway::MockScript script;
    script.seed = seed;
    auto judge = sim::make_mock(script);
    eval::EvaluationOptions options;
    options.runs = 1;
    options.seed = seed;
    return eval::evaluate_deck(deck, t, *judge, options);
}

std::map<std::string, double> all_metrics(const task::ScoreReport& r) {
    auto m = r.shared;
    m.insert(r.scenario.begin(), r.scenario.end());
    m["shared_mean"] = r.shared_mean;
    return m;
}

Outcome selectivity() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    support::TempDir tmp("sel");
    std::vector<std::string> notes;

    auto run = [&](const char* fixture, lab::PerturbationKind kind) {
        const auto t = task::load_task(support::fixture(fixture));
        const auto deck = support::generate_deck(t, tmp / fixture).deck;
        lab::PerturbationSpec spec;
        spec.kind = kind;
        const auto perturbed = lab::perturb_deck(deck, t, spec);
        return std::make_pair(all_metrics(score(deck, t)), all_metrics(score(perturbed.deck, t)));
    };
    auto delta = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b,
                    const std::string& k) { return lab::delta_percent(a.at(k), b.at(k)); };

    {
        const auto [orig, pert] = run("long_doc", lab::PerturbationKind::delete_key_segments);
        const double kc = std::abs(delta(orig, pert, "key_coverage"));
        const double sh = std::abs(delta(orig, pert, "shared_mean"));
        o.require(kc > 0 && kc >= kSelectivityRatio * sh,
                  "delete_key_segments: key_coverage " + num(kc, 2) + "% vs shared " + num(sh, 2) + "%");
        notes.push_back("delete_key_segments |Δ| key_coverage " + num(kc, 2) + "% vs shared " + num(sh, 2) + "%");
    }
    {
        const auto [orig, pert] = run("multi_modal", lab::PerturbationKind::replace_visuals);
        const std::set<std::string> targeted = {"utilization", "alignment", "chart_fidelity"};
        std::vector<std::string> moved;
        for (const auto& [k, v] : orig) {
            const bool changed = std::abs(pert.at(k) - v) > 1e-12;
            if (changed) moved.push_back(k);
            if (targeted.count(k))
                o.require(pert.at(k) < v, "replace_visuals did not lower " + k);
            else
                o.require(!changed, "replace_visuals moved " + k);
        }
        notes.push_back("replace_visuals moved {" + text::join(moved, ",") + "}");
    }
    {
        const auto [orig, pert] = run("multi_source", lab::PerturbationKind::inject_redundancy);
        std::vector<std::string> moved;
        for (const auto& [k, v] : orig) {
            const bool changed = std::abs(pert.at(k) - v) > 1e-12;
            if (changed) moved.push_back(k);
            if (k == "deduplication")
                o.require(pert.at(k) < v, "inject_redundancy did not lower deduplication");
            else
                o.require(!changed, "inject_redundancy moved " + k);
        }
        notes.push_back("inject_redundancy moved {" + text::join(moved, ",") + "}");
    }
    const double elapsed = seconds_since(t0);
    o.require(elapsed < kSelectivitySeconds, "took " + num(elapsed, 2) + " s");
    notes.push_back(num(elapsed, 2) + " s");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + text::join(notes, "; ");
    return o;
}

// ---------------------------------------------------------------------------
// 4. Reliability

Outcome reliability() {
    Outcome o;
    support::TempDir tmp("rel");
    const auto t = task::load_task(support::fixture("long_doc"));
    const auto deck = support::generate_deck(t, tmp / "deck").deck;
    auto repeat_std = [&](double jitter) {
        gateway::MockScript script;
        script.seed = 11;
        script.jitter = jitter;
        auto judge = sim::make_mock(script);
        eval::EvaluationOptions options;
        options.runs = 3;
        options.seed = 11;
        const auto report = eval::evaluate_deck(deck, t, *judge, options);
        return std::make_pair(report.setting_avg_std, lab::reliability_std(report.run_setting_avgs));
    };
    const auto [det, det_lab] = repeat_std(0.0);
    o.require(det == 0.0 && det_lab == 0.0, "deterministic std " + num(det, 12));
    const auto [jit, jit_lab] = repeat_std(kJitter);
    o.require(jit <= kJitterStdMax, "jitter std " + num(jit, 4));
    o.require(jit > 0.0, "jitter did not reach the scores");
    o.require(std::abs(jit - jit_lab) < 1e-12, "report std disagrees with reliability_std");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "deterministic std " + num(det, 6) + ", ±0.3 jitter std " +
               num(jit, 4);
    return o;
}

// ---------------------------------------------------------------------------
// 5. Robustness statistics

double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                if (w < v[i]) less += 1;
                if (w == v[i]) equal += 1;
            }
            r[i] = less + (equal + 1) / 2.0;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// ICC(2,k) from the residuals of the two-way additive fit; ratings[rater][item].
double anova_icc2k(const std::vector<std::vector<double>>& ratings) {
    const std::size_t k = ratings.size(), n = ratings[0].size();
    std::vector<double> item_mean(n, 0), rater_mean(k, 0);
    double grand = 0;
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            item_mean[i] += ratings[j][i] / static_cast<double>(k);
            rater_mean[j] += ratings[j][i] / static_cast<double>(n);
            grand += ratings[j][i] / static_cast<double>(n * k);
        }
    double ssr = 0, ssc = 0, sse = 0;
    for (std::size_t i = 0; i < n; ++i) ssr += static_cast<double>(k) * std::pow(item_mean[i] - grand, 2);
    for (std::size_t j = 0; j < k; ++j) ssc += static_cast<double>(n) * std::pow(rater_mean[j] - grand, 2);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) sse += std::pow(ratings[j][i] - item_mean[i] - rater_mean[j] + grand, 2);
    const double msr = ssr / static_cast<double>(n - 1);
    const double msc = ssc / static_cast<double>(k - 1);
    const double mse = sse / static_cast<double>((n - 1) * (k - 1));
    return (msr - mse) / (msr + (msc - mse) / static_cast<double>(n));
}

Outcome robustness() {
    Outcome o;
    // Two scripted judges: B scores every system exactly 0.37 above A.
    constexpr double kOffset = 0.37;
    const std::vector<double> judge_a = {6.12, 7.85, 5.40, 8.93, 7.01, 4.66};
    std::vector<double> judge_b;
    for (double v : judge_a) judge_b.push_back(v + kOffset);
    const auto r = lab::judge_robustness(judge_a, judge_b);
    o.require(r.spearman == 1.0, "rho " + num(r.spearman, 12));
    o.require(std::abs(r.mean_delta - kOffset) <= kRobustTol, "mean delta " + num(r.mean_delta, 12));

    const std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs = {
        {{1, 2, 3, 4, 5}, {5, 6, 7, 8, 7}},
        {{3.1, 1.2, 4.4, 1.2, 9.0, 2.6}, {2.0, 2.0, 8.5, 1.0, 7.5, 3.0}},
        {{10, 20, 30, 40, 50, 60, 70}, {7, 6, 5, 4, 3, 2, 1}},
        {{1, 1, 2, 2, 3, 3}, {1, 2, 1, 2, 1, 2}},
    };
    double worst = 0;
    for (const auto& [x, y] : pairs) worst = std::max(worst, std::abs(lab::spearman(x, y) - brute_spearman(x, y)));
    o.require(worst <= kRobustTol, "spearman off by " + num(worst, 12));

    // Raters x targets; the first is the classic 4-judge, 6-target example
    // whose ICC(2,k) is 0.62.
    const std::vector<std::vector<std::vector<double>>> matrices = {
        {{9, 6, 8, 7, 10, 6}, {2, 1, 4, 1, 5, 2}, {5, 3, 6, 2, 6, 4}, {8, 2, 8, 6, 9, 7}},
        {{3, 2, 1, 3, 2, 1}, {3, 1, 2, 3, 2, 1}, {2, 3, 1, 3, 1, 2}},
        {{1.5, 2.5, 9.0, 4.0}, {2.0, 2.0, 8.0, 5.5}},
    };
    double icc_worst = 0;
    for (const auto& m : matrices) icc_worst = std::max(icc_worst, std::abs(study::icc(m) - anova_icc2k(m)));
    o.require(icc_worst <= kRobustTol, "icc off by " + num(icc_worst, 12));
    const double classic = study::icc(matrices[0]);
    o.require(std::abs(classic - 0.62) < 0.005, "classic ICC(2,k) " + num(classic, 4));

    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "rho " + num(r.spearman, 6) + ", mean delta " +
               num(r.mean_delta, 10) + ", spearman err " + num(worst, 14) + ", icc err " + num(icc_worst, 14);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Chunking and retrieval

std::string random_text(std::mt19937_64& rng, std::size_t code_points) {
    static const std::vector<std::string> alphabet = {"a", "b", "c", " ", ".", "é", "ß", "中", "z", "\n"};
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < code_points; ++i) s += alphabet[pick(rng)];
    return s;
}

Outcome chunking_retrieval() {
    Outcome o;
    std::mt19937_64 rng(99);
    int chunk_failures = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t length = std::uniform_int_distribution<std::size_t>(0, 4000)(rng);
        const std::size_t window = std::uniform_int_distribution<std::size_t>(50, 1000)(rng);
        const std::size_t overlap = std::uniform_int_distribution<std::size_t>(0, window - 1)(rng);
        const auto doc = random_text(rng, length);
        const auto cps = text::decode_utf8(doc);
        const auto chunks = narrative::chunk_text(doc, window, overlap);
        bool ok = true;
        // coverage: stripping each chunk's leading overlap rebuilds the text
        std::u32string rebuilt;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            const auto c = text::decode_utf8(chunks[i]);
            if (c.size() > window || c.empty()) ok = false;
            rebuilt += i == 0 ? c : c.substr(std::min(overlap, c.size()));
            if (i + 1 < chunks.size()) {
                const auto next = text::decode_utf8(chunks[i + 1]);
                // exact overlap: the last `overlap` code points open the next chunk
                if (c.size() != window || next.size() < overlap ||
                    c.substr(window - overlap) != next.substr(0, overlap))
                    ok = false;
            }
        }
        if (length > 0 && rebuilt != cps) ok = false;
        if (length == 0 && !chunks.empty()) ok = false;
        if (!ok) ++chunk_failures;
    }
    o.require(chunk_failures == 0, std::to_string(chunk_failures) + " chunking trials failed");

    static const std::vector<std::string> words = {"solar", "battery", "grid", "tariff", "village", "payment",
                                                   "repair", "storage", "access", "cost",    "mobile", "school",
                                                   "demand", "panel",   "loss",   "meter"};
    gateway::MockScript script;
    script.seed = 5;
    gateway::MockBackend embedder(script);
    gateway::HashEmbedder oracle_embedder(5);
    int cap_violations = 0, ranking_mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 40)(rng);
        std::vector<int> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        narrative::ChunkIndex index;
        for (int i = 0; i < n; ++i) {
            std::string body;
            const int wc = std::uniform_int_distribution<int>(3, 60)(rng);
            for (int w = 0; w < wc; ++w)
                body += (w ? " " : "") + words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
            narrative::Chunk c;
            c.chunk_id = ids[i];
            c.doc_id = "doc" + std::to_string(std::uniform_int_distribution<int>(0, 2)(rng));
            c.text = body;
            index.chunks.push_back(c);
        }
        index = narrative::index_chunks(index.chunks, embedder);
        narrative::OutlinePage page;
        page.title = words[trial % words.size()] + " " + words[(trial * 7 + 3) % words.size()];
        page.key_message = words[(trial * 5 + 1) % words.size()];
        page.source = trial % 3 == 0 ? "" : "doc" + std::to_string(trial % 3);
        const auto g = narrative::retrieve_evidence(page, index, embedder);

        std::size_t chars = 0;
        for (const auto& p : g.passages) chars += text::code_point_count(p.text);
        if (g.passages.size() > kMaxPassages || chars > kMaxChars) ++cap_violations;

        // brute force: own cosine, sort by score then id, greedy caps
        const auto q = oracle_embedder.embed(narrative::page_query(page)).values;
        auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
            double d = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                d += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            return na == 0 || nb == 0 ? 0.0 : d / std::sqrt(na * nb);
        };
        std::vector<std::tuple<double, int, std::size_t>> ranked;
        for (std::size_t i = 0; i < index.chunks.size(); ++i) {
            double s = cos(q, oracle_embedder.embed(index.chunks[i].text).values);
            if (!page.source.empty() && index.chunks[i].doc_id == page.source) s += 0.05;
            ranked.emplace_back(s, index.chunks[i].chunk_id, i);
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (std::abs(std::get<0>(a) - std::get<0>(b)) > 1e-12) return std::get<0>(a) > std::get<0>(b);
            return std::get<1>(a) < std::get<1>(b);
        });
        std::vector<int> expected;
        std::size_t total = 0;
        for (const auto& [s, id, i] : ranked) {
            const auto len = text::code_point_count(index.chunks[i].text);
            if (expected.size() == kMaxPassages || total + len > kMaxChars) break;
            total += len;
            expected.push_back(id);
        }
        std::vector<int> got;
        for (const auto& p : g.passages) got.push_back(p.chunk_id);
        if (got != expected) ++ranking_mismatches;
    }
    o.require(cap_violations == 0, std::to_string(cap_violations) + " retrievals broke a cap");
    o.require(ranking_mismatches == 0, std::to_string(ranking_mismatches) + " rankings differ from brute force");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "500 chunking trials, 200 retrieval instances";
    return o;
}

// ---------------------------------------------------------------------------
// 7. Pipeline caps

// Embeds listed texts to fixed vectors and answers every rerank with a
// positive score, recording which figures reached the reranker.
class ScriptedAligner : public gateway::Backend {
public:
    std::map<std::string, std::vector<double>> vectors;
    std::vector<std::string> reranked;

    std::string name() const override { return "scripted"; }
    std::string complete(const gateway::CompletionRequest& r) override {
        reranked.push_back(gateway::prompt_header(r.prompt, "ITEM").value_or(""));
        return "RATIONALE: fits\nSCORE: 7";
    }
    std::vector<gateway::EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        std::vector<gateway::EmbeddingVector> out;
        for (const auto& t : texts) out.push_back({vectors.at(t), "scripted"});
        return out;
    }
};

class CountingBackend : public gateway::Backend {
public:
    std::function<std::string(const gateway::CompletionRequest&)> answer;
    int calls = 0;
    std::string name() const override { return "counting"; }
    std::string complete(const gateway::CompletionRequest& r) override {
        ++calls;
        return answer(r);
    }
    std::vector<gateway::EmbeddingVector> embed(const std::vector<std::string>&) override { return {}; }
};

narrative::PageDescription sample_page() {
    narrative::PageDescription d;
    d.index = 1;
    d.title = "Surface temperature";
    d.narrative = "Dense districts run hotter than parks.";
    d.bullets = {"Asphalt stores heat", "Parks cool the air"};
    return d;
}

Outcome pipeline_caps() {
    Outcome o;
    // align_visuals: two pages, twelve figures at scripted similarities
    {
        ScriptedAligner backend;
        std::vector<narrative::PageDescription> pages = {sample_page(), sample_page()};
        pages[1].index = 2;
        pages[1].title = "Green roofs";
        backend.vectors[narrative::description_text(pages[0])] = {1, 0, 0};
        backend.vectors[narrative::description_text(pages[1])] = {0, 0, 1};
        const std::vector<double> sims = {0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.31,
                                          kCoarseThreshold + 1e-9, kCoarseThreshold - 1e-9, 0.2, 0.0};
        std::vector<narrative::FigureCandidate> figures;
        std::set<std::string> below;
        for (std::size_t i = 0; i < sims.size(); ++i) {
            narrative::FigureCandidate f;
            f.figure.id = "fig" + std::to_string(i);
            f.figure.caption = "caption " + std::to_string(i);
            f.figure.context = "context " + std::to_string(i);
            f.figure.image_ref = "figures/" + f.figure.id + ".png";
            backend.vectors[f.figure.caption + "\n" + f.figure.context] = {sims[i], std::sqrt(1 - sims[i] * sims[i]),
                                                                           0};
            if (sims[i] < kCoarseThreshold) below.insert(f.figure.id);
            figures.push_back(f);
        }
        const auto out = narrative::align_visuals(figures, pages, backend, backend);
        for (const auto& id : backend.reranked)
            o.require(!below.count(id), "figure " + id + " below threshold reached the reranker");
        std::size_t attached = 0;
        for (const auto& d : out) {
            o.require(d.figures.size() <= kMaxFiguresPerPage,
                      "page " + std::to_string(d.index) + " has " + std::to_string(d.figures.size()) + " figures");
            for (const auto& f : d.figures) {
                o.require(f.coarse_similarity >= kCoarseThreshold && !below.count(f.figure_id),
                          "kept " + f.figure_id + " at " + num(f.coarse_similarity, 6));
            }
            attached += d.figures.size();
        }
        o.require(out[0].figures.size() == kMaxFiguresPerPage, "page cap not reached by the scripted schedule");
        o.detail += "align: " + std::to_string(backend.reranked.size()) + " pairs reranked, " +
                    std::to_string(attached) + " attached";
    }

    const auto page = sample_page();
    const auto bp = visual::default_blueprint(page);
    gateway::MockScript script;
    script.seed = 3;
    auto mock = sim::make_mock(script);
    narrative::Outline outline;
    outline.pages.push_back({page.title, page.narrative, page.bullets, ""});
    const auto contract = style::induce_style(outline, style::default_schema(), *mock);
    const auto tokens = style::resolve_role_style(contract, page.role);

    // generate_html: a model that never produces valid markup
    {
        CountingBackend bad;
        bad.answer = [](const gateway::CompletionRequest&) { return std::string("<div>not a slide"); };
        bool failed = false;
        try {
            visual::generate_html(&bp, page, tokens, bad);
        } catch (const Error& e) {
            failed = e.code() == Errc::generation_failed;
        }
        o.require(failed, "generate_html did not raise GenerationFailed");
        o.require(bad.calls == 1 + kHtmlRetries, "generate_html made " + std::to_string(bad.calls) + " calls");
        // valid on the last permitted attempt still succeeds
        CountingBackend late;
        const auto good = visual::compose_html(bp, page, tokens);
        late.answer = [&](const gateway::CompletionRequest& r) {
            return r.variant == kHtmlRetries ? good : std::string("<p>broken");
        };
        const auto gen = visual::generate_html(&bp, page, tokens, late);
        o.require(gen.retry_count == kHtmlRetries && late.calls == 1 + kHtmlRetries, "late success not accepted");
        o.detail += "; html: failed after " + std::to_string(bad.calls - 1) + " retries";
    }

    // refine_page: a detector that always complains, a patcher that changes nothing
    {
        const auto markup = visual::compose_html(bp, page, tokens);
        visual::StubRenderer renderer;
        int detections = 0, patches = 0;
        const visual::Detector detector = [&](const visual::RenderResult&) {
            ++detections;
            return visual::DefectReport{0, {{visual::DefectCategory::overflow_cropped, "e1", "always"}}};
        };
        const visual::Patcher noop = [&](const std::string& m, const visual::DefectReport&) {
            ++patches;
            return m;
        };
        support::TempDir assets("refine");
        const auto r = visual::refine_page(markup, renderer, assets.path(), detector, noop, kRefineCap);
        o.require(r.iterations <= kRefineCap && patches <= kRefineCap, "refine ran " + std::to_string(patches) +
                                                                          " patches");
        o.require(!r.converged, "no-op patcher reported convergence");
        o.require(r.markup == markup, "no-op patcher changed the markup");
        o.detail += "; refine: stopped after " + std::to_string(r.iterations) + " iterations";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 8. Ablation harness

Outcome ablation() {
    Outcome o;
    support::TempDir tmp("abl");
    const auto t = task::load_task(support::fixture("long_doc"));
    std::map<std::string, std::string> hashes;
    for (const auto& c : pipeline::ablation_configs()) {
        try {
            const auto r = support::generate_deck(t, tmp / c.name, c.name, 42);
            o.require(!r.deck.slides.empty(), "config " + c.name + " produced no slides");
            hashes[c.name] = r.deck_hash;
            if (c.name == "c") {
                bool empty = true;
                for (const auto& g : r.grounding) empty = empty && g.passages.empty();
                o.require(empty, "config c has non-empty groundings");
            }
        } catch (const std::exception& e) {
            o.require(false, "config " + c.name + " failed: " + e.what());
        }
    }
    o.require(hashes.size() == 7, "ran " + std::to_string(hashes.size()) + " configs");
    o.require(hashes["g"] != hashes["a"], "config g and a produced the same deck");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "7 configs, hash a=" + hashes["a"].substr(0, 12) +
               " g=" + hashes["g"].substr(0, 12);
    return o;
}

// ---------------------------------------------------------------------------
// 9. Human-study math

Outcome human_study() {
    Outcome o;
    using R = study::ResolvedRanking;
    struct Fixture {
        const char* name;
        std::vector<R> records;
        std::vector<std::tuple<std::string, double, int>> expected;  // method, mean points, rank
    };
    const std::vector<Fixture> fixtures = {
        {"unanimous",
         {{"u1", "c1", {"X", "Y", "Z"}}, {"u1", "c2", {"X", "Y", "Z"}}, {"u2", "c1", {"X", "Y", "Z"}},
          {"u2", "c2", {"X", "Y", "Z"}}},
         {{"X", 3.0, 1}, {"Y", 2.0, 2}, {"Z", 1.0, 3}}},
        // A: 3+2+2+3+1 = 11, B: 2+3+1+1+3 = 10, C: 1+1+3+2+2 = 9, over 5 cases
        {"mixed",
         {{"u1", "c1", {"A", "B", "C"}},
          {"u1", "c2", {"B", "A", "C"}},
          {"u1", "c3", {"C", "A", "B"}},
          {"u1", "c4", {"A", "C", "B"}},
          {"u1", "c5", {"B", "C", "A"}}},
         {{"A", 2.2, 1}, {"B", 2.0, 2}, {"C", 1.8, 3}}},
        // A: 3+2 = 5, B: 2+3 = 5, C: 1+1 = 2; A and B share rank 1
        {"tied", {{"u1", "c1", {"A", "B", "C"}}, {"u2", "c1", {"B", "A", "C"}}}, {{"A", 2.5, 1}, {"B", 2.5, 1}, {"C", 1.0, 3}}},
    };
    for (const auto& f : fixtures) {
        const auto got = study::aggregate_rankings(f.records);
        bool ok = got.size() == f.expected.size();
        for (std::size_t i = 0; ok && i < got.size(); ++i) {
            const auto& [m, pts, rank] = f.expected[i];
            ok = got[i].method == m && std::abs(got[i].mean_points - pts) < 1e-12 && got[i].rank == rank;
        }
        o.require(ok, std::string("fixture ") + f.name + " differs");
    }
    // all annotators rank identically: points per (case, method) agree exactly
    const std::vector<std::vector<std::string>> per_case = {{"A", "B", "C"}, {"C", "A", "B"}, {"B", "C", "A"}};
    std::vector<std::vector<double>> ratings;
    for (int annotator = 0; annotator < 4; ++annotator) {
        std::vector<double> row;
        for (const auto& order : per_case)
            for (std::size_t p = 0; p < order.size(); ++p) row.push_back(static_cast<double>(order.size() - p));
        ratings.push_back(row);
    }
    const double agree = study::icc(ratings);
    o.require(agree == 1.0, "all-agree ICC " + num(agree, 12));
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + "3 point-table fixtures, all-agree ICC " + num(agree, 6);
    return o;
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = task::read_file(e.path());
    }
    return out;
}

Outcome determinism() {
    Outcome o;
    support::TempDir tmp("det");
    std::vector<std::map<std::string, std::string>> trees;
    for (const char* run : {"run1", "run2"}) {
        for (const char* fixture : {"long_doc", "multi_modal", "multi_source", "vague_prompt"}) {
            std::ostringstream out, err;
            const auto dir = (tmp / run).string();
            const auto task_dir = support::fixture(fixture).string();
            int code = cli::run({"--seed", "17", "--out", dir, "generate", "--task", task_dir}, out, err);
            o.require(code == cli::kOk, std::string("generate ") + fixture + " exit " + std::to_string(code) + " " +
                                            err.str());
            const auto t = task::load_task(task_dir);
            code = cli::run({"--seed", "17", "evaluate", "--task", task_dir, "--deck", dir + "/" + t.id}, out, err);
            o.require(code == cli::kOk, std::string("evaluate ") + fixture + " exit " + std::to_string(code) + " " +
                                            err.str());
        }
        trees.push_back(tree_bytes(tmp / run));
    }
    std::size_t differing = 0;
    for (const auto& [path, bytes] : trees[0]) {
        const auto it = trees[1].find(path);
        if (it == trees[1].end() || it->second != bytes) ++differing;
    }
    o.require(trees[0].size() == trees[1].size() && differing == 0,
              std::to_string(differing) + " files differ between runs");
    o.require(!trees[0].empty(), "no output written");
    o.detail = (o.detail.empty() ? "" : o.detail + "; ") + std::to_string(trees[0].size()) +
               " files compared byte for byte";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"formula oracle", formula_oracle},
        {"published Avg rows", table_rows},
        {"perturbation selectivity", selectivity},
        {"reliability", reliability},
        {"robustness statistics", robustness},
        {"chunking and retrieval", chunking_retrieval},
        {"pipeline caps", pipeline_caps},
        {"ablation harness", ablation},
        {"human-study math", human_study},
        {"end-to-end determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failures += !o.pass;
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
