#include "unislide/evaluation.hpp"

#include <algorithm>

#include "unislide/shared_eval.hpp"

namespace unislide::eval {

namespace {

std::vector<double> shared_values(const std::map<std::string, double>& shared) {
    std::vector<double> out;
    for (auto id : task::kSharedMetricIds) out.push_back(shared.at(std::string(id)));
    return out;
}

std::vector<double> values_of(const std::map<std::string, double>& m) {
    std::vector<double> out;
    for (const auto& [_, v] : m) out.push_back(v);
    return out;
}

}  // namespace

RunScores evaluate_once(const task::Deck& deck, const task::Task& task, gateway::Backend& judge, double temperature,
                        int variant, int max_tokens) {
    if (deck.slides.empty()) throw Error(Errc::empty_deck, "deck " + deck.id + " has no slides");
    gateway::JudgeContext ctx;
    ctx.backend = &judge;
    ctx.temperature = temperature;
    ctx.max_tokens = max_tokens;
    ctx.variant = variant;

    RunScores out;
    for (auto id : task::kSharedMetricIds) {
        if (id == "visual_integrity") continue;
        const auto j = judge_shared_metric(deck, task, id, ctx);
        out.shared[std::string(id)] = j.score;
        task::JudgmentTrace t;
        t.metric = std::string(id);
        t.item_id = std::string(id);
        t.score = j.judgment.score;
        t.state = j.judgment.state;
        t.rationale = j.judgment.rationale;
        t.warning = j.judgment.warning;
        t.run = variant;
        if (!t.warning.empty()) out.warnings.push_back(t.metric + ": " + t.warning);
        out.traces.push_back(std::move(t));
    }
    std::vector<gateway::Judgment> defect_traces;
    const auto flags = judge_defect_flags(deck, ctx, &defect_traces);
    out.shared["visual_integrity"] = visual_integrity(flags);
    for (const auto& j : defect_traces) {
        task::JudgmentTrace t;
        t.metric = "visual_integrity";
        t.item_id = j.item_id;
        t.state = j.state;
        t.rationale = j.rationale;
        t.warning = j.warning;
        t.run = variant;
        out.traces.push_back(std::move(t));
    }

    auto scen = score_scenario(deck, task, ctx);
    out.scenario = std::move(scen.metrics);
    out.not_applicable = std::move(scen.not_applicable);
    for (auto& t : scen.traces) {
        t.run = variant;
        if (!t.warning.empty()) out.warnings.push_back(t.metric + "/" + t.item_id + ": " + t.warning);
        out.traces.push_back(std::move(t));
    }
    for (auto& w : scen.warnings) out.warnings.push_back(std::move(w));

    const auto sv = shared_values(out.shared);
    const auto cv = values_of(out.scenario);
    out.shared_mean = shared_mean(sv);
    out.setting_avg = setting_avg(sv, cv);
    return out;
}

void recompute_aggregates(task::ScoreReport& report) {
    const auto sv = shared_values(report.shared);
    report.shared_mean = shared_mean(sv);
    report.setting_avg = setting_avg(sv, values_of(report.scenario));
}

task::ScoreReport evaluate_deck(const task::Deck& deck, const task::Task& task, gateway::Backend& judge,
                                const EvaluationOptions& options) {
    if (options.runs < 1) throw Error(Errc::precondition, "runs must be >= 1");
    task::ScoreReport report;
    report.task_id = task.id;
    report.deck_id = deck.id;
    report.setting = std::string(task::to_string(task.setting));
    report.runs = options.runs;
    report.seed = options.seed;
    report.judge_temperature = options.judge_temperature;
    report.backend = judge.name();
    report.normalization = "identity";

    std::map<std::string, std::vector<double>> shared_runs, scenario_runs;
    std::vector<std::string> not_applicable;
    for (int run = 0; run < options.runs; ++run) {
        auto r = evaluate_once(deck, task, judge, options.judge_temperature, run, options.max_tokens);
        for (const auto& [k, v] : r.shared) shared_runs[k].push_back(v);
        for (const auto& [k, v] : r.scenario) scenario_runs[k].push_back(v);
        for (const auto& na : r.not_applicable) {
            if (std::find(not_applicable.begin(), not_applicable.end(), na) == not_applicable.end())
                not_applicable.push_back(na);
        }
        report.run_setting_avgs.push_back(r.setting_avg);
        for (auto& t : r.traces) report.per_item.push_back(std::move(t));
        for (auto& w : r.warnings) {
            const auto tagged = "run " + std::to_string(run) + ": " + w;
            report.warnings.push_back(tagged);
        }
    }
    for (const auto& [k, vs] : shared_runs) report.shared[k] = mean(vs);
    for (const auto& [k, vs] : scenario_runs) {
        // a metric that was not applicable in some run is averaged over the
        // runs where it was scored
        report.scenario[k] = mean(vs);
    }
    for (const auto& na : not_applicable) {
        if (!report.scenario.count(na)) report.not_applicable.push_back(na);
    }
    recompute_aggregates(report);
    report.setting_avg_std = population_std(report.run_setting_avgs);
    return report;
}

void normalize_reports(std::vector<task::ScoreReport>& reports, double epsilon) {
    if (reports.empty()) return;
    for (auto id : task::kSharedMetricIds) {
        const std::string key(id);
        std::vector<double> raw;
        for (const auto& r : reports) raw.push_back(r.shared.at(key));
        const auto norm = normalize_batch(raw, epsilon);
        for (std::size_t i = 0; i < reports.size(); ++i) reports[i].shared[key] = norm[i];
    }
    for (auto& r : reports) {
        r.normalization = "minmax";
        recompute_aggregates(r);
    }
}

}  // namespace unislide::eval
