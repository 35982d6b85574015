#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unislide/gateway.hpp"
#include "unislide/scenario_eval.hpp"
#include "unislide/task.hpp"

namespace unislide::eval {

struct EvaluationOptions {
    int runs = 3;
    double judge_temperature = 0.2;
    int max_tokens = 1024;
    std::uint64_t seed = 0;
};

/// Scores of one evaluation run.
struct RunScores {
    std::map<std::string, double> shared;
    std::map<std::string, double> scenario;
    std::vector<std::string> not_applicable;
    double shared_mean = 0;
    double setting_avg = 0;
    std::vector<task::JudgmentTrace> traces;
    std::vector<std::string> warnings;
};

/// Four judged shared metrics, visual integrity from per-slide defect flags,
/// and the setting's scenario metrics. `variant` is the run index.
RunScores evaluate_once(const task::Deck& deck, const task::Task& task, gateway::Backend& judge, double temperature,
                        int variant, int max_tokens = 1024);

/// Runs `options.runs` evaluations and averages them metric by metric. The
/// report's setting_avg is the aggregation rule applied to the averaged
/// metrics; per-run averages and their population std go into the metadata.
task::ScoreReport evaluate_deck(const task::Deck& deck, const task::Task& task, gateway::Backend& judge,
                                const EvaluationOptions& options = {});

/// Recomputes shared_mean and setting_avg from the metric maps.
void recompute_aggregates(task::ScoreReport& report);

/// Min-max normalizes each shared metric across the given reports (one per
/// system, same evaluation run) and recomputes the aggregates.
void normalize_reports(std::vector<task::ScoreReport>& reports, double epsilon = 1e-8);

}  // namespace unislide::eval
