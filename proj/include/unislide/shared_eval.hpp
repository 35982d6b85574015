#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unislide/gateway.hpp"
#include "unislide/task.hpp"

namespace unislide::eval {

struct DefectFlagSheet {
    std::vector<bool> has_critical_defect;  // one flag per slide

    std::size_t total() const { return has_critical_defect.size(); }
    std::size_t errors() const;
};

/// 10 * (1 - N_error / N_total). Throws EmptyDeck when there are no slides.
double visual_integrity(const DefectFlagSheet& flags);

/// 10 * (x - min) / (max - min + epsilon) over one metric's batch of systems.
std::vector<double> normalize_batch(std::span<const double> raw, double epsilon = 1e-8);

/// Mean of exactly five values; throws Arity otherwise.
double shared_mean(std::span<const double> scores);

/// Mean over all 5 + n metric values: (5 * shared_mean + sum(scenario)) / (5 + n).
double setting_avg(std::span<const double> shared_scores, std::span<const double> scenario_scores);

double mean(std::span<const double> xs);
double population_std(std::span<const double> xs);

struct RepeatResult {
    double mean = 0;
    double std = 0;  // population
    std::vector<double> values;
};

/// Calls score_fn(run) for run = 0..runs-1.
RepeatResult repeat_average(const std::function<double(int)>& score_fn, int runs = 3);

// ---------------------------------------------------------------------------

/// Deck text handed to judges: one `=== SLIDE i role=... ===` header per slide
/// followed by its markup (or an image marker for image-only slides).
std::string deck_for_judge(const task::Deck& deck);

struct JudgeSlide {
    int index = 0;
    std::string role;
    std::string image;
    std::string markup;
};
std::vector<JudgeSlide> parse_deck_for_judge(std::string_view text);

/// Slide image paths resolved against the deck directory (vision input).
std::vector<std::string> deck_images(const task::Deck& deck);

std::string task_brief(const task::Task& task);

struct SharedJudgment {
    double score = 0;
    gateway::Judgment judgment;
};

/// Rubric-scored shared metric; visual_integrity is rejected (it is formulaic).
SharedJudgment judge_shared_metric(const task::Deck& deck, const task::Task& task, std::string_view metric,
                                   const gateway::JudgeContext& ctx);

/// One binary defect judgment per slide.
DefectFlagSheet judge_defect_flags(const task::Deck& deck, const gateway::JudgeContext& ctx,
                                   std::vector<gateway::Judgment>* traces = nullptr);

}  // namespace unislide::eval
