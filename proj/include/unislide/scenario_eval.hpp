#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unislide/gateway.hpp"
#include "unislide/narrative.hpp"
#include "unislide/task.hpp"

namespace unislide::eval {

struct WeightedItemState {
    std::string item_id;
    double weight = 1.0;
    double state = 0.0;  // 0, 0.5 or 1
    std::string rationale;
};

/// sum(w * c) / sum(w) * 10. Throws EmptyItemList / NonPositiveWeight.
double weighted_state_mean(std::span<const WeightedItemState> items);

/// mean(values) * 10 over per-item states; throws EmptyItemList.
double state_mean(std::span<const double> states);

struct ContributionState {
    std::string point_id;
    double source_weight = 1.0;
    double point_weight = 1.0;
    double state = 0.0;
};

/// Weighted state mean with w = source_weight * point_weight.
double source_coverage(std::span<const ContributionState> items);

struct OverlapState {
    std::string group_id;
    double weight = 1.0;
    bool applicable = false;
    double state = 0.0;  // only meaningful when applicable
};

/// Weighted state mean over the applicable groups; nullopt when none apply.
std::optional<double> deduplication(std::span<const OverlapState> groups);

struct AtomicClaim {
    int slide_index = 0;
    std::string text;
    int verdict = 0;  // 0 or 1
    std::vector<int> evidence_trace;  // chunk ids shown to the verifier
    std::string rationale;
};

/// mean(verdicts) * 10; throws EmptyItemList.
double faithfulness(std::span<const AtomicClaim> claims);

struct ScenarioScores {
    task::Setting setting = task::Setting::vague_prompt;
    std::map<std::string, double> metrics;
    std::vector<std::string> not_applicable;
    std::vector<task::JudgmentTrace> traces;
    std::vector<std::string> warnings;
};

/// Metric ids defined for a setting, in report order.
std::vector<std::string> scenario_metric_ids(task::Setting setting);

struct CoverageItem {
    std::string id;
    std::string text;
    double weight = 1.0;
};

/// One rubric call per point.
std::vector<WeightedItemState> pathway1_checklist(const task::Deck& deck, std::span<const CoverageItem> points,
                                                  const gateway::JudgeContext& ctx, const std::string& rubric_id =
                                                                                        "scenario/coverage_point");

struct SourceSeekingOptions {
    std::size_t top_k = 8;
};

/// Extracts claims slide by slide and verifies each against the top-k
/// chunks by cosine similarity.
std::vector<AtomicClaim> pathway2_source_seeking(const task::Deck& deck, const narrative::ChunkIndex& knowledge,
                                                 gateway::Backend& embedder, const gateway::JudgeContext& ctx,
                                                 const SourceSeekingOptions& options = {});

/// Visual elements the judge finds on one slide.
struct VisualElement {
    int slide_index = 0;
    std::string reference;
    std::string kind;
    std::string description;
};

std::vector<VisualElement> visual_inventory(const task::Deck& deck, const gateway::JudgeContext& ctx);

ScenarioScores score_long_doc(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx);
ScenarioScores score_multimodal(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx);
ScenarioScores score_multisource(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx);

/// Dispatches on the task's setting; vague_prompt yields an empty map.
ScenarioScores score_scenario(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx);

}  // namespace unislide::eval
