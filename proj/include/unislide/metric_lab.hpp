#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/evaluation.hpp"
#include "unislide/gateway.hpp"
#include "unislide/task.hpp"

namespace unislide::lab {

// ---------------------------------------------------------------------------
// Statistics. Undefined correlations come back as NaN.

/// Throws Arity on length mismatch or fewer than 2 values.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> mean_ranks(const std::vector<double>& x);

/// Pearson correlation of the mean ranks. Needs equal lengths >= 3.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Population standard deviation.
double population_std(const std::vector<double>& x);

// ---------------------------------------------------------------------------
// Metric construction

struct PreferenceRecord {
    std::string pair_id;
    std::string deck_a;
    std::string deck_b;
    char human_choice = 'A';  // 'A' or 'B'
    std::map<std::string, double> scores_a;
    std::map<std::string, double> scores_b;
};

/// Fraction of pairs where the metric prefers the human's choice; exact ties
/// count half. Throws EmptyItemList without records, SchemaViolation when a
/// record lacks the metric on either side.
double agreement_rate(const std::vector<PreferenceRecord>& records, const std::string& metric_id);

/// Agreement of the equal-weight mean of several metrics. An empty set is
/// indifferent on every pair (0.5).
double combination_agreement(const std::vector<PreferenceRecord>& records, const std::vector<std::string>& metric_ids);

using Matrix = std::vector<std::vector<double>>;

/// Pearson correlation between metric columns of a systems x metrics matrix.
/// Needs >= 3 systems. Zero-variance columns give NaN off the diagonal.
Matrix pairwise_correlation(const Matrix& scores);

struct SelectionStep {
    std::string metric;
    double agreement = 0;
    double gain = 0;
};

/// Adds the candidate with the largest combined agreement while the gain is
/// positive and the cost budget allows; ties go to the cheaper, then the
/// lexically smaller id. Missing costs count as 1.
std::vector<SelectionStep> greedy_frontier_select(const std::vector<std::string>& candidates,
                                                  const std::vector<PreferenceRecord>& records,
                                                  const std::map<std::string, double>& cost = {},
                                                  std::optional<double> budget = std::nullopt);

/// Keeps candidates in the given priority order, dropping any whose |r| with
/// an already kept one reaches the threshold. NaN correlations never prune.
std::vector<std::string> prune_correlated(const std::vector<std::string>& candidates, const Matrix& correlation,
                                          double threshold = 0.85);

// ---------------------------------------------------------------------------
// Protocol validation

/// (pert - orig) / orig * 100. Throws DivisionByZero for orig == 0.
double delta_percent(double orig, double pert);

/// Population std of per-run setting averages; throws Arity below 2 runs.
double reliability_std(const std::vector<double>& avg_scores);

struct Robustness {
    double spearman = 0;
    double mean_delta = 0;  // B - A
    double std_delta = 0;
};

/// Same systems in the same order, at least 3.
Robustness judge_robustness(const std::vector<double>& scores_a, const std::vector<double>& scores_b);

enum class PerturbationKind {
    delete_key_segments,
    corrupt_facts,
    replace_visuals,
    drop_source_content,
    weaken_integration,
    inject_redundancy
};

std::string_view to_string(PerturbationKind k);
std::optional<PerturbationKind> parse_perturbation_kind(std::string_view s);
bool legal_for(PerturbationKind k, task::Setting s);
std::vector<PerturbationKind> kinds_for(task::Setting s);

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::delete_key_segments;
    // Annotation ids (coverage points, figures, sources, requirements or
    // overlap groups). Empty means the first ceil(intensity * n) candidates.
    std::vector<std::string> target_ids;
    double intensity = 0.3;
};

/// Appended to targeted statements by corrupt_facts.
inline constexpr const char* kFabricatedClause = ", rising 47% year over year";
inline constexpr const char* kPlaceholderImage = "assets/placeholder.svg";

struct PerturbedDeck {
    task::Deck deck;
    nlohmann::ordered_json manifest;
};

/// Localized edit of a copy of the deck; slides without an edit keep their
/// markup byte for byte. Throws TargetNotFound when a target id is unknown or
/// nothing in the deck carries any target, Precondition for a kind that does
/// not apply to the task's setting.
PerturbedDeck perturb_deck(const task::Deck& deck, const task::Task& task, const PerturbationSpec& spec);

/// Writes the deck, a neutral placeholder image and perturbation.json.
void save_perturbed(const PerturbedDeck& p, const std::filesystem::path& dir);

struct ProtocolOptions {
    eval::EvaluationOptions evaluation;
    double intensity = 0.3;
    std::optional<std::filesystem::path> out_dir;  // perturbed decks and manifests
};

struct PerturbationOutcome {
    PerturbationKind kind;
    task::ScoreReport report;
    std::map<std::string, std::optional<double>> delta;  // metric -> delta%, nullopt when orig is 0
    std::optional<double> shared_delta;
    std::optional<double> avg_delta;
    std::string error;  // set when the perturbation could not be applied
};

struct ProtocolReport {
    task::ScoreReport baseline;
    std::vector<PerturbationOutcome> perturbations;
    double reliability = 0;
    std::vector<std::string> systems;
    std::vector<double> judge_a_avgs;
    std::vector<double> judge_b_avgs;
    std::optional<Robustness> robustness;
    std::string robustness_note;
};

/// Baseline evaluation of decks[0], every legal perturbation of it, the
/// repeat std of the baseline and, with a second judge and >= 3 decks, the
/// two-judge ranking agreement over all decks.
ProtocolReport validate_protocol(const task::Task& task, const std::vector<task::Deck>& decks,
                                 gateway::Backend& judge_a, gateway::Backend* judge_b,
                                 const ProtocolOptions& options = {});

std::string protocol_markdown(const ProtocolReport& report);
nlohmann::ordered_json to_json(const ProtocolReport& report);

}  // namespace unislide::lab
