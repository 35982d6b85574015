#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace unislide::task {

/// Whole-file IO; both throw MissingFile.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

enum class Setting { vague_prompt, long_doc, multi_modal, multi_source };

std::string_view to_string(Setting s);
std::optional<Setting> parse_setting(std::string_view s);

struct Section {
    std::string heading;
    std::string text;
};

/// Normalized page coordinates, 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1.
struct BBox {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
};

struct FigureAsset {
    std::string id;
    int source_page = 0;
    BBox bbox;
    std::string caption;
    std::string context;
    std::string image_ref;  // relative to the task directory
};

struct SourceDocument {
    std::string id;
    std::string title;
    std::vector<Section> sections;
    std::vector<FigureAsset> figures;
    int page_count = 0;
    // Set when the document body came from a parsed-document file; saving
    // writes the reference back instead of inlining the content.
    std::string source_path;

    std::string full_text() const;
};

/// Half-open [start, end) in code points.
struct CharRange {
    std::size_t start = 0;
    std::size_t end = 0;
};

struct CoveragePoint {
    std::string id;
    std::string text;
    double weight = 1.0;
};

struct EvidenceSpan {
    std::string point_id;
    std::string document_id;
    std::size_t section_index = 0;
    CharRange char_range;
};

enum class UsageMode { direct_reuse, faithful_redraw };
std::string_view to_string(UsageMode m);

struct CriticalVisual {
    std::string figure_id;
    std::string paired_claim;
    std::vector<UsageMode> accepted_modes{UsageMode::direct_reuse, UsageMode::faithful_redraw};
    bool fidelity_required = false;
    double weight = 1.0;
};

struct SourceContribution {
    std::string source_id;
    std::string point_id;
    std::string text;
    double source_weight = 1.0;
    double point_weight = 1.0;
};

struct IntegrationRequirement {
    std::string id;
    std::vector<std::string> involved_sources;
    std::string text;
    double weight = 1.0;
};

struct OverlapGroup {
    std::string id;
    std::string theme;
    std::vector<std::string> involved_sources;
    double weight = 1.0;
};

struct Annotations {
    std::vector<CoveragePoint> coverage_points;
    std::vector<EvidenceSpan> evidence_spans;
    std::vector<CriticalVisual> critical_visuals;
    std::vector<SourceContribution> source_contributions;
    std::vector<IntegrationRequirement> integration_requirements;
    std::vector<OverlapGroup> overlap_groups;

    bool has_grounded_items() const;
};

struct Task {
    std::string id;
    Setting setting = Setting::vague_prompt;
    std::string domain;
    std::string intent;
    std::vector<SourceDocument> documents;
    Annotations annotations;
    std::filesystem::path base_dir;  // not serialized

    const SourceDocument* find_document(std::string_view id) const;
    const FigureAsset* find_figure(std::string_view id) const;
};

/// One field-level problem in a task's annotations.
struct Violation {
    std::string code;   // NonPositiveWeight, SpanOutOfBounds, DanglingReference, ...
    std::string field;  // e.g. annotations.coverage_points[2].weight
    std::string message;

    bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_annotations(const Task& task);

/// Reads `task.json` (or the given file) and validates every invariant.
/// Throws Error{missing_file | schema_violation | dangling_reference}.
Task load_task(const std::filesystem::path& path);
Task task_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::ordered_json task_to_json(const Task& task);
std::string serialize_task(const Task& task);
void save_task(const Task& task, const std::filesystem::path& path);

SourceDocument load_parsed_document(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Decks

enum class SlideRole { opening, body, ending };
std::string_view to_string(SlideRole r);
std::optional<SlideRole> parse_role(std::string_view s);

struct Slide {
    int index = 0;
    std::optional<std::string> html;
    std::optional<std::string> image_ref;  // path relative to the deck directory
    SlideRole role = SlideRole::body;
};

struct Deck {
    std::string id;
    std::vector<Slide> slides;
    std::string producer;
    std::filesystem::path base_dir;  // where image refs and html assets resolve

    /// Content hash per slide (html text plus image bytes).
    std::vector<std::string> slide_hashes() const;
};

SlideRole default_role(std::size_t index, std::size_t count);

/// Loads slide_NN.{html,png,jpg,jpeg} files plus an optional deck.json.
/// Throws Error{missing_file | empty_deck | unordered_slides}.
Deck load_deck(const std::filesystem::path& dir);
void save_deck(const Deck& deck, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Score reports

struct JudgmentTrace {
    std::string metric;
    std::string item_id;
    std::optional<double> state;
    std::optional<double> score;
    std::string rationale;
    int run = 0;
    std::string warning;
};

inline constexpr std::array<std::string_view, 5> kSharedMetricIds = {
    "instruction_fulfillment", "engagement", "content_accuracy", "visual_consistency", "visual_integrity"};

struct ScoreReport {
    std::string task_id;
    std::string deck_id;
    std::string setting;
    std::map<std::string, double> shared;
    double shared_mean = 0;
    std::map<std::string, double> scenario;
    double setting_avg = 0;
    std::vector<JudgmentTrace> per_item;
    int runs = 1;

    // run metadata
    std::vector<std::string> not_applicable;
    std::vector<double> run_setting_avgs;
    double setting_avg_std = 0;
    std::uint64_t seed = 0;
    double judge_temperature = 0.2;
    std::string backend;
    std::string normalization = "identity";
    std::vector<std::string> warnings;
};

nlohmann::ordered_json report_to_json(const ScoreReport& r);
ScoreReport report_from_json(const nlohmann::json& j);
void save_report(const ScoreReport& r, const std::filesystem::path& path);
ScoreReport load_report(const std::filesystem::path& path);

}  // namespace unislide::task
