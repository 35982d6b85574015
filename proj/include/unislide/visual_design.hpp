#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/gateway.hpp"
#include "unislide/narrative.hpp"
#include "unislide/style.hpp"
#include "unislide/task.hpp"

namespace unislide::visual {

enum class ElementType { title, text_block, bullet_list, figure, chart_frame, caption, footer };

std::string_view to_string(ElementType t);
std::optional<ElementType> parse_element_type(std::string_view s);
bool is_text_bearing(ElementType t);

struct BlueprintElement {
    ElementType type = ElementType::text_block;
    task::BBox bbox;
    // "title", "narrative", "bullets", "figure:<id>", "caption:<id>", "footer"
    std::string content_ref;
};

struct LayoutBlueprint {
    int page_index = 0;
    task::SlideRole role = task::SlideRole::body;
    std::vector<BlueprintElement> elements;
};

/// Empty when the blueprint is valid for the description.
std::vector<std::string> validate_blueprint(const LayoutBlueprint& bp, const narrative::PageDescription& d);

/// Deterministic two-column layout: title band, text on the left, figures
/// stacked on the right with captions.
LayoutBlueprint default_blueprint(const narrative::PageDescription& d);

/// Unplanned layout: every element stacked top to bottom at full width.
LayoutBlueprint stacked_blueprint(const narrative::PageDescription& d);

struct LayoutOptions {
    double temperature = 0.4;
    int max_tokens = 2048;
};

/// One reprompt on an invalid blueprint, then UnplannablePage.
LayoutBlueprint plan_layout(const narrative::PageDescription& d, gateway::Backend& llm,
                            const LayoutOptions& options = {});

nlohmann::ordered_json to_json(const LayoutBlueprint& bp);
LayoutBlueprint blueprint_from_json(const nlohmann::json& j, int page_index, task::SlideRole role);

// ---------------------------------------------------------------------------
// Markup

/// Font scale applied per data-fit step.
inline constexpr double kFitStep = 0.85;

/// Reference markup for a blueprint: contract style block, root slide
/// container, one positioned element per blueprint entry (data-id eN).
std::string compose_html(const LayoutBlueprint& bp, const narrative::PageDescription& d,
                         const style::TokenMap& role_tokens);

struct StructuralError {
    std::string code;  // Malformed, MissingStyleContract, MissingRoot, BadAspect, MissingElement, UnexpectedElement, UncontractedStyle
    std::string detail;

    std::string str() const { return detail.empty() ? code : code + "(" + detail + ")"; }
};

/// Well-formedness, a single 16:9 root, one element per blueprint entry
/// (when a blueprint is given) and no style literals outside the contract.
std::vector<StructuralError> validate_html_structure(const std::string& markup,
                                                     const LayoutBlueprint* blueprint = nullptr);

/// Color literals, pixel font sizes and literal font families found outside
/// the contract's :root block.
std::vector<std::string> uncontracted_style(const std::string& markup);

struct GeneratedHtml {
    std::string markup;
    int retry_count = 0;
};

struct GenerateOptions {
    double temperature = 0.4;
    int max_tokens = 8192;
    int max_retries = 3;
};

/// Strips code fences and prose around the markup.
std::string extract_markup(const std::string& response);

/// Regenerates on structural failure up to max_retries times, then
/// GenerationFailed. A null blueprint means generation without a layout plan.
GeneratedHtml generate_html(const LayoutBlueprint* blueprint, const narrative::PageDescription& d,
                            const style::TokenMap& role_tokens, gateway::Backend& llm,
                            const GenerateOptions& options = {});

// ---------------------------------------------------------------------------
// Rendering

inline constexpr int kCanvasWidth = 1280;
inline constexpr int kCanvasHeight = 720;

struct ElementBox {
    std::string id;    // data-id
    std::string type;  // data-el
    double x = 0, y = 0, w = 0, h = 0;  // px; h includes text that overflows the declared box
    double declared_h = 0;
    bool text_bearing = false;
};

struct RenderResult {
    std::string markup;
    std::string screenshot_png;  // bytes
    std::vector<ElementBox> geometry;
    std::vector<std::string> log;
    int width = kCanvasWidth;
    int height = kCanvasHeight;
};

class Renderer {
public:
    virtual ~Renderer() = default;
    virtual std::string name() const = 0;
    virtual RenderResult render(const std::string& markup, const std::filesystem::path& asset_dir) = 0;
};

/// Analytic geometry, no browser. Text lines are 1.3 x font size high and a
/// glyph is 0.52 x font size wide; text taller than its box extends the box
/// downward. The screenshot is a wireframe of the boxes.
class StubRenderer : public Renderer {
public:
    std::string name() const override { return "stub"; }
    RenderResult render(const std::string& markup, const std::filesystem::path& asset_dir) override;
};

/// Runs tools/playwright_render.py in a subprocess.
class BrowserRenderer : public Renderer {
public:
    BrowserRenderer(std::filesystem::path script, std::string python = "python3",
                    std::chrono::milliseconds timeout = std::chrono::seconds(60));
    std::string name() const override { return "browser"; }
    RenderResult render(const std::string& markup, const std::filesystem::path& asset_dir) override;

private:
    std::filesystem::path script_;
    std::string python_;
    std::chrono::milliseconds timeout_;
};

/// Precondition: markup parses and has a slide root.
RenderResult render_page(const std::string& markup, Renderer& renderer, const std::filesystem::path& asset_dir);

// ---------------------------------------------------------------------------
// Defects and refinement

enum class DefectCategory { overflow_cropped, overlap_unreadable, garbled_rendering, image_text_mismatch };

std::string_view to_string(DefectCategory c);
std::optional<DefectCategory> parse_defect_category(std::string_view s);

struct Defect {
    DefectCategory category = DefectCategory::overflow_cropped;
    std::string locator;  // data-id, or "eA,eB" for overlaps
    std::string detail;
};

struct DefectReport {
    int page_index = 0;
    std::vector<Defect> defects;
};

struct DetectOptions {
    double overlap_threshold = 0.25;  // of the smaller text box's area
    gateway::Backend* vision = nullptr;
    double temperature = 0.2;
};

/// Geometric checks on the render plus, when a vision backend is set, the
/// garbled-text and image/text mismatch judgment. Sorted by patch priority.
DefectReport detect_defects(const RenderResult& result, int page_index, const DetectOptions& options = {});

std::vector<Defect> geometric_defects(const std::vector<ElementBox>& geometry, double overlap_threshold = 0.25);

using Detector = std::function<DefectReport(const RenderResult&)>;
using Patcher = std::function<std::string(const std::string& markup, const DefectReport& report)>;

/// Rewrites the start tag of the element with the given data-id.
std::string set_element_attribute(const std::string& markup, const std::string& data_id, const std::string& name,
                                  const std::string& value);

/// Fixes the highest-priority defect: larger data-fit for text overflow and
/// overlap, box clamping for non-text overflow, replacement-character removal
/// for garbled text.
std::string heuristic_patch(const std::string& markup, const DefectReport& report);

std::string format_defects(const DefectReport& report);
std::vector<Defect> parse_defect_lines(const std::string& text);

/// Asks the model for full replacement markup.
Patcher llm_patcher(gateway::Backend& llm, double temperature = 0.4, int max_tokens = 8192);

struct RefineStep {
    int pass = 0;
    std::vector<Defect> defects;
    bool patched = false;
    std::string rejected;  // why a patch was discarded
};

struct RefineResult {
    std::string markup;
    int iterations = 0;  // patches attempted
    std::vector<RefineStep> trace;
    bool converged = false;
};

/// render -> detect -> patch until no defects remain or max_iter patches
/// were tried. Patches that break the element set are discarded.
RefineResult refine_page(const std::string& markup, Renderer& renderer, const std::filesystem::path& asset_dir,
                         const Detector& detector, const Patcher& patcher, int max_iter = 5);

nlohmann::ordered_json to_json(const RefineResult& r);

}  // namespace unislide::visual
