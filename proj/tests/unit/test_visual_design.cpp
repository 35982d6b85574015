#include <gtest/gtest.h>

#include "test_support.hpp"
#include "unislide/html.hpp"
#include "unislide/text.hpp"
#include "unislide/visual_design.hpp"

using namespace unislide;
using namespace unislide::visual;

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

narrative::PageDescription sample(std::size_t bullets = 3, bool with_figure = true) {
    narrative::PageDescription d;
    d.index = 2;
    d.title = "Surface temperature";
    d.narrative = "Dense districts run hotter than parks.";
    for (std::size_t i = 0; i < bullets; ++i) d.bullets.push_back("Point number " + std::to_string(i));
    if (with_figure) d.figures.push_back({"fig1", "figures/fig1.png", "Temperature by district", 0.6, 7});
    return d;
}

const style::TokenMap& tokens() {
    static const style::TokenMap t = [] {
        narrative::Outline o;
        o.pages = {{"Heat", "Cities are hot", {}, ""}};
        auto llm = sim::make_mock({});
        const auto c = style::induce_style(o, style::default_schema(), *llm);
        return style::resolve_role_style(c, task::SlideRole::body);
    }();
    return t;
}

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

bool has_code(const std::vector<StructuralError>& errs, const std::string& code) {
    return std::any_of(errs.begin(), errs.end(), [&](const StructuralError& e) { return e.code == code; });
}

}  // namespace

TEST(Blueprint, DefaultAndStackedLayoutsValidate) {
    for (const auto& d : {sample(), sample(0, false), sample(8, true)}) {
        const auto bp = default_blueprint(d);
        EXPECT_TRUE(validate_blueprint(bp, d).empty());
        EXPECT_TRUE(validate_blueprint(stacked_blueprint(d), d).empty());
        for (const auto& e : bp.elements) {
            EXPECT_GE(e.bbox.x0, 0.0);
            EXPECT_LT(e.bbox.x0, e.bbox.x1);
            EXPECT_LE(e.bbox.x1, 1.0);
            EXPECT_LE(e.bbox.y1, 1.0);
        }
    }
}

TEST(Blueprint, MissingFigureIsInvalid) {
    const auto d = sample();
    auto bp = default_blueprint(d);
    bp.elements.erase(std::remove_if(bp.elements.begin(), bp.elements.end(),
                                     [](const BlueprintElement& e) { return e.type == ElementType::figure; }),
                      bp.elements.end());
    EXPECT_FALSE(validate_blueprint(bp, d).empty());
}

TEST(Blueprint, JsonRoundTrip) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    const auto back = blueprint_from_json(nlohmann::json::parse(to_json(bp).dump()), bp.page_index, bp.role);
    EXPECT_EQ(to_json(back).dump(), to_json(bp).dump());
}

TEST(Blueprint, PlanLayoutWithSimulatedBackend) {
    auto llm = sim::make_mock({});
    const auto d = sample();
    EXPECT_TRUE(validate_blueprint(plan_layout(d, *llm), d).empty());

    gateway::MockScript script;
    gateway::MockRule r;
    r.kind = "layout_plan";
    r.responses = {R"({"elements":[]})"};
    script.rules.push_back(r);
    auto bad = sim::make_mock(script);
    EXPECT_EQ(error_of([&] { plan_layout(d, *bad); }), Errc::unplannable_page);
}

TEST(Markup, ComposedHtmlPassesStructuralChecks) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    const auto m = compose_html(bp, d, tokens());
    const auto errs = validate_html_structure(m, &bp);
    EXPECT_TRUE(errs.empty()) << (errs.empty() ? "" : errs[0].str());
    EXPECT_TRUE(uncontracted_style(m).empty());
}

TEST(Markup, StructuralErrorsAreClassified) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    const auto m = compose_html(bp, d, tokens());
    EXPECT_TRUE(has_code(validate_html_structure("<div class=\"slide\"><p>open</div>"), "Malformed"));
    EXPECT_TRUE(has_code(validate_html_structure("<div><p>x</p></div>"), "MissingStyleContract"));

    const auto first_el = m.find("data-id=\"e0\"");
    ASSERT_NE(first_el, std::string::npos);
    auto missing = m;
    missing.replace(first_el, 12, "data-id=\"zz\"");
    EXPECT_FALSE(validate_html_structure(missing, &bp).empty());

    const auto close = m.rfind("</div>");
    auto literal = m;
    literal.insert(close, "<p style=\"color:#ff0000\">x</p>");
    EXPECT_FALSE(uncontracted_style(literal).empty());
    EXPECT_TRUE(has_code(validate_html_structure(literal), "UncontractedStyle"));
}

TEST(Markup, ExtractStripsFencesAndProse) {
    EXPECT_EQ(text::trim(extract_markup("Here you go:\n```html\n<div>x</div>\n```\nenjoy")), "<div>x</div>");
    EXPECT_EQ(text::trim(extract_markup("<div>y</div>")), "<div>y</div>");
}

TEST(Generate, RetriesThenFails) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    CountingBackend bad;
    bad.answer = [](const gateway::CompletionRequest&) { return std::string("<div>broken"); };
    EXPECT_EQ(error_of([&] { generate_html(&bp, d, tokens(), bad); }), Errc::generation_failed);
    EXPECT_EQ(bad.calls, 4);

    CountingBackend second;
    const auto good = compose_html(bp, d, tokens());
    second.answer = [&](const gateway::CompletionRequest& r) { return r.variant == 1 ? good : std::string("nope"); };
    const auto g = generate_html(&bp, d, tokens(), second);
    EXPECT_EQ(g.retry_count, 1);
    EXPECT_EQ(second.calls, 2);

    GenerateOptions none;
    none.max_retries = 0;
    CountingBackend once;
    once.answer = bad.answer;
    EXPECT_EQ(error_of([&] { generate_html(&bp, d, tokens(), once, none); }), Errc::generation_failed);
    EXPECT_EQ(once.calls, 1);
}

TEST(Render, StubGeometryFollowsBlueprint) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    StubRenderer r;
    support::TempDir dir("render");
    const auto res = render_page(compose_html(bp, d, tokens()), r, dir.path());
    EXPECT_EQ(res.geometry.size(), bp.elements.size());
    EXPECT_EQ(res.screenshot_png.substr(1, 3), "PNG");
    EXPECT_TRUE(geometric_defects(res.geometry).empty());
    EXPECT_EQ(error_of([&] { render_page("<p>no root", r, dir.path()); }), Errc::precondition);
}

TEST(Render, OverflowingTextIsDetectedAndRefined) {
    narrative::PageDescription d = sample(0, false);
    for (int i = 0; i < 40; ++i) d.bullets.push_back("A long bullet that keeps going on about district heat number " +
                                                     std::to_string(i));
    const auto bp = default_blueprint(d);
    const auto markup = compose_html(bp, d, tokens());
    StubRenderer r;
    support::TempDir dir("overflow");
    const auto res = render_page(markup, r, dir.path());
    const auto defects = geometric_defects(res.geometry);
    ASSERT_FALSE(defects.empty());
    EXPECT_EQ(defects[0].category, DefectCategory::overflow_cropped);

    const Detector detect = [](const RenderResult& rr) { return detect_defects(rr, 0); };
    const auto refined = refine_page(markup, r, dir.path(), detect, heuristic_patch, 5);
    EXPECT_LE(refined.iterations, 5);
    EXPECT_NE(refined.markup, markup);
    EXPECT_NE(refined.markup.find("data-fit"), std::string::npos);
}

TEST(Defects, OverlapNeedsTwoTextBoxesAboveThreshold) {
    std::vector<ElementBox> boxes = {{"e0", "text_block", 0, 0, 100, 100, 100, true},
                                     {"e1", "text_block", 50, 50, 100, 100, 100, true},
                                     {"e2", "figure", 0, 0, 100, 100, 100, false}};
    const auto d = geometric_defects(boxes);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].category, DefectCategory::overlap_unreadable);
    EXPECT_EQ(d[0].locator, "e0,e1");
    boxes[1].x = 80;  // 20% of the smaller box
    EXPECT_TRUE(geometric_defects(boxes).empty());
    boxes.push_back({"e3", "figure", 1200, 10, 200, 50, 50, false});
    const auto off = geometric_defects(boxes);
    ASSERT_EQ(off.size(), 1u);
    EXPECT_EQ(off[0].locator, "e3");
}

TEST(Defects, FormatParseRoundTrip) {
    DefectReport r;
    r.defects = {{DefectCategory::overflow_cropped, "e2", "too tall"},
                 {DefectCategory::overlap_unreadable, "e1,e3", "overlap"}};
    const auto back = parse_defect_lines(format_defects(r));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].locator, "e1,e3");
    EXPECT_EQ(back[0].category, DefectCategory::overflow_cropped);
    EXPECT_TRUE(parse_defect_lines(format_defects({})).empty());
}

TEST(Patch, GarbledTextLosesReplacementCharacters) {
    const std::string m = "<div data-id=\"e0\">Bro\xEF\xBF\xBDken</div>";
    DefectReport r;
    r.defects = {{DefectCategory::garbled_rendering, "e0", ""}};
    EXPECT_EQ(heuristic_patch(m, r), "<div data-id=\"e0\">Broken</div>");
    EXPECT_EQ(heuristic_patch(m, {}), m);
}

TEST(Patch, SetElementAttribute) {
    const std::string m = "<div data-id=\"e0\" class=\"a\">x</div><p data-id=\"e1\">y</p>";
    const auto out = set_element_attribute(m, "e1", "data-fit", "2");
    EXPECT_EQ(html::parse(out).errors.size(), 0u);
    EXPECT_NE(out.find("data-fit=\"2\""), std::string::npos);
    EXPECT_EQ(out.substr(0, 34), m.substr(0, 34));
}

TEST(Refine, StopsOnConvergence) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    const auto m = compose_html(bp, d, tokens());
    StubRenderer r;
    support::TempDir dir("clean");
    int patches = 0;
    const Patcher count = [&](const std::string& x, const DefectReport&) {
        ++patches;
        return x;
    };
    const auto res = refine_page(m, r, dir.path(), [](const RenderResult& rr) { return detect_defects(rr, 0); },
                                 count, 5);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.iterations, 0);
    EXPECT_EQ(patches, 0);
    EXPECT_EQ(res.markup, m);
}

TEST(Refine, PatchThatBreaksElementsIsRejected) {
    const auto d = sample();
    const auto bp = default_blueprint(d);
    const auto m = compose_html(bp, d, tokens());
    StubRenderer r;
    support::TempDir dir("reject");
    const Detector always = [](const RenderResult&) {
        return DefectReport{0, {{DefectCategory::overflow_cropped, "e0", "x"}}};
    };
    const Patcher destroy = [](const std::string&, const DefectReport&) { return std::string("<div>gone</div>"); };
    const auto res = refine_page(m, r, dir.path(), always, destroy, 3);
    EXPECT_EQ(res.markup, m);
    EXPECT_EQ(res.iterations, 3);
    EXPECT_FALSE(res.converged);
    for (const auto& step : res.trace)
        if (!step.defects.empty()) EXPECT_FALSE(step.patched);
}
