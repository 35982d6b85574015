#include "unislide/pipeline.hpp"

#include <cstdio>

#include "unislide/text.hpp"

namespace unislide::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const std::vector<Components>& ablation_configs() {
    //                                  retrieval alignment layout refine
    static const std::vector<Components> configs = {
        {"a", true, false, false, false},
        {"b", true, true, false, false},
        {"c", false, true, true, true},
        {"d", true, false, true, true},
        {"e", true, true, false, true},
        {"f", true, true, true, false},
        {"g", true, true, true, true},
    };
    return configs;
}

std::optional<Components> ablation_config(std::string_view name) {
    for (const auto& c : ablation_configs()) {
        if (c.name == name) return c;
    }
    return std::nullopt;
}

ojson to_json(const Components& c) {
    ojson j;
    j["name"] = c.name;
    j["evidence_retrieval"] = c.evidence_retrieval;
    j["visual_alignment"] = c.visual_alignment;
    j["layout_planning"] = c.layout_planning;
    j["perceptual_refinement"] = c.perceptual_refinement;
    return j;
}

std::string deck_hash(const task::Deck& deck) {
    std::string material;
    for (const auto& h : deck.slide_hashes()) material += h + "\n";
    return text::sha256_hex(material);
}

namespace {

template <typename F>
auto in_module(const char* module, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string(module) + ": " + e.message());
    }
}

std::string slide_name(std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "slide_%02zu%s", i, ext);
    return buf;
}

void dump(const fs::path& dir, const std::string& name, const ojson& j) {
    task::write_file(dir / name, j.dump(2) + "\n");
}

}  // namespace

PipelineResult run_pipeline(const task::Task& t, const Backends& backends, const PipelineOptions& options,
                            const fs::path& out_dir) {
    if (!backends.llm) throw Error(Errc::precondition, "pipeline needs a language model backend");
    auto& llm = *backends.llm;
    auto& vision = backends.vision ? *backends.vision : llm;
    auto& embedder = backends.embedder ? *backends.embedder : llm;
    visual::StubRenderer stub;
    auto& renderer = backends.renderer ? *backends.renderer : static_cast<visual::Renderer&>(stub);
    const auto& comp = options.components;

    PipelineResult r;
    fs::create_directories(out_dir);

    // narrative agent
    r.kb = in_module("narrative_agent", [&] { return narrative::build_knowledge_base(t.documents, llm, options.knowledge); });
    r.plan = in_module("narrative_agent", [&] { return narrative::plan_narrative(r.kb.card, t.intent, llm); });
    r.outline = in_module("narrative_agent", [&] { return narrative::induce_outline(r.plan, r.kb.facts, t.intent, llm); });
    r.grounding.assign(r.outline.pages.size(), {});
    if (comp.evidence_retrieval && !r.kb.chunks.empty()) {
        in_module("narrative_agent", [&] {
            const auto index = narrative::index_chunks(r.kb.chunks, embedder);
            for (std::size_t i = 0; i < r.outline.pages.size(); ++i)
                r.grounding[i] = narrative::retrieve_evidence(r.outline.pages[i], index, embedder, options.retrieval);
            return 0;
        });
    }
    r.descriptions = in_module("narrative_agent", [&] {
        return narrative::synthesize_page_descriptions(r.outline, r.plan, r.grounding, llm);
    });
    if (comp.visual_alignment) {
        std::vector<narrative::FigureCandidate> figures;
        for (const auto& d : t.documents) {
            for (const auto& f : d.figures) figures.push_back({f, (t.base_dir / f.image_ref).string()});
        }
        if (!figures.empty()) {
            r.descriptions = in_module("narrative_agent", [&] {
                return narrative::align_visuals(figures, r.descriptions, embedder, vision, options.alignment);
            });
        }
    }

    // style agent
    r.style = in_module("style_agent", [&] { return style::induce_style(r.outline, style::default_schema(), llm); });

    // visual design agent
    const auto assets = out_dir / "assets";
    for (const auto& d : r.descriptions) {
        for (const auto& f : d.figures) {
            const auto src = t.base_dir / f.image_ref;
            const auto dst = assets / fs::path(f.image_ref).filename();
            if (!fs::exists(src)) {
                r.warnings.push_back("figure " + f.figure_id + ": image " + src.string() + " not found");
                continue;
            }
            fs::create_directories(assets);
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        }
    }

    r.deck.id = t.id + "-" + comp.name;
    r.deck.producer = "unislide";
    r.deck.base_dir = out_dir;
    visual::DetectOptions detect;
    detect.vision = &vision;
    detect.overlap_threshold = options.overlap_threshold;
    const auto patcher = visual::llm_patcher(llm, options.generation.temperature, options.generation.max_tokens);
    for (std::size_t i = 0; i < r.descriptions.size(); ++i) {
        const auto& d = r.descriptions[i];
        const auto tokens = style::resolve_role_style(r.style, d.role);
        std::optional<visual::LayoutBlueprint> bp;
        if (comp.layout_planning) bp = in_module("visual_design_agent", [&] { return visual::plan_layout(d, llm); });
        const auto generated = in_module("visual_design_agent", [&] {
            return visual::generate_html(bp ? &*bp : nullptr, d, tokens, llm, options.generation);
        });
        visual::RefineResult refined;
        refined.markup = generated.markup;
        if (comp.perceptual_refinement) {
            const int page = static_cast<int>(i);
            refined = in_module("visual_design_agent", [&] {
                return visual::refine_page(
                    generated.markup, renderer, out_dir,
                    [&](const visual::RenderResult& res) { return visual::detect_defects(res, page, detect); }, patcher,
                    options.max_refine_iterations);
            });
        }
        const auto shot = in_module("visual_design_agent", [&] { return visual::render_page(refined.markup, renderer, out_dir); });
        task::write_file(out_dir / slide_name(i, ".html"), refined.markup);
        task::write_file(out_dir / slide_name(i, ".png"), shot.screenshot_png);

        task::Slide slide;
        slide.index = static_cast<int>(i);
        slide.html = refined.markup;
        slide.image_ref = slide_name(i, ".png");
        slide.role = d.role;
        r.deck.slides.push_back(std::move(slide));
        r.blueprints.push_back(std::move(bp));
        r.refinements.push_back(std::move(refined));
    }
    task::save_deck(r.deck, out_dir);
    r.deck_hash = deck_hash(r.deck);

    ojson run;
    run["task_id"] = t.id;
    run["seed"] = options.seed;
    run["components"] = to_json(comp);
    run["backend"] = llm.name();
    run["renderer"] = renderer.name();
    run["deck_hash"] = r.deck_hash;
    run["warnings"] = r.warnings;
    dump(out_dir, "run.json", run);

    if (options.dump_intermediates) {
        const auto dir = out_dir / "intermediates";
        dump(dir, "knowledge_base.json", narrative::to_json(r.kb));
        dump(dir, "plan.json", narrative::to_json(r.plan));
        dump(dir, "outline.json", narrative::to_json(r.outline));
        ojson g = ojson::array();
        for (const auto& pg : r.grounding) g.push_back(narrative::to_json(pg));
        dump(dir, "grounding.json", g);
        ojson ds = ojson::array();
        for (const auto& d : r.descriptions) ds.push_back(narrative::to_json(d));
        dump(dir, "descriptions.json", ds);
        dump(dir, "style_contract.json", style::to_json(r.style));
        ojson bps = ojson::array();
        for (const auto& bp : r.blueprints) bps.push_back(bp ? visual::to_json(*bp) : ojson(nullptr));
        dump(dir, "blueprints.json", bps);
        for (std::size_t i = 0; i < r.refinements.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "refine_%02zu.json", i);
            dump(dir, name, visual::to_json(r.refinements[i]));
        }
    }
    return r;
}

}  // namespace unislide::pipeline
