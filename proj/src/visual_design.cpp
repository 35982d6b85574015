#include "unislide/visual_design.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <regex>
#include <set>

#include "unislide/assets.hpp"
#include "unislide/html.hpp"
#include "unislide/png.hpp"
#include "unislide/text.hpp"

namespace unislide::visual {

namespace {

constexpr std::array<std::pair<ElementType, std::string_view>, 7> kTypeNames = {{
    {ElementType::title, "title"},
    {ElementType::text_block, "text_block"},
    {ElementType::bullet_list, "bullet_list"},
    {ElementType::figure, "figure"},
    {ElementType::chart_frame, "chart_frame"},
    {ElementType::caption, "caption"},
    {ElementType::footer, "footer"},
}};

bool bbox_ok(const task::BBox& b) {
    return b.x0 >= 0 && b.x0 < b.x1 && b.x1 <= 1 && b.y0 >= 0 && b.y0 < b.y1 && b.y1 <= 1;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
    return buf;
}

const narrative::FigureRef* find_figure(const narrative::PageDescription& d, std::string_view id) {
    for (const auto& f : d.figures) {
        if (f.figure_id == id) return &f;
    }
    return nullptr;
}

}  // namespace

std::string_view to_string(ElementType t) {
    for (const auto& [k, v] : kTypeNames) {
        if (k == t) return v;
    }
    return "text_block";
}

std::optional<ElementType> parse_element_type(std::string_view s) {
    for (const auto& [k, v] : kTypeNames) {
        if (v == s) return k;
    }
    return std::nullopt;
}

bool is_text_bearing(ElementType t) {
    return t == ElementType::title || t == ElementType::text_block || t == ElementType::bullet_list ||
           t == ElementType::caption || t == ElementType::footer;
}

std::vector<std::string> validate_blueprint(const LayoutBlueprint& bp, const narrative::PageDescription& d) {
    std::vector<std::string> out;
    std::map<std::string, int> figure_uses;
    bool has_title = false;
    for (std::size_t i = 0; i < bp.elements.size(); ++i) {
        const auto& e = bp.elements[i];
        const auto where = "element " + std::to_string(i) + " (" + std::string(to_string(e.type)) + ")";
        if (!bbox_ok(e.bbox)) out.push_back(where + ": bbox outside [0,1] or empty");
        if (e.type == ElementType::title) has_title = true;
        if (e.type == ElementType::figure) {
            if (!e.content_ref.starts_with("figure:")) {
                out.push_back(where + ": figure content_ref must be figure:<id>");
                continue;
            }
            const auto id = e.content_ref.substr(7);
            if (!find_figure(d, id)) out.push_back(where + ": figure " + id + " is not attached to the page");
            ++figure_uses[id];
        }
    }
    if (bp.role == task::SlideRole::body && !has_title) out.push_back("body slide without a title element");
    for (const auto& f : d.figures) {
        const int n = figure_uses.count(f.figure_id) ? figure_uses[f.figure_id] : 0;
        if (n != 1) out.push_back("figure " + f.figure_id + " has " + std::to_string(n) + " figure elements");
    }
    return out;
}

LayoutBlueprint default_blueprint(const narrative::PageDescription& d) {
    LayoutBlueprint bp;
    bp.page_index = d.index;
    bp.role = d.role;
    auto add = [&](ElementType t, double x0, double y0, double x1, double y1, std::string ref) {
        bp.elements.push_back({t, {x0, y0, x1, y1}, std::move(ref)});
    };
    const bool has_fig = !d.figures.empty();
    if (d.role != task::SlideRole::body && !has_fig) {
        add(ElementType::title, 0.08, 0.22, 0.92, 0.40, "title");
        if (!d.narrative.empty()) add(ElementType::text_block, 0.08, 0.44, 0.92, 0.60, "narrative");
        if (!d.bullets.empty()) add(ElementType::bullet_list, 0.08, 0.62, 0.92, 0.88, "bullets");
        add(ElementType::footer, 0.08, 0.91, 0.92, 0.96, "footer");
        return bp;
    }
    add(ElementType::title, 0.05, 0.05, 0.95, 0.16, "title");
    const double right = has_fig ? 0.50 : 0.95;
    double y = 0.20;
    if (!d.narrative.empty()) {
        add(ElementType::text_block, 0.05, y, right, d.bullets.empty() ? 0.88 : 0.38, "narrative");
        y = 0.40;
    }
    if (!d.bullets.empty()) add(ElementType::bullet_list, 0.05, y, right, 0.88, "bullets");
    if (has_fig) {
        const double slot = (0.88 - 0.20) / static_cast<double>(d.figures.size());
        for (std::size_t i = 0; i < d.figures.size(); ++i) {
            const double top = 0.20 + slot * static_cast<double>(i);
            const auto& f = d.figures[i];
            const bool captioned = !f.caption.empty();
            add(ElementType::figure, 0.54, top, 0.95, top + slot * (captioned ? 0.74 : 0.96), "figure:" + f.figure_id);
            if (captioned) add(ElementType::caption, 0.54, top + slot * 0.76, 0.95, top + slot * 0.98,
                               "caption:" + f.figure_id);
        }
    }
    add(ElementType::footer, 0.05, 0.91, 0.95, 0.96, "footer");
    return bp;
}

LayoutBlueprint stacked_blueprint(const narrative::PageDescription& d) {
    LayoutBlueprint bp;
    bp.page_index = d.index;
    bp.role = d.role;
    std::vector<std::pair<ElementType, std::string>> items = {{ElementType::title, "title"}};
    if (!d.narrative.empty()) items.push_back({ElementType::text_block, "narrative"});
    if (!d.bullets.empty()) items.push_back({ElementType::bullet_list, "bullets"});
    for (const auto& f : d.figures) items.push_back({ElementType::figure, "figure:" + f.figure_id});
    const double h = std::min(0.18, 0.92 / static_cast<double>(items.size()));
    double y = 0.04;
    for (auto& [t, ref] : items) {
        bp.elements.push_back({t, {0.05, y, 0.95, y + h}, ref});
        y += h;
    }
    return bp;
}

nlohmann::ordered_json to_json(const LayoutBlueprint& bp) {
    nlohmann::ordered_json j;
    j["page_index"] = bp.page_index;
    j["role"] = std::string(task::to_string(bp.role));
    j["elements"] = nlohmann::ordered_json::array();
    for (const auto& e : bp.elements) {
        j["elements"].push_back({{"type", std::string(to_string(e.type))},
                                 {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1}},
                                 {"content_ref", e.content_ref}});
    }
    return j;
}

LayoutBlueprint blueprint_from_json(const nlohmann::json& j, int page_index, task::SlideRole role) {
    LayoutBlueprint bp;
    bp.page_index = page_index;
    bp.role = role;
    if (!j.is_object() || !j.contains("elements") || !j["elements"].is_array())
        throw Error(Errc::unplannable_page, "layout answer lacks an elements array");
    for (const auto& e : j["elements"]) {
        const auto type = parse_element_type(e.at("type").get<std::string>());
        if (!type) throw Error(Errc::unplannable_page, "unknown element type " + e.at("type").dump());
        const auto& b = e.at("bbox");
        if (!b.is_array() || b.size() != 4) throw Error(Errc::unplannable_page, "bbox must have four numbers");
        BlueprintElement el;
        el.type = *type;
        el.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        el.content_ref = e.value("content_ref", std::string());
        bp.elements.push_back(std::move(el));
    }
    return bp;
}

LayoutBlueprint plan_layout(const narrative::PageDescription& d, gateway::Backend& llm, const LayoutOptions& options) {
    gateway::PromptBuilder pb("layout_plan");
    pb.header("PAGE", std::to_string(d.index));
    pb.header("ROLE", std::string(task::to_string(d.role)));
    pb.section("INSTRUCTIONS", assets::text("prompts/layout_plan.txt"));
    pb.section("PAGE DESCRIPTION", narrative::to_json(d).dump(2));
    LayoutBlueprint result;
    gateway::request_json(
        pb.str(), llm, options.temperature, options.max_tokens,
        [&](const nlohmann::json& j) -> std::string {
            LayoutBlueprint bp;
            try {
                bp = blueprint_from_json(j, d.index, d.role);
            } catch (const Error& e) {
                return e.what();
            }
            const auto problems = validate_blueprint(bp, d);
            if (!problems.empty()) return text::join(problems, "\n");
            result = std::move(bp);
            return {};
        },
        Errc::unplannable_page);
    return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kBaseCss =
    ".slide{position:relative;width:1280px;height:720px;overflow:hidden;background:var(--color-background);"
    "color:var(--color-text);font-family:var(--font-body)}\n"
    ".el{position:absolute;box-sizing:border-box;margin:0;line-height:1.3;"
    "font-size:calc(var(--size)*var(--fit,1))}\n"
    ".el-title{--size:var(--type-h1-size);font-family:var(--font-heading);color:var(--color-primary)}\n"
    ".slide[data-role=\"opening\"] .el-title{--size:var(--type-display-size)}\n"
    ".el-text_block,.el-bullet_list{--size:var(--type-body-size)}\n"
    ".el-caption,.el-footer{--size:var(--type-caption-size);color:var(--color-secondary)}\n"
    ".el-chart_frame{border:2px solid var(--color-accent)}\n"
    ".el h1,.el p,.el ul{margin:0;font-size:inherit;font-weight:inherit}\n"
    ".el ul{padding-left:var(--space-3)}\n"
    ".el figure{margin:0;width:100%;height:100%}\n"
    ".el img{width:100%;height:100%;object-fit:contain}\n";

std::string element_body(const BlueprintElement& e, const narrative::PageDescription& d) {
    using html::escape_attribute;
    using html::escape_text;
    switch (e.type) {
        case ElementType::title: return "<h1>" + escape_text(d.title) + "</h1>";
        case ElementType::text_block: return "<p>" + escape_text(d.narrative) + "</p>";
        case ElementType::bullet_list: {
            std::string s = "<ul>";
            for (const auto& b : d.bullets) s += "<li>" + escape_text(b) + "</li>";
            return s + "</ul>";
        }
        case ElementType::figure:
        case ElementType::chart_frame: {
            const auto id = e.content_ref.starts_with("figure:") ? e.content_ref.substr(7) : e.content_ref;
            const auto* f = find_figure(d, id);
            const auto src = f ? "assets/" + std::filesystem::path(f->image_ref).filename().string() : std::string();
            if (e.type == ElementType::chart_frame) {
                return "<p data-figure-id=\"" + escape_attribute(id) + "\">" + escape_text(f ? f->caption : id) +
                       "</p>";
            }
            return "<figure data-figure-id=\"" + escape_attribute(id) + "\"><img src=\"" + escape_attribute(src) +
                   "\" alt=\"" + escape_attribute(f ? f->caption : id) + "\"></figure>";
        }
        case ElementType::caption: {
            const auto id = e.content_ref.starts_with("caption:") ? e.content_ref.substr(8) : e.content_ref;
            const auto* f = find_figure(d, id);
            return "<p>" + escape_text(f ? f->caption : std::string()) + "</p>";
        }
        case ElementType::footer: return "<p>" + std::to_string(d.index + 1) + "</p>";
    }
    return {};
}

}  // namespace

std::string compose_html(const LayoutBlueprint& bp, const narrative::PageDescription& d,
                         const style::TokenMap& role_tokens) {
    std::string out = "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" +
                      html::escape_text(d.title) + "</title>\n";
    out += "<style data-style-contract=\"v1\">" + style::css_variables(role_tokens) + "</style>\n";
    out += "<style>\n" + std::string(kBaseCss) + "</style>\n</head>\n<body>\n";
    out += "<div class=\"slide\" data-role=\"" + std::string(task::to_string(bp.role)) +
           "\" data-aspect=\"16:9\" data-page=\"" + std::to_string(bp.page_index) + "\">\n";
    for (std::size_t i = 0; i < bp.elements.size(); ++i) {
        const auto& e = bp.elements[i];
        const auto type = std::string(to_string(e.type));
        out += "<div class=\"el el-" + type + "\" data-el=\"" + type + "\" data-id=\"e" + std::to_string(i) +
               "\" style=\"left:" + pct(e.bbox.x0) + ";top:" + pct(e.bbox.y0) + ";width:" +
               pct(e.bbox.x1 - e.bbox.x0) + ";height:" + pct(e.bbox.y1 - e.bbox.y0) + "\">";
        out += element_body(e, d);
        out += "</div>\n";
    }
    out += "</div>\n</body>\n</html>\n";
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Declaration {
    std::string property;
    std::string value;
};

std::string strip_css_comments(std::string css) {
    for (auto p = css.find("/*"); p != std::string::npos; p = css.find("/*", p)) {
        const auto e = css.find("*/", p + 2);
        css.erase(p, e == std::string::npos ? std::string::npos : e + 2 - p);
    }
    return css;
}

/// Declarations of every rule in a stylesheet.
std::vector<Declaration> stylesheet_declarations(const std::string& css) {
    std::vector<Declaration> out;
    std::size_t pos = 0;
    while (true) {
        const auto open = css.find('{', pos);
        if (open == std::string::npos) break;
        auto close = css.find('}', open);
        // one level of nesting (@media blocks)
        const auto inner_open = css.find('{', open + 1);
        if (inner_open != std::string::npos && inner_open < close) {
            pos = open + 1;
            continue;
        }
        if (close == std::string::npos) close = css.size();
        for (const auto& [k, v] : html::parse_inline_style(css.substr(open + 1, close - open - 1)))
            out.push_back({k, v});
        pos = close + 1;
    }
    return out;
}

/// Removes the first `:root{...}` block.
std::string without_root_block(const std::string& css) {
    static const std::regex root(R"(:root\s*\{[^}]*\})");
    return std::regex_replace(css, root, "", std::regex_constants::format_first_only);
}

void audit_declaration(const Declaration& d, const std::string& where, std::vector<std::string>& out) {
    static const std::regex literal(R"((#[0-9A-Fa-f]{3,8}\b)|(\b(rgb|rgba|hsl|hsla)\s*\())");
    static const std::set<std::string> color_props = {"color",        "background", "background-color",
                                                      "border-color", "outline-color", "fill", "stroke"};
    static const std::set<std::string> keywords = {"transparent", "inherit", "currentcolor", "none", "initial",
                                                   "unset"};
    const auto prop = text::to_lower_ascii(text::trim(d.property));
    const auto value = text::trim(d.value);
    const auto lower = text::to_lower_ascii(value);
    const bool uses_var = lower.find("var(") != std::string::npos;
    if (std::regex_search(value, literal)) {
        out.push_back(where + ": color literal in " + prop + ": " + value);
        return;
    }
    if (color_props.count(prop) && !uses_var && !keywords.count(lower)) {
        out.push_back(where + ": literal color in " + prop + ": " + value);
        return;
    }
    if ((prop == "font-size" || prop == "font-family" || prop == "font") && !uses_var && !keywords.count(lower))
        out.push_back(where + ": literal " + prop + ": " + value);
}

}  // namespace

std::vector<std::string> uncontracted_style(const std::string& markup) {
    const auto parsed = html::parse(markup);
    std::vector<std::string> out;
    html::visit(parsed.root, [&](const html::Node& n) {
        if (n.kind != html::Node::Kind::element) return;
        if (n.tag == "style") {
            auto css = strip_css_comments(n.text);
            if (n.attr("data-style-contract")) css = without_root_block(css);
            for (const auto& d : stylesheet_declarations(css)) audit_declaration(d, "<style>", out);
        }
        if (const auto* st = n.attr("style")) {
            const auto* id = n.attr("data-id");
            const auto where = "<" + n.tag + (id ? " data-id=" + *id : std::string()) + ">";
            for (const auto& [k, v] : html::parse_inline_style(*st)) audit_declaration({k, v}, where, out);
        }
        for (const char* legacy : {"color", "bgcolor"}) {
            if (n.attr(legacy)) out.push_back("<" + n.tag + ">: " + legacy + " attribute");
        }
    });
    return out;
}

std::vector<StructuralError> validate_html_structure(const std::string& markup, const LayoutBlueprint* blueprint) {
    std::vector<StructuralError> out;
    const auto parsed = html::parse(markup);
    for (const auto& e : parsed.errors) out.push_back({"Malformed", e});

    const auto* contract = html::find_first(parsed.root, [](const html::Node& n) {
        return n.kind == html::Node::Kind::element && n.tag == "style" && n.attr("data-style-contract");
    });
    static const std::regex root_block(R"(:root\s*\{)");
    if (!contract || !std::regex_search(contract->text, root_block)) out.push_back({"MissingStyleContract", ""});

    const auto roots = html::find_all(parsed.root, [](const html::Node& n) {
        return n.kind == html::Node::Kind::element && n.has_class("slide");
    });
    if (roots.size() != 1) {
        out.push_back({"MissingRoot", std::to_string(roots.size()) + " slide containers"});
    } else {
        const auto* aspect = roots[0]->attr("data-aspect");
        if (!aspect || *aspect != "16:9") out.push_back({"BadAspect", aspect ? *aspect : "missing"});
        const auto elements =
            html::find_all(*roots[0], [](const html::Node& n) { return n.kind == html::Node::Kind::element && n.attr("data-el"); });
        if (blueprint) {
            std::vector<bool> matched(elements.size(), false);
            for (std::size_t i = 0; i < blueprint->elements.size(); ++i) {
                const auto& be = blueprint->elements[i];
                const auto id = "e" + std::to_string(i);
                const auto type = std::string(to_string(be.type));
                bool found = false;
                for (std::size_t k = 0; k < elements.size(); ++k) {
                    const auto* did = elements[k]->attr("data-id");
                    if (matched[k] || !did || *did != id || *elements[k]->attr("data-el") != type) continue;
                    if (be.type == ElementType::figure && be.content_ref.starts_with("figure:")) {
                        const auto fid = be.content_ref.substr(7);
                        const auto* carrier = html::find_first(*elements[k], [&](const html::Node& n) {
                            const auto* a = n.attr("data-figure-id");
                            return a && *a == fid;
                        });
                        if (!carrier) continue;
                    }
                    matched[k] = found = true;
                    break;
                }
                if (!found) out.push_back({"MissingElement", type});
            }
            for (std::size_t k = 0; k < elements.size(); ++k) {
                if (!matched[k]) out.push_back({"UnexpectedElement", *elements[k]->attr("data-el")});
            }
        } else if (elements.empty()) {
            out.push_back({"MissingElement", "any"});
        }
    }
    for (auto& u : uncontracted_style(markup)) out.push_back({"UncontractedStyle", std::move(u)});
    return out;
}

std::string extract_markup(const std::string& response) {
    std::string s = response;
    const auto fence = s.find("```");
    if (fence != std::string::npos) {
        const auto line_end = s.find('\n', fence);
        const auto close = line_end == std::string::npos ? std::string::npos : s.find("```", line_end);
        if (close != std::string::npos) s = s.substr(line_end + 1, close - line_end - 1);
    }
    const auto first = s.find('<');
    const auto last = s.rfind('>');
    if (first == std::string::npos || last == std::string::npos || last < first) return text::trim(s);
    return s.substr(first, last - first + 1) + "\n";
}

GeneratedHtml generate_html(const LayoutBlueprint* blueprint, const narrative::PageDescription& d,
                            const style::TokenMap& role_tokens, gateway::Backend& llm,
                            const GenerateOptions& options) {
    std::string last_errors;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        gateway::PromptBuilder pb("html_generate");
        pb.header("PAGE", std::to_string(d.index));
        pb.header("ROLE", std::string(task::to_string(d.role)));
        pb.section("INSTRUCTIONS", assets::text("prompts/html_generate.txt"));
        if (blueprint) pb.section("BLUEPRINT", to_json(*blueprint).dump(2));
        pb.section("PAGE DESCRIPTION", narrative::to_json(d).dump(2));
        pb.section("STYLE TOKENS", style::css_variables(role_tokens));
        if (!last_errors.empty()) pb.section("PREVIOUS ERRORS", last_errors);
        gateway::CompletionRequest req;
        req.prompt = pb.str();
        req.temperature = options.temperature;
        req.max_tokens = options.max_tokens;
        req.variant = attempt;
        const auto markup = extract_markup(gateway::complete(req, llm));
        const auto errors = validate_html_structure(markup, blueprint);
        if (errors.empty()) return {markup, attempt};
        last_errors.clear();
        for (const auto& e : errors) last_errors += e.str() + "\n";
    }
    throw Error(Errc::generation_failed, "page " + std::to_string(d.index) + ": markup still invalid after " +
                                             std::to_string(options.max_retries) + " retries: " + last_errors);
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> contract_variables(const html::Node& root) {
    std::map<std::string, std::string> vars;
    const auto* contract = html::find_first(root, [](const html::Node& n) {
        return n.kind == html::Node::Kind::element && n.tag == "style" && n.attr("data-style-contract");
    });
    if (!contract) return vars;
    static const std::regex block(R"(:root\s*\{([^}]*)\})");
    std::smatch m;
    if (!std::regex_search(contract->text, m, block)) return vars;
    for (const auto& [k, v] : html::parse_inline_style(m[1].str())) {
        if (k.starts_with("--")) vars[k.substr(2)] = v;
    }
    return vars;
}

double length_of(const std::string& v, double reference) {
    const auto t = text::trim(v);
    try {
        if (t.ends_with("%")) return std::stod(t.substr(0, t.size() - 1)) / 100.0 * reference;
        if (t.ends_with("px")) return std::stod(t.substr(0, t.size() - 2));
        return std::stod(t);
    } catch (const std::exception&) {
        return 0;
    }
}

double font_px(const std::map<std::string, std::string>& vars, const std::string& token, double fallback) {
    const auto it = vars.find(token);
    if (it == vars.end()) return fallback;
    const auto px = style::parse_px(text::trim(it->second));
    return px ? *px : fallback;
}

std::vector<std::string> text_lines(const html::Node& el, ElementType type) {
    std::vector<std::string> out;
    if (type == ElementType::bullet_list) {
        for (const auto* li : html::find_all(el, [](const html::Node& n) { return n.tag == "li"; }))
            out.push_back("- " + html::visible_text(*li));
        if (!out.empty()) return out;
    }
    for (const auto& line : text::split_lines(html::visible_text(el))) {
        if (!text::trim(line).empty()) out.push_back(text::trim(line));
    }
    return out;
}

struct Inline {
    double left = 0, top = 0, width = 0, height = 0;
};

Inline inline_box(const html::Node& n) {
    Inline b;
    const auto* st = n.attr("style");
    if (!st) return b;
    for (const auto& [k, v] : html::parse_inline_style(*st)) {
        if (k == "left") b.left = length_of(v, kCanvasWidth);
        if (k == "top") b.top = length_of(v, kCanvasHeight);
        if (k == "width") b.width = length_of(v, kCanvasWidth);
        if (k == "height") b.height = length_of(v, kCanvasHeight);
    }
    return b;
}

int fit_of(const html::Node& n) {
    const auto* f = n.attr("data-fit");
    if (!f) return 0;
    try {
        return std::max(0, std::stoi(*f));
    } catch (const std::exception&) {
        return 0;
    }
}

}  // namespace

RenderResult StubRenderer::render(const std::string& markup, const std::filesystem::path&) {
    RenderResult r;
    r.markup = markup;
    const auto parsed = html::parse(markup);
    const auto* root = html::find_first(parsed.root, [](const html::Node& n) {
        return n.kind == html::Node::Kind::element && n.has_class("slide");
    });
    if (!root) throw Error(Errc::render_crash, "no slide container");
    const auto vars = contract_variables(parsed.root);
    const auto* role_attr = root->attr("data-role");
    const bool opening = role_attr && *role_attr == "opening";

    png::Image shot(kCanvasWidth, kCanvasHeight, png::parse_hex_color(vars.count("color-background") ? vars.at("color-background") : "", 0xFFFFFF));
    const auto primary = png::parse_hex_color(vars.count("color-primary") ? vars.at("color-primary") : "", 0x1F3A5F);
    const auto ink = png::parse_hex_color(vars.count("color-text") ? vars.at("color-text") : "", 0x222222);

    for (const auto* el : html::find_all(*root, [](const html::Node& n) { return n.attr("data-el") != nullptr; })) {
        ElementBox box;
        box.id = el->attr("data-id") ? *el->attr("data-id") : "";
        box.type = *el->attr("data-el");
        const auto type = parse_element_type(box.type).value_or(ElementType::text_block);
        const auto b = inline_box(*el);
        box.x = b.left;
        box.y = b.top;
        box.w = b.width;
        box.h = box.declared_h = b.height;
        box.text_bearing = is_text_bearing(type);
        if (box.text_bearing) {
            double font = 18;
            switch (type) {
                case ElementType::title:
                    font = opening ? font_px(vars, "type-display-size", 56) : font_px(vars, "type-h1-size", 40);
                    break;
                case ElementType::text_block:
                case ElementType::bullet_list: font = font_px(vars, "type-body-size", 20); break;
                default: font = font_px(vars, "type-caption-size", 14); break;
            }
            font *= std::pow(kFitStep, fit_of(*el));
            const double per_line = std::max(1.0, std::floor(box.w / (0.52 * font)));
            double lines = 0;
            for (const auto& line : text_lines(*el, type))
                lines += std::max(1.0, std::ceil(static_cast<double>(text::code_point_count(line)) / per_line));
            box.h = std::max(box.declared_h, lines * 1.3 * font);
            for (int k = 0; k < static_cast<int>(lines); ++k) {
                const int y = static_cast<int>(box.y + (k + 0.3) * 1.3 * font);
                shot.fill_rect(static_cast<int>(box.x), y, static_cast<int>(box.x + box.w * 0.9),
                               y + std::max(1, static_cast<int>(font * 0.5)), ink);
            }
        } else {
            shot.fill_rect(static_cast<int>(box.x), static_cast<int>(box.y), static_cast<int>(box.x + box.w),
                           static_cast<int>(box.y + box.h), 0xDDDDDD);
        }
        shot.stroke_rect(static_cast<int>(box.x), static_cast<int>(box.y), static_cast<int>(box.x + box.w),
                         static_cast<int>(box.y + box.h), primary, 2);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %s x=%.1f y=%.1f w=%.1f h=%.1f", box.id.c_str(), box.type.c_str(), box.x,
                      box.y, box.w, box.h);
        r.log.push_back(buf);
        r.geometry.push_back(std::move(box));
    }
    r.screenshot_png = png::encode(shot);
    return r;
}

RenderResult render_page(const std::string& markup, Renderer& renderer, const std::filesystem::path& asset_dir) {
    const auto parsed = html::parse(markup);
    if (!parsed.errors.empty()) throw Error(Errc::precondition, "cannot render malformed markup: " + parsed.errors[0]);
    const auto* root = html::find_first(parsed.root, [](const html::Node& n) {
        return n.kind == html::Node::Kind::element && n.has_class("slide");
    });
    if (!root) throw Error(Errc::precondition, "cannot render markup without a slide container");
    return renderer.render(markup, asset_dir);
}

// ---------------------------------------------------------------------------

std::string_view to_string(DefectCategory c) {
    switch (c) {
        case DefectCategory::overflow_cropped: return "OVERFLOW_CROPPED";
        case DefectCategory::overlap_unreadable: return "OVERLAP_UNREADABLE";
        case DefectCategory::garbled_rendering: return "GARBLED_RENDERING";
        case DefectCategory::image_text_mismatch: return "IMAGE_TEXT_MISMATCH";
    }
    return "OVERFLOW_CROPPED";
}

std::optional<DefectCategory> parse_defect_category(std::string_view s) {
    for (auto c : {DefectCategory::overflow_cropped, DefectCategory::overlap_unreadable,
                   DefectCategory::garbled_rendering, DefectCategory::image_text_mismatch}) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::vector<Defect> geometric_defects(const std::vector<ElementBox>& geometry, double overlap_threshold) {
    constexpr double slack = 0.5;
    std::vector<Defect> out;
    char buf[160];
    for (const auto& b : geometry) {
        if (b.x < -slack || b.y < -slack || b.x + b.w > kCanvasWidth + slack || b.y + b.h > kCanvasHeight + slack) {
            std::snprintf(buf, sizeof buf, "box %.0f,%.0f %.0fx%.0f exceeds the %dx%d canvas", b.x, b.y, b.w, b.h,
                          kCanvasWidth, kCanvasHeight);
            out.push_back({DefectCategory::overflow_cropped, b.id, buf});
        }
    }
    for (std::size_t i = 0; i < geometry.size(); ++i) {
        for (std::size_t k = i + 1; k < geometry.size(); ++k) {
            const auto& a = geometry[i];
            const auto& b = geometry[k];
            if (!a.text_bearing || !b.text_bearing) continue;
            const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
            const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
            if (ix <= 0 || iy <= 0) continue;
            const double smaller = std::min(a.w * a.h, b.w * b.h);
            if (smaller <= 0) continue;
            const double frac = ix * iy / smaller;
            if (frac >= overlap_threshold) {
                std::snprintf(buf, sizeof buf, "text boxes overlap by %.0f%% of the smaller box", frac * 100);
                out.push_back({DefectCategory::overlap_unreadable, a.id + "," + b.id, buf});
            }
        }
    }
    return out;
}

std::string format_defects(const DefectReport& report) {
    std::string out;
    for (const auto& d : report.defects)
        out += "DEFECT: " + std::string(to_string(d.category)) + " | " + d.locator + " | " + d.detail + "\n";
    return out.empty() ? "NONE\n" : out;
}

std::vector<Defect> parse_defect_lines(const std::string& txt) {
    std::vector<Defect> out;
    for (const auto& raw : text::split_lines(txt)) {
        const auto line = text::trim(raw);
        if (!text::starts_with_ci(line, "DEFECT:")) continue;
        std::vector<std::string> parts;
        std::size_t start = 7;
        while (true) {
            const auto bar = line.find('|', start);
            parts.push_back(text::trim(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
            if (bar == std::string::npos || parts.size() == 3) {
                if (bar != std::string::npos) parts.back() = text::trim(line.substr(start));
                break;
            }
            start = bar + 1;
        }
        const auto cat = parse_defect_category(parts[0]);
        if (!cat) continue;
        out.push_back({*cat, parts.size() > 1 ? parts[1] : "", parts.size() > 2 ? parts[2] : ""});
    }
    return out;
}

namespace {

void sort_by_priority(std::vector<Defect>& defects) {
    std::stable_sort(defects.begin(), defects.end(),
                     [](const Defect& a, const Defect& b) { return a.category < b.category; });
}

}  // namespace

DefectReport detect_defects(const RenderResult& result, int page_index, const DetectOptions& options) {
    DefectReport report;
    report.page_index = page_index;
    report.defects = geometric_defects(result.geometry, options.overlap_threshold);
    if (options.vision) {
        gateway::PromptBuilder pb("defect_inspect");
        pb.header("PAGE", std::to_string(page_index));
        pb.section("INSTRUCTIONS", assets::text("prompts/defect_inspect.txt"));
        pb.section("MARKUP", result.markup);
        gateway::CompletionRequest req;
        req.temperature = options.temperature;
        req.max_tokens = 1024;
        if (!result.screenshot_png.empty())
            req.images.push_back("data:image/png;base64," + text::base64_encode(result.screenshot_png));
        auto ask = [&](const std::string& prompt) -> std::optional<std::vector<Defect>> {
            req.prompt = prompt;
            const auto answer = gateway::complete(req, *options.vision);
            auto found = parse_defect_lines(answer);
            bool none = false;
            for (const auto& l : text::split_lines(answer)) none = none || text::to_lower_ascii(text::trim(l)) == "none";
            if (found.empty() && !none) return std::nullopt;
            return found;
        };
        auto found = ask(pb.str());
        if (!found) {
            pb.section("REPAIR", "Answer with DEFECT lines or NONE only.");
            found = ask(pb.str());
            if (!found) throw Error(Errc::malformed_response, "defect inspection answer has no DEFECT lines or NONE");
        }
        for (auto& d : *found) {
            if (d.category == DefectCategory::garbled_rendering || d.category == DefectCategory::image_text_mismatch)
                report.defects.push_back(std::move(d));
        }
    }
    sort_by_priority(report.defects);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

const html::Node* element_by_id(const html::Node& root, const std::string& id) {
    return html::find_first(root, [&](const html::Node& n) {
        const auto* a = n.attr("data-id");
        return n.kind == html::Node::Kind::element && a && *a == id;
    });
}

std::string start_tag(const html::Node& n) {
    std::string s = "<" + n.tag;
    for (const auto& [k, v] : n.attributes) s += " " + k + "=\"" + html::escape_attribute(v) + "\"";
    return s + ">";
}

std::string set_style_properties(const std::string& markup, const std::string& id,
                                 const std::vector<std::pair<std::string, std::string>>& props) {
    const auto parsed = html::parse(markup);
    const auto* n = element_by_id(parsed.root, id);
    if (!n) return markup;
    auto decls = html::parse_inline_style(n->attr("style") ? *n->attr("style") : "");
    for (const auto& [k, v] : props) {
        auto it = std::find_if(decls.begin(), decls.end(), [&](const auto& d) { return d.first == k; });
        if (it == decls.end()) {
            decls.emplace_back(k, v);
        } else {
            it->second = v;
        }
    }
    std::string style;
    for (const auto& [k, v] : decls) style += (style.empty() ? "" : ";") + k + ":" + v;
    return set_element_attribute(markup, id, "style", style);
}

std::string bump_fit(const std::string& markup, const std::string& id) {
    const auto parsed = html::parse(markup);
    const auto* n = element_by_id(parsed.root, id);
    if (!n) return markup;
    const int fit = std::min(10, fit_of(*n) + 1);
    char scale[32];
    std::snprintf(scale, sizeof scale, "%.4f", std::pow(kFitStep, fit));
    auto out = set_element_attribute(markup, id, "data-fit", std::to_string(fit));
    return set_style_properties(out, id, {{"--fit", scale}});
}

std::string pct_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", v);
    return buf;
}

/// Moves and shrinks a box so it lies inside the canvas (percent units).
std::string clamp_box(const std::string& markup, const std::string& id) {
    const auto parsed = html::parse(markup);
    const auto* n = element_by_id(parsed.root, id);
    if (!n) return markup;
    const auto b = inline_box(*n);
    double left = b.left / kCanvasWidth * 100, top = b.top / kCanvasHeight * 100;
    double width = std::min(b.width / kCanvasWidth * 100, 100.0), height = std::min(b.height / kCanvasHeight * 100, 100.0);
    left = std::clamp(left, 0.0, 100.0 - width);
    top = std::clamp(top, 0.0, 100.0 - height);
    return set_style_properties(markup, id,
                                {{"left", pct_str(left)}, {"top", pct_str(top)}, {"width", pct_str(width)},
                                 {"height", pct_str(height)}});
}

bool declared_outside_canvas(const html::Node& n) {
    const auto b = inline_box(n);
    return b.left < 0 || b.top < 0 || b.left + b.width > kCanvasWidth + 0.5 || b.top + b.height > kCanvasHeight + 0.5;
}

}  // namespace

std::string set_element_attribute(const std::string& markup, const std::string& data_id, const std::string& name,
                                  const std::string& value) {
    const auto parsed = html::parse(markup);
    const auto* n = element_by_id(parsed.root, data_id);
    if (!n) return markup;
    html::Node copy;
    copy.tag = n->tag;
    copy.attributes = n->attributes;
    auto it = std::find_if(copy.attributes.begin(), copy.attributes.end(), [&](const auto& a) { return a.first == name; });
    if (it == copy.attributes.end()) {
        copy.attributes.emplace_back(name, value);
    } else {
        it->second = value;
    }
    const auto tag_end = markup.find('>', n->begin);
    if (tag_end == std::string::npos) return markup;
    return markup.substr(0, n->begin) + start_tag(copy) + markup.substr(tag_end + 1);
}

std::string heuristic_patch(const std::string& markup, const DefectReport& report) {
    if (report.defects.empty()) return markup;
    auto defects = report.defects;
    sort_by_priority(defects);
    const auto& top = defects.front();
    switch (top.category) {
        case DefectCategory::overflow_cropped: {
            const auto parsed = html::parse(markup);
            const auto* n = element_by_id(parsed.root, top.locator);
            if (!n) return markup;
            const auto* type = n->attr("data-el");
            const bool textual = type && is_text_bearing(parse_element_type(*type).value_or(ElementType::figure));
            if (!textual || declared_outside_canvas(*n)) return clamp_box(markup, top.locator);
            return bump_fit(markup, top.locator);
        }
        case DefectCategory::overlap_unreadable: {
            const auto comma = top.locator.find(',');
            if (comma == std::string::npos) return bump_fit(markup, top.locator);
            const auto a = top.locator.substr(0, comma);
            const auto b = top.locator.substr(comma + 1);
            const auto parsed = html::parse(markup);
            const auto* na = element_by_id(parsed.root, a);
            const auto* nb = element_by_id(parsed.root, b);
            if (!na || !nb) return markup;
            const auto ba = inline_box(*na);
            const auto bb = inline_box(*nb);
            const auto& upper = ba.top <= bb.top ? a : b;
            const auto& up_box = ba.top <= bb.top ? ba : bb;
            const auto& lo_box = ba.top <= bb.top ? bb : ba;
            const auto& lower = ba.top <= bb.top ? b : a;
            const bool declared_overlap = up_box.top + up_box.height > lo_box.top + 0.5 &&
                                          std::min(up_box.left + up_box.width, lo_box.left + lo_box.width) >
                                              std::max(up_box.left, lo_box.left);
            if (declared_overlap) {
                // the declared boxes collide: push the lower one below the upper one
                const double new_top = (up_box.top + up_box.height) / kCanvasHeight * 100;
                const double height = std::max(2.0, std::min(lo_box.height / kCanvasHeight * 100, 100.0 - new_top));
                return set_style_properties(markup, lower,
                                            {{"top", pct_str(std::min(new_top, 98.0))}, {"height", pct_str(height)}});
            }
            return bump_fit(markup, upper);
        }
        case DefectCategory::garbled_rendering: return text::replace_all(markup, "\xEF\xBF\xBD", "");
        case DefectCategory::image_text_mismatch: return markup;
    }
    return markup;
}

Patcher llm_patcher(gateway::Backend& llm, double temperature, int max_tokens) {
    return [&llm, temperature, max_tokens](const std::string& markup, const DefectReport& report) {
        gateway::PromptBuilder pb("refine_patch");
        pb.header("PAGE", std::to_string(report.page_index));
        pb.section("INSTRUCTIONS", assets::text("prompts/refine_patch.txt"));
        pb.section("DEFECTS", format_defects(report));
        pb.section("MARKUP", markup);
        gateway::CompletionRequest req;
        req.prompt = pb.str();
        req.temperature = temperature;
        req.max_tokens = max_tokens;
        return extract_markup(gateway::complete(req, llm));
    };
}

namespace {

std::multiset<std::pair<std::string, std::string>> element_set(const std::string& markup) {
    std::multiset<std::pair<std::string, std::string>> out;
    const auto parsed = html::parse(markup);
    html::visit(parsed.root, [&](const html::Node& n) {
        const auto* el = n.attr("data-el");
        if (n.kind == html::Node::Kind::element && el) {
            const auto* id = n.attr("data-id");
            out.emplace(id ? *id : "", *el);
        }
    });
    return out;
}

}  // namespace

RefineResult refine_page(const std::string& markup, Renderer& renderer, const std::filesystem::path& asset_dir,
                         const Detector& detector, const Patcher& patcher, int max_iter) {
    if (max_iter < 0) throw Error(Errc::precondition, "max_iter must be >= 0");
    RefineResult result;
    result.markup = markup;
    const auto elements = element_set(markup);
    for (int pass = 0;; ++pass) {
        const auto rendered = render_page(result.markup, renderer, asset_dir);
        const auto report = detector(rendered);
        RefineStep step;
        step.pass = pass;
        step.defects = report.defects;
        if (report.defects.empty()) {
            result.converged = true;
            result.trace.push_back(std::move(step));
            break;
        }
        if (result.iterations >= max_iter) {
            result.trace.push_back(std::move(step));
            break;
        }
        ++result.iterations;
        const auto candidate = patcher(result.markup, report);
        const auto structural = validate_html_structure(candidate);
        if (!structural.empty()) {
            step.rejected = "patch breaks structure: " + structural.front().str();
        } else if (element_set(candidate) != elements) {
            step.rejected = "patch changes the element set";
        } else {
            step.patched = candidate != result.markup;
            result.markup = candidate;
        }
        result.trace.push_back(std::move(step));
    }
    return result;
}

nlohmann::ordered_json to_json(const RefineResult& r) {
    nlohmann::ordered_json j;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["passes"] = nlohmann::ordered_json::array();
    for (const auto& s : r.trace) {
        nlohmann::ordered_json p;
        p["pass"] = s.pass;
        p["defects"] = nlohmann::ordered_json::array();
        for (const auto& d : s.defects)
            p["defects"].push_back(
                {{"category", std::string(to_string(d.category))}, {"locator", d.locator}, {"detail", d.detail}});
        p["patched"] = s.patched;
        if (!s.rejected.empty()) p["rejected"] = s.rejected;
        j["passes"].push_back(std::move(p));
    }
    return j;
}

}  // namespace unislide::visual
