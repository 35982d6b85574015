#include "unislide/sim.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "unislide/content.hpp"
#include "unislide/html.hpp"
#include "unislide/narrative.hpp"
#include "unislide/shared_eval.hpp"
#include "unislide/style.hpp"
#include "unislide/text.hpp"
#include "unislide/visual_design.hpp"

namespace unislide::sim {

namespace {

using content::content_tokens;
using content::coverage;
using json = nlohmann::json;
using Tokens = std::set<std::string>;
using Sections = std::map<std::string, std::string>;

std::string section(const Sections& s, const std::string& name) {
    const auto it = s.find(name);
    return it == s.end() ? std::string() : it->second;
}

/// "key: value" lines of a section.
std::map<std::string, std::string> fields(const std::string& body) {
    std::map<std::string, std::string> out;
    for (const auto& line : text::split_lines(body)) {
        const auto colon = line.find(": ");
        if (colon == std::string::npos) continue;
        out[text::trim(line.substr(0, colon))] = text::trim(line.substr(colon + 2));
    }
    return out;
}

std::string basename(const std::string& path) {
    const auto slash = path.find_last_of('/');
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

struct Visual {
    std::string figure_id;  // data-figure-id, may be empty
    std::string src;        // img basename, empty for redraws
    std::string text;       // alt text or inner text
};

struct Segment {
    std::string type;  // data-el of the enclosing element
    std::string text;
    Tokens tokens;
};

struct SlideView {
    int index = 0;
    std::string image;
    bool has_markup = false;
    bool parse_ok = true;
    bool has_heading = false;
    bool has_contract = false;
    bool garbled = false;
    Tokens tokens;
    std::vector<Segment> segments;
    std::vector<Visual> visuals;
};

SlideView view_slide(int index, const std::string& image, const std::string& markup) {
    SlideView v;
    v.index = index;
    v.image = image;
    v.has_markup = !text::trim(markup).empty();
    if (!v.has_markup) return v;
    const auto parsed = html::parse(markup);
    v.parse_ok = parsed.errors.empty();
    v.garbled = markup.find("\xEF\xBF\xBD") != std::string::npos;
    v.tokens = content_tokens(html::visible_text(parsed.root));
    v.has_contract = html::find_first(parsed.root, [](const html::Node& n) {
                         return n.tag == "style" && n.attr("data-style-contract");
                     }) != nullptr;
    for (const auto* seg : html::text_segments(parsed.root)) {
        Segment s;
        s.type = content::element_type_of(parsed.root, *seg);
        s.text = text::trim(text::replace_all(html::visible_text(*seg), "\n", " "));
        s.tokens = content_tokens(s.text);
        if (s.text.empty()) continue;
        if (s.type == "title" || seg->tag == "h1" || seg->tag == "h2") v.has_heading = true;
        v.segments.push_back(std::move(s));
    }
    html::visit(parsed.root, [&](const html::Node& n) {
        if (n.kind != html::Node::Kind::element) return;
        if (const auto* fid = n.attr("data-figure-id")) {
            Visual vis;
            vis.figure_id = *fid;
            const auto* img = n.tag == "img" ? &n : html::find_first(n, [](const html::Node& c) { return c.tag == "img"; });
            if (img) {
                vis.src = img->attr("src") ? basename(*img->attr("src")) : "";
                vis.text = img->attr("alt") ? *img->attr("alt") : "";
            } else {
                vis.text = text::trim(html::visible_text(n));
            }
            v.visuals.push_back(std::move(vis));
        } else if (n.tag == "img") {
            // an image outside any figure carrier
            bool carried = false;
            html::visit(parsed.root, [&](const html::Node& p) {
                if (!carried && p.attr("data-figure-id") &&
                    html::find_first(p, [&](const html::Node& c) { return &c == &n; }))
                    carried = true;
            });
            if (!carried) v.visuals.push_back({"", n.attr("src") ? basename(*n.attr("src")) : "", n.attr("alt") ? *n.attr("alt") : ""});
        }
    });
    return v;
}

std::vector<SlideView> view_deck(const std::string& deck_text) {
    std::vector<SlideView> out;
    for (const auto& s : eval::parse_deck_for_judge(deck_text)) out.push_back(view_slide(s.index, s.image, s.markup));
    return out;
}

Tokens deck_tokens(const std::vector<SlideView>& deck) {
    Tokens all;
    for (const auto& s : deck) all.insert(s.tokens.begin(), s.tokens.end());
    return all;
}

double best_slide_coverage(const Tokens& point, const std::vector<SlideView>& deck) {
    double best = 0;
    for (const auto& s : deck) best = std::max(best, coverage(point, s.tokens));
    return best;
}

double ternary(double cov) {
    if (cov >= 0.8) return 1.0;
    if (cov >= 0.4) return 0.5;
    return 0.0;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string state_answer(double state, const std::string& why) { return why + "\nSTATE: " + fmt(state) + "\n"; }

std::string score_answer(double score, const std::string& why) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", score);
    return why + "\nSCORE: " + buf + "\n";
}

double jitter_of(const gateway::CompletionRequest& req, const SimOptions& o) {
    if (o.jitter <= 0) return 0.0;
    std::uint64_t state = text::fnv1a64(req.prompt, o.seed) ^ (0x9E3779B97F4A7C15ULL * (req.variant + 1));
    const auto r = text::splitmix64(state);
    const double u = static_cast<double>(r >> 11) / static_cast<double>(1ULL << 53);
    return o.jitter * (2.0 * u - 1.0);
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// judges

std::string judge_coverage(const Sections& s) {
    const auto point = content_tokens(section(s, "POINT"));
    const auto cov = best_slide_coverage(point, view_deck(section(s, "DECK")));
    return state_answer(ternary(cov), "best single-slide token coverage " + fmt(cov));
}

std::string judge_claim(const Sections& s) {
    const auto claim = content_tokens(section(s, "CLAIM"));
    std::vector<std::string> passages;
    for (const auto& line : text::split_lines(section(s, "PASSAGES"))) {
        if (line.starts_with("[")) {
            passages.push_back(line);
        } else if (!passages.empty()) {
            passages.back() += "\n" + line;
        }
    }
    for (const auto& p : passages) {
        const auto close = p.find("] ");
        const auto body = close == std::string::npos ? p : p.substr(close + 2);
        if (coverage(claim, content_tokens(body)) >= 1.0)
            return state_answer(1, "every term of the claim appears in passage " + p.substr(0, close + 1));
    }
    return state_answer(0, "no single passage supports every term of the claim");
}

struct FigureInfo {
    std::string id;
    std::string image;
    std::string caption;
    std::string claim;
    std::vector<std::string> modes;
};

FigureInfo figure_info(const std::string& body) {
    const auto f = fields(body);
    FigureInfo info;
    auto get = [&](const char* k) { return f.count(k) ? f.at(k) : std::string(); };
    info.id = get("id");
    info.image = basename(get("image"));
    info.caption = get("caption");
    info.claim = get("paired_claim");
    for (const auto& line : text::split_lines(body)) {
        if (line.starts_with("accepted_modes:")) {
            for (const auto& t : text::split_lines(text::replace_all(line.substr(15), " ", "\n"))) {
                if (!t.empty()) info.modes.push_back(t);
            }
        }
    }
    return info;
}

enum class Use { none, reuse, redraw };

std::pair<Use, const Visual*> find_use(const FigureInfo& fig, const std::vector<SlideView>& deck) {
    const Visual* redraw = nullptr;
    for (const auto& s : deck) {
        for (const auto& v : s.visuals) {
            const bool same = (!fig.id.empty() && v.figure_id == fig.id) || (!fig.image.empty() && v.src == fig.image);
            if (!same) continue;
            if (!v.src.empty()) return {Use::reuse, &v};
            if (!redraw) redraw = &v;
        }
    }
    if (redraw) return {Use::redraw, redraw};
    return {Use::none, nullptr};
}

bool accepts(const FigureInfo& fig, const char* mode) {
    return fig.modes.empty() || std::find(fig.modes.begin(), fig.modes.end(), mode) != fig.modes.end();
}

std::string judge_utilization(const Sections& s) {
    const auto fig = figure_info(section(s, "FIGURE"));
    const auto [use, _] = find_use(fig, view_deck(section(s, "DECK")));
    if (use == Use::reuse && accepts(fig, "direct_reuse")) return state_answer(1, "figure reused directly");
    if (use == Use::redraw && accepts(fig, "faithful_redraw")) return state_answer(1, "figure redrawn");
    return state_answer(0, "figure not used in an accepted mode");
}

std::string judge_fidelity(const Sections& s) {
    const auto fig = figure_info(section(s, "FIGURE"));
    const auto [use, visual] = find_use(fig, view_deck(section(s, "DECK")));
    if (use == Use::none) return state_answer(0, "figure absent");
    if (use == Use::reuse) return state_answer(1, "original figure shown");
    Tokens numbers;
    for (const auto& t : content_tokens(fig.caption)) {
        if (text::is_number_token(t)) numbers.insert(t);
    }
    if (numbers.empty()) return state_answer(1, "redraw of a figure without quantities");
    const double kept = coverage(numbers, content_tokens(visual->text));
    return state_answer(kept >= 1.0 ? 1.0 : kept > 0 ? 0.5 : 0.0, "redraw keeps " + fmt(kept) + " of the quantities");
}

std::string judge_alignment(const Sections& s) {
    const auto v = fields(section(s, "VISUAL"));
    const auto ref = v.count("reference") ? v.at("reference") : std::string();
    const auto src = section(s, "SOURCE FIGURE");
    if (ref == "placeholder" || ref.starts_with("placeholder.") || src.empty())
        return state_answer(0, "visual is decorative or unrelated to any source figure");
    const auto fig = figure_info(src);
    auto fig_tokens = content_tokens(fig.caption + " " + fig.claim);
    Tokens slide;
    for (const auto& sv : view_deck(section(s, "SLIDE"))) {
        for (const auto& seg : sv.segments) {
            if (seg.type == "caption" || seg.type == "footer") continue;
            slide.insert(seg.tokens.begin(), seg.tokens.end());
        }
    }
    const double cov = coverage(fig_tokens, slide);
    const double state = cov >= 0.3 ? 1.0 : cov > 0.05 ? 0.5 : 0.0;
    return state_answer(state, "figure terms on the slide: " + fmt(cov));
}

std::string judge_source_point(const Sections& s) {
    const auto point = content_tokens(section(s, "POINT"));
    const auto cov = best_slide_coverage(point, view_deck(section(s, "DECK")));
    return state_answer(ternary(cov), "best single-slide token coverage " + fmt(cov));
}

std::string judge_integration(const Sections& s) {
    const auto req = content_tokens(section(s, "REQUIREMENT"));
    const auto deck = view_deck(section(s, "DECK"));
    if (best_slide_coverage(req, deck) >= 0.8) return state_answer(1, "synthesized on one slide");
    if (coverage(req, deck_tokens(deck)) >= 0.8) return state_answer(0.5, "covered only across separate slides");
    return state_answer(0, "requirement not covered");
}

int theme_slides(const Tokens& theme, const std::vector<SlideView>& deck) {
    int n = 0;
    for (const auto& sv : deck) {
        // a slide repeats the theme when one of its segments carries it
        bool hit = false;
        for (const auto& seg : sv.segments) hit = hit || (seg.type != "title" && coverage(theme, seg.tokens) >= 0.6);
        n += hit;
    }
    return n;
}

std::string judge_applicability(const Sections& s) {
    const auto theme = content_tokens(section(s, "THEME"));
    const auto cov = coverage(theme, deck_tokens(view_deck(section(s, "DECK"))));
    return state_answer(cov >= 0.6 ? 1 : 0, "theme terms present: " + fmt(cov));
}

std::string judge_consolidation(const Sections& s) {
    const auto theme = content_tokens(section(s, "THEME"));
    const int n = theme_slides(theme, view_deck(section(s, "DECK")));
    const double state = n == 1 ? 1.0 : n == 2 ? 0.5 : n == 0 ? 0.5 : 0.0;
    return state_answer(state, "theme stated on " + std::to_string(n) + " slides");
}

double map_score(double frac) { return 6.0 + 3.5 * std::clamp(frac, 0.0, 1.0); }

std::string judge_shared(const gateway::CompletionRequest& req, const Sections& s, const SimOptions& o) {
    const auto rubric = gateway::prompt_header(req.prompt, "RUBRIC").value_or("");
    const auto deck = view_deck(section(s, "DECK"));
    double frac = 0;
    std::string why;
    if (rubric == "shared/instruction_fulfillment") {
        const auto f = fields(section(s, "TASK"));
        const auto intent = content_tokens(f.count("intent") ? f.at("intent") : "");
        frac = intent.empty() ? 1.0 : coverage(intent, deck_tokens(deck));
        why = "instruction terms addressed: " + fmt(frac);
    } else if (rubric == "shared/engagement") {
        int n = 0;
        for (const auto& sv : deck) n += sv.has_heading;
        frac = deck.empty() ? 0 : static_cast<double>(n) / static_cast<double>(deck.size());
        why = "slides with a clear heading: " + fmt(frac);
    } else if (rubric == "shared/content_accuracy") {
        std::set<std::string> distinct, substantive;
        for (const auto& sv : deck) {
            for (const auto& seg : sv.segments) {
                distinct.insert(seg.text);
                if (seg.tokens.size() >= 3) substantive.insert(seg.text);
            }
        }
        frac = distinct.empty() ? 0 : static_cast<double>(substantive.size()) / static_cast<double>(distinct.size());
        why = "substantive statements: " + fmt(frac);
    } else if (rubric == "shared/visual_consistency") {
        int n = 0;
        for (const auto& sv : deck) n += sv.has_contract || !sv.has_markup;
        frac = deck.empty() ? 0 : static_cast<double>(n) / static_cast<double>(deck.size());
        why = "slides on the shared style contract: " + fmt(frac);
    } else {
        return score_answer(5.0, "unknown shared rubric");
    }
    const double base = std::round(map_score(frac) * 100.0) / 100.0;
    return score_answer(base + jitter_of(req, o), why);
}

std::string judge_slide_defect(const Sections& s) {
    for (const auto& sv : view_deck(section(s, "SLIDE"))) {
        if (!sv.parse_ok) return state_answer(1, "markup does not parse");
        if (sv.garbled) return state_answer(1, "replacement characters in the text");
        if (sv.has_markup && sv.tokens.empty() && sv.visuals.empty() && sv.image.empty())
            return state_answer(1, "blank slide");
    }
    return state_answer(0, "no critical defect");
}

std::string judge_figure_rerank(const Sections& s) {
    const auto page = content_tokens(section(s, "PAGE"));
    const auto f = fields(section(s, "FIGURE"));
    const auto caption = content_tokens(f.count("caption") ? f.at("caption") : "");
    const double score = std::round(10.0 * coverage(caption, page) * 10.0) / 10.0;
    return score_answer(score, "caption terms found on the page");
}

// ---------------------------------------------------------------------------
// extraction

std::string extract_claims(const Sections& s) {
    std::vector<std::string> lines;
    for (const auto& js : eval::parse_deck_for_judge(section(s, "SLIDE"))) {
        const auto v = view_slide(js.index, js.image, js.markup);
        for (const auto& seg : v.segments) {
            if (seg.type == "title" || seg.type == "footer") continue;
            if (seg.tokens.size() < 3) continue;
            lines.push_back("CLAIM: " + seg.text);
        }
    }
    return lines.empty() ? "NONE\n" : join_lines(lines);
}

std::string inventory(const Sections& s) {
    std::vector<std::string> lines;
    for (const auto& js : eval::parse_deck_for_judge(section(s, "SLIDE"))) {
        const auto v = view_slide(js.index, js.image, js.markup);
        for (const auto& vis : v.visuals) {
            const auto ref = !vis.figure_id.empty() ? vis.figure_id : vis.src;
            lines.push_back("VISUAL: " + ref + " | " + (vis.src.empty() ? "chart" : "image") + " | " +
                            text::replace_all(vis.text, "|", "/"));
        }
    }
    return lines.empty() ? "NONE\n" : join_lines(lines);
}

// ---------------------------------------------------------------------------
// generation

std::string summarize(const gateway::CompletionRequest& req, const Sections& s) {
    std::size_t limit = 1200;
    if (const auto l = gateway::prompt_header(req.prompt, "LIMIT")) limit = std::stoul(*l);
    return narrative::clip_to_limit(section(s, "TEXT"), std::max<std::size_t>(limit, 1)) + "\n";
}

std::string plan(const Sections& s) {
    const auto card = section(s, "CARD");
    const auto instruction = section(s, "USER INSTRUCTION");
    const auto sentences = text::split_sentences(card);
    const int body = text::trim(card).empty() ? 3 : std::clamp(static_cast<int>(sentences.size()), 2, 6);
    json j;
    std::string arc = sentences.empty() ? text::trim(instruction) : sentences.front();
    // cards are "<title>: <summary>"; the arc is the summary's opening sentence
    if (const auto colon = arc.find(": "); colon != std::string::npos && arc.substr(0, colon).find('.') == std::string::npos)
        arc = arc.substr(colon + 2);
    j["narrative_arc"] = arc;
    j["slide_count"] = body + 2;
    j["slides"] = json::array();
    j["slides"].push_back({{"role", "opening"}, {"purpose", "introduce the topic"}});
    for (int i = 0; i < body; ++i) j["slides"].push_back({{"role", "body"}, {"purpose", "develop point " + std::to_string(i + 1)}});
    j["slides"].push_back({{"role", "ending"}, {"purpose", "close"}});
    return j.dump() + "\n";
}

struct FactLine {
    std::string section_id;
    std::string doc_id;
    std::string heading;
    std::vector<std::string> sentences;
};

std::vector<FactLine> parse_facts(const std::string& body) {
    static const std::regex line_re(R"(^\[([^\]]+)\] ([^:]*): (.*)$)");
    std::vector<FactLine> out;
    for (const auto& line : text::split_lines(body)) {
        std::smatch m;
        if (std::regex_match(line, m, line_re)) {
            FactLine f;
            f.section_id = m[1].str();
            f.doc_id = f.section_id.substr(0, f.section_id.find('#'));
            f.heading = text::trim(m[2].str());
            f.sentences = text::split_sentences(m[3].str());
            out.push_back(std::move(f));
        } else if (!out.empty()) {
            for (auto& sent : text::split_sentences(line)) out.back().sentences.push_back(std::move(sent));
        }
    }
    return out;
}

std::string title_case_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (w.empty()) continue;
        std::string t = w;
        t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
        out += (out.empty() ? "" : " ") + t;
    }
    return out;
}

std::string outline(const Sections& s) {
    const auto plan_j = json::parse(section(s, "PLAN"));
    const auto p = narrative::plan_from_json(plan_j);
    const auto facts = parse_facts(section(s, "FACTS"));
    const auto instruction = text::trim(section(s, "USER INSTRUCTION"));
    std::vector<std::string> intent_words;
    for (const auto& t : text::tokenize(instruction)) {
        if (content_tokens(t).size() == 1 &&
            std::find(intent_words.begin(), intent_words.end(), t) == intent_words.end())
            intent_words.push_back(t);
    }
    int n_body = 0;
    for (const auto& d : p.slides) n_body += d.role == task::SlideRole::body;

    json pages = json::array();
    int body_index = 0;
    for (const auto& d : p.slides) {
        json page;
        if (d.role == task::SlideRole::opening) {
            page["title"] = !instruction.empty() ? text::truncate_cp(text::split_sentences(instruction).front(), 80)
                            : !facts.empty()      ? facts.front().heading
                                                  : std::string("Overview");
            page["key_message"] = p.narrative_arc.empty() ? std::string("Overview") : p.narrative_arc;
            page["content_points"] = json::array();
            page["source"] = "";
        } else if (d.role == task::SlideRole::ending) {
            page["title"] = "Key Takeaways";
            page["key_message"] = "Questions welcome";
            page["content_points"] = json::array();
            page["source"] = "";
        } else {
            std::vector<const FactLine*> mine;
            for (std::size_t k = 0; k < facts.size(); ++k) {
                if (static_cast<int>(k % static_cast<std::size_t>(std::max(n_body, 1))) == body_index)
                    mine.push_back(&facts[k]);
            }
            if (mine.empty()) {
                std::vector<std::string> words;
                for (std::size_t k = 0; k < 3 && !intent_words.empty(); ++k)
                    words.push_back(intent_words[(body_index * 3 + k) % intent_words.size()]);
                page["title"] = "Part " + std::to_string(body_index + 1) + ": " + title_case_words(words);
                page["key_message"] = instruction.empty() ? std::string("Main idea") : text::truncate_cp(instruction, 160);
                json points = json::array();
                for (const auto& w : words) points.push_back("The role of " + w + " in practice");
                page["content_points"] = points;
                page["source"] = "";
            } else {
                const auto& first = *mine.front();
                page["title"] = first.heading.empty() ? "Section " + std::to_string(body_index + 1) : first.heading;
                page["key_message"] = first.sentences.empty() ? first.heading : first.sentences.front();
                json points = json::array();
                // remaining sentences, round robin across this page's facts
                for (std::size_t depth = 0; points.size() < 4; ++depth) {
                    bool any = false;
                    for (const auto* f : mine) {
                        const std::size_t idx = f == &first ? depth + 1 : depth;
                        if (idx < f->sentences.size()) {
                            any = true;
                            if (points.size() < 4) points.push_back(f->sentences[idx]);
                        }
                    }
                    if (!any) break;
                }
                page["content_points"] = points;
                page["source"] = first.doc_id;
            }
            ++body_index;
        }
        pages.push_back(page);
    }
    return json{{"pages", pages}}.dump() + "\n";
}

std::string describe_page(const gateway::CompletionRequest& req, const Sections& s) {
    const auto page = json::parse(section(s, "OUTLINE PAGE"));
    const auto role = gateway::prompt_header(req.prompt, "ROLE").value_or("body");
    json out;
    out["title"] = page.value("title", "");
    out["narrative"] = page.value("key_message", "");
    std::vector<std::string> bullets;
    for (const auto& c : page.value("content_points", std::vector<std::string>{})) {
        if (bullets.size() < 3) bullets.push_back(c);
    }
    if (role == "body") {
        std::vector<std::string> passages;
        for (const auto& line : text::split_lines(section(s, "EVIDENCE"))) {
            static const std::regex head(R"(^\[(\d+)\] (.*)$)");
            std::smatch m;
            if (std::regex_match(line, m, head)) {
                passages.push_back(m[2].str());
            } else if (!passages.empty()) {
                passages.back() += "\n" + line;
            }
        }
        const auto narrative_tokens = content_tokens(out["narrative"].get<std::string>());
        const auto page_tokens = content_tokens(out["title"].get<std::string>() + " " + out["narrative"].get<std::string>());
        for (const auto& p : passages) {
            const auto sentences = text::split_sentences(p);
            // first and last sentences of a window may be cut mid-way
            for (std::size_t k = 1; k + 1 < sentences.size() && bullets.size() < 5; ++k) {
                const auto& sent = sentences[k];
                const auto toks = content_tokens(sent);
                if (toks.size() < 4) continue;
                std::size_t shared = 0;
                for (const auto& t : toks) shared += page_tokens.count(t);
                if (shared < 2) continue;
                bool dup = coverage(toks, narrative_tokens) >= 0.8;
                for (const auto& b : bullets) dup = dup || coverage(toks, content_tokens(b)) >= 0.8;
                if (!dup) bullets.push_back(sent);
            }
        }
    }
    out["bullets"] = bullets;
    return out.dump() + "\n";
}

std::string induce_style(const gateway::CompletionRequest& req, const SimOptions& o) {
    struct Palette {
        const char* primary;
        const char* secondary;
        const char* accent;
        const char* background;
        const char* text;
        const char* cover;
    };
    static constexpr Palette palettes[] = {
        {"#1F3A5F", "#4A6FA5", "#E07A1F", "#FFFFFF", "#1B1B1B", "#EAF0F7"},
        {"#2E4D3A", "#5E8C61", "#D4A017", "#FBFBF7", "#202020", "#EEF3EC"},
        {"#4B2E83", "#7A5CC0", "#E94F64", "#FFFFFF", "#1C1C24", "#F1ECFA"},
        {"#0F4C5C", "#3C8D93", "#F28F3B", "#FCFCFC", "#161616", "#E6F2F3"},
    };
    static constexpr const char* fonts[] = {"Inter", "Roboto", "Source Sans 3", "Lato"};
    std::uint64_t state = text::fnv1a64(gateway::prompt_sections(req.prompt)["OUTLINE"], o.seed);
    const auto& p = palettes[text::splitmix64(state) % 4];
    const auto* heading = fonts[text::splitmix64(state) % 4];
    json j;
    j["shared"] = {{"color-primary", p.primary},
                   {"color-secondary", p.secondary},
                   {"color-accent", p.accent},
                   {"color-background", p.background},
                   {"color-text", p.text},
                   {"type-display-size", "52px"},
                   {"type-h1-size", "36px"},
                   {"type-h2-size", "28px"},
                   {"type-body-size", "20px"},
                   {"type-caption-size", "14px"},
                   {"font-heading", heading},
                   {"font-body", "Inter"},
                   {"space-0", "0px"},
                   {"space-1", "4px"},
                   {"space-2", "8px"},
                   {"space-3", "16px"},
                   {"space-4", "24px"},
                   {"space-5", "40px"},
                   {"component-card", "flat"},
                   {"component-divider", "rule"},
                   {"component-bullet", "disc"},
                   {"component-chart-frame", "border"}};
    j["opening"] = {{"color-background", p.cover}};
    j["body"] = json::object();
    j["ending"] = {{"color-background", p.cover}};
    return j.dump() + "\n";
}

style::TokenMap tokens_from_css(const std::string& css) {
    style::TokenMap out;
    static const std::regex block(R"(:root\s*\{([^}]*)\})");
    std::smatch m;
    if (!std::regex_search(css, m, block)) return out;
    for (auto [k, v] : html::parse_inline_style(m[1].str())) {
        if (!k.starts_with("--")) continue;
        if (v.starts_with("\"")) v = v.substr(1, v.find('"', 1) - 1);
        out[k.substr(2)] = v;
    }
    return out;
}

std::string layout(const gateway::CompletionRequest& req, const Sections& s) {
    auto d = narrative::description_from_json(json::parse(section(s, "PAGE DESCRIPTION")));
    if (const auto role = gateway::prompt_header(req.prompt, "ROLE")) d.role = task::parse_role(*role).value_or(d.role);
    auto bp = visual::to_json(visual::default_blueprint(d));
    return json{{"elements", bp["elements"]}}.dump() + "\n";
}

std::string write_html(const gateway::CompletionRequest& req, const Sections& s) {
    auto d = narrative::description_from_json(json::parse(section(s, "PAGE DESCRIPTION")));
    if (const auto role = gateway::prompt_header(req.prompt, "ROLE")) d.role = task::parse_role(*role).value_or(d.role);
    const auto tokens = tokens_from_css(section(s, "STYLE TOKENS"));
    const auto bp_text = section(s, "BLUEPRINT");
    const auto bp = bp_text.empty() ? visual::stacked_blueprint(d)
                                    : visual::blueprint_from_json(json::parse(bp_text), d.index, d.role);
    return visual::compose_html(bp, d, tokens);
}

std::string patch(const Sections& s) {
    visual::DefectReport report;
    report.defects = visual::parse_defect_lines(section(s, "DEFECTS"));
    return visual::heuristic_patch(section(s, "MARKUP") + "\n", report);
}

std::string inspect(const Sections& s) {
    const auto markup = section(s, "MARKUP");
    if (markup.find("\xEF\xBF\xBD") == std::string::npos) return "NONE\n";
    const auto parsed = html::parse(markup);
    std::string id = "root";
    html::visit(parsed.root, [&](const html::Node& n) {
        const auto* did = n.attr("data-id");
        if (did && id == "root" && html::visible_text(n).find("\xEF\xBF\xBD") != std::string::npos) id = *did;
    });
    return "DEFECT: GARBLED_RENDERING | " + id + " | replacement characters in rendered text\n";
}

}  // namespace

std::optional<std::string> respond(const gateway::CompletionRequest& req, const SimOptions& o) {
    const auto kind = gateway::prompt_kind(req.prompt);
    const auto s = gateway::prompt_sections(req.prompt);
    try {
        if (kind == "coverage_point") return judge_coverage(s);
        if (kind == "claim_verify") return judge_claim(s);
        if (kind == "visual_utilization") return judge_utilization(s);
        if (kind == "figure_alignment") return judge_alignment(s);
        if (kind == "chart_fidelity") return judge_fidelity(s);
        if (kind == "source_contribution") return judge_source_point(s);
        if (kind == "integration_requirement") return judge_integration(s);
        if (kind == "overlap_applicability") return judge_applicability(s);
        if (kind == "overlap_consolidation") return judge_consolidation(s);
        if (kind == "shared_metric") return judge_shared(req, s, o);
        if (kind == "slide_defect_check") return judge_slide_defect(s);
        if (kind == "figure_rerank") return judge_figure_rerank(s);
        if (kind == "claim_extract") return extract_claims(s);
        if (kind == "visual_inventory") return inventory(s);
        if (kind == "card_summary" || kind == "fact_compress") return summarize(req, s);
        if (kind == "narrative_plan") return plan(s);
        if (kind == "outline") return outline(s);
        if (kind == "page_description") return describe_page(req, s);
        if (kind == "style_induction") return induce_style(req, o);
        if (kind == "layout_plan") return layout(req, s);
        if (kind == "html_generate") return write_html(req, s);
        if (kind == "refine_patch") return patch(s);
        if (kind == "defect_inspect") return inspect(s);
    } catch (const json::exception& e) {
        return std::string("unable to read the request: ") + e.what() + "\n";
    }
    return std::nullopt;
}

gateway::Handler responder(SimOptions options) {
    return [options](const gateway::CompletionRequest& req) { return respond(req, options); };
}

std::shared_ptr<gateway::MockBackend> make_mock(gateway::MockScript script) {
    const SimOptions o{script.seed, script.jitter};
    return std::make_shared<gateway::MockBackend>(std::move(script), responder(o));
}

}  // namespace unislide::sim
