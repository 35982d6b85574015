#include "unislide/narrative.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "unislide/assets.hpp"
#include "unislide/text.hpp"

namespace unislide::narrative {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using gateway::PromptBuilder;

std::vector<task::CharRange> chunk_ranges(std::size_t length, std::size_t window, std::size_t overlap) {
    if (window == 0 || overlap >= window) throw Error(Errc::precondition, "chunking needs window > overlap >= 0");
    std::vector<task::CharRange> out;
    if (length == 0) return out;
    const auto stride = window - overlap;
    for (std::size_t start = 0;; start += stride) {
        const auto end = std::min(start + window, length);
        out.push_back({start, end});
        if (end == length) break;
    }
    return out;
}

std::vector<std::string> chunk_text(std::string_view s, std::size_t window, std::size_t overlap) {
    const auto cps = text::decode_utf8(s);
    std::vector<std::string> out;
    for (const auto& r : chunk_ranges(cps.size(), window, overlap))
        out.push_back(text::encode_utf8(std::u32string_view(cps).substr(r.start, r.end - r.start)));
    return out;
}

std::vector<Chunk> build_chunks(const std::vector<task::SourceDocument>& docs, std::size_t window,
                                std::size_t overlap) {
    std::vector<Chunk> out;
    int next_id = 0;
    for (const auto& d : docs) {
        const auto cps = text::decode_utf8(d.full_text());
        for (const auto& r : chunk_ranges(cps.size(), window, overlap)) {
            Chunk c;
            c.chunk_id = next_id++;
            c.doc_id = d.id;
            c.range = r;
            c.text = text::encode_utf8(std::u32string_view(cps).substr(r.start, r.end - r.start));
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::string clip_to_limit(std::string_view s, std::size_t limit) {
    const auto cps = text::decode_utf8(s);
    if (cps.size() <= limit) return std::string(s);
    const auto floor = limit > 100 ? limit - 100 : 0;
    for (std::size_t i = limit; i > floor; --i) {
        const char32_t c = cps[i - 1];
        const bool boundary = i == limit || cps[i] == U' ' || cps[i] == U'\n';
        if ((c == U'.' || c == U'!' || c == U'?') && boundary)
            return text::encode_utf8(std::u32string_view(cps).substr(0, i));
    }
    return text::encode_utf8(std::u32string_view(cps).substr(0, limit));
}

namespace {

std::string call_text(gateway::Backend& llm, const std::string& prompt, double temperature, int max_tokens) {
    gateway::CompletionRequest req;
    req.prompt = prompt;
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    return text::trim(gateway::complete(req, llm));
}

const task::Section* find_abstract(const task::SourceDocument& d) {
    for (const auto& s : d.sections) {
        if (text::to_lower_ascii(text::trim(s.heading)) == "abstract") return &s;
    }
    return nullptr;
}

}  // namespace

KnowledgeBase build_knowledge_base(const std::vector<task::SourceDocument>& docs, gateway::Backend& llm,
                                   const KnowledgeOptions& options) {
    KnowledgeBase kb;
    if (docs.empty()) return kb;

    std::vector<std::string> cards;
    for (const auto& d : docs) {
        kb.doc_ids.push_back(d.id);
        const std::string prefix = d.title.empty() ? std::string() : d.title + ": ";
        const auto prefix_len = text::code_point_count(prefix);
        const auto budget = options.card_limit > prefix_len ? options.card_limit - prefix_len : 0;
        std::string body;
        if (const auto* abstract = find_abstract(d)) {
            body = text::truncate_cp(abstract->text, budget);
        } else {
            const auto head = text::substr_cp(d.full_text(), 0, options.summary_input);
            if (!text::trim(head).empty()) {
                const auto prompt = PromptBuilder("card_summary")
                                        .header("DOCUMENT", d.id)
                                        .header("LIMIT", std::to_string(budget))
                                        .section("INSTRUCTIONS", assets::text("prompts/card_summary.txt"))
                                        .section("TEXT", head)
                                        .str();
                body = clip_to_limit(call_text(llm, prompt, 0.4, 2048), budget);
            }
        }
        cards.push_back(prefix + body);
    }
    kb.card = text::truncate_cp(text::join(cards, "\n\n"), options.card_limit * docs.size());

    for (const auto& d : docs) {
        for (std::size_t i = 0; i < d.sections.size(); ++i) {
            const auto& s = d.sections[i];
            Fact f;
            f.doc_id = d.id;
            f.section_id = d.id + "#" + std::to_string(i);
            f.heading = s.heading;
            if (text::code_point_count(s.text) <= options.fact_limit) {
                f.summary = s.text;
            } else {
                const auto prompt = PromptBuilder("fact_compress")
                                        .header("DOCUMENT", d.id)
                                        .header("SECTION", f.section_id)
                                        .header("LIMIT", std::to_string(options.fact_limit))
                                        .section("INSTRUCTIONS", assets::text("prompts/fact_compress.txt"))
                                        .section("TEXT", s.text)
                                        .str();
                f.summary = clip_to_limit(call_text(llm, prompt, 0.4, 2048), options.fact_limit);
            }
            kb.facts.push_back(std::move(f));
        }
    }
    kb.chunks = build_chunks(docs, options.window, options.overlap);
    return kb;
}

// ---------------------------------------------------------------------------

SlidePlan plan_from_json(const json& j) {
    SlidePlan p;
    p.narrative_arc = j.value("narrative_arc", "");
    p.slide_count = j.at("slide_count").get<int>();
    for (const auto& s : j.at("slides")) {
        SlideRoleDescriptor d;
        const auto role = task::parse_role(s.at("role").get<std::string>());
        if (!role) throw Error(Errc::unparseable_plan, "unknown slide role " + s.at("role").dump());
        d.role = *role;
        d.purpose = s.value("purpose", "");
        p.slides.push_back(std::move(d));
    }
    return p;
}

SlidePlan plan_narrative(const std::string& card, const std::string& instruction, gateway::Backend& llm,
                         const StageOptions& options) {
    if (text::trim(card).empty() && text::trim(instruction).empty())
        throw Error(Errc::precondition, "planning needs a card or an instruction");
    const auto prompt = PromptBuilder("narrative_plan")
                            .section("INSTRUCTIONS", assets::text("prompts/narrative_plan.txt"))
                            .section("USER INSTRUCTION", instruction)
                            .section("CARD", card)
                            .str();
    SlidePlan plan;
    gateway::request_json(
        prompt, llm, options.temperature, options.max_tokens,
        [&](const json& j) -> std::string {
            try {
                plan = plan_from_json(j);
            } catch (const Error& e) {
                return e.what();
            }
            if (plan.slide_count < 1) return "slide_count must be >= 1";
            if (static_cast<std::size_t>(plan.slide_count) != plan.slides.size())
                return "slide_count " + std::to_string(plan.slide_count) + " does not match " +
                       std::to_string(plan.slides.size()) + " slide descriptors";
            return {};
        },
        Errc::unparseable_plan);
    return plan;
}

Outline outline_from_json(const json& j) {
    Outline o;
    for (const auto& p : j.at("pages")) {
        OutlinePage page;
        page.title = p.value("title", "");
        page.key_message = p.value("key_message", "");
        if (p.contains("content_points")) page.content_points = p.at("content_points").get<std::vector<std::string>>();
        page.source = p.value("source", "");
        o.pages.push_back(std::move(page));
    }
    return o;
}

Outline induce_outline(const SlidePlan& plan, const std::vector<Fact>& facts, const std::string& instruction,
                       gateway::Backend& llm, const StageOptions& options) {
    if (plan.slide_count < 1 || static_cast<std::size_t>(plan.slide_count) != plan.slides.size())
        throw Error(Errc::precondition, "invalid slide plan");
    std::string fact_lines;
    for (const auto& f : facts) fact_lines += "[" + f.section_id + "] " + f.heading + ": " + f.summary + "\n";
    const auto prompt = PromptBuilder("outline")
                            .section("INSTRUCTIONS", assets::text("prompts/outline.txt"))
                            .section("USER INSTRUCTION", instruction)
                            .section("PLAN", to_json(plan).dump(2))
                            .section("FACTS", fact_lines)
                            .str();
    Outline outline;
    gateway::request_json(
        prompt, llm, options.temperature, options.max_tokens,
        [&](const json& j) -> std::string {
            outline = outline_from_json(j);
            if (outline.pages.size() != plan.slides.size())
                return "expected " + std::to_string(plan.slides.size()) + " pages, got " +
                       std::to_string(outline.pages.size());
            for (std::size_t i = 0; i < outline.pages.size(); ++i) {
                if (text::trim(outline.pages[i].title).empty()) return "page " + std::to_string(i) + " has no title";
                if (text::trim(outline.pages[i].key_message).empty())
                    return "page " + std::to_string(i) + " has no key_message";
            }
            return {};
        },
        Errc::unparseable_outline);
    return outline;
}

// ---------------------------------------------------------------------------

std::size_t PageGrounding::total_chars() const {
    std::size_t n = 0;
    for (const auto& p : passages) n += text::code_point_count(p.text);
    return n;
}

ChunkIndex index_chunks(const std::vector<Chunk>& chunks, gateway::Backend& embedder) {
    ChunkIndex idx;
    idx.chunks = chunks;
    if (chunks.empty()) return idx;
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    idx.embeddings = gateway::embed(texts, embedder);
    return idx;
}

std::string page_query(const OutlinePage& page) {
    std::string q = page.title + "\n" + page.key_message;
    for (const auto& p : page.content_points) q += "\n" + p;
    return q;
}

PageGrounding retrieve_evidence(const OutlinePage& page, const ChunkIndex& index, gateway::Backend& embedder,
                                const RetrievalOptions& options) {
    PageGrounding g;
    if (index.chunks.empty()) return g;
    if (index.embeddings.size() != index.chunks.size()) throw Error(Errc::precondition, "chunk index not embedded");
    const auto q = gateway::embed({page_query(page)}, embedder).front();

    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(index.chunks.size());
    for (std::size_t i = 0; i < index.chunks.size(); ++i) {
        double s = gateway::cosine(q, index.embeddings[i]);
        if (!page.source.empty() && index.chunks[i].doc_id == page.source) s += options.source_bonus;
        ranked.emplace_back(s, i);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return index.chunks[a.second].chunk_id < index.chunks[b.second].chunk_id;
    });

    std::size_t total = 0;
    for (const auto& [score, i] : ranked) {
        if (g.passages.size() >= options.max_passages) break;
        const auto& c = index.chunks[i];
        const auto len = text::code_point_count(c.text);
        if (total + len > options.max_chars) break;
        total += len;
        g.passages.push_back({c.chunk_id, c.doc_id, c.text, score});
    }
    return g;
}

// ---------------------------------------------------------------------------

PageDescription description_from_json(const json& j) {
    PageDescription d;
    d.index = j.value("index", 0);
    d.title = j.value("title", "");
    d.narrative = j.value("narrative", "");
    if (j.contains("bullets")) d.bullets = j.at("bullets").get<std::vector<std::string>>();
    if (j.contains("role")) {
        const auto r = task::parse_role(j.at("role").get<std::string>());
        if (r) d.role = *r;
    }
    if (j.contains("figures")) {
        for (const auto& f : j.at("figures")) {
            FigureRef ref;
            ref.figure_id = f.value("figure_id", "");
            ref.image_ref = f.value("image_ref", "");
            ref.caption = f.value("caption", "");
            ref.coarse_similarity = f.value("coarse_similarity", 0.0);
            ref.fine_score = f.value("fine_score", 0.0);
            d.figures.push_back(std::move(ref));
        }
    }
    return d;
}

std::vector<PageDescription> synthesize_page_descriptions(const Outline& outline, const SlidePlan& plan,
                                                          const std::vector<PageGrounding>& grounding,
                                                          gateway::Backend& llm, const StageOptions& options) {
    if (outline.pages.size() != grounding.size() || outline.pages.size() != plan.slides.size())
        throw Error(Errc::precondition, "outline, plan and grounding page counts differ");
    std::vector<PageDescription> out;
    for (std::size_t i = 0; i < outline.pages.size(); ++i) {
        const auto& page = outline.pages[i];
        std::string evidence;
        for (const auto& p : grounding[i].passages) evidence += "[" + std::to_string(p.chunk_id) + "] " + p.text + "\n";
        const auto prompt = PromptBuilder("page_description")
                                .header("PAGE", std::to_string(i))
                                .header("ROLE", task::to_string(plan.slides[i].role))
                                .section("INSTRUCTIONS", assets::text("prompts/page_description.txt"))
                                .section("OUTLINE PAGE", to_json(Outline{{page}})["pages"][0].dump(2))
                                .section("EVIDENCE", evidence)
                                .str();
        PageDescription d;
        gateway::request_json(
            prompt, llm, options.temperature, options.max_tokens,
            [&](const json& j) -> std::string {
                if (!j.is_object()) return "expected an object";
                if (!j.contains("title") || !j.at("title").is_string() || text::trim(j.at("title").get<std::string>()).empty())
                    return "missing title";
                if (j.contains("bullets") && !j.at("bullets").is_array()) return "bullets must be an array";
                d = description_from_json(j);
                return {};
            },
            Errc::unparseable_description);
        d.index = static_cast<int>(i);
        d.role = plan.slides[i].role;
        d.figures.clear();
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string description_text(const PageDescription& d) {
    std::string s = d.title + "\n" + d.narrative;
    for (const auto& b : d.bullets) s += "\n" + b;
    return s;
}

std::vector<PageDescription> align_visuals(const std::vector<FigureCandidate>& figures,
                                           std::vector<PageDescription> descriptions, gateway::Backend& embedder,
                                           gateway::Backend& vision_llm, const AlignmentOptions& options) {
    if (figures.empty() || descriptions.empty()) return descriptions;

    std::vector<std::string> fig_texts;
    for (const auto& f : figures)
        fig_texts.push_back(f.figure.caption + "\n" + text::truncate_cp(f.figure.context, options.context_chars));
    std::vector<std::string> page_texts;
    for (const auto& d : descriptions) page_texts.push_back(description_text(d));
    const auto fig_vecs = gateway::embed(fig_texts, embedder);
    const auto page_vecs = gateway::embed(page_texts, embedder);

    const auto rubric = gateway::Rubric{"figure_rerank", "figure_rerank", assets::text("prompts/figure_rerank.txt"),
                                        gateway::StateSet::score10};
    gateway::JudgeContext ctx;
    ctx.backend = &vision_llm;
    ctx.temperature = options.temperature;

    std::vector<std::vector<FigureRef>> kept(descriptions.size());
    for (std::size_t p = 0; p < descriptions.size(); ++p) {
        for (std::size_t f = 0; f < figures.size(); ++f) {
            const double coarse = gateway::cosine(page_vecs[p], fig_vecs[f]);
            if (coarse < options.coarse_threshold) continue;
            const auto& fig = figures[f].figure;
            const auto j = gateway::judge_rubric(
                rubric, fig.id,
                {{"PAGE", page_texts[p]},
                 {"FIGURE", "id: " + fig.id + "\nimage: " + fig.image_ref + "\ncaption: " + fig.caption +
                                "\ncontext: " + text::truncate_cp(fig.context, options.context_chars)}},
                ctx);
            if (j.value() <= 0) continue;
            kept[p].push_back({fig.id, fig.image_ref, fig.caption, coarse, j.value()});
        }
        std::sort(kept[p].begin(), kept[p].end(), [](const FigureRef& a, const FigureRef& b) {
            if (a.fine_score != b.fine_score) return a.fine_score > b.fine_score;
            if (a.coarse_similarity != b.coarse_similarity) return a.coarse_similarity > b.coarse_similarity;
            return a.figure_id < b.figure_id;
        });
        if (kept[p].size() > options.max_per_page) kept[p].resize(options.max_per_page);
    }

    if (options.exclusive) {
        // best page per figure: fine score, then coarse similarity, then earliest page
        std::map<std::string, std::pair<std::size_t, const FigureRef*>> best;
        for (std::size_t p = 0; p < kept.size(); ++p) {
            for (const auto& r : kept[p]) {
                auto it = best.find(r.figure_id);
                if (it == best.end() || r.fine_score > it->second.second->fine_score ||
                    (r.fine_score == it->second.second->fine_score &&
                     r.coarse_similarity > it->second.second->coarse_similarity))
                    best[r.figure_id] = {p, &r};
            }
        }
        std::vector<std::vector<FigureRef>> exclusive(kept.size());
        for (std::size_t p = 0; p < kept.size(); ++p) {
            for (const auto& r : kept[p]) {
                if (best.at(r.figure_id).first == p) exclusive[p].push_back(r);
            }
        }
        kept = std::move(exclusive);
    }
    for (std::size_t p = 0; p < descriptions.size(); ++p) descriptions[p].figures = kept[p];
    return descriptions;
}

// ---------------------------------------------------------------------------

ojson to_json(const KnowledgeBase& kb) {
    ojson j;
    j["card"] = kb.card;
    j["facts"] = ojson::array();
    for (const auto& f : kb.facts)
        j["facts"].push_back({{"section_id", f.section_id}, {"doc_id", f.doc_id}, {"heading", f.heading},
                              {"summary", f.summary}});
    j["chunks"] = ojson::array();
    for (const auto& c : kb.chunks)
        j["chunks"].push_back({{"chunk_id", c.chunk_id},
                               {"doc_id", c.doc_id},
                               {"char_range", {c.range.start, c.range.end}},
                               {"text", c.text}});
    return j;
}

ojson to_json(const SlidePlan& plan) {
    ojson j;
    j["narrative_arc"] = plan.narrative_arc;
    j["slide_count"] = plan.slide_count;
    j["slides"] = ojson::array();
    for (const auto& s : plan.slides)
        j["slides"].push_back({{"role", std::string(task::to_string(s.role))}, {"purpose", s.purpose}});
    return j;
}

ojson to_json(const Outline& outline) {
    ojson j;
    j["pages"] = ojson::array();
    for (const auto& p : outline.pages) {
        ojson pj;
        pj["title"] = p.title;
        pj["key_message"] = p.key_message;
        pj["content_points"] = p.content_points;
        pj["source"] = p.source;
        j["pages"].push_back(std::move(pj));
    }
    return j;
}

ojson to_json(const PageGrounding& g) {
    ojson j = ojson::array();
    for (const auto& p : g.passages)
        j.push_back({{"chunk_id", p.chunk_id}, {"doc_id", p.doc_id}, {"similarity", p.similarity}, {"text", p.text}});
    return j;
}

ojson to_json(const PageDescription& d) {
    ojson j;
    j["index"] = d.index;
    j["role"] = std::string(task::to_string(d.role));
    j["title"] = d.title;
    j["narrative"] = d.narrative;
    j["bullets"] = d.bullets;
    j["figures"] = ojson::array();
    for (const auto& f : d.figures) {
        j["figures"].push_back({{"figure_id", f.figure_id},
                                {"image_ref", f.image_ref},
                                {"caption", f.caption},
                                {"coarse_similarity", f.coarse_similarity},
                                {"fine_score", f.fine_score}});
    }
    return j;
}

}  // namespace unislide::narrative
