#include "unislide/scenario_eval.hpp"

#include <algorithm>
#include <cmath>

#include "unislide/assets.hpp"
#include "unislide/shared_eval.hpp"
#include "unislide/text.hpp"

namespace unislide::eval {

double weighted_state_mean(std::span<const WeightedItemState> items) {
    if (items.empty()) throw Error(Errc::empty_item_list, "weighted_state_mean needs at least one item");
    double num = 0, den = 0;
    for (const auto& it : items) {
        if (!(it.weight > 0)) throw Error(Errc::non_positive_weight, "item '" + it.item_id + "' has weight <= 0");
        num += it.weight * it.state;
        den += it.weight;
    }
    return num / den * 10.0;
}

double state_mean(std::span<const double> states) {
    if (states.empty()) throw Error(Errc::empty_item_list, "no items to average");
    double sum = 0;
    for (double s : states) sum += s;
    return sum / static_cast<double>(states.size()) * 10.0;
}

double source_coverage(std::span<const ContributionState> items) {
    std::vector<WeightedItemState> weighted;
    weighted.reserve(items.size());
    for (const auto& c : items) {
        if (!(c.source_weight > 0) || !(c.point_weight > 0))
            throw Error(Errc::non_positive_weight, "contribution '" + c.point_id + "' has a weight <= 0");
        weighted.push_back({c.point_id, c.source_weight * c.point_weight, c.state, {}});
    }
    return weighted_state_mean(weighted);
}

std::optional<double> deduplication(std::span<const OverlapState> groups) {
    std::vector<WeightedItemState> applicable;
    for (const auto& g : groups) {
        if (g.applicable) applicable.push_back({g.group_id, g.weight, g.state, {}});
    }
    if (applicable.empty()) return std::nullopt;
    return weighted_state_mean(applicable);
}

double faithfulness(std::span<const AtomicClaim> claims) {
    std::vector<double> verdicts;
    verdicts.reserve(claims.size());
    for (const auto& c : claims) verdicts.push_back(c.verdict);
    return state_mean(verdicts);
}

std::vector<std::string> scenario_metric_ids(task::Setting setting) {
    switch (setting) {
        case task::Setting::vague_prompt: return {};
        case task::Setting::long_doc: return {"key_coverage", "faithfulness"};
        case task::Setting::multi_modal: return {"utilization", "alignment", "chart_fidelity"};
        case task::Setting::multi_source: return {"source_coverage", "integration", "deduplication"};
    }
    return {};
}

// ---------------------------------------------------------------------------

namespace {

task::JudgmentTrace trace_of(const std::string& metric, const gateway::Judgment& j) {
    task::JudgmentTrace t;
    t.metric = metric;
    t.item_id = j.item_id;
    t.state = j.state;
    t.score = j.score;
    t.rationale = j.rationale;
    t.warning = j.warning;
    return t;
}

std::string slide_markup(const task::Slide& s) {
    task::Deck single;
    single.slides = {s};
    return deck_for_judge(single);
}

std::vector<std::string> slide_image(const task::Deck& deck, const task::Slide& s) {
    if (!s.image_ref) return {};
    return {(deck.base_dir / *s.image_ref).string()};
}

/// Lines after a fixed prefix ("CLAIM:", "VISUAL:"); nullopt when the answer
/// has neither such lines nor a NONE marker.
std::optional<std::vector<std::string>> prefixed_lines(const std::string& raw, std::string_view prefix) {
    std::vector<std::string> out;
    bool none = false;
    for (const auto& line : text::split_lines(raw)) {
        auto t = text::trim(line);
        if (t.starts_with("- ")) t = text::trim(t.substr(2));
        if (text::starts_with_ci(t, prefix)) {
            auto body = text::trim(t.substr(prefix.size()));
            if (!body.empty()) out.push_back(body);
        } else if (text::to_lower_ascii(t) == "none") {
            none = true;
        }
    }
    if (out.empty() && !none) return std::nullopt;
    return out;
}

std::vector<std::string> ask_lines(const std::string& kind, const std::string& prompt_file, const task::Slide& slide,
                                   const task::Deck& deck, std::string_view prefix, const gateway::JudgeContext& ctx) {
    gateway::PromptBuilder pb(kind);
    pb.header("ITEM", "slide_" + std::to_string(slide.index));
    pb.section("INSTRUCTIONS", assets::text(prompt_file));
    pb.section("SLIDE", slide_markup(slide));
    gateway::CompletionRequest req;
    req.prompt = pb.str();
    req.temperature = ctx.temperature;
    req.max_tokens = ctx.max_tokens;
    req.variant = ctx.variant;
    req.images = slide_image(deck, slide);
    auto lines = prefixed_lines(gateway::complete(req, *ctx.backend), prefix);
    if (!lines) {
        pb.section("REPAIR", "Answer again using only `" + std::string(prefix) + " ...` lines or NONE.");
        req.prompt = pb.str();
        lines = prefixed_lines(gateway::complete(req, *ctx.backend), prefix);
        if (!lines)
            throw Error(Errc::unparseable_verdict, kind + " for slide " + std::to_string(slide.index) +
                                                       " returned no parseable lines");
    }
    return *lines;
}

}  // namespace

std::vector<WeightedItemState> pathway1_checklist(const task::Deck& deck, std::span<const CoverageItem> points,
                                                  const gateway::JudgeContext& ctx, const std::string& rubric_id) {
    if (points.empty()) throw Error(Errc::missing_annotations, "pathway 1 needs at least one coverage point");
    const auto rubric = assets::rubric(rubric_id, "coverage_point");
    const auto deck_text = deck_for_judge(deck);
    std::vector<WeightedItemState> out;
    for (const auto& p : points) {
        const auto j = gateway::judge_rubric(rubric, p.id, {{"POINT", p.text}, {"DECK", deck_text}}, ctx);
        out.push_back({p.id, p.weight, j.value(), j.rationale});
    }
    return out;
}

std::vector<AtomicClaim> pathway2_source_seeking(const task::Deck& deck, const narrative::ChunkIndex& knowledge,
                                                 gateway::Backend& embedder, const gateway::JudgeContext& ctx,
                                                 const SourceSeekingOptions& options) {
    std::vector<AtomicClaim> claims;
    if (deck.slides.empty()) return claims;
    if (knowledge.chunks.empty()) throw Error(Errc::precondition, "source-seeking verification needs source chunks");
    const auto rubric = assets::rubric("scenario/claim_verify", "claim_verify");
    for (const auto& slide : deck.slides) {
        for (const auto& text : ask_lines("claim_extract", "prompts/claim_extract.txt", slide, deck, "CLAIM:", ctx)) {
            AtomicClaim c;
            c.slide_index = slide.index;
            c.text = text;
            claims.push_back(std::move(c));
        }
    }
    if (claims.empty()) return claims;

    std::vector<std::string> texts;
    for (const auto& c : claims) texts.push_back(c.text);
    const auto vecs = gateway::embed(texts, embedder);
    for (std::size_t k = 0; k < claims.size(); ++k) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t i = 0; i < knowledge.chunks.size(); ++i)
            ranked.emplace_back(gateway::cosine(vecs[k], knowledge.embeddings[i]), i);
        std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return knowledge.chunks[a.second].chunk_id < knowledge.chunks[b.second].chunk_id;
        });
        if (ranked.size() > options.top_k) ranked.resize(options.top_k);
        std::string passages;
        for (const auto& [_, i] : ranked) {
            const auto& ch = knowledge.chunks[i];
            claims[k].evidence_trace.push_back(ch.chunk_id);
            passages += "[" + std::to_string(ch.chunk_id) + "] " + ch.text + "\n";
        }
        const auto item = "slide_" + std::to_string(claims[k].slide_index) + "/claim_" + std::to_string(k);
        const auto j = gateway::judge_rubric(rubric, item, {{"CLAIM", claims[k].text}, {"PASSAGES", passages}}, ctx);
        claims[k].verdict = j.value() >= 1.0 ? 1 : 0;
        claims[k].rationale = j.rationale;
    }
    return claims;
}

std::vector<VisualElement> visual_inventory(const task::Deck& deck, const gateway::JudgeContext& ctx) {
    std::vector<VisualElement> out;
    for (const auto& slide : deck.slides) {
        for (const auto& line :
             ask_lines("visual_inventory", "prompts/visual_inventory.txt", slide, deck, "VISUAL:", ctx)) {
            std::vector<std::string> parts;
            std::size_t start = 0;
            while (true) {
                const auto bar = line.find('|', start);
                parts.push_back(text::trim(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
                if (bar == std::string::npos) break;
                start = bar + 1;
            }
            VisualElement v;
            v.slide_index = slide.index;
            v.reference = parts.size() > 0 ? parts[0] : "";
            v.kind = parts.size() > 1 ? parts[1] : "";
            v.description = parts.size() > 2 ? parts[2] : "";
            out.push_back(std::move(v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

narrative::ChunkIndex source_index(const task::Task& task, gateway::Backend& embedder) {
    return narrative::index_chunks(narrative::build_chunks(task.documents), embedder);
}

std::string figure_evidence(const task::Task& task, const task::CriticalVisual& v) {
    std::string s = "id: " + v.figure_id + "\n";
    if (const auto* f = task.find_figure(v.figure_id)) {
        s += "image: " + f->image_ref + "\ncaption: " + f->caption + "\n";
    }
    s += "paired_claim: " + v.paired_claim + "\naccepted_modes:";
    for (auto m : v.accepted_modes) s += " " + std::string(task::to_string(m));
    return s + "\n";
}

}  // namespace

ScenarioScores score_long_doc(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx) {
    const auto& a = task.annotations;
    if (a.coverage_points.empty()) throw Error(Errc::missing_annotations, "long_doc task has no coverage points");
    ScenarioScores out;
    out.setting = task.setting;

    std::vector<CoverageItem> points;
    for (const auto& p : a.coverage_points) points.push_back({p.id, p.text, p.weight});
    const auto states = pathway1_checklist(deck, points, ctx);
    out.metrics["key_coverage"] = weighted_state_mean(states);
    for (const auto& s : states) {
        task::JudgmentTrace t;
        t.metric = "key_coverage";
        t.item_id = s.item_id;
        t.state = s.state;
        t.rationale = s.rationale;
        out.traces.push_back(std::move(t));
    }

    const auto index = source_index(task, *ctx.backend);
    const auto claims = pathway2_source_seeking(deck, index, *ctx.backend, ctx);
    for (const auto& c : claims) {
        task::JudgmentTrace t;
        t.metric = "faithfulness";
        t.item_id = "slide_" + std::to_string(c.slide_index) + ": " + c.text;
        t.state = c.verdict;
        t.rationale = c.rationale;
        out.traces.push_back(std::move(t));
    }
    if (claims.empty()) {
        out.not_applicable.push_back("faithfulness");
        out.warnings.push_back("faithfulness: no factual claims extracted from the deck");
    } else {
        out.metrics["faithfulness"] = faithfulness(claims);
    }
    return out;
}

ScenarioScores score_multimodal(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx) {
    const auto& a = task.annotations;
    if (a.critical_visuals.empty()) throw Error(Errc::missing_annotations, "multi_modal task has no critical visuals");
    ScenarioScores out;
    out.setting = task.setting;
    const auto deck_text = deck_for_judge(deck);

    const auto use_rubric = assets::rubric("scenario/visual_utilization", "visual_utilization");
    std::vector<double> used;
    for (const auto& v : a.critical_visuals) {
        const auto j = gateway::judge_rubric(use_rubric, v.figure_id,
                                             {{"FIGURE", figure_evidence(task, v)}, {"DECK", deck_text}}, ctx);
        used.push_back(j.value());
        out.traces.push_back(trace_of("utilization", j));
    }
    out.metrics["utilization"] = state_mean(used);

    const auto align_rubric = assets::rubric("scenario/figure_alignment", "figure_alignment");
    std::vector<double> aligned;
    const auto visuals = visual_inventory(deck, ctx);
    for (std::size_t k = 0; k < visuals.size(); ++k) {
        const auto& v = visuals[k];
        const auto slide_it = std::find_if(deck.slides.begin(), deck.slides.end(),
                                           [&](const task::Slide& s) { return s.index == v.slide_index; });
        gateway::Evidence ev = {{"VISUAL", "reference: " + v.reference + "\nkind: " + v.kind +
                                               "\ndescription: " + v.description},
                                {"SLIDE", slide_markup(*slide_it)}};
        for (const auto& cv : a.critical_visuals) {
            const auto* f = task.find_figure(cv.figure_id);
            const bool same = v.reference == cv.figure_id ||
                              (f && !f->image_ref.empty() &&
                               std::filesystem::path(v.reference).filename() ==
                                   std::filesystem::path(f->image_ref).filename());
            if (same) ev.push_back({"SOURCE FIGURE", figure_evidence(task, cv)});
        }
        // one judgment per occurrence
        const auto item = "slide_" + std::to_string(v.slide_index) + "/visual_" + std::to_string(k) + ":" + v.reference;
        const auto j = gateway::judge_rubric(align_rubric, item, ev, ctx, slide_image(deck, *slide_it));
        aligned.push_back(j.value());
        out.traces.push_back(trace_of("alignment", j));
    }
    if (aligned.empty()) {
        out.metrics["alignment"] = 0.0;
        out.warnings.push_back("alignment: the deck contains no visual elements");
    } else {
        out.metrics["alignment"] = state_mean(aligned);
    }

    const auto fid_rubric = assets::rubric("scenario/chart_fidelity", "chart_fidelity");
    std::vector<WeightedItemState> fidelity;
    for (const auto& v : a.critical_visuals) {
        if (!v.fidelity_required) continue;
        const auto j = gateway::judge_rubric(fid_rubric, v.figure_id,
                                             {{"FIGURE", figure_evidence(task, v)}, {"DECK", deck_text}}, ctx);
        fidelity.push_back({v.figure_id, v.weight, j.value(), j.rationale});
        out.traces.push_back(trace_of("chart_fidelity", j));
    }
    if (fidelity.empty()) {
        out.not_applicable.push_back("chart_fidelity");
        out.warnings.push_back("chart_fidelity: no critical visual requires chart fidelity");
    } else {
        out.metrics["chart_fidelity"] = weighted_state_mean(fidelity);
    }
    return out;
}

ScenarioScores score_multisource(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx) {
    const auto& a = task.annotations;
    if (a.source_contributions.empty() || a.integration_requirements.empty() || a.overlap_groups.empty())
        throw Error(Errc::missing_annotations,
                    "multi_source scoring needs source contributions, integration requirements and overlap groups");
    ScenarioScores out;
    out.setting = task.setting;
    const auto deck_text = deck_for_judge(deck);
    auto title_of = [&](const std::string& doc_id) {
        const auto* d = task.find_document(doc_id);
        return d ? doc_id + " (" + d->title + ")" : doc_id;
    };

    const auto cov_rubric = assets::rubric("scenario/source_contribution", "source_contribution");
    std::vector<ContributionState> contributions;
    for (const auto& c : a.source_contributions) {
        const auto j = gateway::judge_rubric(
            cov_rubric, c.point_id, {{"SOURCE", title_of(c.source_id)}, {"POINT", c.text}, {"DECK", deck_text}}, ctx);
        contributions.push_back({c.point_id, c.source_weight, c.point_weight, j.value()});
        out.traces.push_back(trace_of("source_coverage", j));
    }
    out.metrics["source_coverage"] = source_coverage(contributions);

    const auto int_rubric = assets::rubric("scenario/integration_requirement", "integration_requirement");
    std::vector<WeightedItemState> integration;
    for (const auto& r : a.integration_requirements) {
        std::string sources;
        for (const auto& s : r.involved_sources) sources += title_of(s) + "\n";
        const auto j = gateway::judge_rubric(int_rubric, r.id,
                                             {{"SOURCES", sources}, {"REQUIREMENT", r.text}, {"DECK", deck_text}}, ctx);
        integration.push_back({r.id, r.weight, j.value(), j.rationale});
        out.traces.push_back(trace_of("integration", j));
    }
    out.metrics["integration"] = weighted_state_mean(integration);

    const auto app_rubric = assets::rubric("scenario/overlap_applicability", "overlap_applicability");
    const auto con_rubric = assets::rubric("scenario/overlap_consolidation", "overlap_consolidation");
    std::vector<OverlapState> groups;
    for (const auto& g : a.overlap_groups) {
        std::string sources;
        for (const auto& s : g.involved_sources) sources += title_of(s) + "\n";
        const gateway::Evidence ev = {{"SOURCES", sources}, {"THEME", g.theme}, {"DECK", deck_text}};
        const auto applicable = gateway::judge_rubric(app_rubric, g.id, ev, ctx);
        auto t = trace_of("deduplication/applicability", applicable);
        out.traces.push_back(std::move(t));
        OverlapState s{g.id, g.weight, applicable.value() >= 1.0, 0.0};
        if (s.applicable) {
            const auto j = gateway::judge_rubric(con_rubric, g.id, ev, ctx);
            s.state = j.value();
            out.traces.push_back(trace_of("deduplication", j));
        }
        groups.push_back(s);
    }
    if (const auto d = deduplication(groups)) {
        out.metrics["deduplication"] = *d;
    } else {
        out.not_applicable.push_back("deduplication");
        out.warnings.push_back("deduplication: no overlap group theme appears in the deck");
    }
    return out;
}

ScenarioScores score_scenario(const task::Deck& deck, const task::Task& task, const gateway::JudgeContext& ctx) {
    switch (task.setting) {
        case task::Setting::vague_prompt: {
            ScenarioScores s;
            s.setting = task.setting;
            return s;
        }
        case task::Setting::long_doc: return score_long_doc(deck, task, ctx);
        case task::Setting::multi_modal: return score_multimodal(deck, task, ctx);
        case task::Setting::multi_source: return score_multisource(deck, task, ctx);
    }
    return {};
}

}  // namespace unislide::eval
