#include "unislide/metric_lab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <limits>
#include <numeric>
#include <regex>

#include "unislide/content.hpp"
#include "unislide/html.hpp"
#include "unislide/text.hpp"

namespace unislide::lab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(const std::vector<double>& x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}
}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw Error(Errc::arity, "pearson needs two equal-length vectors of at least 2 values");
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return kNaN;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> mean_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw Error(Errc::arity, "spearman needs two equal-length vectors of at least 3 values");
    return pearson(mean_ranks(x), mean_ranks(y));
}

double population_std(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    const double m = mean(x);
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------

namespace {

double side_score(const std::map<std::string, double>& scores, const std::vector<std::string>& ids,
                  const std::string& pair_id) {
    double sum = 0;
    for (const auto& id : ids) {
        const auto it = scores.find(id);
        if (it == scores.end()) throw Error(Errc::schema_violation, "record " + pair_id + " lacks metric " + id);
        sum += it->second;
    }
    return sum / static_cast<double>(ids.size());
}

}  // namespace

double combination_agreement(const std::vector<PreferenceRecord>& records, const std::vector<std::string>& ids) {
    if (records.empty()) throw Error(Errc::empty_item_list, "agreement needs at least one preference record");
    if (ids.empty()) return 0.5;
    double agree = 0;
    for (const auto& r : records) {
        if (r.human_choice != 'A' && r.human_choice != 'B')
            throw Error(Errc::schema_violation, "record " + r.pair_id + ": human choice must be A or B");
        const double a = side_score(r.scores_a, ids, r.pair_id);
        const double b = side_score(r.scores_b, ids, r.pair_id);
        if (a == b) {
            agree += 0.5;
        } else if ((a > b) == (r.human_choice == 'A')) {
            agree += 1.0;
        }
    }
    return agree / static_cast<double>(records.size());
}

double agreement_rate(const std::vector<PreferenceRecord>& records, const std::string& metric_id) {
    return combination_agreement(records, {metric_id});
}

Matrix pairwise_correlation(const Matrix& scores) {
    if (scores.size() < 3) throw Error(Errc::arity, "pairwise correlation needs at least 3 systems");
    const std::size_t m = scores.front().size();
    for (const auto& row : scores) {
        if (row.size() != m) throw Error(Errc::arity, "ragged score matrix");
    }
    std::vector<std::vector<double>> cols(m, std::vector<double>(scores.size()));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) cols[j][i] = scores[i][j];
    }
    Matrix out(m, std::vector<double>(m, 1.0));
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) out[a][b] = out[b][a] = pearson(cols[a], cols[b]);
    }
    return out;
}

std::vector<SelectionStep> greedy_frontier_select(const std::vector<std::string>& candidates,
                                                  const std::vector<PreferenceRecord>& records,
                                                  const std::map<std::string, double>& cost,
                                                  std::optional<double> budget) {
    auto cost_of = [&](const std::string& id) {
        const auto it = cost.find(id);
        return it == cost.end() ? 1.0 : it->second;
    };
    std::vector<std::string> selected;
    std::vector<SelectionStep> steps;
    double current = 0.5;
    double spent = 0;
    for (;;) {
        std::optional<std::string> best;
        double best_value = 0;
        for (const auto& c : candidates) {
            if (std::find(selected.begin(), selected.end(), c) != selected.end()) continue;
            if (budget && spent + cost_of(c) > *budget) continue;
            auto trial = selected;
            trial.push_back(c);
            const double v = combination_agreement(records, trial);
            const bool better = !best || v > best_value ||
                                (v == best_value && (cost_of(c) < cost_of(*best) ||
                                                     (cost_of(c) == cost_of(*best) && c < *best)));
            if (better) {
                best = c;
                best_value = v;
            }
        }
        if (!best || best_value - current <= 0) break;
        selected.push_back(*best);
        spent += cost_of(*best);
        steps.push_back({*best, best_value, best_value - current});
        current = best_value;
    }
    return steps;
}

std::vector<std::string> prune_correlated(const std::vector<std::string>& candidates, const Matrix& correlation,
                                          double threshold) {
    if (correlation.size() != candidates.size()) throw Error(Errc::arity, "correlation matrix does not match candidates");
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        bool redundant = false;
        for (std::size_t k : kept) {
            const double r = correlation[i][k];
            if (!std::isnan(r) && std::abs(r) >= threshold) redundant = true;
        }
        if (!redundant) kept.push_back(i);
    }
    std::vector<std::string> out;
    for (std::size_t k : kept) out.push_back(candidates[k]);
    return out;
}

// ---------------------------------------------------------------------------

double delta_percent(double orig, double pert) {
    if (orig == 0) throw Error(Errc::division_by_zero, "delta percent of a zero original score");
    return (pert - orig) / orig * 100.0;
}

double reliability_std(const std::vector<double>& avg_scores) {
    if (avg_scores.size() < 2) throw Error(Errc::arity, "reliability needs at least 2 runs");
    return population_std(avg_scores);
}

Robustness judge_robustness(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3)
        throw Error(Errc::arity, "robustness needs the same >= 3 systems under both judges");
    Robustness r;
    r.spearman = spearman(a, b);
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
    r.mean_delta = mean(d);
    r.std_delta = population_std(d);
    return r;
}

// ---------------------------------------------------------------------------
// Perturbation

std::string_view to_string(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::delete_key_segments: return "delete_key_segments";
        case PerturbationKind::corrupt_facts: return "corrupt_facts";
        case PerturbationKind::replace_visuals: return "replace_visuals";
        case PerturbationKind::drop_source_content: return "drop_source_content";
        case PerturbationKind::weaken_integration: return "weaken_integration";
        case PerturbationKind::inject_redundancy: return "inject_redundancy";
    }
    return "?";
}

std::optional<PerturbationKind> parse_perturbation_kind(std::string_view s) {
    for (auto k : {PerturbationKind::delete_key_segments, PerturbationKind::corrupt_facts,
                   PerturbationKind::replace_visuals, PerturbationKind::drop_source_content,
                   PerturbationKind::weaken_integration, PerturbationKind::inject_redundancy}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

bool legal_for(PerturbationKind k, task::Setting s) {
    switch (k) {
        case PerturbationKind::delete_key_segments:
        case PerturbationKind::corrupt_facts: return s == task::Setting::long_doc;
        case PerturbationKind::replace_visuals: return s == task::Setting::multi_modal;
        case PerturbationKind::drop_source_content:
        case PerturbationKind::weaken_integration:
        case PerturbationKind::inject_redundancy: return s == task::Setting::multi_source;
    }
    return false;
}

std::vector<PerturbationKind> kinds_for(task::Setting s) {
    std::vector<PerturbationKind> out;
    for (auto k : {PerturbationKind::delete_key_segments, PerturbationKind::corrupt_facts,
                   PerturbationKind::replace_visuals, PerturbationKind::drop_source_content,
                   PerturbationKind::weaken_integration, PerturbationKind::inject_redundancy}) {
        if (legal_for(k, s)) out.push_back(k);
    }
    return out;
}

namespace {

struct Edit {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string replacement;
    std::size_t order = 0;
};

struct Seg {
    const html::Node* node = nullptr;
    std::string type;
    std::string text;
    std::set<std::string> tokens;
};

struct SlideDoc {
    std::string markup;
    html::ParseResult parsed;
    std::vector<Seg> segments;
    std::vector<Edit> edits;
    std::set<std::string> tokens;
};

std::vector<SlideDoc> open_deck(const task::Deck& deck) {
    std::vector<SlideDoc> out(deck.slides.size());
    for (std::size_t i = 0; i < deck.slides.size(); ++i) {
        auto& d = out[i];
        d.markup = deck.slides[i].html.value_or("");
        if (d.markup.empty()) continue;
        d.parsed = html::parse(d.markup);
    }
    // segments point into parsed trees, so collect them once the vector is stable
    for (auto& d : out) {
        if (d.markup.empty()) continue;
        for (const auto* n : html::text_segments(d.parsed.root)) {
            Seg s;
            s.node = n;
            s.type = content::element_type_of(d.parsed.root, *n);
            s.text = text::trim(text::replace_all(html::visible_text(*n), "\n", " "));
            s.tokens = content::content_tokens(s.text);
            d.tokens.insert(s.tokens.begin(), s.tokens.end());
            d.segments.push_back(std::move(s));
        }
    }
    return out;
}

bool editable(const Seg& s) { return s.type != "title" && s.type != "footer" && s.type != "caption"; }

std::string apply_edits(const std::string& markup, std::vector<Edit> edits) {
    // later offsets first; at equal offsets keep insertion order
    std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) {
        return a.begin != b.begin ? a.begin > b.begin : a.order > b.order;
    });
    std::string out = markup;
    for (const auto& e : edits) out.replace(e.begin, e.end - e.begin, e.replacement);
    return out;
}

std::string rewrite_attr(std::string tag, const std::string& name, const std::string& value) {
    const std::regex re("(\\s" + name + "\\s*=\\s*)(\"[^\"]*\"|'[^']*'|[^\\s>]+)");
    if (std::regex_search(tag, re)) return std::regex_replace(tag, re, "$1\"" + html::escape_attribute(value) + "\"",
                                                              std::regex_constants::format_first_only);
    const auto close = tag.rfind('>');
    const auto at = close != std::string::npos && close > 0 && tag[close - 1] == '/' ? close - 1 : close;
    return tag.substr(0, at) + " " + name + "=\"" + html::escape_attribute(value) + "\"" + tag.substr(at);
}

std::size_t start_tag_end(const html::Node& n) {
    return html::is_void_element(n.tag) || n.inner_begin == 0 ? n.end : n.inner_begin;
}

std::string basename(const std::string& p) { return fs::path(p).filename().string(); }

std::vector<std::string> candidate_ids(const task::Task& t, PerturbationKind k) {
    const auto& a = t.annotations;
    std::vector<std::string> out;
    switch (k) {
        case PerturbationKind::delete_key_segments:
        case PerturbationKind::corrupt_facts:
            for (const auto& p : a.coverage_points) out.push_back(p.id);
            break;
        case PerturbationKind::replace_visuals:
            for (const auto& v : a.critical_visuals) out.push_back(v.figure_id);
            if (out.empty()) {
                for (const auto& d : t.documents) {
                    for (const auto& f : d.figures) out.push_back(f.id);
                }
            }
            break;
        case PerturbationKind::drop_source_content:
            for (const auto& c : a.source_contributions) {
                if (std::find(out.begin(), out.end(), c.source_id) == out.end()) out.push_back(c.source_id);
            }
            break;
        case PerturbationKind::weaken_integration:
            for (const auto& r : a.integration_requirements) out.push_back(r.id);
            break;
        case PerturbationKind::inject_redundancy:
            for (const auto& g : a.overlap_groups) out.push_back(g.id);
            break;
    }
    return out;
}

struct Recorder {
    ojson edits = ojson::array();
    std::set<std::string> touched_targets;
    std::size_t order = 0;

    void add(std::vector<SlideDoc>& docs, std::size_t slide, Edit e, const std::string& target,
             const std::string& action, const std::string& what) {
        e.order = order++;
        docs[slide].edits.push_back(std::move(e));
        edits.push_back({{"slide", slide}, {"target", target}, {"action", action}, {"text", what}});
        touched_targets.insert(target);
    }
};

void delete_matching(std::vector<SlideDoc>& docs, const std::set<std::string>& point, const std::string& target,
                     Recorder& rec, std::optional<std::size_t> only_slide = std::nullopt) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (only_slide && *only_slide != i) continue;
        for (const auto& s : docs[i].segments) {
            if (!editable(s) || !content::segment_matches(s.tokens, point)) continue;
            rec.add(docs, i, {s.node->begin, s.node->end, "", 0}, target, "delete", s.text);
        }
    }
}

void corrupt_matching(std::vector<SlideDoc>& docs, const task::Deck& deck, const std::set<std::string>& point,
                      const std::string& target, Recorder& rec) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (deck.slides[i].role != task::SlideRole::body) continue;
        for (const auto& s : docs[i].segments) {
            if (!editable(s) || s.tokens.size() < 3 || !content::segment_matches(s.tokens, point)) continue;
            const auto& m = docs[i].markup;
            const auto inner = m.substr(s.node->inner_begin, s.node->inner_end - s.node->inner_begin);
            auto at = s.node->inner_end;
            const auto dot = inner.find_last_not_of(" \t\r\n");
            if (dot != std::string::npos && inner[dot] == '.') at = s.node->inner_begin + dot;
            rec.add(docs, i, {at, at, kFabricatedClause, 0}, target, "append_clause", s.text);
        }
    }
}

void replace_visual(std::vector<SlideDoc>& docs, const task::Task& t, const std::string& figure_id, Recorder& rec) {
    const auto* fig = t.find_figure(figure_id);
    const std::string image = fig ? basename(fig->image_ref) : std::string();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& d = docs[i];
        if (d.markup.empty()) continue;
        std::map<const html::Node*, std::vector<std::pair<std::string, std::string>>> changes;
        std::function<void(const html::Node&, bool)> walk = [&](const html::Node& n, bool inside) {
            if (n.kind != html::Node::Kind::element && n.kind != html::Node::Kind::document) return;
            bool here = inside;
            if (const auto* fid = n.attr("data-figure-id"); fid && *fid == figure_id) {
                changes[&n].push_back({"data-figure-id", "placeholder"});
                here = true;
            }
            if (n.tag == "img") {
                const auto* src = n.attr("src");
                if (here || (src && !image.empty() && basename(*src) == image))
                    changes[&n].push_back({"src", kPlaceholderImage});
            }
            for (const auto& c : n.children) walk(c, here);
        };
        walk(d.parsed.root, false);
        for (const auto& [node, attrs] : changes) {
            const auto end = start_tag_end(*node);
            std::string tag = d.markup.substr(node->begin, end - node->begin);
            for (const auto& [k, v] : attrs) tag = rewrite_attr(tag, k, v);
            rec.add(docs, i, {node->begin, end, tag, 0}, figure_id, "replace_visual", node->tag);
        }
    }
}

void inject(std::vector<SlideDoc>& docs, const task::Deck& deck, const task::OverlapGroup& g, Recorder& rec) {
    const auto theme = content::content_tokens(g.theme);
    std::optional<std::size_t> src_slide;
    const Seg* best = nullptr;
    double best_cov = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (const auto& s : docs[i].segments) {
            if (!editable(s)) continue;
            const double c = content::coverage(theme, s.tokens);
            if (c > best_cov) {
                best_cov = c;
                best = &s;
                src_slide = i;
            }
        }
    }
    if (!best) return;
    auto carries = [&](std::size_t i) {
        for (const auto& s : docs[i].segments) {
            if (editable(s) && content::coverage(theme, s.tokens) >= 0.6) return true;
        }
        return false;
    };
    std::vector<std::size_t> targets;
    for (int pass = 0; pass < 2 && targets.size() < 2; ++pass) {
        for (std::size_t i = 0; i < docs.size() && targets.size() < 2; ++i) {
            if (i == *src_slide || docs[i].markup.empty() || carries(i)) continue;
            const bool body = deck.slides[i].role == task::SlideRole::body;
            if ((pass == 0) != body) continue;
            if (std::find(targets.begin(), targets.end(), i) == targets.end()) targets.push_back(i);
        }
    }
    for (auto i : targets) {
        const html::Node* container = nullptr;
        std::string kind;
        html::visit(docs[i].parsed.root, [&](const html::Node& n) {
            const auto* el = n.attr("data-el");
            if (el && (*el == "bullet_list" || *el == "text_block")) {
                container = &n;
                kind = *el;
            }
        });
        const auto escaped = html::escape_text(best->text);
        std::size_t at = 0;
        std::string insert;
        if (container && kind == "bullet_list") {
            const auto* ul = html::find_first(*container, [](const html::Node& n) { return n.tag == "ul" || n.tag == "ol"; });
            at = ul ? ul->inner_end : container->inner_end;
            insert = ul ? "<li>" + escaped + "</li>" : "<p>" + escaped + "</p>";
        } else if (container) {
            at = container->inner_end;
            insert = "<p>" + escaped + "</p>";
        } else {
            const auto* root = html::find_first(docs[i].parsed.root, [](const html::Node& n) { return n.has_class("slide"); });
            if (!root) continue;
            at = root->inner_end;
            insert = "<p>" + escaped + "</p>";
        }
        rec.add(docs, i, {at, at, insert, 0}, g.id, "insert_copy", best->text);
    }
}

}  // namespace

PerturbedDeck perturb_deck(const task::Deck& deck, const task::Task& t, const PerturbationSpec& spec) {
    if (!legal_for(spec.kind, t.setting))
        throw Error(Errc::precondition, std::string(to_string(spec.kind)) + " does not apply to a " +
                                            std::string(task::to_string(t.setting)) + " task");
    if (!(spec.intensity > 0 && spec.intensity <= 1)) throw Error(Errc::precondition, "intensity must be in (0, 1]");
    const auto candidates = candidate_ids(t, spec.kind);
    std::vector<std::string> targets = spec.target_ids;
    if (targets.empty()) {
        const auto n = static_cast<std::size_t>(std::ceil(spec.intensity * static_cast<double>(candidates.size())));
        targets.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(std::min(n, candidates.size())));
    }
    for (const auto& id : targets) {
        if (std::find(candidates.begin(), candidates.end(), id) == candidates.end())
            throw Error(Errc::target_not_found, std::string(to_string(spec.kind)) + ": unknown target " + id);
    }
    if (targets.empty()) throw Error(Errc::target_not_found, std::string(to_string(spec.kind)) + ": no targets");

    auto docs = open_deck(deck);
    Recorder rec;
    const auto& a = t.annotations;
    for (const auto& id : targets) {
        switch (spec.kind) {
            case PerturbationKind::delete_key_segments:
            case PerturbationKind::corrupt_facts: {
                const auto it = std::find_if(a.coverage_points.begin(), a.coverage_points.end(),
                                             [&](const auto& p) { return p.id == id; });
                const auto point = content::content_tokens(it->text);
                if (spec.kind == PerturbationKind::delete_key_segments) {
                    delete_matching(docs, point, id, rec);
                } else {
                    corrupt_matching(docs, deck, point, id, rec);
                }
                break;
            }
            case PerturbationKind::replace_visuals: replace_visual(docs, t, id, rec); break;
            case PerturbationKind::drop_source_content:
                for (const auto& c : a.source_contributions) {
                    if (c.source_id == id) delete_matching(docs, content::content_tokens(c.text), id, rec);
                }
                break;
            case PerturbationKind::weaken_integration: {
                const auto it = std::find_if(a.integration_requirements.begin(), a.integration_requirements.end(),
                                             [&](const auto& r) { return r.id == id; });
                const auto req = content::content_tokens(it->text);
                std::optional<std::size_t> best;
                double best_cov = 0;
                for (std::size_t i = 0; i < docs.size(); ++i) {
                    const double c = content::coverage(req, docs[i].tokens);
                    if (c > best_cov) {
                        best_cov = c;
                        best = i;
                    }
                }
                if (best) delete_matching(docs, req, id, rec, best);
                break;
            }
            case PerturbationKind::inject_redundancy: {
                const auto it = std::find_if(a.overlap_groups.begin(), a.overlap_groups.end(),
                                             [&](const auto& g) { return g.id == id; });
                inject(docs, deck, *it, rec);
                break;
            }
        }
    }
    if (rec.edits.empty())
        throw Error(Errc::target_not_found,
                    std::string(to_string(spec.kind)) + ": no slide carries any of the targeted items");

    PerturbedDeck out;
    out.deck = deck;
    out.deck.id = deck.id + "+" + std::string(to_string(spec.kind));
    std::vector<std::size_t> modified;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].edits.empty()) continue;
        out.deck.slides[i].html = apply_edits(docs[i].markup, docs[i].edits);
        modified.push_back(i);
    }
    std::vector<std::string> untouched;
    for (const auto& id : targets) {
        if (!rec.touched_targets.count(id)) untouched.push_back(id);
    }
    ojson m;
    m["kind"] = std::string(to_string(spec.kind));
    m["intensity"] = spec.intensity;
    m["targets"] = targets;
    m["untouched_targets"] = untouched;
    m["source_deck"] = deck.id;
    m["modified_slides"] = modified;
    m["edits"] = rec.edits;
    out.manifest = std::move(m);
    return out;
}

void save_perturbed(const PerturbedDeck& p, const fs::path& dir) {
    task::save_deck(p.deck, dir);
    task::write_file(dir / kPlaceholderImage,
                     "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"160\" height=\"90\">"
                     "<rect width=\"160\" height=\"90\" fill=\"#cccccc\"/></svg>\n");
    task::write_file(dir / "perturbation.json", p.manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

std::optional<double> safe_delta(double o, double p) {
    if (o == 0) return std::nullopt;
    return delta_percent(o, p);
}

std::string f2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f%%", *v);
    return buf;
}

std::optional<double> metric_of(const task::ScoreReport& r, const std::string& id) {
    if (auto it = r.shared.find(id); it != r.shared.end()) return it->second;
    if (auto it = r.scenario.find(id); it != r.scenario.end()) return it->second;
    return std::nullopt;
}

}  // namespace

ProtocolReport validate_protocol(const task::Task& t, const std::vector<task::Deck>& decks,
                                 gateway::Backend& judge_a, gateway::Backend* judge_b,
                                 const ProtocolOptions& options) {
    if (decks.empty()) throw Error(Errc::empty_deck, "protocol validation needs at least one deck");
    ProtocolReport out;
    out.baseline = eval::evaluate_deck(decks.front(), t, judge_a, options.evaluation);
    out.reliability = out.baseline.run_setting_avgs.size() >= 2 ? reliability_std(out.baseline.run_setting_avgs) : 0.0;

    for (auto kind : kinds_for(t.setting)) {
        PerturbationOutcome o{kind, {}, {}, std::nullopt, std::nullopt, {}};
        try {
            PerturbationSpec spec{kind, {}, options.intensity};
            auto p = perturb_deck(decks.front(), t, spec);
            if (options.out_dir) {
                const auto dir = *options.out_dir / ("perturbed_" + std::string(to_string(kind)));
                save_perturbed(p, dir);
                p.deck.base_dir = dir;
            }
            o.report = eval::evaluate_deck(p.deck, t, judge_a, options.evaluation);
            for (const auto& [id, v] : out.baseline.shared) o.delta[id] = safe_delta(v, o.report.shared[id]);
            for (const auto& [id, v] : out.baseline.scenario) {
                const auto pv = metric_of(o.report, id);
                o.delta[id] = pv ? safe_delta(v, *pv) : std::nullopt;
            }
            o.shared_delta = safe_delta(out.baseline.shared_mean, o.report.shared_mean);
            o.avg_delta = safe_delta(out.baseline.setting_avg, o.report.setting_avg);
        } catch (const Error& e) {
            o.error = e.what();
        }
        out.perturbations.push_back(std::move(o));
    }

    if (judge_b && decks.size() >= 3) {
        for (const auto& d : decks) {
            out.systems.push_back(d.id);
            out.judge_a_avgs.push_back(&d == &decks.front() ? out.baseline.setting_avg
                                                            : eval::evaluate_deck(d, t, judge_a, options.evaluation).setting_avg);
            out.judge_b_avgs.push_back(eval::evaluate_deck(d, t, *judge_b, options.evaluation).setting_avg);
        }
        out.robustness = judge_robustness(out.judge_a_avgs, out.judge_b_avgs);
    } else {
        out.robustness_note = judge_b ? "needs at least 3 decks" : "needs a second judge";
    }
    return out;
}

std::string protocol_markdown(const ProtocolReport& r) {
    std::string md = "# Protocol validation: " + r.baseline.task_id + "\n\n";
    md += "Baseline deck `" + r.baseline.deck_id + "`, " + std::to_string(r.baseline.runs) + " runs, backend `" +
          r.baseline.backend + "`, seed " + std::to_string(r.baseline.seed) + ".\n\n";

    md += "## Validity\n\n| Perturbation | Metric | Orig. | Pert. | Δ% |\n|---|---|---|---|---|\n";
    for (const auto& p : r.perturbations) {
        const std::string kind(to_string(p.kind));
        if (!p.error.empty()) {
            md += "| " + kind + " | (not applied) | | | " + p.error + " |\n";
            continue;
        }
        for (const auto& [id, d] : p.delta) {
            const auto o = metric_of(r.baseline, id);
            const auto v = metric_of(p.report, id);
            md += "| " + kind + " | " + id + " | " + (o ? f2(*o) : "n/a") + " | " + (v ? f2(*v) : "n/a") + " | " +
                  pct(d) + " |\n";
        }
        md += "| " + kind + " | Shared | " + f2(r.baseline.shared_mean) + " | " + f2(p.report.shared_mean) + " | " +
              pct(p.shared_delta) + " |\n";
        md += "| " + kind + " | Avg | " + f2(r.baseline.setting_avg) + " | " + f2(p.report.setting_avg) + " | " +
              pct(p.avg_delta) + " |\n";
    }

    md += "\n## Reliability\n\n| Run | Avg |\n|---|---|\n";
    for (std::size_t i = 0; i < r.baseline.run_setting_avgs.size(); ++i)
        md += "| " + std::to_string(i + 1) + " | " + f2(r.baseline.run_setting_avgs[i]) + " |\n";
    md += "\nStd (population): " + f2(r.reliability) + "\n";

    md += "\n## Robustness\n\n";
    if (!r.robustness) {
        md += "Not computed: " + r.robustness_note + ".\n";
        return md;
    }
    md += "| System | Judge A Avg | Judge B Avg | Δ (B-A) |\n|---|---|---|---|\n";
    for (std::size_t i = 0; i < r.systems.size(); ++i) {
        md += "| " + r.systems[i] + " | " + f2(r.judge_a_avgs[i]) + " | " + f2(r.judge_b_avgs[i]) + " | " +
              f2(r.judge_b_avgs[i] - r.judge_a_avgs[i]) + " |\n";
    }
    md += "\nSpearman ρ = " + f2(r.robustness->spearman) + ", mean Δ = " + f2(r.robustness->mean_delta) +
          ", std Δ = " + f2(r.robustness->std_delta) + "\n";
    return md;
}

ojson to_json(const ProtocolReport& r) {
    ojson j;
    j["baseline"] = task::report_to_json(r.baseline);
    j["perturbations"] = ojson::array();
    for (const auto& p : r.perturbations) {
        ojson pj;
        pj["kind"] = std::string(to_string(p.kind));
        if (!p.error.empty()) {
            pj["error"] = p.error;
        } else {
            ojson d = ojson::object();
            for (const auto& [id, v] : p.delta) d[id] = v ? ojson(*v) : ojson(nullptr);
            pj["delta_percent"] = d;
            pj["shared_delta_percent"] = p.shared_delta ? ojson(*p.shared_delta) : ojson(nullptr);
            pj["avg_delta_percent"] = p.avg_delta ? ojson(*p.avg_delta) : ojson(nullptr);
            pj["report"] = task::report_to_json(p.report);
        }
        j["perturbations"].push_back(pj);
    }
    j["reliability_std"] = r.reliability;
    if (r.robustness) {
        j["robustness"] = {{"systems", r.systems},
                           {"judge_a", r.judge_a_avgs},
                           {"judge_b", r.judge_b_avgs},
                           {"spearman", r.robustness->spearman},
                           {"mean_delta", r.robustness->mean_delta},
                           {"std_delta", r.robustness->std_delta}};
    } else {
        j["robustness"] = {{"note", r.robustness_note}};
    }
    return j;
}

}  // namespace unislide::lab
