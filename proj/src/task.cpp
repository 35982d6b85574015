#include "unislide/task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "unislide/error.hpp"
#include "unislide/text.hpp"

namespace unislide::task {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Setting s) {
    switch (s) {
        case Setting::vague_prompt: return "vague_prompt";
        case Setting::long_doc: return "long_doc";
        case Setting::multi_modal: return "multi_modal";
        case Setting::multi_source: return "multi_source";
    }
    return "vague_prompt";
}

std::optional<Setting> parse_setting(std::string_view s) {
    if (s == "vague_prompt") return Setting::vague_prompt;
    if (s == "long_doc") return Setting::long_doc;
    if (s == "multi_modal") return Setting::multi_modal;
    if (s == "multi_source") return Setting::multi_source;
    return std::nullopt;
}

std::string_view to_string(UsageMode m) {
    return m == UsageMode::direct_reuse ? "direct_reuse" : "faithful_redraw";
}

std::string_view to_string(SlideRole r) {
    switch (r) {
        case SlideRole::opening: return "opening";
        case SlideRole::body: return "body";
        case SlideRole::ending: return "ending";
    }
    return "body";
}

std::optional<SlideRole> parse_role(std::string_view s) {
    if (s == "opening") return SlideRole::opening;
    if (s == "body") return SlideRole::body;
    if (s == "ending") return SlideRole::ending;
    return std::nullopt;
}

std::string SourceDocument::full_text() const {
    std::vector<std::string> parts;
    for (const auto& s : sections) parts.push_back(s.text);
    return text::join(parts, "\n\n");
}

bool Annotations::has_grounded_items() const {
    return !coverage_points.empty() || !evidence_spans.empty() || !critical_visuals.empty() ||
           !source_contributions.empty() || !integration_requirements.empty() || !overlap_groups.empty();
}

const SourceDocument* Task::find_document(std::string_view doc_id) const {
    for (const auto& d : documents) {
        if (d.id == doc_id) return &d;
    }
    return nullptr;
}

const FigureAsset* Task::find_figure(std::string_view fig_id) const {
    for (const auto& d : documents) {
        for (const auto& f : d.figures) {
            if (f.id == fig_id) return &f;
        }
    }
    return nullptr;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::missing_file, p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::missing_file, "cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw Error(Errc::schema_violation, path + ": " + what);
}

const json* member(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string get_string(const json& obj, const char* key, const std::string& path, bool required,
                       std::string fallback = {}) {
    const auto* v = member(obj, key);
    if (!v) {
        if (required) schema_error(path + "." + key, "missing required string");
        return fallback;
    }
    if (!v->is_string()) schema_error(path + "." + key, "expected string");
    return v->get<std::string>();
}

double get_weight(const json& obj, const char* key, const std::string& path) {
    const auto* v = member(obj, key);
    if (!v) return 1.0;
    if (!v->is_number()) schema_error(path + "." + key, "expected number");
    return v->get<double>();
}

long long get_int(const json& obj, const char* key, const std::string& path, bool required, long long fallback = 0) {
    const auto* v = member(obj, key);
    if (!v) {
        if (required) schema_error(path + "." + key, "missing required integer");
        return fallback;
    }
    if (!v->is_number_integer()) schema_error(path + "." + key, "expected integer");
    return v->get<long long>();
}

const json& get_array(const json& obj, const char* key, const std::string& path) {
    static const json empty = json::array();
    const auto* v = member(obj, key);
    if (!v) return empty;
    if (!v->is_array()) schema_error(path + "." + key, "expected array");
    return *v;
}

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) schema_error(path, "expected object");
}

std::vector<std::string> get_string_list(const json& obj, const char* key, const std::string& path) {
    std::vector<std::string> out;
    const auto& arr = get_array(obj, key, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string()) schema_error(path + "." + key + "[" + std::to_string(i) + "]", "expected string");
        out.push_back(arr[i].get<std::string>());
    }
    return out;
}

json parse_json_file(const fs::path& p) {
    const auto content = read_file(p);
    try {
        return json::parse(content);
    } catch (const json::parse_error& e) {
        throw Error(Errc::schema_violation, p.string() + ": invalid JSON (" + e.what() + ")");
    }
}

bool is_uri(std::string_view ref) {
    return ref.starts_with("http://") || ref.starts_with("https://") || ref.starts_with("data:");
}

SourceDocument document_from_json(const json& j, const std::string& path) {
    require_object(j, path);
    SourceDocument d;
    d.id = get_string(j, "id", path, true);
    d.title = get_string(j, "title", path, false);
    d.page_count = static_cast<int>(get_int(j, "page_count", path, false, 0));
    if (d.page_count < 0) schema_error(path + ".page_count", "must be >= 0");
    const auto& sections = get_array(j, "sections", path);
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const auto sp = path + ".sections[" + std::to_string(i) + "]";
        require_object(sections[i], sp);
        d.sections.push_back({get_string(sections[i], "heading", sp, false), get_string(sections[i], "text", sp, true)});
    }
    const auto& figures = get_array(j, "figures", path);
    std::set<std::string> fig_ids;
    for (std::size_t i = 0; i < figures.size(); ++i) {
        const auto fp = path + ".figures[" + std::to_string(i) + "]";
        const auto& fj = figures[i];
        require_object(fj, fp);
        FigureAsset f;
        f.id = get_string(fj, "id", fp, true);
        if (!fig_ids.insert(f.id).second) schema_error(fp + ".id", "duplicate figure id '" + f.id + "'");
        f.source_page = static_cast<int>(get_int(fj, "source_page", fp, false, 0));
        if (f.source_page < 0) schema_error(fp + ".source_page", "must be >= 0");
        if (const auto* bb = member(fj, "bbox")) {
            if (!bb->is_array() || bb->size() != 4) schema_error(fp + ".bbox", "expected four numbers");
            for (const auto& x : *bb) {
                if (!x.is_number()) schema_error(fp + ".bbox", "expected four numbers");
            }
            f.bbox = {(*bb)[0].get<double>(), (*bb)[1].get<double>(), (*bb)[2].get<double>(), (*bb)[3].get<double>()};
            const auto& b = f.bbox;
            if (!(0 <= b.x0 && b.x0 < b.x1 && b.x1 <= 1 && 0 <= b.y0 && b.y0 < b.y1 && b.y1 <= 1))
                schema_error(fp + ".bbox", "must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1");
        }
        f.caption = get_string(fj, "caption", fp, false);
        f.context = get_string(fj, "context", fp, false);
        f.image_ref = get_string(fj, "image_ref", fp, true);
        d.figures.push_back(std::move(f));
    }
    return d;
}

ojson document_to_json(const SourceDocument& d) {
    ojson j;
    j["id"] = d.id;
    if (!d.source_path.empty()) {
        j["source"] = d.source_path;
        return j;
    }
    j["title"] = d.title;
    j["page_count"] = d.page_count;
    j["sections"] = ojson::array();
    for (const auto& s : d.sections) j["sections"].push_back({{"heading", s.heading}, {"text", s.text}});
    j["figures"] = ojson::array();
    for (const auto& f : d.figures) {
        ojson fj;
        fj["id"] = f.id;
        fj["source_page"] = f.source_page;
        fj["bbox"] = {f.bbox.x0, f.bbox.y0, f.bbox.x1, f.bbox.y1};
        fj["caption"] = f.caption;
        fj["context"] = f.context;
        fj["image_ref"] = f.image_ref;
        j["figures"].push_back(std::move(fj));
    }
    return j;
}

Annotations annotations_from_json(const json& j) {
    const std::string path = "annotations";
    Annotations a;
    if (j.is_null()) return a;
    require_object(j, path);
    auto item_path = [&](const char* list, std::size_t i) {
        return path + "." + list + "[" + std::to_string(i) + "]";
    };
    const auto& cps = get_array(j, "coverage_points", path);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const auto p = item_path("coverage_points", i);
        require_object(cps[i], p);
        a.coverage_points.push_back(
            {get_string(cps[i], "id", p, true), get_string(cps[i], "text", p, true), get_weight(cps[i], "weight", p)});
    }
    const auto& spans = get_array(j, "evidence_spans", path);
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto p = item_path("evidence_spans", i);
        require_object(spans[i], p);
        EvidenceSpan s;
        s.point_id = get_string(spans[i], "point_id", p, true);
        s.document_id = get_string(spans[i], "document_id", p, true);
        const auto si = get_int(spans[i], "section_index", p, true);
        if (si < 0) schema_error(p + ".section_index", "must be >= 0");
        s.section_index = static_cast<std::size_t>(si);
        const auto* cr = member(spans[i], "char_range");
        if (!cr || !cr->is_array() || cr->size() != 2 || !(*cr)[0].is_number_integer() ||
            !(*cr)[1].is_number_integer() || (*cr)[0].get<long long>() < 0 || (*cr)[1].get<long long>() < 0)
            schema_error(p + ".char_range", "expected [start, end] non-negative integers");
        s.char_range = {(*cr)[0].get<std::size_t>(), (*cr)[1].get<std::size_t>()};
        a.evidence_spans.push_back(s);
    }
    const auto& cvs = get_array(j, "critical_visuals", path);
    for (std::size_t i = 0; i < cvs.size(); ++i) {
        const auto p = item_path("critical_visuals", i);
        require_object(cvs[i], p);
        CriticalVisual v;
        v.figure_id = get_string(cvs[i], "figure_id", p, true);
        v.paired_claim = get_string(cvs[i], "paired_claim", p, false);
        if (member(cvs[i], "accepted_modes")) {
            v.accepted_modes.clear();
            for (const auto& m : get_string_list(cvs[i], "accepted_modes", p)) {
                if (m == "direct_reuse") v.accepted_modes.push_back(UsageMode::direct_reuse);
                else if (m == "faithful_redraw") v.accepted_modes.push_back(UsageMode::faithful_redraw);
                else schema_error(p + ".accepted_modes", "unknown mode '" + m + "'");
            }
        }
        if (const auto* fr = member(cvs[i], "fidelity_required")) {
            if (!fr->is_boolean()) schema_error(p + ".fidelity_required", "expected boolean");
            v.fidelity_required = fr->get<bool>();
        }
        v.weight = get_weight(cvs[i], "weight", p);
        a.critical_visuals.push_back(std::move(v));
    }
    const auto& scs = get_array(j, "source_contributions", path);
    for (std::size_t i = 0; i < scs.size(); ++i) {
        const auto p = item_path("source_contributions", i);
        require_object(scs[i], p);
        a.source_contributions.push_back({get_string(scs[i], "source_id", p, true),
                                          get_string(scs[i], "point_id", p, true), get_string(scs[i], "text", p, true),
                                          get_weight(scs[i], "source_weight", p),
                                          get_weight(scs[i], "point_weight", p)});
    }
    const auto& irs = get_array(j, "integration_requirements", path);
    for (std::size_t i = 0; i < irs.size(); ++i) {
        const auto p = item_path("integration_requirements", i);
        require_object(irs[i], p);
        a.integration_requirements.push_back({get_string(irs[i], "id", p, true),
                                              get_string_list(irs[i], "involved_sources", p),
                                              get_string(irs[i], "text", p, true), get_weight(irs[i], "weight", p)});
    }
    const auto& ogs = get_array(j, "overlap_groups", path);
    for (std::size_t i = 0; i < ogs.size(); ++i) {
        const auto p = item_path("overlap_groups", i);
        require_object(ogs[i], p);
        a.overlap_groups.push_back({get_string(ogs[i], "id", p, true), get_string(ogs[i], "theme", p, true),
                                    get_string_list(ogs[i], "involved_sources", p), get_weight(ogs[i], "weight", p)});
    }
    return a;
}

ojson annotations_to_json(const Annotations& a) {
    ojson j;
    j["coverage_points"] = ojson::array();
    for (const auto& c : a.coverage_points)
        j["coverage_points"].push_back({{"id", c.id}, {"text", c.text}, {"weight", c.weight}});
    j["evidence_spans"] = ojson::array();
    for (const auto& s : a.evidence_spans) {
        ojson sj;
        sj["point_id"] = s.point_id;
        sj["document_id"] = s.document_id;
        sj["section_index"] = s.section_index;
        sj["char_range"] = {s.char_range.start, s.char_range.end};
        j["evidence_spans"].push_back(std::move(sj));
    }
    j["critical_visuals"] = ojson::array();
    for (const auto& v : a.critical_visuals) {
        ojson vj;
        vj["figure_id"] = v.figure_id;
        vj["paired_claim"] = v.paired_claim;
        vj["accepted_modes"] = ojson::array();
        for (auto m : v.accepted_modes) vj["accepted_modes"].push_back(std::string(to_string(m)));
        vj["fidelity_required"] = v.fidelity_required;
        vj["weight"] = v.weight;
        j["critical_visuals"].push_back(std::move(vj));
    }
    j["source_contributions"] = ojson::array();
    for (const auto& s : a.source_contributions) {
        ojson sj;
        sj["source_id"] = s.source_id;
        sj["point_id"] = s.point_id;
        sj["text"] = s.text;
        sj["source_weight"] = s.source_weight;
        sj["point_weight"] = s.point_weight;
        j["source_contributions"].push_back(std::move(sj));
    }
    j["integration_requirements"] = ojson::array();
    for (const auto& r : a.integration_requirements) {
        ojson rj;
        rj["id"] = r.id;
        rj["involved_sources"] = r.involved_sources;
        rj["text"] = r.text;
        rj["weight"] = r.weight;
        j["integration_requirements"].push_back(std::move(rj));
    }
    j["overlap_groups"] = ojson::array();
    for (const auto& g : a.overlap_groups) {
        ojson gj;
        gj["id"] = g.id;
        gj["theme"] = g.theme;
        gj["involved_sources"] = g.involved_sources;
        gj["weight"] = g.weight;
        j["overlap_groups"].push_back(std::move(gj));
    }
    return j;
}

void check_task_invariants(const Task& t) {
    const auto n = t.documents.size();
    switch (t.setting) {
        case Setting::vague_prompt:
            if (n != 0) schema_error("documents", "vague_prompt tasks carry no documents");
            break;
        case Setting::long_doc:
        case Setting::multi_modal:
            if (n < 1) schema_error("documents", std::string(to_string(t.setting)) + " requires at least one document");
            break;
        case Setting::multi_source:
            if (n < 2) schema_error("documents", "multi_source requires at least two documents");
            break;
    }
    if (t.intent.empty() && n == 0) schema_error("intent", "intent may be empty only when documents are present");
    std::set<std::string> doc_ids;
    std::set<std::string> fig_ids;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = t.documents[i];
        if (!doc_ids.insert(d.id).second)
            schema_error("documents[" + std::to_string(i) + "].id", "duplicate document id '" + d.id + "'");
        for (std::size_t k = 0; k < d.figures.size(); ++k) {
            if (!fig_ids.insert(d.figures[k].id).second)
                schema_error("documents[" + std::to_string(i) + "].figures[" + std::to_string(k) + "].id",
                             "figure id '" + d.figures[k].id + "' is not unique within the task");
        }
    }
}

}  // namespace

SourceDocument load_parsed_document(const fs::path& path) {
    const auto j = parse_json_file(path);
    return document_from_json(j, path.filename().string());
}

std::vector<Violation> validate_annotations(const Task& task) {
    std::vector<Violation> out;
    const auto& a = task.annotations;
    auto add = [&](std::string code, std::string field, std::string msg) {
        out.push_back({std::move(code), std::move(field), std::move(msg)});
    };
    auto check_weight = [&](double w, const std::string& field) {
        if (!(w > 0) || !std::isfinite(w)) add("NonPositiveWeight", field, "weight must be > 0");
    };
    auto idx = [](const char* list, std::size_t i) {
        return std::string("annotations.") + list + "[" + std::to_string(i) + "]";
    };

    if (task.setting == Setting::vague_prompt) {
        const std::pair<const char*, bool> lists[] = {
            {"coverage_points", !a.coverage_points.empty()},
            {"evidence_spans", !a.evidence_spans.empty()},
            {"critical_visuals", !a.critical_visuals.empty()},
            {"source_contributions", !a.source_contributions.empty()},
            {"integration_requirements", !a.integration_requirements.empty()},
            {"overlap_groups", !a.overlap_groups.empty()},
        };
        for (const auto& [name, present] : lists) {
            if (present)
                add("SettingMismatch", std::string("annotations.") + name, "vague_prompt tasks carry no grounded items");
        }
    }

    std::set<std::string> point_ids;
    for (std::size_t i = 0; i < a.coverage_points.size(); ++i) {
        const auto& c = a.coverage_points[i];
        if (!point_ids.insert(c.id).second) add("DuplicateId", idx("coverage_points", i) + ".id", "duplicate id");
        check_weight(c.weight, idx("coverage_points", i) + ".weight");
    }
    for (std::size_t i = 0; i < a.evidence_spans.size(); ++i) {
        const auto& s = a.evidence_spans[i];
        const auto p = idx("evidence_spans", i);
        if (!point_ids.count(s.point_id)) add("DanglingReference", p + ".point_id", "no coverage point '" + s.point_id + "'");
        const auto* doc = task.find_document(s.document_id);
        if (!doc) {
            add("DanglingReference", p + ".document_id", "no document '" + s.document_id + "'");
            continue;
        }
        if (s.section_index >= doc->sections.size()) {
            add("SpanOutOfBounds", p + ".section_index", "document has " + std::to_string(doc->sections.size()) + " sections");
            continue;
        }
        const auto len = text::code_point_count(doc->sections[s.section_index].text);
        if (s.char_range.start >= s.char_range.end || s.char_range.end > len)
            add("SpanOutOfBounds", p + ".char_range",
                "range [" + std::to_string(s.char_range.start) + ", " + std::to_string(s.char_range.end) +
                    ") outside section of length " + std::to_string(len));
    }
    std::set<std::string> visual_ids;
    for (std::size_t i = 0; i < a.critical_visuals.size(); ++i) {
        const auto& v = a.critical_visuals[i];
        const auto p = idx("critical_visuals", i);
        if (!task.find_figure(v.figure_id)) add("DanglingReference", p + ".figure_id", "no figure '" + v.figure_id + "'");
        if (!visual_ids.insert(v.figure_id).second) add("DuplicateId", p + ".figure_id", "figure annotated twice");
        if (v.accepted_modes.empty()) add("EmptyAcceptedModes", p + ".accepted_modes", "no usage mode accepted");
        check_weight(v.weight, p + ".weight");
    }
    std::set<std::string> contribution_ids;
    for (std::size_t i = 0; i < a.source_contributions.size(); ++i) {
        const auto& s = a.source_contributions[i];
        const auto p = idx("source_contributions", i);
        if (!task.find_document(s.source_id)) add("DanglingReference", p + ".source_id", "no document '" + s.source_id + "'");
        if (!contribution_ids.insert(s.point_id).second) add("DuplicateId", p + ".point_id", "duplicate id");
        check_weight(s.source_weight, p + ".source_weight");
        check_weight(s.point_weight, p + ".point_weight");
    }
    auto check_sources = [&](const std::vector<std::string>& sources, const std::string& p) {
        for (std::size_t k = 0; k < sources.size(); ++k) {
            if (!task.find_document(sources[k]))
                add("DanglingReference", p + ".involved_sources[" + std::to_string(k) + "]",
                    "no document '" + sources[k] + "'");
        }
    };
    std::set<std::string> req_ids;
    for (std::size_t i = 0; i < a.integration_requirements.size(); ++i) {
        const auto& r = a.integration_requirements[i];
        const auto p = idx("integration_requirements", i);
        if (!req_ids.insert(r.id).second) add("DuplicateId", p + ".id", "duplicate id");
        check_sources(r.involved_sources, p);
        check_weight(r.weight, p + ".weight");
    }
    std::set<std::string> group_ids;
    for (std::size_t i = 0; i < a.overlap_groups.size(); ++i) {
        const auto& g = a.overlap_groups[i];
        const auto p = idx("overlap_groups", i);
        if (!group_ids.insert(g.id).second) add("DuplicateId", p + ".id", "duplicate id");
        check_sources(g.involved_sources, p);
        check_weight(g.weight, p + ".weight");
    }
    return out;
}

Task task_from_json(const json& j, const fs::path& base_dir) {
    require_object(j, "task");
    Task t;
    t.base_dir = base_dir;
    t.id = get_string(j, "id", "task", true);
    const auto setting = get_string(j, "setting", "task", true);
    const auto parsed = parse_setting(setting);
    if (!parsed) schema_error("task.setting", "unknown setting '" + setting + "'");
    t.setting = *parsed;
    t.domain = get_string(j, "domain", "task", false);
    t.intent = get_string(j, "intent", "task", false);
    const auto& docs = get_array(j, "documents", "task");
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto p = "documents[" + std::to_string(i) + "]";
        require_object(docs[i], p);
        if (const auto* src = member(docs[i], "source")) {
            if (!src->is_string()) schema_error(p + ".source", "expected string");
            auto doc = load_parsed_document(base_dir / src->get<std::string>());
            doc.id = get_string(docs[i], "id", p, true);
            doc.source_path = src->get<std::string>();
            t.documents.push_back(std::move(doc));
        } else {
            t.documents.push_back(document_from_json(docs[i], p));
        }
    }
    if (const auto* ann = member(j, "annotations")) t.annotations = annotations_from_json(*ann);
    check_task_invariants(t);

    const auto violations = validate_annotations(t);
    for (const auto& v : violations) {
        if (v.code == "DanglingReference") throw Error(Errc::dangling_reference, v.field + ": " + v.message);
    }
    if (!violations.empty())
        throw Error(Errc::schema_violation, violations.front().field + ": " + violations.front().message);

    for (const auto& d : t.documents) {
        for (const auto& f : d.figures) {
            if (is_uri(f.image_ref)) continue;
            if (!fs::exists(base_dir / f.image_ref))
                throw Error(Errc::missing_file, "figure '" + f.id + "' asset " + (base_dir / f.image_ref).string());
        }
    }
    return t;
}

Task load_task(const fs::path& path) {
    fs::path file = path;
    if (fs::is_directory(file)) file /= "task.json";
    if (!fs::exists(file)) throw Error(Errc::missing_file, file.string());
    return task_from_json(parse_json_file(file), file.parent_path());
}

ojson task_to_json(const Task& t) {
    ojson j;
    j["id"] = t.id;
    j["setting"] = std::string(to_string(t.setting));
    j["domain"] = t.domain;
    j["intent"] = t.intent;
    j["documents"] = ojson::array();
    for (const auto& d : t.documents) j["documents"].push_back(document_to_json(d));
    j["annotations"] = annotations_to_json(t.annotations);
    return j;
}

std::string serialize_task(const Task& t) { return task_to_json(t).dump(2) + "\n"; }

void save_task(const Task& t, const fs::path& path) {
    fs::path file = path;
    if (fs::is_directory(file)) file /= "task.json";
    write_file(file, serialize_task(t));
}

// ---------------------------------------------------------------------------

SlideRole default_role(std::size_t index, std::size_t count) {
    if (index == 0) return SlideRole::opening;
    if (index + 1 == count) return SlideRole::ending;
    return SlideRole::body;
}

std::vector<std::string> Deck::slide_hashes() const {
    std::vector<std::string> out;
    for (const auto& s : slides) {
        std::string material = s.html.value_or("");
        material += '\x1f';
        if (s.image_ref) {
            const auto p = base_dir / *s.image_ref;
            std::ifstream in(p, std::ios::binary);
            if (in) {
                std::ostringstream ss;
                ss << in.rdbuf();
                material += ss.str();
            } else {
                material += *s.image_ref;
            }
        }
        out.push_back(text::sha256_hex(material));
    }
    return out;
}

Deck load_deck(const fs::path& dir) {
    if (!fs::exists(dir)) throw Error(Errc::missing_file, dir.string());
    if (!fs::is_directory(dir)) throw Error(Errc::missing_file, dir.string() + " is not a directory");
    static const std::regex pattern(R"(slide_(\d+)\.(html|htm|png|jpg|jpeg))", std::regex::icase);
    std::map<int, Slide> by_index;
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) entries.push_back(e.path());
    }
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
        std::smatch m;
        const auto name = p.filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        const int index = std::stoi(m[1].str());
        auto& slide = by_index[index];
        slide.index = index;
        const auto ext = text::to_lower_ascii(m[2].str());
        if (ext == "html" || ext == "htm") {
            slide.html = read_file(p);
        } else if (!slide.image_ref) {
            slide.image_ref = name;
        }
    }
    if (by_index.empty()) throw Error(Errc::empty_deck, dir.string() + " contains no slide files");
    int expected = 0;
    for (const auto& [index, _] : by_index) {
        if (index != expected)
            throw Error(Errc::unordered_slides, "expected slide index " + std::to_string(expected) + ", found " +
                                                    std::to_string(index) + " in " + dir.string());
        ++expected;
    }

    Deck deck;
    deck.base_dir = dir;
    deck.id = fs::absolute(dir).lexically_normal().filename().string();
    if (deck.id.empty()) deck.id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
    for (auto& [_, s] : by_index) deck.slides.push_back(std::move(s));
    for (std::size_t i = 0; i < deck.slides.size(); ++i) deck.slides[i].role = default_role(i, deck.slides.size());

    const auto manifest = dir / "deck.json";
    if (fs::exists(manifest)) {
        const auto j = parse_json_file(manifest);
        require_object(j, "deck.json");
        deck.id = get_string(j, "id", "deck.json", false, deck.id);
        deck.producer = get_string(j, "producer", "deck.json", false);
        const auto& slides = get_array(j, "slides", "deck.json");
        for (std::size_t i = 0; i < slides.size(); ++i) {
            const auto p = "deck.json.slides[" + std::to_string(i) + "]";
            require_object(slides[i], p);
            const auto index = get_int(slides[i], "index", p, true);
            if (index < 0 || static_cast<std::size_t>(index) >= deck.slides.size())
                schema_error(p + ".index", "no such slide");
            const auto role = get_string(slides[i], "role", p, false);
            if (!role.empty()) {
                const auto r = parse_role(role);
                if (!r) schema_error(p + ".role", "unknown role '" + role + "'");
                deck.slides[static_cast<std::size_t>(index)].role = *r;
            }
        }
    }
    return deck;
}

void save_deck(const Deck& deck, const fs::path& dir) {
    fs::create_directories(dir);
    ojson manifest;
    manifest["id"] = deck.id;
    manifest["producer"] = deck.producer;
    manifest["slides"] = ojson::array();
    char name[32];
    for (std::size_t i = 0; i < deck.slides.size(); ++i) {
        const auto& s = deck.slides[i];
        std::snprintf(name, sizeof name, "slide_%02zu", i);
        if (s.html) write_file(dir / (std::string(name) + ".html"), *s.html);
        if (s.image_ref) {
            const auto src = deck.base_dir / *s.image_ref;
            const auto dst = dir / (std::string(name) + fs::path(*s.image_ref).extension().string());
            if (fs::exists(src) && fs::absolute(src).lexically_normal() != fs::absolute(dst).lexically_normal())
                fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        }
        manifest["slides"].push_back({{"index", i}, {"role", std::string(to_string(s.role))}});
    }
    const auto assets = deck.base_dir / "assets";
    if (!deck.base_dir.empty() && fs::exists(assets) &&
        fs::absolute(assets).lexically_normal() != fs::absolute(dir / "assets").lexically_normal()) {
        fs::create_directories(dir / "assets");
        fs::copy(assets, dir / "assets", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    }
    write_file(dir / "deck.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

ojson report_to_json(const ScoreReport& r) {
    ojson j;
    j["task_id"] = r.task_id;
    j["deck_id"] = r.deck_id;
    j["setting"] = r.setting;
    ojson shared = ojson::object();
    for (auto id : kSharedMetricIds) {
        const auto it = r.shared.find(std::string(id));
        shared[std::string(id)] = it == r.shared.end() ? 0.0 : it->second;
    }
    j["shared"] = shared;
    j["shared_mean"] = r.shared_mean;
    j["scenario"] = ojson::object();
    for (const auto& [k, v] : r.scenario) j["scenario"][k] = v;
    j["setting_avg"] = r.setting_avg;
    j["runs"] = r.runs;
    j["not_applicable"] = r.not_applicable;
    j["run_setting_avgs"] = r.run_setting_avgs;
    j["setting_avg_std"] = r.setting_avg_std;
    j["metadata"] = {{"seed", r.seed},
                     {"judge_temperature", r.judge_temperature},
                     {"backend", r.backend},
                     {"normalization", r.normalization}};
    j["warnings"] = r.warnings;
    j["per_item"] = ojson::array();
    for (const auto& t : r.per_item) {
        ojson tj;
        tj["metric"] = t.metric;
        tj["item_id"] = t.item_id;
        if (t.state) tj["state"] = *t.state;
        if (t.score) tj["score"] = *t.score;
        tj["rationale"] = t.rationale;
        tj["run"] = t.run;
        if (!t.warning.empty()) tj["warning"] = t.warning;
        j["per_item"].push_back(std::move(tj));
    }
    return j;
}

ScoreReport report_from_json(const json& j) {
    ScoreReport r;
    r.task_id = j.value("task_id", "");
    r.deck_id = j.value("deck_id", "");
    r.setting = j.value("setting", "");
    for (const auto& [k, v] : j.at("shared").items()) r.shared[k] = v.get<double>();
    r.shared_mean = j.value("shared_mean", 0.0);
    if (j.contains("scenario"))
        for (const auto& [k, v] : j.at("scenario").items()) r.scenario[k] = v.get<double>();
    r.setting_avg = j.value("setting_avg", 0.0);
    r.runs = j.value("runs", 1);
    if (j.contains("not_applicable")) r.not_applicable = j["not_applicable"].get<std::vector<std::string>>();
    if (j.contains("run_setting_avgs")) r.run_setting_avgs = j["run_setting_avgs"].get<std::vector<double>>();
    r.setting_avg_std = j.value("setting_avg_std", 0.0);
    if (j.contains("metadata")) {
        const auto& m = j["metadata"];
        r.seed = m.value("seed", std::uint64_t{0});
        r.judge_temperature = m.value("judge_temperature", 0.2);
        r.backend = m.value("backend", "");
        r.normalization = m.value("normalization", "identity");
    }
    if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
    if (j.contains("per_item")) {
        for (const auto& tj : j["per_item"]) {
            JudgmentTrace t;
            t.metric = tj.value("metric", "");
            t.item_id = tj.value("item_id", "");
            if (tj.contains("state")) t.state = tj["state"].get<double>();
            if (tj.contains("score")) t.score = tj["score"].get<double>();
            t.rationale = tj.value("rationale", "");
            t.run = tj.value("run", 0);
            t.warning = tj.value("warning", "");
            r.per_item.push_back(std::move(t));
        }
    }
    return r;
}

void save_report(const ScoreReport& r, const fs::path& path) { write_file(path, report_to_json(r).dump(2) + "\n"); }

ScoreReport load_report(const fs::path& path) { return report_from_json(parse_json_file(path)); }

}  // namespace unislide::task
