#include "unislide/preference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <random>
#include <regex>
#include <set>

#include <unistd.h>

#include <httplib.h>

#include "unislide/error.hpp"
#include "unislide/metric_lab.hpp"
#include "unislide/task.hpp"
#include "unislide/text.hpp"

namespace unislide::study {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Mode m) { return m == Mode::ranking3 ? "ranking3" : "pairwise_ab"; }

std::optional<Mode> parse_mode(std::string_view s) {
    if (s == "ranking3") return Mode::ranking3;
    if (s == "pairwise_ab") return Mode::pairwise_ab;
    return std::nullopt;
}

std::size_t decks_per_case(Mode m) { return m == Mode::ranking3 ? 3 : 2; }

StudyConfig study_config_from_json(const json& j) {
    StudyConfig c;
    try {
        c.study_id = j.value("study_id", "");
        const auto mode = parse_mode(j.value("mode", "ranking3"));
        if (!mode) throw Error(Errc::schema_violation, "mode must be ranking3 or pairwise_ab");
        c.mode = *mode;
        c.seed = j.value("seed", std::uint64_t{0});
        c.sample_size = j.value("sample_size", std::size_t{5});
        for (const auto& cj : j.at("cases")) {
            CaseSpec cs;
            cs.case_id = cj.at("case_id").get<std::string>();
            cs.task_id = cj.value("task_id", cs.case_id);
            for (const auto& [method, dir] : cj.at("decks").items()) cs.decks[method] = dir.get<std::string>();
            c.cases.push_back(std::move(cs));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::schema_violation, std::string("study config: ") + e.what());
    }
    return c;
}

ojson to_json(const StudyConfig& c) {
    ojson j;
    j["study_id"] = c.study_id;
    j["mode"] = std::string(to_string(c.mode));
    j["seed"] = c.seed;
    j["sample_size"] = c.sample_size;
    j["cases"] = ojson::array();
    for (const auto& cs : c.cases) {
        ojson decks = ojson::object();
        for (const auto& [m, d] : cs.decks) decks[m] = d.string();
        j["cases"].push_back({{"case_id", cs.case_id}, {"task_id", cs.task_id}, {"decks", decks}});
    }
    return j;
}

// ---------------------------------------------------------------------------

std::vector<MethodPoints> aggregate_rankings(const std::vector<ResolvedRanking>& records) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& r : records) {
        const auto n = r.methods.size();
        for (std::size_t p = 0; p < n; ++p) {
            auto& a = acc[r.methods[p]];
            a.first += static_cast<double>(n - p);
            a.second += 1;
        }
    }
    std::vector<MethodPoints> out;
    for (const auto& [m, a] : acc) out.push_back({m, a.first / static_cast<double>(a.second), 0, a.second});
    std::stable_sort(out.begin(), out.end(),
                     [](const MethodPoints& a, const MethodPoints& b) { return a.mean_points > b.mean_points; });
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank = i > 0 && out[i].mean_points == out[i - 1].mean_points ? out[i - 1].rank : static_cast<int>(i) + 1;
    }
    return out;
}

double icc(const std::vector<std::vector<double>>& ratings) {
    const std::size_t k = ratings.size();
    if (k < 2) throw Error(Errc::arity, "icc needs at least 2 annotators");
    const std::size_t n = ratings.front().size();
    if (n < 2) throw Error(Errc::arity, "icc needs at least 2 items");
    for (const auto& row : ratings) {
        if (row.size() != n) throw Error(Errc::arity, "icc needs a complete ratings matrix");
    }
    double grand = 0;
    for (const auto& row : ratings) {
        for (double v : row) grand += v;
    }
    grand /= static_cast<double>(n * k);
    double ss_items = 0, ss_raters = 0, ss_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0;
        for (std::size_t j = 0; j < k; ++j) m += ratings[j][i];
        m /= static_cast<double>(k);
        ss_items += (m - grand) * (m - grand);
    }
    ss_items *= static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0;
        for (double v : ratings[j]) m += v;
        m /= static_cast<double>(n);
        ss_raters += (m - grand) * (m - grand);
        for (double v : ratings[j]) ss_total += (v - grand) * (v - grand);
    }
    ss_raters *= static_cast<double>(n);
    const double ss_error = ss_total - ss_items - ss_raters;
    const double ms_items = ss_items / static_cast<double>(n - 1);
    const double ms_raters = ss_raters / static_cast<double>(k - 1);
    const double ms_error = ss_error / static_cast<double>((n - 1) * (k - 1));
    const double denom = ms_items + (ms_raters - ms_error) / static_cast<double>(n);
    if (ms_items <= 1e-15 || denom == 0) return std::numeric_limits<double>::quiet_NaN();
    return (ms_items - ms_error) / denom;
}

double human_auto_correlation(const std::map<std::string, double>& human, const std::map<std::string, double>& autos) {
    if (human.size() != autos.size()) throw Error(Errc::arity, "human and automatic scores cover different methods");
    std::vector<double> h, a;
    for (const auto& [m, v] : human) {
        const auto it = autos.find(m);
        if (it == autos.end()) throw Error(Errc::arity, "no automatic score for method " + m);
        h.push_back(v);
        a.push_back(it->second);
    }
    return lab::spearman(h, a);
}

// ---------------------------------------------------------------------------

namespace {

bool valid_id(const std::string& id) {
    static const std::regex re(R"(^[A-Za-z0-9_.-]{1,64}$)");
    return std::regex_match(id, re) && id != "." && id != "..";
}

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> slide_images(const fs::path& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    static const std::regex re(R"(^slide_\d+\.(png|jpg|jpeg)$)");
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (std::regex_match(name, re)) out.push_back(name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

ojson session_json(const StudySession& s, bool with_methods) {
    ojson j;
    j["session_id"] = s.session_id;
    j["study_id"] = s.study_id;
    j["annotator_id"] = s.annotator_id;
    j["mode"] = std::string(to_string(s.mode));
    j["cases"] = ojson::array();
    for (const auto& c : s.cases) {
        ojson cj;
        cj["case_id"] = c.case_id;
        cj["task_id"] = c.task_id;
        cj["labels"] = c.labels;
        if (with_methods) {
            ojson m = ojson::object();
            for (const auto& [l, method] : c.methods) m[l] = method;
            cj["methods"] = m;
        }
        j["cases"].push_back(cj);
    }
    return j;
}

StudySession session_from_json(const json& j) {
    StudySession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.study_id = j.at("study_id").get<std::string>();
    s.annotator_id = j.at("annotator_id").get<std::string>();
    s.mode = parse_mode(j.at("mode").get<std::string>()).value_or(Mode::ranking3);
    for (const auto& cj : j.at("cases")) {
        SessionCase c;
        c.case_id = cj.at("case_id").get<std::string>();
        c.task_id = cj.value("task_id", c.case_id);
        c.labels = cj.at("labels").get<std::vector<std::string>>();
        for (const auto& [l, m] : cj.at("methods").items()) c.methods[l] = m.get<std::string>();
        s.cases.push_back(std::move(c));
    }
    return s;
}

}  // namespace

ojson anonymized(const StudySession& s) { return session_json(s, false); }

StudyStore::StudyStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    std::vector<fs::path> logs;
    for (const auto& e : fs::directory_iterator(root_)) {
        if (e.path().extension() == ".jsonl") logs.push_back(e.path());
    }
    std::sort(logs.begin(), logs.end());
    for (const auto& l : logs) replay(l);
}

void StudyStore::replay(const fs::path& log) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            apply(json::parse(line));
        } catch (const json::exception&) {
            // a torn final line from a crash mid-write was never acknowledged
        }
    }
}

void StudyStore::apply(const json& e) {
    const auto kind = e.at("event").get<std::string>();
    if (kind == "study") {
        StudyState st;
        st.config = study_config_from_json(e.at("config"));
        st.sampled_cases = e.at("sampled").get<std::vector<std::string>>();
        studies_[st.config.study_id] = std::move(st);
    } else if (kind == "session") {
        auto s = session_from_json(e.at("session"));
        studies_.at(s.study_id).sessions.push_back(s.session_id);
        sessions_[s.session_id] = std::move(s);
    } else if (kind == "ranking") {
        RankingRecord r;
        r.session_id = e.at("session_id").get<std::string>();
        r.case_id = e.at("case_id").get<std::string>();
        r.ordering = e.at("ordering").get<std::vector<std::string>>();
        r.timestamp = e.value("timestamp", "");
        auto& s = sessions_.at(r.session_id);
        studies_.at(s.study_id).records.push_back(r);
        std::set<std::string> answered;
        for (const auto& rec : studies_.at(s.study_id).records) {
            if (rec.session_id == s.session_id) answered.insert(rec.case_id);
        }
        if (answered.size() == s.cases.size()) s.status = "complete";
    } else if (kind == "close") {
        studies_.at(e.at("study_id").get<std::string>()).closed = true;
    }
}

void StudyStore::append(const std::string& study_id, const json& event) {
    const auto path = root_ / (study_id + ".jsonl");
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw Error(Errc::missing_file, "cannot open study log " + path.string());
    const auto line = event.dump() + "\n";
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
                    ::fsync(::fileno(f)) == 0;
    std::fclose(f);
    if (!ok) throw Error(Errc::missing_file, "cannot write study log " + path.string());
}

const StudyStore::StudyState& StudyStore::state(const std::string& id) const {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw Error(Errc::unknown_session, "unknown study " + id);
    return it->second;
}

StudySession& StudyStore::session_mut(const std::string& id) {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + id);
    return it->second;
}

std::string StudyStore::create_study(StudyConfig config) {
    std::lock_guard lock(mutex_);
    if (config.study_id.empty()) {
        for (std::size_t n = studies_.size() + 1;; ++n) {
            config.study_id = "study-" + std::to_string(n);
            if (!studies_.count(config.study_id)) break;
        }
    }
    if (!valid_id(config.study_id)) throw Error(Errc::schema_violation, "invalid study id " + config.study_id);
    if (studies_.count(config.study_id)) throw Error(Errc::schema_violation, "study " + config.study_id + " exists");
    if (config.cases.empty()) throw Error(Errc::insufficient_decks, "study has no cases");
    if (config.sample_size == 0) throw Error(Errc::schema_violation, "sample_size must be positive");
    const auto need = decks_per_case(config.mode);
    std::set<std::string> ids;
    for (const auto& c : config.cases) {
        if (!valid_id(c.case_id) || !ids.insert(c.case_id).second)
            throw Error(Errc::schema_violation, "invalid or repeated case id " + c.case_id);
        if (c.decks.size() < need)
            throw Error(Errc::insufficient_decks, "case " + c.case_id + " has " + std::to_string(c.decks.size()) +
                                                      " decks, " + std::string(to_string(config.mode)) + " needs " +
                                                      std::to_string(need));
        for (const auto& [method, dir] : c.decks) {
            if (slide_images(dir).empty())
                throw Error(Errc::insufficient_decks,
                            "case " + c.case_id + ": deck of " + method + " has no slide images at " + dir.string());
        }
    }
    std::vector<std::string> order;
    for (const auto& c : config.cases) order.push_back(c.case_id);
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(order.size(), config.sample_size));

    json event;
    event["event"] = "study";
    event["config"] = json::parse(to_json(config).dump());
    event["sampled"] = order;
    append(config.study_id, event);
    apply(event);
    return config.study_id;
}

StudySession StudyStore::build_session(const StudyState& st, const std::string& session_id,
                                       const std::string& annotator_id) const {
    StudySession s;
    s.session_id = session_id;
    s.study_id = st.config.study_id;
    s.annotator_id = annotator_id;
    s.mode = st.config.mode;
    std::mt19937_64 rng(text::fnv1a64(session_id, st.config.seed));
    static const char* kLabels[] = {"A", "B", "C"};
    for (const auto& case_id : st.sampled_cases) {
        const auto& spec = *std::find_if(st.config.cases.begin(), st.config.cases.end(),
                                         [&](const CaseSpec& c) { return c.case_id == case_id; });
        std::vector<std::string> methods;
        for (const auto& [m, _] : spec.decks) methods.push_back(m);
        std::shuffle(methods.begin(), methods.end(), rng);
        methods.resize(decks_per_case(st.config.mode));
        SessionCase c;
        c.case_id = case_id;
        c.task_id = spec.task_id;
        for (std::size_t i = 0; i < methods.size(); ++i) {
            c.labels.push_back(kLabels[i]);
            c.methods[kLabels[i]] = methods[i];
        }
        s.cases.push_back(std::move(c));
    }
    return s;
}

StudySession StudyStore::create_session(const std::string& study_id, const std::string& annotator_id) {
    std::lock_guard lock(mutex_);
    const auto& st = state(study_id);
    if (st.closed) throw Error(Errc::study_closed, "study " + study_id + " is closed");
    if (annotator_id.empty()) throw Error(Errc::schema_violation, "annotator_id is required");
    const auto id = study_id + "-s" + std::to_string(st.sessions.size() + 1);
    auto s = build_session(st, id, annotator_id);
    json event;
    event["event"] = "session";
    event["session"] = json::parse(session_json(s, true).dump());
    append(study_id, event);
    apply(event);
    return s;
}

std::optional<SessionCase> StudyStore::next_case(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + session_id);
    const auto& st = state(it->second.study_id);
    for (const auto& c : it->second.cases) {
        const bool done = std::any_of(st.records.begin(), st.records.end(), [&](const RankingRecord& r) {
            return r.session_id == session_id && r.case_id == c.case_id;
        });
        if (!done) return c;
    }
    return std::nullopt;
}

std::pair<std::size_t, std::size_t> StudyStore::progress(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + session_id);
    const auto& st = state(it->second.study_id);
    const auto done = std::count_if(st.records.begin(), st.records.end(),
                                    [&](const RankingRecord& r) { return r.session_id == session_id; });
    return {static_cast<std::size_t>(done), it->second.cases.size()};
}

void StudyStore::record_ranking(RankingRecord record) {
    std::lock_guard lock(mutex_);
    auto& s = session_mut(record.session_id);
    const auto& st = state(s.study_id);
    if (st.closed) throw Error(Errc::study_closed, "study " + s.study_id + " is closed");
    const auto c = std::find_if(s.cases.begin(), s.cases.end(),
                                [&](const SessionCase& x) { return x.case_id == record.case_id; });
    if (c == s.cases.end()) throw Error(Errc::unknown_case, "case " + record.case_id + " is not in this session");
    for (const auto& r : st.records) {
        if (r.session_id == record.session_id && r.case_id == record.case_id)
            throw Error(Errc::duplicate_submission, "case " + record.case_id + " already ranked in this session");
    }
    auto sorted = record.ordering;
    std::sort(sorted.begin(), sorted.end());
    auto labels = c->labels;
    std::sort(labels.begin(), labels.end());
    if (sorted != labels)
        throw Error(Errc::schema_violation, "ordering must be a complete permutation of " + text::join(c->labels, ","));
    if (record.timestamp.empty()) record.timestamp = now_iso();
    json event;
    event["event"] = "ranking";
    event["session_id"] = record.session_id;
    event["case_id"] = record.case_id;
    event["ordering"] = record.ordering;
    event["timestamp"] = record.timestamp;
    append(s.study_id, event);
    apply(event);
}

void StudyStore::close_study(const std::string& study_id) {
    std::lock_guard lock(mutex_);
    if (state(study_id).closed) return;
    const json event = {{"event", "close"}, {"study_id", study_id}};
    append(study_id, event);
    apply(event);
}

bool StudyStore::is_closed(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return state(study_id).closed;
}

const StudySession& StudyStore::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + session_id);
    return it->second;
}

const StudyConfig& StudyStore::config(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return state(study_id).config;
}

std::vector<RankingRecord> StudyStore::records(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    return state(study_id).records;
}

std::vector<ResolvedRanking> StudyStore::resolved(const std::string& study_id) const {
    std::lock_guard lock(mutex_);
    std::vector<ResolvedRanking> out;
    for (const auto& r : state(study_id).records) {
        const auto& s = sessions_.at(r.session_id);
        const auto& c = *std::find_if(s.cases.begin(), s.cases.end(),
                                      [&](const SessionCase& x) { return x.case_id == r.case_id; });
        ResolvedRanking rr{s.annotator_id, r.case_id, {}};
        for (const auto& l : r.ordering) rr.methods.push_back(c.methods.at(l));
        out.push_back(std::move(rr));
    }
    return out;
}

ojson StudyStore::results(const std::string& study_id) const {
    if (!is_closed(study_id)) throw Error(Errc::study_closed, "results are available after the study is closed");
    const auto res = resolved(study_id);
    const auto recs = records(study_id);
    ojson j;
    j["study_id"] = study_id;
    j["mode"] = std::string(to_string(config(study_id).mode));
    j["methods"] = ojson::array();
    for (const auto& m : aggregate_rankings(res))
        j["methods"].push_back({{"method", m.method}, {"mean_points", m.mean_points}, {"rank", m.rank}, {"count", m.count}});

    // annotators x (case, method) points over annotators who ranked every case
    std::map<std::string, std::map<std::pair<std::string, std::string>, double>> by_annotator;
    for (const auto& r : res) {
        for (std::size_t p = 0; p < r.methods.size(); ++p)
            by_annotator[r.annotator_id][{r.case_id, r.methods[p]}] = static_cast<double>(r.methods.size() - p);
    }
    std::set<std::pair<std::string, std::string>> items;
    for (const auto& [_, m] : by_annotator) {
        for (const auto& [k, v] : m) items.insert(k);
    }
    std::vector<std::vector<double>> matrix;
    std::vector<std::string> panel;
    for (const auto& [a, m] : by_annotator) {
        if (m.size() != items.size()) continue;
        std::vector<double> row;
        for (const auto& it : items) row.push_back(m.at(it));
        matrix.push_back(std::move(row));
        panel.push_back(a);
    }
    j["icc_variant"] = "ICC(2,k)";
    j["icc_annotators"] = panel;
    if (matrix.size() >= 2 && items.size() >= 2) {
        const double v = icc(matrix);
        j["icc"] = std::isnan(v) ? ojson(nullptr) : ojson(v);
    } else {
        j["icc"] = nullptr;
    }
    j["records"] = ojson::array();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        j["records"].push_back({{"session_id", recs[i].session_id},
                                {"annotator_id", res[i].annotator_id},
                                {"case_id", recs[i].case_id},
                                {"ordering", recs[i].ordering},
                                {"methods", res[i].methods},
                                {"timestamp", recs[i].timestamp}});
    }
    return j;
}

fs::path StudyStore::deck_dir(const std::string& session_id, const std::string& case_id,
                              const std::string& label) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + session_id);
    const auto& s = it->second;
    const auto c = std::find_if(s.cases.begin(), s.cases.end(), [&](const SessionCase& x) { return x.case_id == case_id; });
    if (c == s.cases.end() || !c->methods.count(label)) throw Error(Errc::unknown_case, "unknown case or label");
    const auto& cfg = state(s.study_id).config;
    const auto spec = std::find_if(cfg.cases.begin(), cfg.cases.end(), [&](const CaseSpec& x) { return x.case_id == case_id; });
    return spec->decks.at(c->methods.at(label));
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

int status_of(Errc code) {
    switch (code) {
        case Errc::unknown_session:
        case Errc::unknown_case:
        case Errc::missing_file: return 404;
        case Errc::duplicate_submission: return 409;
        case Errc::study_closed: return 403;
        case Errc::insufficient_decks: return 422;
        default: return 400;
    }
}

void reply(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
    reply(res, status_of(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.message()}});
}

std::string content_type(const fs::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        reply_error(res, e);
    } catch (const json::exception& e) {
        reply(res, 400, {{"error", "SchemaViolation"}, {"message", e.what()}});
    }
}

}  // namespace

struct StudyServer::Impl {
    StudyStore& store;
    httplib::Server server;

    explicit Impl(StudyStore& s) : store(s) { routes(); }

    void routes() {
        server.Post("/studies", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = store.create_study(study_config_from_json(json::parse(req.body)));
                reply(res, 201, {{"study_id", id}});
            });
        });
        server.Post(R"(/studies/([^/]+)/sessions)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = req.body.empty() ? json::object() : json::parse(req.body);
                const auto s = store.create_session(req.matches[1], body.value("annotator_id", ""));
                reply(res, 201, anonymized(s));
            });
        });
        server.Post(R"(/studies/([^/]+)/close)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                store.close_study(req.matches[1]);
                reply(res, 200, {{"study_id", req.matches[1].str()}, {"status", "closed"}});
            });
        });
        server.Get(R"(/studies/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, store.results(req.matches[1])); });
        });
        server.Get(R"(/sessions/([^/]+)/next-case)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string sid = req.matches[1];
                const auto [done, total] = store.progress(sid);
                const auto c = store.next_case(sid);
                ojson j;
                j["session_id"] = sid;
                j["progress"] = {{"done", done}, {"total", total}};
                if (!c) {
                    j["complete"] = true;
                    reply(res, 200, j);
                    return;
                }
                j["complete"] = false;
                j["case_id"] = c->case_id;
                j["labels"] = c->labels;
                ojson decks = ojson::object();
                for (const auto& l : c->labels) {
                    ojson urls = ojson::array();
                    for (const auto& f : slide_images(store.deck_dir(sid, c->case_id, l)))
                        urls.push_back("/assets/" + sid + "/" + c->case_id + "/" + l + "/" + f);
                    decks[l] = urls;
                }
                j["decks"] = decks;
                reply(res, 200, j);
            });
        });
        server.Post(R"(/sessions/([^/]+)/rankings)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = json::parse(req.body);
                RankingRecord r;
                r.session_id = req.matches[1];
                r.case_id = body.at("case_id").get<std::string>();
                r.ordering = body.at("ordering").get<std::vector<std::string>>();
                r.timestamp = body.value("timestamp", "");
                store.record_ranking(r);
                reply(res, 200, {{"status", "accepted"}, {"case_id", r.case_id}});
            });
        });
        server.Get(R"(/assets/([^/]+)/([^/]+)/([^/]+)/([^/]+))",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           const std::string file = req.matches[4];
                           static const std::regex ok(R"(^slide_\d+\.(png|jpg|jpeg)$)");
                           if (!std::regex_match(file, ok)) throw Error(Errc::missing_file, "no such asset");
                           const auto path = store.deck_dir(req.matches[1], req.matches[2], req.matches[3]) / file;
                           const auto bytes = task::read_file(path);
                           res.status = 200;
                           res.set_content(bytes, content_type(path));
                       });
                   });
    }
};

StudyServer::StudyServer(StudyStore& store) : impl_(std::make_unique<Impl>(store)) {}
StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    if (!impl_->server.bind_to_port(host, port)) throw Error(Errc::precondition, "cannot bind port " + std::to_string(port));
    return port;
}

void StudyServer::listen() { impl_->server.listen_after_bind(); }

void StudyServer::stop() {
    if (impl_) impl_->server.stop();
}

int study_port_from_env(int fallback) {
    if (const char* v = std::getenv("UNISLIDE_STUDY_PORT")) {
        char* end = nullptr;
        const long p = std::strtol(v, &end, 10);
        if (end && *end == '\0' && p > 0 && p < 65536) return static_cast<int>(p);
    }
    return fallback;
}

}  // namespace unislide::study
