#include "unislide/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "unislide/text.hpp"

namespace unislide::gateway {

using json = nlohmann::json;

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(Errc::arity, "embedding dimensions differ");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

std::string complete(const CompletionRequest& request, Backend& backend) {
    if (request.max_tokens < 1) throw Error(Errc::precondition, "max_tokens must be >= 1");
    if (!(request.temperature >= 0 && request.temperature <= 2))
        throw Error(Errc::precondition, "temperature must lie in [0, 2]");
    if (request.prompt.empty()) throw Error(Errc::precondition, "empty prompt");
    auto out = backend.complete(request);
    if (text::trim(out).empty()) throw Error(Errc::malformed_response, backend.name() + " returned an empty completion");
    return out;
}

std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, Backend& backend) {
    if (texts.empty()) throw Error(Errc::precondition, "embed() needs at least one text");
    auto out = backend.embed(texts);
    if (out.size() != texts.size()) throw Error(Errc::malformed_response, "embedding count mismatch");
    for (const auto& v : out) {
        if (v.values.size() != out.front().values.size())
            throw Error(Errc::malformed_response, "embeddings of mixed dimension");
    }
    return out;
}

EmbeddingVector HashEmbedder::embed(std::string_view s) const {
    EmbeddingVector v;
    v.model_id = "hash-" + std::to_string(kDimension);
    v.values.assign(kDimension, 0.0);
    for (const auto& token : text::tokenize(s)) {
        auto state = text::fnv1a64(token, seed_);
        for (auto& x : v.values) {
            const auto r = text::splitmix64(state);
            x += static_cast<double>(r >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        }
    }
    double norm = 0;
    for (double x : v.values) norm += x * x;
    if (norm > 0) {
        norm = std::sqrt(norm);
        for (auto& x : v.values) x /= norm;
    }
    return v;
}

std::vector<EmbeddingVector> HashEmbedder::embed(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

// ---------------------------------------------------------------------------

bool MockRule::matches(const CompletionRequest& request, std::string_view kind_of_prompt) const {
    if (!kind.empty() && kind != kind_of_prompt) return false;
    if (!contains.empty() && request.prompt.find(contains) == std::string::npos) return false;
    if (pattern && !std::regex_search(request.prompt, *pattern)) return false;
    return true;
}

namespace {

Errc parse_errc(const std::string& name) {
    if (name == "BackendUnavailable") return Errc::backend_unavailable;
    if (name == "TokenLimit") return Errc::token_limit;
    if (name == "MalformedResponse") return Errc::malformed_response;
    throw Error(Errc::schema_violation, "mock script: unknown fail_error '" + name + "'");
}

}  // namespace

MockScript MockScript::from_json(const json& j) {
    MockScript s;
    if (!j.is_object()) throw Error(Errc::schema_violation, "mock script: expected object");
    s.seed = j.value("seed", std::uint64_t{0});
    s.jitter = j.value("jitter", 0.0);
    const auto fallback = j.value("fallback", std::string("simulated"));
    if (fallback != "simulated" && fallback != "none")
        throw Error(Errc::schema_violation, "mock script: fallback must be 'simulated' or 'none'");
    s.simulated_fallback = fallback == "simulated";
    if (j.contains("rules")) {
        for (const auto& rj : j.at("rules")) {
            MockRule r;
            if (rj.contains("match")) {
                const auto& m = rj.at("match");
                r.kind = m.value("kind", "");
                r.contains = m.value("contains", "");
                if (m.contains("regex")) {
                    r.pattern_source = m.at("regex").get<std::string>();
                    r.pattern = std::regex(r.pattern_source);
                }
            }
            if (rj.contains("response")) r.responses.push_back(rj.at("response").get<std::string>());
            if (rj.contains("responses")) {
                for (const auto& x : rj.at("responses")) r.responses.push_back(x.get<std::string>());
            }
            r.fail_times = rj.value("fail_times", 0);
            if (rj.contains("fail_error")) r.fail_code = parse_errc(rj.at("fail_error").get<std::string>());
            s.rules.push_back(std::move(r));
        }
    }
    return s;
}

MockScript MockScript::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::missing_file, path);
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw Error(Errc::schema_violation, path + ": " + e.what());
    }
}

MockBackend::MockBackend(MockScript script, Handler fallback)
    : script_(std::move(script)), fallback_(std::move(fallback)), embedder_(script_.seed) {
    cursors_.assign(script_.rules.size(), 0);
    failures_.assign(script_.rules.size(), 0);
}

void MockBackend::add_rule(MockRule rule) {
    std::lock_guard lock(mutex_);
    script_.rules.push_back(std::move(rule));
    cursors_.push_back(0);
    failures_.push_back(0);
}

void MockBackend::set_fallback(Handler fallback) {
    std::lock_guard lock(mutex_);
    fallback_ = std::move(fallback);
}

std::size_t MockBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::string MockBackend::complete(const CompletionRequest& request) {
    std::lock_guard lock(mutex_);
    ++calls_;
    const auto kind = prompt_kind(request.prompt);
    for (std::size_t i = 0; i < script_.rules.size(); ++i) {
        auto& rule = script_.rules[i];
        if (!rule.matches(request, kind)) continue;
        if (failures_[i] < rule.fail_times) {
            ++failures_[i];
            throw Error(rule.fail_code, "scripted failure " + std::to_string(failures_[i]) + " of " +
                                            std::to_string(rule.fail_times));
        }
        if (rule.handler) {
            if (auto out = rule.handler(request)) return *out;
            continue;
        }
        if (rule.responses.empty()) continue;
        const auto idx = std::min(cursors_[i], rule.responses.size() - 1);
        ++cursors_[i];
        return rule.responses[idx];
    }
    if (script_.simulated_fallback && fallback_) {
        if (auto out = fallback_(request)) return *out;
    }
    throw Error(Errc::backend_unavailable, "mock has no response for prompt kind '" + kind + "'");
}

std::vector<EmbeddingVector> MockBackend::embed(const std::vector<std::string>& texts) {
    return embedder_.embed(texts);
}

// ---------------------------------------------------------------------------

RetryingBackend::RetryingBackend(std::shared_ptr<Backend> inner, int max_retries, double base_delay_seconds)
    : inner_(std::move(inner)), max_retries_(max_retries), base_delay_(base_delay_seconds) {}

template <typename F>
auto RetryingBackend::with_retries(F&& fn) -> decltype(fn()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.code() != Errc::backend_unavailable || attempt >= max_retries_) throw;
            ++retries_used_;
            if (base_delay_ > 0)
                std::this_thread::sleep_for(std::chrono::duration<double>(base_delay_ * std::pow(2.0, attempt)));
        }
    }
}

std::string RetryingBackend::complete(const CompletionRequest& request) {
    return with_retries([&] { return inner_->complete(request); });
}

std::vector<EmbeddingVector> RetryingBackend::embed(const std::vector<std::string>& texts) {
    return with_retries([&] { return inner_->embed(texts); });
}

// ---------------------------------------------------------------------------

PromptBuilder::PromptBuilder(std::string_view kind) { text_ = "TASK: " + std::string(kind) + "\n"; }

PromptBuilder& PromptBuilder::header(std::string_view key, std::string_view value) {
    if (in_sections_) throw Error(Errc::precondition, "prompt headers must precede sections");
    text_ += std::string(key) + ": " + text::replace_all(std::string(value), "\n", " ") + "\n";
    return *this;
}

PromptBuilder& PromptBuilder::section(std::string_view name, std::string_view body) {
    in_sections_ = true;
    text_ += "### " + std::string(name) + "\n";
    for (const auto& line : text::split_lines(body)) {
        if (line.starts_with("###")) text_ += " ";
        text_ += line + "\n";
    }
    return *this;
}

std::string PromptBuilder::str() const { return text_; }

std::string prompt_kind(std::string_view prompt) {
    const auto nl = prompt.find('\n');
    const auto first = prompt.substr(0, nl);
    if (!first.starts_with("TASK: ")) return {};
    return text::trim(first.substr(6));
}

std::optional<std::string> prompt_header(std::string_view prompt, std::string_view key) {
    for (const auto& line : text::split_lines(prompt)) {
        if (line.starts_with("###")) break;
        const auto colon = line.find(": ");
        if (colon != std::string::npos && std::string_view(line).substr(0, colon) == key)
            return line.substr(colon + 2);
    }
    return std::nullopt;
}

std::map<std::string, std::string> prompt_sections(std::string_view prompt) {
    std::map<std::string, std::string> out;
    std::string* current = nullptr;
    for (const auto& line : text::split_lines(prompt)) {
        if (line.starts_with("### ")) {
            current = &out[line.substr(4)];
            current->clear();
            continue;
        }
        if (!current) continue;
        if (!current->empty()) *current += "\n";
        *current += line.starts_with(" ###") ? line.substr(1) : line;
    }
    for (auto& [_, body] : out) {
        while (!body.empty() && body.back() == '\n') body.pop_back();
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(StateSet s) {
    switch (s) {
        case StateSet::ternary: return "0|0.5|1";
        case StateSet::binary: return "0|1";
        case StateSet::score10: return "0-10";
    }
    return "";
}

std::vector<double> legal_states(StateSet s) {
    switch (s) {
        case StateSet::ternary: return {0.0, 0.5, 1.0};
        case StateSet::binary: return {0.0, 1.0};
        case StateSet::score10: return {};
    }
    return {};
}

double snap_state(double value, StateSet set) {
    if (set == StateSet::score10) return std::clamp(value, 0.0, 10.0);
    const auto states = legal_states(set);
    double best = states.front();
    double best_dist = std::abs(value - best);
    for (double s : states) {
        const double d = std::abs(value - s);
        if (d < best_dist) {
            best = s;
            best_dist = d;
        }
    }
    return best;
}

std::optional<double> parse_verdict_value(std::string_view response) {
    static const std::regex line_re(R"(^\s*[*_`]*\s*(state|score)\s*[*_`]*\s*[:=]\s*[*_`]*\s*([-+]?(\d+(\.\d*)?|\.\d+)))",
                                    std::regex::icase);
    const auto lines = text::split_lines(response);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::smatch m;
        if (std::regex_search(*it, m, line_re)) {
            const double v = std::stod(m[2].str());
            if (std::isfinite(v)) return v;
        }
    }
    return std::nullopt;
}

namespace {

std::string strip_verdict_lines(std::string_view response) {
    static const std::regex line_re(R"(^\s*[*_`]*\s*(state|score)\s*[*_`]*\s*[:=])", std::regex::icase);
    std::vector<std::string> kept;
    for (const auto& line : text::split_lines(response)) {
        if (!std::regex_search(line, line_re)) kept.push_back(line);
    }
    return text::trim(text::join(kept, "\n"));
}

std::string answer_format(StateSet s) {
    switch (s) {
        case StateSet::ternary:
            return "Explain briefly, then end with exactly one line `STATE: <value>` where <value> is 0, 0.5 or 1.";
        case StateSet::binary:
            return "Explain briefly, then end with exactly one line `STATE: <value>` where <value> is 0 or 1.";
        case StateSet::score10:
            return "Explain briefly, then end with exactly one line `STATE: <value>` where <value> is a number from 0 to "
                   "10.";
    }
    return {};
}

}  // namespace

Judgment judge_rubric(const Rubric& rubric, const std::string& item_id, const Evidence& evidence,
                      const JudgeContext& ctx, const std::vector<std::string>& images) {
    if (!ctx.backend) throw Error(Errc::precondition, "judge_rubric needs a backend");
    PromptBuilder pb(rubric.kind);
    pb.header("RUBRIC", rubric.id).header("ITEM", item_id).header("STATES", to_string(rubric.states));
    pb.section("INSTRUCTIONS", rubric.text);
    for (const auto& [name, body] : evidence) pb.section(name, body);
    pb.section("ANSWER FORMAT", answer_format(rubric.states));

    CompletionRequest req;
    req.prompt = pb.str();
    req.temperature = ctx.temperature;
    req.max_tokens = ctx.max_tokens;
    req.variant = ctx.variant;
    req.images = images;

    auto raw = complete(req, *ctx.backend);
    auto value = parse_verdict_value(raw);
    if (!value) {
        pb.section("REPAIR", "The previous answer had no parseable `STATE:` line. Answer again and finish with the "
                             "STATE line only.");
        req.prompt = pb.str();
        raw = complete(req, *ctx.backend);
        value = parse_verdict_value(raw);
        if (!value)
            throw Error(Errc::unparseable_verdict, rubric.id + " item '" + item_id + "': no STATE line after reprompt");
    }

    Judgment j;
    j.item_id = item_id;
    j.raw = raw;
    j.rationale = strip_verdict_lines(raw);
    const double snapped = snap_state(*value, rubric.states);
    if (snapped != *value) {
        j.warning = std::string(rubric.states == StateSet::score10 ? "clamped " : "coerced ") + text::fixed(*value, 3) +
                    " to " + text::fixed(snapped, 3);
    }
    if (rubric.states == StateSet::score10) {
        j.score = snapped;
    } else {
        j.state = snapped;
    }
    return j;
}

json request_json(const std::string& prompt, Backend& backend, double temperature, int max_tokens,
                  const std::function<std::string(const json&)>& accept, Errc failure, int variant) {
    CompletionRequest req;
    req.prompt = prompt;
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    req.variant = variant;

    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1) {
            req.prompt = prompt + "### REPAIR\nThe previous answer was rejected: " + problem +
                         "\nReturn corrected JSON only.\n";
        }
        const auto raw = complete(req, backend);
        const auto block = text::extract_json_block(raw);
        if (!block) {
            problem = "no JSON value found";
            continue;
        }
        json value;
        try {
            value = json::parse(*block);
        } catch (const json::parse_error& e) {
            problem = std::string("invalid JSON: ") + e.what();
            continue;
        }
        try {
            problem = accept ? accept(value) : std::string();
        } catch (const json::exception& e) {
            problem = e.what();
        }
        if (problem.empty()) return value;
    }
    throw Error(failure, problem);
}

}  // namespace unislide::gateway
