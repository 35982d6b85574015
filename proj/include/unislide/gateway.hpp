#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "unislide/error.hpp"

namespace unislide::gateway {

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.4;
    int max_tokens = 1024;
    std::vector<std::string> images;  // file paths or data URIs
    // Distinguishes otherwise identical requests across repeated runs so a
    // stochastic backend can vary; deterministic backends ignore it.
    int variant = 0;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_id;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// Checks preconditions and the non-empty postcondition around backend.complete.
std::string complete(const CompletionRequest& request, Backend& backend);
std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, Backend& backend);

/// Deterministic bag-of-tokens embedder: every token hashes to a seeded
/// pseudo-random direction and a text is the normalized sum of its tokens.
class HashEmbedder {
public:
    static constexpr std::size_t kDimension = 64;

    explicit HashEmbedder(std::uint64_t seed = 0) : seed_(seed) {}
    EmbeddingVector embed(std::string_view text) const;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const;

private:
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Scripted mock

using Handler = std::function<std::optional<std::string>(const CompletionRequest&)>;

struct MockRule {
    std::string kind;      // matches the prompt's TASK line when non-empty
    std::string contains;  // substring of the prompt when non-empty
    std::optional<std::regex> pattern;
    std::string pattern_source;
    std::vector<std::string> responses;  // consumed in order, the last one repeats
    int fail_times = 0;                  // first N matching calls throw
    Errc fail_code = Errc::backend_unavailable;
    Handler handler;  // used instead of responses when set; nullopt falls through

    bool matches(const CompletionRequest& request, std::string_view kind_of_prompt) const;
};

struct MockScript {
    std::uint64_t seed = 0;
    double jitter = 0.0;  // amplitude of score noise in the simulated fallback
    std::vector<MockRule> rules;
    bool simulated_fallback = true;

    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::string& path);
};

class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script, Handler fallback = nullptr);

    std::string name() const override { return "mock"; }
    std::string complete(const CompletionRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

    void add_rule(MockRule rule);
    void set_fallback(Handler fallback);
    const MockScript& script() const { return script_; }
    std::size_t call_count() const;

private:
    MockScript script_;
    Handler fallback_;
    HashEmbedder embedder_;
    std::vector<std::size_t> cursors_;
    std::vector<int> failures_;
    std::size_t calls_ = 0;
    mutable std::mutex mutex_;
};

/// Retries BackendUnavailable with exponential backoff.
class RetryingBackend : public Backend {
public:
    RetryingBackend(std::shared_ptr<Backend> inner, int max_retries = 3, double base_delay_seconds = 0.5);

    std::string name() const override { return inner_->name(); }
    std::string complete(const CompletionRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

    int retries_used() const { return retries_used_; }

private:
    template <typename F>
    auto with_retries(F&& fn) -> decltype(fn());

    std::shared_ptr<Backend> inner_;
    int max_retries_;
    double base_delay_;
    int retries_used_ = 0;
};

struct HttpConfig {
    std::string api_base = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-4o";
    std::string embed_model = "text-embedding-3-small";
    double timeout_seconds = 120;
};

/// OpenAI-compatible chat/embeddings client.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpConfig config);

    std::string name() const override { return "http:" + config_.model; }
    std::string complete(const CompletionRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    nlohmann::json post(const std::string& path, const nlohmann::json& body);

    HttpConfig config_;
};

HttpConfig http_config_from_env();

// ---------------------------------------------------------------------------
// Prompts

/// Prompts are plain text: a `TASK:` line, optional `KEY: value` header lines,
/// then `### NAME` sections. Backends and mocks key off this layout.
class PromptBuilder {
public:
    explicit PromptBuilder(std::string_view kind);
    PromptBuilder& header(std::string_view key, std::string_view value);
    PromptBuilder& section(std::string_view name, std::string_view body);
    std::string str() const;

private:
    std::string text_;
    bool in_sections_ = false;
};

std::string prompt_kind(std::string_view prompt);
std::optional<std::string> prompt_header(std::string_view prompt, std::string_view key);
std::map<std::string, std::string> prompt_sections(std::string_view prompt);

// ---------------------------------------------------------------------------
// Rubric judging

enum class StateSet { ternary, binary, score10 };

std::string_view to_string(StateSet s);
std::vector<double> legal_states(StateSet s);

/// Nearest legal state; exact midpoints go to the lower state.
double snap_state(double value, StateSet set);

struct Rubric {
    std::string id;    // e.g. "scenario/coverage_point"
    std::string kind;  // prompt TASK kind
    std::string text;
    StateSet states = StateSet::ternary;
};

struct Judgment {
    std::string item_id;
    std::optional<double> state;
    std::optional<double> score;
    std::string rationale;
    std::string raw;
    std::string warning;  // set when a value was coerced or clamped

    double value() const { return state ? *state : score.value_or(0.0); }
};

struct JudgeContext {
    Backend* backend = nullptr;
    double temperature = 0.2;
    int max_tokens = 1024;
    int variant = 0;
};

using Evidence = std::vector<std::pair<std::string, std::string>>;

/// Extracts the value from the last `STATE:` (or `SCORE:`) line.
std::optional<double> parse_verdict_value(std::string_view response);

/// One rubric call. Unparseable output gets one reprompt, then
/// UnparseableVerdict. Out-of-set states snap, scores clamp to [0,10].
Judgment judge_rubric(const Rubric& rubric, const std::string& item_id, const Evidence& evidence,
                      const JudgeContext& ctx, const std::vector<std::string>& images = {});

/// Asks for a structured JSON answer; one reprompt when `accept` rejects the
/// parse (it returns an error message, empty when the value is acceptable).
nlohmann::json request_json(const std::string& prompt, Backend& backend, double temperature, int max_tokens,
                            const std::function<std::string(const nlohmann::json&)>& accept, Errc failure,
                            int variant = 0);

}  // namespace unislide::gateway
