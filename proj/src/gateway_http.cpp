// The only translation unit that opens outbound connections.
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "unislide/gateway.hpp"
#include "unislide/text.hpp"

namespace unislide::gateway {

using json = nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::string image_url(const std::string& image) {
    if (image.starts_with("data:") || image.starts_with("http://") || image.starts_with("https://")) return image;
    std::ifstream in(image, std::ios::binary);
    if (!in) throw Error(Errc::missing_file, image);
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto lower = text::to_lower_ascii(image);
    const char* mime = lower.ends_with(".jpg") || lower.ends_with(".jpeg") ? "image/jpeg" : "image/png";
    return std::string("data:") + mime + ";base64," + text::base64_encode(ss.str());
}

}  // namespace

HttpConfig http_config_from_env() {
    HttpConfig c;
    c.api_base = env_or("UNISLIDE_API_BASE", c.api_base);
    c.api_key = env_or("UNISLIDE_API_KEY", "");
    c.model = env_or("UNISLIDE_MODEL", c.model);
    c.embed_model = env_or("UNISLIDE_EMBED_MODEL", c.embed_model);
    return c;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    while (!config_.api_base.empty() && config_.api_base.back() == '/') config_.api_base.pop_back();
}

json HttpBackend::post(const std::string& path, const json& body) {
    // split "scheme://host[:port]/prefix"
    const auto scheme_end = config_.api_base.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::backend_unavailable, "bad API base " + config_.api_base);
    const auto host_end = config_.api_base.find('/', scheme_end + 3);
    const auto origin = config_.api_base.substr(0, host_end);
    const auto prefix = host_end == std::string::npos ? std::string() : config_.api_base.substr(host_end);

    httplib::Client client(origin);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(prefix + path, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::backend_unavailable, origin + ": " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw Error(Errc::backend_unavailable, origin + " answered HTTP " + std::to_string(res->status));
    if (res->status != 200)
        throw Error(Errc::malformed_response, origin + " answered HTTP " + std::to_string(res->status) + ": " +
                                                  text::truncate_cp(res->body, 300));
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed_response, std::string("response is not JSON: ") + e.what());
    }
}

std::string HttpBackend::complete(const CompletionRequest& request) {
    json content;
    if (request.images.empty()) {
        content = request.prompt;
    } else {
        content = json::array({{{"type", "text"}, {"text", request.prompt}}});
        for (const auto& img : request.images)
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(img)}}}});
    }
    json body = {{"model", config_.model},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens},
                 {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
    const auto reply = post("/chat/completions", body);
    try {
        const auto& choice = reply.at("choices").at(0);
        if (choice.value("finish_reason", "") == "length")
            throw Error(Errc::token_limit, "completion truncated at max_tokens=" + std::to_string(request.max_tokens));
        return choice.at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_response, std::string("unexpected completion shape: ") + e.what());
    }
}

std::vector<EmbeddingVector> HttpBackend::embed(const std::vector<std::string>& texts) {
    const auto reply = post("/embeddings", {{"model", config_.embed_model}, {"input", texts}});
    std::vector<EmbeddingVector> out;
    try {
        for (const auto& item : reply.at("data")) {
            EmbeddingVector v;
            v.values = item.at("embedding").get<std::vector<double>>();
            v.model_id = config_.embed_model;
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_response, std::string("unexpected embedding shape: ") + e.what());
    }
    return out;
}

}  // namespace unislide::gateway
