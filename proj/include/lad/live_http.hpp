#pragma once

// Live network adapters. This header is the only place that pulls in
// cpp-httplib; offline code paths (scripted backend, stubs) never include
// it. Define CPPHTTPLIB_OPENSSL_SUPPORT before including to enable https.

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "lad/detail/net_instrumentation.hpp"
#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/page_fetcher.hpp"
#include "lad/search_provider.hpp"

namespace lad {

inline constexpr const char* kUserAgent = "lad-pipeline/1.0 (research; single fetch per url)";

namespace live_detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // /path?query
};

inline std::optional<SplitUrl> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return std::nullopt;
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
        out.path = "/";
    } else {
        out.origin = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    return out;
}

inline std::string url_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size() * 3);
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

inline std::string env_or_empty(const std::string& name) {
    const char* value = std::getenv(name.c_str());
    return value ? value : std::string();
}

}  // namespace live_detail

// Chat backend speaking the OpenAI-compatible /chat/completions protocol.
// endpoint_config keys: base_url, model, key_env (credential variable,
// default LAD_BACKEND_<NAME>_KEY), path (default /v1/chat/completions).
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
        if (!descriptor_.endpoint_config.count("base_url"))
            throw ConfigError("backend '" + descriptor_.name + "' needs endpoint.base_url");
        if (!descriptor_.endpoint_config.count("model"))
            throw ConfigError("backend '" + descriptor_.name + "' needs endpoint.model");
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    ModelResponse complete_raw(const ModelRequest& request) override {
        nlohmann::json content = nlohmann::json::array();
        for (const auto& part : request.user_parts) {
            if (const auto* text = std::get_if<std::string>(&part)) {
                content.push_back({{"type", "text"}, {"text", *text}});
            } else {
                const auto& img = std::get<ImagePart>(part);
                std::string data_url = "data:" + img.media_type + ";base64," +
                                       detail::base64_encode(img.bytes.data(), img.bytes.size());
                content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url}}}});
            }
        }
        nlohmann::json messages = nlohmann::json::array();
        if (!request.system_text.empty())
            messages.push_back({{"role", "system"}, {"content", request.system_text}});
        messages.push_back({{"role", "user"}, {"content", content}});
        nlohmann::json body{{"model", descriptor_.endpoint_config.at("model")},
                            {"messages", messages},
                            {"temperature", request.temperature},
                            {"top_p", request.top_p},
                            {"max_tokens", request.max_output}};

        std::string key_env = descriptor_.endpoint_config.count("key_env")
                                  ? descriptor_.endpoint_config.at("key_env")
                                  : default_key_env();
        std::string api_key = live_detail::env_or_empty(key_env);

        auto split = live_detail::split_url(descriptor_.endpoint_config.at("base_url"));
        if (!split) throw ConfigError("backend '" + descriptor_.name + "': malformed base_url");
        std::string path = descriptor_.endpoint_config.count("path") ? descriptor_.endpoint_config.at("path")
                                                                     : "/v1/chat/completions";

        detail::record_socket_attempt();
        httplib::Client client(split->origin);
        client.set_connection_timeout(15, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers{{"User-Agent", kUserAgent}};
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto result = client.Post(path, headers, body.dump(), "application/json");
        if (!result)
            throw TransportError("backend '" + descriptor_.name +
                                 "': " + httplib::to_string(result.error()));
        if (result->status < 200 || result->status >= 300)
            throw TransportError("backend '" + descriptor_.name + "': HTTP " + std::to_string(result->status) +
                                 ": " + result->body.substr(0, 300));

        nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
        if (reply.is_discarded()) throw TransportError("backend '" + descriptor_.name + "': non-JSON reply");
        ModelResponse response;
        try {
            response.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw TransportError("backend '" + descriptor_.name + "': reply missing choices[0].message.content");
        }
        if (reply.contains("usage") && reply["usage"].is_object()) {
            response.usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0ull);
            response.usage.completion_tokens = reply["usage"].value("completion_tokens", 0ull);
        }
        response.backend_name = descriptor_.name;
        return response;
    }

private:
    std::string default_key_env() const {
        std::string upper;
        for (char c : descriptor_.name)
            upper += std::isalnum(static_cast<unsigned char>(c))
                         ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                         : '_';
        return "LAD_BACKEND_" + upper + "_KEY";
    }

    BackendDescriptor descriptor_;
};

// Single-shot page fetcher: one GET per url, custom user agent, no
// redirects beyond httplib's defaults, no crawling.
class HttpPageFetcher : public PageFetcher {
public:
    RawPage fetch(const std::string& url, int timeout_seconds) override {
        auto split = live_detail::split_url(url);
        if (!split) throw FetchError("malformed url: " + url);
        detail::record_socket_attempt();
        httplib::Client client(split->origin);
        client.set_follow_location(true);
        client.set_connection_timeout(timeout_seconds, 0);
        client.set_read_timeout(timeout_seconds, 0);
        auto result = client.Get(split->path, httplib::Headers{{"User-Agent", kUserAgent}});
        if (!result) throw FetchError(url + ": " + httplib::to_string(result.error()));
        if (result->status < 200 || result->status >= 300)
            throw FetchError(url + ": HTTP " + std::to_string(result->status));
        RawPage page;
        page.body = result->body;
        page.content_type = result->get_header_value("Content-Type");
        return page;
    }
};

// Minimal live snippet provider: GET <endpoint>?q=<query> returning
// {"results": [{"title":..., "summary":..., "url":...}]}. Any real search
// API can be bridged to this shape with a thin proxy; the key (if any) is
// sent as a Bearer token from the configured environment variable.
class HttpSearchProvider : public SearchProvider {
public:
    HttpSearchProvider(std::string endpoint, std::string key_env)
        : endpoint_(std::move(endpoint)), key_env_(std::move(key_env)) {}

    std::vector<Snippet> query(const std::string& query_text, int max_results) override {
        auto split = live_detail::split_url(endpoint_);
        if (!split) throw ProviderError("malformed search endpoint: " + endpoint_);
        std::string path = split->path;
        path += path.find('?') == std::string::npos ? '?' : '&';
        path += "q=" + live_detail::url_encode(query_text);

        detail::record_socket_attempt();
        httplib::Client client(split->origin);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(20, 0);
        httplib::Headers headers{{"User-Agent", kUserAgent}};
        std::string key = live_detail::env_or_empty(key_env_);
        if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
        auto result = client.Get(path, headers);
        if (!result) throw ProviderError("search endpoint: " + httplib::to_string(result.error()));
        if (result->status < 200 || result->status >= 300)
            throw ProviderError("search endpoint: HTTP " + std::to_string(result->status));
        nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("results") || !reply["results"].is_array())
            throw ProviderError("search endpoint returned no results array");
        std::vector<Snippet> out;
        for (const auto& r : reply["results"]) {
            if (static_cast<int>(out.size()) >= max_results) break;
            Snippet s;
            s.title = r.value("title", std::string());
            s.summary = r.value("summary", std::string());
            s.url = r.value("url", std::string());
            if (s.url.empty()) continue;
            out.push_back(std::move(s));
        }
        return out;
    }

private:
    std::string endpoint_;
    std::string key_env_;
};

}  // namespace lad
