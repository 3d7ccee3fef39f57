#pragma once

// Wires live adapter types into the pipeline factories. Only binaries that
// actually talk to the network include this header.

#include <memory>

#include "lad/live_http.hpp"
#include "lad/pipeline.hpp"

namespace lad {

inline BackendFactory live_backend_factory() {
    return [](const BackendConfig& config) -> std::unique_ptr<ChatBackend> {
        if (config.type == "openai") {
            BackendDescriptor descriptor;
            descriptor.name = config.name;
            descriptor.vision_capable = config.vision_capable;
            descriptor.endpoint_config = config.endpoint;
            return std::make_unique<HttpChatBackend>(std::move(descriptor));
        }
        throw ConfigError("backend '" + config.name + "': unsupported live type '" + config.type + "'");
    };
}

inline std::unique_ptr<SearchProvider> make_search_provider(const ProviderConfig& config) {
    if (config.type == "stub") return make_stub_provider(config.options);
    if (config.type == "http") {
        std::string endpoint = config.options.value("endpoint", std::string());
        if (endpoint.empty()) throw ConfigError("http search provider needs an endpoint");
        return std::make_unique<HttpSearchProvider>(endpoint, config.options.value("key_env", std::string()));
    }
    throw ConfigError("unknown search provider type '" + config.type + "'");
}

inline std::unique_ptr<PageFetcher> make_page_fetcher(const ProviderConfig& config) {
    if (config.type == "stub") return make_stub_fetcher(config.options);
    if (config.type == "http") return std::make_unique<HttpPageFetcher>();
    throw ConfigError("unknown fetcher type '" + config.type + "'");
}

}  // namespace lad
