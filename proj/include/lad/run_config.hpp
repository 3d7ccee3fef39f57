#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lad/detail/sha256.hpp"
#include "lad/errors.hpp"
#include "lad/evaluation.hpp"
#include "lad/perception.hpp"
#include "lad/reasoning.hpp"
#include "lad/search_orchestrator.hpp"

namespace lad {

inline constexpr std::string_view kConfigSchema = "lad-config/1";

// The pipeline roles a run configuration must bind to backends.
inline const std::vector<std::string>& pipeline_roles() {
    static const std::vector<std::string> roles = {"perceiver",   "planner",  "judge_router",
                                                   "searcher_summarizer", "reasoner", "evaluator"};
    return roles;
}

struct BackendConfig {
    std::string name;
    std::string type;  // "scripted" | "openai"
    bool vision_capable = false;
    std::map<std::string, std::string> endpoint;  // base_url, model, key_env, path, ...
    int rpm = 0;                                  // 0 = unlimited
    nlohmann::json script;                        // scripted backends: rules/fallback/default
};

struct ProviderConfig {
    std::string type = "stub";  // "stub" | "http"
    nlohmann::json options;     // provider-specific settings / fixtures
};

struct RunConfig {
    nlohmann::json raw;  // normalized source document (drives the config hash)

    std::vector<BackendConfig> backends;
    std::map<std::string, std::string> roles;  // role -> backend name
    bool search_enabled = true;

    PerceptionConfig perception;
    SearchStageConfig search;
    ReasoningConfig reasoning;
    JudgeConfig judge;
    ProviderConfig provider;
    ProviderConfig fetcher;

    std::filesystem::path cache_dir;  // empty = caching disabled
    int parallel_entries = 1;
    int retry_attempts = 3;

    std::string config_hash;

    const BackendConfig& backend_for_role(const std::string& role) const {
        auto binding = roles.find(role);
        if (binding == roles.end()) throw ConfigError("no backend bound for role '" + role + "'");
        for (const auto& backend : backends)
            if (backend.name == binding->second) return backend;
        throw ConfigError("role '" + role + "' bound to undeclared backend '" + binding->second + "'");
    }
};

namespace config_detail {

inline double get_real(const nlohmann::json& j, const char* key, double fallback, double lo, double hi) {
    double v = j.value(key, fallback);
    if (v < lo || v > hi)
        throw ConfigError(std::string(key) + " must be in [" + std::to_string(lo) + "," + std::to_string(hi) +
                          "], got " + std::to_string(v));
    return v;
}

inline SamplingParams parse_sampling(const nlohmann::json& j, SamplingParams defaults) {
    SamplingParams params = defaults;
    params.temperature = get_real(j, "temperature", defaults.temperature, 0.0, 1.0);
    params.top_p = get_real(j, "top_p", defaults.top_p, 0.0, 1.0);
    if (params.top_p <= 0.0) throw ConfigError("top_p must be > 0");
    params.max_output = j.value("max_output", defaults.max_output);
    if (params.max_output <= 0) throw ConfigError("max_output must be positive");
    return params;
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    if (doc.value("schema", "") != kConfigSchema)
        throw ConfigError(std::string("config schema must be \"") + std::string(kConfigSchema) + "\"");

    RunConfig cfg;
    cfg.raw = doc;

    if (!doc.contains("backends") || !doc["backends"].is_array() || doc["backends"].empty())
        throw ConfigError("config needs a non-empty backends array");
    std::set<std::string> names;
    for (const auto& b : doc["backends"]) {
        BackendConfig backend;
        backend.name = b.value("name", std::string());
        backend.type = b.value("type", std::string());
        backend.vision_capable = b.value("vision_capable", false);
        if (backend.name.empty()) throw ConfigError("backend without a name");
        if (!names.insert(backend.name).second) throw ConfigError("duplicate backend name '" + backend.name + "'");
        if (backend.type != "scripted" && backend.type != "openai")
            throw ConfigError("backend '" + backend.name + "': unknown type '" + backend.type + "'");
        if (b.contains("endpoint")) {
            for (const auto& [key, value] : b["endpoint"].items()) {
                if (value.is_string())
                    backend.endpoint[key] = value.get<std::string>();
                else
                    backend.endpoint[key] = value.dump();
            }
        }
        backend.rpm = b.value("rpm", 0);
        if (b.contains("script")) backend.script = b["script"];
        cfg.backends.push_back(std::move(backend));
    }

    if (!doc.contains("roles") || !doc["roles"].is_object()) throw ConfigError("config needs a roles object");
    for (const auto& [role, backend] : doc["roles"].items()) cfg.roles[role] = backend.get<std::string>();
    for (const auto& role : pipeline_roles()) {
        if (!cfg.roles.count(role)) throw ConfigError("role '" + role + "' is not bound to a backend");
        cfg.backend_for_role(role);  // throws on dangling binding
    }

    cfg.search_enabled = doc.contains("stages") ? doc["stages"].value("search_enabled", true) : true;

    if (doc.contains("perception")) {
        const auto& p = doc["perception"];
        cfg.perception.description_floor = p.value("description_floor", cfg.perception.description_floor);
        SamplingParams sampling = config_detail::parse_sampling(
            p, {cfg.perception.temperature, cfg.perception.top_p, cfg.perception.max_output});
        cfg.perception.temperature = sampling.temperature;
        cfg.perception.top_p = sampling.top_p;
        cfg.perception.max_output = sampling.max_output;
    }

    if (doc.contains("search")) {
        const auto& s = doc["search"];
        cfg.search.routing_threshold = config_detail::get_real(s, "routing_threshold", 0.5, 0.0, 1.0);
        cfg.search.fanout = s.value("fanout", cfg.search.fanout);
        SamplingParams sampling =
            config_detail::parse_sampling(s, {cfg.search.temperature, cfg.search.top_p, cfg.search.max_output});
        cfg.search.temperature = sampling.temperature;
        cfg.search.top_p = sampling.top_p;
        cfg.search.max_output = sampling.max_output;
    }

    if (doc.contains("web_search")) {
        const auto& w = doc["web_search"];
        auto& web = cfg.search.web;
        web.dag_limits.max_nodes = w.value("max_nodes", web.dag_limits.max_nodes);
        web.dag_limits.max_depth = w.value("max_depth", web.dag_limits.max_depth);
        web.snippets_per_node = w.value("snippet_k", web.snippets_per_node);
        web.pages_per_question = w.value("pages_m", web.pages_per_question);
        web.page_budget = w.value("page_budget", web.page_budget);
        web.fetch_timeout_seconds = w.value("fetch_timeout_s", web.fetch_timeout_seconds);
        web.dag_parallelism = w.value("parallelism", web.dag_parallelism);
        if (web.dag_limits.max_nodes < 1 || web.dag_limits.max_depth < 1)
            throw ConfigError("web_search caps must be >= 1");
        if (w.contains("provider")) {
            cfg.provider.type = w["provider"].value("type", "stub");
            cfg.provider.options = w["provider"];
        }
        if (w.contains("fetcher")) {
            cfg.fetcher.type = w["fetcher"].value("type", "stub");
            cfg.fetcher.options = w["fetcher"];
        }
        web.temperature = cfg.search.temperature;
        web.top_p = cfg.search.top_p;
        web.max_output = cfg.search.max_output;
    }

    if (doc.contains("sampling")) {
        const auto& s = doc["sampling"];
        if (s.contains("mcq")) cfg.reasoning.mcq = config_detail::parse_sampling(s["mcq"], cfg.reasoning.mcq);
        if (s.contains("osq")) cfg.reasoning.osq = config_detail::parse_sampling(s["osq"], cfg.reasoning.osq);
    }

    if (doc.contains("reasoning")) {
        const auto& r = doc["reasoning"];
        cfg.reasoning.send_image = r.value("send_image", cfg.reasoning.send_image);
        cfg.reasoning.think_open = r.value("think_open", cfg.reasoning.think_open);
        cfg.reasoning.think_close = r.value("think_close", cfg.reasoning.think_close);
        if (cfg.reasoning.think_open.empty() || cfg.reasoning.think_close.empty())
            throw ConfigError("think markers must be non-empty");
    }

    if (doc.contains("judge")) {
        const auto& j = doc["judge"];
        cfg.judge.runs = j.value("runs", cfg.judge.runs);
        if (cfg.judge.runs < 3)
            throw ConfigError("judge.runs must be >= 3 (scores are averaged over at least three runs), got " +
                              std::to_string(cfg.judge.runs));
        cfg.judge.temperature = config_detail::get_real(j, "temperature", cfg.judge.temperature, 0.0, 1.0);
        cfg.judge.send_image = j.value("send_image", cfg.judge.send_image);
    }

    if (doc.contains("cache_dir")) cfg.cache_dir = doc["cache_dir"].get<std::string>();
    cfg.parallel_entries = doc.value("parallel_entries", 1);
    if (cfg.parallel_entries < 1) throw ConfigError("parallel_entries must be >= 1");
    cfg.retry_attempts = doc.value("retry_attempts", 3);
    if (cfg.retry_attempts < 1) throw ConfigError("retry_attempts must be >= 1");

    // Hash the normalized document: nlohmann orders object keys, so two
    // files differing only in key order or whitespace hash identically.
    cfg.config_hash = detail::sha256_hex(doc.dump());
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    try {
        return parse_run_config(doc);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace lad
