#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lad/detail/parallel.hpp"
#include "lad/errors.hpp"
#include "lad/evaluation.hpp"
#include "lad/gateway.hpp"
#include "lad/manifest.hpp"
#include "lad/perception.hpp"
#include "lad/reasoning.hpp"
#include "lad/response_cache.hpp"
#include "lad/run_config.hpp"
#include "lad/scripted_backend.hpp"
#include "lad/search_orchestrator.hpp"
#include "lad/search_provider.hpp"
#include "lad/trace.hpp"
#include "lad/web_search.hpp"

namespace lad {

// Builds non-scripted backend types; registered by callers that link the
// live adapters so offline builds and tests never touch network code.
using BackendFactory = std::function<std::unique_ptr<ChatBackend>(const BackendConfig&)>;

inline std::unique_ptr<ScriptedBackend> make_scripted_backend(const BackendConfig& config) {
    auto backend = std::make_unique<ScriptedBackend>(config.name, config.vision_capable);
    const nlohmann::json& script = config.script;
    if (script.is_object()) {
        auto parse_reply = [](const nlohmann::json& j) {
            ScriptedBackend::Reply reply;
            if (j.is_string()) {
                reply.text = j.get<std::string>();
                return reply;
            }
            reply.text = j.value("text", std::string());
            std::string outcome = j.value("outcome", "ok");
            if (outcome == "transport_error") reply.outcome = ScriptedBackend::Outcome::transport_error;
            if (outcome == "empty") reply.outcome = ScriptedBackend::Outcome::empty_response;
            return reply;
        };
        if (script.contains("rules")) {
            for (const auto& rule : script["rules"]) {
                backend->add_rule(rule.value("contains", std::string()), parse_reply(rule),
                                  rule.value("max_uses", -1));
            }
        }
        if (script.contains("fallback"))
            for (const auto& reply : script["fallback"]) backend->push_fallback(parse_reply(reply));
        if (script.contains("default_text")) {
            ScriptedBackend::Reply reply;
            reply.text = script["default_text"].get<std::string>();
            backend->set_default(reply);
        }
    }
    return backend;
}

inline std::unique_ptr<SearchProvider> make_stub_provider(const nlohmann::json& options) {
    bool synthesize = options.is_object() ? options.value("synthesize_unmatched", true) : true;
    auto provider = std::make_unique<StubSearchProvider>(synthesize);
    if (options.is_object() && options.contains("rules")) {
        for (const auto& rule : options["rules"]) {
            std::vector<Snippet> snippets;
            for (const auto& s : rule.value("snippets", nlohmann::json::array())) {
                Snippet snippet;
                snippet.title = s.value("title", std::string());
                snippet.summary = s.value("summary", std::string());
                snippet.url = s.value("url", std::string());
                snippets.push_back(std::move(snippet));
            }
            provider->add_rule(rule.value("contains", std::string()), std::move(snippets));
        }
    }
    return provider;
}

inline std::unique_ptr<PageFetcher> make_stub_fetcher(const nlohmann::json& options) {
    auto fetcher = std::make_unique<StubPageFetcher>();
    if (options.is_object()) {
        if (options.contains("pages")) {
            for (const auto& page : options["pages"]) {
                fetcher->add_page(page.value("url_contains", std::string()), page.value("body", std::string()),
                                  page.value("content_type", "text/html"));
            }
        }
        if (options.contains("default_body")) fetcher->set_default_body(options["default_body"].get<std::string>());
    }
    return fetcher;
}

// Uniform entry point for every model call in a run: role resolution,
// response cache, rate limiting, retry, and call logging.
class Gateway {
public:
    Gateway(const RunConfig& config, BackendFactory live_factory = nullptr) : config_(config) {
        for (const auto& backend_cfg : config.backends) {
            std::unique_ptr<ChatBackend> backend;
            if (backend_cfg.type == "scripted") {
                backend = make_scripted_backend(backend_cfg);
            } else if (live_factory) {
                backend = live_factory(backend_cfg);
            } else {
                throw ConfigError("backend '" + backend_cfg.name +
                                  "' has type '" + backend_cfg.type + "' but no live factory is registered");
            }
            limiters_.emplace(backend_cfg.name, std::make_unique<RateLimiter>(backend_cfg.rpm));
            backends_.emplace(backend_cfg.name, std::move(backend));
        }
        if (!config.cache_dir.empty()) cache_ = std::make_unique<ResponseCache>(config.cache_dir);
    }

    ChatBackend& backend(const std::string& name) {
        auto it = backends_.find(name);
        if (it == backends_.end()) throw ConfigError("no backend named '" + name + "'");
        return *it->second;
    }

    ModelResponse call(const std::string& role, const std::string& scope, const ModelRequest& request,
                       CallLog* log) {
        const BackendConfig& backend_cfg = config_.backend_for_role(role);
        ChatBackend& be = backend(backend_cfg.name);
        request.validate();
        if (request.has_image() && !be.descriptor().vision_capable)
            throw CapabilityError("role '" + role + "': image part sent to text-only backend '" +
                                  backend_cfg.name + "'");
        total_calls_.fetch_add(1);

        std::string key = fingerprint(request, be.descriptor());
        if (cache_) {
            if (auto hit = cache_->lookup(key)) {
                cache_hits_.fetch_add(1);
                if (log) log->add({scope, role, hit->backend_name, fingerprint(request), hit->usage, true});
                return *hit;
            }
        }

        limiters_.at(backend_cfg.name)->acquire();
        backend_invocations_.fetch_add(1);
        ModelResponse response = complete_with_retry(be, request, config_.retry_attempts, retry_policy_);
        if (cache_) cache_->store(key, response);
        if (log) log->add({scope, role, response.backend_name, fingerprint(request), response.usage, false});
        return response;
    }

    // Client bound to one role and trace scope.
    RoleClient client(const std::string& role, const std::string& scope, CallLog* log) {
        return [this, role, scope, log](const ModelRequest& request) { return call(role, scope, request, log); };
    }

    void set_retry_policy(RetryPolicy policy) { retry_policy_ = std::move(policy); }

    std::uint64_t total_calls() const { return total_calls_.load(); }
    std::uint64_t backend_invocations() const { return backend_invocations_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }

private:
    const RunConfig& config_;
    std::map<std::string, std::unique_ptr<ChatBackend>> backends_;
    std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;
    std::unique_ptr<ResponseCache> cache_;
    RetryPolicy retry_policy_;
    std::atomic<std::uint64_t> total_calls_{0};
    std::atomic<std::uint64_t> backend_invocations_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
};

struct RunFlags {
    bool include_search = true;  // --stage=1+2+3 (true) or 1+3 (false)
    std::optional<TaskKind> task_filter;  // --task; unset = entry's own tasks
    std::string language_filter = "all";  // "en" | "zh" | "all"
    bool force = false;
    std::optional<int> parallel;  // overrides config parallel_entries
    bool dry_run = false;
};

struct EntryOutcome {
    std::string entry_id;
    TraceStatus status = TraceStatus::complete;
    std::string error;
    Usage usage;
};

namespace pipeline_detail {

inline nlohmann::json base_trace(const BenchmarkEntry& entry, const RunConfig& cfg) {
    return {{"schema", std::string(kTraceSchema)},
            {"entry_id", entry.id},
            {"config_hash", cfg.config_hash},
            {"language", prompts::language_name(entry.language)},
            {"task", to_string(entry.task)},
            {"prompt_version", std::string(prompts::kPromptVersion)},
            {"stages", nlohmann::json::object()}};
}

inline void attach_calls(nlohmann::json& trace, const CallLog& log) {
    auto calls = log.sorted();
    trace["calls"] = to_json(calls);
    Usage total = log.total_usage();
    trace["usage"] = {{"prompt_tokens", total.prompt_tokens},
                      {"completion_tokens", total.completion_tokens},
                      {"calls", calls.size()}};
}

}  // namespace pipeline_detail

// Runs one benchmark entry through the enabled stages, checkpointing the
// trace after each stage so an interrupted batch can resume.
inline EntryOutcome run_entry(const BenchmarkEntry& entry, const RunConfig& cfg, Gateway& gateway,
                              SearchProvider* provider, PageFetcher* fetcher, const RunFlags& flags,
                              TraceStore* store) {
    EntryOutcome outcome;
    outcome.entry_id = entry.id;

    CallLog log;
    nlohmann::json trace = pipeline_detail::base_trace(entry, cfg);
    nlohmann::json timing{{"entry_id", entry.id}, {"wall_ms", nlohmann::json::object()}};
    auto persist = [&](TraceStatus status) {
        trace["status"] = to_string(status);
        pipeline_detail::attach_calls(trace, log);
        if (store) store->persist(entry.id, trace);
    };
    auto stage_clock = [] { return std::chrono::steady_clock::now(); };
    auto ms_since = [](std::chrono::steady_clock::time_point start) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
            .count();
    };

    bool run_search = flags.include_search && cfg.search_enabled;
    bool want_mcq = entry.wants_mcq() && (!flags.task_filter || *flags.task_filter == TaskKind::mcq);
    bool want_osq = entry.wants_osq() && (!flags.task_filter || *flags.task_filter == TaskKind::osq);

    auto total_start = stage_clock();
    try {
        ImageInput image = load_image(entry);

        // Stage I
        auto t0 = stage_clock();
        PerceptionConfig perception_cfg = cfg.perception;
        PerceptionResult perception = run_perception(image, gateway.client("perceiver", "perception", &log),
                                                     perception_cfg);
        trace["stages"]["perception"] = to_json(perception);
        timing["wall_ms"]["perception"] = ms_since(t0);
        persist(TraceStatus::incomplete);

        // Stage II
        SearchSummary summary;  // empty sentinel unless the stage runs and succeeds
        if (run_search) {
            auto t1 = stage_clock();
            SearchStageConfig search_cfg = cfg.search;
            search_cfg.language = entry.language;
            SearchStageDeps deps;
            deps.planner = gateway.client("planner", "search", &log);
            deps.judge = gateway.client("judge_router", "search", &log);
            deps.searcher = gateway.client("searcher_summarizer", "search", &log);
            deps.provider = provider;
            deps.fetcher = fetcher;
            SearchStageTrace stage_trace;
            summary = run_search_stage(perception, deps, search_cfg, &stage_trace);
            trace["stages"]["search"] = to_json(stage_trace);
            timing["wall_ms"]["search"] = ms_since(t1);
            persist(TraceStatus::incomplete);
        }

        // Stage III
        auto t2 = stage_clock();
        nlohmann::json reasoning = nlohmann::json::object();
        ReasoningConfig reasoning_cfg = cfg.reasoning;
        if (want_mcq) {
            ReasoningTask task = ReasoningTask::mcq(entry.question, entry.options, entry.language);
            try {
                ReasoningResult result =
                    reason(image, perception, summary, task, gateway.client("reasoner", "reasoning.mcq", &log),
                           reasoning_cfg);
                reasoning["mcq"] = to_json(result);
            } catch (const ExtractionError& e) {
                // Unanswered: scored incorrect downstream, not a hard failure.
                reasoning["mcq"] = {{"unanswered", true}, {"error", e.what()}};
            }
        }
        if (want_osq) {
            ReasoningTask task = ReasoningTask::osq(entry.language);
            ReasoningResult result =
                reason(image, perception, summary, task, gateway.client("reasoner", "reasoning.osq", &log),
                       reasoning_cfg);
            reasoning["osq"] = to_json(result);
        }
        trace["stages"]["reasoning"] = reasoning;
        timing["wall_ms"]["reasoning"] = ms_since(t2);

        outcome.status = TraceStatus::complete;
    } catch (const Error& e) {
        outcome.status = TraceStatus::failed;
        outcome.error = e.what();
        trace["error"] = e.what();
    }

    timing["wall_ms"]["total"] = ms_since(total_start);
    timing["cached_calls"] = log.cached_count();
    persist(outcome.status);
    if (store) store->persist_timing(entry.id, timing);
    outcome.usage = log.total_usage();
    return outcome;
}

struct BatchResult {
    std::string run_id;
    std::filesystem::path run_dir;
    int completed = 0;
    int skipped = 0;
    int failed = 0;
    Usage total_usage;  // summed over all trace files in the run
    std::uint64_t backend_invocations = 0;
    std::uint64_t cache_hits = 0;
    std::vector<EntryOutcome> outcomes;
};

using ProgressSink = std::function<void(const std::string&)>;

inline std::string make_run_id(const std::string& config_hash) {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm_utc);
    return std::string(buf) + "-" + config_hash.substr(0, 8);
}

// Sums usage over every trace file in the store, so the run-level totals are
// exactly the per-call records' sum.
inline Usage sum_trace_usage(const TraceStore& store) {
    Usage total;
    for (const auto& id : store.entry_ids()) {
        auto trace = store.load(id);
        if (!trace || !trace->contains("usage")) continue;
        total.prompt_tokens += (*trace)["usage"].value("prompt_tokens", 0ull);
        total.completion_tokens += (*trace)["usage"].value("completion_tokens", 0ull);
    }
    return total;
}

inline BatchResult run_batch(const RunConfig& cfg, const std::vector<BenchmarkEntry>& all_entries,
                             const std::filesystem::path& out_root, const std::string& run_id,
                             const RunFlags& flags, Gateway& gateway, SearchProvider* provider,
                             PageFetcher* fetcher, const ProgressSink& progress = nullptr) {
    BatchResult result;
    result.run_id = run_id;
    result.run_dir = out_root / run_id;

    std::vector<BenchmarkEntry> entries;
    for (const auto& entry : all_entries) {
        if (flags.language_filter != "all" &&
            flags.language_filter != prompts::language_name(entry.language))
            continue;
        entries.push_back(entry);
    }

    auto say = [&](const std::string& line) {
        if (progress) progress(line);
    };

    if (flags.dry_run) {
        say("dry-run ok: " + std::to_string(entries.size()) + " entries validated, 0 gateway calls");
        return result;
    }

    TraceStore store(result.run_dir / "traces");
    std::mutex result_mu;
    std::size_t bound = static_cast<std::size_t>(flags.parallel.value_or(cfg.parallel_entries));

    detail::parallel_for(entries.size(), bound, [&](std::size_t i) {
        const BenchmarkEntry& entry = entries[i];
        if (!flags.force && store.has_complete(entry.id, cfg.config_hash)) {
            std::lock_guard<std::mutex> lock(result_mu);
            ++result.skipped;
            say(entry.id + " all skipped tokens=0");
            return;
        }
        EntryOutcome outcome = run_entry(entry, cfg, gateway, provider, fetcher, flags, &store);
        std::lock_guard<std::mutex> lock(result_mu);
        if (outcome.status == TraceStatus::complete) {
            ++result.completed;
        } else {
            ++result.failed;
        }
        say(entry.id + " all " + to_string(outcome.status) + " tokens=" + std::to_string(outcome.usage.total()) +
            (outcome.error.empty() ? "" : " error=" + outcome.error));
        result.outcomes.push_back(std::move(outcome));
    });

    result.total_usage = sum_trace_usage(store);
    result.backend_invocations = gateway.backend_invocations();
    result.cache_hits = gateway.cache_hits();

    nlohmann::json run_doc{{"schema", "lad-run/1"},
                           {"run_id", run_id},
                           {"config_hash", cfg.config_hash},
                           {"completed", result.completed},
                           {"skipped", result.skipped},
                           {"failed", result.failed},
                           {"total_prompt_tokens", result.total_usage.prompt_tokens},
                           {"total_completion_tokens", result.total_usage.completion_tokens}};
    std::error_code ec;
    std::filesystem::create_directories(result.run_dir, ec);
    std::ofstream out(result.run_dir / "run.json", std::ios::trunc);
    if (out) out << run_doc.dump(2) << '\n';
    return result;
}

}  // namespace lad
