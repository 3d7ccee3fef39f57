#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "lad/lad.hpp"
#include "support/fixtures.hpp"

using namespace lad;
using lad::testing::TempDir;
using lad::testing::scripted_config_json;
using lad::testing::write_manifest;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// All *.trace.json files in a run, keyed by filename.
std::map<std::string, std::string> trace_set(const std::filesystem::path& run_dir) {
    std::map<std::string, std::string> out;
    for (const auto& item : std::filesystem::directory_iterator(run_dir / "traces")) {
        std::string name = item.path().filename().string();
        if (name.size() > 11 && name.substr(name.size() - 11) == ".trace.json") out[name] = slurp(item.path());
    }
    return out;
}

struct Harness {
    RunConfig cfg;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<SearchProvider> provider;
    std::unique_ptr<PageFetcher> fetcher;

    explicit Harness(nlohmann::json config_doc) : cfg(parse_run_config(config_doc)) {
        gateway = std::make_unique<Gateway>(cfg);
        provider = make_stub_provider(cfg.provider.options);
        fetcher = make_stub_fetcher(cfg.fetcher.options);
    }

    BatchResult run(const std::vector<BenchmarkEntry>& entries, const std::filesystem::path& out_root,
                    const std::string& run_id, RunFlags flags = {}) {
        return run_batch(cfg, entries, out_root, run_id, flags, *gateway, provider.get(), fetcher.get());
    }

    ScriptedBackend& scripted() {
        return dynamic_cast<ScriptedBackend&>(gateway->backend("scripted-main"));
    }
};

}  // namespace

TEST(Pipeline, FullScriptedRunCompletesAllEntries) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 4);
    auto entries = load_benchmark(manifest);
    Harness harness(scripted_config_json());
    BatchResult result = harness.run(entries, dir.path / "out", "run-a");
    EXPECT_EQ(result.completed, 4);
    EXPECT_EQ(result.failed, 0);
    EXPECT_EQ(result.skipped, 0);
    EXPECT_GT(result.total_usage.total(), 0u);

    TraceStore store(dir.path / "out" / "run-a" / "traces");
    auto ids = store.entry_ids();
    ASSERT_EQ(ids.size(), 4u);
    for (const auto& id : ids) {
        auto trace = store.load(id);
        ASSERT_TRUE(trace.has_value());
        EXPECT_EQ((*trace)["status"], "complete");
        EXPECT_TRUE((*trace)["stages"].contains("perception"));
        EXPECT_TRUE((*trace)["stages"].contains("search"));
        EXPECT_TRUE((*trace)["stages"].contains("reasoning"));
        EXPECT_EQ((*trace)["stages"]["reasoning"]["mcq"]["mcq_label"], "C");
        EXPECT_EQ((*trace)["stages"]["search"]["routing"].size(), 5u);
        // Exactly one web route per entry under the fixture script.
        int web = 0;
        for (const auto& decision : (*trace)["stages"]["search"]["routing"])
            if (decision["route"] == "web") ++web;
        EXPECT_EQ(web, 1);
        EXPECT_TRUE(std::filesystem::exists(store.timing_path(id)));
    }
}

TEST(Pipeline, ByteIdenticalTracesAcrossRunsUnderParallelism) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 6);
    auto entries = load_benchmark(manifest);

    RunFlags flags;
    flags.parallel = 3;

    Harness first(scripted_config_json());
    first.run(entries, dir.path / "out1", "run", flags);
    Harness second(scripted_config_json());
    second.run(entries, dir.path / "out2", "run", flags);

    auto traces1 = trace_set(dir.path / "out1" / "run");
    auto traces2 = trace_set(dir.path / "out2" / "run");
    ASSERT_EQ(traces1.size(), 6u);
    ASSERT_EQ(traces1.size(), traces2.size());
    for (const auto& [name, content] : traces1) {
        ASSERT_TRUE(traces2.count(name)) << name;
        EXPECT_EQ(content, traces2[name]) << "trace differs: " << name;
    }
}

TEST(Pipeline, AblationFlagProducesNoSearchRecordsAndIdenticalReasoningPrompts) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 2);
    auto entries = load_benchmark(manifest);

    // Run A: search enabled in config, disabled by the --stage flag.
    Harness by_flag(scripted_config_json(/*search_enabled=*/true));
    RunFlags flags;
    flags.include_search = false;
    by_flag.run(entries, dir.path / "out-flag", "run", flags);

    // Run B: search disabled at the module level in config.
    Harness by_config(scripted_config_json(/*search_enabled=*/false));
    by_config.run(entries, dir.path / "out-config", "run");

    auto flag_traces = trace_set(dir.path / "out-flag" / "run");
    auto config_traces = trace_set(dir.path / "out-config" / "run");
    ASSERT_EQ(flag_traces.size(), 2u);

    for (const auto& [name, content] : flag_traces) {
        nlohmann::json flag_trace = nlohmann::json::parse(content);
        nlohmann::json config_trace = nlohmann::json::parse(config_traces.at(name));
        EXPECT_FALSE(flag_trace["stages"].contains("search")) << "stage II record in 1+3 trace";
        EXPECT_FALSE(config_trace["stages"].contains("search"));
        // Identical reasoning prompts: same call fingerprints in the
        // reasoning scopes (the fingerprint covers the full request).
        auto reasoning_fps = [](const nlohmann::json& trace) {
            std::vector<std::string> out;
            for (const auto& call : trace["calls"])
                if (call["scope"].get<std::string>().rfind("reasoning", 0) == 0)
                    out.push_back(call["fingerprint"].get<std::string>());
            return out;
        };
        EXPECT_EQ(reasoning_fps(flag_trace), reasoning_fps(config_trace));
        EXPECT_FALSE(reasoning_fps(flag_trace).empty());
    }
}

TEST(Pipeline, AllSearchFailuresDegradeToStageOneThreePrompts) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 1);
    auto entries = load_benchmark(manifest);

    // Poison every search answer path: judge routes all questions to the
    // model, and model search returns empty output (step failure).
    nlohmann::json doc = scripted_config_json();
    nlohmann::json& rules = doc["backends"][0]["script"]["rules"];
    nlohmann::json poisoned = nlohmann::json::array();
    for (const auto& rule : rules) {
        std::string contains = rule["contains"].get<std::string>();
        if (contains == "Answer the following question from your existing knowledge") {
            poisoned.push_back({{"contains", contains}, {"outcome", "empty"}, {"text", ""}});
        } else if (contains == "OVERTIME FOREVER meme") {
            // skip: let the generic low-confidence judge rule take over
        } else {
            poisoned.push_back(rule);
        }
    }
    doc["backends"][0]["script"]["rules"] = poisoned;
    Harness degraded(doc);
    BatchResult result = degraded.run(entries, dir.path / "out-degraded", "run");
    EXPECT_EQ(result.completed, 1);

    Harness ablation(scripted_config_json(/*search_enabled=*/false));
    ablation.run(entries, dir.path / "out-ablation", "run");

    TraceStore degraded_store(dir.path / "out-degraded" / "run" / "traces");
    TraceStore ablation_store(dir.path / "out-ablation" / "run" / "traces");
    auto degraded_trace = degraded_store.load(entries[0].id);
    auto ablation_trace = ablation_store.load(entries[0].id);
    ASSERT_TRUE(degraded_trace && ablation_trace);

    EXPECT_EQ((*degraded_trace)["stages"]["search"]["summary"]["text"], "");
    for (const auto& outcome : (*degraded_trace)["stages"]["search"]["outcomes"])
        EXPECT_TRUE(outcome["failed"].get<bool>());

    // The reasoning prompt built from the empty sentinel must equal the
    // stage I+III prompt byte for byte (same fingerprint).
    auto fp_of = [](const nlohmann::json& trace, const std::string& scope) {
        for (const auto& call : trace["calls"])
            if (call["scope"] == scope) return call["fingerprint"].get<std::string>();
        return std::string();
    };
    EXPECT_EQ(fp_of(*degraded_trace, "reasoning.mcq"), fp_of(*ablation_trace, "reasoning.mcq"));
    EXPECT_EQ(fp_of(*degraded_trace, "reasoning.osq"), fp_of(*ablation_trace, "reasoning.osq"));
    EXPECT_FALSE(fp_of(*degraded_trace, "reasoning.mcq").empty());
}

TEST(Pipeline, AbortMidBatchThenResumeConvergesToUninterruptedTraces) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 5);
    auto entries = load_benchmark(manifest);

    // Reference: uninterrupted run.
    Harness reference(scripted_config_json());
    reference.run(entries, dir.path / "out-ref", "run");
    auto reference_traces = trace_set(dir.path / "out-ref" / "run");
    ASSERT_EQ(reference_traces.size(), 5u);

    // Interrupted run: the backend dies mid-batch.
    Harness crashing(scripted_config_json());
    crashing.scripted().abort_after(30);
    EXPECT_THROW(crashing.run(entries, dir.path / "out-resume", "run"), ScriptedBackend::AbortInjected);
    auto partial = trace_set(dir.path / "out-resume" / "run");
    EXPECT_LT(partial.size(), 5u) << "crash should leave an unfinished trace set";

    // Restart with the same run id converges to the reference set.
    Harness resume(scripted_config_json());
    BatchResult resumed = resume.run(entries, dir.path / "out-resume", "run");
    EXPECT_GT(resumed.skipped, 0) << "completed entries must be skipped on resume";
    EXPECT_EQ(resumed.completed + resumed.skipped, 5);

    auto final_traces = trace_set(dir.path / "out-resume" / "run");
    ASSERT_EQ(final_traces.size(), reference_traces.size());
    for (const auto& [name, content] : reference_traces) {
        ASSERT_TRUE(final_traces.count(name)) << name;
        EXPECT_EQ(content, final_traces[name]) << "resumed trace differs: " << name;
    }
}

TEST(Pipeline, WarmCacheRerunIssuesZeroBackendCalls) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 3);
    auto entries = load_benchmark(manifest);
    std::string cache_dir = (dir.path / "cache").string();

    Harness cold(scripted_config_json(true, cache_dir));
    cold.run(entries, dir.path / "out-cold", "run");
    EXPECT_GT(cold.gateway->backend_invocations(), 0u);

    // Same cache, fresh gateway, --force so entries recompute through the cache.
    Harness warm(scripted_config_json(true, cache_dir));
    RunFlags flags;
    flags.force = true;
    warm.run(entries, dir.path / "out-warm", "run");
    EXPECT_EQ(warm.gateway->backend_invocations(), 0u);
    EXPECT_EQ(warm.scripted().call_count(), 0u);
    EXPECT_GT(warm.gateway->cache_hits(), 0u);

    // And the recomputed traces are identical to the cold ones.
    auto cold_traces = trace_set(dir.path / "out-cold" / "run");
    auto warm_traces = trace_set(dir.path / "out-warm" / "run");
    for (const auto& [name, content] : cold_traces) EXPECT_EQ(content, warm_traces.at(name));

    // Without --force the completed run is skipped outright: zero calls of any kind.
    Harness skip(scripted_config_json(true, cache_dir));
    BatchResult skipped = skip.run(entries, dir.path / "out-warm", "run");
    EXPECT_EQ(skipped.skipped, 3);
    EXPECT_EQ(skip.gateway->total_calls(), 0u);
}

TEST(Pipeline, TokenAccountingConsistentFromCallsToRunTotals) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 3);
    auto entries = load_benchmark(manifest);
    Harness harness(scripted_config_json());
    BatchResult result = harness.run(entries, dir.path / "out", "run");

    TraceStore store(dir.path / "out" / "run" / "traces");
    Usage from_calls;
    Usage from_traces;
    for (const auto& id : store.entry_ids()) {
        auto trace = store.load(id);
        ASSERT_TRUE(trace.has_value());
        Usage per_trace;
        for (const auto& call : (*trace)["calls"]) {
            per_trace.prompt_tokens += call["prompt_tokens"].get<std::uint64_t>();
            per_trace.completion_tokens += call["completion_tokens"].get<std::uint64_t>();
        }
        EXPECT_EQ(per_trace.prompt_tokens, (*trace)["usage"]["prompt_tokens"].get<std::uint64_t>());
        EXPECT_EQ(per_trace.completion_tokens, (*trace)["usage"]["completion_tokens"].get<std::uint64_t>());
        EXPECT_EQ((*trace)["calls"].size(), (*trace)["usage"]["calls"].get<std::size_t>());
        from_calls += per_trace;
        from_traces.prompt_tokens += (*trace)["usage"]["prompt_tokens"].get<std::uint64_t>();
        from_traces.completion_tokens += (*trace)["usage"]["completion_tokens"].get<std::uint64_t>();
    }
    EXPECT_EQ(result.total_usage.prompt_tokens, from_traces.prompt_tokens);
    EXPECT_EQ(result.total_usage.completion_tokens, from_traces.completion_tokens);
    EXPECT_EQ(from_calls.prompt_tokens, from_traces.prompt_tokens);
}

TEST(Pipeline, ExtractionFailureIsUnansweredNotFatal) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 1);
    auto entries = load_benchmark(manifest);
    nlohmann::json doc = scripted_config_json();
    for (auto& rule : doc["backends"][0]["script"]["rules"]) {
        if (rule["contains"] == "give your final choice") rule["text"] = "<think>hmm</think>I cannot commit.";
    }
    // The bare-letter reprompt also fails to produce a letter.
    nlohmann::json reprompt_rule{{"contains", "only the single option letter"}, {"text", "still no"}};
    nlohmann::json rules = nlohmann::json::array();
    rules.push_back(reprompt_rule);
    for (const auto& rule : doc["backends"][0]["script"]["rules"]) rules.push_back(rule);
    doc["backends"][0]["script"]["rules"] = rules;

    Harness harness(doc);
    BatchResult result = harness.run(entries, dir.path / "out", "run");
    EXPECT_EQ(result.completed, 1);
    EXPECT_EQ(result.failed, 0);
    TraceStore store(dir.path / "out" / "run" / "traces");
    auto trace = store.load(entries[0].id);
    ASSERT_TRUE(trace.has_value());
    EXPECT_TRUE((*trace)["stages"]["reasoning"]["mcq"].value("unanswered", false));
    EXPECT_TRUE((*trace)["stages"]["reasoning"].contains("osq"));
}

TEST(Pipeline, LanguageAndTaskFilters) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 4);
    auto entries = load_benchmark(manifest);
    Harness harness(scripted_config_json());
    RunFlags flags;
    flags.language_filter = "en";
    flags.task_filter = TaskKind::mcq;
    BatchResult result = harness.run(entries, dir.path / "out", "run", flags);
    EXPECT_EQ(result.completed, 2);

    TraceStore store(dir.path / "out" / "run" / "traces");
    auto ids = store.entry_ids();
    ASSERT_EQ(ids.size(), 2u);
    for (const auto& id : ids) {
        EXPECT_EQ(id.find("en-"), 0u);
        auto trace = store.load(id);
        EXPECT_TRUE((*trace)["stages"]["reasoning"].contains("mcq"));
        EXPECT_FALSE((*trace)["stages"]["reasoning"].contains("osq"));
    }
}

TEST(Pipeline, DryRunMakesZeroGatewayCalls) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 3);
    auto entries = load_benchmark(manifest);
    Harness harness(scripted_config_json());
    RunFlags flags;
    flags.dry_run = true;
    BatchResult result = harness.run(entries, dir.path / "out", "run", flags);
    EXPECT_EQ(result.completed, 0);
    EXPECT_EQ(harness.gateway->total_calls(), 0u);
    EXPECT_EQ(harness.scripted().call_count(), 0u);
    EXPECT_FALSE(std::filesystem::exists(dir.path / "out" / "run"));
}

TEST(Pipeline, HardEntryFailureMarksFailedAndOthersProceed) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 2);
    auto entries = load_benchmark(manifest);
    nlohmann::json doc = scripted_config_json();
    // Describe succeeds only once (max_uses=1): entry two fails Stage I.
    for (auto& rule : doc["backends"][0]["script"]["rules"]) {
        if (rule["contains"] == "write a detailed description") rule["max_uses"] = 1;
    }
    doc["retry_attempts"] = 1;
    Harness harness(doc);
    RunFlags flags;
    flags.parallel = 1;
    BatchResult result = harness.run(entries, dir.path / "out", "run", flags);
    EXPECT_EQ(result.completed + result.failed, 2);
    EXPECT_EQ(result.failed, 1);

    TraceStore store(dir.path / "out" / "run" / "traces");
    int failed_traces = 0;
    for (const auto& id : store.entry_ids()) {
        auto trace = store.load(id);
        if ((*trace)["status"] == "failed") {
            ++failed_traces;
            EXPECT_TRUE(trace->contains("error"));
        }
    }
    EXPECT_EQ(failed_traces, 1);
}

// Evaluation over a finished scripted run, scripted judge included.
TEST(Pipeline, EvaluateRunProducesReportWithLanguageRows) {
    TempDir dir("pipe");
    auto manifest = write_manifest(dir.path / "bench", 4);
    auto entries = load_benchmark(manifest);
    nlohmann::json doc = scripted_config_json();
    nlohmann::json judge_rule{{"contains", "Grade the candidate interpretation"}, {"text", "Overall Score: 4"}};
    nlohmann::json rules = nlohmann::json::array();
    rules.push_back(judge_rule);
    for (const auto& rule : doc["backends"][0]["script"]["rules"]) rules.push_back(rule);
    doc["backends"][0]["script"]["rules"] = rules;

    Harness harness(doc);
    harness.run(entries, dir.path / "out", "run");

    TraceStore store(dir.path / "out" / "run" / "traces");
    nlohmann::json report = evaluate_run(harness.cfg, entries, store, harness.gateway.get());
    ASSERT_TRUE(report["aggregates"].contains("en"));
    ASSERT_TRUE(report["aggregates"].contains("zh"));
    EXPECT_DOUBLE_EQ(report["aggregates"]["en"]["mcq_accuracy"].get<double>(), 1.0);
    EXPECT_EQ(report["aggregates"]["en"]["mcq_accuracy_4dp"], "1.0000");
    EXPECT_DOUBLE_EQ(report["aggregates"]["en"]["osq_mean"].get<double>(), 4.0);
    EXPECT_EQ(report["per_item"].size(), 4u);

    std::string table = render_report_table(report);
    EXPECT_NE(table.find("en"), std::string::npos);
    EXPECT_NE(table.find("mcq_accuracy"), std::string::npos);

    // Absent partition: en-only manifest yields no zh row.
    std::vector<BenchmarkEntry> en_only;
    for (const auto& entry : entries)
        if (entry.language == Language::en) en_only.push_back(entry);
    TempDir dir2("pipe2");
    Harness harness2(doc);
    harness2.run(en_only, dir2.path / "out", "run");
    TraceStore store2(dir2.path / "out" / "run" / "traces");
    nlohmann::json en_report = evaluate_run(harness2.cfg, en_only, store2, harness2.gateway.get());
    EXPECT_TRUE(en_report["aggregates"].contains("en"));
    EXPECT_FALSE(en_report["aggregates"].contains("zh"));
}
