// Command-line batch runner for the image-implication pipeline: executes the
// perception/search/reasoning stages over a benchmark manifest, scores
// finished runs, and checks judge scores against human ratings.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "lad/backend_factory.hpp"
#include "lad/lad.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 1;
constexpr int kExitConfigError = 2;

std::string resolve_config_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    const char* env = std::getenv("LAD_CONFIG");
    if (env && *env) return env;
    throw lad::ConfigError("no config: pass --config or set LAD_CONFIG");
}

lad::RunConfig load_config(const std::string& flag_value, const fs::path& out_root) {
    std::string path = resolve_config_path(flag_value);
    lad::RunConfig cfg = lad::load_run_config(path);
    if (!cfg.cache_dir.empty() && cfg.cache_dir.is_relative()) cfg.cache_dir = out_root / cfg.cache_dir;
    return cfg;
}

int cmd_run(const std::string& config_path, const std::string& manifest_path, const std::string& stage,
            const std::string& task, const std::string& lang, bool force, std::optional<int> parallel,
            bool dry_run, const std::string& out_dir, std::string run_id) {
    fs::path out_root = out_dir;
    lad::RunConfig cfg = load_config(config_path, out_root);
    auto entries = lad::load_benchmark(manifest_path);

    lad::RunFlags flags;
    flags.include_search = stage != "1+3";
    if (task == "mcq") flags.task_filter = lad::TaskKind::mcq;
    if (task == "osq") flags.task_filter = lad::TaskKind::osq;
    flags.language_filter = lang;
    flags.force = force;
    flags.parallel = parallel;
    flags.dry_run = dry_run;

    if (dry_run) {
        // Config and manifest already validated above; no gateway is built,
        // so no backend or network activity can happen.
        std::cout << "dry-run ok: " << entries.size() << " entries, config " << cfg.config_hash.substr(0, 12)
                  << std::endl;
        return kExitOk;
    }

    lad::Gateway gateway(cfg, lad::live_backend_factory());
    auto provider = lad::make_search_provider(cfg.provider);
    auto fetcher = lad::make_page_fetcher(cfg.fetcher);

    if (run_id.empty()) run_id = lad::make_run_id(cfg.config_hash);
    auto progress = [](const std::string& line) { std::cout << line << std::endl; };
    auto started = std::chrono::steady_clock::now();
    lad::BatchResult result = lad::run_batch(cfg, entries, out_root, run_id, flags, gateway, provider.get(),
                                             fetcher.get(), progress);
    auto wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    std::cout << "run " << result.run_id << ": " << result.completed << " completed, " << result.skipped
              << " skipped, " << result.failed << " failed\n"
              << "tokens prompt=" << result.total_usage.prompt_tokens
              << " completion=" << result.total_usage.completion_tokens
              << " backend_calls=" << result.backend_invocations << " cache_hits=" << result.cache_hits
              << " wall_ms=" << wall_ms.count() << std::endl;
    std::cout << result.run_id << std::endl;
    return result.failed == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_eval(const std::string& config_path, const std::string& run_id, const std::string& manifest_path,
             int judge_runs, const std::string& out_dir, const std::string& task) {
    fs::path out_root = out_dir;
    lad::RunConfig cfg = load_config(config_path, out_root);
    if (judge_runs < 3)
        throw lad::ConfigError("--judge-runs must be >= 3: OSQ scores are averaged over at least three judge runs");
    auto entries = lad::load_benchmark(manifest_path);

    fs::path trace_dir = out_root / run_id / "traces";
    if (!fs::exists(trace_dir)) throw lad::MissingTracesError("no traces at " + trace_dir.string());
    lad::TraceStore store(trace_dir);

    lad::EvalOptions options;
    options.judge_runs = judge_runs;
    options.need_mcq = task != "osq";
    options.need_osq = task != "mcq";

    std::optional<lad::Gateway> gateway;
    if (options.need_osq) gateway.emplace(cfg, lad::live_backend_factory());

    nlohmann::json report =
        lad::evaluate_run(cfg, entries, store, gateway ? &*gateway : nullptr, options);
    report["run_id"] = run_id;

    fs::path report_dir = out_root / run_id / "reports";
    fs::create_directories(report_dir);
    fs::path report_path = report_dir / "report.json";
    std::ofstream out(report_path, std::ios::trunc);
    out << report.dump(2) << '\n';

    std::cout << lad::render_report_table(report);
    std::cout << report_path.string() << std::endl;
    return kExitOk;
}

int cmd_consistency(const std::string& report_path, const std::string& ratings_path,
                    const std::string& out_path) {
    std::ifstream in(report_path);
    if (!in) throw lad::StorageError("cannot open report " + report_path);
    nlohmann::json report = nlohmann::json::parse(in, nullptr, false);
    if (report.is_discarded()) throw lad::StorageError("report is not valid JSON: " + report_path);

    auto ratings = lad::load_ratings(ratings_path);
    auto model_scores = lad::model_scores_from_report(report);
    lad::ConsistencyReport consistency = lad::human_model_consistency(ratings, model_scores);

    std::cout << lad::render_consistency_table(consistency);
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        out << lad::to_json(consistency).dump(2) << '\n';
        std::cout << out_path << std::endl;
    }
    return kExitOk;
}

int cmd_report(const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) throw lad::StorageError("cannot open report " + report_path);
    nlohmann::json report = nlohmann::json::parse(in, nullptr, false);
    if (report.is_discarded()) throw lad::StorageError("report is not valid JSON: " + report_path);
    std::cout << lad::render_report_table(report);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image implication pipeline: perception, adaptive search, explicit reasoning"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";

    // run
    auto* run = app.add_subcommand("run", "Run the pipeline over a benchmark manifest");
    std::string manifest_path, stage = "1+2+3", task = "both", lang = "all", run_id;
    bool force = false, dry_run = false;
    std::optional<int> parallel;
    run->add_option("--config", config_path, "Run config (or set LAD_CONFIG)");
    run->add_option("--manifest", manifest_path, "Benchmark manifest")->required();
    run->add_option("--stage", stage, "Stages to run: 1+2+3 or 1+3")
        ->check(CLI::IsMember({"1+2+3", "1+3"}));
    run->add_option("--task", task, "Task filter: mcq, osq or both")->check(CLI::IsMember({"mcq", "osq", "both"}));
    run->add_option("--lang", lang, "Language filter: en, zh or all")->check(CLI::IsMember({"en", "zh", "all"}));
    run->add_flag("--force", force, "Recompute entries that already have complete traces");
    run->add_option("--parallel", parallel, "Concurrent entries");
    run->add_flag("--dry-run", dry_run, "Validate config and manifest without any model calls");
    run->add_option("--out", out_dir, "Output root directory");
    run->add_option("--run-id", run_id, "Resume or name a run explicitly");

    // eval
    auto* eval = app.add_subcommand("eval", "Score a finished run's traces");
    std::string eval_run_id, eval_manifest, eval_task = "both";
    int judge_runs = 3;
    eval->add_option("--config", config_path, "Run config (or set LAD_CONFIG)");
    eval->add_option("--run-id", eval_run_id, "Run to score")->required();
    eval->add_option("--manifest", eval_manifest, "Benchmark manifest (gold labels and ground truth)")->required();
    eval->add_option("--judge-runs", judge_runs, "Judge runs per OSQ item (>= 3)");
    eval->add_option("--task", eval_task, "Score mcq, osq or both")->check(CLI::IsMember({"mcq", "osq", "both"}));
    eval->add_option("--out", out_dir, "Output root directory");

    // consistency
    auto* consistency = app.add_subcommand("consistency", "Compare judge scores against human ratings");
    std::string report_path, ratings_path, consistency_out;
    consistency->add_option("--report", report_path, "report.json produced by eval")->required();
    consistency->add_option("--ratings", ratings_path, "Delimited ratings table: item_id,rater_id,score")
        ->required();
    consistency->add_option("--out", consistency_out, "Where to write consistency.json");

    // report
    auto* report = app.add_subcommand("report", "Re-render the aggregate table of an existing report");
    std::string rerender_path;
    report->add_option("--report", rerender_path, "report.json produced by eval")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, manifest_path, stage, task, lang, force, parallel, dry_run, out_dir,
                           run_id);
        if (eval->parsed()) return cmd_eval(config_path, eval_run_id, eval_manifest, judge_runs, out_dir, eval_task);
        if (consistency->parsed()) return cmd_consistency(report_path, ratings_path, consistency_out);
        if (report->parsed()) return cmd_report(rerender_path);
    } catch (const lad::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const lad::ManifestError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const lad::MissingImageError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const lad::MissingTracesError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const lad::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitPartialFailure;
    }
    return kExitConfigError;
}
