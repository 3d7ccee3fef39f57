#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lad/detail/parallel.hpp"
#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/evaluation.hpp"
#include "lad/manifest.hpp"
#include "lad/pipeline.hpp"
#include "lad/trace.hpp"

namespace lad {

inline constexpr std::string_view kReportSchema = "lad-report/1";

struct EvalOptions {
    int judge_runs = 3;
    bool need_mcq = true;
    bool need_osq = true;
    int parallel_items = 4;  // concurrent items; the runs within one item stay sequential
};

// Scores a finished run from its traces: MCQ accuracy against manifest gold
// labels, OSQ means via the judge backend (items judged concurrently, runs
// within an item sequential). Per-language aggregates carry rows only for
// languages that actually have items.
inline nlohmann::json evaluate_run(const RunConfig& cfg, const std::vector<BenchmarkEntry>& entries,
                                   const TraceStore& store, Gateway* gateway, const EvalOptions& options = {}) {
    if (options.judge_runs < 3)
        throw ConfigError("judge runs must be >= 3 (scores are averaged over at least three runs), got " +
                          std::to_string(options.judge_runs));

    std::map<std::string, const BenchmarkEntry*> by_id;
    for (const auto& entry : entries) by_id[entry.id] = &entry;

    struct Scorable {
        const BenchmarkEntry* entry;
        nlohmann::json trace;
    };
    std::vector<Scorable> scorables;
    for (const auto& id : store.entry_ids()) {
        auto entry_it = by_id.find(id);
        if (entry_it == by_id.end()) continue;
        auto trace = store.load(id);
        if (!trace || trace->value("status", "") != "complete") continue;
        scorables.push_back({entry_it->second, std::move(*trace)});
    }
    if (scorables.empty()) throw MissingTracesError("no complete traces matched the manifest");

    std::vector<nlohmann::json> items(scorables.size());
    detail::parallel_for(scorables.size(), static_cast<std::size_t>(std::max(1, options.parallel_items)),
                         [&](std::size_t i) {
        const BenchmarkEntry& entry = *scorables[i].entry;
        const nlohmann::json& trace = scorables[i].trace;
        const char* lang = prompts::language_name(entry.language);

        nlohmann::json item{{"id", entry.id}, {"language", lang}};
        const auto& stages = trace.at("stages");
        const nlohmann::json reasoning =
            stages.contains("reasoning") ? stages["reasoning"] : nlohmann::json::object();

        if (options.need_mcq && entry.wants_mcq() && entry.gold_label) {
            std::optional<char> prediction;
            if (reasoning.contains("mcq") && reasoning["mcq"].contains("mcq_label")) {
                std::string label = reasoning["mcq"]["mcq_label"].get<std::string>();
                if (label.size() == 1) prediction = label[0];
            }
            bool correct = prediction && *prediction == *entry.gold_label;
            item["mcq"] = {{"gold", std::string(1, *entry.gold_label)},
                           {"prediction", prediction ? std::string(1, *prediction) : std::string()},
                           {"answered", prediction.has_value()},
                           {"correct", correct}};
        }

        if (options.need_osq && entry.wants_osq() && reasoning.contains("osq")) {
            if (!gateway) throw JudgeError("OSQ items present but no judge backend available");
            std::string candidate = reasoning["osq"].value("answer_text", std::string());
            ImageInput image = load_image(entry);
            JudgeGroundTruth gt{entry.gt_description.value_or(""), entry.gt_implication.value_or("")};
            JudgeConfig judge_cfg = cfg.judge;
            judge_cfg.runs = options.judge_runs;
            CallLog judge_log;
            OsqScore score =
                judge_osq(candidate, image, gt, gateway->client("evaluator", "judge", &judge_log), judge_cfg);
            item["osq"] = {{"runs", score.runs}, {"mean", score.mean}};
        }

        items[i] = std::move(item);
    });

    nlohmann::json per_item = nlohmann::json::array();
    std::map<std::string, LanguageAccuracy> accuracy;
    std::map<std::string, std::vector<double>> osq_means;
    for (auto& item : items) {
        std::string lang = item["language"].get<std::string>();
        if (item.contains("mcq")) {
            auto& bucket = accuracy[lang];
            ++bucket.total;
            if (item["mcq"]["correct"].get<bool>()) ++bucket.correct;
        }
        if (item.contains("osq")) osq_means[lang].push_back(item["osq"]["mean"].get<double>());
        per_item.push_back(std::move(item));
    }

    nlohmann::json aggregates = nlohmann::json::object();
    for (const auto& [lang, bucket] : accuracy) {
        aggregates[lang]["mcq_accuracy"] = bucket.accuracy();
        aggregates[lang]["mcq_accuracy_4dp"] = bucket.formatted();
        aggregates[lang]["mcq_correct"] = bucket.correct;
        aggregates[lang]["mcq_total"] = bucket.total;
    }
    for (const auto& [lang, means] : osq_means) {
        double sum = 0.0;
        for (double m : means) sum += m;
        aggregates[lang]["osq_mean"] = sum / static_cast<double>(means.size());
        aggregates[lang]["osq_total"] = means.size();
    }

    return nlohmann::json{{"schema", std::string(kReportSchema)},
                          {"config_hash", cfg.config_hash},
                          {"judge_runs", options.judge_runs},
                          {"per_item", per_item},
                          {"aggregates", aggregates}};
}

// Console table in the per-language layout. Languages without items for a
// metric simply have no row.
inline std::string render_report_table(const nlohmann::json& report) {
    std::ostringstream out;
    out << "lang  metric        value     n\n";
    out << "----  ------------  --------  ----\n";
    const auto& aggregates = report.at("aggregates");
    for (const auto& [lang, metrics] : aggregates.items()) {
        if (metrics.contains("mcq_accuracy")) {
            out << lang << "    mcq_accuracy  " << metrics["mcq_accuracy_4dp"].get<std::string>() << "    "
                << metrics["mcq_total"].get<int>() << "\n";
        }
        if (metrics.contains("osq_mean")) {
            out << lang << "    osq_mean      " << detail::format_fixed(metrics["osq_mean"].get<double>(), 2)
                << "      " << metrics["osq_total"].get<int>() << "\n";
        }
    }
    return out.str();
}

// ---- human ratings ingestion -------------------------------------------------

// Delimited table: header "item_id,rater_id,score" (comma or tab), one
// rating per line.
inline std::vector<std::pair<std::string, std::vector<double>>> load_ratings(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StorageError("cannot open ratings file " + path.string());
    std::string line;
    int line_no = 0;
    std::vector<std::pair<std::string, std::vector<double>>> out;
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        char delim = trimmed.find('\t') != std::string::npos ? '\t' : ',';
        auto fields = detail::split(trimmed, delim);
        if (line_no == 1 && !fields.empty() && detail::to_lower(detail::trim(fields[0])) == "item_id") continue;
        if (fields.size() < 3)
            throw StorageError(path.filename().string() + ":" + std::to_string(line_no) +
                               ": expected item_id,rater_id,score");
        std::string id = detail::trim(fields[0]);
        auto score = detail::parse_first_number(fields[2]);
        if (!score || *score < 1.0 || *score > 5.0)
            throw StorageError(path.filename().string() + ":" + std::to_string(line_no) +
                               ": score must be in [1,5]");
        auto it = index.find(id);
        if (it == index.end()) {
            index[id] = out.size();
            out.push_back({id, {*score}});
        } else {
            out[it->second].second.push_back(*score);
        }
    }
    if (out.empty()) throw StorageError("ratings file has no ratings: " + path.string());
    return out;
}

// Pulls per-item model OSQ means out of a report document.
inline std::map<std::string, double> model_scores_from_report(const nlohmann::json& report) {
    std::map<std::string, double> out;
    for (const auto& item : report.at("per_item")) {
        if (item.contains("osq")) out[item.at("id").get<std::string>()] = item["osq"]["mean"].get<double>();
    }
    return out;
}

inline nlohmann::json to_json(const ConsistencyReport& report) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : report.items) {
        items.push_back({{"id", item.id},
                         {"human_mean", item.human_mean},
                         {"model_score", item.model_score},
                         {"consistency", item.consistency}});
    }
    return {{"schema", "lad-consistency/1"},
            {"items", items},
            {"average", report.average},
            {"skipped", report.skipped}};
}

inline std::string render_consistency_table(const ConsistencyReport& report) {
    std::ostringstream out;
    out << "item          human  model  consistency\n";
    for (const auto& item : report.items) {
        out << item.id << "  " << detail::format_fixed(item.human_mean, 2) << "   "
            << detail::format_fixed(item.model_score, 2) << "   " << detail::format_fixed(item.consistency, 4)
            << "\n";
    }
    out << "average consistency: " << detail::format_fixed(report.average, 4) << " ("
        << detail::format_fixed(report.average * 100.0, 1) << "%)\n";
    for (const auto& id : report.skipped) out << "warning: skipped '" << id << "' (fewer than 3 raters)\n";
    return out.str();
}

}  // namespace lad
