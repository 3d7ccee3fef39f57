#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/perception.hpp"
#include "lad/reasoning.hpp"
#include "lad/search_orchestrator.hpp"

namespace lad {

inline constexpr std::string_view kTraceSchema = "lad-trace/1";

// One gateway call. `scope` names the pipeline stage that issued it. The
// trace stores calls sorted by content, not arrival, because stage fan-out
// interleaves arrivals nondeterministically; two calls with identical sort
// keys are themselves identical records, so the sorted list is stable.
struct CallRecord {
    std::string scope;
    std::string role;
    std::string backend;
    std::string fingerprint;
    Usage usage;
    bool cached = false;  // volatile: reported via the timing sidecar only
};

class CallLog {
public:
    void add(CallRecord record) {
        std::lock_guard<std::mutex> lock(mu_);
        records_.push_back(std::move(record));
    }

    std::vector<CallRecord> sorted() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::vector<CallRecord> out = records_;
        std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
            auto key = [](const CallRecord& r) {
                return std::tie(r.scope, r.role, r.fingerprint, r.usage.prompt_tokens, r.usage.completion_tokens);
            };
            return key(a) < key(b);
        });
        return out;
    }

    std::size_t cached_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::size_t n = 0;
        for (const auto& r : records_)
            if (r.cached) ++n;
        return n;
    }

    Usage total_usage() const {
        std::lock_guard<std::mutex> lock(mu_);
        Usage total;
        for (const auto& r : records_) total += r.usage;
        return total;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return records_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
};

// ---- stage output -> JSON --------------------------------------------------

inline nlohmann::json to_json(const PerceptionResult& perception) {
    return {{"description", perception.description.text},
            {"keywords", perception.keywords.keywords}};
}

inline nlohmann::json to_json(const QAPair& pair) {
    return {{"question", pair.question.text},
            {"level", pair.question.level},
            {"answer", pair.answer},
            {"route", to_string(pair.route)},
            {"citations", pair.citations}};
}

inline nlohmann::json to_json(const WebSearchRecord& record) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : record.dag.nodes) nodes.push_back({{"id", node.id}, {"text", node.text}});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [from, to] : record.dag.edges) edges.push_back({from, to});
    nlohmann::json snippets = nlohmann::json::array();
    for (const auto& s : record.snippets)
        snippets.push_back({{"title", s.title}, {"summary", s.summary}, {"url", s.url}, {"node", s.sub_question_id}});
    nlohmann::json pages = nlohmann::json::array();
    for (const auto& p : record.pages)
        pages.push_back({{"url", p.url}, {"chars", p.text.size()}, {"truncated", p.truncated}});
    return {{"dag", {{"nodes", nodes}, {"edges", edges}, {"fell_back", record.dag_fell_back}}},
            {"snippets", snippets},
            {"selected_urls", record.selected_urls},
            {"pages", pages},
            {"events", record.events}};
}

inline nlohmann::json to_json(const SearchStageTrace& stage) {
    nlohmann::json questions = nlohmann::json::array();
    for (const auto& q : stage.questions) questions.push_back({{"text", q.text}, {"level", q.level}});
    nlohmann::json routing = nlohmann::json::array();
    for (const auto& d : stage.decisions)
        routing.push_back(
            {{"confidence", d.confidence}, {"route", to_string(d.route)}, {"rationale", d.rationale}});
    nlohmann::json outcomes = nlohmann::json::array();
    for (const auto& o : stage.outcomes) {
        nlohmann::json item{{"failed", o.failed}};
        if (o.failed)
            item["error"] = o.error;
        else
            item["pair"] = to_json(o.pair);
        if (o.web) item["web"] = to_json(*o.web);
        outcomes.push_back(std::move(item));
    }
    nlohmann::json out{{"questions", questions},
                       {"routing", routing},
                       {"outcomes", outcomes},
                       {"summary", {{"text", stage.summary.text}, {"sources", stage.summary.sources}}},
                       {"events", stage.events}};
    if (stage.ranked)
        out["ranked"] = {{"indices", stage.ranked->indices}, {"rationale", stage.ranked->rationale}};
    return out;
}

inline nlohmann::json to_json(const ReasoningResult& result) {
    nlohmann::json out{{"raw", result.output.raw},
                       {"think_trace", result.output.think_trace},
                       {"answer_text", result.output.answer_text}};
    if (result.mcq) out["mcq_label"] = std::string(1, result.mcq->label);
    return out;
}

inline nlohmann::json to_json(const std::vector<CallRecord>& calls) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& call : calls) {
        out.push_back({{"scope", call.scope},
                       {"role", call.role},
                       {"backend", call.backend},
                       {"fingerprint", call.fingerprint},
                       {"prompt_tokens", call.usage.prompt_tokens},
                       {"completion_tokens", call.usage.completion_tokens}});
    }
    return out;
}

// ---- persistence -------------------------------------------------------------

enum class TraceStatus { incomplete, complete, failed };

inline const char* to_string(TraceStatus status) {
    switch (status) {
        case TraceStatus::incomplete: return "incomplete";
        case TraceStatus::complete: return "complete";
        case TraceStatus::failed: return "failed";
    }
    return "?";
}

// Per-entry trace files under one run directory. Trace content is fully
// deterministic; wall-clock and cache-hit telemetry go to a sidecar file so
// byte comparison of traces stays meaningful.
class TraceStore {
public:
    explicit TraceStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw StorageError("cannot create trace dir " + dir_.string() + ": " + ec.message());
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::filesystem::path trace_path(const std::string& entry_id) const {
        return dir_ / (entry_id + ".trace.json");
    }

    std::filesystem::path timing_path(const std::string& entry_id) const {
        return dir_ / (entry_id + ".timing.json");
    }

    std::filesystem::path persist(const std::string& entry_id, const nlohmann::json& trace) {
        auto path = trace_path(entry_id);
        write_atomic(path, trace.dump(2) + "\n");
        return path;
    }

    void persist_timing(const std::string& entry_id, const nlohmann::json& timing) {
        write_atomic(timing_path(entry_id), timing.dump(2) + "\n");
    }

    std::optional<nlohmann::json> load(const std::string& entry_id) const {
        std::ifstream in(trace_path(entry_id));
        if (!in) return std::nullopt;
        nlohmann::json trace = nlohmann::json::parse(in, nullptr, false);
        if (trace.is_discarded()) return std::nullopt;
        return trace;
    }

    // True when the entry was fully computed under the same configuration.
    bool has_complete(const std::string& entry_id, const std::string& config_hash) const {
        auto trace = load(entry_id);
        if (!trace) return false;
        return trace->value("status", "") == to_string(TraceStatus::complete) &&
               trace->value("config_hash", "") == config_hash;
    }

    std::vector<std::string> entry_ids() const {
        std::vector<std::string> out;
        std::error_code ec;
        for (const auto& item : std::filesystem::directory_iterator(dir_, ec)) {
            auto name = item.path().filename().string();
            const std::string suffix = ".trace.json";
            if (name.size() > suffix.size() && name.substr(name.size() - suffix.size()) == suffix)
                out.push_back(name.substr(0, name.size() - suffix.size()));
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    void write_atomic(const std::filesystem::path& path, const std::string& content) {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
            if (!out) throw StorageError("cannot write " + tmp.string());
            out << content;
            if (!out.good()) throw StorageError("short write to " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw StorageError("cannot publish " + path.string() + ": " + ec.message());
    }

    std::filesystem::path dir_;
};

}  // namespace lad
