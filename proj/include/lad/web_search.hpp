#pragma once

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "lad/dag.hpp"
#include "lad/detail/parallel.hpp"
#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/page_fetcher.hpp"
#include "lad/perception.hpp"
#include "lad/prompts.hpp"
#include "lad/search_provider.hpp"
#include "lad/search_types.hpp"

namespace lad {

struct WebSearchConfig {
    DagLimits dag_limits;
    int snippets_per_node = 5;       // k
    int pages_per_question = 2;      // m
    std::size_t page_budget = 4000;  // characters
    int fetch_timeout_seconds = 10;
    int dag_parallelism = 3;
    double temperature = 0.5;
    double top_p = 0.9;
    int max_output = 1024;
};

struct WebAnswer {
    std::string text;
    std::vector<std::string> citations;
};

// Everything the sub-procedure produced, for the per-image trace.
struct WebSearchRecord {
    SubQuestionDag dag;
    bool dag_fell_back = false;
    std::vector<Snippet> snippets;
    std::vector<std::string> selected_urls;
    std::vector<PageContent> pages;
    WebAnswer answer;
    std::vector<std::string> events;
};

namespace websearch_detail {

inline ModelRequest make_request(const std::string& system_text, const std::string& user_text,
                                 const WebSearchConfig& cfg) {
    ModelRequest request;
    request.system_text = system_text;
    request.user_parts.emplace_back(user_text);
    request.temperature = cfg.temperature;
    request.top_p = cfg.top_p;
    request.max_output = cfg.max_output;
    return request;
}

// Pulls the first balanced {...} block out of free-form model output.
inline std::optional<std::string> extract_json_object(const std::string& text) {
    std::size_t start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        if (c == '{') ++depth;
        if (c == '}' && --depth == 0) return text.substr(start, i - start + 1);
    }
    return std::nullopt;
}

inline std::optional<SubQuestionDag> parse_plan_json(const std::string& raw) {
    auto block = extract_json_object(raw);
    if (!block) return std::nullopt;
    nlohmann::json plan = nlohmann::json::parse(*block, nullptr, false);
    if (plan.is_discarded() || !plan.is_object() || !plan.contains("nodes") || !plan["nodes"].is_array())
        return std::nullopt;
    SubQuestionDag dag;
    for (const auto& n : plan["nodes"]) {
        if (!n.is_object() || !n.contains("id") || !n.contains("text")) continue;
        if (!n["id"].is_number_integer() || !n["text"].is_string()) continue;
        dag.nodes.push_back({n["id"].get<int>(), detail::trim(n["text"].get<std::string>())});
    }
    if (plan.contains("edges") && plan["edges"].is_array()) {
        for (const auto& e : plan["edges"]) {
            if (!e.is_array() || e.size() != 2) continue;
            if (!e[0].is_number_integer() || !e[1].is_number_integer()) continue;
            dag.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
    }
    if (dag.nodes.empty()) return std::nullopt;
    return dag;
}

// Replaces {ans:N} placeholders; unknown ids resolve to empty string and get
// reported through `warnings`.
inline std::string substitute_placeholders(const std::string& text, const std::map<int, std::string>& answers,
                                           std::vector<std::string>* warnings) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 5, "{ans:") == 0) {
            std::size_t close = text.find('}', i);
            if (close != std::string::npos) {
                std::string id_str = text.substr(i + 5, close - i - 5);
                bool numeric = !id_str.empty() &&
                               std::all_of(id_str.begin(), id_str.end(),
                                           [](unsigned char c) { return std::isdigit(c) != 0; });
                if (numeric) {
                    int id = std::stoi(id_str);
                    auto it = answers.find(id);
                    if (it != answers.end()) {
                        out += it->second;
                    } else if (warnings) {
                        warnings->push_back("dangling placeholder {ans:" + id_str + "} resolved to empty string");
                    }
                    i = close + 1;
                    continue;
                }
            }
        }
        out += text[i];
        ++i;
    }
    return out;
}

}  // namespace websearch_detail

// Planner step: question -> sub-question DAG, normalized to the structural
// caps. An unparsable plan (after one reprompt) or a cyclic plan degrades to
// a single-node DAG holding the original question.
inline SubQuestionDag rewrite_query(const SearchQuestion& question, const RoleClient& client,
                                    const WebSearchConfig& cfg = {}, WebSearchRecord* record = nullptr) {
    if (question.text.empty()) throw InvalidInputError("empty search question");
    ModelRequest request = websearch_detail::make_request(
        prompts::rewrite_system(), prompts::rewrite_user(question.text, cfg.dag_limits.max_nodes), cfg);
    auto parsed = websearch_detail::parse_plan_json(client(request).text);
    if (!parsed) parsed = websearch_detail::parse_plan_json(client(request).text);  // one reprompt
    if (!parsed) {
        if (record) {
            record->events.push_back("plan unparsable after reprompt; single-node fallback");
            record->dag_fell_back = true;
        }
        return single_node_dag(question.text);
    }
    DagNormalization norm = normalize_dag(std::move(*parsed), question.text, cfg.dag_limits);
    if (record) {
        for (auto& w : norm.warnings) record->events.push_back(std::move(w));
        record->dag_fell_back = norm.fell_back;
    }
    return norm.dag;
}

struct DagExecutorHooks {
    std::function<void(int)> on_node_start;
    std::function<void(int)> on_node_finish;
};

// Retrieval step: runs every node's query, independent nodes concurrently
// (bounded), dependent nodes only after all their prerequisites finished.
// A node's "answer" for downstream substitution is its first snippet's
// summary. Per-node provider failures yield zero snippets for that node.
inline std::vector<Snippet> batch_query(const SubQuestionDag& dag, SearchProvider& provider,
                                        const WebSearchConfig& cfg = {}, WebSearchRecord* record = nullptr,
                                        const DagExecutorHooks& hooks = {}) {
    auto order = topological_order(dag);
    if (!order) throw InvalidInputError("batch_query requires an acyclic dag");

    std::mutex mu;
    std::condition_variable cv;
    std::map<int, bool> done;
    std::map<int, std::string> node_answers;
    std::map<int, std::vector<Snippet>> node_snippets;
    std::vector<std::string> warnings;
    int running = 0;
    std::set<int> started;

    auto ready = [&](int id) {
        for (int pred : dag.predecessors(id))
            if (!done.count(pred) || !done[pred]) return false;
        return true;
    };

    std::vector<std::thread> workers;
    {
        std::unique_lock<std::mutex> lock(mu);
        std::size_t remaining = dag.nodes.size();
        while (remaining > 0) {
            int next_id = -1;
            for (const auto& node : dag.nodes) {
                if (started.count(node.id)) continue;
                if (ready(node.id)) {
                    next_id = node.id;
                    break;
                }
            }
            if (next_id == -1 || running >= cfg.dag_parallelism) {
                cv.wait(lock);
                continue;
            }
            started.insert(next_id);
            ++running;
            --remaining;
            int id = next_id;
            std::string text = dag.node(id).text;
            std::string query_text = websearch_detail::substitute_placeholders(text, node_answers, &warnings);
            workers.emplace_back([&, id, query_text] {
                if (hooks.on_node_start) hooks.on_node_start(id);
                std::vector<Snippet> snippets;
                std::string error;
                try {
                    snippets = provider.query(query_text, cfg.snippets_per_node);
                } catch (const Error& e) {
                    error = e.what();
                }
                if (hooks.on_node_finish) hooks.on_node_finish(id);
                std::lock_guard<std::mutex> inner(mu);
                for (auto& s : snippets) s.sub_question_id = id;
                if (!error.empty()) warnings.push_back("node " + std::to_string(id) + " provider error: " + error);
                node_answers[id] = snippets.empty() ? std::string() : snippets.front().summary;
                node_snippets[id] = std::move(snippets);
                done[id] = true;
                --running;
                cv.notify_all();
            });
        }
        while (running > 0) cv.wait(lock);
    }
    for (auto& w : workers) w.join();

    std::vector<Snippet> out;
    for (const auto& node : dag.nodes) {
        auto it = node_snippets.find(node.id);
        if (it == node_snippets.end()) continue;
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    if (record) {
        record->snippets = out;
        for (auto& w : warnings) record->events.push_back(std::move(w));
    }
    return out;
}

// Page selection: the model picks up to pages_per_question urls per
// sub-question; anything it returns that was not presented is discarded, and
// the remainder is filled from provider order.
inline std::vector<std::string> select_pages(const std::vector<Snippet>& snippets, const SearchQuestion& question,
                                             const RoleClient& client, const WebSearchConfig& cfg = {},
                                             WebSearchRecord* record = nullptr) {
    if (snippets.empty()) throw InvalidInputError("select_pages requires at least one snippet");

    std::vector<std::string> presented;
    std::string listing;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        presented.push_back(snippets[i].url);
        listing += std::to_string(i + 1) + ". [sub-question " + std::to_string(snippets[i].sub_question_id) + "] " +
                   snippets[i].title + " - " + snippets[i].summary + " (" + snippets[i].url + ")\n";
    }

    auto node_for = [&](const std::string& url) {
        for (const auto& s : snippets)
            if (s.url == url) return s.sub_question_id;
        return -1;
    };

    // Tops `selected` up from provider order until `slots` more urls were
    // added or every node hit its per-question cap.
    auto fill_from_provider_order = [&](std::vector<std::string>& selected, std::map<int, int>& per_node,
                                        std::size_t slots) {
        std::set<std::string> chosen(selected.begin(), selected.end());
        for (const auto& s : snippets) {
            if (slots == 0) break;
            if (per_node[s.sub_question_id] >= cfg.pages_per_question) continue;
            if (chosen.count(s.url)) continue;
            selected.push_back(s.url);
            chosen.insert(s.url);
            ++per_node[s.sub_question_id];
            --slots;
        }
    };

    ModelRequest request = websearch_detail::make_request(
        prompts::select_pages_system(), prompts::select_pages_user(question.text, listing, cfg.pages_per_question),
        cfg);

    std::vector<std::string> selected;
    std::map<int, int> per_node;
    std::size_t discarded = 0;
    bool parse_failed = false;
    try {
        std::string raw = client(request).text;
        std::set<std::string> chosen;
        bool saw_any_url = false;
        for (const auto& line : detail::split_lines(raw)) {
            std::size_t pos = line.find("http");
            if (pos == std::string::npos) continue;
            saw_any_url = true;
            std::string url = detail::trim(line.substr(pos));
            while (!url.empty() && (url.back() == '.' || url.back() == ',' || url.back() == ')')) url.pop_back();
            if (std::find(presented.begin(), presented.end(), url) == presented.end()) {
                ++discarded;
                if (record) record->events.push_back("selection discarded unseen url: " + url);
                continue;
            }
            if (chosen.count(url)) continue;
            int node_id = node_for(url);
            if (per_node[node_id] >= cfg.pages_per_question) continue;
            ++per_node[node_id];
            chosen.insert(url);
            selected.push_back(url);
        }
        if (!saw_any_url) parse_failed = true;
    } catch (const Error&) {
        parse_failed = true;
    }

    if (parse_failed || (selected.empty() && discarded == 0)) {
        // No usable selection at all: first pages_per_question urls per node
        // in provider order.
        if (record) record->events.push_back("page selection fell back to provider order");
        selected.clear();
        per_node.clear();
        fill_from_provider_order(selected, per_node, snippets.size());
    } else if (discarded > 0) {
        // Discarded picks free slots; refill them from provider order.
        fill_from_provider_order(selected, per_node, discarded);
    }

    if (record) record->selected_urls = selected;
    return selected;
}

// Fetch step: per-url failures are tolerated; non-text content types are
// skipped; bodies are stripped to visible text and truncated to the budget.
inline std::vector<PageContent> fetch_content(const std::vector<std::string>& urls, PageFetcher& fetcher,
                                              const WebSearchConfig& cfg = {}, WebSearchRecord* record = nullptr) {
    std::vector<std::optional<PageContent>> slots(urls.size());
    std::vector<std::string> events(urls.size());
    detail::parallel_for(urls.size(), static_cast<std::size_t>(std::max(1, cfg.dag_parallelism)),
                         [&](std::size_t i) {
                             const std::string& url = urls[i];
                             if (!is_valid_url(url)) {
                                 events[i] = "skipped invalid url: " + url;
                                 return;
                             }
                             try {
                                 auto raw = fetcher.fetch(url, cfg.fetch_timeout_seconds);
                                 std::string type = detail::to_lower(raw.content_type);
                                 bool textual = type.empty() || type.find("text/") == 0 ||
                                                type.find("html") != std::string::npos ||
                                                type.find("xml") != std::string::npos ||
                                                type.find("json") != std::string::npos;
                                 if (!textual) {
                                     events[i] = "skipped non-text content (" + raw.content_type + ") at " + url;
                                     return;
                                 }
                                 slots[i] = apply_page_budget(url, strip_markup(raw.body), cfg.page_budget);
                             } catch (const Error& e) {
                                 events[i] = std::string("fetch failed: ") + e.what();
                             }
                         });
    std::vector<PageContent> pages;
    for (std::size_t i = 0; i < urls.size(); ++i) {
        if (slots[i]) pages.push_back(std::move(*slots[i]));
        if (record && !events[i].empty()) record->events.push_back(events[i]);
    }
    if (record) record->pages = pages;
    return pages;
}

// Synthesis step: answer from page contents; with zero pages the snippet
// summaries serve as context. Citations are exactly the urls put in front of
// the model.
inline WebAnswer summarize_answer(const std::vector<PageContent>& pages, const std::vector<Snippet>& snippets,
                                  const SearchQuestion& question, const RoleClient& client,
                                  const WebSearchConfig& cfg = {}) {
    std::string context;
    std::vector<std::string> citations;
    if (!pages.empty()) {
        for (const auto& page : pages) {
            context += "Source: " + page.url + "\n" + page.text + "\n\n";
            citations.push_back(page.url);
        }
    } else {
        for (const auto& snippet : snippets) {
            context += "Source: " + snippet.url + "\n" + snippet.title + " - " + snippet.summary + "\n\n";
            citations.push_back(snippet.url);
        }
    }
    if (context.empty()) context = "(no retrieved material)\n";

    ModelRequest request = websearch_detail::make_request(prompts::web_summarize_system(),
                                                          prompts::web_summarize_user(question.text, context), cfg);
    std::string text;
    try {
        text = client(request).text;
    } catch (const EmptyResponseError&) {
        text.clear();
    }
    if (text.empty()) {
        try {
            text = client(request).text;  // one retry
        } catch (const Error& e) {
            throw SearchStepError(std::string("summarize_answer: ") + e.what());
        }
    }
    if (text.empty()) throw SearchStepError("summarize_answer: empty model output after retry");
    WebAnswer answer;
    answer.text = std::move(text);
    answer.citations = std::move(citations);
    return answer;
}

// Full WebSearch sub-procedure. Throws SearchStepError when no answer can be
// produced; the orchestrator turns that into a failed pair.
inline QAPair run_web_search(const SearchQuestion& question, const RoleClient& client, SearchProvider& provider,
                             PageFetcher& fetcher, const WebSearchConfig& cfg = {},
                             WebSearchRecord* record = nullptr) {
    WebSearchRecord local;
    WebSearchRecord& rec = record ? *record : local;

    rec.dag = rewrite_query(question, client, cfg, &rec);
    std::vector<Snippet> snippets = batch_query(rec.dag, provider, cfg, &rec);

    std::vector<PageContent> pages;
    if (!snippets.empty()) {
        std::vector<std::string> urls = select_pages(snippets, question, client, cfg, &rec);
        pages = fetch_content(urls, fetcher, cfg, &rec);
    } else {
        rec.events.push_back("no snippets retrieved; summarizing without web material");
    }

    rec.answer = summarize_answer(pages, snippets, question, client, cfg);

    QAPair pair;
    pair.question = question;
    pair.answer = rec.answer.text;
    pair.route = SearchRoute::web;
    pair.citations = rec.answer.citations;
    return pair;
}

}  // namespace lad
