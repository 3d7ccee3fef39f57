#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lad/detail/parallel.hpp"
#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/perception.hpp"
#include "lad/prompts.hpp"
#include "lad/search_types.hpp"
#include "lad/web_search.hpp"

namespace lad {

struct SearchStageConfig {
    double routing_threshold = 0.5;
    std::size_t fanout = 5;  // concurrent route+search tasks
    int question_count = 5;
    Language language = Language::en;
    double temperature = 0.5;
    double top_p = 0.9;
    int max_output = 1024;
    WebSearchConfig web;
};

// Per-image record of everything Stage II did, for traces and tests.
struct SearchStageTrace {
    std::vector<SearchQuestion> questions;
    std::vector<RoutingDecision> decisions;  // aligned with questions
    struct PairOutcome {
        QAPair pair;
        bool failed = false;
        std::string error;
        std::optional<WebSearchRecord> web;  // set for web-routed questions
    };
    std::vector<PairOutcome> outcomes;  // aligned with questions
    std::optional<RankedSelection> ranked;
    SearchSummary summary;
    std::vector<std::string> events;
};

namespace search_detail {

inline ModelRequest make_request(const std::string& system_text, const std::string& user_text,
                                 const SearchStageConfig& cfg) {
    ModelRequest request;
    request.system_text = system_text;
    request.user_parts.emplace_back(user_text);
    request.temperature = cfg.temperature;
    request.top_p = cfg.top_p;
    request.max_output = cfg.max_output;
    return request;
}

// Numbered lines ("1. ...", "2) ...") in order; unnumbered non-empty lines
// are accepted when nothing is numbered at all.
inline std::vector<std::string> parse_numbered_lines(const std::string& raw) {
    std::vector<std::string> numbered;
    std::vector<std::string> plain;
    for (const auto& line : lad::detail::split_lines(raw)) {
        std::string t = lad::detail::trim(line);
        if (t.empty()) continue;
        std::size_t digits = 0;
        while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
        if (digits > 0 && digits < t.size() && (t[digits] == '.' || t[digits] == ')' || t[digits] == ':')) {
            std::string body = lad::detail::trim(t.substr(digits + 1));
            if (!body.empty()) numbered.push_back(body);
        } else {
            plain.push_back(t);
        }
    }
    return numbered.empty() ? plain : numbered;
}

}  // namespace search_detail

// Plan step: keywords -> exactly five search questions, levels 1..5 in
// output order. Over-long plans are truncated; short plans get one reprompt
// and then fail with ParseError.
inline std::vector<SearchQuestion> plan_questions(const KeywordSet& keywords, const RoleClient& client,
                                                  const SearchStageConfig& cfg = {}) {
    if (keywords.keywords.empty()) throw InvalidInputError("empty keyword set");
    ModelRequest request = search_detail::make_request(prompts::plan_system(),
                                                       prompts::plan_user(keywords.joined(), cfg.language), cfg);

    auto attempt = [&]() { return search_detail::parse_numbered_lines(client(request).text); };
    std::vector<std::string> lines = attempt();
    if (static_cast<int>(lines.size()) < cfg.question_count) {
        std::vector<std::string> retry = attempt();  // one reprompt
        if (retry.size() > lines.size()) lines = std::move(retry);
    }
    if (static_cast<int>(lines.size()) < cfg.question_count)
        throw ParseError("expected " + std::to_string(cfg.question_count) + " questions, parsed " +
                         std::to_string(lines.size()));
    std::vector<SearchQuestion> questions;
    for (int i = 0; i < cfg.question_count; ++i) questions.push_back({lines[static_cast<std::size_t>(i)], i + 1});
    return questions;
}

// Self-judge step: scalar confidence parsed from the reply; the route is a
// pure threshold function of it. Unparsable scores fall back to the model
// route (the cheaper side).
inline RoutingDecision judge_route(const SearchQuestion& question, const RoleClient& client,
                                   const SearchStageConfig& cfg = {}) {
    if (question.text.empty()) throw InvalidInputError("empty search question");
    ModelRequest request =
        search_detail::make_request(prompts::judge_route_system(), prompts::judge_route_user(question.text), cfg);
    RoutingDecision decision;
    std::string raw;
    try {
        raw = client(request).text;
    } catch (const Error& e) {
        decision.confidence = 0.0;
        decision.route = SearchRoute::model;
        decision.rationale = std::string("fallback: judge call failed (") + e.what() + ")";
        return decision;
    }
    std::optional<double> score = detail::parse_first_number(raw);
    if (score && *score > 1.0 && *score <= 100.0) score = *score / 100.0;  // "85%" style replies
    if (!score || *score < 0.0 || *score > 1.0) {
        decision.confidence = 0.0;
        decision.route = SearchRoute::model;
        decision.rationale = "fallback: unparsable confidence score";
        return decision;
    }
    decision.confidence = *score;
    decision.route = route_for_confidence(*score, cfg.routing_threshold);
    decision.rationale = detail::trim(raw);
    return decision;
}

// ModelSearch step: answer from parametric memory, no citations.
inline QAPair model_search(const SearchQuestion& question, const RoleClient& client,
                           const SearchStageConfig& cfg = {}) {
    if (question.text.empty()) throw InvalidInputError("empty search question");
    ModelRequest request =
        search_detail::make_request(prompts::model_search_system(), prompts::model_search_user(question.text), cfg);
    std::string answer;
    try {
        answer = client(request).text;
    } catch (const Error& e) {
        throw SearchStepError(std::string("model_search: ") + e.what());
    }
    QAPair pair;
    pair.question = question;
    pair.answer = std::move(answer);
    pair.route = SearchRoute::model;
    return pair;
}

// RankSummary step: the model returns pair indices; the artifact selects by
// index so the output is always a subset of the input pairs by identity.
inline RankedSelection rank_pairs(const std::vector<QAPair>& pairs, const Description& description,
                                  const RoleClient& client, const SearchStageConfig& cfg = {}) {
    if (pairs.empty()) throw InvalidInputError("rank_pairs requires at least one pair");
    const std::size_t select_count = std::min<std::size_t>(3, pairs.size());

    std::string listing;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        listing += std::to_string(i + 1) + ". Q: " + pairs[i].question.text + "\n   A: " + pairs[i].answer + "\n";
    }
    ModelRequest request = search_detail::make_request(
        prompts::rank_system(),
        prompts::rank_user(description.text, listing, static_cast<int>(select_count)), cfg);

    auto parse_attempt = [&](const std::string& raw) -> std::optional<std::pair<std::vector<int>, std::string>> {
        std::string rationale;
        std::string index_line;
        for (const auto& line : detail::split_lines(raw)) {
            std::string lower = detail::to_lower(detail::trim(line));
            if (index_line.empty() && lower.rfind("ranking", 0) == 0) index_line = line;
            if (rationale.empty() && lower.rfind("reason", 0) == 0) {
                std::size_t colon = line.find(':');
                if (colon != std::string::npos) rationale = detail::trim(line.substr(colon + 1));
            }
        }
        if (index_line.empty()) index_line = raw;  // bare "[3, 1, 5]" replies
        std::vector<int> indices = detail::parse_integers(index_line);
        if (indices.empty()) return std::nullopt;
        std::vector<int> valid;
        std::set<int> seen;
        for (int idx : indices) {
            if (idx < 1 || idx > static_cast<int>(pairs.size())) return std::nullopt;  // out-of-range: reject whole ranking
            if (!seen.insert(idx).second) continue;
            valid.push_back(idx);
        }
        if (valid.size() < select_count) return std::nullopt;
        valid.resize(select_count);
        return std::make_pair(valid, rationale);
    };

    std::optional<std::pair<std::vector<int>, std::string>> parsed;
    try {
        parsed = parse_attempt(client(request).text);
        if (!parsed) parsed = parse_attempt(client(request).text);  // one reprompt
    } catch (const Error&) {
        parsed = std::nullopt;
    }

    RankedSelection selection;
    if (!parsed) {
        for (std::size_t i = 0; i < select_count; ++i) {
            selection.indices.push_back(static_cast<int>(i + 1));
            selection.selected.push_back(pairs[i]);
        }
        selection.rationale = "fallback: input order";
        return selection;
    }
    selection.indices = parsed->first;
    selection.rationale = parsed->second;
    for (int idx : selection.indices) selection.selected.push_back(pairs[static_cast<std::size_t>(idx - 1)]);
    return selection;
}

// RefineSummary step: consolidates the selected pairs into one text; sources
// are the union of the selected pairs' citations, first occurrence order.
inline SearchSummary refine_summary(const RankedSelection& selection, Language lang, const RoleClient& client,
                                    const SearchStageConfig& cfg = {}) {
    if (selection.selected.empty()) throw InvalidInputError("refine_summary requires a non-empty selection");
    std::string listing;
    for (std::size_t i = 0; i < selection.selected.size(); ++i) {
        const auto& pair = selection.selected[i];
        listing += std::to_string(i + 1) + ". Q: " + pair.question.text + "\n   A: " + pair.answer + "\n";
    }
    ModelRequest request = search_detail::make_request(
        prompts::refine_system(), prompts::refine_user(listing, selection.rationale, lang), cfg);

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
            throw SummaryError(std::string("refine_summary: ") + e.what());
        }
    }
    if (text.empty()) throw SummaryError("refine_summary: empty model output after retry");

    SearchSummary summary;
    summary.text = std::move(text);
    std::set<std::string> seen;
    for (const auto& pair : selection.selected)
        for (const auto& url : pair.citations)
            if (seen.insert(url).second) summary.sources.push_back(url);
    return summary;
}

struct SearchStageDeps {
    RoleClient planner;              // Plan
    RoleClient judge;                // Self-Judge
    RoleClient searcher;             // ModelSearch / WebSearch model steps / Rank / Refine
    SearchProvider* provider = nullptr;
    PageFetcher* fetcher = nullptr;
};

// Stage II composition: plan five questions, route + answer them with
// bounded fan-out, rank the survivors, refine the top three into one
// summary. Degrades to the empty-summary sentinel only when every question
// failed.
inline SearchSummary run_search_stage(const PerceptionResult& perception, const SearchStageDeps& deps,
                                      const SearchStageConfig& cfg = {}, SearchStageTrace* trace = nullptr) {
    if (perception.description.text.empty()) throw InvalidInputError("invalid perception result");
    SearchStageTrace local;
    SearchStageTrace& rec = trace ? *trace : local;

    try {
        rec.questions = plan_questions(perception.keywords, deps.planner, cfg);
    } catch (const Error& e) {
        rec.events.push_back(std::string("plan failed: ") + e.what());
        rec.summary = SearchSummary{};
        return rec.summary;
    }

    rec.decisions.resize(rec.questions.size());
    rec.outcomes.resize(rec.questions.size());

    detail::parallel_for(rec.questions.size(), cfg.fanout, [&](std::size_t i) {
        const SearchQuestion& question = rec.questions[i];
        RoutingDecision decision = judge_route(question, deps.judge, cfg);
        rec.decisions[i] = decision;
        auto& outcome = rec.outcomes[i];
        try {
            if (decision.route == SearchRoute::web) {
                if (!deps.provider || !deps.fetcher) throw SearchStepError("web route without provider/fetcher");
                outcome.web.emplace();
                outcome.pair = run_web_search(question, deps.searcher, *deps.provider, *deps.fetcher, cfg.web,
                                              &*outcome.web);
            } else {
                outcome.pair = model_search(question, deps.searcher, cfg);
            }
        } catch (const Error& e) {
            outcome.failed = true;
            outcome.error = e.what();
        }
    });

    std::vector<QAPair> successes;
    for (const auto& outcome : rec.outcomes)
        if (!outcome.failed) successes.push_back(outcome.pair);

    if (successes.empty()) {
        rec.events.push_back("all search questions failed; returning empty summary");
        rec.summary = SearchSummary{};
        return rec.summary;
    }

    try {
        rec.ranked = rank_pairs(successes, perception.description, deps.searcher, cfg);
        rec.summary = refine_summary(*rec.ranked, cfg.language, deps.searcher, cfg);
    } catch (const Error& e) {
        rec.events.push_back(std::string("rank/refine failed: ") + e.what());
        rec.summary = SearchSummary{};
    }
    return rec.summary;
}

}  // namespace lad
