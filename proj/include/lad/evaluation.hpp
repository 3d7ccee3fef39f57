#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/perception.hpp"
#include "lad/prompts.hpp"
#include "lad/reasoning.hpp"

namespace lad {

struct OsqScore {
    std::vector<double> runs;  // each in [1,5], at least 3
    double mean = 0.0;
};

struct McqItemScore {
    std::string id;
    Language language = Language::en;
    std::optional<char> prediction;  // unset = unanswered, counts incorrect
    char gold = 'A';
    bool correct = false;
};

struct LanguageAccuracy {
    int correct = 0;
    int total = 0;

    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
    std::string formatted() const { return detail::format_fixed(accuracy(), 4); }
};

// Unanswered predictions count as incorrect. Accuracy is the exact rational
// correct/total; formatting to 4 decimals happens at report time.
inline std::map<std::string, LanguageAccuracy> score_mcq_batch(const std::vector<std::optional<char>>& predictions,
                                                               const std::vector<char>& gold,
                                                               const std::vector<Language>& languages) {
    if (predictions.size() != gold.size() || predictions.size() != languages.size())
        throw LengthMismatchError("predictions/gold/languages differ in length");
    std::map<std::string, LanguageAccuracy> out;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        auto& bucket = out[prompts::language_name(languages[i])];
        ++bucket.total;
        if (predictions[i] && *predictions[i] == gold[i]) ++bucket.correct;
    }
    return out;
}

// Judge reply -> overall score in [1,5]. Accepts "Overall Score: 4.5",
// "Score: 4.5/5" and a bare leading number; fractional values are fine.
inline std::optional<double> parse_judge_score(const std::string& raw) {
    std::string lower = detail::to_lower(raw);
    std::size_t anchor = lower.rfind("overall score");
    if (anchor == std::string::npos) anchor = lower.rfind("score");
    std::optional<double> value;
    if (anchor != std::string::npos)
        value = detail::parse_first_number(raw.substr(anchor));
    else
        value = detail::parse_first_number(raw);
    if (!value) return std::nullopt;
    if (*value < 1.0 || *value > 5.0) return std::nullopt;
    return value;
}

struct JudgeConfig {
    int runs = 3;  // floor enforced; more runs allowed
    double temperature = 0.0;
    double top_p = 0.9;
    int max_output = 1024;
    bool send_image = true;
};

struct JudgeGroundTruth {
    std::string description;
    std::string implication;
};

inline ModelRequest build_judge_request(const ImageInput& image, const std::string& candidate,
                                        const JudgeGroundTruth& gt, const JudgeConfig& cfg) {
    ModelRequest request;
    request.system_text = prompts::judge_osq_system();
    if (cfg.send_image) request.user_parts.emplace_back(ImagePart{image.bytes, image.media_type});
    request.user_parts.emplace_back(prompts::judge_osq_user(gt.description, gt.implication, candidate));
    request.temperature = cfg.temperature;
    request.top_p = cfg.top_p;
    request.max_output = cfg.max_output;
    return request;
}

// OSQ judging: `runs` sequential judge calls at temperature 0, one overall
// score each. A run whose score cannot be parsed is retried once, then
// skipped; fewer than 3 valid runs is a JudgeError.
inline OsqScore judge_osq(const std::string& candidate_answer, const ImageInput& image, const JudgeGroundTruth& gt,
                          const RoleClient& judge, const JudgeConfig& cfg = {}) {
    if (cfg.runs < 3) throw InvalidInputError("judge runs must be >= 3 (got " + std::to_string(cfg.runs) + ")");
    if (gt.description.empty() || gt.implication.empty())
        throw InvalidInputError("OSQ judging needs ground-truth description and implication");

    ModelRequest request = build_judge_request(image, candidate_answer, gt, cfg);
    OsqScore score;
    for (int run = 0; run < cfg.runs; ++run) {
        std::optional<double> value;
        for (int attempt = 0; attempt < 2 && !value; ++attempt) {
            try {
                value = parse_judge_score(judge(request).text);
            } catch (const Error&) {
                value = std::nullopt;
            }
        }
        if (value) score.runs.push_back(*value);
    }
    if (score.runs.size() < 3)
        throw JudgeError("only " + std::to_string(score.runs.size()) + " valid judge runs of " +
                         std::to_string(cfg.runs));
    double sum = 0.0;
    for (double v : score.runs) sum += v;
    score.mean = sum / static_cast<double>(score.runs.size());
    return score;
}

// Mean after discarding exactly one highest and one lowest rating (one
// instance each, even under ties).
inline double trimmed_mean(std::vector<double> ratings) {
    if (ratings.size() < 3) throw TooFewRatersError("need >= 3 ratings, got " + std::to_string(ratings.size()));
    std::sort(ratings.begin(), ratings.end());
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < ratings.size(); ++i) sum += ratings[i];
    return sum / static_cast<double>(ratings.size() - 2);
}

struct ConsistencyItem {
    std::string id;
    double human_mean = 0.0;  // trimmed
    double model_score = 0.0;
    double consistency = 0.0;  // 1 - |human_mean - model_score| / 4
};

struct ConsistencyReport {
    std::vector<ConsistencyItem> items;
    double average = 0.0;
    std::vector<std::string> skipped;  // items with too few raters
};

// Consistency = 1 - MAE / 4 over the 1..5 scoring range. 1.0 means the
// model matched every trimmed human mean exactly.
inline double consistency_value(double human_mean, double model_score) {
    return 1.0 - std::abs(human_mean - model_score) / 4.0;
}

inline ConsistencyReport human_model_consistency(
    const std::vector<std::pair<std::string, std::vector<double>>>& human_ratings,
    const std::map<std::string, double>& model_scores) {
    ConsistencyReport report;
    double sum = 0.0;
    for (const auto& [id, ratings] : human_ratings) {
        auto model = model_scores.find(id);
        if (model == model_scores.end()) continue;
        if (ratings.size() < 3) {
            report.skipped.push_back(id);
            continue;
        }
        ConsistencyItem item;
        item.id = id;
        item.human_mean = trimmed_mean(ratings);
        item.model_score = model->second;
        item.consistency = consistency_value(item.human_mean, item.model_score);
        sum += item.consistency;
        report.items.push_back(std::move(item));
    }
    if (report.items.empty()) throw TooFewRatersError("no item had both >= 3 human ratings and a model score");
    report.average = sum / static_cast<double>(report.items.size());
    return report;
}

}  // namespace lad
