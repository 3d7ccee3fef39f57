#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/perception.hpp"
#include "lad/prompts.hpp"
#include "lad/search_types.hpp"

namespace lad {

enum class TaskKind { mcq, osq };

inline const char* to_string(TaskKind kind) { return kind == TaskKind::mcq ? "mcq" : "osq"; }

inline constexpr const char* kFixedOsqQuestion = "What is the implication in this image?";
inline constexpr int kMcqOptionCount = 6;

struct ReasoningTask {
    TaskKind kind = TaskKind::osq;
    std::string question;
    std::vector<std::string> options;  // exactly 6 for MCQ, empty for OSQ
    Language language = Language::en;

    static ReasoningTask mcq(std::string question, std::vector<std::string> options, Language lang) {
        ReasoningTask task;
        task.kind = TaskKind::mcq;
        task.question = std::move(question);
        task.options = std::move(options);
        task.language = lang;
        task.validate();
        return task;
    }

    static ReasoningTask osq(Language lang) {
        ReasoningTask task;
        task.kind = TaskKind::osq;
        task.question = kFixedOsqQuestion;
        task.language = lang;
        return task;
    }

    void validate() const {
        if (kind == TaskKind::mcq) {
            if (options.size() != kMcqOptionCount)
                throw InvalidInputError("MCQ task needs exactly " + std::to_string(kMcqOptionCount) +
                                        " options, got " + std::to_string(options.size()));
            if (question.empty()) throw InvalidInputError("MCQ task has no question");
        } else {
            if (!options.empty()) throw InvalidInputError("OSQ task must not carry options");
        }
    }
};

struct SamplingParams {
    double temperature = 0.7;
    double top_p = 0.9;
    int max_output = 2048;
};

struct ReasoningConfig {
    SamplingParams mcq{0.5, 0.9, 1024};
    SamplingParams osq{0.7, 0.9, 2048};
    std::string think_open = "<think>";
    std::string think_close = "</think>";
    bool send_image = true;  // drop for text-only reasoner backends
};

struct ReasoningOutput {
    std::string think_trace;
    std::string answer_text;
    std::string raw;
};

struct McqAnswer {
    char label = 'A';  // 'A'..'F'
};

inline char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

// Assembles the Stage III request: image (optional), description, keywords,
// search summary (omitted entirely for the empty sentinel), the task, and
// the think-marker instruction.
inline ModelRequest build_reasoning_prompt(const ImageInput& image, const Description& description,
                                           const KeywordSet& keywords, const SearchSummary& summary,
                                           const ReasoningTask& task, const ReasoningConfig& cfg = {}) {
    task.validate();
    ModelRequest request;
    request.system_text = prompts::reasoning_system();
    if (cfg.send_image) request.user_parts.emplace_back(ImagePart{image.bytes, image.media_type});

    std::string body = "Image description:\n" + description.text + "\n\nKeywords: " + keywords.joined() + "\n";
    if (!summary.empty()) {
        body += "\nBackground knowledge from research:\n" + summary.text + "\n";
    }
    body += "\nTask:\n";
    if (task.kind == TaskKind::mcq) {
        body += task.question + "\n";
        for (std::size_t i = 0; i < task.options.size(); ++i) {
            body += std::string(1, option_letter(i)) + ". " + task.options[i] + "\n";
        }
        body += "\nThink it through step by step inside " + cfg.think_open + " " + cfg.think_close +
                " markers, connecting the visual cues, the keywords" +
                (summary.empty() ? std::string() : std::string(", the background knowledge")) +
                " and the options. After the closing marker, give your final choice as 'Answer: <letter>'.";
    } else {
        body += task.question + "\n";
        body += "\nThink it through step by step inside " + cfg.think_open + " " + cfg.think_close +
                " markers, connecting the visual cues and the keywords" +
                (summary.empty() ? std::string() : std::string(" and the background knowledge")) +
                ". After the closing marker, write your final interpretation of the image's implication.";
    }
    body += "\n" + prompts::language_directive(task.language);
    request.user_parts.emplace_back(std::move(body));

    const SamplingParams& params = task.kind == TaskKind::mcq ? cfg.mcq : cfg.osq;
    request.temperature = params.temperature;
    request.top_p = params.top_p;
    request.max_output = params.max_output;
    return request;
}

// Total parse of the think-marker convention:
//   - well-formed markers: trace between the first pair, answer after it
//   - unclosed marker: content after the opener split at its last blank
//     line; no blank line -> empty trace, everything is the answer
//   - no markers: empty trace, the raw text is the answer
inline std::pair<std::string, std::string> parse_think_markers(const std::string& raw,
                                                               const std::string& open = "<think>",
                                                               const std::string& close = "</think>") {
    std::size_t open_pos = raw.find(open);
    if (open_pos == std::string::npos) return {std::string(), raw};
    std::size_t content_start = open_pos + open.size();
    std::size_t close_pos = raw.find(close, content_start);
    if (close_pos != std::string::npos) {
        std::string trace = raw.substr(content_start, close_pos - content_start);
        std::string answer = raw.substr(close_pos + close.size());
        return {detail::trim(trace), detail::trim(answer)};
    }
    std::string rest = raw.substr(content_start);
    std::size_t split = rest.rfind("\n\n");
    if (split == std::string::npos) return {std::string(), detail::trim(rest)};
    return {detail::trim(rest.substr(0, split)), detail::trim(rest.substr(split + 2))};
}

// MCQ letter extraction. Fixed pattern priority, each case-insensitive;
// within one pattern the first occurrence wins:
//   1. "Answer: X" (allowing "Answer: (X)" and punctuation after X)
//   2. "(X)"
//   3. standalone "X." / "X" token
inline std::optional<McqAnswer> try_extract_mcq_label(const std::string& answer_text) {
    auto to_label = [](char c) -> std::optional<char> {
        char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (upper >= 'A' && upper <= 'F') return upper;
        return std::nullopt;
    };
    std::string lower = detail::to_lower(answer_text);

    // Pattern 1: "answer" followed by separator then letter.
    for (std::size_t pos = lower.find("answer"); pos != std::string::npos; pos = lower.find("answer", pos + 1)) {
        std::size_t i = pos + 6;
        while (i < lower.size() && (lower[i] == ':' || lower[i] == '=' || lower[i] == ' ' || lower[i] == 'i' ||
                                    lower[i] == 's' || lower[i] == '*' || lower[i] == '(' || lower[i] == '['))
            ++i;
        if (i < lower.size()) {
            bool terminated = i + 1 >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[i + 1]));
            if (terminated) {
                if (auto label = to_label(answer_text[i])) return McqAnswer{*label};
            }
        }
    }

    // Pattern 2: parenthesized letter.
    for (std::size_t i = 0; i + 2 < answer_text.size(); ++i) {
        if (answer_text[i] == '(' && answer_text[i + 2] == ')') {
            if (auto label = to_label(answer_text[i + 1])) return McqAnswer{*label};
        }
    }

    // Pattern 3: standalone letter token ("C." / "C").
    for (std::size_t i = 0; i < answer_text.size(); ++i) {
        auto label = to_label(answer_text[i]);
        if (!label) continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(answer_text[i - 1]));
        bool right_ok = i + 1 >= answer_text.size() || !std::isalnum(static_cast<unsigned char>(answer_text[i + 1]));
        if (left_ok && right_ok) return McqAnswer{*label};
    }
    return std::nullopt;
}

inline McqAnswer extract_mcq_label(const std::string& answer_text) {
    if (auto label = try_extract_mcq_label(answer_text)) return *label;
    throw ExtractionError("no option letter found in answer text");
}

struct ReasoningResult {
    ReasoningOutput output;
    std::optional<McqAnswer> mcq;
};

// Stage III composition: build -> complete -> parse (-> extract for MCQ,
// with one bare-letter reprompt before giving up).
inline ReasoningResult reason(const ImageInput& image, const PerceptionResult& perception,
                              const SearchSummary& summary, const ReasoningTask& task, const RoleClient& client,
                              const ReasoningConfig& cfg = {}) {
    ModelRequest request = build_reasoning_prompt(image, perception.description, perception.keywords, summary,
                                                  task, cfg);
    ReasoningResult result;
    result.output.raw = client(request).text;
    auto [trace, answer] = parse_think_markers(result.output.raw, cfg.think_open, cfg.think_close);
    result.output.think_trace = std::move(trace);
    result.output.answer_text = answer.empty() ? result.output.raw : std::move(answer);

    if (task.kind == TaskKind::mcq) {
        auto label = try_extract_mcq_label(result.output.answer_text);
        if (!label) {
            ModelRequest reprompt = request;
            reprompt.user_parts.emplace_back(
                "Your previous reply was:\n" + result.output.raw +
                "\n\nReply now with only the single option letter (A-F), nothing else.");
            std::string retry = client(reprompt).text;
            label = try_extract_mcq_label(retry);
            if (label) result.output.answer_text = detail::trim(retry);
        }
        if (!label) throw ExtractionError("no option letter even after bare-letter reprompt");
        result.mcq = *label;
    }
    return result;
}

}  // namespace lad
