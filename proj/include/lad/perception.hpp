#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"
#include "lad/prompts.hpp"

namespace lad {

using prompts::Language;

inline Language parse_language(const std::string& s) {
    if (s == "en") return Language::en;
    if (s == "zh") return Language::zh;
    throw InvalidInputError("unknown language tag '" + s + "'");
}

struct ImageInput {
    std::string id;
    std::vector<std::uint8_t> bytes;
    std::string media_type;
    Language language = Language::en;

    void validate() const {
        if (bytes.empty()) throw InvalidInputError("image '" + id + "' has no bytes");
        if (media_type.empty()) throw InvalidInputError("image '" + id + "' has no media type");
    }
};

struct Description {
    std::string text;
    std::string image_id;
};

struct KeywordSet {
    std::vector<std::string> keywords;
    std::string image_id;

    std::string joined() const { return detail::join(keywords, "; "); }
};

struct PerceptionResult {
    Description description;
    KeywordSet keywords;
};

struct PerceptionConfig {
    std::size_t description_floor = 50;  // minimum characters
    std::size_t keywords_min = 5;
    std::size_t keywords_max = 9;
    std::size_t keyword_max_words = 8;
    double temperature = 0.5;
    double top_p = 0.9;
    int max_output = 1024;
};

// Completion function the stage operations run against. Bound to one
// pipeline role by the caller.
using RoleClient = std::function<ModelResponse(const ModelRequest&)>;

inline ModelRequest build_describe_request(const ImageInput& image, const PerceptionConfig& cfg) {
    ModelRequest request;
    request.system_text = prompts::describe_system();
    request.user_parts.emplace_back(ImagePart{image.bytes, image.media_type});
    request.user_parts.emplace_back(prompts::describe_user(image.language));
    request.temperature = cfg.temperature;
    request.top_p = cfg.top_p;
    request.max_output = cfg.max_output;
    return request;
}

inline Description describe_image(const ImageInput& image, const RoleClient& client,
                                  const PerceptionConfig& cfg = {}) {
    image.validate();
    ModelRequest request = build_describe_request(image, cfg);
    std::string text;
    try {
        text = client(request).text;
        if (text.size() < cfg.description_floor) text = client(request).text;  // one retry
    } catch (const Error& e) {
        throw PerceptionError(std::string("describe_image: ") + e.what());
    }
    if (text.size() < cfg.description_floor)
        throw TooShortError("description below floor (" + std::to_string(text.size()) + " < " +
                            std::to_string(cfg.description_floor) + ") for image '" + image.id + "'");
    return Description{text, image.id};
}

namespace detail {

// Semicolon-separated single line is the requested format; commas and
// newlines are accepted as drift fallbacks.
inline std::vector<std::string> parse_keyword_items(const std::string& raw) {
    auto lines = lad::detail::split_lines(raw);
    const std::string* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& line : lines) {
        std::size_t n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ';'));
        if (n > best_count) {
            best_count = n;
            best = &line;
        }
    }
    if (best) return lad::detail::split(*best, ';');
    for (const auto& line : lines) {
        if (std::count(line.begin(), line.end(), ',') >= 2) return lad::detail::split(line, ',');
    }
    return lines;
}

}  // namespace detail

// Normalizes raw model output into a keyword list: trim, drop empties and
// over-long items, dedup keeping first occurrence, truncate to the cap.
inline std::vector<std::string> parse_keywords(const std::string& raw, const PerceptionConfig& cfg = {}) {
    std::vector<std::string> items = detail::parse_keyword_items(raw);
    std::vector<std::string> out;
    for (auto& item : items) {
        std::string keyword = lad::detail::trim(item);
        // Strip an enumeration prefix like "3." / "3)" or a bullet, but keep
        // keywords that legitimately start with a number.
        std::size_t digits = 0;
        while (digits < keyword.size() && std::isdigit(static_cast<unsigned char>(keyword[digits]))) ++digits;
        if (digits > 0 && digits < keyword.size() && (keyword[digits] == '.' || keyword[digits] == ')'))
            keyword = lad::detail::trim(keyword.substr(digits + 1));
        else if (!keyword.empty() && (keyword.front() == '-' || keyword.front() == '*'))
            keyword = lad::detail::trim(keyword.substr(1));
        if (keyword.empty()) continue;
        if (lad::detail::word_count(keyword) > cfg.keyword_max_words) continue;
        bool duplicate = false;
        for (const auto& seen : out)
            if (seen == keyword) duplicate = true;
        if (duplicate) continue;
        out.push_back(keyword);
        if (out.size() == cfg.keywords_max) break;
    }
    return out;
}

inline ModelRequest build_keywords_request(const Description& description, Language lang,
                                           const PerceptionConfig& cfg) {
    ModelRequest request;
    request.system_text = prompts::keywords_system();
    request.user_parts.emplace_back(prompts::keywords_user(description.text, lang));
    request.temperature = cfg.temperature;
    request.top_p = cfg.top_p;
    request.max_output = cfg.max_output;
    return request;
}

inline KeywordSet extract_keywords(const Description& description, Language lang, const RoleClient& client,
                                   const PerceptionConfig& cfg = {}) {
    if (description.text.empty()) throw InvalidInputError("empty description");
    ModelRequest request = build_keywords_request(description, lang, cfg);
    std::vector<std::string> keywords = parse_keywords(client(request).text, cfg);
    if (keywords.size() < cfg.keywords_min) {
        // One reprompt, keeping whichever attempt parsed better.
        std::vector<std::string> retry = parse_keywords(client(request).text, cfg);
        if (retry.size() > keywords.size()) keywords = std::move(retry);
        if (keywords.empty()) throw ParseError("no keyword list in model output for '" + description.image_id + "'");
        if (keywords.size() < cfg.keywords_min)
            throw CardinalityError("only " + std::to_string(keywords.size()) + " keywords after reprompt for '" +
                                   description.image_id + "'");
    }
    return KeywordSet{std::move(keywords), description.image_id};
}

inline PerceptionResult run_perception(const ImageInput& image, const RoleClient& client,
                                       const PerceptionConfig& cfg = {}) {
    PerceptionResult result;
    result.description = describe_image(image, client, cfg);
    result.keywords = extract_keywords(result.description, image.language, client, cfg);
    return result;
}

}  // namespace lad
