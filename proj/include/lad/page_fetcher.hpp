#pragma once

#include <cstring>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"

namespace lad {

struct PageContent {
    std::string url;
    std::string text;
    bool truncated = false;
};

struct FetchLimits {
    std::size_t page_budget = 4000;  // characters of visible text
    int timeout_seconds = 10;
};

// Strips markup down to visible text: script/style bodies removed, tags
// dropped, the common entities decoded, whitespace collapsed.
inline std::string strip_markup(const std::string& html) {
    std::string text;
    text.reserve(html.size());
    std::size_t i = 0;
    std::string lower = detail::to_lower(html);
    while (i < html.size()) {
        if (html[i] == '<') {
            // script/style: skip through the closing tag
            if (lower.compare(i, 7, "<script") == 0) {
                std::size_t end = lower.find("</script", i);
                i = end == std::string::npos ? html.size() : lower.find('>', end) + 1;
                if (i == 0) i = html.size();
                continue;
            }
            if (lower.compare(i, 6, "<style") == 0) {
                std::size_t end = lower.find("</style", i);
                i = end == std::string::npos ? html.size() : lower.find('>', end) + 1;
                if (i == 0) i = html.size();
                continue;
            }
            std::size_t end = html.find('>', i);
            if (end == std::string::npos) break;
            // Block-level tags act as separators.
            text += ' ';
            i = end + 1;
            continue;
        }
        if (html[i] == '&') {
            static const std::pair<const char*, char> entities[] = {
                {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''}, {"&nbsp;", ' '}};
            bool matched = false;
            for (const auto& [name, ch] : entities) {
                std::size_t n = std::strlen(name);
                if (html.compare(i, n, name) == 0) {
                    text += ch;
                    i += n;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        text += html[i];
        ++i;
    }
    // Collapse whitespace runs.
    std::string out;
    out.reserve(text.size());
    bool in_space = false;
    for (char c : text) {
        if (detail::is_space(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out += ' ';
        in_space = false;
        out += c;
    }
    return out;
}

inline PageContent apply_page_budget(std::string url, std::string text, std::size_t budget) {
    PageContent page;
    page.url = std::move(url);
    if (text.size() > budget) {
        text.resize(budget);
        page.truncated = true;
    }
    page.text = std::move(text);
    return page;
}

// url -> raw body + content type. Implementations throw FetchError.
class PageFetcher {
public:
    struct RawPage {
        std::string body;
        std::string content_type;  // e.g. "text/html"
    };

    virtual ~PageFetcher() = default;
    virtual RawPage fetch(const std::string& url, int timeout_seconds) = 0;
};

class StubPageFetcher : public PageFetcher {
public:
    void add_page(std::string url_substring, std::string body, std::string content_type = "text/html") {
        std::lock_guard<std::mutex> lock(mu_);
        pages_.push_back({std::move(url_substring), std::move(body), std::move(content_type)});
    }

    void fail_on(std::string url_substring) {
        std::lock_guard<std::mutex> lock(mu_);
        failures_.push_back(std::move(url_substring));
    }

    void set_default_body(std::string body) {
        std::lock_guard<std::mutex> lock(mu_);
        default_body_ = std::move(body);
        has_default_ = true;
    }

    RawPage fetch(const std::string& url, int /*timeout_seconds*/) override {
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& needle : failures_)
            if (url.find(needle) != std::string::npos) throw FetchError("stub fetch failure for " + url);
        for (const auto& page : pages_)
            if (url.find(page.needle) != std::string::npos) return {page.body, page.content_type};
        if (has_default_) return {default_body_, "text/html"};
        return {"Stub page body for " + url, "text/plain"};
    }

private:
    struct Page {
        std::string needle;
        std::string body;
        std::string content_type;
    };

    std::mutex mu_;
    std::vector<Page> pages_;
    std::vector<std::string> failures_;
    std::string default_body_;
    bool has_default_ = false;
};

}  // namespace lad
