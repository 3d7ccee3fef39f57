#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lad/errors.hpp"

namespace lad {

struct Snippet {
    std::string title;
    std::string summary;
    std::string url;
    int sub_question_id = 0;
};

// Syntactic check only: scheme://host with a plausible host.
inline bool is_valid_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || scheme_end == 0) return false;
    for (std::size_t i = 0; i < scheme_end; ++i) {
        char c = url[i];
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
    }
    std::size_t host_start = scheme_end + 3;
    if (host_start >= url.size()) return false;
    std::size_t host_end = url.find_first_of("/?#", host_start);
    std::string host = url.substr(host_start, host_end == std::string::npos ? std::string::npos : host_end - host_start);
    if (host.empty()) return false;
    for (char c : host)
        if (std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

// query -> up to max_results snippets. Live adapters are configuration;
// tests and offline runs use the stub below.
class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual std::vector<Snippet> query(const std::string& query_text, int max_results) = 0;
};

// Deterministic provider. Rules map a query substring to canned snippets;
// unmatched queries get synthesized placeholder results (or a ProviderError
// when synthesis is disabled).
class StubSearchProvider : public SearchProvider {
public:
    struct Rule {
        std::string needle;
        std::vector<Snippet> snippets;
    };

    explicit StubSearchProvider(bool synthesize_unmatched = true) : synthesize_(synthesize_unmatched) {}

    void add_rule(std::string needle, std::vector<Snippet> snippets) {
        std::lock_guard<std::mutex> lock(mu_);
        rules_.push_back({std::move(needle), std::move(snippets)});
    }

    // Queries containing the needle raise ProviderError.
    void fail_on(std::string needle) {
        std::lock_guard<std::mutex> lock(mu_);
        failures_.push_back(std::move(needle));
    }

    // Called once per issued query, with the final (substituted) query text.
    void set_observer(std::function<void(const std::string&)> observer) {
        std::lock_guard<std::mutex> lock(mu_);
        observer_ = std::move(observer);
    }

    std::vector<Snippet> query(const std::string& query_text, int max_results) override {
        std::function<void(const std::string&)> observer;
        {
            std::lock_guard<std::mutex> lock(mu_);
            observer = observer_;
        }
        if (observer) observer(query_text);
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& needle : failures_)
            if (query_text.find(needle) != std::string::npos)
                throw ProviderError("stub provider failure for query: " + query_text);
        for (const auto& rule : rules_) {
            if (query_text.find(rule.needle) != std::string::npos) {
                auto out = rule.snippets;
                if (static_cast<int>(out.size()) > max_results) out.resize(max_results);
                return out;
            }
        }
        if (!synthesize_) throw ProviderError("no stub rule for query: " + query_text);
        std::vector<Snippet> out;
        std::string slug = slugify(query_text);
        for (int i = 0; i < max_results; ++i) {
            Snippet s;
            s.title = "Result " + std::to_string(i + 1) + " for " + query_text;
            s.summary = "Stub summary " + std::to_string(i + 1) + " about: " + query_text;
            s.url = "https://stub.example/" + slug + "/" + std::to_string(i + 1);
            out.push_back(std::move(s));
        }
        return out;
    }

private:
    static std::string slugify(const std::string& text) {
        std::string out;
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            else if (!out.empty() && out.back() != '-')
                out += '-';
        }
        while (!out.empty() && out.back() == '-') out.pop_back();
        if (out.size() > 48) out.resize(48);
        return out;
    }

    bool synthesize_;
    std::mutex mu_;
    std::vector<Rule> rules_;
    std::vector<std::string> failures_;
    std::function<void(const std::string&)> observer_;
};

}  // namespace lad
