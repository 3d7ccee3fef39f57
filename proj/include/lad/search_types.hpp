#pragma once

#include <string>
#include <vector>

namespace lad {

struct SearchQuestion {
    std::string text;
    int level = 1;  // 1 = most literal, 5 = most cultural/contextual
};

enum class SearchRoute { web, model };

inline const char* to_string(SearchRoute route) { return route == SearchRoute::web ? "web" : "model"; }

struct RoutingDecision {
    double confidence = 0.0;
    SearchRoute route = SearchRoute::model;
    std::string rationale;
};

// Pure threshold rule shared by the judge step and the property suite:
// web iff confidence >= threshold (ties go to the web).
inline SearchRoute route_for_confidence(double confidence, double threshold) {
    return confidence >= threshold ? SearchRoute::web : SearchRoute::model;
}

struct QAPair {
    SearchQuestion question;
    std::string answer;
    SearchRoute route = SearchRoute::model;
    std::vector<std::string> citations;  // empty for model route
};

struct RankedSelection {
    std::vector<QAPair> selected;  // size min(3, inputs), scripted order
    std::vector<int> indices;      // 1-based indices into the ranked input
    std::string rationale;
};

struct SearchSummary {
    std::string text;
    std::vector<std::string> sources;

    // Empty-summary sentinel: the whole stage failed or was disabled, and the
    // reasoning prompt must omit the search section entirely.
    bool empty() const { return text.empty(); }
};

}  // namespace lad
