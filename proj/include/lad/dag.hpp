#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lad/errors.hpp"

namespace lad {

// Sub-question plan for one web search. Edges point from prerequisite to
// dependent: (from, to) means `to` needs `from`'s answer.
struct SubQuestionDag {
    struct Node {
        int id = 0;
        std::string text;
    };

    std::vector<Node> nodes;
    std::vector<std::pair<int, int>> edges;

    bool has_node(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return true;
        return false;
    }

    const Node& node(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return n;
        throw InvalidInputError("dag has no node " + std::to_string(id));
    }

    std::vector<int> predecessors(int id) const {
        std::vector<int> out;
        for (const auto& [from, to] : edges)
            if (to == id) out.push_back(from);
        return out;
    }
};

struct DagLimits {
    int max_nodes = 5;
    int max_depth = 2;
};

// Kahn topological sort. Returns node ids in a deterministic order (smallest
// id first among ready nodes), or nullopt when the graph has a cycle.
inline std::optional<std::vector<int>> topological_order(const SubQuestionDag& dag) {
    std::map<int, int> in_degree;
    for (const auto& n : dag.nodes) in_degree[n.id] = 0;
    for (const auto& [from, to] : dag.edges) {
        if (!in_degree.count(from) || !in_degree.count(to)) continue;
        ++in_degree[to];
    }
    std::set<int> ready;
    for (const auto& [id, deg] : in_degree)
        if (deg == 0) ready.insert(id);
    std::vector<int> order;
    while (!ready.empty()) {
        int id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (const auto& [from, to] : dag.edges) {
            if (from != id || !in_degree.count(to)) continue;
            if (--in_degree[to] == 0) ready.insert(to);
        }
    }
    if (order.size() != dag.nodes.size()) return std::nullopt;
    return order;
}

// Depth = number of levels along the longest dependency chain (a node with
// no prerequisites is at depth 1). Requires an acyclic graph.
inline int dag_depth(const SubQuestionDag& dag) {
    auto order = topological_order(dag);
    if (!order) throw InvalidInputError("dag_depth on cyclic graph");
    std::map<int, int> level;
    int depth = dag.nodes.empty() ? 0 : 1;
    for (int id : *order) {
        int lvl = 1;
        for (int pred : dag.predecessors(id)) lvl = std::max(lvl, level[pred] + 1);
        level[id] = lvl;
        depth = std::max(depth, lvl);
    }
    return depth;
}

struct DagNormalization {
    SubQuestionDag dag;
    std::vector<std::string> warnings;
    bool fell_back = false;  // plan was unusable; dag is the single-node fallback
};

inline SubQuestionDag single_node_dag(const std::string& question_text) {
    SubQuestionDag dag;
    dag.nodes.push_back({1, question_text});
    return dag;
}

// Enforces the structural invariants on a raw planner output:
//   - duplicate node ids / empty node texts dropped
//   - more than max_nodes -> keep the max_nodes smallest ids
//   - edges referencing missing nodes or self-loops dropped
//   - cycles -> single-node fallback with the original question
//   - depth beyond max_depth -> offending edges dropped (deepest first)
inline DagNormalization normalize_dag(SubQuestionDag raw, const std::string& fallback_question,
                                      const DagLimits& limits = {}) {
    DagNormalization result;
    auto& dag = result.dag;

    std::set<int> seen_ids;
    for (auto& node : raw.nodes) {
        if (node.text.empty()) {
            result.warnings.push_back("dropped node " + std::to_string(node.id) + ": empty text");
            continue;
        }
        if (!seen_ids.insert(node.id).second) {
            result.warnings.push_back("dropped duplicate node id " + std::to_string(node.id));
            continue;
        }
        dag.nodes.push_back(std::move(node));
    }

    if (dag.nodes.empty()) {
        result.warnings.push_back("plan had no usable nodes; falling back to the original question");
        result.dag = single_node_dag(fallback_question);
        result.fell_back = true;
        return result;
    }

    if (static_cast<int>(dag.nodes.size()) > limits.max_nodes) {
        std::sort(dag.nodes.begin(), dag.nodes.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        dag.nodes.resize(limits.max_nodes);
        result.warnings.push_back("plan truncated to " + std::to_string(limits.max_nodes) + " nodes");
    }

    for (const auto& [from, to] : raw.edges) {
        if (from == to) {
            result.warnings.push_back("dropped self-loop on node " + std::to_string(from));
            continue;
        }
        if (!dag.has_node(from) || !dag.has_node(to)) {
            result.warnings.push_back("dropped dangling edge " + std::to_string(from) + "->" + std::to_string(to));
            continue;
        }
        if (std::find(dag.edges.begin(), dag.edges.end(), std::make_pair(from, to)) != dag.edges.end()) continue;
        dag.edges.emplace_back(from, to);
    }

    if (!topological_order(dag)) {
        result.warnings.push_back("plan contains a cycle; falling back to the original question");
        result.dag = single_node_dag(fallback_question);
        result.fell_back = true;
        return result;
    }

    while (dag_depth(dag) > limits.max_depth) {
        // Drop incoming edges of the deepest nodes until the bound holds.
        auto order = *topological_order(dag);
        std::map<int, int> level;
        int max_level = 0;
        for (int id : order) {
            int lvl = 1;
            for (int pred : dag.predecessors(id)) lvl = std::max(lvl, level[pred] + 1);
            level[id] = lvl;
            max_level = std::max(max_level, lvl);
        }
        std::vector<std::pair<int, int>> kept;
        for (const auto& edge : dag.edges) {
            if (level[edge.second] == max_level) {
                result.warnings.push_back("dropped edge " + std::to_string(edge.first) + "->" +
                                          std::to_string(edge.second) + ": depth over " +
                                          std::to_string(limits.max_depth));
                continue;
            }
            kept.push_back(edge);
        }
        dag.edges = std::move(kept);
    }

    return result;
}

}  // namespace lad
