// Undirected communication graph between agents.
//
// Agents are numbered 0..M-1. The neighbourhood of an agent never contains
// the agent itself; code that needs the closed neighbourhood (agent plus
// neighbours, own index first) uses Graph::closed_neighbourhood.

#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "qdmpc/errors.hpp"

namespace qdmpc {

class Graph {
public:
    Graph(int vertex_count, std::vector<std::pair<int, int>> edges)
        : vertex_count_(vertex_count) {
        if (vertex_count <= 0)
            throw DimensionMismatch("graph needs at least one vertex");
        neighbours_.resize(static_cast<std::size_t>(vertex_count));
        std::set<std::pair<int, int>> seen;
        for (auto [i, j] : edges) {
            if (i < 0 || j < 0 || i >= vertex_count || j >= vertex_count)
                throw DimensionMismatch("edge endpoint out of range");
            if (i == j)
                throw DimensionMismatch("self-loops are not allowed");
            auto key = std::minmax(i, j);
            if (!seen.insert(key).second) continue;  // duplicate edge
            edges_.push_back(key);
            neighbours_[static_cast<std::size_t>(i)].push_back(j);
            neighbours_[static_cast<std::size_t>(j)].push_back(i);
        }
        for (auto& nb : neighbours_) std::sort(nb.begin(), nb.end());
        if (!connected())
            throw DisconnectedGraph("graph is not connected");
    }

    int vertex_count() const { return vertex_count_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<int>& neighbours(int i) const {
        return neighbours_[static_cast<std::size_t>(i)];
    }

    /// Own index first, then neighbours in ascending order.
    std::vector<int> closed_neighbourhood(int i) const {
        std::vector<int> out{i};
        const auto& nb = neighbours(i);
        out.insert(out.end(), nb.begin(), nb.end());
        return out;
    }

    /// Largest neighbourhood size, at least 1 even for a single vertex.
    int degree() const {
        std::size_t d = 1;
        for (const auto& nb : neighbours_) d = std::max(d, nb.size());
        return static_cast<int>(d);
    }

private:
    bool connected() const {
        std::vector<char> seen(static_cast<std::size_t>(vertex_count_), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 0;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            ++count;
            for (int w : neighbours_[static_cast<std::size_t>(v)]) {
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    stack.push_back(w);
                }
            }
        }
        return count == vertex_count_;
    }

    int vertex_count_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> neighbours_;
};

}  // namespace qdmpc
