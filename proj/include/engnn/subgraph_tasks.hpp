#ifndef ENGNN_SUBGRAPH_TASKS_HPP
#define ENGNN_SUBGRAPH_TASKS_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "engnn/graph.hpp"
#include "engnn/jsonl.hpp"
#include "engnn/random.hpp"

namespace engnn {

enum class SubgraphTask { Density, CutRatio, Component };

inline std::optional<SubgraphTask> parse_subgraph_task(std::string_view s) {
    if (s == "density") return SubgraphTask::Density;
    if (s == "cutratio") return SubgraphTask::CutRatio;
    if (s == "component") return SubgraphTask::Component;
    return std::nullopt;
}

class SubsetSamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal edge density 2e / (s(s-1)); 0 for subsets of fewer than two nodes.
inline double subset_density(const Graph& g, std::span<const std::size_t> subset) {
    const std::size_t s = subset.size();
    if (s < 2) return 0.0;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j)
            if (g.has_edge(subset[i], subset[j])) ++inside;
    return 2.0 * static_cast<double>(inside) / static_cast<double>(s * (s - 1));
}

/// Boundary edges divided by the number of possible boundary pairs s(n-s).
inline double subset_cut_ratio(const Graph& g, std::span<const std::size_t> subset) {
    const std::size_t s = subset.size(), n = g.node_count();
    if (s == 0 || s == n) return 0.0;
    std::vector<bool> in(n, false);
    for (std::size_t v : subset) in[v] = true;
    std::size_t boundary = 0;
    for (std::size_t v : subset)
        for (std::size_t w : g.neighbors(v))
            if (!in[w]) ++boundary;
    return static_cast<double>(boundary) / static_cast<double>(s * (n - s));
}

/// Connected components of the induced subgraph G[subset].
inline std::size_t subset_components(const Graph& g, std::span<const std::size_t> subset) {
    std::vector<int> state(g.node_count(), 0);  // 0 outside, 1 unvisited member, 2 visited
    for (std::size_t v : subset) state[v] = 1;
    std::size_t comps = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s : subset) {
        if (state[s] != 1) continue;
        ++comps;
        state[s] = 2;
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t w : g.neighbors(v))
                if (state[w] == 1) {
                    state[w] = 2;
                    stack.push_back(w);
                }
        }
    }
    return comps;
}

/// Rank-based quantile buckets: sorted by (value, index), rank r gets class
/// r * classes / N. Class sizes differ by at most one.
inline std::vector<std::size_t> quantile_buckets(std::span<const double> values, std::size_t classes) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::size_t> label(values.size());
    for (std::size_t r = 0; r < order.size(); ++r) label[order[r]] = r * classes / order.size();
    return label;
}

namespace detail {

// Grows a connected node set from `start`. Dense growth prefers the frontier
// node with most links into the set; otherwise frontier nodes are drawn uniformly.
inline std::optional<std::vector<std::size_t>> grow_connected(const Graph& g, std::size_t start, std::size_t size,
                                                             const std::vector<bool>& blocked, bool dense, Rng& rng) {
    std::vector<std::size_t> set{start};
    std::vector<bool> in(g.node_count(), false);
    in[start] = true;
    while (set.size() < size) {
        std::vector<std::size_t> frontier;
        for (std::size_t v : set)
            for (std::size_t w : g.neighbors(v))
                if (!in[w] && !blocked[w] && std::find(frontier.begin(), frontier.end(), w) == frontier.end())
                    frontier.push_back(w);
        if (frontier.empty()) return std::nullopt;
        std::sort(frontier.begin(), frontier.end());
        std::size_t pick = frontier[rng.below(frontier.size())];
        if (dense) {
            std::size_t best = 0;
            for (std::size_t w : frontier) {
                std::size_t links = 0;
                for (std::size_t u : g.neighbors(w)) links += in[u] ? 1 : 0;
                if (links > best) {
                    best = links;
                    pick = w;
                }
            }
        }
        in[pick] = true;
        set.push_back(pick);
    }
    std::sort(set.begin(), set.end());
    return set;
}

}  // namespace detail

/// Subgraph classification records sharing one base graph G(n, 6/n). Each
/// record carries the base graph, one node subset and a 3-class label.
inline Dataset gen_subgraph_task(SubgraphTask kind, std::size_t n, std::size_t num_subgraphs, std::uint64_t seed,
                                 std::size_t max_retries = 200) {
    if (n < 8 || num_subgraphs == 0) throw std::invalid_argument("subgraph task needs n >= 8 and num_subgraphs >= 1");
    const Graph base = gen_erdos_renyi(n, std::min(1.0, 6.0 / static_cast<double>(n)), derive_seed(seed, 0));
    const std::size_t max_size = std::max<std::size_t>(3, std::min<std::size_t>(10, n / 4));

    std::vector<std::vector<std::size_t>> subsets;
    std::vector<double> score;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < num_subgraphs; ++i) {
        Rng rng(derive_seed(seed, 1, i));
        std::optional<std::vector<std::size_t>> found;
        for (std::size_t attempt = 0; attempt < max_retries && !found; ++attempt) {
            if (kind == SubgraphTask::Component) {
                const std::size_t pieces = i % 3 + 1;
                std::vector<bool> blocked(n, false);
                std::vector<std::size_t> u;
                bool ok = true;
                for (std::size_t p = 0; p < pieces && ok; ++p) {
                    const std::size_t start = rng.below(n);
                    if (blocked[start]) {
                        ok = false;
                        break;
                    }
                    auto piece = detail::grow_connected(base, start, 3 + rng.below(3), blocked, false, rng);
                    if (!piece) {
                        ok = false;
                        break;
                    }
                    for (std::size_t v : *piece) {
                        u.push_back(v);
                        blocked[v] = true;
                        for (std::size_t w : base.neighbors(v)) blocked[w] = true;
                    }
                }
                if (!ok) continue;
                std::sort(u.begin(), u.end());
                if (subset_components(base, u) == pieces) found = std::move(u);
            } else {
                const std::size_t size = 3 + rng.below(max_size - 2);
                const bool dense = rng.uniform() < 0.5;
                found = detail::grow_connected(base, rng.below(n), size, std::vector<bool>(n, false), dense, rng);
            }
        }
        if (!found)
            throw SubsetSamplingError("could not sample subset " + std::to_string(i) + " after " +
                                      std::to_string(max_retries) + " attempts on a " + std::to_string(n) +
                                      "-node base graph; a larger base graph leaves more room");
        if (kind == SubgraphTask::Density) score.push_back(subset_density(base, *found));
        if (kind == SubgraphTask::CutRatio) score.push_back(subset_cut_ratio(base, *found));
        if (kind == SubgraphTask::Component) labels.push_back(i % 3);
        subsets.push_back(std::move(*found));
    }
    if (kind != SubgraphTask::Component) labels = quantile_buckets(score, 3);

    Dataset out;
    out.reserve(num_subgraphs);
    for (std::size_t i = 0; i < num_subgraphs; ++i) {
        Graph g = base;
        g.set_subset(subsets[i]);
        g.set_graph_target(static_cast<double>(labels[i]));
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace engnn

#endif  // ENGNN_SUBGRAPH_TASKS_HPP
