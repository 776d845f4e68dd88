#ifndef ENGNN_WL_HPP
#define ENGNN_WL_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <vector>

#include "engnn/graph.hpp"
#include "engnn/random.hpp"

namespace engnn {

/// Multiset of node colors: color -> multiplicity.
using ColorHistogram = std::map<std::uint64_t, std::size_t>;

namespace detail {

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return mix_seed(h ^ mix_seed(v)); }

}  // namespace detail

/// Per-node 1-WL colors after `rounds` refinements. Colors are content
/// hashes, so they are comparable across graphs.
inline std::vector<std::uint64_t> wl_node_colors(const Graph& g, std::size_t rounds) {
    const std::size_t n = g.node_count();
    const Tensor& x = g.features();
    std::vector<std::uint64_t> color(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::uint64_t h = 0x5eedULL;
        if (x.dim(1) == 0) {
            h = detail::hash_combine(h, g.degree(v));
        } else {
            for (std::size_t j = 0; j < x.dim(1); ++j) h = detail::hash_combine(h, std::bit_cast<std::uint64_t>(x.at(v, j)));
        }
        color[v] = h;
    }
    std::vector<std::uint64_t> next(n), bag;
    for (std::size_t r = 0; r < rounds; ++r) {
        for (std::size_t v = 0; v < n; ++v) {
            bag.clear();
            for (std::size_t w : g.neighbors(v)) bag.push_back(color[w]);
            std::sort(bag.begin(), bag.end());
            std::uint64_t h = detail::hash_combine(0xc01042ULL, color[v]);
            for (std::uint64_t c : bag) h = detail::hash_combine(h, c);
            next[v] = h;
        }
        color.swap(next);
    }
    return color;
}

inline ColorHistogram wl_colors(const Graph& g, std::size_t rounds) {
    ColorHistogram hist;
    for (std::uint64_t c : wl_node_colors(g, rounds)) ++hist[c];
    return hist;
}

/// True when 1-WL with `rounds` refinements cannot tell the two graphs apart.
inline bool wl_equivalent(const Graph& a, const Graph& b, std::size_t rounds) {
    return a.node_count() == b.node_count() && wl_colors(a, rounds) == wl_colors(b, rounds);
}

}  // namespace engnn

#endif  // ENGNN_WL_HPP
