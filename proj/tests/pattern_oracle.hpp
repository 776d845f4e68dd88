#ifndef ENGNN_TESTS_PATTERN_ORACLE_HPP
#define ENGNN_TESTS_PATTERN_ORACLE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "engnn/graph.hpp"
#include "engnn/patterns.hpp"

namespace engnn::oracle {

// Pattern definitions written out independently of the library's tables.
struct OraclePattern {
    PatternKind kind;
    std::size_t k;
    std::vector<std::pair<int, int>> edges;
    bool induced;
};

inline std::vector<OraclePattern> oracle_patterns() {
    return {
        {PatternKind::C3, 3, {{0, 1}, {1, 2}, {0, 2}}, false},
        {PatternKind::C4, 4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, false},
        {PatternKind::C5, 5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}, false},
        {PatternKind::C6, 6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}}, false},
        {PatternKind::TailedTriangle, 4, {{0, 1}, {1, 2}, {0, 2}, {0, 3}}, false},
        {PatternKind::ChordalCycle, 4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 3}}, true},
        {PatternKind::Clique4, 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, true},
        {PatternKind::Path4, 5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, false},
        {PatternKind::TriangleRectangle, 5, {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {3, 4}, {1, 4}}, false},
    };
}

// Naive count: for every k-subset S of V, the number of distinct edge sets
// on S that form a copy of the pattern (distinct images of the pattern's edge
// set under all bijections pattern -> S). Each copy is credited to every node of S.
inline std::vector<std::int64_t> naive_counts(const Graph& g, const OraclePattern& p) {
    const std::size_t n = g.node_count(), k = p.k;
    std::vector<std::int64_t> counts(n, 0);
    std::vector<std::size_t> subset(k);
    std::vector<bool> choose(n, false);
    std::fill(choose.end() - static_cast<std::ptrdiff_t>(std::min(k, n)), choose.end(), true);
    if (k > n) return counts;
    do {
        std::size_t j = 0;
        for (std::size_t v = 0; v < n; ++v)
            if (choose[v]) subset[j++] = v;
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> images;
        do {
            bool ok = true;
            std::vector<std::vector<bool>> in_pattern(k, std::vector<bool>(k, false));
            for (auto [a, b] : p.edges) in_pattern[a][b] = in_pattern[b][a] = true;
            std::vector<std::pair<std::size_t, std::size_t>> image;
            for (std::size_t a = 0; a < k && ok; ++a)
                for (std::size_t b = a + 1; b < k && ok; ++b) {
                    const bool edge = g.has_edge(subset[perm[a]], subset[perm[b]]);
                    if (in_pattern[a][b] && !edge) ok = false;
                    if (p.induced && !in_pattern[a][b] && edge) ok = false;
                    if (in_pattern[a][b])
                        image.emplace_back(std::min(subset[perm[a]], subset[perm[b]]),
                                           std::max(subset[perm[a]], subset[perm[b]]));
                }
            if (!ok) continue;
            std::sort(image.begin(), image.end());
            if (std::find(images.begin(), images.end(), image) == images.end()) images.push_back(image);
        } while (std::next_permutation(perm.begin(), perm.end()));
        for (std::size_t v : subset) counts[v] += static_cast<std::int64_t>(images.size());
    } while (std::next_permutation(choose.begin(), choose.end()));
    return counts;
}

}  // namespace engnn::oracle

#endif  // ENGNN_TESTS_PATTERN_ORACLE_HPP
