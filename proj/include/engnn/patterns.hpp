#ifndef ENGNN_PATTERNS_HPP
#define ENGNN_PATTERNS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "engnn/graph.hpp"

namespace engnn {

/// Substructures of the synthetic counting benchmark.
///
/// Occurrence semantics, per pattern:
///   C3..C6            cycle of that length, non-induced (chords allowed)
///   TailedTriangle    triangle with one pendant edge (4 nodes), non-induced
///   ChordalCycle      4-cycle with exactly one chord (diamond), induced
///   Clique4           K4
///   Path4             path with four edges (5 nodes), non-induced
///   TriangleRectangle triangle sharing an edge with a 4-cycle (house, 5 nodes), non-induced
enum class PatternKind { C3, C4, C5, C6, TailedTriangle, ChordalCycle, Clique4, Path4, TriangleRectangle };

inline constexpr std::array<PatternKind, 9> kAllPatterns = {
    PatternKind::C3,           PatternKind::C4,      PatternKind::C5,    PatternKind::C6,
    PatternKind::TailedTriangle, PatternKind::ChordalCycle, PatternKind::Clique4, PatternKind::Path4,
    PatternKind::TriangleRectangle,
};

inline std::string_view pattern_name(PatternKind k) {
    switch (k) {
        case PatternKind::C3: return "C3";
        case PatternKind::C4: return "C4";
        case PatternKind::C5: return "C5";
        case PatternKind::C6: return "C6";
        case PatternKind::TailedTriangle: return "TailedTriangle";
        case PatternKind::ChordalCycle: return "ChordalCycle";
        case PatternKind::Clique4: return "Clique4";
        case PatternKind::Path4: return "Path4";
        case PatternKind::TriangleRectangle: return "TriangleRectangle";
    }
    return "?";
}

inline std::optional<PatternKind> parse_pattern(std::string_view s) {
    for (PatternKind k : kAllPatterns)
        if (pattern_name(k) == s) return k;
    return std::nullopt;
}

struct PatternSpec {
    std::size_t nodes = 0;
    std::vector<Edge> edges;
    bool induced = false;
};

inline PatternSpec pattern_spec(PatternKind k) {
    auto cycle = [](std::size_t len) {
        PatternSpec p{len, {}, false};
        for (std::size_t i = 0; i < len; ++i) p.edges.emplace_back(i, (i + 1) % len);
        return p;
    };
    switch (k) {
        case PatternKind::C3: return cycle(3);
        case PatternKind::C4: return cycle(4);
        case PatternKind::C5: return cycle(5);
        case PatternKind::C6: return cycle(6);
        case PatternKind::TailedTriangle: return {4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}}, false};
        case PatternKind::ChordalCycle: return {4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}}, true};
        case PatternKind::Clique4: return {4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, true};
        case PatternKind::Path4: return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, false};
        case PatternKind::TriangleRectangle: return {5, {{0, 1}, {1, 2}, {2, 0}, {1, 3}, {3, 4}, {4, 0}}, false};
    }
    throw std::invalid_argument("unknown pattern");
}

/// Largest graph accepted by count_pattern for patterns with five or more nodes.
inline constexpr std::size_t kLargePatternNodeLimit = 64;

namespace detail {

// Backtracking subgraph-embedding enumerator. Pattern vertices are matched
// in BFS order so every vertex after the first has an already-placed anchor.
class EmbeddingCounter {
public:
    EmbeddingCounter(const Graph& pattern, bool induced, const Graph& host)
        : pattern_(pattern), host_(host), induced_(induced), image_(pattern.node_count()),
          used_(host.node_count(), false) {
        const std::size_t k = pattern.node_count();
        std::vector<bool> placed(k, false);
        order_.push_back(0);
        placed[0] = true;
        for (std::size_t head = 0; head < order_.size(); ++head)
            for (std::size_t w : pattern.neighbors(order_[head]))
                if (!placed[w]) {
                    placed[w] = true;
                    order_.push_back(w);
                }
        if (order_.size() != k) throw std::invalid_argument("pattern must be connected");
        position_.assign(k, 0);
        for (std::size_t i = 0; i < k; ++i) position_[order_[i]] = i;
    }

    /// Adds, for every embedding, one to each covered host vertex.
    std::uint64_t run(std::vector<std::uint64_t>& per_node) {
        total_ = 0;
        per_node_ = &per_node;
        for (std::size_t v = 0; v < host_.node_count(); ++v) place(0, v);
        return total_;
    }

private:
    void place(std::size_t depth, std::size_t v) {
        const std::size_t p = order_[depth];
        for (std::size_t q = 0; q < pattern_.node_count(); ++q) {
            if (position_[q] >= depth) continue;
            const bool pattern_edge = pattern_.has_edge(p, q);
            const bool host_edge = host_.has_edge(v, image_[q]);
            if (pattern_edge && !host_edge) return;
            if (induced_ && !pattern_edge && host_edge) return;
        }
        image_[p] = v;
        used_[v] = true;
        if (depth + 1 == order_.size()) {
            ++total_;
            for (std::size_t u : image_) ++(*per_node_)[u];
        } else {
            const std::size_t next = order_[depth + 1];
            std::size_t anchor = next;
            for (std::size_t q : pattern_.neighbors(next))
                if (position_[q] <= depth && (anchor == next || position_[q] < position_[anchor])) anchor = q;
            for (std::size_t w : host_.neighbors(image_[anchor]))
                if (!used_[w]) place(depth + 1, w);
        }
        used_[v] = false;
    }

    const Graph& pattern_;
    const Graph& host_;
    bool induced_;
    std::vector<std::size_t> order_, position_, image_;
    std::vector<bool> used_;
    std::vector<std::uint64_t>* per_node_ = nullptr;
    std::uint64_t total_ = 0;
};

}  // namespace detail

/// Number of automorphisms of a pattern.
inline std::uint64_t pattern_automorphisms(PatternKind k) {
    const PatternSpec spec = pattern_spec(k);
    const Graph p = Graph::from_edges(spec.nodes, std::span<const Edge>(spec.edges));
    std::vector<std::uint64_t> scratch(spec.nodes, 0);
    return detail::EmbeddingCounter(p, true, p).run(scratch);
}

/// Per-node occurrence counts: entry v is the number of distinct copies of
/// the pattern that contain v.
inline std::vector<std::int64_t> count_pattern(const Graph& g, PatternKind k) {
    const PatternSpec spec = pattern_spec(k);
    if (spec.nodes >= 5 && g.node_count() > kLargePatternNodeLimit)
        throw std::length_error(std::string("exhaustive ") + std::string(pattern_name(k)) + " counting limited to " +
                                std::to_string(kLargePatternNodeLimit) + " nodes, graph has " +
                                std::to_string(g.node_count()));
    const Graph p = Graph::from_edges(spec.nodes, std::span<const Edge>(spec.edges));
    std::vector<std::uint64_t> hits(g.node_count(), 0);
    detail::EmbeddingCounter(p, spec.induced, g).run(hits);
    const std::uint64_t aut = pattern_automorphisms(k);
    std::vector<std::int64_t> out(g.node_count());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = static_cast<std::int64_t>(hits[v] / aut);
    return out;
}

/// Total copies in the graph: per-node sum divided by the pattern size.
inline std::int64_t count_pattern_total(const Graph& g, PatternKind k) {
    std::int64_t s = 0;
    for (std::int64_t c : count_pattern(g, k)) s += c;
    return s / static_cast<std::int64_t>(pattern_spec(k).nodes);
}

}  // namespace engnn

#endif  // ENGNN_PATTERNS_HPP
