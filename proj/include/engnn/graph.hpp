#ifndef ENGNN_GRAPH_HPP
#define ENGNN_GRAPH_HPP

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "engnn/random.hpp"
#include "engnn/tensor.hpp"

namespace engnn {

/// Prediction target attached to a graph record. A bare number is a
/// graph-level scalar; an array whose length equals the node count is read
/// as one value per node.
struct Targets {
    std::vector<double> values;
    bool scalar = false;

    friend bool operator==(const Targets&, const Targets&) = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected simple graph in compressed adjacency form.
class Graph {
public:
    Graph() : offsets_{0}, features_(Shape{0, 0}) {}

    /// Builds from an edge list; each unordered pair may appear once in either orientation.
    static Graph from_edges(std::size_t n, std::span<const Edge> edges) {
        std::vector<std::vector<std::size_t>> adj(n);
        for (const auto& [u, v] : edges) {
            if (u >= n || v >= n)
                throw std::invalid_argument("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                            ") out of range for n=" + std::to_string(n));
            if (u == v) throw std::invalid_argument("self-loop at node " + std::to_string(u));
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        Graph g;
        g.n_ = n;
        g.offsets_.assign(1, 0);
        for (std::size_t v = 0; v < n; ++v) {
            auto& row = adj[v];
            std::sort(row.begin(), row.end());
            if (std::adjacent_find(row.begin(), row.end()) != row.end())
                throw std::invalid_argument("duplicate edge at node " + std::to_string(v));
            g.neighbors_.insert(g.neighbors_.end(), row.begin(), row.end());
            g.offsets_.push_back(g.neighbors_.size());
        }
        g.features_ = Tensor(Shape{n, 0});
        return g;
    }

    static Graph from_edges(std::size_t n, std::initializer_list<Edge> edges) {
        std::vector<Edge> e(edges);
        return from_edges(n, std::span<const Edge>(e));
    }

    std::size_t node_count() const noexcept { return n_; }
    std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }

    std::span<const std::size_t> neighbors(std::size_t v) const {
        return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
    }
    std::size_t degree(std::size_t v) const { return offsets_[v + 1] - offsets_[v]; }
    const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    const std::vector<std::size_t>& adjacency() const noexcept { return neighbors_; }

    bool has_edge(std::size_t u, std::size_t v) const {
        auto row = neighbors(u);
        return std::binary_search(row.begin(), row.end(), v);
    }

    /// Each undirected edge once, as (u, v) with u < v, in lexicographic order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(edge_count());
        for (std::size_t u = 0; u < n_; ++u)
            for (std::size_t v : neighbors(u))
                if (u < v) out.emplace_back(u, v);
        return out;
    }

    /// n x d0 feature matrix; d0 may be zero.
    const Tensor& features() const noexcept { return features_; }
    void set_features(Tensor x) {
        if (x.rank() != 2 || x.dim(0) != n_)
            throw ShapeError("features must be " + std::to_string(n_) + " x d, got " + shape_string(x.shape()));
        features_ = std::move(x);
    }

    /// Features as fed to a model: an all-ones column when none are stored.
    Tensor input_features() const {
        if (features_.dim(1) == 0) return Tensor(Shape{n_, 1}, 1.0);
        return features_;
    }

    const std::optional<std::vector<std::size_t>>& subset() const noexcept { return subset_; }
    void set_subset(std::vector<std::size_t> u) {
        std::sort(u.begin(), u.end());
        if (std::adjacent_find(u.begin(), u.end()) != u.end())
            throw std::invalid_argument("subset contains a repeated node");
        if (!u.empty() && u.back() >= n_) throw std::invalid_argument("subset node out of range");
        subset_ = std::move(u);
    }
    void clear_subset() { subset_.reset(); }

    const std::optional<Targets>& targets() const noexcept { return targets_; }
    void set_targets(Targets t) { targets_ = std::move(t); }
    void set_node_targets(std::vector<double> y) { targets_ = Targets{std::move(y), false}; }
    void set_graph_target(double y) { targets_ = Targets{{y}, true}; }

    /// Checks symmetry, loop-freeness, sortedness and id ranges.
    void validate() const {
        if (offsets_.size() != n_ + 1) throw std::invalid_argument("offset array length mismatch");
        for (std::size_t u = 0; u < n_; ++u) {
            auto row = neighbors(u);
            for (std::size_t i = 0; i < row.size(); ++i) {
                const std::size_t v = row[i];
                if (v >= n_) throw std::invalid_argument("neighbor id out of range at node " + std::to_string(u));
                if (v == u) throw std::invalid_argument("self-loop at node " + std::to_string(u));
                if (i > 0 && row[i - 1] >= v) throw std::invalid_argument("unsorted or repeated neighbor list");
                if (!has_edge(v, u)) throw std::invalid_argument("asymmetric adjacency");
            }
        }
        if (features_.rank() != 2 || features_.dim(0) != n_) throw ShapeError("feature matrix row count");
        if (!features_.all_finite()) throw NonFiniteError("non-finite node feature");
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.n_ == b.n_ && a.offsets_ == b.offsets_ && a.neighbors_ == b.neighbors_ &&
               a.features_ == b.features_ && a.subset_ == b.subset_ && a.targets_ == b.targets_;
    }

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
    Tensor features_;
    std::optional<std::vector<std::size_t>> subset_;
    std::optional<Targets> targets_;
};

inline bool is_permutation_of_range(std::span<const std::size_t> perm) {
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) return false;
        seen[p] = true;
    }
    return true;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

/// Relabels node v as perm[v]: adjacency, feature rows, subset and per-node targets.
inline Graph permute_graph(const Graph& g, std::span<const std::size_t> perm) {
    const std::size_t n = g.node_count();
    if (perm.size() != n || !is_permutation_of_range(perm))
        throw std::invalid_argument("node relabeling is not a bijection on [0, n)");
    std::vector<Edge> edges;
    for (const auto& [u, v] : g.edges()) edges.emplace_back(perm[u], perm[v]);
    Graph out = Graph::from_edges(n, std::span<const Edge>(edges));

    const Tensor& x = g.features();
    Tensor px(x.shape());
    const std::size_t d = x.dim(1);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t j = 0; j < d; ++j) px.at(perm[v], j) = x.at(v, j);
    out.set_features(std::move(px));

    if (g.subset()) {
        std::vector<std::size_t> u;
        for (std::size_t v : *g.subset()) u.push_back(perm[v]);
        out.set_subset(std::move(u));
    }
    if (g.targets()) {
        Targets t = *g.targets();
        if (!t.scalar && t.values.size() == n) {
            std::vector<double> relabeled(n);
            for (std::size_t v = 0; v < n; ++v) relabeled[perm[v]] = t.values[v];
            t.values = std::move(relabeled);
        }
        out.set_targets(std::move(t));
    }
    return out;
}

/// G(n, p): every unordered pair is an edge independently with probability p.
inline Graph gen_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("G(n,p) needs n >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("edge probability must lie in [0, 1]");
    Rng rng(seed);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (rng.uniform() < p) edges.emplace_back(u, v);
    return Graph::from_edges(n, std::span<const Edge>(edges));
}

/// Circulant skip-link graph: i ~ i+-1 and i+-skip (mod n). 4-regular.
inline Graph gen_csl(std::size_t n, std::size_t skip) {
    if (n < 8) throw std::invalid_argument("CSL graph needs n >= 8");
    if (skip < 2 || 2 * skip >= n) throw std::invalid_argument("CSL skip must satisfy 2 <= skip < n/2");
    if (std::gcd(n, skip) != 1) throw std::invalid_argument("CSL skip must be coprime to n");
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        edges.emplace_back(i, (i + 1) % n);
        edges.emplace_back(i, (i + skip) % n);
    }
    return Graph::from_edges(n, std::span<const Edge>(edges));
}

/// Dense 0/1 adjacency, row-major n x n.
inline Tensor adjacency_matrix(const Graph& g) {
    const std::size_t n = g.node_count();
    Tensor a(Shape{n, n});
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v : g.neighbors(u)) a.at(u, v) = 1.0;
    return a;
}

}  // namespace engnn

#endif  // ENGNN_GRAPH_HPP
