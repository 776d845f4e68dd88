#ifndef ENGNN_EQUIVARIANT_HPP
#define ENGNN_EQUIVARIANT_HPP

// Channel-equivariant aggregator and the layers built on it.
//
// Storage convention: an invariant state X is a [k x d] matrix; an
// equivariant state Z (logically k x L x C) is held as a [(k*C) x L] matrix
// whose row i*C + c is Z[i, :, c]. Row-wise MLPs on that matrix therefore
// share weights across channels, which is what makes them commute with
// channel permutations.

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "engnn/expr.hpp"
#include "engnn/graph.hpp"
#include "engnn/nn.hpp"

namespace engnn {

/// Segment patterns for a collection of sets ("groups") of elements, each
/// element carrying C channels.
struct SetLayout {
    std::size_t elements = 0;
    std::size_t groups = 0;
    std::size_t channels = 0;
    std::vector<std::size_t> group_of;

    std::shared_ptr<const Segments> channel_rows_to_group_channels;  // (k*C) -> (G*C), sum over members
    std::shared_ptr<const Segments> group_channels_to_channel_rows;  // (G*C) -> (k*C), gather
    std::shared_ptr<const Segments> channel_rows_to_elements;        // (k*C) -> k, sum over channels
    std::shared_ptr<const Segments> elements_to_channel_rows;        // k -> (k*C), gather
    std::shared_ptr<const Segments> channel_rows_to_groups;          // (G*C) -> G, sum over channels
    std::shared_ptr<const Segments> elements_to_groups;              // k -> G, sum over members
    std::shared_ptr<const Segments> groups_to_elements;              // G -> k, gather

    static SetLayout build(std::vector<std::size_t> group_of, std::size_t groups, std::size_t channels) {
        SetLayout s;
        s.elements = group_of.size();
        s.groups = groups;
        s.channels = channels;
        const std::size_t k = s.elements, c = channels;
        std::vector<std::vector<std::size_t>> members(groups);
        for (std::size_t i = 0; i < k; ++i) {
            if (group_of[i] >= groups) throw std::out_of_range("element assigned to a missing group");
            members[group_of[i]].push_back(i);
        }

        Segments to_gc;
        to_gc.source_rows = k * c;
        std::vector<std::size_t> rows;
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t ch = 0; ch < c; ++ch) {
                rows.clear();
                for (std::size_t i : members[g]) rows.push_back(i * c + ch);
                to_gc.push_segment(rows);
            }

        std::vector<std::size_t> gather_gc(k * c), gather_e(k * c), gather_g(k);
        for (std::size_t i = 0; i < k; ++i) {
            gather_g[i] = group_of[i];
            for (std::size_t ch = 0; ch < c; ++ch) {
                gather_gc[i * c + ch] = group_of[i] * c + ch;
                gather_e[i * c + ch] = i;
            }
        }

        Segments to_e;
        to_e.source_rows = k * c;
        for (std::size_t i = 0; i < k; ++i) {
            rows.clear();
            for (std::size_t ch = 0; ch < c; ++ch) rows.push_back(i * c + ch);
            to_e.push_segment(rows);
        }

        Segments gc_to_g;
        gc_to_g.source_rows = groups * c;
        for (std::size_t g = 0; g < groups; ++g) {
            rows.clear();
            for (std::size_t ch = 0; ch < c; ++ch) rows.push_back(g * c + ch);
            gc_to_g.push_segment(rows);
        }

        Segments to_g;
        to_g.source_rows = k;
        for (std::size_t g = 0; g < groups; ++g) to_g.push_segment(members[g]);

        s.channel_rows_to_group_channels = std::make_shared<const Segments>(std::move(to_gc));
        s.group_channels_to_channel_rows =
            std::make_shared<const Segments>(Segments::gather(std::move(gather_gc), groups * c));
        s.channel_rows_to_elements = std::make_shared<const Segments>(std::move(to_e));
        s.elements_to_channel_rows = std::make_shared<const Segments>(Segments::gather(std::move(gather_e), k));
        s.channel_rows_to_groups = std::make_shared<const Segments>(std::move(gc_to_g));
        s.elements_to_groups = std::make_shared<const Segments>(std::move(to_g));
        s.groups_to_elements = std::make_shared<const Segments>(Segments::gather(std::move(gather_g), groups));
        s.group_of = std::move(group_of);
        return s;
    }
};

/// Several graphs packed as one disjoint union.
struct GraphBatch {
    std::size_t graphs = 0;
    std::size_t nodes = 0;
    std::size_t channels = 0;
    std::vector<std::size_t> node_offset;  // graphs + 1 entries
    Tensor features;                       // nodes x d0 model input features
    SetLayout layout;                      // nodes grouped by graph
    std::shared_ptr<const Segments> neighborhoods;

    // Present when built with subsets: members of every graph's subset.
    std::vector<std::size_t> subset_nodes;
    std::optional<SetLayout> subset_layout;
    std::shared_ptr<const Segments> subset_x_gather;  // N -> |U| rows
    std::shared_ptr<const Segments> subset_z_gather;  // (N*C) -> (|U|*C) rows

    static GraphBatch build(std::span<const Graph* const> members, std::size_t channels, bool with_subsets = false) {
        if (members.empty()) throw std::invalid_argument("empty graph batch");
        if (channels == 0) throw std::invalid_argument("graph batch needs at least one channel");
        GraphBatch b;
        b.graphs = members.size();
        b.channels = channels;
        b.node_offset.push_back(0);
        for (const Graph* g : members) b.node_offset.push_back(b.node_offset.back() + g->node_count());
        b.nodes = b.node_offset.back();

        const std::size_t d0 = members.front()->input_features().dim(1);
        b.features = Tensor(Shape{b.nodes, d0});
        std::vector<std::size_t> group_of(b.nodes);
        Segments nbr;
        nbr.source_rows = b.nodes;
        std::vector<std::size_t> rows;
        for (std::size_t gi = 0; gi < members.size(); ++gi) {
            const Graph& g = *members[gi];
            const Tensor x = g.input_features();
            if (x.dim(1) != d0) throw ShapeError("graphs in a batch must share the feature width");
            const std::size_t base = b.node_offset[gi];
            std::copy(x.data().begin(), x.data().end(), b.features.raw() + base * d0);
            for (std::size_t v = 0; v < g.node_count(); ++v) {
                group_of[base + v] = gi;
                rows.clear();
                for (std::size_t w : g.neighbors(v)) rows.push_back(base + w);
                nbr.push_segment(rows);
            }
        }
        b.neighborhoods = std::make_shared<const Segments>(std::move(nbr));
        b.layout = SetLayout::build(std::move(group_of), b.graphs, channels);

        if (with_subsets) {
            std::vector<std::size_t> subset_group, zrows;
            for (std::size_t gi = 0; gi < members.size(); ++gi) {
                const auto& u = members[gi]->subset();
                if (!u || u->empty())
                    throw std::invalid_argument("graph " + std::to_string(gi) + " has no (or an empty) node subset");
                for (std::size_t v : *u) {
                    b.subset_nodes.push_back(b.node_offset[gi] + v);
                    subset_group.push_back(gi);
                }
            }
            for (std::size_t v : b.subset_nodes)
                for (std::size_t ch = 0; ch < channels; ++ch) zrows.push_back(v * channels + ch);
            b.subset_x_gather = std::make_shared<const Segments>(Segments::gather(b.subset_nodes, b.nodes));
            b.subset_z_gather = std::make_shared<const Segments>(Segments::gather(std::move(zrows), b.nodes * channels));
            b.subset_layout = SetLayout::build(std::move(subset_group), b.graphs, channels);
        }
        return b;
    }

    static GraphBatch single(const Graph& g, std::size_t channels, bool with_subsets = false) {
        const Graph* ptr = &g;
        return build(std::span<const Graph* const>(&ptr, 1), channels, with_subsets);
    }
};

/// Widths of one aggregator block. Inputs: X is d_in wide, Z has l_in rows
/// per channel. psi: l_in -> l0, phi: (l_in + l0) -> l1, varphi: (d_in + l1) -> d1,
/// g: d1 + (d_in + l1) -> d_out, h: d1 + (d_in + l1) + (l_in + l0) -> l_out.
struct AggrDims {
    std::size_t d_in = 1, l_in = 1, l0 = 8, l1 = 8, d1 = 16, d_out = 16, l_out = 8;
    bool with_h = true;

    std::size_t x0_width() const { return l1 + d_in; }
    std::size_t z1_width() const { return l_in + l0; }
    std::size_t gate_width() const { return d1 + x0_width(); }
};

/// Expression handles of a paired invariant / equivariant state.
struct DualNodes {
    NodeId x;
    NodeId z;
};

inline void init_aggr(TensorSet& params, const std::string& prefix, const AggrDims& dims, Rng& rng) {
    init_deepset(params, prefix + ".psi", dims.l_in, dims.l0, dims.l0, rng);
    init_deepset(params, prefix + ".phi", dims.z1_width(), dims.l1, dims.l1, rng);
    init_deepset(params, prefix + ".varphi", dims.x0_width(), dims.d1, dims.d1, rng);
    init_mlp(params, prefix + ".g", {dims.gate_width(), dims.d_out, dims.d_out}, rng);
    if (dims.with_h) {
        // First layer of h is stored split into the node-level part (X1 || X0)
        // and the per-channel part (Z1); together they act on the concatenation.
        const double bound = init_bound(dims.gate_width() + dims.z1_width());
        Tensor wn(Shape{dims.gate_width(), dims.l_out}), wz(Shape{dims.z1_width(), dims.l_out}), b(Shape{dims.l_out});
        for (Tensor* t : {&wn, &wz})
            for (double& v : t->data()) v = rng.uniform(-bound, bound);
        params[prefix + ".h.0.Wn"] = std::move(wn);
        params[prefix + ".h.0.Wz"] = std::move(wz);
        params[prefix + ".h.0.b"] = std::move(b);
        init_linear(params, prefix + ".h.1", dims.l_out, dims.l_out, rng);
    }
}

namespace detail {

// h(X1 || X0_i || Z1_{i,:,c}) for every (i, c) row.
inline NodeId apply_h(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, const SetLayout& layout,
                      NodeId gate_input, NodeId z1) {
    const NodeId node_part = e.matmul(gate_input, p[prefix + ".h.0.Wn"]);
    const NodeId spread = e.row_aggregate(node_part, layout.elements_to_channel_rows);
    const NodeId chan_part = e.matmul(z1, p[prefix + ".h.0.Wz"]);
    NodeId pre = e.add(spread, chan_part);
    pre = e.add(pre, e.broadcast(p[prefix + ".h.0.b"], 0, e.shape(pre)[0]));
    return linear(e, p, prefix + ".h.1", e.relu(pre));
}

// Steps shared by AGGR and the message-passing layer. With `neighborhoods`
// null, varphi aggregates each whole group (AGGR); otherwise it aggregates
// the given per-element neighbor sets.
inline DualNodes aggregate(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, const AggrDims& dims,
                           const SetLayout& layout, DualNodes in,
                           const std::shared_ptr<const Segments>& neighborhoods) {
    // 1. channel identifiers psi(Z[:, :, c]), set over elements of the group
    const NodeId psi = deepset(e, p, prefix + ".psi", in.z, layout.channel_rows_to_group_channels);
    const NodeId z1 = e.concat({in.z, e.row_aggregate(psi, layout.group_channels_to_channel_rows)}, 1);
    // 2. node encoding phi(Z1_i), set over channels
    const NodeId phi = deepset(e, p, prefix + ".phi", z1, layout.channel_rows_to_elements);
    const NodeId x0 = e.concat({phi, in.x}, 1);
    // 3. set encoding varphi over the group or over neighbors
    NodeId x1;
    if (neighborhoods) {
        x1 = deepset(e, p, prefix + ".varphi", x0, neighborhoods);
    } else {
        const NodeId per_group = deepset(e, p, prefix + ".varphi", x0, layout.elements_to_groups);
        x1 = e.row_aggregate(per_group, layout.groups_to_elements);
    }
    // 4. outputs
    const NodeId gate_input = e.concat({x1, x0}, 1);
    DualNodes out{mlp(e, p, prefix + ".g", gate_input), in.z};
    if (dims.with_h) out.z = apply_h(e, p, prefix, layout, gate_input, z1);
    return out;
}

}  // namespace detail

/// AGGR over each group of `layout`: (X [k x d_in], Z [(k*C) x l_in]) ->
/// (X' [k x d_out], Z' [(k*C) x l_out]). Z' is left as the input when dims.with_h is false.
inline DualNodes aggr_forward(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, const AggrDims& dims,
                              const SetLayout& layout, DualNodes in) {
    return detail::aggregate(e, p, prefix, dims, layout, in, nullptr);
}

/// Message-passing layer: AGGR steps with varphi over each node's neighbors.
/// Per-node work is shared across neighbors, so the neighbor sum is the
/// only step that touches edges.
inline DualNodes mp_layer(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, const AggrDims& dims,
                          const GraphBatch& batch, DualNodes in) {
    return detail::aggregate(e, p, prefix, dims, batch.layout, in, batch.neighborhoods);
}

/// Graph readout: X' = AGGR(X, Z), h_G = sum_i X'_i. Output [graphs x d_out].
inline NodeId pool(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, AggrDims dims,
                   const SetLayout& layout, DualNodes in) {
    dims.with_h = false;
    const DualNodes out = detail::aggregate(e, p, prefix, dims, layout, in, nullptr);
    return e.row_aggregate(out.x, layout.elements_to_groups);
}

/// Widths of the node-subset readout.
struct SubsetHeadDims {
    AggrDims aggr;               // shared by the global and the subset aggregation
    std::size_t channel_set = 8; // DeepSet over channels of (Z_U || Z_G)
    std::size_t out = 16;
};

inline void init_subset_head(TensorSet& params, const std::string& prefix, SubsetHeadDims dims, Rng& rng) {
    dims.aggr.with_h = true;
    init_aggr(params, prefix + ".aggr", dims.aggr, rng);
    init_deepset(params, prefix + ".channels", 2 * dims.aggr.l_out, dims.channel_set, dims.channel_set, rng);
    init_mlp(params, prefix + ".mlp", {2 * dims.aggr.d_out + dims.channel_set, dims.out, dims.out}, rng);
}

/// h_U = MLP(X_U || X_G || DeepSet_C(Z_U || Z_G)), one row per graph.
inline NodeId subset_head(ExprGraph& e, const ParamLeaves& p, const std::string& prefix, SubsetHeadDims dims,
                          const GraphBatch& batch, DualNodes in) {
    if (!batch.subset_layout) throw std::invalid_argument("subset head needs a batch built with subsets");
    dims.aggr.with_h = true;
    const SetLayout& all = batch.layout;
    const SetLayout& sub = *batch.subset_layout;

    const DualNodes global = detail::aggregate(e, p, prefix + ".aggr", dims.aggr, all, in, nullptr);
    const NodeId xg = e.row_aggregate(global.x, all.elements_to_groups);
    const NodeId zg = e.row_aggregate(global.z, all.channel_rows_to_group_channels);

    const DualNodes members{e.row_aggregate(in.x, batch.subset_x_gather), e.row_aggregate(in.z, batch.subset_z_gather)};
    const DualNodes local = detail::aggregate(e, p, prefix + ".aggr", dims.aggr, sub, members, nullptr);
    const NodeId xu = e.row_aggregate(local.x, sub.elements_to_groups);
    const NodeId zu = e.row_aggregate(local.z, sub.channel_rows_to_group_channels);

    const NodeId chan = deepset(e, p, prefix + ".channels", e.concat({zu, zg}, 1), all.channel_rows_to_groups);
    return mlp(e, p, prefix + ".mlp", e.concat({xu, xg, chan}, 1));
}

// --- concrete-tensor entry points -------------------------------------------

/// Invariant state [k x d] and equivariant state [k x L x C] as plain tensors.
struct DualState {
    Tensor x;
    Tensor z;
};

/// [k x L x C] -> [(k*C) x L]
inline Tensor to_channel_rows(const Tensor& z) {
    if (z.rank() != 3) throw ShapeError("equivariant state must be k x L x C, got " + shape_string(z.shape()));
    const std::size_t k = z.dim(0), l = z.dim(1), c = z.dim(2);
    Tensor out(Shape{k * c, l});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) out.at(i * c + ch, j) = z[(i * l + j) * c + ch];
    return out;
}

/// [(k*C) x L] -> [k x L x C]
inline Tensor from_channel_rows(const Tensor& rows, std::size_t k, std::size_t c) {
    const std::size_t l = rows.dim(1);
    Tensor out(Shape{k, l, c});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) out[(i * l + j) * c + ch] = rows.at(i * c + ch, j);
    return out;
}

/// Relabels a state: node i moves to node_perm[i], channel c to chan_perm[c].
inline DualState permute_state(const DualState& s, std::span<const std::size_t> node_perm,
                               std::span<const std::size_t> chan_perm) {
    const std::size_t k = s.x.dim(0), d = s.x.dim(1), l = s.z.dim(1), c = s.z.dim(2);
    if (node_perm.size() != k || chan_perm.size() != c) throw ShapeError("permutation sizes do not match the state");
    DualState out{Tensor(s.x.shape()), Tensor(s.z.shape())};
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) out.x.at(node_perm[i], j) = s.x.at(i, j);
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch)
                out.z[(node_perm[i] * l + j) * c + chan_perm[ch]] = s.z[(i * l + j) * c + ch];
    }
    return out;
}

namespace detail {

template <typename Fn>
Values run_with_state(const TensorSet& params, const DualState& state, Fn&& body, NodeId& result_x, NodeId& result_z) {
    ExprGraph e;
    Bindings b;
    ParamLeaves p(e, params, b);
    const DualNodes in{e.constant(state.x), e.constant(to_channel_rows(state.z))};
    const DualNodes out = body(e, p, in);
    result_x = out.x;
    result_z = out.z;
    return evaluate(e, b);
}

inline void check_state(const DualState& s, const AggrDims& dims) {
    if (s.x.rank() != 2 || s.z.rank() != 3 || s.x.dim(0) != s.z.dim(0))
        throw ShapeError("dual state needs X [k x d] and Z [k x L x C] with equal k");
    if (s.x.dim(1) != dims.d_in || s.z.dim(1) != dims.l_in)
        throw ShapeError("dual state widths " + shape_string(s.x.shape()) + ", " + shape_string(s.z.shape()) +
                         " do not match aggregator input widths");
}

}  // namespace detail

/// AGGR applied to one set of k elements.
inline DualState aggr_forward(const TensorSet& params, const std::string& prefix, const AggrDims& dims,
                              const DualState& state) {
    detail::check_state(state, dims);
    const std::size_t k = state.x.dim(0), c = state.z.dim(2);
    const SetLayout layout = SetLayout::build(std::vector<std::size_t>(k, 0), 1, c);
    NodeId ox = 0, oz = 0;
    Values v = detail::run_with_state(
        params, state, [&](ExprGraph& e, const ParamLeaves& p, DualNodes in) {
            return aggr_forward(e, p, prefix, dims, layout, in);
        },
        ox, oz);
    return {v[ox], from_channel_rows(v[oz], k, c)};
}

inline DualState mp_layer(const TensorSet& params, const std::string& prefix, const AggrDims& dims, const Graph& g,
                          const DualState& state) {
    detail::check_state(state, dims);
    if (state.x.dim(0) != g.node_count()) throw ShapeError("state rows must equal the node count");
    const std::size_t c = state.z.dim(2);
    const GraphBatch batch = GraphBatch::single(g, c);
    NodeId ox = 0, oz = 0;
    Values v = detail::run_with_state(
        params, state, [&](ExprGraph& e, const ParamLeaves& p, DualNodes in) {
            return mp_layer(e, p, prefix, dims, batch, in);
        },
        ox, oz);
    return {v[ox], from_channel_rows(v[oz], g.node_count(), c)};
}

/// Graph vector h_G [d_out].
inline Tensor pool(const TensorSet& params, const std::string& prefix, const AggrDims& dims, const DualState& state) {
    detail::check_state(state, dims);
    if (state.x.dim(0) == 0) throw std::invalid_argument("pooling needs at least one node");
    const std::size_t k = state.x.dim(0), c = state.z.dim(2);
    const SetLayout layout = SetLayout::build(std::vector<std::size_t>(k, 0), 1, c);
    NodeId ox = 0, oz = 0;
    Values v = detail::run_with_state(
        params, state, [&](ExprGraph& e, const ParamLeaves& p, DualNodes in) {
            return DualNodes{pool(e, p, prefix, dims, layout, in), in.z};
        },
        ox, oz);
    Tensor out = v[ox];
    out.reshape(Shape{dims.d_out});
    return out;
}

/// Subset vector h_U [dims.out] for node subset U of g.
inline Tensor subset_head(const TensorSet& params, const std::string& prefix, const SubsetHeadDims& dims,
                          const Graph& g, std::span<const std::size_t> subset, const DualState& state) {
    detail::check_state(state, dims.aggr);
    if (subset.empty()) throw std::invalid_argument("subset head needs a non-empty node subset");
    Graph with_subset = g;
    with_subset.set_subset(std::vector<std::size_t>(subset.begin(), subset.end()));
    const GraphBatch batch = GraphBatch::single(with_subset, state.z.dim(2), true);
    NodeId ox = 0, oz = 0;
    Values v = detail::run_with_state(
        params, state, [&](ExprGraph& e, const ParamLeaves& p, DualNodes in) {
            return DualNodes{subset_head(e, p, prefix, dims, batch, in), in.z};
        },
        ox, oz);
    Tensor out = v[ox];
    out.reshape(Shape{dims.out});
    return out;
}

}  // namespace engnn

#endif  // ENGNN_EQUIVARIANT_HPP
