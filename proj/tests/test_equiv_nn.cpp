#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "engnn/equivariant.hpp"
#include "engnn/graph.hpp"

using namespace engnn;

namespace {

using Vec = std::vector<double>;

// Reference forward pass written with plain loops over the named parameters.

Vec ref_linear(const TensorSet& p, const std::string& name, const Vec& x) {
    const Tensor& w = p.at(name + ".W");
    const Tensor& b = p.at(name + ".b");
    Vec y(w.dim(1));
    for (std::size_t o = 0; o < y.size(); ++o) {
        y[o] = b[o];
        for (std::size_t i = 0; i < x.size(); ++i) y[o] += x[i] * w.at(i, o);
    }
    return y;
}

Vec relu(Vec v) {
    for (double& x : v) x = std::max(0.0, x);
    return v;
}

Vec ref_mlp(const TensorSet& p, const std::string& prefix, Vec x) {
    std::size_t depth = 0;
    while (p.count(prefix + "." + std::to_string(depth) + ".W")) ++depth;
    for (std::size_t i = 0; i < depth; ++i) {
        x = ref_linear(p, prefix + "." + std::to_string(i), x);
        if (i + 1 < depth) x = relu(x);
    }
    return x;
}

Vec ref_deepset(const TensorSet& p, const std::string& prefix, const std::vector<Vec>& members, std::size_t hidden) {
    Vec sum(hidden, 0.0);
    for (const Vec& m : members) {
        const Vec h = ref_mlp(p, prefix + ".inner", m);
        for (std::size_t i = 0; i < hidden; ++i) sum[i] += h[i];
    }
    return ref_mlp(p, prefix + ".outer", sum);
}

Vec cat(Vec a, const Vec& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

struct RefState {
    std::vector<Vec> x;                // [k][d]
    std::vector<std::vector<Vec>> z;   // [k][C][L]
};

RefState ref_state(const DualState& s) {
    const std::size_t k = s.x.dim(0), d = s.x.dim(1), l = s.z.dim(1), c = s.z.dim(2);
    RefState r;
    r.x.assign(k, Vec(d));
    r.z.assign(k, std::vector<Vec>(c, Vec(l)));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) r.x[i][j] = s.x.at(i, j);
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) r.z[i][ch][j] = s.z[(i * l + j) * c + ch];
    }
    return r;
}

// sets[i] lists the elements whose encodings are summed for element i.
RefState ref_aggregate(const TensorSet& p, const std::string& prefix, const AggrDims& dims, const RefState& in,
                       const std::vector<std::vector<std::size_t>>& sets) {
    const std::size_t k = in.x.size(), c = in.z.front().size();
    std::vector<Vec> psi(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<Vec> column;
        for (std::size_t i = 0; i < k; ++i) column.push_back(in.z[i][ch]);
        psi[ch] = ref_deepset(p, prefix + ".psi", column, dims.l0);
    }
    std::vector<std::vector<Vec>> z1(k, std::vector<Vec>(c));
    std::vector<Vec> x0(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) z1[i][ch] = cat(in.z[i][ch], psi[ch]);
        x0[i] = cat(ref_deepset(p, prefix + ".phi", z1[i], dims.l1), in.x[i]);
    }
    RefState out;
    out.z = in.z;
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<Vec> members;
        for (std::size_t j : sets[i]) members.push_back(x0[j]);
        const Vec gate = cat(ref_deepset(p, prefix + ".varphi", members, dims.d1), x0[i]);
        out.x.push_back(ref_mlp(p, prefix + ".g", gate));
        if (!dims.with_h) continue;
        const Tensor& wn = p.at(prefix + ".h.0.Wn");
        const Tensor& wz = p.at(prefix + ".h.0.Wz");
        const Tensor& b = p.at(prefix + ".h.0.b");
        for (std::size_t ch = 0; ch < c; ++ch) {
            Vec pre(b.size());
            for (std::size_t o = 0; o < pre.size(); ++o) {
                pre[o] = b[o];
                for (std::size_t q = 0; q < gate.size(); ++q) pre[o] += gate[q] * wn.at(q, o);
                for (std::size_t q = 0; q < z1[i][ch].size(); ++q) pre[o] += z1[i][ch][q] * wz.at(q, o);
            }
            out.z[i][ch] = ref_linear(p, prefix + ".h.1", relu(pre));
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> whole_set(std::size_t k) {
    std::vector<std::size_t> all(k);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return std::vector<std::vector<std::size_t>>(k, all);
}

double worst_against(const DualState& got, const RefState& want) {
    double worst = 0.0;
    const std::size_t k = want.x.size(), c = want.z.front().size(), l = want.z.front().front().size();
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < want.x[i].size(); ++j)
            worst = std::max(worst, std::abs(got.x.at(i, j) - want.x[i][j]) / std::max(1.0, std::abs(want.x[i][j])));
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double w = want.z[i][ch][j];
                worst = std::max(worst, std::abs(got.z[(i * l + j) * c + ch] - w) / std::max(1.0, std::abs(w)));
            }
    }
    return worst;
}

AggrDims small_dims(std::size_t d_in, std::size_t l_in, bool with_h = true) {
    AggrDims dims;
    dims.d_in = d_in;
    dims.l_in = l_in;
    dims.l0 = 3;
    dims.l1 = 4;
    dims.d1 = 5;
    dims.d_out = 6;
    dims.l_out = 2;
    dims.with_h = with_h;
    return dims;
}

DualState random_state(std::size_t k, std::size_t d, std::size_t l, std::size_t c, Rng& rng) {
    DualState s{Tensor(Shape{k, d}), Tensor(Shape{k, l, c})};
    for (double& v : s.x.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : s.z.data()) v = rng.uniform(-1.0, 1.0);
    return s;
}

// Node i moves to node_perm[i]; channel c moves to chan_perm[c].
DualState relabel_state(const DualState& s, std::span<const std::size_t> node_perm,
                        std::span<const std::size_t> chan_perm) {
    const std::size_t k = s.x.dim(0), d = s.x.dim(1), l = s.z.dim(1), c = s.z.dim(2);
    DualState out{Tensor(s.x.shape()), Tensor(s.z.shape())};
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) out.x.at(node_perm[i], j) = s.x.at(i, j);
        for (std::size_t j = 0; j < l; ++j)
            for (std::size_t ch = 0; ch < c; ++ch)
                out.z[(node_perm[i] * l + j) * c + chan_perm[ch]] = s.z[(i * l + j) * c + ch];
    }
    return out;
}

double state_residual(const DualState& a, const DualState& b) {
    return std::max(max_relative_difference(a.x, b.x), max_relative_difference(a.z, b.z));
}

Graph graph_with_features(std::size_t n, double p, std::size_t d, std::uint64_t seed) {
    Graph g = gen_erdos_renyi(n, p, seed);
    Rng rng(derive_seed(seed, 99));
    Tensor x(Shape{n, d});
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
    g.set_features(std::move(x));
    return g;
}

}  // namespace

TEST(DeepSet, HandComputedValue) {
    TensorSet p;
    p["s.inner.0.W"] = Tensor::matrix(1, 1, {1.0});
    p["s.inner.0.b"] = Tensor(Shape{1}, {0.0});
    p["s.inner.1.W"] = Tensor::matrix(1, 1, {1.0});
    p["s.inner.1.b"] = Tensor(Shape{1}, {0.0});
    p["s.outer.0.W"] = Tensor::matrix(1, 1, {2.0});
    p["s.outer.0.b"] = Tensor(Shape{1}, {1.0});
    p["s.outer.1.W"] = Tensor::matrix(1, 1, {1.0});
    p["s.outer.1.b"] = Tensor(Shape{1}, {0.0});
    ExprGraph e;
    Bindings b;
    ParamLeaves leaves(e, p, b);
    Segments one;
    one.source_rows = 3;
    const std::vector<std::size_t> rows{0, 1, 2};
    one.push_segment(rows);
    const NodeId out =
        deepset(e, leaves, "s", e.constant(Tensor::matrix(3, 1, {1.0, 2.0, 3.0})), std::make_shared<Segments>(one));
    // inner is the identity on positives, so the sum is 6 and outer gives 2*6+1.
    EXPECT_DOUBLE_EQ(evaluate(e, b)[out][0], 13.0);
}

TEST(DeepSet, InvariantToMemberOrder) {
    Rng rng(4);
    TensorSet p;
    init_deepset(p, "s", 3, 8, 5, rng);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + trial % 7;
        Tensor members(Shape{k, 3});
        for (double& v : members.data()) v = rng.uniform(-2.0, 2.0);
        const auto perm = rng.permutation(k);
        Tensor shuffled(members.shape());
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < 3; ++j) shuffled.at(perm[i], j) = members.at(i, j);
        auto run = [&](const Tensor& m) {
            ExprGraph e;
            Bindings b;
            ParamLeaves leaves(e, p, b);
            Segments s;
            s.source_rows = k;
            std::vector<std::size_t> all(k);
            std::iota(all.begin(), all.end(), std::size_t{0});
            s.push_segment(all);
            const NodeId out = deepset(e, leaves, "s", e.constant(m), std::make_shared<Segments>(s));
            return evaluate(e, b)[out];
        };
        EXPECT_LT(max_relative_difference(run(members), run(shuffled)), 1e-12);
    }
}

TEST(Aggr, MatchesLoopReference) {
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        Rng rng(derive_seed(11, trial));
        const std::size_t k = 1 + trial % 5, c = 1 + trial % 3;
        const AggrDims dims = small_dims(2, 3, trial % 2 == 0);
        TensorSet p;
        init_aggr(p, "a", dims, rng);
        const DualState s = random_state(k, 2, 3, c, rng);
        const DualState got = aggr_forward(p, "a", dims, s);
        ASSERT_EQ(got.x.shape(), (Shape{k, dims.d_out}));
        ASSERT_EQ(got.z.shape(), (Shape{k, dims.with_h ? dims.l_out : dims.l_in, c}));
        EXPECT_LT(worst_against(got, ref_aggregate(p, "a", dims, ref_state(s), whole_set(k))), 1e-12);
    }
}

TEST(Aggr, SingleElementSingleChannel) {
    Rng rng(2);
    const AggrDims dims = small_dims(1, 1);
    TensorSet p;
    init_aggr(p, "a", dims, rng);
    const DualState s{Tensor::matrix(1, 1, {0.25}), Tensor(Shape{1, 1, 1}, {-0.5})};
    EXPECT_LT(worst_against(aggr_forward(p, "a", dims, s), ref_aggregate(p, "a", dims, ref_state(s), whole_set(1))),
              1e-12);
}

TEST(Aggr, EquivariantUnderNodeAndChannelPermutations) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(12, trial));
        const std::size_t k = 1 + rng.below(30), c = 1 + rng.below(8);
        const AggrDims dims = small_dims(3, 2);
        TensorSet p;
        init_aggr(p, "a", dims, rng);
        const DualState s = random_state(k, 3, 2, c, rng);
        const auto np = rng.permutation(k), cp = rng.permutation(c);
        const DualState lhs = aggr_forward(p, "a", dims, relabel_state(s, np, cp));
        const DualState rhs = relabel_state(aggr_forward(p, "a", dims, s), np, cp);
        worst = std::max(worst, state_residual(lhs, rhs));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Aggr, IdenticalElementsGetIdenticalOutputs) {
    Rng rng(3);
    const AggrDims dims = small_dims(2, 2);
    TensorSet p;
    init_aggr(p, "a", dims, rng);
    DualState s = random_state(4, 2, 2, 3, rng);
    for (std::size_t j = 0; j < 2; ++j) s.x.at(3, j) = s.x.at(1, j);
    for (std::size_t j = 0; j < 2 * 3; ++j) s.z[3 * 6 + j] = s.z[1 * 6 + j];
    const DualState out = aggr_forward(p, "a", dims, s);
    for (std::size_t j = 0; j < dims.d_out; ++j) EXPECT_EQ(out.x.at(1, j), out.x.at(3, j));
    const std::size_t row = dims.l_out * 3;
    for (std::size_t j = 0; j < row; ++j) EXPECT_EQ(out.z[row + j], out.z[3 * row + j]);
}

TEST(Aggr, RejectsMismatchedState) {
    Rng rng(1);
    const AggrDims dims = small_dims(2, 2);
    TensorSet p;
    init_aggr(p, "a", dims, rng);
    EXPECT_THROW(aggr_forward(p, "a", dims, random_state(3, 1, 2, 2, rng)), ShapeError);
    EXPECT_THROW(aggr_forward(p, "a", dims, random_state(3, 2, 3, 2, rng)), ShapeError);
    EXPECT_THROW(aggr_forward(p, "a", dims, DualState{Tensor(Shape{3, 2}), Tensor(Shape{4, 2, 2})}), ShapeError);
}

TEST(MessagePassing, MatchesLoopReferenceWithNeighborSets) {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        Rng rng(derive_seed(21, trial));
        const std::size_t n = 2 + trial % 7, c = 1 + trial % 4;
        const Graph g = graph_with_features(n, 0.4, 2, derive_seed(22, trial));
        const AggrDims dims = small_dims(2, 3);
        TensorSet p;
        init_aggr(p, "m", dims, rng);
        DualState s = random_state(n, 2, 3, c, rng);
        s.x = g.features();
        std::vector<std::vector<std::size_t>> sets(n);
        for (const auto& [u, v] : g.edges()) {
            sets[u].push_back(v);
            sets[v].push_back(u);
        }
        EXPECT_LT(worst_against(mp_layer(p, "m", dims, g, s), ref_aggregate(p, "m", dims, ref_state(s), sets)),
                  1e-12);
    }
}

TEST(MessagePassing, EquivariantUnderRelabelingAndChannelPermutation) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(23, trial));
        const std::size_t n = 1 + rng.below(30), c = 1 + rng.below(8);
        const Graph g = graph_with_features(n, 0.2, 2, derive_seed(24, trial));
        const AggrDims dims = small_dims(2, 2);
        TensorSet p;
        init_aggr(p, "m", dims, rng);
        DualState s = random_state(n, 2, 2, c, rng);
        s.x = g.features();
        const auto np = rng.permutation(n), cp = rng.permutation(c);
        const DualState lhs = mp_layer(p, "m", dims, permute_graph(g, np), relabel_state(s, np, cp));
        const DualState rhs = relabel_state(mp_layer(p, "m", dims, g, s), np, cp);
        worst = std::max(worst, state_residual(lhs, rhs));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(MessagePassing, IsolatedNodeSeesAnEmptyNeighborhood) {
    Rng rng(5);
    const Graph g = Graph::from_edges(3, {{0, 1}});
    const AggrDims dims = small_dims(1, 1);
    TensorSet p;
    init_aggr(p, "m", dims, rng);
    const DualState s = random_state(3, 1, 1, 2, rng);
    const std::vector<std::vector<std::size_t>> sets{{1}, {0}, {}};
    const DualState out = mp_layer(p, "m", dims, g, s);
    EXPECT_LT(worst_against(out, ref_aggregate(p, "m", dims, ref_state(s), sets)), 1e-12);
    for (double v : out.x.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Pool, InvariantToNodeAndChannelPermutations) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(31, trial));
        const std::size_t k = 1 + rng.below(30), c = 1 + rng.below(8);
        const AggrDims dims = small_dims(2, 2, false);
        TensorSet p;
        init_aggr(p, "r", dims, rng);
        const DualState s = random_state(k, 2, 2, c, rng);
        const Tensor a = pool(p, "r", dims, s);
        const Tensor b = pool(p, "r", dims, relabel_state(s, rng.permutation(k), rng.permutation(c)));
        worst = std::max(worst, max_relative_difference(a, b));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Pool, IsTheSumOfAggregatedNodeVectors) {
    Rng rng(6);
    const AggrDims dims = small_dims(2, 2, false);
    TensorSet p;
    init_aggr(p, "r", dims, rng);
    const DualState s = random_state(5, 2, 2, 3, rng);
    const RefState ref = ref_aggregate(p, "r", dims, ref_state(s), whole_set(5));
    const Tensor got = pool(p, "r", dims, s);
    ASSERT_EQ(got.shape(), (Shape{dims.d_out}));
    for (std::size_t j = 0; j < dims.d_out; ++j) {
        double sum = 0.0;
        for (const Vec& x : ref.x) sum += x[j];
        EXPECT_NEAR(got[j], sum, 1e-12 * std::max(1.0, std::abs(sum)));
    }
}

TEST(SubsetHead, MatchesLoopReference) {
    Rng rng(7);
    SubsetHeadDims dims;
    dims.aggr = small_dims(2, 2);
    dims.channel_set = 3;
    dims.out = 4;
    TensorSet p;
    init_subset_head(p, "s", dims, rng);
    const Graph g = graph_with_features(6, 0.5, 2, 8);
    DualState s = random_state(6, 2, 2, 3, rng);
    s.x = g.features();
    const std::vector<std::size_t> subset{4, 1, 2};

    const RefState in = ref_state(s);
    const std::size_t c = 3;
    const RefState global = ref_aggregate(p, "s.aggr", dims.aggr, in, whole_set(6));
    RefState members;
    for (std::size_t v : subset) {
        members.x.push_back(in.x[v]);
        members.z.push_back(in.z[v]);
    }
    const RefState local = ref_aggregate(p, "s.aggr", dims.aggr, members, whole_set(subset.size()));
    auto node_sum = [](const RefState& r) {
        Vec out(r.x.front().size(), 0.0);
        for (const Vec& x : r.x)
            for (std::size_t j = 0; j < x.size(); ++j) out[j] += x[j];
        return out;
    };
    auto channel_sum = [&](const RefState& r, std::size_t ch) {
        Vec out(r.z.front().front().size(), 0.0);
        for (const auto& node : r.z)
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += node[ch][j];
        return out;
    };
    std::vector<Vec> per_channel;
    for (std::size_t ch = 0; ch < c; ++ch) per_channel.push_back(cat(channel_sum(local, ch), channel_sum(global, ch)));
    const Vec want = ref_mlp(p, "s.mlp",
                             cat(cat(node_sum(local), node_sum(global)), ref_deepset(p, "s.channels", per_channel, 3)));

    const Tensor got = subset_head(p, "s", dims, g, subset, s);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12 * std::max(1.0, std::abs(want[j])));
    EXPECT_THROW(subset_head(p, "s", dims, g, std::vector<std::size_t>{}, s), std::invalid_argument);
}

TEST(SubsetHead, InvariantUnderRelabelingAndChannelPermutation) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(41, trial));
        const std::size_t n = 2 + rng.below(29), c = 1 + rng.below(8);
        SubsetHeadDims dims;
        dims.aggr = small_dims(2, 2);
        dims.channel_set = 4;
        dims.out = 3;
        TensorSet p;
        init_subset_head(p, "s", dims, rng);
        const Graph g = graph_with_features(n, 0.2, 2, derive_seed(42, trial));
        DualState s = random_state(n, 2, 2, c, rng);
        s.x = g.features();
        auto order = rng.permutation(n);
        const std::vector<std::size_t> subset(order.begin(), order.begin() + 1 + rng.below(n));
        const auto np = rng.permutation(n), cp = rng.permutation(c);
        std::vector<std::size_t> moved;
        for (std::size_t v : subset) moved.push_back(np[v]);
        const Tensor a = subset_head(p, "s", dims, g, subset, s);
        const Tensor b = subset_head(p, "s", dims, permute_graph(g, np), moved, relabel_state(s, np, cp));
        worst = std::max(worst, max_relative_difference(a, b));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Layout, ChannelRowConversionRoundTrips) {
    Rng rng(9);
    Tensor z(Shape{4, 3, 5});
    for (double& v : z.data()) v = rng.uniform();
    const Tensor rows = to_channel_rows(z);
    ASSERT_EQ(rows.shape(), (Shape{20, 3}));
    EXPECT_EQ(rows.at(2 * 5 + 4, 1), z[(2 * 3 + 1) * 5 + 4]);
    EXPECT_EQ(from_channel_rows(rows, 4, 5), z);
}
