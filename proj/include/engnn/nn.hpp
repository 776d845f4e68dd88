#ifndef ENGNN_NN_HPP
#define ENGNN_NN_HPP

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "engnn/expr.hpp"
#include "engnn/finite_diff.hpp"
#include "engnn/random.hpp"

namespace engnn {

/// Leaves for a parameter set inside one expression. Every parameter gets a
/// differentiable leaf bound to its current value.
class ParamLeaves {
public:
    ParamLeaves(ExprGraph& expr, const TensorSet& params, Bindings& bindings) {
        for (const auto& [name, t] : params) {
            const NodeId id = expr.leaf(t.shape(), name);
            bindings.bind(id, t);
            ids_.emplace(name, id);
        }
    }

    NodeId operator[](const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw std::out_of_range("no parameter named '" + name + "'");
        return it->second;
    }

    const std::map<std::string, NodeId>& ids() const noexcept { return ids_; }

    /// Re-keys expression gradients by parameter name.
    TensorSet named(Gradients& grads) const {
        TensorSet out;
        for (const auto& [name, id] : ids_) out.emplace(name, std::move(grads.at(id)));
        return out;
    }

private:
    std::map<std::string, NodeId> ids_;
};

/// LeCun-uniform bound sqrt(3 / fan_in), i.e. weight variance 1 / fan_in.
/// The smaller +-1/sqrt(fan_in) default cuts activation variance sixfold per
/// ReLU layer, and after the ~30 stacked layers of a 2-layer model the noise
/// no longer moves the output at all.
inline double init_bound(std::size_t fan_in) {
    return std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
}

/// Linear layer initialisation: weights uniform within init_bound, biases
/// zero. Random biases of the usual +-1/sqrt(fan_in) size swamp the small
/// channel-dependent part of the pre-activations, and training then settles
/// on a noise-independent solution.
inline void init_linear(TensorSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = init_bound(in);
    Tensor w(Shape{in, out});
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b(Shape{out});
    params[name + ".W"] = std::move(w);
    params[name + ".b"] = std::move(b);
}

/// MLP with widths[0] -> ... -> widths.back(); ReLU between layers, linear output.
inline void init_mlp(TensorSet& params, const std::string& prefix, const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        init_linear(params, prefix + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

inline std::size_t mlp_depth(const TensorSet& params, const std::string& prefix) {
    std::size_t depth = 0;
    while (params.count(prefix + "." + std::to_string(depth) + ".W")) ++depth;
    return depth;
}

inline NodeId linear(ExprGraph& expr, const ParamLeaves& p, const std::string& name, NodeId x) {
    const NodeId y = expr.matmul(x, p[name + ".W"]);
    const NodeId b = expr.broadcast(p[name + ".b"], 0, expr.shape(y)[0]);
    return expr.add(y, b);
}

inline NodeId mlp(ExprGraph& expr, const ParamLeaves& p, const std::string& prefix, NodeId x) {
    std::size_t depth = 0;
    while (p.ids().count(prefix + "." + std::to_string(depth) + ".W")) ++depth;
    if (depth == 0) throw std::out_of_range("no MLP named '" + prefix + "'");
    for (std::size_t i = 0; i < depth; ++i) {
        x = linear(expr, p, prefix + "." + std::to_string(i), x);
        if (i + 1 < depth) x = expr.relu(x);
    }
    return x;
}

/// DeepSet parameters: inner MLP in -> hidden -> hidden, outer MLP hidden -> hidden -> out.
inline void init_deepset(TensorSet& params, const std::string& prefix, std::size_t in, std::size_t hidden,
                         std::size_t out, Rng& rng) {
    init_mlp(params, prefix + ".inner", {in, hidden, hidden}, rng);
    init_mlp(params, prefix + ".outer", {hidden, hidden, out}, rng);
}

/// outer(sum over each segment of inner(row)). Rows of `elements` are set
/// members; every segment is one set. An empty set sums to the zero vector.
inline NodeId deepset(ExprGraph& expr, const ParamLeaves& p, const std::string& prefix, NodeId elements,
                      const std::shared_ptr<const Segments>& sets) {
    const NodeId inner = mlp(expr, p, prefix + ".inner", elements);
    return mlp(expr, p, prefix + ".outer", expr.row_aggregate(inner, sets));
}

}  // namespace engnn

#endif  // ENGNN_NN_HPP
