#ifndef ENGNN_FINITE_DIFF_HPP
#define ENGNN_FINITE_DIFF_HPP

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "engnn/expr.hpp"
#include "engnn/tensor.hpp"

namespace engnn {

/// Named parameter tensors, iterated in name order.
using TensorSet = std::map<std::string, Tensor>;

/// A scalar function of named tensors together with its analytic gradient.
struct ParametricFunction {
    std::function<double(const TensorSet&)> value;
    std::function<TensorSet(const TensorSet&)> gradient;
};

/// Builds the scalar output of an expression given one leaf per parameter name.
using ExprBuilder = std::function<NodeId(ExprGraph&, const std::map<std::string, NodeId>&)>;

/// Wraps an expression builder so value and gradient both come from the
/// recorded graph (forward pass and reverse pass respectively).
inline ParametricFunction expression_function(ExprBuilder build) {
    auto run = [build](const TensorSet& params, bool want_grad) {
        ExprGraph expr;
        std::map<std::string, NodeId> leaves;
        Bindings bindings;
        for (const auto& [name, t] : params) {
            const NodeId id = expr.leaf(t.shape(), name);
            leaves.emplace(name, id);
            bindings.bind(id, t);
        }
        const NodeId out = build(expr, leaves);
        if (!expr.shape(out).empty()) throw ShapeError("parametric function output must be a scalar");
        Values values = evaluate(expr, bindings);
        TensorSet grads;
        if (want_grad) {
            Gradients g = backward(expr, values, Tensor::scalar(1.0), out);
            for (const auto& [name, id] : leaves) grads.emplace(name, std::move(g.at(id)));
        }
        return std::make_pair(values[out].item(), std::move(grads));
    };
    return {
        [run](const TensorSet& p) { return run(p, false).first; },
        [run](const TensorSet& p) { return run(p, true).second; },
    };
}

/// Max over all parameter entries of |analytic - central difference| / max(1, |analytic|).
inline double finite_diff_check(const ParametricFunction& f, const TensorSet& params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    const TensorSet analytic = f.gradient(params);
    TensorSet probe = params;
    double worst = 0.0;
    for (auto& [name, tensor] : probe) {
        const Tensor& grad = analytic.at(name);
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double saved = tensor[i];
            tensor[i] = saved + h;
            const double up = f.value(probe);
            tensor[i] = saved - h;
            const double down = f.value(probe);
            tensor[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NonFiniteError("non-finite value at perturbed entry " + std::to_string(i) + " of '" + name + "'");
            const double numeric = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(grad[i] - numeric) / std::max(1.0, std::abs(grad[i])));
        }
    }
    return worst;
}

}  // namespace engnn

#endif  // ENGNN_FINITE_DIFF_HPP
