#ifndef ENGNN_EXPR_HPP
#define ENGNN_EXPR_HPP

// Reverse-mode differentiation over a recorded expression graph.
//
// An ExprGraph is built once (shapes are inferred and checked while building),
// evaluated against a set of leaf bindings, and differentiated with a seed on
// one output node. Nodes are appended in topological order, so a node's inputs
// always have smaller ids.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "engnn/tensor.hpp"

namespace engnn {

using NodeId = std::size_t;

enum class OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    Mul,
    Scale,
    Relu,
    Concat,
    Sum,
    Mean,
    Broadcast,
    Reshape,
    RowAggregate,
    L1Loss,
    SoftmaxCrossEntropy,
};

inline const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::Relu: return "relu";
        case OpKind::Concat: return "concat";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Broadcast: return "broadcast";
        case OpKind::Reshape: return "reshape";
        case OpKind::RowAggregate: return "row_aggregate";
        case OpKind::L1Loss: return "l1_loss";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
}

/// Sparse row-sum pattern: output row i is the sum of input rows
/// indices[offsets[i] .. offsets[i+1]). A segment of length one is a gather,
/// an empty segment yields a zero row.
struct Segments {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    std::size_t source_rows = 0;

    std::size_t output_rows() const { return offsets.size() - 1; }

    void push_segment(std::span<const std::size_t> rows) {
        indices.insert(indices.end(), rows.begin(), rows.end());
        offsets.push_back(indices.size());
    }

    /// Gather pattern: output row r copies input row rows[r].
    static Segments gather(std::vector<std::size_t> rows, std::size_t source_rows) {
        Segments s;
        s.source_rows = source_rows;
        s.offsets.resize(rows.size() + 1);
        for (std::size_t i = 0; i <= rows.size(); ++i) s.offsets[i] = i;
        s.indices = std::move(rows);
        return s;
    }
};

struct OpRecord {
    OpKind kind = OpKind::Leaf;
    std::vector<NodeId> inputs;
    Shape shape;
    std::string name;              // leaves only
    bool differentiable = false;   // leaves: marked by caller; ops: any input differentiable
    std::size_t axis = 0;
    std::size_t count = 0;         // broadcast size
    double scalar = 0.0;           // scale factor
    std::shared_ptr<const Tensor> constant;
    std::shared_ptr<const Segments> segments;
    std::vector<std::size_t> labels;  // class indices for cross-entropy
};

/// Values of every node after a forward pass, indexed by NodeId.
using Values = std::vector<Tensor>;
/// Gradient per differentiable leaf.
using Gradients = std::map<NodeId, Tensor>;

namespace detail {

// Splits a shape around `axis` into (outer, mid, inner) extents.
struct AxisSplit {
    std::size_t outer = 1, mid = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.mid = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MatrixMap(c, M, N).noalias() += ConstMatrixMap(a, M, K) * ConstMatrixMap(b, K, N);
}

// C[m x k] += G[m x n] * B^T  where B is [k x n]
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MatrixMap(c, M, K).noalias() += ConstMatrixMap(g, M, N) * ConstMatrixMap(b, K, N).transpose();
}

// C[k x n] += A^T * G  where A is [m x k], G is [m x n]
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MatrixMap(c, K, N).noalias() += ConstMatrixMap(a, M, K).transpose() * ConstMatrixMap(g, M, N);
}

}  // namespace detail

class ExprGraph {
public:
    std::size_t size() const noexcept { return nodes_.size(); }
    const OpRecord& node(NodeId id) const { return nodes_.at(id); }
    const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
    const std::vector<NodeId>& leaves() const noexcept { return leaves_; }

    /// Input slot to be supplied through Bindings at evaluation time.
    NodeId leaf(Shape shape, std::string name, bool differentiable = true) {
        OpRecord r;
        r.kind = OpKind::Leaf;
        r.shape = std::move(shape);
        r.name = std::move(name);
        r.differentiable = differentiable;
        const NodeId id = push(std::move(r));
        leaves_.push_back(id);
        return id;
    }

    /// Value baked into the graph; never differentiated.
    NodeId constant(Tensor value) {
        OpRecord r;
        r.kind = OpKind::Constant;
        r.shape = value.shape();
        r.constant = std::make_shared<const Tensor>(std::move(value));
        return push(std::move(r));
    }

    NodeId matmul(NodeId a, NodeId b) {
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
            throw ShapeError("matmul " + shape_string(sa) + " x " + shape_string(sb));
        return push_op(OpKind::MatMul, {a, b}, Shape{sa[0], sb[1]});
    }

    NodeId add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }

    NodeId scale(NodeId a, double factor) {
        OpRecord r = make_op(OpKind::Scale, {a}, shape(a));
        r.scalar = factor;
        return push(std::move(r));
    }

    NodeId relu(NodeId a) { return push_op(OpKind::Relu, {a}, shape(a)); }

    NodeId concat(const std::vector<NodeId>& parts, std::size_t axis) {
        if (parts.empty()) throw ShapeError("concat of zero tensors");
        Shape out = shape(parts.front());
        if (axis >= out.size()) throw ShapeError("concat axis out of range for " + shape_string(out));
        out[axis] = 0;
        for (NodeId p : parts) {
            const Shape& s = shape(p);
            if (s.size() != out.size()) throw ShapeError("concat rank mismatch at " + shape_string(s));
            for (std::size_t i = 0; i < s.size(); ++i)
                if (i != axis && s[i] != shape(parts.front())[i])
                    throw ShapeError("concat extent mismatch: " + shape_string(s) + " vs " +
                                     shape_string(shape(parts.front())));
            out[axis] += s[axis];
        }
        OpRecord r = make_op(OpKind::Concat, parts, std::move(out));
        r.axis = axis;
        return push(std::move(r));
    }

    NodeId sum(NodeId a, std::size_t axis) { return reduce(OpKind::Sum, a, axis); }
    NodeId mean(NodeId a, std::size_t axis) { return reduce(OpKind::Mean, a, axis); }

    /// Inserts a new axis of extent `count` at position `axis`, repeating `a` along it.
    NodeId broadcast(NodeId a, std::size_t axis, std::size_t count) {
        Shape out = shape(a);
        if (axis > out.size()) throw ShapeError("broadcast axis out of range for " + shape_string(out));
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(axis), count);
        OpRecord r = make_op(OpKind::Broadcast, {a}, std::move(out));
        r.axis = axis;
        r.count = count;
        return push(std::move(r));
    }

    NodeId reshape(NodeId a, Shape out) {
        if (shape_size(out) != shape_size(shape(a)))
            throw ShapeError("reshape " + shape_string(shape(a)) + " to " + shape_string(out));
        return push_op(OpKind::Reshape, {a}, std::move(out));
    }

    NodeId row_aggregate(NodeId a, std::shared_ptr<const Segments> segments) {
        const Shape& s = shape(a);
        if (s.size() != 2) throw ShapeError("row_aggregate expects a matrix, got " + shape_string(s));
        if (segments->source_rows != s[0])
            throw ShapeError("row_aggregate pattern built for " + std::to_string(segments->source_rows) +
                             " rows applied to " + shape_string(s));
        for (std::size_t idx : segments->indices)
            if (idx >= s[0]) throw ShapeError("row_aggregate index out of range");
        OpRecord r = make_op(OpKind::RowAggregate, {a}, Shape{segments->output_rows(), s[1]});
        r.segments = std::move(segments);
        return push(std::move(r));
    }

    /// Mean absolute error between equally shaped tensors; scalar output.
    NodeId l1_loss(NodeId prediction, NodeId target) {
        if (shape(prediction) != shape(target))
            throw ShapeError("l1_loss " + shape_string(shape(prediction)) + " vs " + shape_string(shape(target)));
        return push_op(OpKind::L1Loss, {prediction, target}, Shape{});
    }

    /// Mean softmax cross-entropy of a [batch x classes] logit matrix.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<std::size_t> labels) {
        const Shape& s = shape(logits);
        if (s.size() != 2 || s[0] != labels.size())
            throw ShapeError("softmax_cross_entropy logits " + shape_string(s) + " with " +
                             std::to_string(labels.size()) + " labels");
        for (std::size_t y : labels)
            if (y >= s[1]) throw std::out_of_range("class index " + std::to_string(y) + " >= " + std::to_string(s[1]));
        OpRecord r = make_op(OpKind::SoftmaxCrossEntropy, {logits}, Shape{});
        r.labels = std::move(labels);
        return push(std::move(r));
    }

private:
    NodeId push(OpRecord r) {
        nodes_.push_back(std::move(r));
        return nodes_.size() - 1;
    }

    OpRecord make_op(OpKind kind, std::vector<NodeId> inputs, Shape out) const {
        OpRecord r;
        r.kind = kind;
        for (NodeId in : inputs) {
            if (in >= nodes_.size()) throw std::out_of_range("unknown expression node " + std::to_string(in));
            r.differentiable = r.differentiable || nodes_[in].differentiable;
        }
        r.inputs = std::move(inputs);
        r.shape = std::move(out);
        return r;
    }

    NodeId push_op(OpKind kind, std::vector<NodeId> inputs, Shape out) {
        return push(make_op(kind, std::move(inputs), std::move(out)));
    }

    NodeId binary(OpKind kind, NodeId a, NodeId b) {
        if (shape(a) != shape(b))
            throw ShapeError(std::string(op_name(kind)) + " " + shape_string(shape(a)) + " vs " +
                             shape_string(shape(b)));
        return push_op(kind, {a, b}, shape(a));
    }

    NodeId reduce(OpKind kind, NodeId a, std::size_t axis) {
        Shape out = shape(a);
        if (axis >= out.size()) throw ShapeError("reduction axis out of range for " + shape_string(out));
        if (kind == OpKind::Mean && out[axis] == 0) throw ShapeError("mean over an empty axis");
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
        OpRecord r = make_op(kind, {a}, std::move(out));
        r.axis = axis;
        return push(std::move(r));
    }

    std::vector<OpRecord> nodes_;
    std::vector<NodeId> leaves_;
};

/// Leaf values for one evaluation.
class Bindings {
public:
    Bindings& bind(NodeId leaf, Tensor value) {
        values_[leaf] = std::move(value);
        return *this;
    }
    const Tensor* find(NodeId leaf) const {
        auto it = values_.find(leaf);
        return it == values_.end() ? nullptr : &it->second;
    }

private:
    std::unordered_map<NodeId, Tensor> values_;
};

namespace detail {

inline Tensor forward_op(const OpRecord& op, const Values& v) {
    Tensor out(op.shape);
    double* o = out.raw();
    switch (op.kind) {
        case OpKind::Leaf:
        case OpKind::Constant:
            break;  // handled by caller
        case OpKind::MatMul: {
            const Tensor& a = v[op.inputs[0]];
            const Tensor& b = v[op.inputs[1]];
            gemm_nn(a.raw(), b.raw(), o, a.dim(0), a.dim(1), b.dim(1));
            break;
        }
        case OpKind::Add: {
            const double* a = v[op.inputs[0]].raw();
            const double* b = v[op.inputs[1]].raw();
            for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] + b[i];
            break;
        }
        case OpKind::Mul: {
            const double* a = v[op.inputs[0]].raw();
            const double* b = v[op.inputs[1]].raw();
            for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] * b[i];
            break;
        }
        case OpKind::Scale: {
            const double* a = v[op.inputs[0]].raw();
            for (std::size_t i = 0; i < out.size(); ++i) o[i] = op.scalar * a[i];
            break;
        }
        case OpKind::Relu: {
            const double* a = v[op.inputs[0]].raw();
            for (std::size_t i = 0; i < out.size(); ++i) o[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        }
        case OpKind::Concat: {
            const AxisSplit so = split_axis(op.shape, op.axis);
            std::size_t offset = 0;
            for (NodeId in : op.inputs) {
                const Tensor& a = v[in];
                const AxisSplit sa = split_axis(a.shape(), op.axis);
                const std::size_t block = sa.mid * sa.inner;
                for (std::size_t q = 0; q < sa.outer; ++q)
                    std::copy_n(a.raw() + q * block, block, o + q * so.mid * so.inner + offset * so.inner);
                offset += sa.mid;
            }
            break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
            const Tensor& a = v[op.inputs[0]];
            const AxisSplit s = split_axis(a.shape(), op.axis);
            for (std::size_t q = 0; q < s.outer; ++q)
                for (std::size_t m = 0; m < s.mid; ++m) {
                    const double* src = a.raw() + (q * s.mid + m) * s.inner;
                    double* dst = o + q * s.inner;
                    for (std::size_t r = 0; r < s.inner; ++r) dst[r] += src[r];
                }
            if (op.kind == OpKind::Mean)
                for (std::size_t i = 0; i < out.size(); ++i) o[i] /= static_cast<double>(s.mid);
            break;
        }
        case OpKind::Broadcast: {
            const Tensor& a = v[op.inputs[0]];
            const AxisSplit s = split_axis(op.shape, op.axis);
            for (std::size_t q = 0; q < s.outer; ++q)
                for (std::size_t m = 0; m < s.mid; ++m)
                    std::copy_n(a.raw() + q * s.inner, s.inner, o + (q * s.mid + m) * s.inner);
            break;
        }
        case OpKind::Reshape:
            std::copy_n(v[op.inputs[0]].raw(), out.size(), o);
            break;
        case OpKind::RowAggregate: {
            const Tensor& a = v[op.inputs[0]];
            const std::size_t cols = a.dim(1);
            const Segments& seg = *op.segments;
            for (std::size_t i = 0; i < seg.output_rows(); ++i) {
                double* dst = o + i * cols;
                for (std::size_t t = seg.offsets[i]; t < seg.offsets[i + 1]; ++t) {
                    const double* src = a.raw() + seg.indices[t] * cols;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                }
            }
            break;
        }
        case OpKind::L1Loss: {
            const Tensor& p = v[op.inputs[0]];
            const Tensor& t = v[op.inputs[1]];
            double acc = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
            o[0] = p.size() ? acc / static_cast<double>(p.size()) : 0.0;
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            const Tensor& z = v[op.inputs[0]];
            const std::size_t rows = z.dim(0), k = z.dim(1);
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                const double* row = z.raw() + i * k;
                const double mx = *std::max_element(row, row + k);
                double denom = 0.0;
                for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
                acc += std::log(denom) + mx - row[op.labels[i]];
            }
            o[0] = rows ? acc / static_cast<double>(rows) : 0.0;
            break;
        }
    }
    return out;
}

// Accumulates the adjoint of `op` given its output gradient `g` into `grads`.
inline void backward_op(const ExprGraph& expr, const OpRecord& op, const Tensor& g, const Values& v,
                        std::vector<Tensor>& grads, std::vector<bool>& has_grad) {
    auto slot = [&](NodeId id) -> Tensor* {
        if (!expr.node(id).differentiable) return nullptr;
        if (!has_grad[id]) {
            grads[id] = Tensor(expr.shape(id));
            has_grad[id] = true;
        }
        return &grads[id];
    };
    const double* gd = g.raw();
    switch (op.kind) {
        case OpKind::Leaf:
        case OpKind::Constant:
            break;
        case OpKind::MatMul: {
            const Tensor& a = v[op.inputs[0]];
            const Tensor& b = v[op.inputs[1]];
            const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
            if (Tensor* ga = slot(op.inputs[0])) gemm_nt(gd, b.raw(), ga->raw(), m, k, n);
            if (Tensor* gb = slot(op.inputs[1])) gemm_tn(a.raw(), gd, gb->raw(), m, k, n);
            break;
        }
        case OpKind::Add:
            for (NodeId in : op.inputs)
                if (Tensor* gi = slot(in))
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += gd[i];
            break;
        case OpKind::Mul: {
            const Tensor& a = v[op.inputs[0]];
            const Tensor& b = v[op.inputs[1]];
            if (Tensor* ga = slot(op.inputs[0]))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += gd[i] * b[i];
            if (Tensor* gb = slot(op.inputs[1]))
                for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += gd[i] * a[i];
            break;
        }
        case OpKind::Scale:
            if (Tensor* ga = slot(op.inputs[0]))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += op.scalar * gd[i];
            break;
        case OpKind::Relu: {
            const Tensor& a = v[op.inputs[0]];
            if (Tensor* ga = slot(op.inputs[0]))
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a[i] > 0.0) (*ga)[i] += gd[i];
            break;
        }
        case OpKind::Concat: {
            const AxisSplit so = split_axis(op.shape, op.axis);
            std::size_t offset = 0;
            for (NodeId in : op.inputs) {
                const AxisSplit sa = split_axis(expr.shape(in), op.axis);
                if (Tensor* gi = slot(in)) {
                    const std::size_t block = sa.mid * sa.inner;
                    for (std::size_t q = 0; q < sa.outer; ++q) {
                        const double* src = gd + q * so.mid * so.inner + offset * so.inner;
                        double* dst = gi->raw() + q * block;
                        for (std::size_t r = 0; r < block; ++r) dst[r] += src[r];
                    }
                }
                offset += sa.mid;
            }
            break;
        }
        case OpKind::Sum:
        case OpKind::Mean: {
            Tensor* ga = slot(op.inputs[0]);
            if (!ga) break;
            const AxisSplit s = split_axis(ga->shape(), op.axis);
            const double factor = op.kind == OpKind::Mean ? 1.0 / static_cast<double>(s.mid) : 1.0;
            for (std::size_t q = 0; q < s.outer; ++q)
                for (std::size_t m = 0; m < s.mid; ++m) {
                    double* dst = ga->raw() + (q * s.mid + m) * s.inner;
                    const double* src = gd + q * s.inner;
                    for (std::size_t r = 0; r < s.inner; ++r) dst[r] += factor * src[r];
                }
            break;
        }
        case OpKind::Broadcast: {
            Tensor* ga = slot(op.inputs[0]);
            if (!ga) break;
            const AxisSplit s = split_axis(op.shape, op.axis);
            for (std::size_t q = 0; q < s.outer; ++q)
                for (std::size_t m = 0; m < s.mid; ++m) {
                    const double* src = gd + (q * s.mid + m) * s.inner;
                    double* dst = ga->raw() + q * s.inner;
                    for (std::size_t r = 0; r < s.inner; ++r) dst[r] += src[r];
                }
            break;
        }
        case OpKind::Reshape:
            if (Tensor* ga = slot(op.inputs[0]))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += gd[i];
            break;
        case OpKind::RowAggregate: {
            Tensor* ga = slot(op.inputs[0]);
            if (!ga) break;
            const std::size_t cols = ga->dim(1);
            const Segments& seg = *op.segments;
            for (std::size_t i = 0; i < seg.output_rows(); ++i) {
                const double* src = gd + i * cols;
                for (std::size_t t = seg.offsets[i]; t < seg.offsets[i + 1]; ++t) {
                    double* dst = ga->raw() + seg.indices[t] * cols;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                }
            }
            break;
        }
        case OpKind::L1Loss: {
            const Tensor& p = v[op.inputs[0]];
            const Tensor& t = v[op.inputs[1]];
            const double w = p.size() ? gd[0] / static_cast<double>(p.size()) : 0.0;
            Tensor* gp = slot(op.inputs[0]);
            Tensor* gt = slot(op.inputs[1]);
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double diff = p[i] - t[i];
                const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                if (gp) (*gp)[i] += w * sgn;
                if (gt) (*gt)[i] -= w * sgn;
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            Tensor* gz = slot(op.inputs[0]);
            if (!gz) break;
            const Tensor& z = v[op.inputs[0]];
            const std::size_t rows = z.dim(0), k = z.dim(1);
            const double w = rows ? gd[0] / static_cast<double>(rows) : 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                const double* row = z.raw() + i * k;
                const double mx = *std::max_element(row, row + k);
                double denom = 0.0;
                for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
                for (std::size_t j = 0; j < k; ++j) {
                    const double p = std::exp(row[j] - mx) / denom;
                    gz->at(i, j) += w * (p - (j == op.labels[i] ? 1.0 : 0.0));
                }
            }
            break;
        }
    }
}

}  // namespace detail

/// Forward pass over every node. Throws ShapeError for a missing or
/// mis-shaped binding and NonFiniteError for any NaN/Inf intermediate.
inline Values evaluate(const ExprGraph& expr, const Bindings& bindings) {
    Values values;
    values.reserve(expr.size());
    for (NodeId id = 0; id < expr.size(); ++id) {
        const OpRecord& op = expr.node(id);
        if (op.kind == OpKind::Leaf) {
            const Tensor* bound = bindings.find(id);
            if (!bound) throw ShapeError("leaf '" + op.name + "' has no binding");
            if (bound->shape() != op.shape)
                throw ShapeError("leaf '" + op.name + "' expects " + shape_string(op.shape) + ", bound " +
                                 shape_string(bound->shape()));
            values.push_back(*bound);
        } else if (op.kind == OpKind::Constant) {
            values.push_back(*op.constant);
        } else {
            values.push_back(detail::forward_op(op, values));
        }
        if (!values.back().all_finite())
            throw NonFiniteError(std::string("non-finite value produced by ") + op_name(op.kind) + " node " +
                                 std::to_string(id));
    }
    return values;
}

/// Gradient of <seed, value(output)> with respect to every differentiable leaf.
inline Gradients backward(const ExprGraph& expr, const Values& values, const Tensor& seed, NodeId output) {
    if (values.size() != expr.size())
        throw std::invalid_argument("backward needs the forward cache of this expression (" +
                                    std::to_string(values.size()) + " of " + std::to_string(expr.size()) +
                                    " values)");
    if (output >= expr.size()) throw std::out_of_range("backward output node out of range");
    if (seed.shape() != expr.shape(output))
        throw ShapeError("seed shape " + shape_string(seed.shape()) + " does not match output " +
                         shape_string(expr.shape(output)));

    std::vector<Tensor> grads(expr.size(), Tensor(Shape{0}));
    std::vector<bool> has_grad(expr.size(), false);
    if (expr.node(output).differentiable) {
        grads[output] = seed;
        has_grad[output] = true;
    }
    for (NodeId id = output + 1; id-- > 0;) {
        if (!has_grad[id]) continue;
        const OpRecord& op = expr.node(id);
        if (op.kind == OpKind::Leaf || op.kind == OpKind::Constant) continue;
        detail::backward_op(expr, op, grads[id], values, grads, has_grad);
        if (id != output) grads[id] = Tensor(Shape{0});  // release intermediate adjoints
    }

    Gradients out;
    for (NodeId leaf : expr.leaves()) {
        const OpRecord& op = expr.node(leaf);
        if (!op.differentiable) continue;
        out.emplace(leaf, has_grad[leaf] ? std::move(grads[leaf]) : Tensor(op.shape));
    }
    return out;
}

/// Backward from the last node with a seed of ones.
inline Gradients backward(const ExprGraph& expr, const Values& values) {
    if (expr.size() == 0) throw std::invalid_argument("backward on an empty expression");
    const NodeId output = expr.size() - 1;
    return backward(expr, values, Tensor(expr.shape(output), 1.0), output);
}

}  // namespace engnn

#endif  // ENGNN_EXPR_HPP
