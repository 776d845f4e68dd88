#ifndef ENGNN_MODEL_HPP
#define ENGNN_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "engnn/equivariant.hpp"
#include "engnn/graph.hpp"
#include "engnn/noise.hpp"
#include "engnn/random.hpp"

namespace engnn {

enum class TaskLevel { Graph, Node, Subset };
enum class Variant { ENGNN, MPNN, NMPNN };

inline std::string_view task_level_name(TaskLevel t) {
    switch (t) {
        case TaskLevel::Graph: return "graph";
        case TaskLevel::Node: return "node";
        case TaskLevel::Subset: return "subset";
    }
    return "?";
}

inline std::optional<TaskLevel> parse_task_level(std::string_view s) {
    if (s == "graph") return TaskLevel::Graph;
    if (s == "node") return TaskLevel::Node;
    if (s == "subset") return TaskLevel::Subset;
    return std::nullopt;
}

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::ENGNN: return "ENGNN";
        case Variant::MPNN: return "MPNN";
        case Variant::NMPNN: return "NMPNN";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
    if (s == "ENGNN") return Variant::ENGNN;
    if (s == "MPNN") return Variant::MPNN;
    if (s == "NMPNN") return Variant::NMPNN;
    return std::nullopt;
}

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    std::size_t layers = 3;
    std::size_t d = 32;
    std::size_t L = 32;
    std::size_t C = 16;
    std::size_t L0 = 8;
    std::size_t L1 = 8;
    std::size_t d1 = 64;
    std::size_t feature_dim = 1;
    TaskLevel task_level = TaskLevel::Node;
    Variant variant = Variant::ENGNN;
    std::size_t output_dim = 1;
    NoiseDistribution noise = NoiseDistribution::Uniform01;
    std::size_t eval_draws = 8;

    void validate() const {
        if (layers < 1) throw ConfigError("model.layers must be >= 1");
        for (auto [name, v] : {std::pair{"d", d}, {"L", L}, {"C", C}, {"L0", L0}, {"L1", L1}, {"d1", d1},
                               {"feature_dim", feature_dim}, {"output_dim", output_dim}, {"eval_draws", eval_draws}})
            if (v < 1) throw ConfigError(std::string("model.") + name + " must be >= 1");
    }

    /// Width of the invariant input: NMPNN appends the C noise columns.
    std::size_t input_width() const { return feature_dim + (variant == Variant::NMPNN ? C : 0); }

    AggrDims layer_dims(std::size_t layer) const {
        AggrDims a;
        a.d_in = layer == 0 ? input_width() : d;
        a.l_in = layer == 0 ? 1 : L;
        a.l0 = L0;
        a.l1 = L1;
        a.d1 = d1;
        a.d_out = d;
        a.l_out = L;
        // Node-level readout never looks at the last layer's Z.
        a.with_h = !(task_level == TaskLevel::Node && layer + 1 == layers);
        return a;
    }

    AggrDims readout_dims() const {
        AggrDims a;
        a.d_in = d;
        a.l_in = L;
        a.l0 = L0;
        a.l1 = L1;
        a.d1 = d1;
        a.d_out = d;
        a.l_out = L;
        a.with_h = task_level == TaskLevel::Subset;
        return a;
    }

    SubsetHeadDims subset_dims() const { return {readout_dims(), L1, d}; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["layers"] = c.layers;
    j["d"] = c.d;
    j["L"] = c.L;
    j["C"] = c.C;
    j["L0"] = c.L0;
    j["L1"] = c.L1;
    j["d1"] = c.d1;
    j["feature_dim"] = c.feature_dim;
    j["task_level"] = std::string(task_level_name(c.task_level));
    j["variant"] = std::string(variant_name(c.variant));
    j["output_dim"] = c.output_dim;
    j["noise"] = std::string(noise_distribution_name(c.noise));
    j["eval_draws"] = c.eval_draws;
    return j;
}

namespace detail {

template <typename Json>
std::size_t json_count(const Json& j, const std::string& where) {
    if (!j.is_number_integer() || j.template get<long long>() < 0)
        throw ConfigError(where + " must be a non-negative integer");
    return j.template get<std::size_t>();
}

template <typename Json>
std::string json_string(const Json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigError(where + " must be a string");
    return j.template get<std::string>();
}

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
template <typename Json>
ModelConfig model_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("model section must be an object");
    ModelConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const std::string where = "model." + key;
        if (key == "layers") c.layers = detail::json_count(*it, where);
        else if (key == "d") c.d = detail::json_count(*it, where);
        else if (key == "L") c.L = detail::json_count(*it, where);
        else if (key == "C") c.C = detail::json_count(*it, where);
        else if (key == "L0") c.L0 = detail::json_count(*it, where);
        else if (key == "L1") c.L1 = detail::json_count(*it, where);
        else if (key == "d1") c.d1 = detail::json_count(*it, where);
        else if (key == "feature_dim") c.feature_dim = detail::json_count(*it, where);
        else if (key == "output_dim") c.output_dim = detail::json_count(*it, where);
        else if (key == "eval_draws") c.eval_draws = detail::json_count(*it, where);
        else if (key == "task_level") {
            auto t = parse_task_level(detail::json_string(*it, where));
            if (!t) throw ConfigError(where + " must be graph, node or subset");
            c.task_level = *t;
        } else if (key == "variant") {
            auto v = parse_variant(detail::json_string(*it, where));
            if (!v) throw ConfigError(where + " must be ENGNN, MPNN or NMPNN");
            c.variant = *v;
        } else if (key == "noise") {
            auto n = parse_noise_distribution(detail::json_string(*it, where));
            if (!n) throw ConfigError(where + " must be uniform01 or standard_normal");
            c.noise = *n;
        } else {
            throw ConfigError("unknown key " + where);
        }
    }
    c.validate();
    return c;
}

inline std::string layer_prefix(std::size_t layer) { return "mp" + std::to_string(layer); }

inline TensorSet init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    TensorSet params;
    for (std::size_t l = 0; l < cfg.layers; ++l) init_aggr(params, layer_prefix(l), cfg.layer_dims(l), rng);
    if (cfg.task_level == TaskLevel::Graph) init_aggr(params, "pool", cfg.readout_dims(), rng);
    if (cfg.task_level == TaskLevel::Subset) init_subset_head(params, "subset", cfg.subset_dims(), rng);
    init_mlp(params, "out", {cfg.d, cfg.d, cfg.output_dim}, rng);
    return params;
}

inline std::size_t parameter_count(const TensorSet& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

/// Stacks per-graph noise tensors into the batch's [nodes x C] layout.
inline Tensor stack_noise(const GraphBatch& batch, std::span<const NoiseTensor> noise) {
    if (noise.size() != batch.graphs) throw ShapeError("one noise tensor per graph required");
    Tensor out(Shape{batch.nodes, batch.channels});
    for (std::size_t g = 0; g < batch.graphs; ++g) {
        const std::size_t n = batch.node_offset[g + 1] - batch.node_offset[g];
        if (noise[g].nodes() != n || noise[g].channels() != batch.channels)
            throw ShapeError("noise for graph " + std::to_string(g) + " is " + shape_string(noise[g].values().shape()) +
                             ", expected " + shape_string(Shape{n, batch.channels}));
        std::copy(noise[g].values().data().begin(), noise[g].values().data().end(),
                  out.raw() + batch.node_offset[g] * batch.channels);
    }
    return out;
}

/// Prediction rows for a batch: one per node (node level) or per graph.
/// `noise` is [nodes x C]; MPNN ignores it, NMPNN reads it as features.
inline NodeId model_forward(ExprGraph& e, const ParamLeaves& p, const ModelConfig& cfg, const GraphBatch& batch,
                            const Tensor& noise) {
    if (batch.channels != cfg.C) throw ShapeError("batch channel count differs from the model's C");
    if (batch.features.dim(1) != cfg.feature_dim)
        throw ShapeError("graphs carry " + std::to_string(batch.features.dim(1)) + " feature columns, model expects " +
                         std::to_string(cfg.feature_dim));
    if (noise.shape() != Shape{batch.nodes, cfg.C})
        throw ShapeError("noise must be " + shape_string(Shape{batch.nodes, cfg.C}) + ", got " +
                         shape_string(noise.shape()));

    const std::size_t rows = batch.nodes * cfg.C;
    DualNodes state{};
    Tensor z0(Shape{rows, 1});
    if (cfg.variant == Variant::ENGNN) std::copy(noise.data().begin(), noise.data().end(), z0.raw());
    state.z = e.constant(std::move(z0));
    if (cfg.variant == Variant::NMPNN)
        state.x = e.constant([&] {
            const std::size_t f = cfg.feature_dim, w = f + cfg.C;
            Tensor x(Shape{batch.nodes, w});
            for (std::size_t i = 0; i < batch.nodes; ++i) {
                for (std::size_t j = 0; j < f; ++j) x.at(i, j) = batch.features.at(i, j);
                for (std::size_t c = 0; c < cfg.C; ++c) x.at(i, f + c) = noise.at(i, c);
            }
            return x;
        }());
    else
        state.x = e.constant(batch.features);

    for (std::size_t l = 0; l < cfg.layers; ++l) state = mp_layer(e, p, layer_prefix(l), cfg.layer_dims(l), batch, state);

    NodeId readout = state.x;
    if (cfg.task_level == TaskLevel::Graph) readout = pool(e, p, "pool", cfg.readout_dims(), batch.layout, state);
    if (cfg.task_level == TaskLevel::Subset) readout = subset_head(e, p, "subset", cfg.subset_dims(), batch, state);
    return mlp(e, p, "out", readout);
}

/// Evaluates the model on a batch with explicit noise; returns prediction rows.
inline Tensor predict(const ModelConfig& cfg, const TensorSet& params, const GraphBatch& batch, const Tensor& noise) {
    ExprGraph e;
    Bindings b;
    ParamLeaves p(e, params, b);
    const NodeId out = model_forward(e, p, cfg, batch, noise);
    return std::move(evaluate(e, b)[out]);
}

/// Single-graph forward: [n x out] for node tasks, [1 x out] otherwise.
inline Tensor model_forward(const ModelConfig& cfg, const Graph& g, const NoiseTensor& z0, const TensorSet& params) {
    const GraphBatch batch = GraphBatch::single(g, cfg.C, cfg.task_level == TaskLevel::Subset);
    return predict(cfg, params, batch, stack_noise(batch, std::span<const NoiseTensor>(&z0, 1)));
}

struct Estimate {
    Tensor mean;
    Tensor stderr_;
};

/// Sample mean and standard error of the model output over m i.i.d. noise
/// draws; draw k uses derive_seed(seed, k). Draws are evaluated in chunks
/// packed as disjoint copies of g.
inline Estimate expectation_estimate(const ModelConfig& cfg, const Graph& g, const TensorSet& params, std::size_t draws,
                                     std::uint64_t seed, std::size_t chunk = 64) {
    if (draws < 2) throw std::invalid_argument("expectation estimate needs at least 2 draws");
    const bool subsets = cfg.task_level == TaskLevel::Subset;
    // Welford updates: the variance stays exact when every draw agrees.
    Tensor mean, m2;
    bool started = false;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < draws; start += chunk) {
        const std::size_t count = std::min(chunk, draws - start);
        std::vector<const Graph*> copies(count, &g);
        const GraphBatch batch = GraphBatch::build(copies, cfg.C, subsets);
        std::vector<NoiseTensor> noise;
        noise.reserve(count);
        for (std::size_t k = 0; k < count; ++k)
            noise.push_back(sample_noise(g.node_count(), cfg.C, derive_seed(seed, start + k), cfg.noise));
        const Tensor out = predict(cfg, params, batch, stack_noise(batch, noise));
        const std::size_t per = out.size() / count;
        if (!started) {
            started = true;
            Shape s = out.shape();
            s[0] /= count;
            mean = Tensor(s);
            m2 = Tensor(s);
        }
        for (std::size_t k = 0; k < count; ++k) {
            ++seen;
            for (std::size_t i = 0; i < per; ++i) {
                const double v = out[k * per + i];
                const double delta = v - mean[i];
                mean[i] += delta / static_cast<double>(seen);
                m2[i] += delta * (v - mean[i]);
            }
        }
    }
    Estimate est{mean, m2};
    const double m = static_cast<double>(draws);
    for (std::size_t i = 0; i < mean.size(); ++i) est.stderr_[i] = std::sqrt(m2[i] / (m - 1.0) / m);
    return est;
}

// --- checkpoints -------------------------------------------------------------

inline nlohmann::ordered_json checkpoint_to_json(const ModelConfig& cfg, const TensorSet& params) {
    nlohmann::ordered_json j;
    j["config"] = model_config_to_json(cfg);
    nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params) {  // std::map: sorted names
        nlohmann::ordered_json entry;
        entry["shape"] = t.shape();
        entry["data"] = t.data();
        tensors[name] = std::move(entry);
    }
    j["tensors"] = std::move(tensors);
    return j;
}

struct Checkpoint {
    ModelConfig config;
    TensorSet params;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("config") || !j.contains("tensors"))
        throw ConfigError("checkpoint needs 'config' and 'tensors'");
    Checkpoint ck;
    ck.config = model_config_from_json(j.at("config"));
    const TensorSet reference = init_model(ck.config, 0);
    for (const auto& [name, entry] : j.at("tensors").items()) {
        Tensor t(entry.at("shape").get<Shape>(), entry.at("data").get<std::vector<double>>());
        auto ref = reference.find(name);
        if (ref == reference.end()) throw ConfigError("checkpoint tensor '" + name + "' does not belong to the model");
        if (ref->second.shape() != t.shape())
            throw ConfigError("checkpoint tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                              shape_string(ref->second.shape()));
        ck.params.emplace(name, std::move(t));
    }
    if (ck.params.size() != reference.size()) throw ConfigError("checkpoint is missing parameter tensors");
    return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const TensorSet& params) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << checkpoint_to_json(cfg, params).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace engnn

#endif  // ENGNN_MODEL_HPP
