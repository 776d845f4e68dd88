#ifndef ENGNN_TRAIN_HPP
#define ENGNN_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "engnn/jsonl.hpp"
#include "engnn/model.hpp"
#include "engnn/spectrum.hpp"
#include "engnn/wl.hpp"

namespace engnn {

enum class LossKind { L1, CrossEntropy };

inline std::string_view loss_kind_name(LossKind k) { return k == LossKind::L1 ? "l1" : "cross_entropy"; }

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
    if (s == "l1") return LossKind::L1;
    if (s == "cross_entropy") return LossKind::CrossEntropy;
    return std::nullopt;
}

/// Targets of a batch in the form the losses consume.
struct TargetBlock {
    Tensor values;                    // regression: rows x output_dim
    std::vector<std::size_t> labels;  // classification: one class per row
};

/// Loss node for prediction rows against a target block.
inline NodeId loss_node(ExprGraph& e, LossKind kind, NodeId prediction, const TargetBlock& t) {
    if (kind == LossKind::L1) return e.l1_loss(prediction, e.constant(t.values));
    return e.softmax_cross_entropy(prediction, t.labels);
}

/// Scalar loss of plain tensors; regression targets in t.values, classes in t.labels.
inline double loss(LossKind kind, const Tensor& prediction, const TargetBlock& t) {
    ExprGraph e;
    const NodeId out = loss_node(e, kind, e.constant(prediction), t);
    return evaluate(e, Bindings{})[out].item();
}

// --- optimisation ------------------------------------------------------------

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay: w <- w - lr (m_hat / (sqrt(v_hat) + eps) + wd w).
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(TensorSet& params, const TensorSet& grads, double lr) {
        for (const auto& [name, g] : grads)
            if (!g.all_finite()) throw NonFiniteError("non-finite gradient for parameter '" + name + "'");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, w] : params) {
            auto git = grads.find(name);
            if (git == grads.end()) throw std::out_of_range("no gradient for parameter '" + name + "'");
            const Tensor& g = git->second;
            if (g.shape() != w.shape()) throw ShapeError("gradient shape mismatch for '" + name + "'");
            auto [mit, fresh] = m_.try_emplace(name, w.shape());
            Tensor& m = mit->second;
            Tensor& v = v_.try_emplace(name, w.shape()).first->second;
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                w[i] -= lr * (update + cfg_.weight_decay * w[i]);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    AdamWConfig cfg_;
    std::size_t t_ = 0;
    TensorSet m_, v_;
};

/// Cosine annealing from peak at step 0 to 0 at step total.
inline double cosine_lr(double peak, std::size_t step, std::size_t total) {
    if (total == 0) return peak;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * t));
}

// --- targets and metrics -----------------------------------------------------

class TaskError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Prediction rows contributed by one graph.
inline std::size_t rows_of(const ModelConfig& cfg, const Graph& g) {
    return cfg.task_level == TaskLevel::Node ? g.node_count() : 1;
}

inline TargetBlock gather_targets(const ModelConfig& cfg, LossKind kind, std::span<const Graph* const> graphs) {
    TargetBlock t;
    std::vector<double> values;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const Graph& g = *graphs[gi];
        const std::string where = "graph " + std::to_string(gi);
        if (!g.targets()) throw TaskError(where + " has no targets");
        const Targets& y = *g.targets();
        if (cfg.task_level == TaskLevel::Node) {
            if (y.scalar || y.values.size() != g.node_count())
                throw TaskError(where + ": node-level task needs one target per node");
            if (kind == LossKind::L1 && cfg.output_dim != 1)
                throw TaskError("node-level regression supports output_dim 1 only");
        } else if (kind == LossKind::CrossEntropy ? y.values.size() != 1 : y.values.size() != cfg.output_dim) {
            throw TaskError(where + ": " + std::string(task_level_name(cfg.task_level)) +
                            "-level target has " + std::to_string(y.values.size()) + " values");
        }
        if (cfg.task_level == TaskLevel::Subset && !g.subset()) throw TaskError(where + " has no node subset");
        for (double v : y.values) {
            if (kind == LossKind::CrossEntropy) {
                if (v < 0 || v != std::floor(v) || v >= static_cast<double>(cfg.output_dim))
                    throw TaskError(where + ": class label " + std::to_string(v) + " outside [0, output_dim)");
                t.labels.push_back(static_cast<std::size_t>(v));
            }
            values.push_back(v);
        }
    }
    const std::size_t width = kind == LossKind::L1 ? cfg.output_dim : 1;
    const std::size_t rows = values.size() / width;
    t.values = Tensor(Shape{rows, width}, std::move(values));
    return t;
}

/// Training loss of the model on fixed graphs and fixed noise, as a function
/// of the parameters. Used for gradient audits.
inline ParametricFunction model_loss_function(const ModelConfig& cfg, LossKind kind, const Dataset& graphs,
                                              const std::vector<NoiseTensor>& noise) {
    std::vector<const Graph*> members;
    for (const Graph& g : graphs) members.push_back(&g);
    auto batch = std::make_shared<const GraphBatch>(
        GraphBatch::build(members, cfg.C, cfg.task_level == TaskLevel::Subset));
    auto targets = std::make_shared<const TargetBlock>(gather_targets(cfg, kind, members));
    auto z = std::make_shared<const Tensor>(stack_noise(*batch, noise));
    auto run = [cfg, kind, batch, targets, z](const TensorSet& params, TensorSet* grads) {
        ExprGraph e;
        Bindings b;
        ParamLeaves p(e, params, b);
        const NodeId l = loss_node(e, kind, model_forward(e, p, cfg, *batch, *z), *targets);
        Values v = evaluate(e, b);
        if (grads) {
            Gradients g = backward(e, v, Tensor::scalar(1.0), l);
            *grads = p.named(g);
        }
        return v[l].item();
    };
    return {
        [run](const TensorSet& params) { return run(params, nullptr); },
        [run](const TensorSet& params) {
            TensorSet g;
            run(params, &g);
            return g;
        },
    };
}

struct Metrics {
    double loss = 0.0;
    double mae = 0.0;
    double nmae = 0.0;
    double accuracy = 0.0;
    double micro_f1 = 0.0;
};

inline double population_std(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

/// Metrics of averaged predictions. NMAE = MAE / population std of targets;
/// micro-F1 for single-label multi-class prediction equals accuracy.
inline Metrics score(LossKind kind, const Tensor& prediction, const TargetBlock& t) {
    Metrics m;
    m.loss = loss(kind, prediction, t);
    if (kind == LossKind::L1) {
        double abs_sum = 0.0;
        for (std::size_t i = 0; i < prediction.size(); ++i) abs_sum += std::abs(prediction[i] - t.values[i]);
        m.mae = abs_sum / static_cast<double>(prediction.size());
        const double sd = population_std(t.values.data());
        if (!(sd > 0.0)) throw std::domain_error("NMAE undefined: targets have zero standard deviation");
        m.nmae = m.mae / sd;
    } else {
        const std::size_t k = prediction.dim(1);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < t.labels.size(); ++i) {
            const double* row = prediction.raw() + i * k;
            if (static_cast<std::size_t>(std::max_element(row, row + k) - row) == t.labels[i]) ++correct;
        }
        m.accuracy = static_cast<double>(correct) / static_cast<double>(t.labels.size());
        m.micro_f1 = m.accuracy;
    }
    return m;
}

// --- evaluation --------------------------------------------------------------

/// Noise for (graph position in the evaluated list, draw index).
using NoiseProvider = std::function<NoiseTensor(std::size_t graph, std::size_t draw)>;

/// Default evaluation noise: graph-independent stream keyed by (draw, position).
inline NoiseProvider seeded_noise(const ModelConfig& cfg, const Dataset& graphs, std::uint64_t seed) {
    return [&cfg, &graphs, seed](std::size_t gi, std::size_t k) {
        return sample_noise(graphs[gi].node_count(), cfg.C, derive_seed(seed, k, gi), cfg.noise);
    };
}

/// Graphs packed into fixed chunks, reusable across draws and epochs.
class EvalSet {
public:
    EvalSet(const ModelConfig& cfg, LossKind kind, const Dataset& graphs, std::size_t chunk = 64)
        : graphs_(&graphs) {
        if (graphs.empty()) throw std::invalid_argument("evaluation set is empty");
        std::vector<const Graph*> all;
        for (const Graph& g : graphs) all.push_back(&g);
        targets_ = gather_targets(cfg, kind, all);
        for (std::size_t start = 0; start < graphs.size(); start += chunk) {
            const std::size_t end = std::min(graphs.size(), start + chunk);
            std::vector<const Graph*> part(all.begin() + static_cast<std::ptrdiff_t>(start),
                                           all.begin() + static_cast<std::ptrdiff_t>(end));
            chunks_.push_back({start, end, GraphBatch::build(part, cfg.C, cfg.task_level == TaskLevel::Subset)});
        }
    }

    /// Predictions averaged over `draws` noise draws.
    Tensor predict(const ModelConfig& cfg, const TensorSet& params, const NoiseProvider& noise,
                   std::size_t draws) const {
        Tensor total(Shape{rows_total(cfg), cfg.output_dim});
        std::size_t row = 0;
        for (const Chunk& c : chunks_) {
            Tensor acc;
            for (std::size_t k = 0; k < draws; ++k) {
                std::vector<NoiseTensor> z;
                for (std::size_t gi = c.begin; gi < c.end; ++gi) z.push_back(noise(gi, k));
                Tensor out = engnn::predict(cfg, params, c.batch, stack_noise(c.batch, z));
                if (k == 0) acc = std::move(out);
                else
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += out[i];
            }
            for (std::size_t i = 0; i < acc.size(); ++i) total[row * acc.dim(1) + i] = acc[i] / static_cast<double>(draws);
            row += acc.dim(0);
        }
        return total;
    }

    const TargetBlock& targets() const noexcept { return targets_; }
    const Dataset& graphs() const noexcept { return *graphs_; }

private:
    struct Chunk {
        std::size_t begin, end;
        GraphBatch batch;
    };

    std::size_t rows_total(const ModelConfig& cfg) const {
        std::size_t r = 0;
        for (const Graph& g : *graphs_) r += rows_of(cfg, g);
        return r;
    }

    const Dataset* graphs_;
    TargetBlock targets_;
    std::vector<Chunk> chunks_;
};

/// Scores a dataset with predictions averaged over cfg.eval_draws draws of `noise`.
inline Metrics evaluate(const ModelConfig& cfg, LossKind kind, const TensorSet& params, const Dataset& data,
                        const NoiseProvider& noise) {
    const EvalSet set(cfg, kind, data);
    return score(kind, set.predict(cfg, params, noise, cfg.eval_draws), set.targets());
}

inline Metrics evaluate(const ModelConfig& cfg, LossKind kind, const TensorSet& params, const Dataset& data,
                        std::uint64_t eval_seed) {
    return evaluate(cfg, kind, params, data, seeded_noise(cfg, data, eval_seed));
}

// --- training ----------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 0;  // 0: full batch
    double lr = 3e-3;
    double weight_decay = 1e-4;
    LossKind loss = LossKind::L1;
    std::uint64_t seed = 0;
    std::size_t patience = 50;
    std::size_t eval_every = 1;
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    std::size_t restarts = 1;  // independent attempts; the best selection score wins

    void validate() const {
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (restarts < 1) throw ConfigError("train.restarts must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
        if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
        if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
        if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0)
            throw ConfigError("train.valid_fraction + train.test_fraction must be in [0, 1)");
    }
};

struct HistoryRow {
    std::size_t epoch;
    std::string split;
    std::string metric;
    double value;
};

struct TrainResult {
    TensorSet params;
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::size_t restart = 0;  // which attempt produced params
    std::pair<double, double> best_key{0.0, 0.0};
};

/// Seeds used inside one training run; all derived from TrainConfig::seed.
struct RunSeeds {
    std::uint64_t init, split, shuffle, noise, eval;
    explicit RunSeeds(std::uint64_t seed)
        : init(derive_seed(seed, 1)),
          split(derive_seed(seed, 2)),
          shuffle(derive_seed(seed, 3)),
          noise(derive_seed(seed, 4)),
          eval(derive_seed(seed, 5)) {}
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Lower is better: regression by NMAE, classification by accuracy then loss.
inline std::pair<double, double> selection_key(LossKind kind, const Metrics& m) {
    return kind == LossKind::L1 ? std::pair{m.nmae, m.loss} : std::pair{-m.accuracy, m.loss};
}

inline TrainResult train_once(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& train_set,
                              const Dataset& valid_set, std::optional<TensorSet> params) {
    const RunSeeds seeds(tc.seed);
    TrainResult result;
    result.params = params ? std::move(*params) : init_model(cfg, seeds.init);
    TensorSet current = result.params;

    const std::size_t n = train_set.size();
    const std::size_t bs = tc.batch_size == 0 ? n : std::min(tc.batch_size, n);
    const std::size_t batches = (n + bs - 1) / bs;
    const std::size_t total_steps = tc.epochs * batches;
    const bool subsets = cfg.task_level == TaskLevel::Subset;

    std::optional<GraphBatch> full;  // reused when every step sees the whole set
    std::optional<TargetBlock> full_targets;
    std::vector<const Graph*> all;
    for (const Graph& g : train_set) all.push_back(&g);
    if (batches == 1) {
        full = GraphBatch::build(all, cfg.C, subsets);
        full_targets = gather_targets(cfg, tc.loss, all);
    }
    const Dataset& selection_set = valid_set.empty() ? train_set : valid_set;
    const EvalSet valid(cfg, tc.loss, selection_set);
    const NoiseProvider valid_noise = seeded_noise(cfg, selection_set, seeds.eval);

    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, tc.weight_decay});
    std::optional<std::pair<double, double>> best;
    std::size_t since_best = 0, step = 0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        if (batches > 1) Rng(derive_seed(seeds.shuffle, epoch)).shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b, ++step) {
            std::optional<GraphBatch> local;
            std::optional<TargetBlock> local_targets;
            std::vector<const Graph*> members;
            if (!full) {
                for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) members.push_back(all[order[i]]);
                local = GraphBatch::build(members, cfg.C, subsets);
                local_targets = gather_targets(cfg, tc.loss, members);
            } else {
                members = all;
            }
            const GraphBatch& batch = full ? *full : *local;
            const TargetBlock& targets = full ? *full_targets : *local_targets;

            const std::uint64_t step_seed = derive_seed(seeds.noise, step);
            std::vector<NoiseTensor> z;
            z.reserve(members.size());
            for (std::size_t i = 0; i < members.size(); ++i)
                z.push_back(sample_noise(members[i]->node_count(), cfg.C, derive_seed(step_seed, i), cfg.noise));

            ExprGraph e;
            Bindings bind;
            ParamLeaves p(e, current, bind);
            const NodeId pred = model_forward(e, p, cfg, batch, stack_noise(batch, z));
            const NodeId l = loss_node(e, tc.loss, pred, targets);
            Values values;
            try {
                values = evaluate(e, bind);
            } catch (const NonFiniteError& err) {
                throw DivergenceError("epoch " + std::to_string(epoch) + ": " + err.what());
            }
            epoch_loss += values[l].item() * static_cast<double>(members.size());
            Gradients grads = backward(e, values, Tensor::scalar(1.0), l);
            try {
                opt.step(current, p.named(grads), cosine_lr(tc.lr, step, total_steps));
            } catch (const NonFiniteError& err) {
                throw DivergenceError("epoch " + std::to_string(epoch) + ": " + err.what());
            }
        }
        result.epochs_run = epoch;
        result.history.push_back({epoch, "train", "loss", epoch_loss / static_cast<double>(n)});

        if (epoch % tc.eval_every == 0 || epoch == tc.epochs) {
            const Metrics m = score(tc.loss, valid.predict(cfg, current, valid_noise, cfg.eval_draws), valid.targets());
            result.history.push_back({epoch, "valid", tc.loss == LossKind::L1 ? "NMAE" : "accuracy",
                                      tc.loss == LossKind::L1 ? m.nmae : m.accuracy});
            const auto key = detail::selection_key(tc.loss, m);
            if (!best || key < *best) {
                best = key;
                result.best_key = key;
                result.params = current;
                result.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += tc.eval_every;
                if (since_best >= tc.patience) break;
            }
        }
    }
    return result;
}

}  // namespace detail

/// Trains from init_model(cfg, seeds.init), keeping the parameters with the
/// best validation score (training score when `valid_set` is empty).
/// `params` (if given) replaces the initialisation.
///
/// With tc.restarts > 1, further attempts start from fresh seeds and the
/// attempt with the best selection score is returned; attempt 0 uses tc.seed
/// itself. Classification stops restarting once an attempt selects at
/// accuracy 1. Given starting params are only used by attempt 0.
inline TrainResult train(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& train_set,
                         const Dataset& valid_set, std::optional<TensorSet> params = std::nullopt) {
    cfg.validate();
    tc.validate();
    if (train_set.empty()) throw std::invalid_argument("training set is empty");
    TrainResult best = detail::train_once(cfg, tc, train_set, valid_set, std::move(params));
    for (std::size_t r = 1; r < tc.restarts; ++r) {
        if (tc.loss == LossKind::CrossEntropy && best.best_key.first <= -1.0) break;
        TrainConfig attempt = tc;
        attempt.seed = derive_seed(tc.seed, 8, r);
        TrainResult next = detail::train_once(cfg, attempt, train_set, valid_set, std::nullopt);
        next.restart = r;
        if (next.best_key < best.best_key) best = std::move(next);
    }
    return best;
}

struct Split {
    Dataset train, valid, test;
};

/// Seeded shuffle into test / valid / train (train takes the remainder).
inline Split split_dataset(const Dataset& data, double valid_fraction, double test_fraction, std::uint64_t seed) {
    const std::size_t n = data.size();
    std::vector<std::size_t> order = Rng(seed).permutation(n);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::floor(valid_fraction * static_cast<double>(n)));
    if (n_test + n_valid >= n) throw std::invalid_argument("split leaves no training graphs");
    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& target = i < n_test ? s.test : i < n_test + n_valid ? s.valid : s.train;
        target.push_back(data[order[i]]);
    }
    return s;
}

// --- reports -----------------------------------------------------------------

struct MetricRow {
    std::string run_id, task, variant, split, metric;
    double value = 0.0;
    std::uint64_t seed = 0;
};

inline std::string format_value(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

inline constexpr std::string_view kMetricsHeader = "run_id,task,variant,split,metric,value,seed";

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << kMetricsHeader << '\n';
    for (const auto& r : rows)
        os << r.run_id << ',' << r.task << ',' << r.variant << ',' << r.split << ',' << r.metric << ','
           << format_value(r.value) << ',' << r.seed << '\n';
}

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
    os << "epoch,split,metric,value\n";
    for (const auto& r : rows) os << r.epoch << ',' << r.split << ',' << r.metric << ',' << format_value(r.value) << '\n';
}

/// Metric rows for one split, named per the loss kind.
inline void append_metric_rows(std::vector<MetricRow>& rows, const MetricRow& base, LossKind kind, const Metrics& m) {
    auto add = [&](const char* name, double v) {
        MetricRow r = base;
        r.metric = name;
        r.value = v;
        rows.push_back(std::move(r));
    };
    if (kind == LossKind::L1) {
        add("MAE", m.mae);
        add("NMAE", m.nmae);
    } else {
        add("accuracy", m.accuracy);
        add("micro_f1", m.micro_f1);
    }
    add("loss", m.loss);
}

struct Experiment {
    TrainResult trained;
    Metrics train, valid, test;
};

/// Split, train, and score all three splits with the run's eval noise.
inline Experiment run_experiment(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& data) {
    const RunSeeds seeds(tc.seed);
    const Split s = split_dataset(data, tc.valid_fraction, tc.test_fraction, seeds.split);
    Experiment ex;
    ex.trained = train(cfg, tc, s.train, s.valid);
    ex.train = evaluate(cfg, tc.loss, ex.trained.params, s.train, seeds.eval);
    if (!s.valid.empty()) ex.valid = evaluate(cfg, tc.loss, ex.trained.params, s.valid, seeds.eval);
    if (!s.test.empty()) ex.test = evaluate(cfg, tc.loss, ex.trained.params, s.test, seeds.eval);
    return ex;
}

// --- expressivity ------------------------------------------------------------

struct DiscriminationReport {
    Variant variant = Variant::ENGNN;
    bool wl_equivalent = false;
    bool spectrally_distinct = false;
    double train_accuracy = 0.0;
    double held_out_accuracy = 0.0;  // per-draw, no averaging over draws
    std::size_t epochs_run = 0;
    std::size_t restart = 0;
    TensorSet params;
};

class PairError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Trains a graph classifier to tell `a` (class 0) from `b` (class 1) using
/// `copies` random relabelings of each, then scores it on fresh relabelings,
/// one prediction per held-out noise draw.
inline DiscriminationReport discrimination_experiment(const Graph& a, const Graph& b, ModelConfig cfg, TrainConfig tc,
                                                      std::size_t copies = 16, std::size_t held_out_draws = 100) {
    DiscriminationReport rep;
    rep.variant = cfg.variant;
    rep.wl_equivalent = wl_equivalent(a, b, std::max(a.node_count(), b.node_count()));
    if (!rep.wl_equivalent) throw PairError("pair is separated by 1-WL; choose a 1-WL-equivalent pair");
    rep.spectrally_distinct = spectrally_distinct(a, b);

    cfg.task_level = TaskLevel::Graph;
    cfg.output_dim = 2;
    tc.loss = LossKind::CrossEntropy;
    Rng rng(derive_seed(tc.seed, 6));
    auto relabeled = [&rng](const Graph& g, double label) {
        Graph h = permute_graph(g, rng.permutation(g.node_count()));
        h.set_graph_target(label);
        return h;
    };
    Dataset train_set;
    for (std::size_t i = 0; i < copies; ++i) {
        train_set.push_back(relabeled(a, 0.0));
        train_set.push_back(relabeled(b, 1.0));
    }
    TrainResult tr = train(cfg, tc, train_set, {});
    rep.epochs_run = tr.epochs_run;
    rep.restart = tr.restart;
    rep.train_accuracy = evaluate(cfg, tc.loss, tr.params, train_set, RunSeeds(tc.seed).eval).accuracy;

    Dataset held_out;
    for (std::size_t k = 0; k < held_out_draws; ++k) {
        held_out.push_back(relabeled(a, 0.0));
        held_out.push_back(relabeled(b, 1.0));
    }
    ModelConfig single = cfg;
    single.eval_draws = 1;
    const std::uint64_t draw_seed = derive_seed(tc.seed, 7);
    const NoiseProvider fresh = [&](std::size_t gi, std::size_t) {
        return sample_noise(held_out[gi].node_count(), cfg.C, derive_seed(draw_seed, gi), cfg.noise);
    };
    rep.held_out_accuracy = evaluate(single, tc.loss, tr.params, held_out, fresh).accuracy;
    rep.params = std::move(tr.params);
    return rep;
}

}  // namespace engnn

#endif  // ENGNN_TRAIN_HPP
