#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "engnn/datasets.hpp"
#include "engnn/train.hpp"

using namespace engnn;

namespace {

ModelConfig tiny(Variant v, TaskLevel level) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.d = 8;
    cfg.L = 4;
    cfg.C = 4;
    cfg.L0 = 4;
    cfg.L1 = 4;
    cfg.d1 = 8;
    cfg.variant = v;
    cfg.task_level = level;
    cfg.eval_draws = 2;
    return cfg;
}

// Node regression target: the node degree.
Dataset degree_dataset(std::size_t count, std::uint64_t seed) {
    Dataset out;
    for (std::size_t i = 0; i < count; ++i) {
        Graph g = gen_erdos_renyi(10, 0.3, derive_seed(seed, i));
        std::vector<double> deg;
        for (std::size_t v = 0; v < g.node_count(); ++v) deg.push_back(static_cast<double>(g.degree(v)));
        g.set_targets({deg, false});
        out.push_back(std::move(g));
    }
    return out;
}

TargetBlock regression_targets(std::initializer_list<double> v) {
    return {Tensor(Shape{v.size(), 1}, std::vector<double>(v)), {}};
}

}  // namespace

TEST(Loss, L1ZeroOnExactPredictionAndMeanAbsoluteOtherwise) {
    const TargetBlock t = regression_targets({1.0, -2.0, 3.0});
    EXPECT_EQ(loss(LossKind::L1, t.values, t), 0.0);
    EXPECT_DOUBLE_EQ(loss(LossKind::L1, Tensor(Shape{3, 1}, {0.0, 0.0, 0.0}), t), 2.0);
}

TEST(Loss, CrossEntropyOfUniformLogitsIsLogClassCount) {
    const TargetBlock t{Tensor(), {0, 1, 1}};
    EXPECT_NEAR(loss(LossKind::CrossEntropy, Tensor(Shape{3, 2}), t), std::log(2.0), 1e-15);
    const TargetBlock five{Tensor(), {4}};
    EXPECT_NEAR(loss(LossKind::CrossEntropy, Tensor(Shape{1, 5}), five), std::log(5.0), 1e-15);
    // One logit pair by hand: -log(e^3 / (e^1 + e^3)).
    EXPECT_NEAR(loss(LossKind::CrossEntropy, Tensor::matrix(1, 2, {1.0, 3.0}), TargetBlock{Tensor(), {1}}),
                std::log1p(std::exp(-2.0)), 1e-15);
}

TEST(Loss, GradientsMatchCentralDifferences) {
    Rng rng(3);
    TensorSet p{{"pred", Tensor(Shape{6, 3})}};
    for (double& v : p["pred"].data()) v = rng.uniform(-2.0, 2.0);
    const TargetBlock classes{Tensor(), {0, 2, 1, 1, 0, 2}};
    auto ce = expression_function([&](ExprGraph& e, const std::map<std::string, NodeId>& l) {
        return loss_node(e, LossKind::CrossEntropy, l.at("pred"), classes);
    });
    EXPECT_LT(finite_diff_check(ce, p, 1e-6), 1e-7);

    TensorSet q{{"pred", Tensor(Shape{5, 1}, {0.3, -1.2, 2.0, 0.7, -0.1})}};
    const TargetBlock values = regression_targets({1.0, 1.0, 1.0, 0.0, 0.0});
    auto l1 = expression_function([&](ExprGraph& e, const std::map<std::string, NodeId>& l) {
        return loss_node(e, LossKind::L1, l.at("pred"), values);
    });
    EXPECT_LT(finite_diff_check(l1, q, 1e-6), 1e-7);
}

TEST(AdamW, ZeroLearningRateLeavesParametersUntouched) {
    TensorSet w{{"a", Tensor(Shape{2}, {1.0, -1.0})}};
    const TensorSet g{{"a", Tensor(Shape{2}, {0.5, 0.5})}};
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.1});
    opt.step(w, g, 0.0);
    EXPECT_EQ(w.at("a"), Tensor(Shape{2}, {1.0, -1.0}));
}

TEST(AdamW, FirstStepMovesBySignOfGradient) {
    // Bias correction makes the first update exactly g / |g| up to eps.
    TensorSet w{{"a", Tensor(Shape{3}, {0.0, 1.0, -1.0})}};
    const TensorSet g{{"a", Tensor(Shape{3}, {3.0, -0.01, 100.0})}};
    AdamW opt;
    opt.step(w, g, 0.1);
    EXPECT_NEAR(w.at("a")[0], -0.1, 1e-8);
    EXPECT_NEAR(w.at("a")[1], 1.1, 1e-6);
    EXPECT_NEAR(w.at("a")[2], -1.1, 1e-8);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, WeightDecayShrinksWithoutGradient) {
    TensorSet w{{"a", Tensor(Shape{1}, {2.0})}};
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.5});
    opt.step(w, TensorSet{{"a", Tensor(Shape{1}, {0.0})}}, 0.1);
    EXPECT_DOUBLE_EQ(w.at("a")[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(AdamW, RejectsNonFiniteAndMissingGradients) {
    TensorSet w{{"a", Tensor(Shape{1}, {2.0})}, {"b", Tensor(Shape{1}, {2.0})}};
    AdamW opt;
    EXPECT_THROW(opt.step(w, TensorSet{{"a", Tensor(Shape{1}, {NAN})}, {"b", Tensor(Shape{1})}}, 0.1),
                 NonFiniteError);
    EXPECT_THROW(opt.step(w, TensorSet{{"a", Tensor(Shape{1}, {1.0})}}, 0.1), std::out_of_range);
}

TEST(AdamW, FitsALinearRegression) {
    Rng rng(8);
    Tensor x(Shape{64, 2}), y(Shape{64, 1});
    for (std::size_t i = 0; i < 64; ++i) {
        x.at(i, 0) = rng.uniform(-1.0, 1.0);
        x.at(i, 1) = rng.uniform(-1.0, 1.0);
        y.at(i, 0) = 2.0 * x.at(i, 0) - 3.0 * x.at(i, 1) + 0.5;
    }
    TensorSet w;
    init_linear(w, "lin", 2, 1, rng);
    auto f = [&](const TensorSet& params, Gradients* out) {
        ExprGraph e;
        Bindings b;
        ParamLeaves p(e, params, b);
        const NodeId diff = e.add(linear(e, p, "lin", e.constant(x)), e.scale(e.constant(y), -1.0));
        const NodeId l = e.sum(e.mean(e.mul(diff, diff), 0), 0);
        Values v = evaluate(e, b);
        if (out) *out = backward(e, v, Tensor::scalar(1.0), l);
        return std::make_pair(v[l].item(), p);
    };
    const double start = f(w, nullptr).first;
    AdamW opt;
    for (std::size_t step = 0; step < 200; ++step) {
        Gradients g;
        auto [value, leaves] = f(w, &g);
        opt.step(w, leaves.named(g), 0.05);
    }
    const double end = f(w, nullptr).first;
    EXPECT_LT(end, 1e-3 * start);
    EXPECT_NEAR(w.at("lin.W").at(0, 0), 2.0, 0.05);
    EXPECT_NEAR(w.at("lin.W").at(1, 0), -3.0, 0.05);
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(cosine_lr(0.01, 0, 100), 0.01);
    EXPECT_NEAR(cosine_lr(0.01, 50, 100), 0.005, 1e-15);
    EXPECT_NEAR(cosine_lr(0.01, 100, 100), 0.0, 1e-18);
    EXPECT_NEAR(cosine_lr(0.01, 150, 100), 0.0, 1e-18);
    for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(cosine_lr(0.01, s, 100), cosine_lr(0.01, s - 1, 100));
}

TEST(Metrics, NmaeAgainstHandComputedValues) {
    // Targets {0,0,2,2}: population std 1; constant prediction 1 has MAE 1.
    const TargetBlock t = regression_targets({0.0, 0.0, 2.0, 2.0});
    const Metrics m = score(LossKind::L1, Tensor(Shape{4, 1}, {1.0, 1.0, 1.0, 1.0}), t);
    EXPECT_DOUBLE_EQ(m.mae, 1.0);
    EXPECT_DOUBLE_EQ(m.nmae, 1.0);
    const Metrics half = score(LossKind::L1, Tensor(Shape{4, 1}, {0.0, 1.0, 2.0, 2.0}), t);
    EXPECT_DOUBLE_EQ(half.nmae, 0.25);
    EXPECT_THROW(score(LossKind::L1, Tensor(Shape{2, 1}), regression_targets({3.0, 3.0})), std::domain_error);
}

TEST(Metrics, AccuracyCountsArgmaxHits) {
    const TargetBlock t{Tensor(), {0, 1, 2, 1}};
    const Tensor logits = Tensor::matrix(4, 3, {5, 1, 0, 0, 2, 1, 0, 3, 1, 1, 4, 1});
    const Metrics m = score(LossKind::CrossEntropy, logits, t);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(m.micro_f1, 0.75);
    EXPECT_GE(m.accuracy, 0.0);
    EXPECT_LE(m.accuracy, 1.0);
}

TEST(Targets, NodeAndGraphBlocks) {
    const ModelConfig node = tiny(Variant::MPNN, TaskLevel::Node);
    const Dataset d = degree_dataset(3, 1);
    std::vector<const Graph*> ptrs{&d[0], &d[1], &d[2]};
    const TargetBlock t = gather_targets(node, LossKind::L1, ptrs);
    EXPECT_EQ(t.values.shape(), (Shape{30, 1}));
    const ModelConfig graph = tiny(Variant::MPNN, TaskLevel::Graph);
    EXPECT_THROW(gather_targets(graph, LossKind::L1, ptrs), TaskError);
    Graph unlabeled = gen_erdos_renyi(4, 0.5, 0);
    std::vector<const Graph*> one{&unlabeled};
    EXPECT_THROW(gather_targets(node, LossKind::L1, one), TaskError);
    ModelConfig two = graph;
    two.output_dim = 2;
    unlabeled.set_graph_target(2.0);
    EXPECT_THROW(gather_targets(two, LossKind::CrossEntropy, one), TaskError);
}

TEST(Split, DisjointAndExhaustive) {
    const Dataset d = degree_dataset(50, 2);
    const Split s = split_dataset(d, 0.1, 0.2, 3);
    EXPECT_EQ(s.test.size(), 10u);
    EXPECT_EQ(s.valid.size(), 5u);
    EXPECT_EQ(s.train.size(), 35u);
    std::size_t matched = 0;
    for (const Dataset* part : {&s.train, &s.valid, &s.test})
        for (const Graph& g : *part)
            matched += static_cast<std::size_t>(std::count(d.begin(), d.end(), g));
    EXPECT_EQ(matched, 50u);
    EXPECT_THROW(split_dataset(d, 0.5, 0.5, 3), std::invalid_argument);
}

TEST(Evaluation, RelabelingWithMatchingNoiseLeavesMetricsUnchanged) {
    const ModelConfig cfg = tiny(Variant::ENGNN, TaskLevel::Node);
    const TensorSet params = init_model(cfg, 4);
    const Dataset d = degree_dataset(6, 5);
    Dataset moved;
    std::vector<std::vector<std::size_t>> perms;
    for (std::size_t i = 0; i < d.size(); ++i) {
        perms.push_back(Rng(i).permutation(d[i].node_count()));
        moved.push_back(permute_graph(d[i], perms.back()));
    }
    const NoiseProvider base = seeded_noise(cfg, d, 9);
    const NoiseProvider follow = [&](std::size_t gi, std::size_t k) { return base(gi, k).permute_nodes(perms[gi]); };
    const Metrics a = evaluate(cfg, LossKind::L1, params, d, base);
    const Metrics b = evaluate(cfg, LossKind::L1, params, moved, follow);
    EXPECT_NEAR(a.mae, b.mae, 1e-12);
    EXPECT_NEAR(a.nmae, b.nmae, 1e-12);
}

TEST(Evaluation, AveragesDrawsBeforeScoring) {
    ModelConfig cfg = tiny(Variant::ENGNN, TaskLevel::Node);
    cfg.eval_draws = 3;
    const TensorSet params = init_model(cfg, 4);
    const Dataset d = degree_dataset(2, 6);
    const NoiseProvider noise = seeded_noise(cfg, d, 1);
    const EvalSet set(cfg, LossKind::L1, d, 1);
    const Tensor avg = set.predict(cfg, params, noise, 3);
    std::size_t row = 0;
    for (std::size_t gi = 0; gi < d.size(); ++gi) {
        Tensor sum = model_forward(cfg, d[gi], noise(gi, 0), params);
        for (std::size_t k = 1; k < 3; ++k) {
            const Tensor out = model_forward(cfg, d[gi], noise(gi, k), params);
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out[i];
        }
        for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(avg[row + i], sum[i] / 3.0, 1e-12);
        row += sum.size();
    }
}

TEST(Training, MpnnLearnsNodeDegree) {
    const ModelConfig cfg = tiny(Variant::MPNN, TaskLevel::Node);
    TrainConfig tc;
    tc.epochs = 200;
    tc.lr = 0.01;
    tc.seed = 1;
    const Experiment ex = run_experiment(cfg, tc, degree_dataset(60, 7));
    EXPECT_LT(ex.test.nmae, 0.2);
    EXPECT_GE(ex.trained.best_epoch, 1u);
    EXPECT_LE(ex.trained.best_epoch, ex.trained.epochs_run);
}

TEST(Training, SameSeedSameParametersDifferentSeedDifferent) {
    const ModelConfig cfg = tiny(Variant::ENGNN, TaskLevel::Node);
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 7;
    const Dataset d = degree_dataset(20, 8);
    const TrainResult a = train(cfg, tc, d, {});
    const TrainResult b = train(cfg, tc, d, {});
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].value, b.history[i].value);
    tc.seed = 1;
    EXPECT_NE(train(cfg, tc, d, {}).params, a.params);
}

TEST(Training, EarlyStoppingHonoursPatience) {
    const ModelConfig cfg = tiny(Variant::MPNN, TaskLevel::Node);
    TrainConfig tc;
    tc.epochs = 400;
    tc.lr = 0.05;
    tc.patience = 3;
    const TrainResult r = train(cfg, tc, degree_dataset(8, 9), degree_dataset(4, 10));
    ASSERT_LT(r.epochs_run, 400u);
    EXPECT_EQ(r.epochs_run, r.best_epoch + 3);
}

TEST(Training, RestartsReturnTheAttemptWithTheBestValidationScore) {
    const ModelConfig cfg = tiny(Variant::ENGNN, TaskLevel::Node);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 7;
    tc.seed = 5;
    const Dataset d = degree_dataset(20, 12), v = degree_dataset(6, 13);

    // Each attempt trained on its own; its score is the best valid NMAE it logged.
    std::vector<TensorSet> params;
    std::vector<double> scores;
    for (std::size_t r = 0; r < 3; ++r) {
        TrainConfig one = tc;
        one.seed = r == 0 ? tc.seed : derive_seed(tc.seed, 8, r);
        const TrainResult t = train(cfg, one, d, v);
        double s = INFINITY;
        for (const HistoryRow& h : t.history)
            if (h.split == "valid") s = std::min(s, h.value);
        params.push_back(t.params);
        scores.push_back(s);
    }
    const auto winner = static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
    ASSERT_NE(scores[0], scores[winner]) << "fixture should make a later attempt win";

    tc.restarts = 3;
    const TrainResult r = train(cfg, tc, d, v);
    EXPECT_EQ(r.restart, winner);
    EXPECT_EQ(r.params, params[winner]);
    tc.restarts = 1;
    EXPECT_EQ(train(cfg, tc, d, v).params, params[0]);
}

TEST(Training, RejectsBadConfigurations) {
    const ModelConfig cfg = tiny(Variant::MPNN, TaskLevel::Node);
    TrainConfig tc;
    tc.lr = 0.0;
    EXPECT_THROW(train(cfg, tc, degree_dataset(2, 1), {}), ConfigError);
    tc = TrainConfig{};
    tc.restarts = 0;
    EXPECT_THROW(train(cfg, tc, degree_dataset(2, 1), {}), ConfigError);
    tc = TrainConfig{};
    EXPECT_THROW(train(cfg, tc, {}, {}), std::invalid_argument);
}

TEST(Discrimination, MpnnCannotSeparateCslPair) {
    const Dataset pair = gen_csl_pair();
    ModelConfig cfg = tiny(Variant::MPNN, TaskLevel::Graph);
    TrainConfig tc;
    tc.epochs = 15;
    tc.lr = 0.01;
    const DiscriminationReport r = discrimination_experiment(pair[0], pair[1], cfg, tc, 4, 20);
    EXPECT_TRUE(r.wl_equivalent);
    EXPECT_TRUE(r.spectrally_distinct);
    EXPECT_DOUBLE_EQ(r.train_accuracy, 0.5);
    EXPECT_DOUBLE_EQ(r.held_out_accuracy, 0.5);
}

TEST(Discrimination, RejectsWlSeparablePairs) {
    const ModelConfig cfg = tiny(Variant::ENGNN, TaskLevel::Graph);
    EXPECT_THROW(discrimination_experiment(gen_csl(11, 2), gen_erdos_renyi(11, 0.3, 1), cfg, TrainConfig{}), PairError);
}

TEST(Reports, MetricsCsvLayout) {
    std::vector<MetricRow> rows;
    Metrics m;
    m.mae = 0.5;
    m.nmae = 0.25;
    m.loss = 0.5;
    append_metric_rows(rows, MetricRow{"r1", "count:C3", "ENGNN", "test", "", 0.0, 7}, LossKind::L1, m);
    std::ostringstream os;
    write_metrics_csv(os, rows);
    const std::string csv = os.str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "run_id,task,variant,split,metric,value,seed");
    EXPECT_NE(csv.find("r1,count:C3,ENGNN,test,NMAE,0.25,7\n"), std::string::npos);
    EXPECT_NE(csv.find("r1,count:C3,ENGNN,test,MAE,0.5,7\n"), std::string::npos);
}
