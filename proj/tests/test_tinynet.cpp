#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "hybridpose/checkpoint.hpp"
#include "hybridpose/synth.hpp"
#include "hybridpose/tinynet.hpp"
#include "oracles.hpp"

namespace hybridpose {
namespace {

NetConfig miniature_config(std::uint64_t seed = 3) {
    NetConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {8};
    cfg.hierarchy = make_hierarchy(-99, 99, {6, 2});
    cfg.seed = seed;
    return cfg;
}

std::vector<Sample> random_batch(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> f(0.0, 1.0);
    std::uniform_real_distribution<double> a(-99, 99);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.features.resize(dim);
        for (double& v : s.features) v = f(rng);
        s.truth = {a(rng), a(rng), a(rng)};
        out.push_back(std::move(s));
    }
    return out;
}

// Flat view of every parameter, in layer order (weights column-major, then bias).
std::vector<double> flatten(const TinyNet& net) {
    std::vector<double> x;
    for (const auto& l : net.layers()) {
        x.insert(x.end(), l.weight.data(), l.weight.data() + l.weight.size());
        x.insert(x.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return x;
}

void assign(TinyNet& net, const std::vector<double>& x) {
    std::size_t k = 0;
    for (auto& l : net.layers()) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(k), l.weight.size(), l.weight.data());
        k += static_cast<std::size_t>(l.weight.size());
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.data());
        k += static_cast<std::size_t>(l.bias.size());
    }
}

std::vector<double> flatten(const NetGradients& g) {
    std::vector<double> x;
    for (const auto& l : g) {
        x.insert(x.end(), l.weight.data(), l.weight.data() + l.weight.size());
        x.insert(x.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return x;
}

TEST(InitNet, DeterministicInSeed) {
    NetConfig cfg;
    cfg.seed = 42;
    EXPECT_EQ(init_net(cfg), init_net(cfg));
    NetConfig other = cfg;
    other.seed = 43;
    EXPECT_NE(flatten(init_net(cfg)), flatten(init_net(other)));
}

TEST(InitNet, ParameterCount) {
    NetConfig cfg;
    cfg.input_dim = 24;
    cfg.hidden_dims = {64, 64};
    // Trunk: 24*64+64 + 64*64+64 = 5760; heads: 3 * (64+1) * (198+66+18+6+2) = 56550.
    EXPECT_EQ(init_net(cfg).parameter_count(), 62310u);
}

TEST(InitNet, HeShapesAndZeroBiases) {
    NetConfig cfg;
    const TinyNet net = init_net(cfg);
    ASSERT_EQ(net.layers().size(), 2u + 15u);
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t sizes[] = {198, 66, 18, 6, 2};
        for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(net.head(a, l).weight.rows(), static_cast<Eigen::Index>(sizes[l]));
    }
    for (const auto& l : net.layers()) EXPECT_TRUE(l.bias.isZero(0.0));
    // Sample std of the second trunk layer (fan_in 64).
    const auto& w = net.layers()[1].weight;
    const double var = w.array().square().mean();
    EXPECT_NEAR(std::sqrt(var), std::sqrt(2.0 / 64.0), 0.01);
}

TEST(InitNet, RejectsZeroDims) {
    NetConfig cfg;
    cfg.input_dim = 0;
    EXPECT_THROW(init_net(cfg), ConfigError);
    cfg.input_dim = 4;
    cfg.hidden_dims = {8, 0};
    EXPECT_THROW(init_net(cfg), ConfigError);
}

TEST(Forward, ZeroInputGivesHeadBiases) {
    NetConfig cfg;
    TinyNet net = init_net(cfg);
    net.head(1, 2).bias.setConstant(0.25);
    const HeadOutputs out = forward(net, std::vector<double>(24, 0.0));
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t l = 0; l < 5; ++l) {
            for (double v : out[a].logits[l]) EXPECT_EQ(v, (a == 1 && l == 2) ? 0.25 : 0.0);
        }
    }
}

TEST(Forward, ShapesFiniteAndRepeatable) {
    NetConfig cfg;
    const TinyNet net = init_net(cfg);
    std::mt19937_64 rng(8);
    const auto batch = random_batch(1, 24, rng);
    const HeadOutputs a = forward(net, batch[0].features), b = forward(net, batch[0].features);
    const std::size_t sizes[] = {198, 66, 18, 6, 2};
    for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_EQ(a[k].logits.size(), 5u);
        for (std::size_t l = 0; l < 5; ++l) {
            EXPECT_EQ(a[k].logits[l].size(), sizes[l]);
            EXPECT_EQ(a[k].logits[l], b[k].logits[l]);
            for (double v : a[k].logits[l]) EXPECT_TRUE(std::isfinite(v));
        }
    }
    EXPECT_THROW(forward(net, std::vector<double>(23, 0.0)), UsageError);
}

TEST(Predict, OneHotFinestYawHead) {
    NetConfig cfg;
    TinyNet net = init_net(cfg);
    for (auto& l : net.layers()) l.weight.setZero();
    net.head(0, 0).bias.setConstant(-1000.0);
    net.head(0, 0).bias(99) = 1000.0;
    const PoseAngles p = predict(net, std::vector<double>(24, 0.3));
    EXPECT_DOUBLE_EQ(p.yaw, 0.5);
}

TEST(Predict, ZeroHeadsGiveZeroPose) {
    NetConfig cfg;
    TinyNet net = init_net(cfg);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t l = 0; l < 5; ++l) net.head(a, l).weight.setZero();
    }
    const PoseAngles p = predict(net, std::vector<double>(24, 0.7));
    EXPECT_NEAR(p.yaw, 0.0, 1e-9);
    EXPECT_NEAR(p.pitch, 0.0, 1e-9);
    EXPECT_NEAR(p.roll, 0.0, 1e-9);
}

TEST(Predict, ConsistentWithForwardAndDecode) {
    NetConfig cfg;
    const TinyNet net = init_net(cfg);
    std::mt19937_64 rng(12);
    const auto samples = random_batch(100, 24, rng);
    const auto batched = predict_batch(net, samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const HeadOutputs heads = forward(net, samples[i].features);
        const BinScheme& s = net.hierarchy().finest();
        // Decode by hand: softmax then sum of bin midpoints.
        double decoded[3];
        for (std::size_t a = 0; a < 3; ++a) {
            const auto& z = heads[a].logits[0];
            const double m = *std::max_element(z.begin(), z.end());
            double norm = 0.0, acc = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) {
                const double e = std::exp(z[j] - m);
                norm += e;
                acc += e * (s.min_angle() + (static_cast<double>(j) + 0.5) * s.width());
            }
            decoded[a] = acc / norm;
        }
        const PoseAngles single = predict(net, samples[i].features);
        EXPECT_NEAR(single.yaw, decoded[0], 1e-9);
        EXPECT_NEAR(single.pitch, decoded[1], 1e-9);
        EXPECT_NEAR(single.roll, decoded[2], 1e-9);
        EXPECT_NEAR(batched[i].yaw, single.yaw, 1e-9);
        EXPECT_NEAR(batched[i].pitch, single.pitch, 1e-9);
        EXPECT_NEAR(batched[i].roll, single.roll, 1e-9);
        EXPECT_LT(std::abs(single.yaw), 99.0);
    }
}

TEST(Backprop, MiniatureNetMatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> weight(0.1, 5.0);
    double worst = 0.0;
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        TinyNet net = init_net(miniature_config(seed));
        const auto batch = random_batch(3, 4, rng);
        const LossWeights w{weight(rng), {weight(rng), weight(rng)}};
        const auto analytic = flatten(batch_loss_and_grad(net, batch, w).second);

        const auto x0 = flatten(net);
        auto f = [&](const std::vector<double>& x) {
            TinyNet probe = net;
            assign(probe, x);
            return batch_loss(probe, batch, w).total;
        };
        ASSERT_EQ(analytic.size(), x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) {
            worst = std::max(worst, testing::relative_error(analytic[i], testing::central_difference(f, x0, i, 1e-4)));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Backprop, BatchedLossMatchesPerSampleLoss) {
    NetConfig cfg;
    const TinyNet net = init_net(cfg);
    std::mt19937_64 rng(6);
    const auto batch = random_batch(7, 24, rng);
    const BatchLoss a = batch_loss_and_grad(net, batch, LossWeights::hybrid()).first;
    const BatchLoss b = batch_loss(net, batch, LossWeights::hybrid());
    EXPECT_NEAR(a.total, b.total, 1e-9 * b.total);
    EXPECT_NEAR(a.regression, b.regression, 1e-9 * std::max(1.0, b.regression));
}

TEST(Adam, ZeroLearningRateIsIdentity) {
    TinyNet net = init_net(miniature_config());
    const TinyNet before = net;
    OptimizerState opt = OptimizerState::for_net(net, AdamConfig{0.0});
    std::mt19937_64 rng(1);
    const auto batch = random_batch(4, 4, rng);
    for (int i = 0; i < 3; ++i) train_step(net, opt, batch, LossWeights{1, {1, 1}});
    EXPECT_EQ(net, before);
    EXPECT_EQ(opt.step, 3u);
}

TEST(Adam, ZeroBetasGiveSignScaledStep) {
    TinyNet net = init_net(miniature_config());
    const auto x0 = flatten(net);
    NetGradients g = zero_gradients(net);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 3);
    for (auto& l : g) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = n(rng);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = n(rng);
    }
    AdamConfig cfg{0.01, 0.0, 0.0, 1e-8};
    OptimizerState opt = OptimizerState::for_net(net, cfg);
    adam_update(net, opt, g);
    const auto x1 = flatten(net);
    const auto gf = flatten(g);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        EXPECT_NEAR(x1[i], x0[i] - 0.01 * gf[i] / (std::abs(gf[i]) + 1e-8), 1e-15);
    }
}

TEST(Adam, MatchesScalarReferenceOverSeveralSteps) {
    TinyNet net = init_net(miniature_config());
    OptimizerState opt = OptimizerState::for_net(net, AdamConfig{0.05});
    const double start = net.layers()[0].weight(2, 1);
    const double grads[] = {0.3, -1.2, 0.7, 0.0, 2.5};

    // Textbook Adam on one scalar.
    double p = start, m = 0, v = 0;
    for (int t = 1; t <= 5; ++t) {
        const double gt = grads[t - 1];
        m = 0.9 * m + 0.1 * gt;
        v = 0.999 * v + 0.001 * gt * gt;
        const double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.999, t));
        p -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);

        NetGradients g = zero_gradients(net);
        g[0].weight(2, 1) = gt;
        adam_update(net, opt, g);
    }
    EXPECT_NEAR(net.layers()[0].weight(2, 1), p, 1e-12);
}

TEST(TrainStep, ReducesLossOnSyntheticBatch) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig sc;
        sc.n_samples = 100;
        sc.seed = seed;
        const DatasetSplit data = make_dataset(sc);
        NetConfig cfg;
        cfg.seed = seed;
        TinyNet net = init_net(cfg);
        OptimizerState opt = OptimizerState::for_net(net);
        const auto batch = std::span<const Sample>(data.train).first(64);
        const double before = batch_loss(net, batch, LossWeights::hybrid()).total;
        const double reported = train_step(net, opt, batch, LossWeights::hybrid()).total;
        const double after = batch_loss(net, batch, LossWeights::hybrid()).total;
        EXPECT_NEAR(reported, before, 1e-9 * before);
        EXPECT_LT(after, before) << "seed " << seed;
    }
}

TEST(TrainStep, RejectsOutOfRangeTargets) {
    TinyNet net = init_net(miniature_config());
    OptimizerState opt = OptimizerState::for_net(net);
    std::vector<Sample> batch{{{0.1, 0.2, 0.3, 0.4}, {120, 0, 0}}};
    EXPECT_THROW(train_step(net, opt, batch, LossWeights{1, {1, 1}}), RangeError);
    EXPECT_THROW(train_step(net, opt, std::vector<Sample>{}, LossWeights{1, {1, 1}}), UsageError);
}

DatasetSplit small_synthetic(std::uint64_t seed, std::size_t n = 300) {
    SynthConfig sc;
    sc.n_samples = n;
    sc.seed = seed;
    return make_dataset(sc);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    NetConfig cfg;
    cfg.seed = 9;
    TrainOptions opts;
    opts.epochs = 0;
    const TrainResult r = train(cfg, small_synthetic(1), LossWeights::hybrid(), opts);
    EXPECT_EQ(r.net, init_net(cfg));
    EXPECT_TRUE(r.report.epochs.empty());
}

TEST(Train, DeterministicLossSequence) {
    NetConfig cfg;
    cfg.hidden_dims = {32};
    cfg.seed = 4;
    TrainOptions opts;
    opts.epochs = 3;
    opts.batch_size = 32;
    const auto data = small_synthetic(2);
    const TrainResult a = train(cfg, data, LossWeights::hybrid(), opts);
    const TrainResult b = train(cfg, data, LossWeights::hybrid(), opts);
    ASSERT_EQ(a.report.epochs.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(a.report.epochs[e].train_loss, b.report.epochs[e].train_loss);
        EXPECT_EQ(a.report.epochs[e].val.mean_mae, b.report.epochs[e].val.mean_mae);
    }
    EXPECT_EQ(a.net, b.net);
    EXPECT_TRUE(a.net.all_finite());
}

TEST(Train, ShuffleDependsOnlyOnSeedAndEpoch) {
    EXPECT_EQ(epoch_order(5, 1, 50), epoch_order(5, 1, 50));
    EXPECT_NE(epoch_order(5, 1, 50), epoch_order(5, 2, 50));
    EXPECT_NE(epoch_order(5, 1, 50), epoch_order(6, 1, 50));
}

TEST(Train, ErrorPaths) {
    NetConfig cfg;
    EXPECT_THROW(train(cfg, DatasetSplit{}, LossWeights::hybrid()), UsageError);
    EXPECT_THROW(train(cfg, small_synthetic(1), LossWeights{0, {0, 0, 0, 0, 0}}), ConfigError);
}

TEST(Checkpoint, RoundTripsBitwise) {
    NetConfig cfg;
    cfg.seed = 77;
    cfg.hidden_dims = {16, 8};
    TrainOptions opts;
    opts.epochs = 1;
    const TinyNet net = train(cfg, small_synthetic(3, 100), LossWeights::hybrid(), opts).net;
    std::stringstream buffer;
    save_checkpoint(net, buffer);
    const std::string bytes = buffer.str();
    const TinyNet loaded = load_checkpoint(buffer);
    EXPECT_EQ(loaded, net);
    EXPECT_EQ(loaded.config(), net.config());
    std::stringstream again;
    save_checkpoint(loaded, again);
    EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
    std::stringstream garbage("not a checkpoint at all");
    EXPECT_THROW(load_checkpoint(garbage), ValidationError);

    std::stringstream buffer;
    save_checkpoint(init_net(miniature_config()), buffer);
    std::string bytes = buffer.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(load_checkpoint(truncated), ValidationError);
}

} // namespace
} // namespace hybridpose
