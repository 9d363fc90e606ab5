#pragma once

// A small multi-head MLP: a shared ReLU trunk followed by one linear head per
// (angle, hierarchy level). With the canonical hierarchy that is 15 heads of
// sizes 198/66/18/6/2 per angle.
//
// Layer storage is flat: trunk layers first, then heads in angle-major,
// level-minor order. Gradients and Adam moments reuse the same layout.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybridpose/angles.hpp"
#include "hybridpose/binning.hpp"
#include "hybridpose/errors.hpp"
#include "hybridpose/loss.hpp"
#include "hybridpose/sample.hpp"

namespace hybridpose {

inline constexpr std::size_t kNumAngles = 3;

inline constexpr double kDefaultLearningRate = 1e-3;

struct NetConfig {
    std::size_t input_dim = 24;
    std::vector<std::size_t> hidden_dims{64, 64};
    BinHierarchy hierarchy = make_hierarchy();
    std::uint64_t seed = 1;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct DenseLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // out

    std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(weight.size() + bias.size()); }
    bool operator==(const DenseLayer& o) const {
        return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && weight == o.weight &&
               bias.size() == o.bias.size() && bias == o.bias;
    }
};

/// Per-layer gradients, laid out like TinyNet::layers().
using NetGradients = std::vector<DenseLayer>;

inline void validate_config(const NetConfig& cfg) {
    if (cfg.input_dim == 0) throw ConfigError("input_dim must be >= 1");
    for (std::size_t d : cfg.hidden_dims) {
        if (d == 0) throw ConfigError("hidden layer sizes must be >= 1");
    }
}

class TinyNet {
public:
    TinyNet(NetConfig cfg, std::vector<DenseLayer> layers) : cfg_(std::move(cfg)), layers_(std::move(layers)) {
        validate_config(cfg_);
        if (layers_.size() != n_trunk() + kNumAngles * cfg_.hierarchy.size()) {
            throw ConfigError("layer count does not match the network configuration");
        }
        std::size_t in = cfg_.input_dim;
        for (std::size_t i = 0; i < n_trunk(); ++i) {
            check_shape(layers_[i], cfg_.hidden_dims[i], in);
            in = cfg_.hidden_dims[i];
        }
        for (std::size_t a = 0; a < kNumAngles; ++a) {
            for (std::size_t l = 0; l < cfg_.hierarchy.size(); ++l) {
                check_shape(head(a, l), cfg_.hierarchy.level(l).n_bins(), in);
            }
        }
    }

    const NetConfig& config() const noexcept { return cfg_; }
    const BinHierarchy& hierarchy() const noexcept { return cfg_.hierarchy; }

    std::span<DenseLayer> layers() noexcept { return layers_; }
    std::span<const DenseLayer> layers() const noexcept { return layers_; }

    std::size_t n_trunk() const noexcept { return cfg_.hidden_dims.size(); }
    std::size_t n_levels() const noexcept { return cfg_.hierarchy.size(); }
    std::size_t head_index(std::size_t angle, std::size_t level) const noexcept {
        return n_trunk() + angle * n_levels() + level;
    }
    DenseLayer& head(std::size_t angle, std::size_t level) { return layers_.at(head_index(angle, level)); }
    const DenseLayer& head(std::size_t angle, std::size_t level) const { return layers_.at(head_index(angle, level)); }

    std::size_t feature_dim() const noexcept {
        return cfg_.hidden_dims.empty() ? cfg_.input_dim : cfg_.hidden_dims.back();
    }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.parameter_count();
        return n;
    }

    bool all_finite() const noexcept {
        return std::all_of(layers_.begin(), layers_.end(),
                           [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
    }

    friend bool operator==(const TinyNet& a, const TinyNet& b) { return a.cfg_ == b.cfg_ && a.layers_ == b.layers_; }

private:
    static void check_shape(const DenseLayer& layer, std::size_t out, std::size_t in) {
        if (static_cast<std::size_t>(layer.weight.rows()) != out || static_cast<std::size_t>(layer.weight.cols()) != in ||
            static_cast<std::size_t>(layer.bias.size()) != out) {
            throw ConfigError("layer shape mismatch: expected " + std::to_string(out) + "x" + std::to_string(in));
        }
    }

    NetConfig cfg_;
    std::vector<DenseLayer> layers_;
};

/// He-initialized weights (std = sqrt(2 / fan_in)), zero biases; deterministic in cfg.seed.
inline TinyNet init_net(const NetConfig& cfg) {
    validate_config(cfg);
    std::mt19937_64 rng(cfg.seed);
    auto make_layer = [&rng](std::size_t out, std::size_t in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
        // Drawn in row-major order.
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
        }
        return layer;
    };
    std::vector<DenseLayer> layers;
    std::size_t in = cfg.input_dim;
    for (std::size_t d : cfg.hidden_dims) {
        layers.push_back(make_layer(d, in));
        in = d;
    }
    for (std::size_t a = 0; a < kNumAngles; ++a) {
        for (const auto& level : cfg.hierarchy.levels()) layers.push_back(make_layer(level.n_bins(), in));
    }
    return TinyNet(cfg, std::move(layers));
}

/// Zero-filled gradients shaped like `net`.
inline NetGradients zero_gradients(const TinyNet& net) {
    NetGradients g;
    g.reserve(net.layers().size());
    for (const auto& l : net.layers()) {
        g.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
}

/// Logits of all three angles.
using HeadOutputs = std::array<AngleHeadOutputs, kNumAngles>;

/// Activations of a batched forward pass; samples are columns.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations; // [0] = input, [i+1] = output of trunk layer i
    std::vector<Eigen::MatrixXd> logits;      // one per head, flat head order
};

inline ForwardCache forward_batch(const TinyNet& net, const Eigen::MatrixXd& inputs) {
    if (static_cast<std::size_t>(inputs.rows()) != net.config().input_dim) {
        throw UsageError("forward: feature length " + std::to_string(inputs.rows()) + ", expected " +
                         std::to_string(net.config().input_dim));
    }
    ForwardCache cache;
    cache.activations.reserve(net.n_trunk() + 1);
    cache.activations.push_back(inputs);
    for (std::size_t i = 0; i < net.n_trunk(); ++i) {
        const DenseLayer& layer = net.layers()[i];
        Eigen::MatrixXd pre = layer.weight * cache.activations.back();
        pre.colwise() += layer.bias;
        cache.activations.push_back(pre.cwiseMax(0.0));
    }
    const Eigen::MatrixXd& top = cache.activations.back();
    cache.logits.reserve(kNumAngles * net.n_levels());
    for (std::size_t h = net.n_trunk(); h < net.layers().size(); ++h) {
        const DenseLayer& layer = net.layers()[h];
        Eigen::MatrixXd z = layer.weight * top;
        z.colwise() += layer.bias;
        cache.logits.push_back(std::move(z));
    }
    return cache;
}

/// Backpropagates head-logit gradients (flat head order, samples as columns).
inline NetGradients backward_batch(const TinyNet& net, const ForwardCache& cache,
                                   const std::vector<Eigen::MatrixXd>& logit_grads) {
    NetGradients grads(net.layers().size());
    const Eigen::MatrixXd& top = cache.activations.back();
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(top.rows(), top.cols());
    for (std::size_t k = 0; k < logit_grads.size(); ++k) {
        const std::size_t h = net.n_trunk() + k;
        const DenseLayer& layer = net.layers()[h];
        grads[h].weight = logit_grads[k] * top.transpose();
        grads[h].bias = logit_grads[k].rowwise().sum();
        upstream.noalias() += layer.weight.transpose() * logit_grads[k];
    }
    for (std::size_t i = net.n_trunk(); i-- > 0;) {
        const Eigen::MatrixXd& out = cache.activations[i + 1];
        const Eigen::MatrixXd pre_grad = (out.array() > 0.0).select(upstream, 0.0);
        grads[i].weight = pre_grad * cache.activations[i].transpose();
        grads[i].bias = pre_grad.rowwise().sum();
        if (i > 0) upstream = net.layers()[i].weight.transpose() * pre_grad;
    }
    return grads;
}

namespace detail {

inline Eigen::MatrixXd stack_features(std::span<const Sample> batch, std::size_t input_dim) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& f = batch[j].features;
        if (f.size() != input_dim) {
            throw UsageError("sample " + std::to_string(j) + " has " + std::to_string(f.size()) +
                             " features, expected " + std::to_string(input_dim));
        }
        x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    }
    return x;
}

inline double angle_component(const PoseAngles& p, std::size_t a) {
    return a == 0 ? p.yaw : (a == 1 ? p.pitch : p.roll);
}

inline void extract_angle_heads(const ForwardCache& cache, std::size_t angle, std::size_t n_levels,
                                Eigen::Index col, AngleHeadOutputs& out) {
    out.logits.resize(n_levels);
    for (std::size_t l = 0; l < n_levels; ++l) {
        const Eigen::MatrixXd& z = cache.logits[angle * n_levels + l];
        out.logits[l].assign(z.col(col).data(), z.col(col).data() + z.rows());
    }
}

inline double decode_finest(std::span<const double> logits, const BinScheme& scheme, DecodeConvention convention) {
    return expect_decode(softmax(logits), scheme, convention);
}

} // namespace detail

inline HeadOutputs forward(const TinyNet& net, std::span<const double> features) {
    if (features.size() != net.config().input_dim) {
        throw UsageError("forward: feature length " + std::to_string(features.size()) + ", expected " +
                         std::to_string(net.config().input_dim));
    }
    const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
    const ForwardCache cache = forward_batch(net, x);
    HeadOutputs out;
    for (std::size_t a = 0; a < kNumAngles; ++a) detail::extract_angle_heads(cache, a, net.n_levels(), 0, out[a]);
    return out;
}

/// Expectation decode of each angle's finest head.
inline PoseAngles predict(const TinyNet& net, std::span<const double> features,
                          DecodeConvention convention = DecodeConvention::BinCenter) {
    const HeadOutputs heads = forward(net, features);
    const BinScheme& finest = net.hierarchy().finest();
    return {detail::decode_finest(heads[0].logits[0], finest, convention),
            detail::decode_finest(heads[1].logits[0], finest, convention),
            detail::decode_finest(heads[2].logits[0], finest, convention)};
}

inline std::vector<PoseAngles> predict_batch(const TinyNet& net, std::span<const Sample> samples,
                                             DecodeConvention convention = DecodeConvention::BinCenter) {
    std::vector<PoseAngles> out;
    out.reserve(samples.size());
    const BinScheme& finest = net.hierarchy().finest();
    constexpr std::size_t kChunk = 256;
    std::vector<double> logits;
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        const auto chunk = samples.subspan(start, std::min(kChunk, samples.size() - start));
        const ForwardCache cache = forward_batch(net, detail::stack_features(chunk, net.config().input_dim));
        for (std::size_t j = 0; j < chunk.size(); ++j) {
            std::array<double, kNumAngles> angles{};
            for (std::size_t a = 0; a < kNumAngles; ++a) {
                const Eigen::MatrixXd& z = cache.logits[a * net.n_levels()];
                const auto col = z.col(static_cast<Eigen::Index>(j));
                logits.assign(col.data(), col.data() + z.rows());
                angles[a] = detail::decode_finest(logits, finest, convention);
            }
            out.push_back({angles[0], angles[1], angles[2]});
        }
    }
    return out;
}

/// Batch means of the three-angle summed loss and its parts.
struct BatchLoss {
    double total = 0.0;
    double regression = 0.0;
    std::vector<double> ce; // per level

    friend bool operator==(const BatchLoss&, const BatchLoss&) = default;
};

/// Mean over `batch` of the yaw + pitch + roll hybrid loss, and its gradient.
inline std::pair<BatchLoss, NetGradients> batch_loss_and_grad(const TinyNet& net, std::span<const Sample> batch,
                                                              const LossWeights& w, const LossOptions& opts = {}) {
    if (batch.empty()) throw UsageError("empty batch");
    const std::size_t n_levels = net.n_levels();
    const ForwardCache cache = forward_batch(net, detail::stack_features(batch, net.config().input_dim));

    std::vector<Eigen::MatrixXd> logit_grads;
    logit_grads.reserve(cache.logits.size());
    for (const auto& z : cache.logits) logit_grads.emplace_back(z.rows(), z.cols());

    BatchLoss loss;
    loss.ce.assign(n_levels, 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    AngleHeadOutputs heads;
    AngleHeadGradients head_grads;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        for (std::size_t a = 0; a < kNumAngles; ++a) {
            detail::extract_angle_heads(cache, a, n_levels, col, heads);
            const double truth = detail::angle_component(batch[j].truth, a);
            const LossBreakdown b = hybrid_loss_with_grad(heads, truth, w, net.hierarchy(), opts, head_grads);
            loss.total += b.total * inv_n;
            loss.regression += b.regression_term * inv_n;
            for (std::size_t l = 0; l < n_levels; ++l) {
                loss.ce[l] += b.ce_terms[l] * inv_n;
                Eigen::MatrixXd& g = logit_grads[a * n_levels + l];
                for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, col) = head_grads[l][static_cast<std::size_t>(r)] * inv_n;
            }
        }
    }
    return {std::move(loss), backward_batch(net, cache, logit_grads)};
}

/// Forward-only version of batch_loss_and_grad.
inline BatchLoss batch_loss(const TinyNet& net, std::span<const Sample> batch, const LossWeights& w,
                            const LossOptions& opts = {}) {
    if (batch.empty()) throw UsageError("empty batch");
    BatchLoss loss;
    loss.ce.assign(net.n_levels(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const Sample& s : batch) {
        const HeadOutputs heads = forward(net, s.features);
        for (std::size_t a = 0; a < kNumAngles; ++a) {
            const LossBreakdown b = hybrid_loss(heads[a], detail::angle_component(s.truth, a), w, net.hierarchy(), opts);
            loss.total += b.total * inv_n;
            loss.regression += b.regression_term * inv_n;
            for (std::size_t l = 0; l < net.n_levels(); ++l) loss.ce[l] += b.ce_terms[l] * inv_n;
        }
    }
    return loss;
}

struct AdamConfig {
    double learning_rate = kDefaultLearningRate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<DenseLayer> first_moment;
    std::vector<DenseLayer> second_moment;

    static OptimizerState for_net(const TinyNet& net, AdamConfig cfg = {}) {
        return {cfg, 0, zero_gradients(net), zero_gradients(net)};
    }
};

/// One bias-corrected Adam update.
inline void adam_update(TinyNet& net, OptimizerState& opt, const NetGradients& grads) {
    if (grads.size() != net.layers().size() || opt.first_moment.size() != grads.size()) {
        throw UsageError("adam_update: gradient layout does not match the network");
    }
    const AdamConfig& c = opt.config;
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
        param.array() -= c.learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + c.epsilon);
    };
    for (std::size_t i = 0; i < grads.size(); ++i) {
        DenseLayer& layer = net.layers()[i];
        update(layer.weight, opt.first_moment[i].weight, opt.second_moment[i].weight, grads[i].weight);
        update(layer.bias, opt.first_moment[i].bias, opt.second_moment[i].bias, grads[i].bias);
    }
}

namespace detail {

inline void require_in_range(std::span<const Sample> batch, const BinHierarchy& h) {
    const BinScheme& s = h.finest();
    for (const Sample& sample : batch) {
        for (std::size_t a = 0; a < kNumAngles; ++a) {
            const double v = angle_component(sample.truth, a);
            if (!(v >= s.min_angle() && v <= s.max_angle())) {
                throw RangeError("training target " + std::to_string(v) + " outside [" +
                                 std::to_string(s.min_angle()) + ", " + std::to_string(s.max_angle()) + "]");
            }
        }
    }
}

} // namespace detail

/// Single Adam step on the mean batch gradient. Returns the pre-update batch loss.
inline BatchLoss train_step(TinyNet& net, OptimizerState& opt, std::span<const Sample> batch, const LossWeights& w,
                            const LossOptions& opts = {}) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    detail::require_in_range(batch, net.hierarchy());
    auto [loss, grads] = batch_loss_and_grad(net, batch, w, opts);
    if (!std::isfinite(loss.total)) throw TrainingError("non-finite training loss");
    adam_update(net, opt, grads);
    if (!net.all_finite()) throw TrainingError("non-finite parameter after update " + std::to_string(opt.step));
    return loss;
}

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    AdamConfig adam;
    LossOptions loss;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    BatchLoss train_loss;  // sample-weighted mean over the epoch
    MaeReport val;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;
};

struct TrainResult {
    TinyNet net;
    TrainReport report;
};

/// Shuffle order for `epoch`, derived only from the master seed.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5bd1e995u};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

inline MaeReport evaluate(const TinyNet& net, std::span<const Sample> samples,
                          DecodeConvention convention = DecodeConvention::BinCenter) {
    const std::vector<PoseAngles> preds = predict_batch(net, samples, convention);
    std::vector<PoseAngles> truths;
    truths.reserve(samples.size());
    for (const Sample& s : samples) truths.push_back(s.truth);
    return mae(preds, truths);
}

inline TrainResult train(const NetConfig& cfg, const DatasetSplit& data, const LossWeights& w,
                         const TrainOptions& opts = {}) {
    if (data.train.empty() || data.val.empty()) throw UsageError("train: training and validation splits must be nonempty");
    if (opts.batch_size == 0) throw ConfigError("batch size must be >= 1");
    validate_weights(w, cfg.hierarchy.size());
    if (!w.any_positive()) throw ConfigError("at least one loss weight must be positive");
    detail::require_in_range(data.train, cfg.hierarchy);

    const auto started = std::chrono::steady_clock::now();
    TinyNet net = init_net(cfg);
    OptimizerState opt = OptimizerState::for_net(net, opts.adam);
    TrainReport report;

    std::vector<Sample> batch;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        const auto order = epoch_order(cfg.seed, epoch, data.train.size());
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss.ce.assign(cfg.hierarchy.size(), 0.0);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(data.train[order[k]]);
            const BatchLoss step = train_step(net, opt, batch, w, opts.loss);
            const double weight = static_cast<double>(batch.size()) / static_cast<double>(order.size());
            record.train_loss.total += step.total * weight;
            record.train_loss.regression += step.regression * weight;
            for (std::size_t l = 0; l < step.ce.size(); ++l) record.train_loss.ce[l] += step.ce[l] * weight;
        }
        record.val = evaluate(net, data.val, opts.loss.decode);
        report.epochs.push_back(std::move(record));
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {std::move(net), std::move(report)};
}

} // namespace hybridpose
