#pragma once

// The combined coarse-fine loss for one angle:
//
//     total = alpha * (decoded - truth)^2 + sum_i beta_i * CE(logits_i, encode(truth, level_i))
//
// where `decoded` is the expectation of the finest level's softmax over its
// bin anchors. Only the finest head feeds the regression term; every head
// gets its own cross-entropy term.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hybridpose/binning.hpp"
#include "hybridpose/errors.hpp"

namespace hybridpose {

/// alpha weighs the regression term; betas[i] weighs level i (finest first).
struct LossWeights {
    double alpha = 2.0;
    std::vector<double> betas{7, 5, 3, 1, 1};

    /// alpha = 2, beta = (7, 5, 3, 1, 1).
    static LossWeights hybrid() { return {2.0, {7, 5, 3, 1, 1}}; }
    /// alpha = 2, beta = (1, 0, 0, 0, 0): a single fine classifier plus regression.
    static LossWeights fine_only() { return {2.0, {1, 0, 0, 0, 0}}; }

    bool any_positive() const noexcept {
        return alpha > 0.0 || std::any_of(betas.begin(), betas.end(), [](double b) { return b > 0.0; });
    }

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Throws ConfigError on a wrong beta count or a negative/non-finite weight.
inline void validate_weights(const LossWeights& w, std::size_t n_levels) {
    if (w.betas.size() != n_levels) {
        throw ConfigError("expected " + std::to_string(n_levels) + " beta weights, got " +
                          std::to_string(w.betas.size()));
    }
    auto bad = [](double x) { return !std::isfinite(x) || x < 0.0; };
    if (bad(w.alpha) || std::any_of(w.betas.begin(), w.betas.end(), bad)) {
        throw ConfigError("loss weights must be finite and nonnegative");
    }
}

enum class RegressionScale {
    Degrees,  // (decoded - truth)^2 in degrees^2
    BinIndex, // same difference divided by the finest bin width first
};

struct LossOptions {
    DecodeConvention decode = DecodeConvention::BinCenter;
    RegressionScale scale = RegressionScale::Degrees;
};

/// Logits for one angle, one vector per hierarchy level (finest first).
struct AngleHeadOutputs {
    std::vector<std::vector<double>> logits;
};

/// Same shape as AngleHeadOutputs::logits.
using AngleHeadGradients = std::vector<std::vector<double>>;

struct LossBreakdown {
    double total = 0.0;
    double regression_term = 0.0;
    std::vector<double> ce_terms;
    double decoded_angle = 0.0;
};

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite entry");
    }
}

inline double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

} // namespace detail

/// Max-subtracted softmax written into `out` (same length as `logits`).
inline void softmax_into(std::span<const double> logits, std::span<double> out) {
    if (logits.empty()) throw UsageError("softmax: empty input");
    if (out.size() != logits.size()) throw UsageError("softmax: output length mismatch");
    detail::require_finite(logits, "softmax");
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    softmax_into(logits, out);
    return out;
}

/// -log softmax(logits)[target], computed through log-sum-exp.
inline double cross_entropy(std::span<const double> logits, BinIndex target) {
    if (target >= logits.size()) {
        throw UsageError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    }
    detail::require_finite(logits, "cross_entropy");
    return std::max(0.0, detail::log_sum_exp(logits) - logits[target]);
}

inline double mse_scalar(double pred, double truth) {
    if (!std::isfinite(pred) || !std::isfinite(truth)) throw DomainError("mse_scalar: non-finite input");
    const double d = pred - truth;
    return d * d;
}

namespace detail {

inline void validate_heads(const AngleHeadOutputs& heads, const BinHierarchy& h) {
    if (heads.logits.size() != h.size()) {
        throw UsageError("expected " + std::to_string(h.size()) + " heads, got " +
                         std::to_string(heads.logits.size()));
    }
    for (std::size_t l = 0; l < h.size(); ++l) {
        if (heads.logits[l].size() != h.level(l).n_bins()) {
            throw UsageError("head " + std::to_string(l) + " has " + std::to_string(heads.logits[l].size()) +
                             " logits, expected " + std::to_string(h.level(l).n_bins()));
        }
        require_finite(heads.logits[l], "head logits");
    }
}

inline double regression_scale_factor(const BinHierarchy& h, RegressionScale scale) {
    if (scale == RegressionScale::Degrees) return 1.0;
    const double w = h.finest().width();
    return 1.0 / (w * w);
}

// Shared forward/backward; `grads` is filled when non-null.
inline LossBreakdown hybrid_loss_impl(const AngleHeadOutputs& heads, double truth, const LossWeights& w,
                                      const BinHierarchy& h, const LossOptions& opts, AngleHeadGradients* grads) {
    validate_heads(heads, h);
    validate_weights(w, h.size());
    if (!std::isfinite(truth)) throw DomainError("hybrid_loss: non-finite truth");
    const BinLabelSet targets = encode_all(truth, h); // throws RangeError when out of range

    LossBreakdown out;
    out.ce_terms.resize(h.size());
    if (grads) grads->resize(h.size());

    std::vector<double> probs;
    for (std::size_t l = 0; l < h.size(); ++l) {
        const auto& z = heads.logits[l];
        probs.resize(z.size());
        softmax_into(z, probs);
        out.ce_terms[l] = cross_entropy(z, targets.indices[l]);

        if (l == 0) {
            const BinScheme& scheme = h.finest();
            const double decoded = detail::weighted_anchor_sum(probs, scheme, opts.decode);
            out.decoded_angle = decoded;
            const double s = regression_scale_factor(h, opts.scale);
            out.regression_term = s * mse_scalar(decoded, truth);
            if (grads) {
                auto& g = (*grads)[0];
                g.assign(z.size(), 0.0);
                // d/dz_j of alpha * s * (d - y)^2 with d = sum_i p_i a_i:
                // 2 alpha s (d - y) * p_j (a_j - d)
                const double outer = 2.0 * w.alpha * s * (decoded - truth);
                for (std::size_t j = 0; j < z.size(); ++j) {
                    g[j] = outer * probs[j] * (bin_anchor(j, scheme, opts.decode) - decoded);
                }
            }
        }
        if (grads) {
            auto& g = (*grads)[l];
            if (l != 0) g.assign(z.size(), 0.0);
            const double beta = w.betas[l];
            for (std::size_t j = 0; j < z.size(); ++j) g[j] += beta * probs[j];
            g[targets.indices[l]] -= beta;
        }
    }

    out.total = w.alpha * out.regression_term;
    for (std::size_t l = 0; l < h.size(); ++l) out.total += w.betas[l] * out.ce_terms[l];
    return out;
}

} // namespace detail

inline LossBreakdown hybrid_loss(const AngleHeadOutputs& heads, double truth, const LossWeights& w,
                                 const BinHierarchy& h, const LossOptions& opts = {}) {
    return detail::hybrid_loss_impl(heads, truth, w, h, opts, nullptr);
}

/// Analytic gradient of hybrid_loss(...).total with respect to every logit.
inline AngleHeadGradients hybrid_loss_grad(const AngleHeadOutputs& heads, double truth, const LossWeights& w,
                                           const BinHierarchy& h, const LossOptions& opts = {}) {
    AngleHeadGradients grads;
    detail::hybrid_loss_impl(heads, truth, w, h, opts, &grads);
    return grads;
}

/// Loss and gradient in one pass; `grads` is resized to match `heads`.
inline LossBreakdown hybrid_loss_with_grad(const AngleHeadOutputs& heads, double truth, const LossWeights& w,
                                           const BinHierarchy& h, const LossOptions& opts,
                                           AngleHeadGradients& grads) {
    return detail::hybrid_loss_impl(heads, truth, w, h, opts, &grads);
}

} // namespace hybridpose
