#pragma once

// Nested coarse-to-fine quantization of an angle range.
//
// A BinScheme splits [min_angle, max_angle] into n equal-width bins. A
// BinHierarchy is an ordered list of schemes over the same range, finest
// first, where every coarser bin count divides the finest one; the canonical
// hierarchy has 198/66/18/6/2 bins over +-99 degrees (widths 1/3/11/33/99).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridpose/errors.hpp"

namespace hybridpose {

using BinIndex = std::size_t;

inline constexpr double kAngleLimit = 99.0;

/// How a probability vector maps back to an angle.
enum class DecodeConvention {
    /// sum_i p_i * (min + (i + 0.5) * width). One-hot decoding hits bin midpoints.
    BinCenter,
    /// sum_i p_i * (min + i * width), the index-times-width-plus-offset form.
    LeftEdge,
};

class BinScheme {
public:
    BinScheme(double min_angle, double max_angle, std::size_t n_bins)
        : min_(min_angle), max_(max_angle), n_(n_bins) {
        if (!std::isfinite(min_angle) || !std::isfinite(max_angle) || !(max_angle > min_angle)) {
            throw ConfigError("bin scheme needs finite max_angle > min_angle");
        }
        if (n_bins == 0) throw ConfigError("bin scheme needs at least one bin");
    }

    double min_angle() const noexcept { return min_; }
    double max_angle() const noexcept { return max_; }
    std::size_t n_bins() const noexcept { return n_; }
    double width() const noexcept { return (max_ - min_) / static_cast<double>(n_); }

    friend bool operator==(const BinScheme&, const BinScheme&) = default;

private:
    double min_;
    double max_;
    std::size_t n_;
};

class BinHierarchy {
public:
    /// Levels must be finest first, share one range, strictly decrease in
    /// bin count, and each divide the finest count.
    explicit BinHierarchy(std::vector<BinScheme> levels) : levels_(std::move(levels)) {
        if (levels_.empty()) throw ConfigError("bin hierarchy needs at least one level");
        const BinScheme& finest = levels_.front();
        for (std::size_t i = 1; i < levels_.size(); ++i) {
            const BinScheme& level = levels_[i];
            if (level.min_angle() != finest.min_angle() || level.max_angle() != finest.max_angle()) {
                throw ConfigError("bin hierarchy level " + std::to_string(i) + " has a different range");
            }
            if (level.n_bins() >= levels_[i - 1].n_bins()) {
                throw ConfigError("bin hierarchy bin counts must strictly decrease");
            }
            if (finest.n_bins() % level.n_bins() != 0) {
                throw ConfigError("bin hierarchy level with " + std::to_string(level.n_bins()) +
                                  " bins does not divide the finest level (" +
                                  std::to_string(finest.n_bins()) + " bins)");
            }
        }
    }

    std::size_t size() const noexcept { return levels_.size(); }
    const BinScheme& level(std::size_t i) const { return levels_.at(i); }
    const BinScheme& finest() const noexcept { return levels_.front(); }
    std::span<const BinScheme> levels() const noexcept { return levels_; }

    std::vector<std::size_t> bin_counts() const {
        std::vector<std::size_t> out;
        out.reserve(levels_.size());
        for (const auto& l : levels_) out.push_back(l.n_bins());
        return out;
    }

    friend bool operator==(const BinHierarchy&, const BinHierarchy&) = default;

private:
    std::vector<BinScheme> levels_;
};

inline BinHierarchy make_hierarchy(double min_angle, double max_angle, std::span<const std::size_t> counts) {
    std::vector<BinScheme> levels;
    levels.reserve(counts.size());
    for (std::size_t n : counts) levels.emplace_back(min_angle, max_angle, n);
    return BinHierarchy(std::move(levels));
}

inline BinHierarchy make_hierarchy(double min_angle, double max_angle, std::initializer_list<std::size_t> counts) {
    return make_hierarchy(min_angle, max_angle, std::span<const std::size_t>(counts.begin(), counts.size()));
}

/// 198/66/18/6/2 bins over [-99, +99].
inline BinHierarchy make_hierarchy() {
    return make_hierarchy(-kAngleLimit, kAngleLimit, {198, 66, 18, 6, 2});
}

/// Bin containing `angle`; the upper boundary falls into the last bin.
inline BinIndex encode(double angle, const BinScheme& scheme) {
    if (!(angle >= scheme.min_angle() && angle <= scheme.max_angle())) {
        throw RangeError("angle " + std::to_string(angle) + " outside [" + std::to_string(scheme.min_angle()) +
                         ", " + std::to_string(scheme.max_angle()) + "]");
    }
    const auto index = static_cast<BinIndex>(std::floor((angle - scheme.min_angle()) / scheme.width()));
    return std::min(index, scheme.n_bins() - 1);
}

struct BinLabelSet {
    std::vector<BinIndex> indices; // one per hierarchy level, finest first

    friend bool operator==(const BinLabelSet&, const BinLabelSet&) = default;
};

inline BinLabelSet encode_all(double angle, const BinHierarchy& h) {
    BinLabelSet out;
    out.indices.reserve(h.size());
    for (const auto& level : h.levels()) out.indices.push_back(encode(angle, level));
    return out;
}

inline BinIndex coarsen(BinIndex fine_index, const BinScheme& fine, const BinScheme& coarse) {
    if (fine.n_bins() % coarse.n_bins() != 0) {
        throw ConfigError("coarsen: " + std::to_string(coarse.n_bins()) + " bins do not divide " +
                          std::to_string(fine.n_bins()));
    }
    if (fine_index >= fine.n_bins()) throw UsageError("coarsen: bin index out of range");
    return fine_index * coarse.n_bins() / fine.n_bins();
}

inline double bin_center(BinIndex index, const BinScheme& scheme) {
    if (index >= scheme.n_bins()) {
        throw UsageError("bin index " + std::to_string(index) + " out of range for " +
                         std::to_string(scheme.n_bins()) + " bins");
    }
    return scheme.min_angle() + (static_cast<double>(index) + 0.5) * scheme.width();
}

/// Angle assigned to bin `index` under `convention`.
inline double bin_anchor(BinIndex index, const BinScheme& scheme, DecodeConvention convention) {
    if (convention == DecodeConvention::BinCenter) return bin_center(index, scheme);
    if (index >= scheme.n_bins()) throw UsageError("bin index out of range");
    return scheme.min_angle() + static_cast<double>(index) * scheme.width();
}

inline constexpr double kProbabilityTolerance = 1e-6;

namespace detail {

inline void validate_probabilities(std::span<const double> probs, const BinScheme& scheme) {
    if (probs.size() != scheme.n_bins()) {
        throw ValidationError("probability vector has length " + std::to_string(probs.size()) + ", expected " +
                              std::to_string(scheme.n_bins()));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) throw ValidationError("probability vector has a negative or non-finite entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        throw ValidationError("probability vector sums to " + std::to_string(sum));
    }
}

/// Sum of probs[i] * anchor(i), accumulated over mirrored pairs (i, n-1-i) so
/// that a symmetric distribution over centered bins decodes to exactly 0.
inline double weighted_anchor_sum(std::span<const double> probs, const BinScheme& scheme,
                                  DecodeConvention convention) {
    const std::size_t n = probs.size();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0, j = n - 1; i < j; ++i, --j) {
        acc += probs[i] * bin_anchor(i, scheme, convention) + probs[j] * bin_anchor(j, scheme, convention);
    }
    if (n % 2 == 1) acc += probs[n / 2] * bin_anchor(n / 2, scheme, convention);
    return acc;
}

} // namespace detail

/// Expectation of the bin anchors under `probs`.
inline double expect_decode(std::span<const double> probs, const BinScheme& scheme,
                            DecodeConvention convention = DecodeConvention::BinCenter) {
    detail::validate_probabilities(probs, scheme);
    return detail::weighted_anchor_sum(probs, scheme, convention);
}

/// Center of the most probable bin; ties go to the lowest index.
inline double argmax_decode(std::span<const double> probs, const BinScheme& scheme) {
    detail::validate_probabilities(probs, scheme);
    const auto it = std::max_element(probs.begin(), probs.end());
    return bin_center(static_cast<BinIndex>(it - probs.begin()), scheme);
}

} // namespace hybridpose
