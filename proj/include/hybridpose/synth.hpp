#pragma once

// Synthetic head-pose task. A fixed, asymmetric rig of 3D points in head
// coordinates (x side, y down, z forward) is rotated by a sampled pose and
// projected orthographically onto the image plane (depth dropped). The
// flattened (x0, y0, x1, y1, ...) coordinates plus Gaussian noise form the
// feature vector.
//
// Export format: one sample per line, comma-separated, 2K feature values
// followed by yaw, pitch, roll. No header.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hybridpose/angles.hpp"
#include "hybridpose/binning.hpp"
#include "hybridpose/errors.hpp"
#include "hybridpose/sample.hpp"
#include "hybridpose/text_io.hpp"

namespace hybridpose {

using Point3 = std::array<double, 3>;

struct Rig {
    std::vector<Point3> points;

    std::size_t feature_dim() const noexcept { return 2 * points.size(); }

    double max_norm() const noexcept {
        double m = 0.0;
        for (const auto& p : points) m = std::max(m, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
        return m;
    }
};

inline constexpr int kRigVersion = 1;

/// Twelve face-like landmarks, deliberately without mirror symmetry.
inline Rig default_rig() {
    return Rig{{
        {-0.42, -0.28, 0.35},  // right eye
        {0.38, -0.31, 0.37},   // left eye
        {0.03, 0.05, 0.62},    // nose tip
        {-0.21, 0.37, 0.40},   // mouth corner
        {0.26, 0.35, 0.38},    // mouth corner
        {0.02, 0.68, 0.22},    // chin
        {-0.78, -0.05, -0.12}, // ear
        {0.74, 0.02, -0.20},   // ear
        {-0.10, -0.71, 0.15},  // forehead
        {0.47, -0.55, -0.05},  // temple
        {-0.33, 0.12, -0.61},  // back of head
        {0.15, -0.20, -0.74},  // crown
    }};
}

/// Rank of the mean-centered point matrix (3 for a non-coplanar rig).
inline int rig_rank(const Rig& rig, double tolerance = 1e-9) {
    Eigen::MatrixXd centered(3, static_cast<Eigen::Index>(rig.points.size()));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : rig.points) mean += Eigen::Vector3d(p[0], p[1], p[2]);
    mean /= static_cast<double>(std::max<std::size_t>(rig.points.size(), 1));
    for (std::size_t i = 0; i < rig.points.size(); ++i) {
        const auto& p = rig.points[i];
        centered.col(static_cast<Eigen::Index>(i)) = Eigen::Vector3d(p[0], p[1], p[2]) - mean;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()(i) > tolerance;
    return rank;
}

struct AngleRange {
    double lo = 0.0;
    double hi = 0.0;

    static AngleRange symmetric(double half_width) { return {-half_width, half_width}; }
    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct SynthConfig {
    std::size_t n_samples = 2500;
    std::uint64_t seed = 7;
    AngleRange yaw = AngleRange::symmetric(75);
    AngleRange pitch = AngleRange::symmetric(60);
    AngleRange roll = AngleRange::symmetric(50);
    double noise_sigma = 0.01;
    double val_fraction = 0.2;
};

inline void validate_synth_config(const SynthConfig& cfg) {
    auto check = [](const AngleRange& r, const char* name) {
        if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi || r.lo < -kAngleLimit || r.hi > kAngleLimit) {
            throw ConfigError(std::string(name) + " range [" + format_double(r.lo) + ", " + format_double(r.hi) +
                              "] must be ordered and inside [-99, 99]");
        }
    };
    check(cfg.yaw, "yaw");
    check(cfg.pitch, "pitch");
    check(cfg.roll, "roll");
    if (!std::isfinite(cfg.noise_sigma) || cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
}

/// Independent uniform draw per component.
inline PoseAngles sample_pose(std::mt19937_64& rng, const SynthConfig& cfg) {
    validate_synth_config(cfg);
    auto draw = [&rng](const AngleRange& r) {
        if (r.lo == r.hi) return r.lo;
        return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    };
    PoseAngles p;
    p.yaw = draw(cfg.yaw);
    p.pitch = draw(cfg.pitch);
    p.roll = draw(cfg.roll);
    return p;
}

/// Noiseless image-plane coordinates of the rotated rig.
inline std::vector<double> project_rig(const Rig& rig, const PoseAngles& pose) {
    const RotationMatrix r = euler_to_rotation(pose);
    std::vector<double> out;
    out.reserve(rig.feature_dim());
    for (const auto& p : rig.points) {
        out.push_back(r(0, 0) * p[0] + r(0, 1) * p[1] + r(0, 2) * p[2]);
        out.push_back(r(1, 0) * p[0] + r(1, 1) * p[1] + r(1, 2) * p[2]);
    }
    return out;
}

inline std::vector<double> render_features(const Rig& rig, const PoseAngles& pose, double noise_sigma,
                                           std::mt19937_64& rng) {
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    std::vector<double> out = project_rig(rig, pose);
    if (noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (double& v : out) v += noise(rng);
    }
    return out;
}

/// Number of training samples for a split of n; the rest are validation.
inline std::size_t train_count(std::size_t n, double val_fraction) {
    const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
    return n - std::clamp<std::size_t>(val, 1, n - 1);
}

/// Deterministic in cfg. The last val_fraction of the samples is the validation split.
inline DatasetSplit make_dataset(const SynthConfig& cfg, const Rig& rig = default_rig()) {
    if (cfg.n_samples < 2) throw UsageError("make_dataset: need at least 2 samples");
    validate_synth_config(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::vector<Sample> all;
    all.reserve(cfg.n_samples);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const PoseAngles pose = sample_pose(rng, cfg);
        all.push_back({render_features(rig, pose, cfg.noise_sigma, rng), pose});
    }
    const std::size_t n_train = train_count(cfg.n_samples, cfg.val_fraction);
    DatasetSplit split;
    split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    return split;
}

inline std::string format_samples_csv(std::span<const Sample> samples) {
    std::string out;
    for (const Sample& s : samples) {
        for (double f : s.features) {
            out += format_double(f);
            out += ',';
        }
        out += format_double(s.truth.yaw);
        out += ',';
        out += format_double(s.truth.pitch);
        out += ',';
        out += format_double(s.truth.roll);
        out += '\n';
    }
    return out;
}

/// Parses the export format. Every line must have the same field count (>= 4);
/// blank lines are skipped.
inline std::vector<Sample> parse_samples_csv(std::string_view text) {
    std::vector<Sample> out;
    std::size_t width = 0;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (trim(lines[i]).empty()) continue;
        const auto fields = split_fields(lines[i]);
        if (fields.size() < 4) throw ParseError("expected feature values followed by yaw,pitch,roll", line_no);
        if (width == 0) width = fields.size();
        if (fields.size() != width) {
            throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                             line_no);
        }
        std::vector<double> values;
        values.reserve(fields.size());
        for (std::size_t f = 0; f < fields.size(); ++f) {
            const auto v = parse_double(trim(fields[f]));
            if (!v) throw ParseError("field " + std::to_string(f + 1) + " is not a number", line_no);
            values.push_back(*v);
        }
        Sample s;
        s.truth = {values[width - 3], values[width - 2], values[width - 1]};
        values.resize(width - 3);
        s.features = std::move(values);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace hybridpose
