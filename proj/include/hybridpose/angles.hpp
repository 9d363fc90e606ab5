#pragma once

// Euler-angle conversions and the per-angle MAE metric.
//
// Axes follow the usual head-pose drawing: x points to the subject's side,
// y points down, z points forward out of the face. The three angles are
// intrinsic Tait-Bryan rotations in yaw-pitch-roll order:
//
//     R = Ry(yaw) * Rx(pitch) * Rz(roll)
//
//             | cy*cr + sy*sp*sr   -cy*sr + sy*sp*cr   sy*cp |
//         R = | cp*sr               cp*cr              -sp    |
//             | -sy*cr + cy*sp*sr   sy*sr + cy*sp*cr   cy*cp |
//
// so pitch = -asin(R(1,2)), yaw = atan2(R(0,2), R(2,2)) and
// roll = atan2(R(1,0), R(1,1)). At |pitch| = 90 degrees yaw and roll are
// degenerate; extraction then sets roll to 0.
//
// All angles are degrees. Radians only appear inside the trig calls.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>

#include "hybridpose/errors.hpp"

namespace hybridpose {

struct PoseAngles {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;

    friend bool operator==(const PoseAngles&, const PoseAngles&) = default;

    bool is_finite() const noexcept {
        return std::isfinite(yaw) && std::isfinite(pitch) && std::isfinite(roll);
    }
    bool within(double limit) const noexcept {
        return std::abs(yaw) <= limit && std::abs(pitch) <= limit && std::abs(roll) <= limit;
    }
};

/// Row-major 3x3 matrix. Instances produced by this library are proper rotations.
struct RotationMatrix {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(std::size_t row, std::size_t col) const noexcept { return m[row * 3 + col]; }
    double& operator()(std::size_t row, std::size_t col) noexcept { return m[row * 3 + col]; }

    static RotationMatrix identity() noexcept { return {}; }

    friend bool operator==(const RotationMatrix&, const RotationMatrix&) = default;
};

inline constexpr double kRotationTolerance = 1e-6;

namespace detail {

inline double to_radians(double deg) noexcept { return deg * (std::numbers::pi / 180.0); }
inline double to_degrees(double rad) noexcept { return rad * (180.0 / std::numbers::pi); }

// sin/cos of an angle in degrees, exact at multiples of 90.
inline std::pair<double, double> sincos_degrees(double deg) noexcept {
    const double reduced = std::fmod(deg, 360.0);
    if (reduced == std::trunc(reduced) && std::fmod(reduced, 90.0) == 0.0) {
        const int quadrant = (static_cast<int>(reduced) / 90 + 4) % 4;
        constexpr std::array<std::pair<double, double>, 4> table{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};
        return table[static_cast<std::size_t>(quadrant)];
    }
    const double rad = to_radians(deg);
    return {std::sin(rad), std::cos(rad)};
}

inline RotationMatrix multiply(const RotationMatrix& a, const RotationMatrix& b) noexcept {
    RotationMatrix out;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

} // namespace detail

inline double determinant(const RotationMatrix& r) noexcept {
    return r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1))
         - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0))
         + r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
}

/// Largest per-entry deviation of R^T R from the identity.
inline double orthonormality_error(const RotationMatrix& r) noexcept {
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 3; ++k) dot += r(k, i) * r(k, j);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

inline bool is_rotation(const RotationMatrix& r, double tolerance = kRotationTolerance) noexcept {
    for (double v : r.m) {
        if (!std::isfinite(v)) return false;
    }
    return orthonormality_error(r) <= tolerance && std::abs(determinant(r) - 1.0) <= tolerance;
}

/// Throws ValidationError unless `r` is orthonormal with determinant +1.
inline void validate_rotation(const RotationMatrix& r, double tolerance = kRotationTolerance) {
    for (double v : r.m) {
        if (!std::isfinite(v)) throw ValidationError("rotation matrix has a non-finite entry");
    }
    if (const double err = orthonormality_error(r); err > tolerance) {
        throw ValidationError("rotation matrix is not orthonormal (max |R^T R - I| = " +
                              std::to_string(err) + ")");
    }
    if (const double det = determinant(r); std::abs(det - 1.0) > tolerance) {
        throw ValidationError("rotation matrix determinant is " + std::to_string(det) + ", expected +1");
    }
}

inline RotationMatrix euler_to_rotation(const PoseAngles& p) {
    if (!p.is_finite()) throw DomainError("euler_to_rotation: non-finite angle");
    const auto [sy, cy] = detail::sincos_degrees(p.yaw);
    const auto [sp, cp] = detail::sincos_degrees(p.pitch);
    const auto [sr, cr] = detail::sincos_degrees(p.roll);
    const RotationMatrix ry{{cy, 0, sy, 0, 1, 0, -sy, 0, cy}};
    const RotationMatrix rx{{1, 0, 0, 0, cp, -sp, 0, sp, cp}};
    const RotationMatrix rz{{cr, -sr, 0, sr, cr, 0, 0, 0, 1}};
    return detail::multiply(detail::multiply(ry, rx), rz);
}

inline PoseAngles rotation_to_euler(const RotationMatrix& r, double tolerance = kRotationTolerance) {
    validate_rotation(r, tolerance);
    // cos(pitch) >= 0 on the principal branch.
    const double cos_pitch = std::hypot(r(1, 0), r(1, 1));
    PoseAngles out;
    out.pitch = detail::to_degrees(std::atan2(-r(1, 2), cos_pitch));
    if (cos_pitch < 1e-12) {
        // Gimbal lock: only yaw -/+ roll is observable.
        out.roll = 0.0;
        out.yaw = detail::to_degrees(std::atan2(-r(2, 0), r(0, 0)));
    } else {
        out.yaw = detail::to_degrees(std::atan2(r(0, 2), r(2, 2)));
        out.roll = detail::to_degrees(std::atan2(r(1, 0), r(1, 1)));
    }
    return out;
}

struct MaeReport {
    double yaw_mae = 0.0;
    double pitch_mae = 0.0;
    double roll_mae = 0.0;
    double mean_mae = 0.0;
    std::size_t n_samples = 0;
};

/// Builds a report from per-angle errors; mean_mae is their arithmetic mean.
inline MaeReport make_mae_report(double yaw, double pitch, double roll, std::size_t n) noexcept {
    return {yaw, pitch, roll, (yaw + pitch + roll) / 3.0, n};
}

/// Mean absolute error per angle, in degrees. No wrap-around is applied.
inline MaeReport mae(std::span<const PoseAngles> preds, std::span<const PoseAngles> truths) {
    if (preds.size() != truths.size()) {
        throw UsageError("mae: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(truths.size()) + " ground truths");
    }
    if (preds.empty()) throw UsageError("mae: no samples");
    double yaw = 0.0, pitch = 0.0, roll = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        yaw += std::abs(preds[i].yaw - truths[i].yaw);
        pitch += std::abs(preds[i].pitch - truths[i].pitch);
        roll += std::abs(preds[i].roll - truths[i].roll);
    }
    const auto n = static_cast<double>(preds.size());
    return make_mae_report(yaw / n, pitch / n, roll / n, preds.size());
}

} // namespace hybridpose
