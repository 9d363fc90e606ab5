#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check (no analytic gradients, no library decoding).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace hybridpose::testing {

/// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double step = 1e-4) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    return (up - down) / (2.0 * step);
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero components from
/// turning roundoff into huge relative errors.
inline double relative_error(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace hybridpose::testing
