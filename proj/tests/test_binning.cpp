#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hybridpose/binning.hpp"

namespace hybridpose {
namespace {

std::vector<double> one_hot(std::size_t n, std::size_t k) {
    std::vector<double> p(n, 0.0);
    p[k] = 1.0;
    return p;
}

std::vector<double> angle_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 792; ++i) grid.push_back(-99.0 + 0.25 * i);
    return grid;
}

TEST(Hierarchy, CanonicalLevels) {
    const BinHierarchy h = make_hierarchy();
    EXPECT_EQ(h.bin_counts(), (std::vector<std::size_t>{198, 66, 18, 6, 2}));
    const double widths[] = {1, 3, 11, 33, 99};
    for (std::size_t l = 0; l < h.size(); ++l) {
        EXPECT_DOUBLE_EQ(h.level(l).width(), widths[l]);
        EXPECT_EQ(h.level(l).min_angle(), -99.0);
        EXPECT_EQ(h.level(l).max_angle(), 99.0);
    }
}

TEST(Hierarchy, ParameterizedSingleLevel) {
    const BinHierarchy h = make_hierarchy(-99, 99, {66});
    ASSERT_EQ(h.size(), 1u);
    EXPECT_DOUBLE_EQ(h.finest().width(), 3.0);
}

TEST(Hierarchy, RejectsBadConfigurations) {
    EXPECT_THROW(make_hierarchy(-99, 99, {198, 64}), ConfigError);     // 64 does not divide 198
    EXPECT_THROW(make_hierarchy(-99, 99, {66, 198}), ConfigError);     // not decreasing
    EXPECT_THROW(make_hierarchy(-99, 99, {}), ConfigError);
    EXPECT_THROW(make_hierarchy(99, -99, {2}), ConfigError);
    EXPECT_THROW(BinScheme(-99, 99, 0), ConfigError);
    EXPECT_THROW(BinHierarchy({BinScheme(-99, 99, 6), BinScheme(-90, 90, 2)}), ConfigError);
}

TEST(Encode, Examples) {
    const BinScheme s66(-99, 99, 66), s198(-99, 99, 198);
    EXPECT_EQ(encode(-99, s66), 0u);
    EXPECT_EQ(encode(0, s66), 33u);
    EXPECT_EQ(encode(99, s198), 197u);
    EXPECT_THROW(encode(99.0001, s198), RangeError);
    EXPECT_THROW(encode(-120, s66), RangeError);
    EXPECT_THROW(encode(std::nan(""), s66), RangeError);
}

TEST(EncodeAll, Examples) {
    const BinHierarchy h = make_hierarchy();
    EXPECT_EQ(encode_all(0, h).indices, (std::vector<BinIndex>{99, 33, 9, 3, 1}));
    EXPECT_EQ(encode_all(-99, h).indices, (std::vector<BinIndex>{0, 0, 0, 0, 0}));
    const BinLabelSet l = encode_all(50.5, h);
    EXPECT_EQ(l.indices[0], 149u);
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_EQ(coarsen(l.indices[0], h.finest(), h.level(i)), l.indices[i]);
}

TEST(Coarsen, Examples) {
    const BinScheme s198(-99, 99, 198), s66(-99, 99, 66), s2(-99, 99, 2);
    EXPECT_EQ(coarsen(197, s198, s66), 65u);
    EXPECT_EQ(coarsen(0, s198, s2), 0u);
    EXPECT_EQ(coarsen(0, s66, s2), 0u);
    EXPECT_EQ(coarsen(99, s198, s2), 1u);
    EXPECT_THROW(coarsen(0, s198, BinScheme(-99, 99, 4)), ConfigError);
    EXPECT_THROW(coarsen(198, s198, s66), UsageError);
}

TEST(Coarsen, ConsistentWithDirectEncodingOnGrid) {
    const BinHierarchy h = make_hierarchy();
    for (double a : angle_grid()) {
        const BinIndex fine = encode(a, h.finest());
        for (std::size_t l = 0; l < h.size(); ++l) {
            ASSERT_EQ(coarsen(fine, h.finest(), h.level(l)), encode(a, h.level(l))) << "angle " << a << " level " << l;
        }
    }
}

TEST(BinCenter, Examples) {
    const BinScheme s198(-99, 99, 198), s2(-99, 99, 2);
    EXPECT_DOUBLE_EQ(bin_center(0, s198), -98.5);
    EXPECT_DOUBLE_EQ(bin_center(98, s198), -0.5);
    EXPECT_DOUBLE_EQ(bin_center(99, s198), 0.5);
    EXPECT_DOUBLE_EQ(bin_center(1, s2), 49.5);
    EXPECT_THROW(bin_center(2, s2), UsageError);
}

TEST(BinCenter, QuantizationBound) {
    const BinHierarchy h = make_hierarchy();
    for (const auto& s : h.levels()) {
        for (double a : angle_grid()) {
            ASSERT_LE(std::abs(bin_center(encode(a, s), s) - a), s.width() / 2) << a;
        }
    }
}

TEST(ExpectDecode, OneHotHitsCenterExactly) {
    const BinHierarchy h = make_hierarchy();
    for (const auto& s : h.levels()) {
        for (std::size_t k = 0; k < s.n_bins(); ++k) {
            const auto p = one_hot(s.n_bins(), k);
            ASSERT_EQ(expect_decode(p, s), bin_center(k, s));
            ASSERT_EQ(argmax_decode(p, s), bin_center(k, s));
        }
    }
}

TEST(ExpectDecode, UniformIsZero) {
    const BinScheme s(-99, 99, 198);
    const std::vector<double> p(198, 1.0 / 198);
    EXPECT_NEAR(expect_decode(p, s), 0.0, 1e-9);
}

TEST(ExpectDecode, MirroredDistributionsNegateExactly) {
    std::mt19937_64 rng(6);
    std::exponential_distribution<double> e(1.0);
    const BinHierarchy h = make_hierarchy();
    for (const auto& s : h.levels()) {
        const std::vector<double> uniform(s.n_bins(), 1.0 / static_cast<double>(s.n_bins()));
        EXPECT_EQ(expect_decode(uniform, s), 0.0);
        std::vector<double> p(s.n_bins());
        double sum = 0.0;
        for (double& x : p) sum += (x = e(rng));
        for (double& x : p) x /= sum;
        const std::vector<double> mirrored(p.rbegin(), p.rend());
        EXPECT_EQ(expect_decode(mirrored, s), -expect_decode(p, s));
    }
}

TEST(ExpectDecode, TwoNeighbouringHalves) {
    const BinScheme s(-99, 99, 198);
    std::vector<double> p(198, 0.0);
    p[98] = 0.5;
    p[99] = 0.5;
    EXPECT_DOUBLE_EQ(expect_decode(p, s), 0.0);
}

TEST(ExpectDecode, LeftEdgeConventionIsHalfWidthLower) {
    const BinScheme s(-99, 99, 66);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(66);
    double sum = 0.0;
    for (double& x : p) sum += (x = u(rng));
    for (double& x : p) x /= sum;
    EXPECT_NEAR(expect_decode(p, s, DecodeConvention::LeftEdge), expect_decode(p, s) - 1.5, 1e-9);
    EXPECT_EQ(expect_decode(one_hot(66, 0), s, DecodeConvention::LeftEdge), -99.0);
}

TEST(ExpectDecode, ValidationErrors) {
    const BinScheme s(-99, 99, 6);
    EXPECT_THROW(expect_decode(std::vector<double>(5, 0.2), s), ValidationError);
    EXPECT_THROW(expect_decode(std::vector<double>(6, 0.2), s), ValidationError);
    std::vector<double> neg{1.5, -0.5, 0, 0, 0, 0};
    EXPECT_THROW(expect_decode(neg, s), ValidationError);
    EXPECT_THROW(argmax_decode(std::vector<double>(6, 0.2), s), ValidationError);
}

TEST(ExpectDecode, LinearAndBoundedProperty) {
    const BinScheme s(-99, 99, 198);
    std::mt19937_64 rng(11);
    std::exponential_distribution<double> e(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_probs = [&] {
        std::vector<double> p(198);
        double sum = 0.0;
        for (double& x : p) sum += (x = e(rng));
        for (double& x : p) x /= sum;
        return p;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_probs();
        const auto q = random_probs();
        const double lambda = u(rng);
        std::vector<double> mix(198);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = lambda * p[i] + (1 - lambda) * q[i];
        const double lhs = expect_decode(mix, s);
        const double rhs = lambda * expect_decode(p, s) + (1 - lambda) * expect_decode(q, s);
        ASSERT_NEAR(lhs, rhs, 1e-9);
        ASSERT_GE(lhs, bin_center(0, s));
        ASSERT_LE(lhs, bin_center(197, s));
    }
}

TEST(ArgmaxDecode, TieBreakAndPeak) {
    const BinScheme s(-99, 99, 198);
    EXPECT_DOUBLE_EQ(argmax_decode(std::vector<double>(198, 1.0 / 198), s), bin_center(0, s));
    std::vector<double> p(198, 0.0);
    p[100] = 0.8;
    p[99] = 0.1;
    p[101] = 0.1;
    EXPECT_DOUBLE_EQ(argmax_decode(p, s), 1.5);
    // 0.8*1.5 + 0.1*0.5 + 0.1*2.5 = 1.5
    EXPECT_LT(std::abs(expect_decode(p, s) - argmax_decode(p, s)), s.width());
}

} // namespace
} // namespace hybridpose
