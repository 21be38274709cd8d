#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "wavefront/kernels.hpp"

using namespace wavefront;
using namespace wavefront::kernels;

namespace {
double integrate(auto f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12);
}
} // namespace

TEST(Heat, UnitTimeValue) {
    EXPECT_NEAR(heat_kernel({0, 0, 1, 0, 0}), 0.28209479177387814, 1e-15);
    EXPECT_NEAR(heat_kernel({0, 0, 1, 0, 0}), 1.0 / std::sqrt(4.0 * std::numbers::pi), 1e-15);
    EXPECT_THROW(heat_kernel({1, 0, 1, 0, 0}), DomainError);
}

TEST(Heat, NormalizedAndSymmetric) {
    for (double tau : {0.01, 0.5, 3.0}) {
        const double mass = integrate([&](double x) { return heat_kernel({0, 0.3, tau, x, 0}); }, -60, 60);
        EXPECT_NEAR(mass, 1.0, 1e-10) << tau;
        EXPECT_DOUBLE_EQ(heat_kernel({0, 0.3, tau, 1.1, 0}), heat_kernel({0, 1.1, tau, 0.3, 0}));
    }
}

TEST(Killed, BelowHeatAndZeroPastTheBoundary) {
    for (double v : {0.0, 0.5, 2.0})
        for (double y : {-2.0, -0.5, -0.01})
            for (double x : {-3.0, -1.0, -0.1, 0.2, 1.0}) {
                const KernelPoint k{0.0, y, 0.5, x, v};
                const double g = killed_kernel(k);
                EXPECT_GE(g, 0.0);
                EXPECT_LE(g, heat_kernel(k) * (1 + 1e-14));
                if (x >= v * 0.5) EXPECT_EQ(g, 0.0);
            }
    EXPECT_EQ(killed_kernel({0.0, 0.1, 1.0, -1.0, 0.0}), 0.0); // starts beyond the boundary
}

TEST(Killed, ApproachesHeatWhenTheBoundaryRunsAway) {
    const KernelPoint base{0.0, -0.2, 0.3, 0.1, 0.0};
    double prev = 1.0;
    for (double v : {1.0, 3.0, 10.0, 30.0}) {
        KernelPoint k = base;
        k.v = v;
        const double rel = 1.0 - killed_kernel(k) / heat_kernel(k);
        const double z = k.x - v * k.t, y0 = k.y;
        EXPECT_NEAR(rel, std::exp(-z * y0 / k.t), 1e-12); // the reflected image
        EXPECT_LE(rel, prev);
        prev = rel;
    }
    EXPECT_LT(prev, 3e-3);
}

TEST(Killed, ImageFormulaAtZeroDrift) {
    const KernelPoint k{0.0, -1.0, 1.0, -0.5, 0.0};
    const double expected = heat_kernel(k) - heat_kernel({0.0, 1.0, 1.0, -0.5, 0.0});
    EXPECT_NEAR(killed_kernel(k), expected, 1e-15);
}

TEST(Killed, SurvivalMatchesMonteCarlo) {
    const KernelPoint k{0.0, -0.5, 1.0, 0.0, 1.0};
    const std::uint64_t paths = 400000;
    const auto mc = killed_kernel_monte_carlo(k, paths, 16, -6.0, 1.0, 0.1, 3, 2);
    const double p = killed_survival(k);
    const double frac = static_cast<double>(mc.survivors) / static_cast<double>(paths);
    EXPECT_NEAR(frac, p, 4 * std::sqrt(p * (1 - p) / paths));
    for (std::size_t i = 0; i < mc.counts.size(); ++i) {
        if (mc.counts[i] < 5000) continue;
        const double a = mc.bin_lo + static_cast<double>(i) * mc.bin_width;
        const double exact = killed_kernel_bin_average(k, a, a + mc.bin_width);
        const double rel_se = 1.0 / std::sqrt(static_cast<double>(mc.counts[i]));
        EXPECT_NEAR(mc.density(i) / exact, 1.0, 4 * rel_se) << a;
    }
}

TEST(Killed, MonteCarloIsReproducibleAcrossThreadCounts) {
    const KernelPoint k{0.0, -0.5, 1.0, 0.0, 1.0};
    const auto a = killed_kernel_monte_carlo(k, 200000, 8, -6.0, 1.0, 0.1, 4, 1);
    const auto b = killed_kernel_monte_carlo(k, 200000, 8, -6.0, 1.0, 0.1, 4, 3);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_EQ(a.survivors, b.survivors);
}

TEST(Zeta, Values) {
    EXPECT_NEAR(zeta(1.0, 1.0, 1.0), 256.0 * std::exp(-1.0 / 16.0), 1e-12);
    EXPECT_NEAR(zeta(2.0, 4.0, 2.0), 256.0 * 2.0 / (4.0 * 8.0) * std::exp(-4.0 / 64.0), 1e-12);
    EXPECT_EQ(zeta(1.0, 0.0, 1.0), 0.0);
    EXPECT_EQ(zeta(1.0, 1.0, std::numeric_limits<double>::infinity()), 0.0);
    EXPECT_EQ(zeta(1.0, 1.0, 0.0), std::numeric_limits<double>::infinity());
    EXPECT_EQ(zeta(1.0, 1.0, -3.0), std::numeric_limits<double>::infinity());
    EXPECT_THROW(zeta(0.0, 1.0, 1.0), DomainError);
    EXPECT_THROW(zeta(1.0, -1.0, 1.0), DomainError);
}

TEST(Zeta, Monotone) {
    for (double y = 0.1; y < 20; y *= 1.3) EXPECT_GT(zeta(1.0, 1.0, y), zeta(1.0, 1.0, y * 1.3));
    for (double s = 0.01; s < 100; s *= 1.5) EXPECT_LT(zeta(1.0, s, 2.0), zeta(1.0, s * 1.5, 2.0));
    EXPECT_GT(zeta(0.5, 1.0, 1.0), zeta(1.0, 1.0, 1.0));
}

TEST(Bounds, SamePointIsZero) {
    const PointPair p{{0.5, -0.3}, {0.5, -0.3}};
    const auto m = difference_bound_moving(1.0, p);
    EXPECT_EQ(m.lhs, 0.0);
    EXPECT_TRUE(m.holds);
    const auto s = difference_bound_static(1.0, p);
    EXPECT_EQ(s.lhs, 0.0);
    EXPECT_TRUE(s.holds);
}

TEST(Bounds, ExamplePairsHold) {
    const PointPair close{{0.5, -0.3}, {0.6, -0.2}};
    const auto m = difference_bound_moving(1.0, close);
    EXPECT_GT(m.lhs, 0.0);
    EXPECT_GT(m.quadrature, 0.0);
    EXPECT_TRUE(m.holds);
    EXPECT_NEAR(m.rhs, 512.0 * std::exp(-1.0 * (-0.3 - 0.5)) * (std::abs(-0.8 - (-0.8)) + std::sqrt(0.1)), 1e-10);
    const auto s = difference_bound_static(1.0, close);
    EXPECT_TRUE(s.holds);
    EXPECT_NEAR(s.rhs, 128.0 * (0.1 + std::sqrt(0.1)), 1e-12);
    EXPECT_LT(s.ratio, 1.0);
}

TEST(Bounds, LhsGrowsWithSeparation) {
    double prev = 0.0;
    for (double d : {0.01, 0.05, 0.2, 0.5}) {
        const auto r = difference_bound_static(1.0, {{0.5, 0.0}, {0.5, d}});
        EXPECT_GT(r.quadrature, prev);
        prev = r.quadrature;
    }
}

TEST(Bounds, RandomPairsHold) {
    auto rng = rng::make_stream(1, "kernel_pairs", 0);
    for (double v : {0.5, 1.0, 2.0}) {
        const auto mv = verify_difference_bound_moving(v, random_moving_pairs(v, 3, rng));
        EXPECT_TRUE(mv.all_hold) << v;
        const auto st = verify_difference_bound_static(v, random_static_pairs(v, 3, rng));
        EXPECT_TRUE(st.all_hold) << v;
        EXPECT_LT(st.max_ratio, 1.0);
    }
}

TEST(Bounds, PreconditionsNameTheConstraint) {
    auto message = [](auto&& fn) {
        try {
            fn();
        } catch (const PreconditionError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message([] { difference_bound_moving(1.0, {{2.0, 0.0}, {0.5, 0.0}}); }).find("t outside"),
              std::string::npos);
    EXPECT_NE(message([] { difference_bound_moving(1.0, {{0.5, 3.0}, {0.5, 0.0}}); }).find("x - v t"),
              std::string::npos);
    EXPECT_NE(message([] { difference_bound_static(1.0, {{0.5, 3.0}, {0.5, 0.0}}); }).find("x outside"),
              std::string::npos);
    EXPECT_NE(message([] { difference_bound_static(-1.0, {{0.5, 0.0}, {0.5, 0.0}}); }).find("v must be positive"),
              std::string::npos);
}

TEST(Profile, ResidualIsSecondOrder) {
    const auto prof = model::ProfileParams::from_wave_speed(0.5, 0.75, 2.0);
    ProfileGrid g;
    g.dt = 1e-7;
    g.dx = 0.02;
    const auto a = verify_profile_pde(prof, g);
    g.dx = 0.01;
    const auto b = verify_profile_pde(prof, g);
    EXPECT_TRUE(a.zero_right);
    const double order = std::log2(a.max_residual / b.max_residual);
    EXPECT_NEAR(order, 2.0, 0.2);
    EXPECT_LT(b.slope_rel_error, 1e-6);
    EXPECT_NEAR(b.boundary_slope, -prof.eps_small, 1e-6);
}
