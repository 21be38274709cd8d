#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "wavefront/front.hpp"

using namespace wavefront;
using namespace wavefront::front;

namespace {

std::vector<Point> line(double speed, double intercept, double t1, std::size_t n) {
    std::vector<Point> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t1 * static_cast<double>(i) / static_cast<double>(n - 1);
        out.push_back({t, intercept + speed * t});
    }
    return out;
}

std::vector<Point> noisy_line(double speed, double t1, std::size_t n, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, sd);
    auto pts = line(speed, 0.0, t1, n);
    for (auto& p : pts) p.x += N(rng);
    return pts;
}

} // namespace

TEST(Functionals, HeavisideFrontsAtZero) {
    const auto s = spde::heaviside(100, 37, 0.1);
    EXPECT_NEAR(right_front(s), 0.0, 1e-12);
    EXPECT_NEAR(left_front(s), 0.0, 1e-12);
    EXPECT_NEAR(interface_width(s), 0.0, 1e-12);
}

TEST(Functionals, Sentinels) {
    spde::FieldState s;
    s.dx = 0.1;
    s.values.assign(20, 0.0);
    EXPECT_EQ(right_front(s), kNegInf);
    EXPECT_NEAR(left_front(s), -0.05, 1e-15);
    EXPECT_EQ(interface_width(s), kPosInf);
    s.values.assign(20, 1.0);
    EXPECT_EQ(left_front(s), kPosInf);
    EXPECT_NEAR(right_front(s), 1.95, 1e-12);
}

TEST(Functionals, IntermediateValues) {
    spde::FieldState s;
    s.dx = 0.5;
    s.frame_offset = 10.0;
    s.values = {1, 1, 0.7, 0, 0.2, 0, 0};
    EXPECT_NEAR(left_front(s), 10.0 + 2 * 0.5 - 0.25, 1e-12);
    EXPECT_NEAR(right_front(s), 10.0 + 4 * 0.5 + 0.25, 1e-12);
    EXPECT_GE(interface_width(s), 0.0);
}

TEST(Functionals, TranslationEquivariance) {
    auto s = spde::heaviside(50, 20, 0.2);
    s.values[20] = 0.4;
    s.values[23] = 0.1;
    auto t = s;
    t.frame_offset += 3.7;
    EXPECT_NEAR(right_front(t) - right_front(s), 3.7, 1e-12);
    EXPECT_NEAR(left_front(t) - left_front(s), 3.7, 1e-12);
    EXPECT_NEAR(interface_width(t), interface_width(s), 1e-12);
}

TEST(Estimate, ExactLineHasZeroWidthInterval) {
    const auto pts = line(2.0, 1.0, 50.0, 501);
    const auto e = estimate_speed(std::span<const Point>(pts));
    EXPECT_NEAR(e.slope, 2.0, 1e-12);
    EXPECT_NEAR(e.intercept, 1.0, 1e-10);
    EXPECT_NEAR(e.ci_low, 2.0, 1e-10);
    EXPECT_NEAR(e.ci_high, 2.0, 1e-10);
}

TEST(Estimate, NoisyLineCovers) {
    int covered = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto pts = noisy_line(2.0, 50.0, 501, 0.5, s);
        EstimateOptions opt;
        opt.seed = s;
        opt.resamples = 300;
        const auto e = estimate_speed(std::span<const Point>(pts), opt);
        EXPECT_NEAR(e.slope, 2.0, 0.02);
        EXPECT_LE(e.ci_low, e.slope);
        EXPECT_GE(e.ci_high, e.slope);
        covered += e.ci_low <= 2.0 && 2.0 <= e.ci_high;
    }
    EXPECT_GE(covered, 15);
}

TEST(Estimate, ConstantSeriesHasZeroSpeed) {
    const auto pts = line(0.0, 4.2, 10.0, 101);
    const auto e = estimate_speed(std::span<const Point>(pts));
    EXPECT_NEAR(e.slope, 0.0, 1e-12);
    EXPECT_NEAR(e.half_width(), 0.0, 1e-12);
}

TEST(Estimate, EquivariantUnderSpaceShiftAndTimeRescaling) {
    const auto pts = noisy_line(1.5, 30.0, 301, 0.3, 4);
    const auto base = estimate_speed(std::span<const Point>(pts));
    auto shifted = pts;
    for (auto& p : shifted) p.x += 17.0;
    const auto a = estimate_speed(std::span<const Point>(shifted));
    EXPECT_NEAR(a.slope, base.slope, 1e-9);
    EXPECT_NEAR(a.ci_low, base.ci_low, 1e-9);
    EXPECT_NEAR(a.ci_high, base.ci_high, 1e-9);
    auto rescaled = pts;
    for (auto& p : rescaled) p.t *= 2.0;
    const auto b = estimate_speed(std::span<const Point>(rescaled));
    EXPECT_NEAR(b.slope, base.slope / 2.0, 1e-9);
    EXPECT_NEAR(b.ci_high, base.ci_high / 2.0, 1e-9);
}

TEST(Estimate, BurnInDropsTheTransient) {
    auto pts = line(2.0, 0.0, 10.0, 101);
    for (auto& p : pts)
        if (p.t < 2.0) p.x = 5.0 * p.t; // fast transient before t = 2
    for (auto& p : pts)
        if (p.t >= 2.0) p.x = 10.0 + 2.0 * (p.t - 2.0);
    EstimateOptions opt;
    opt.burn_in_fraction = 0.2;
    EXPECT_NEAR(estimate_speed(std::span<const Point>(pts), opt).slope, 2.0, 1e-12);
}

TEST(Estimate, Failures) {
    EXPECT_THROW(estimate_speed(std::span<const Point>(line(1.0, 0.0, 1.0, 5))), EstimationError);
    auto pts = line(1.0, 0.0, 1.0, 50);
    pts.back().x = kNegInf;
    EXPECT_THROW(estimate_speed(std::span<const Point>(pts)), EstimationError);
    EstimateOptions bad;
    bad.burn_in_fraction = 1.0;
    EXPECT_THROW(estimate_speed(std::span<const Point>(line(1.0, 0.0, 1.0, 50)), bad), PreconditionError);
    EXPECT_THROW(estimate_speed(std::vector<std::vector<Point>>{}), EstimationError);
}

TEST(Estimate, EnsemblePoolsAndBootstrapsRealizations) {
    std::vector<std::vector<Point>> ens;
    for (std::uint64_t s = 0; s < 30; ++s) ens.push_back(noisy_line(3.0, 20.0, 201, 1.0, 100 + s));
    EstimateOptions opt;
    opt.seed = 9;
    const auto e = estimate_speed(ens, opt);
    EXPECT_EQ(e.n_realizations, 30u);
    EXPECT_NEAR(e.slope, 3.0, 0.02);
    EXPECT_LT(e.ci_low, 3.0 + 0.02);
    EXPECT_GT(e.ci_high, 3.0 - 0.02);
    EXPECT_LT(e.half_width(), 0.05);
    const auto again = estimate_speed(ens, opt);
    EXPECT_EQ(again.ci_low, e.ci_low);
}

TEST(Estimate, WindowedSpeed) {
    auto pts = line(1.0, 0.0, 30.0, 301);
    for (auto& p : pts)
        if (p.t > 10.0) p.x = 10.0 + 3.0 * (p.t - 10.0);
    EXPECT_NEAR(windowed_speed(pts, 0.0, 10.0), 1.0, 1e-12);
    EXPECT_NEAR(windowed_speed(pts, 10.0, 30.0), 3.0, 1e-12);
    EXPECT_THROW(windowed_speed(pts, 40.0, 50.0), EstimationError);
}

TEST(Estimate, DeterministicKppFrontNearTwo) {
    spde::SchemeConfig scheme;
    scheme.window_cells = 1500;
    scheme.shift_trigger_margin = 200;
    const model::DriftFunction f(model::DriftSpec{model::Kpp{}});
    const auto tr = spde::evolve(spde::heaviside(1500, 600, scheme.dx), f, 0.0, 50.0, scheme);
    const auto e = estimate_speed(tr.front_series);
    EXPECT_NEAR(e.slope, 2.0, 0.1);
}
