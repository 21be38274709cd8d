#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "wavefront/dual.hpp"

using namespace wavefront;
using namespace wavefront::dual;

TEST(Offspring, FirstProbabilities) {
    for (double p : {0.3, 0.5, 0.8}) {
        EXPECT_NEAR(offspring_pmf(p, 2), p, 1e-15);
        EXPECT_NEAR(offspring_pmf(p, 3), p * (1 - p) / 2, 1e-15);
        EXPECT_NEAR(offspring_pmf(p, 4), p * (1 - p) * (2 - p) / 6, 1e-15);
    }
    EXPECT_THROW(offspring_pmf(0.5, 1), DomainError);
}

TEST(Offspring, PartialSumsPlusTailAreOne) {
    for (double p : {0.5, 0.7})
        for (long long m : {3LL, 10LL, 100LL, 5000LL}) {
            double s = 0.0;
            for (long long n = 2; n < m; ++n) s += offspring_pmf(p, n);
            EXPECT_NEAR(s + model::offspring_tail(p, m), 1.0, 1e-12) << p << " " << m;
        }
}

TEST(Offspring, TailDecaysLikeAPower) {
    // P(N >= n) n^p -> 1/Gamma(1-p)
    const double p = 0.5;
    EXPECT_NEAR(model::offspring_tail(p, 1'000'000) * std::pow(1e6, p), 1.0 / std::tgamma(1 - p), 1e-5);
}

TEST(Sampler, MatchesThePmf) {
    const double p = 0.5;
    OffspringSampler sample(p);
    auto rng = rng::make_stream(1, "offspring", 0);
    const int n = 400000;
    std::map<std::uint64_t, int> counts;
    for (int i = 0; i < n; ++i) ++counts[sample(rng)];
    EXPECT_EQ(counts.count(0), 0u);
    EXPECT_EQ(counts.count(1), 0u);
    for (long long k : {2LL, 3LL, 4LL, 5LL, 10LL, 100LL}) {
        const double q = offspring_pmf(p, k);
        const double se = std::sqrt(q * (1 - q) / n);
        EXPECT_NEAR(counts[static_cast<std::uint64_t>(k)] / double(n), q, 4 * se + 1e-9) << k;
    }
    // tail beyond the table
    int big = 0;
    for (const auto& [k, c] : counts)
        if (k >= 1000) big += c;
    const double tail = model::offspring_tail(p, 1000);
    EXPECT_NEAR(big / double(n), tail, 4 * std::sqrt(tail / n));
}

TEST(Sampler, InversionIsMonotoneAndCapped) {
    OffspringSampler sample(0.5, 5000);
    std::uint64_t prev = sample.from_uniform(1.0);
    EXPECT_EQ(prev, 2u);
    for (double u = 1.0; u > 1e-9; u *= 0.9) {
        const auto k = sample.from_uniform(u);
        EXPECT_GE(k, prev);
        EXPECT_LE(k, 5000u);
        prev = k;
    }
    EXPECT_EQ(sample.from_uniform(1e-300), 5000u);
    EXPECT_GT(sample.cap_hits(), 0u);
}

TEST(Sampler, EmpiricalPgf) {
    const double p = 0.6;
    const std::uint64_t cap = 100000;
    OffspringSampler sample(p, cap);
    auto rng = rng::make_stream(2, "offspring", 0);
    const int n = 200000;
    for (double s : {0.3, 0.8, 0.99}) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += std::pow(s, static_cast<double>(sample(rng)));
        m /= n;
        EXPECT_NEAR(m, model::capped_pgf(p, cap, s), 4 * 0.5 / std::sqrt(double(n))) << s;
    }
}

TEST(Sampler, NearlyBinaryWhenPIsNearOne) {
    OffspringSampler sample(0.999);
    auto rng = rng::make_stream(3, "offspring", 0);
    int two = 0;
    for (int i = 0; i < 100000; ++i) two += sample(rng) == 2;
    EXPECT_GT(two, 99800);
}

TEST(Particles, YuleMeanGrowth) {
    const int reps = 4000;
    double sum = 0, sum2 = 0;
    for (int r = 0; r < reps; ++r) {
        auto rng = rng::make_stream(4, "dual", static_cast<std::uint64_t>(r));
        auto sys = ParticleSystem::single(0.0, 0.0);
        for (int k = 0; k < 1000; ++k) step_system(sys, 1e-3, 0.05, rng);
        const double c = static_cast<double>(sys.positions.size());
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / reps, se = std::sqrt((sum2 / reps - mean * mean) / reps);
    EXPECT_NEAR(mean, std::exp(1.0), 4 * se);
}

TEST(Particles, DiffusionVarianceIsTwoT) {
    const int reps = 20000;
    double sum = 0, sum2 = 0;
    for (int r = 0; r < reps; ++r) {
        auto rng = rng::make_stream(5, "dual", static_cast<std::uint64_t>(r));
        auto sys = ParticleSystem::single(0.0, 0.0);
        sys.branch_rate = 0.0;
        for (int k = 0; k < 50; ++k) step_system(sys, 0.02, 0.05, rng);
        sum += sys.positions[0];
        sum2 += sys.positions[0] * sys.positions[0];
    }
    const double mean = sum / reps, var = sum2 / reps - mean * mean;
    EXPECT_NEAR(mean, 0.0, 4 * std::sqrt(2.0 / reps));
    EXPECT_NEAR(var, 2.0, 4 * 2.0 * std::sqrt(2.0 / reps));
}

TEST(Particles, CountPreservedWithoutBranchingOrCoalescence) {
    ParticleSystem sys;
    sys.positions = {0.0, 0.01, 0.02, 1.0};
    sys.branch_rate = 0.0;
    auto rng = rng::make_stream(6, "dual", 0);
    for (int k = 0; k < 100; ++k) step_system(sys, 1e-3, 0.05, rng);
    EXPECT_EQ(sys.positions.size(), 4u);
}

TEST(Particles, CoalescenceOnlyRemoves) {
    ParticleSystem sys;
    sys.positions.assign(50, 0.0);
    sys.branch_rate = 0.0;
    sys.coalescence_strength = 4.0;
    auto rng = rng::make_stream(7, "dual", 0);
    std::size_t prev = sys.positions.size();
    for (int k = 0; k < 200; ++k) {
        step_system(sys, 1e-3, 0.05, rng);
        EXPECT_LE(sys.positions.size(), prev);
        EXPECT_GE(sys.positions.size(), 1u);
        prev = sys.positions.size();
    }
    EXPECT_LT(prev, 50u);
}

TEST(Particles, ZeroStepIsIdentity) {
    ParticleSystem sys;
    sys.positions = {0.3, -1.0, 2.0};
    auto rng = rng::make_stream(8, "dual", 0);
    step_system(sys, 0.0, 0.05, rng);
    EXPECT_EQ(sys.positions, (std::vector<double>{0.3, -1.0, 2.0}));
    EXPECT_EQ(sys.time, 0.0);
    EXPECT_EQ(rightmost(sys), 2.0);
    EXPECT_THROW(step_system(sys, 0.1, 0.0, rng), PreconditionError);
    sys.positions.clear();
    EXPECT_THROW(rightmost(sys), PreconditionError);
}

TEST(Particles, CapacityIsEnforced) {
    auto sys = ParticleSystem::single(0.0, 0.0);
    sys.particle_cap = 10;
    auto rng = rng::make_stream(9, "dual", 0);
    EXPECT_THROW(
        for (int k = 0; k < 10000; ++k) step_system(sys, 1e-2, 0.05, rng), CapacityError);
    EXPECT_LE(sys.positions.size(), 10u);
}

TEST(Particles, HeavyTailedNeedsSampler) {
    auto sys = ParticleSystem::single(0.0, 0.0);
    sys.law = OffspringLaw::heavy_tailed;
    auto rng = rng::make_stream(9, "dual", 0);
    EXPECT_THROW(step_system(sys, 1e-2, 0.05, rng), PreconditionError);
    sys.sampler.emplace(0.5);
    for (int k = 0; k < 100; ++k) step_system(sys, 1e-2, 0.05, rng);
    EXPECT_GE(sys.positions.size(), 1u);
}

TEST(Interpolate, CellCentresAndOutside) {
    spde::FieldState s;
    s.dx = 0.5;
    s.frame_offset = 0.0;
    s.values = {1.0, 0.5, 0.0, 0.0};
    EXPECT_EQ(interpolate(s, -1.0), 1.0);
    EXPECT_EQ(interpolate(s, 0.5), 0.5);
    EXPECT_NEAR(interpolate(s, 0.25), 0.75, 1e-15);
    EXPECT_EQ(interpolate(s, 10.0), 0.0);
}

TEST(Duality, TimeZero) {
    DualityBudget b;
    b.spde_realizations = 4;
    b.dual_replicas = 4;
    spde::SchemeConfig scheme;
    scheme.window_cells = 100;
    scheme.shift_trigger_margin = 20;
    const auto rep = duality_gap(0.0, {-1.0, 1.0}, 1.0, b, scheme);
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_EQ(rep.rows[0].lhs, 1.0);
    EXPECT_EQ(rep.rows[0].rhs, 1.0);
    EXPECT_EQ(rep.rows[1].lhs, 0.0);
    EXPECT_EQ(rep.rows[1].rhs, 0.0);
    EXPECT_EQ(rep.mean_particles, 1.0);
}

TEST(Duality, Preconditions) {
    DualityBudget b;
    spde::SchemeConfig scheme;
    EXPECT_THROW(duality_gap(1.0, {0.0}, 0.0, b, scheme), PreconditionError);
    b.dual_replicas = 1;
    EXPECT_THROW(duality_gap(1.0, {0.0}, 1.0, b, scheme), PreconditionError);
}

TEST(Duality, SmallBudgetAgrees) {
    DualityBudget b;
    b.spde_realizations = 300;
    b.dual_replicas = 3000;
    b.dual_dt = 2e-3;
    b.seed = 5;
    spde::SchemeConfig scheme;
    scheme.dx = 0.1;
    scheme.dt = 0.004;
    scheme.window_cells = 200;
    scheme.shift_trigger_margin = 40;
    const auto rep = duality_gap(0.5, {-1.0, 0.0, 0.5, 1.5}, 1.0, b, scheme);
    for (const auto& r : rep.rows) EXPECT_LT(std::abs(r.gap), 4 * r.combined_se) << r.x;
}
