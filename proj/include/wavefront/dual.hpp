#pragma once

// Branching-coalescing Brownian motion and the moment duality with the SPDE:
// P(R_dual(t) > x) = E[u(t, x)] for u(0) = 1{x < 0} and one particle started at 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/model.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/rng.hpp"
#include "wavefront/spde.hpp"

namespace wavefront::dual {

using model::offspring_pmf;
using model::offspring_tail;

/// N = 1 + S with P(S >= n) = prod_{k<n} (1 - p/k), capped at N_max.
class OffspringSampler {
public:
    OffspringSampler(double p, std::uint64_t cap = 1'000'000) : p_(p), cap_(cap) {
        if (!(p > 0.0 && p < 1.0)) throw PreconditionError("offspring sampler: p must lie in (0, 1)");
        if (cap < 2) throw PreconditionError("offspring sampler: cap must be >= 2");
        // P(S >= n) for n = 1 .. kTable by the sequential product
        tail_.resize(kTable + 1);
        tail_[0] = 1.0;
        tail_[1] = 1.0;
        for (std::size_t n = 2; n <= kTable; ++n) tail_[n] = tail_[n - 1] * (1.0 - p / static_cast<double>(n - 1));
        log_cap_tail_ = log_tail(static_cast<double>(cap));
    }

    double p() const { return p_; }
    std::uint64_t cap() const { return cap_; }
    std::uint64_t cap_hits() const { return cap_hits_; }

    /// One uniform per draw: S = max{n >= 1 : P(S >= n) >= U}.
    template <class Engine>
    std::uint64_t operator()(Engine& rng) {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return from_uniform(u);
    }

    std::uint64_t from_uniform(double u) {
        if (std::log(u) <= log_cap_tail_) { // S >= cap, so 1 + S > cap
            ++cap_hits_;
            return cap_;
        }
        std::uint64_t s;
        if (kTable >= cap_ || tail_[kTable] < u) {
            s = 1;
            while (s + 1 <= kTable && tail_[s + 1] >= u) ++s;
        } else {
            // tail_(lo) >= u > tail_(hi)
            std::uint64_t lo = kTable, hi = cap_;
            const double lu = std::log(u);
            while (hi - lo > 1) {
                const std::uint64_t mid = lo + (hi - lo) / 2;
                (log_tail(static_cast<double>(mid)) >= lu ? lo : hi) = mid;
            }
            s = lo;
        }
        return std::min<std::uint64_t>(1 + s, cap_);
    }

    /// log P(S >= n) = lgamma(n-p) - lgamma(1-p) - lgamma(n).
    double log_tail(double n) const { return std::lgamma(n - p_) - std::lgamma(1.0 - p_) - std::lgamma(n); }

private:
    static constexpr std::size_t kTable = 64;
    double p_;
    std::uint64_t cap_;
    std::uint64_t cap_hits_ = 0;
    std::vector<double> tail_;
    double log_cap_tail_;
};

enum class OffspringLaw { binary, heavy_tailed };

struct ParticleSystem {
    std::vector<double> positions;
    double time = 0.0;
    OffspringLaw law = OffspringLaw::binary;
    double branch_rate = 1.0;
    double coalescence_strength = 0.0; ///< eps^2
    std::size_t particle_cap = 1'000'000;
    std::optional<OffspringSampler> sampler; ///< required for heavy_tailed

    static ParticleSystem single(double x, double eps) {
        ParticleSystem s;
        s.positions = {x};
        s.coalescence_strength = eps * eps;
        return s;
    }
    std::uint64_t cap_hits() const { return sampler ? sampler->cap_hits() : 0; }
};

/// Brownian moves with variance 2 dt, pairwise coalescence within delta, then branching.
template <class Engine>
void step_system(ParticleSystem& sys, double dt, double delta, Engine& rng) {
    if (!(dt >= 0.0)) throw PreconditionError("step_system: dt must be non-negative");
    if (!(delta > 0.0)) throw PreconditionError("step_system: delta must be positive");
    if (dt == 0.0) return;
    if (sys.law == OffspringLaw::heavy_tailed && !sys.sampler)
        throw PreconditionError("step_system: heavy-tailed law needs a sampler");
    auto& x = sys.positions;

    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * dt));
    for (double& xi : x) xi += normal(rng);
    std::sort(x.begin(), x.end());

    if (sys.coalescence_strength > 0.0 && x.size() > 1) {
        const double pc = -std::expm1(-sys.coalescence_strength * dt / (2.0 * delta));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<char> alive(x.size(), 1);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!alive[i]) continue;
            for (std::size_t j = i + 1; j < x.size() && x[j] - x[i] < delta; ++j)
                if (alive[j] && unif(rng) < pc) alive[j] = 0;
        }
        std::size_t w = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (alive[i]) x[w++] = x[i];
        x.resize(w);
    }

    if (sys.branch_rate > 0.0) {
        const double pb = -std::expm1(-sys.branch_rate * dt);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (!(unif(rng) < pb)) continue;
            const std::uint64_t k = sys.law == OffspringLaw::binary ? 2 : (*sys.sampler)(rng);
            if (x.size() + (k - 1) > sys.particle_cap) {
                sys.time += dt;
                throw CapacityError("particle cap " + std::to_string(sys.particle_cap) + " exceeded at t=" +
                                    std::to_string(sys.time));
            }
            x.insert(x.end(), k - 1, x[i]);
        }
    }
    sys.time += dt;
}

inline double rightmost(const ParticleSystem& sys) {
    if (sys.positions.empty()) throw PreconditionError("rightmost: empty particle system");
    return *std::max_element(sys.positions.begin(), sys.positions.end());
}

// ---------------------------------------------------------------------------
// Duality test
// ---------------------------------------------------------------------------

struct DualityBudget {
    std::size_t spde_realizations = 4000;
    std::size_t dual_replicas = 40000;
    double dual_dt = 1e-3;
    double delta = 0.05;
    std::size_t particle_cap = 1'000'000;
    OffspringLaw law = OffspringLaw::binary;
    double p = 0.5; ///< heavy-tailed exponent
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

inline void to_json(nlohmann::json& j, const DualityBudget& b) {
    j = {{"spde_realizations", b.spde_realizations},
         {"dual_replicas", b.dual_replicas},
         {"dual_dt", b.dual_dt},
         {"delta", b.delta},
         {"particle_cap", b.particle_cap},
         {"law", b.law == OffspringLaw::binary ? "binary" : "heavy_tailed"},
         {"p", b.p},
         {"seed", b.seed}};
}

struct DualityRow {
    double x = 0.0;
    double lhs = 0.0; ///< P(R_dual(t) > x)
    double rhs = 0.0; ///< E[u(t, x)]
    double lhs_se = 0.0;
    double rhs_se = 0.0;
    double gap = 0.0;
    double combined_se = 0.0;
};

inline void to_json(nlohmann::json& j, const DualityRow& r) {
    j = {{"x", r.x},           {"lhs", r.lhs},   {"rhs", r.rhs}, {"lhs_se", r.lhs_se},
         {"rhs_se", r.rhs_se}, {"gap", r.gap}, {"combined_se", r.combined_se}};
}

struct DualityReport {
    std::vector<DualityRow> rows;
    double mean_particles = 0.0;
    std::uint64_t cap_hits = 0;
};

/// u linearly interpolated between cell centres; 1 left of the window, 0 right of it.
inline double interpolate(const spde::FieldState& s, double x) {
    const double pos = (x - s.frame_offset) / s.dx;
    if (pos <= 0.0) return pos < 0.0 ? 1.0 : s.values.front();
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= s.values.size()) return 0.0; // window extends far past the support
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * s.values[i] + w * s.values[i + 1];
}

/// Both sides by independent Monte Carlo. The SPDE side runs `scheme` from 1{x<0};
/// realization r of the dual uses stream ("dual", r), of the SPDE ("duality_spde", r).
inline DualityReport duality_gap(double t, const std::vector<double>& xs, double eps, const DualityBudget& budget,
                                 const spde::SchemeConfig& scheme, std::size_t window_cells = 0) {
    if (!(eps > 0.0)) throw PreconditionError("duality_gap: eps must be positive");
    if (!(t >= 0.0)) throw PreconditionError("duality_gap: t must be non-negative");
    if (budget.spde_realizations < 2 || budget.dual_replicas < 2)
        throw PreconditionError("duality_gap: both budgets must be at least 2");
    scheme.validate();
    const std::size_t nx = xs.size();

    // SPDE side
    model::DriftSpec drift;
    if (budget.law == OffspringLaw::binary) drift.kind = model::Kpp{};
    else drift.kind = model::PgfDerived{budget.p, 100000};
    const model::DriftFunction f(drift);
    const std::size_t cells = window_cells ? window_cells : scheme.window_cells;
    const auto initial = spde::heaviside(cells, cells / 2, scheme.dx);
    std::vector<std::vector<double>> u_at(budget.spde_realizations, std::vector<double>(nx));
    parallel_for(budget.spde_realizations, resolve_threads(budget.threads), [&](std::size_t r) {
        auto rng = rng::make_stream(budget.seed, "duality_spde", r);
        const auto tr = spde::evolve(initial, f, eps, t, scheme, rng);
        for (std::size_t k = 0; k < nx; ++k) u_at[r][k] = interpolate(tr.final_state, xs[k]);
    });

    // dual side
    std::vector<double> right(budget.dual_replicas);
    std::vector<std::size_t> count(budget.dual_replicas);
    std::vector<std::uint64_t> hits(budget.dual_replicas);
    const auto steps = static_cast<std::size_t>(std::llround(t / budget.dual_dt));
    parallel_for(budget.dual_replicas, resolve_threads(budget.threads), [&](std::size_t r) {
        auto rng = rng::make_stream(budget.seed, "dual", r);
        auto sys = ParticleSystem::single(0.0, eps);
        sys.law = budget.law;
        sys.particle_cap = budget.particle_cap;
        if (budget.law == OffspringLaw::heavy_tailed) sys.sampler.emplace(budget.p);
        for (std::size_t k = 0; k < steps; ++k) step_system(sys, budget.dual_dt, budget.delta, rng);
        right[r] = rightmost(sys);
        count[r] = sys.positions.size();
        hits[r] = sys.cap_hits();
    });

    DualityReport rep;
    const double ns = static_cast<double>(budget.spde_realizations);
    const double nd = static_cast<double>(budget.dual_replicas);
    for (std::size_t k = 0; k < nx; ++k) {
        DualityRow row;
        row.x = xs[k];
        double m = 0.0, m2 = 0.0;
        for (const auto& v : u_at) {
            m += v[k];
            m2 += v[k] * v[k];
        }
        m /= ns;
        const double var = std::max(0.0, (m2 / ns - m * m) * ns / (ns - 1.0));
        row.rhs = m;
        row.rhs_se = std::sqrt(var / ns);
        const auto above = std::count_if(right.begin(), right.end(), [&](double r) { return r > xs[k]; });
        row.lhs = static_cast<double>(above) / nd;
        row.lhs_se = std::sqrt(row.lhs * (1.0 - row.lhs) / (nd - 1.0));
        row.gap = row.lhs - row.rhs;
        row.combined_se = std::hypot(row.lhs_se, row.rhs_se);
        rep.rows.push_back(row);
    }
    double total = 0.0;
    for (auto c : count) total += static_cast<double>(c);
    rep.mean_particles = total / nd;
    for (auto h : hits) rep.cap_hits += h;
    return rep;
}

} // namespace wavefront::dual
