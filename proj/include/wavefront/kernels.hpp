#pragma once

// Heat kernel, the kernel killed on x = v t, the escape bound zeta, and numerical
// checks of the kernel difference bounds and of the travelling profile PDE.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/model.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/rng.hpp"

namespace wavefront::kernels {

struct KernelPoint {
    double s = 0.0;
    double y = 0.0;
    double t = 1.0;
    double x = 0.0;
    double v = 0.0;
};

namespace detail {
/// e^{-w^2/(4 tau)} / sqrt(4 pi tau)
inline double gauss(double w, double tau) {
    return std::exp(-w * w / (4.0 * tau)) / std::sqrt(4.0 * std::numbers::pi * tau);
}
} // namespace detail

inline double heat_kernel(const KernelPoint& k) {
    if (!(k.s < k.t)) throw DomainError("heat_kernel: need s < t");
    return detail::gauss(k.x - k.y, k.t - k.s);
}

/// Density of B_t (generator d^2/dx^2) started at y at time s and killed on first reaching x = v t.
inline double killed_kernel(const KernelPoint& k) {
    if (!(k.s < k.t)) throw DomainError("killed_kernel: need s < t");
    const double y0 = k.y - k.v * k.s, z = k.x - k.v * k.t, tau = k.t - k.s;
    if (y0 >= 0.0 || z >= 0.0) return 0.0;
    // image charge at -y0; -expm1 keeps the difference accurate when z y0 / tau is small
    const double image = -std::expm1(-z * y0 / tau);
    const double g = detail::gauss(z - y0, tau) * image;
    return std::exp(-0.5 * k.v * (z - y0) - 0.25 * k.v * k.v * tau) * g;
}

/// 2^8 sqrt(s) / (theta^2 y^3) e^{-y^2/(16 s)}; 0 at y = +inf, +inf for y <= 0.
inline double zeta(double theta, double s, double y) {
    if (!(theta > 0.0)) throw DomainError("zeta: theta must be positive");
    if (!(s >= 0.0)) throw DomainError("zeta: s must be non-negative");
    if (y == std::numeric_limits<double>::infinity()) return 0.0;
    if (!(y > 0.0)) return std::numeric_limits<double>::infinity();
    if (s == 0.0) return 0.0;
    return 256.0 * std::sqrt(s) / (theta * theta * y * y * y) * std::exp(-y * y / (16.0 * s));
}

// ---------------------------------------------------------------------------
// Difference bounds
// ---------------------------------------------------------------------------

struct SpaceTime {
    double t = 0.0;
    double x = 0.0;
};

struct PointPair {
    SpaceTime a; ///< (t, x)
    SpaceTime b; ///< (t', x')
};

struct QuadratureSpec {
    double rel_tol = 1e-9;
    unsigned max_depth = 12;
    double window_sigmas = 12.0; ///< inner truncation half-width in kernel standard deviations sqrt(2 tau)
};

inline void to_json(nlohmann::json& j, const QuadratureSpec& q) {
    j = {{"rel_tol", q.rel_tol}, {"max_depth", q.max_depth}, {"window_sigmas", q.window_sigmas}};
}

struct PairResult {
    double lhs = 0.0;              ///< quadrature value + quadrature error estimate + truncation bound
    double quadrature = 0.0;       ///< includes the integrated inner error estimates
    double quadrature_error = 0.0;
    double truncation_bound = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool holds = false;
};

inline void to_json(nlohmann::json& j, const PairResult& r) {
    j = {{"lhs", r.lhs},       {"quadrature", r.quadrature}, {"quadrature_error", r.quadrature_error},
         {"truncation_bound", r.truncation_bound}, {"rhs", r.rhs}, {"ratio", r.ratio}, {"holds", r.holds}};
}

struct BoundReport {
    std::vector<PairResult> pairs;
    double max_ratio = 0.0;
    bool all_hold = true;
};

namespace detail {

/// One kernel term A * D(y) in the reduced variable; inactive when s >= its time.
struct Term {
    bool active = false;
    double tau = 0.0;
    double centre = 0.0; ///< peak of D^2 (times the weight) in y
    double amp = 0.0;    ///< A
};

/// Integrates f on [lo, hi], split at `cuts`, with adaptive Gauss-Kronrod.
template <class F>
double integrate_split(F&& f, double lo, double hi, std::vector<double> cuts, const QuadratureSpec& q, double& err) {
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = std::max(lo, cuts[i]), b = std::min(hi, cuts[i + 1]);
        if (!(b > a)) continue;
        double e = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, q.max_depth, q.rel_tol, &e);
        err += e;
    }
    return total;
}

inline std::vector<double> cuts_around(const std::vector<Term>& terms) {
    std::vector<double> cuts;
    for (const auto& t : terms) {
        if (!t.active) continue;
        const double sd = std::sqrt(2.0 * t.tau);
        for (double k : {-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0}) cuts.push_back(t.centre + k * sd);
    }
    return cuts;
}

/// Integral over |y - centre| > a of A^2 g_tau(y - centre)^2, i.e. an upper bound for the
/// part of A^2 D^2 outside the window.
inline double square_tail(double amp, double tau, double a) {
    const double sq = amp * amp / (4.0 * std::numbers::pi * tau);
    return sq * std::sqrt(2.0 * std::numbers::pi * tau) * std::erfc(a / std::sqrt(2.0 * tau));
}

/// Outer integral over s in [0, t_max] of inner(s), split at the smaller time and
/// substituted s = b - r^2 on each piece to absorb the 1/sqrt(b - s) singularity.
template <class Inner>
double integrate_time(Inner&& inner, double t1, double t2, const QuadratureSpec& q, double& err) {
    const double tmin = std::min(t1, t2), tmax = std::max(t1, t2);
    double total = 0.0;
    auto piece = [&](double lower, double b) {
        if (!(b > lower)) return;
        auto g = [&](double r) { return 2.0 * r * inner(b - r * r); };
        double e = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, std::sqrt(b - lower), q.max_depth,
                                                                              q.rel_tol, &e);
        err += e;
    };
    piece(0.0, tmin);
    piece(tmin, tmax);
    return total;
}

inline PairResult finish(double quad, double qerr, double trunc, double rhs) {
    PairResult r;
    r.quadrature = quad;
    r.quadrature_error = qerr;
    r.truncation_bound = trunc;
    r.lhs = quad + qerr + trunc;
    r.rhs = rhs;
    r.ratio = rhs > 0.0 ? r.lhs / rhs : (r.lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.holds = r.lhs <= rhs;
    return r;
}

inline bool same_point(const PointPair& p) { return p.a.t == p.b.t && p.a.x == p.b.x; }

} // namespace detail

/// lhs = int int (G^(v)_{s,y;t',x'} - G^(v)_{s,y;t,x})^2 e^{-v(y - v s)} ds dy,
/// rhs = 2^9 e^{-v(x - v t)} (|dz| + |dt|^{1/2}) with z = x - v t.
inline PairResult difference_bound_moving(double v, const PointPair& pair, const QuadratureSpec& q = {}) {
    if (!(v > 0.0)) throw PreconditionError("moving bound: v must be positive");
    const double t = pair.a.t, tp = pair.b.t;
    const double z = pair.a.x - v * t, zp = pair.b.x - v * tp;
    const double tcap = 1.0 / (v * v);
    if (!(t >= 0.0 && t <= tcap)) throw PreconditionError("moving bound: t outside [0, v^-2]");
    if (!(tp >= 0.0 && tp <= tcap)) throw PreconditionError("moving bound: t' outside [0, v^-2]");
    if (!(z <= 0.0)) throw PreconditionError("moving bound: x - v t must be <= 0");
    if (!(zp <= 0.0)) throw PreconditionError("moving bound: x' - v t' must be <= 0");
    if (!(std::abs(zp - z) <= 1.0 / v)) throw PreconditionError("moving bound: |(x' - v t') - (x - v t)| exceeds 1/v");
    const double rhs = 512.0 * std::exp(-v * z) * (std::abs(zp - z) + std::sqrt(std::abs(tp - t)));
    if (detail::same_point(pair)) return detail::finish(0.0, 0.0, 0.0, rhs);

    // In y0 = y - v s the tilt cancels against the weight; what remains is
    // (A' D'(y0) - A D(y0))^2, D(y0) = g(z - y0) - g(z + y0), on y0 < 0.
    auto terms_at = [&](double s) {
        std::vector<detail::Term> terms(2);
        const double times[2] = {t, tp}, zs[2] = {z, zp};
        for (int k = 0; k < 2; ++k) {
            if (s < times[k]) {
                terms[k].active = true;
                terms[k].tau = times[k] - s;
                terms[k].centre = zs[k];
                terms[k].amp = std::exp(-0.5 * v * zs[k] - 0.25 * v * v * terms[k].tau);
            }
        }
        return terms;
    };
    auto D = [](const detail::Term& term, double y0) {
        if (!term.active || term.tau <= 0.0) return 0.0;
        const double zc = term.centre;
        return term.amp * detail::gauss(zc - y0, term.tau) * -std::expm1(-zc * y0 / term.tau);
    };
    auto window = [&](const std::vector<detail::Term>& terms) {
        double lo = 0.0;
        for (const auto& tm : terms)
            if (tm.active) lo = std::min(lo, tm.centre - q.window_sigmas * std::sqrt(2.0 * tm.tau));
        return lo;
    };

    // inner error estimates are integrated along with the values
    auto inner = [&](double s) {
        const auto terms = terms_at(s);
        if (s >= std::max(t, tp)) return 0.0;
        double inner_err = 0.0;
        auto f = [&](double y0) {
            const double diff = D(terms[1], y0) - D(terms[0], y0);
            return diff * diff;
        };
        const double val = detail::integrate_split(f, window(terms), 0.0, detail::cuts_around(terms), q, inner_err);
        return val + inner_err;
    };
    // (a - b)^2 <= 2 a^2 + 2 b^2, and 0 <= D <= g(z - y0) on y0 < 0.
    auto tail = [&](double s) {
        const auto terms = terms_at(s);
        const double lo = window(terms);
        double sum = 0.0;
        for (const auto& tm : terms)
            if (tm.active) sum += 2.0 * detail::square_tail(tm.amp, tm.tau, tm.centre - lo);
        return sum;
    };
    double outer_err = 0.0, tail_err = 0.0;
    const double quad = detail::integrate_time(inner, t, tp, q, outer_err);
    const double trunc = detail::integrate_time(tail, t, tp, q, tail_err);
    return detail::finish(quad, outer_err, trunc + tail_err, rhs);
}

/// lhs = int int (G_{s,y;t',x'} - G_{s,y;t,x})^2 e^{-v y} ds dy, rhs = 2^7 (|dx| + |dt|^{1/2}).
inline PairResult difference_bound_static(double v, const PointPair& pair, const QuadratureSpec& q = {}) {
    if (!(v > 0.0)) throw PreconditionError("static bound: v must be positive");
    const double t = pair.a.t, tp = pair.b.t, x = pair.a.x, xp = pair.b.x;
    const double tcap = 1.0 / (v * v), xcap = 2.0 / v;
    if (!(t >= 0.0 && t <= tcap)) throw PreconditionError("static bound: t outside [0, v^-2]");
    if (!(tp >= 0.0 && tp <= tcap)) throw PreconditionError("static bound: t' outside [0, v^-2]");
    if (!(std::abs(x) <= xcap)) throw PreconditionError("static bound: x outside [-2/v, 2/v]");
    if (!(std::abs(xp) <= xcap)) throw PreconditionError("static bound: x' outside [-2/v, 2/v]");
    const double rhs = 128.0 * (std::abs(xp - x) + std::sqrt(std::abs(tp - t)));
    if (detail::same_point(pair)) return detail::finish(0.0, 0.0, 0.0, rhs);

    // G e^{-v y/2} = A g(y - c) with c = x - v tau and A = e^{-v x/2 + v^2 tau/4}.
    auto terms_at = [&](double s) {
        std::vector<detail::Term> terms(2);
        const double times[2] = {t, tp}, xs[2] = {x, xp};
        for (int k = 0; k < 2; ++k) {
            if (s < times[k]) {
                const double tau = times[k] - s;
                terms[k] = {true, tau, xs[k] - v * tau, std::exp(-0.5 * v * xs[k] + 0.25 * v * v * tau)};
            }
        }
        return terms;
    };
    auto G = [](const detail::Term& term, double y) {
        return term.active ? term.amp * detail::gauss(y - term.centre, term.tau) : 0.0;
    };
    auto bounds = [&](const std::vector<detail::Term>& terms) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& tm : terms)
            if (tm.active) {
                const double w = q.window_sigmas * std::sqrt(2.0 * tm.tau);
                lo = std::min(lo, tm.centre - w);
                hi = std::max(hi, tm.centre + w);
            }
        return std::pair{lo, hi};
    };
    auto inner = [&](double s) {
        if (s >= std::max(t, tp)) return 0.0;
        const auto terms = terms_at(s);
        double inner_err = 0.0;
        auto f = [&](double y) {
            const double diff = G(terms[1], y) - G(terms[0], y);
            return diff * diff;
        };
        const auto [lo, hi] = bounds(terms);
        const double val = detail::integrate_split(f, lo, hi, detail::cuts_around(terms), q, inner_err);
        return val + inner_err;
    };
    auto tail = [&](double s) {
        const auto terms = terms_at(s);
        const auto [lo, hi] = bounds(terms);
        double sum = 0.0;
        for (const auto& tm : terms)
            if (tm.active) sum += 2.0 * detail::square_tail(tm.amp, tm.tau, std::min(tm.centre - lo, hi - tm.centre));
        return sum;
    };
    double outer_err = 0.0, tail_err = 0.0;
    const double quad = detail::integrate_time(inner, t, tp, q, outer_err);
    const double trunc = detail::integrate_time(tail, t, tp, q, tail_err);
    return detail::finish(quad, outer_err, trunc + tail_err, rhs);
}

inline BoundReport verify_difference_bound_moving(double v, const std::vector<PointPair>& pairs,
                                                  const QuadratureSpec& q = {}) {
    BoundReport rep;
    for (const auto& p : pairs) {
        rep.pairs.push_back(difference_bound_moving(v, p, q));
        rep.max_ratio = std::max(rep.max_ratio, rep.pairs.back().ratio);
        rep.all_hold = rep.all_hold && rep.pairs.back().holds;
    }
    return rep;
}

inline BoundReport verify_difference_bound_static(double v, const std::vector<PointPair>& pairs,
                                                  const QuadratureSpec& q = {}) {
    BoundReport rep;
    for (const auto& p : pairs) {
        rep.pairs.push_back(difference_bound_static(v, p, q));
        rep.max_ratio = std::max(rep.max_ratio, rep.pairs.back().ratio);
        rep.all_hold = rep.all_hold && rep.pairs.back().holds;
    }
    return rep;
}

/// Uniform random pairs satisfying the moving-bound hypotheses.
template <class Engine>
std::vector<PointPair> random_moving_pairs(double v, std::size_t n, Engine& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<PointPair> out;
    const double tcap = 1.0 / (v * v);
    while (out.size() < n) {
        const double t = tcap * unit(rng), tp = tcap * unit(rng);
        const double z = -(2.0 / v) * unit(rng);
        const double zp = z + (1.0 / v) * (2.0 * unit(rng) - 1.0);
        if (zp > 0.0) continue;
        out.push_back({{t, z + v * t}, {tp, zp + v * tp}});
    }
    return out;
}

template <class Engine>
std::vector<PointPair> random_static_pairs(double v, std::size_t n, Engine& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<PointPair> out;
    const double tcap = 1.0 / (v * v), xcap = 2.0 / v;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({{tcap * unit(rng), xcap * (2.0 * unit(rng) - 1.0)}, {tcap * unit(rng), xcap * (2.0 * unit(rng) - 1.0)}});
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle for the killed kernel
// ---------------------------------------------------------------------------

struct KilledMonteCarlo {
    double bin_lo = 0.0;
    double bin_width = 0.1;
    std::vector<std::uint64_t> counts; ///< survivors ending in each bin
    std::uint64_t paths = 0;
    std::uint64_t survivors = 0;

    double density(std::size_t i) const {
        return static_cast<double>(counts[i]) / (static_cast<double>(paths) * bin_width);
    }
};

/// Brownian paths (variance 2 per unit time) from (s, y) to t on `steps` steps, killed
/// on x >= v r. Between grid times the crossing probability of the linear boundary
/// given both endpoints is exp(-w0 w1 / dt) (w = x - v r), so killing is exact in law.
inline KilledMonteCarlo killed_kernel_monte_carlo(const KernelPoint& k, std::uint64_t paths, std::size_t steps,
                                                  double bin_lo, double bin_hi, double bin_width, std::uint64_t seed,
                                                  unsigned threads = 0) {
    if (!(k.s < k.t)) throw DomainError("killed_kernel_monte_carlo: need s < t");
    if (steps < 1 || paths < 1 || !(bin_hi > bin_lo) || !(bin_width > 0.0))
        throw PreconditionError("killed_kernel_monte_carlo: bad sampling parameters");
    const auto nbins = static_cast<std::size_t>(std::llround((bin_hi - bin_lo) / bin_width));
    const double dt = (k.t - k.s) / static_cast<double>(steps);
    const double sd = std::sqrt(2.0 * dt);
    constexpr std::size_t kChunk = 1 << 16;
    const std::size_t chunks = static_cast<std::size_t>((paths + kChunk - 1) / kChunk);
    std::vector<std::vector<std::uint64_t>> partial(chunks, std::vector<std::uint64_t>(nbins, 0));
    std::vector<std::uint64_t> alive(chunks, 0);
    parallel_for(chunks, resolve_threads(threads), [&](std::size_t c) {
        auto rng = rng::make_stream(seed, "killed_mc", c);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const std::uint64_t begin = c * kChunk, end = std::min<std::uint64_t>(paths, begin + kChunk);
        for (std::uint64_t p = begin; p < end; ++p) {
            double w = k.y - k.v * k.s;
            bool dead = w >= 0.0;
            for (std::size_t i = 0; i < steps && !dead; ++i) {
                const double w1 = w + sd * normal(rng) - k.v * dt;
                if (w1 >= 0.0 || unif(rng) < std::exp(-w * w1 / dt)) dead = true;
                w = w1;
            }
            if (dead) continue;
            ++alive[c];
            const double x = w + k.v * k.t;
            const double pos = (x - bin_lo) / bin_width;
            if (pos >= 0.0 && pos < static_cast<double>(nbins)) ++partial[c][static_cast<std::size_t>(pos)];
        }
    });
    KilledMonteCarlo out;
    out.bin_lo = bin_lo;
    out.bin_width = bin_width;
    out.counts.assign(nbins, 0);
    out.paths = paths;
    for (std::size_t c = 0; c < chunks; ++c) {
        out.survivors += alive[c];
        for (std::size_t i = 0; i < nbins; ++i) out.counts[i] += partial[c][i];
    }
    return out;
}

/// Mean of killed_kernel over x in [a, b].
inline double killed_kernel_bin_average(KernelPoint k, double a, double b) {
    auto f = [&](double x) {
        k.x = x;
        return killed_kernel(k);
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 10, 1e-12) / (b - a);
}

/// Integral of killed_kernel over x < v t.
inline double killed_survival(KernelPoint k) {
    const double edge = k.v * k.t;
    const double sd = std::sqrt(2.0 * (k.t - k.s));
    auto f = [&](double x) {
        k.x = x;
        return killed_kernel(k);
    };
    const double lo = std::min(k.y, edge) - 14.0 * sd;
    double total = 0.0;
    for (double a = lo; a < edge; a += sd) total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, std::min(edge, a + sd), 10, 1e-12);
    return total;
}

// ---------------------------------------------------------------------------
// Travelling profile residual
// ---------------------------------------------------------------------------

struct ProfileGrid {
    double dx = 0.01;
    double dt = 2.5e-5;
    double z_min = -2.0; ///< leftmost x - v t checked
    double t_max = 0.0;  ///< 0 means T
    std::size_t time_points = 5;
};

struct ProfileResidual {
    double max_residual = 0.0;
    double at_z = 0.0;
    double at_t = 0.0;
    bool zero_right = true;      ///< rho == 0 for x > v t on the grid
    double boundary_slope = 0.0; ///< one-sided d rho / dx at x = v t-
    double slope_rel_error = 0.0;
};

inline void to_json(nlohmann::json& j, const ProfileResidual& r) {
    j = {{"max_residual", r.max_residual}, {"at_z", r.at_z}, {"at_t", r.at_t}, {"zero_right", r.zero_right},
         {"boundary_slope", r.boundary_slope}, {"slope_rel_error", r.slope_rel_error}};
}

/// Finite-difference residual of rho(t, x) = F(x - v t) in rho_t = rho_xx + fbar(rho),
/// forward in time, centred in space, on x - v t in [z_min, -dx].
inline ProfileResidual verify_profile_pde(const model::ProfileParams& prof, const ProfileGrid& grid) {
    model::require_consistent(prof);
    if (!(grid.dx > 0.0 && grid.dt > 0.0 && grid.z_min < -grid.dx) || grid.time_points < 1)
        throw PreconditionError("verify_profile_pde: bad grid");
    const double tmax = grid.t_max > 0.0 ? grid.t_max : prof.T;
    auto rho = [&](double t, double x) { return model::profile_F(x - prof.v * t, prof); };
    ProfileResidual out;
    for (std::size_t k = 0; k < grid.time_points; ++k) {
        const double t = grid.time_points == 1 ? 0.0 : tmax * static_cast<double>(k) / static_cast<double>(grid.time_points - 1);
        const double edge = prof.v * t;
        const auto n = static_cast<std::size_t>(std::floor(-grid.z_min / grid.dx));
        for (std::size_t i = 1; i <= n; ++i) {
            const double x = edge - static_cast<double>(i) * grid.dx;
            const double r0 = rho(t, x);
            const double dt_term = (rho(t + grid.dt, x) - r0) / grid.dt;
            const double lap = (rho(t, x + grid.dx) - 2.0 * r0 + rho(t, x - grid.dx)) / (grid.dx * grid.dx);
            const double res = std::abs(dt_term - lap - model::majorant(r0, prof));
            // at i = 1 the stencil touches the boundary, where rho has a kink
            if (i > 1 && res > out.max_residual) {
                out.max_residual = res;
                out.at_z = x - edge;
                out.at_t = t;
            }
        }
        for (std::size_t i = 0; i <= 10; ++i)
            if (rho(t, edge + static_cast<double>(i) * grid.dx) != 0.0) out.zero_right = false;
    }
    // second-order one-sided difference on the left branch at z = 0
    const double h = 1e-4;
    const double f0 = 0.0, f1 = model::profile_F(-h, prof), f2 = model::profile_F(-2.0 * h, prof);
    out.boundary_slope = (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h);
    out.slope_rel_error = std::abs(out.boundary_slope + prof.eps_small) / prof.eps_small;
    return out;
}

} // namespace wavefront::kernels
