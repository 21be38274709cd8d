#pragma once

// Drift catalog, the travelling-profile formulas and the constants ledger.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "wavefront/errors.hpp"

namespace wavefront::model {

// ---------------------------------------------------------------------------
// Drift catalog
// ---------------------------------------------------------------------------

/// z^p on [0, delta], 0 above.
struct PowerClipped {
    double p = 0.5;
    double delta = 1.0;
};
/// min(z^p, sqrt(1 - z)).
struct CappedPower {
    double p = 0.5;
};
/// Piecewise-linear bump of the given width and height, peak at width/2.
struct Tent {
    double width = 1.0;
    double height = 0.5;
};
/// z (1 - z).
struct Kpp {};
/// (1 - theta) theta v^2 z + (1 - theta) v eps_small.
struct LinearMajorant {
    double theta = 0.75;
    double v = 1.0;
    double eps_small = 1.0;
};
/// 1 - z - g(1 - z) with g the pgf of the heavy-tailed offspring law, truncated at `truncation`.
struct PgfDerived {
    double p = 0.5;
    std::size_t truncation = 100000;
};
/// f == 0.
struct ZeroDrift {};

using DriftKind = std::variant<ZeroDrift, Kpp, PowerClipped, CappedPower, Tent, LinearMajorant, PgfDerived>;

/// A drift f(z) = scale * base(z).
struct DriftSpec {
    DriftKind kind = Kpp{};
    double scale = 1.0;
};

inline std::string drift_name(const DriftSpec& spec) {
    return std::visit(
        [](const auto& k) -> std::string {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ZeroDrift>) return "zero";
            else if constexpr (std::is_same_v<K, Kpp>) return "kpp";
            else if constexpr (std::is_same_v<K, PowerClipped>) return "power_clipped";
            else if constexpr (std::is_same_v<K, CappedPower>) return "capped_power";
            else if constexpr (std::is_same_v<K, Tent>) return "tent";
            else if constexpr (std::is_same_v<K, LinearMajorant>) return "linear_majorant";
            else return "pgf_derived";
        },
        spec.kind);
}

/// Throws PreconditionError if a parameter is outside its documented range.
inline void validate(const DriftSpec& spec) {
    if (!(spec.scale > 0.0) || !std::isfinite(spec.scale))
        throw PreconditionError("drift scale must be positive and finite");
    std::visit(
        [](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PowerClipped>) {
                if (!(k.p >= 0.5 && k.p < 1.0)) throw PreconditionError("power_clipped: p must lie in [1/2, 1)");
                if (!(k.delta > 0.0 && k.delta <= 1.0))
                    throw PreconditionError("power_clipped: delta must lie in (0, 1]");
            } else if constexpr (std::is_same_v<K, CappedPower>) {
                if (!(k.p >= 0.5 && k.p < 1.0)) throw PreconditionError("capped_power: p must lie in [1/2, 1)");
            } else if constexpr (std::is_same_v<K, Tent>) {
                if (!(k.width > 0.0 && k.width <= 1.0)) throw PreconditionError("tent: width must lie in (0, 1]");
                if (!(k.height > 0.0)) throw PreconditionError("tent: height must be positive");
            } else if constexpr (std::is_same_v<K, LinearMajorant>) {
                if (!(k.theta > 0.0 && k.theta < 1.0 && k.v > 0.0 && k.eps_small >= 0.0))
                    throw PreconditionError("linear_majorant: need theta in (0,1), v > 0, eps_small >= 0");
            } else if constexpr (std::is_same_v<K, PgfDerived>) {
                if (!(k.p > 0.0 && k.p < 1.0)) throw PreconditionError("pgf_derived: p must lie in (0, 1)");
                if (k.truncation < 2) throw PreconditionError("pgf_derived: truncation must be >= 2");
            }
        },
        spec.kind);
}

inline double tent(double z, double width, double height) {
    if (!(width > 0.0) || !(height > 0.0)) throw DomainError("tent: width and height must be positive");
    if (width > 1.0) throw DomainError("tent: width must not exceed 1");
    if (z <= 0.0 || z >= width) return 0.0;
    const double half = width / 2.0;
    if (z < half) return 2.0 * z * height / width;
    if (z == half) return height;
    return 2.0 * height - 2.0 * z * height / width;
}

/// q_n of the heavy-tailed offspring law, n >= 2, via log-space product.
inline double offspring_pmf(double p, long long n) {
    if (n < 2) throw DomainError("offspring_pmf: n must be >= 2");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("offspring_pmf: p must lie in (0, 1)");
    // q_n = p/(n-1)! * prod_{k=1}^{n-2} (k - p)
    double log_q = std::log(p) - std::lgamma(static_cast<double>(n));
    for (long long k = 1; k <= n - 2; ++k) log_q += std::log(static_cast<double>(k) - p);
    return std::exp(log_q);
}

/// P(N >= n) for the offspring count N = 1 + S, i.e. prod_{k=1}^{n-2} (1 - p/k).
inline double offspring_tail(double p, long long n) {
    if (n <= 2) return 1.0;
    const double m = static_cast<double>(n - 1);
    return std::exp(std::lgamma(m - p) - std::lgamma(1.0 - p) - std::lgamma(m));
}

/// g_N(s) of the offspring law capped at N (mass of {N_offspring >= N} placed on N).
inline double capped_pgf(double p, std::size_t cap, double s) {
    double sum = 0.0;
    double q = p;     // q_2
    double pw = s * s; // s^2
    double partial = 0.0;
    for (std::size_t n = 2; n < cap; ++n) {
        sum += q * pw;
        partial += q;
        q *= (static_cast<double>(n) - 1.0 - p) / static_cast<double>(n);
        pw *= s;
        // everything still to come (including the capped tail) is at most s^n P(N > n)
        if (pw * (1.0 - partial) < 1e-17) return sum;
    }
    const double tail = 1.0 - partial;
    return sum + tail * pw;
}

/// 1 - z - g_N(1 - z). Converges to z^p (1 - z) as N grows.
inline double drift_from_pgf(double p, double z, std::size_t truncation) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError("drift_from_pgf: z must lie in [0, 1]");
    if (truncation < 2) throw DomainError("drift_from_pgf: truncation must be >= 2");
    if (z == 0.0) return 0.0; // g_N(1) = 1 for the capped law
    return 1.0 - z - capped_pgf(p, truncation, 1.0 - z);
}

/// Truncation error scale of PgfDerived: the tail mass P(N_offspring >= truncation).
inline double pgf_tail_mass(const PgfDerived& k) {
    return offspring_tail(k.p, static_cast<long long>(k.truncation));
}

namespace detail {
inline double eval_kind(const DriftKind& kind, double z) {
    return std::visit(
        [z](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ZeroDrift>) return 0.0;
            else if constexpr (std::is_same_v<K, Kpp>) return z * (1.0 - z);
            else if constexpr (std::is_same_v<K, PowerClipped>) return z <= k.delta ? std::pow(z, k.p) : 0.0;
            else if constexpr (std::is_same_v<K, CappedPower>) return std::min(std::pow(z, k.p), std::sqrt(1.0 - z));
            else if constexpr (std::is_same_v<K, Tent>) return tent(z, k.width, k.height);
            else if constexpr (std::is_same_v<K, LinearMajorant>)
                return (1.0 - k.theta) * k.theta * k.v * k.v * z + (1.0 - k.theta) * k.v * k.eps_small;
            else return drift_from_pgf(k.p, z, k.truncation);
        },
        kind);
}
} // namespace detail

inline double eval_drift(const DriftSpec& spec, double z) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError("eval_drift: z must lie in [0, 1]");
    return spec.scale * detail::eval_kind(spec.kind, z);
}

/// Evaluator for the simulation hot loop: no domain checks, no variant dispatch.
class DriftFunction {
public:
    explicit DriftFunction(const DriftSpec& spec) : scale_(spec.scale) {
        validate(spec);
        std::visit(
            [this](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, ZeroDrift>) tag_ = Tag::zero;
                else if constexpr (std::is_same_v<K, Kpp>) tag_ = Tag::kpp;
                else if constexpr (std::is_same_v<K, PowerClipped>) {
                    tag_ = k.p == 0.5 ? Tag::sqrt_clipped : Tag::power_clipped;
                    a_ = k.p;
                    b_ = k.delta;
                } else if constexpr (std::is_same_v<K, CappedPower>) {
                    tag_ = Tag::capped_power;
                    a_ = k.p;
                } else if constexpr (std::is_same_v<K, Tent>) {
                    tag_ = Tag::tent;
                    a_ = k.width;
                    b_ = k.height;
                } else if constexpr (std::is_same_v<K, LinearMajorant>) {
                    tag_ = Tag::linear;
                    a_ = (1.0 - k.theta) * k.theta * k.v * k.v;
                    b_ = (1.0 - k.theta) * k.v * k.eps_small;
                } else {
                    tag_ = Tag::pgf;
                    a_ = k.p;
                    cap_ = k.truncation;
                }
            },
            spec.kind);
    }

    double operator()(double z) const noexcept {
        switch (tag_) {
        case Tag::zero: return 0.0;
        case Tag::kpp: return scale_ * z * (1.0 - z);
        case Tag::sqrt_clipped: return z <= b_ ? scale_ * std::sqrt(z) : 0.0;
        case Tag::power_clipped: return z <= b_ ? scale_ * std::pow(z, a_) : 0.0;
        case Tag::capped_power: return scale_ * std::min(std::pow(z, a_), std::sqrt(1.0 - z));
        case Tag::tent: {
            if (z <= 0.0 || z >= a_) return 0.0;
            const double rise = 2.0 * z * b_ / a_;
            return scale_ * (z <= a_ / 2.0 ? rise : 2.0 * b_ - rise);
        }
        case Tag::linear: return scale_ * (a_ * z + b_);
        case Tag::pgf: return z == 0.0 ? 0.0 : scale_ * (1.0 - z - capped_pgf(a_, cap_, 1.0 - z));
        }
        return 0.0;
    }

    /// f(0) == 0 and f(1) >= 0: cells at exactly 0 or 1 surrounded by equal neighbours stay put.
    bool preserves_constant_states() const noexcept {
        return (*this)(0.0) == 0.0 && (*this)(1.0) >= 0.0;
    }

private:
    enum class Tag { zero, kpp, sqrt_clipped, power_clipped, capped_power, tent, linear, pgf };
    Tag tag_ = Tag::zero;
    double scale_ = 1.0;
    double a_ = 0.0;
    double b_ = 0.0;
    std::size_t cap_ = 0;
};

// ---------------------------------------------------------------------------
// Condition (i): sup |f| / sqrt(z (1 - z))
// ---------------------------------------------------------------------------

struct DominationRatio {
    double sup = 0.0;
    double argmax = 0.0;
    bool divergent = false;
};

/// Maximum of |f(z)|/sqrt(z(1-z)) over the interior grid z_i = i/(n+1), i = 1..n.
/// An endpoint is flagged divergent when the ratio is positive and strictly
/// increasing over the two grid points nearest to it.
template <std::invocable<double> F>
DominationRatio sqrt_domination_ratio(F&& f, std::size_t grid_points) {
    if (grid_points < 3) throw PreconditionError("sqrt_domination_ratio: grid_points must be >= 3");
    const double h = 1.0 / static_cast<double>(grid_points + 1);
    auto ratio = [&](std::size_t i) {
        const double z = static_cast<double>(i) * h;
        return std::abs(f(z)) / std::sqrt(z * (1.0 - z));
    };
    DominationRatio out;
    for (std::size_t i = 1; i <= grid_points; ++i) {
        const double r = ratio(i);
        if (r > out.sup) {
            out.sup = r;
            out.argmax = static_cast<double>(i) * h;
        }
    }
    const double r1 = ratio(1), r2 = ratio(2);
    const double rn = ratio(grid_points), rn1 = ratio(grid_points - 1);
    out.divergent = (r1 > 0.0 && r1 > r2) || (rn > 0.0 && rn > rn1);
    return out;
}

inline DominationRatio sqrt_domination_ratio(const DriftSpec& spec, std::size_t grid_points) {
    return sqrt_domination_ratio([&spec](double z) { return eval_drift(spec, z); }, grid_points);
}

// ---------------------------------------------------------------------------
// Travelling profile F, majorant f-bar
// ---------------------------------------------------------------------------

/// kappa = (p^{p/(1-p)} - p^{1/(1-p)}) theta^{p/(p-1)} (1-theta)^{1/(p-1)}.
inline double kappa(double p, double theta) {
    return (std::pow(p, p / (1.0 - p)) - std::pow(p, 1.0 / (1.0 - p))) * std::pow(theta, p / (p - 1.0)) *
           std::pow(1.0 - theta, 1.0 / (p - 1.0));
}

/// 2(1-p)/(1+p): the small-noise speed exponent (speed grows like eps^{-exponent}).
inline double speed_exponent(double p) { return 2.0 * (1.0 - p) / (1.0 + p); }

/// Wave-speed parameters that enter F and f-bar. All values are ordinary doubles.
struct ProfileParams {
    double p = 0.5;
    double theta = 0.75;
    double kappa = 0.0;
    double v = 1.0;
    double eps_small = 0.0;
    double T = 1.0;
    double L = 1.0;

    /// eps_small = kappa v^{(p+1)/(p-1)}, T = v^-2, L = v^-1.
    static ProfileParams from_wave_speed(double p, double theta, double v) {
        if (!(p >= 0.5 && p < 1.0)) throw PreconditionError("profile: p must lie in [1/2, 1)");
        if (!(theta > 0.5 && theta < 1.0)) throw PreconditionError("profile: theta must lie in (1/2, 1)");
        if (!(v > 0.0) || !std::isfinite(v)) throw PreconditionError("profile: v must be positive and finite");
        ProfileParams out;
        out.p = p;
        out.theta = theta;
        out.kappa = model::kappa(p, theta);
        out.v = v;
        out.eps_small = out.kappa * std::pow(v, (p + 1.0) / (p - 1.0));
        out.T = 1.0 / (v * v);
        out.L = 1.0 / v;
        return out;
    }

    bool consistent(double rel_tol = 1e-12) const {
        auto close = [rel_tol](double a, double b) { return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b)); };
        return p >= 0.5 && p < 1.0 && theta > 0.5 && theta < 1.0 && v > 0.0 && std::isfinite(v) &&
               close(kappa, model::kappa(p, theta)) && close(eps_small, kappa * std::pow(v, (p + 1.0) / (p - 1.0))) &&
               close(T, 1.0 / (v * v)) && close(L, 1.0 / v);
    }
};

inline void require_consistent(const ProfileParams& prof) {
    if (!prof.consistent()) throw PreconditionError("profile parameters are inconsistent");
}

/// F(x) = (eps/(theta v)) (e^{-theta v x} - 1) for x <= 0, else 0.
inline double profile_F(double x, const ProfileParams& prof) {
    if (x >= 0.0) return 0.0;
    const double a = prof.theta * prof.v;
    return prof.eps_small / a * std::expm1(-a * x);
}

/// Central difference of the left branch of F at 0 (equals -eps_small up to O(h^2)).
inline double profile_F_left_slope(const ProfileParams& prof, double h = 1e-5) {
    const double a = prof.theta * prof.v;
    auto branch = [&](double x) { return prof.eps_small / a * std::expm1(-a * x); };
    return (branch(h) - branch(-h)) / (2.0 * h);
}

/// The x <= 0 with F(x) = level.
inline double profile_F_inverse(double level, const ProfileParams& prof) {
    const double a = prof.theta * prof.v;
    return -std::log1p(a * level / prof.eps_small) / a;
}

/// f-bar(z) = (1-theta) theta v^2 z + (1-theta) v eps.
inline double majorant(double z, const ProfileParams& prof) {
    return (1.0 - prof.theta) * prof.theta * prof.v * prof.v * z + (1.0 - prof.theta) * prof.v * prof.eps_small;
}

/// Point where the slope of z^p equals the slope of f-bar.
inline double tangency_point(const ProfileParams& prof) {
    return std::pow((1.0 - prof.theta) * prof.theta * prof.v * prof.v / prof.p, 1.0 / (prof.p - 1.0));
}

struct MajorantReport {
    double min_gap = 0.0;
    double argmin = 0.0;
    double tangency_point = 0.0;
    double gap_at_tangency = 0.0;
};

/// Minimum of f-bar - f over a uniform grid on [0, z_max] (plus the tangency point).
inline MajorantReport check_majorant(const ProfileParams& prof, const DriftSpec& drift, std::size_t grid_points,
                                     double z_max = 1.0) {
    require_consistent(prof);
    const double p = std::visit(
        [](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PowerClipped> || std::is_same_v<K, CappedPower>) return k.p;
            else return -1.0;
        },
        drift.kind);
    if (p < 0.0) throw PreconditionError("check_majorant: drift must be of z^p type (power_clipped or capped_power)");
    if (p != prof.p) throw PreconditionError("check_majorant: drift exponent differs from the ledger's p");
    if (grid_points < 2 || !(z_max > 0.0 && z_max <= 1.0))
        throw PreconditionError("check_majorant: need grid_points >= 2 and z_max in (0, 1]");

    MajorantReport out;
    out.min_gap = std::numeric_limits<double>::infinity();
    auto visit_point = [&](double z) {
        const double gap = majorant(z, prof) - eval_drift(drift, z);
        if (gap < out.min_gap) {
            out.min_gap = gap;
            out.argmin = z;
        }
        return gap;
    };
    for (std::size_t i = 0; i < grid_points; ++i)
        visit_point(z_max * static_cast<double>(i) / static_cast<double>(grid_points - 1));
    out.tangency_point = tangency_point(prof);
    if (out.tangency_point <= z_max) out.gap_at_tangency = visit_point(out.tangency_point);
    else out.gap_at_tangency = std::numeric_limits<double>::quiet_NaN();
    return out;
}

// ---------------------------------------------------------------------------
// Constants ledger
// ---------------------------------------------------------------------------

/// A positive quantity stored by its base-2 logarithm. The chained constants
/// span far more than the double exponent range.
struct Magnitude {
    double log2 = 0.0;

    static Magnitude of(double x) { return {std::log2(x)}; }
    /// The value as a double, if it is a normal finite number.
    std::optional<double> value() const {
        const double x = std::exp2(log2);
        if (!std::isfinite(x) || !std::isnormal(x)) return std::nullopt;
        return x;
    }
};

namespace detail {
inline double log2_add(double a, double b) {
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log2(1.0 + std::exp2(lo - hi));
}
} // namespace detail

struct Certificates {
    bool cert_i = false;   ///< kappa > 0 and kappa^{p-1} <= 1
    bool cert_ii = false;  ///< series bound on K_cal
    bool cert_iii = false; ///< the three conditions on gamma
    bool cert_v = false;   ///< eps = gamma eps^2 = kappa v^{(p+1)/(p-1)}, T = v^-2, L = v^-1
    bool cert_vi = false;  ///< nu eps L <= 1/4 and 2^13 sqrt(eps^2 L) <= 1/4 at the supplied noise strength
};

struct ParameterLedger {
    double p = 0.5;
    double theta = 0.75;
    double noise_strength = 0.0;
    double kappa = 0.0;
    double exponent = 0.0;
    int K_cal_exponent = 0;          ///< K_cal = 2^K_cal_exponent
    double series_value = 0.0;       ///< 2^5 * sum (with tail bound) at K_cal
    std::int64_t gamma_exponent = 0; ///< gamma = 2^-gamma_exponent
    Magnitude K_cal, gamma, nu, k, d, eps_small, v, T, L, eps0;
    double eps0_log2_resolution = 0.0; ///< width of the final bisection bracket in log2 units
    Certificates certificates;
};

namespace detail {

/// 2^5 * sum_{n>=1} exp(-2^-22 e^{-2 theta (2-theta)} K e^{(2 theta - 1) n}), truncated
/// once a term drops below 1e-30, plus a geometric majorant of the remainder.
inline double series_ii(double theta, double log2_K) {
    const double log_a = (-22.0 + log2_K) * std::numbers::ln2 - 2.0 * theta * (2.0 - theta);
    const double log_r = 2.0 * theta - 1.0;
    double sum = 0.0;
    for (long n = 1; n < 100'000'000; ++n) {
        const double exponent = std::exp(log_a + log_r * static_cast<double>(n)); // a r^n
        const double term = std::exp(-exponent);
        sum += term;
        if (term < 1e-30) {
            // term_{m+1}/term_m = exp(-a r^m (r-1)) <= rho for m >= n
            const double rho = std::exp(-exponent * std::expm1(log_r));
            if (rho < 1.0) return 32.0 * (sum + term * rho / (1.0 - rho));
        }
    }
    return std::numeric_limits<double>::infinity();
}

struct GammaCandidate {
    double log2_nu;
    bool first, second, third;
    bool all() const { return first && second && third; }
};

inline GammaCandidate gamma_conditions(double p, double K, int K_exp, std::int64_t j) {
    // gamma = 2^-j, nu = 2^4 + (2^5 K + 2^14 sqrt(K)) / gamma
    const double c = 32.0 * K + 16384.0 * std::sqrt(K);
    const double jd = static_cast<double>(j);
    const double log2_nu = log2_add(4.0, std::log2(c) + jd);
    const double gamma_nu = 16.0 * std::exp2(-jd) + c;
    GammaCandidate out{};
    out.log2_nu = log2_nu;
    out.first = 7.0 - 0.5 * jd + 3.0 * gamma_nu * std::numbers::log2e <= -3.0;
    out.second = p * log2_nu <= log2_nu - 2.0;
    out.third = static_cast<double>(K_exp) + jd >= 1.0;
    return out;
}

/// log2 of eps_small, v, L for a given log2 noise strength.
struct ChainLogs {
    double eps_small, v, L;
};
inline ChainLogs chain_logs(double p, double log2_kappa, double log2_gamma, double log2_noise) {
    ChainLogs c{};
    c.eps_small = log2_gamma + 2.0 * log2_noise;
    c.v = (p - 1.0) / (p + 1.0) * (c.eps_small - log2_kappa);
    c.L = -c.v;
    return c;
}

inline bool condition_vi(double p, double log2_kappa, double log2_gamma, double log2_nu, double log2_noise) {
    const ChainLogs c = chain_logs(p, log2_kappa, log2_gamma, log2_noise);
    const bool first = log2_nu + c.eps_small + c.L <= -2.0;
    const bool second = 13.0 + 0.5 * (2.0 * log2_noise + c.L) <= -2.0;
    return first && second;
}

} // namespace detail

inline constexpr int kKcalMinExponent = -60;
inline constexpr int kKcalMaxExponent = 60;
inline constexpr std::int64_t kGammaMinExponent = -60;
inline constexpr std::int64_t kGammaMaxExponent = std::int64_t{1} << 53;

/// Builds the full constants chain for (p, theta) and evaluates every certificate
/// at the given noise strength. K_cal is the smallest admissible power of two and
/// gamma the largest admissible power of two; eps0 is found by bisection in log2 space.
inline ParameterLedger derive_constants(double p, double theta, double noise_strength) {
    if (!(p >= 0.5 && p < 1.0)) throw PreconditionError("derive_constants: p must lie in [1/2, 1)");
    if (!(theta > 0.5 && theta < 1.0)) throw PreconditionError("derive_constants: theta must lie in (1/2, 1)");
    if (!(noise_strength > 0.0) || !std::isfinite(noise_strength))
        throw PreconditionError("derive_constants: noise strength must be positive");

    ParameterLedger led;
    led.p = p;
    led.theta = theta;
    led.noise_strength = noise_strength;
    led.kappa = kappa(p, theta);
    led.exponent = speed_exponent(p);
    led.certificates.cert_i = led.kappa > 0.0 && std::pow(led.kappa, p - 1.0) <= 1.0;

    // (ii): smallest K = 2^j. The series is decreasing in K.
    {
        int lo = kKcalMinExponent, hi = kKcalMaxExponent;
        if (detail::series_ii(theta, hi) > 0.125)
            throw SearchExhausted("derive_constants: no admissible K_cal in [2^-60, 2^60]");
        if (detail::series_ii(theta, lo) <= 0.125) hi = lo;
        while (hi - lo > 1) {
            const int mid = lo + (hi - lo) / 2;
            (detail::series_ii(theta, mid) <= 0.125 ? hi : lo) = mid;
        }
        led.K_cal_exponent = hi;
        led.series_value = detail::series_ii(theta, hi);
        led.certificates.cert_ii = led.series_value <= 0.125;
    }
    const double K = std::exp2(led.K_cal_exponent);
    led.K_cal = {static_cast<double>(led.K_cal_exponent)};

    // (iii): largest gamma = 2^-j, i.e. smallest j. Every condition is monotone in j.
    {
        std::int64_t lo = kGammaMinExponent, hi = kGammaMaxExponent;
        if (!detail::gamma_conditions(p, K, led.K_cal_exponent, hi).all())
            throw SearchExhausted("derive_constants: no admissible gamma in the search range");
        if (detail::gamma_conditions(p, K, led.K_cal_exponent, lo).all()) hi = lo;
        while (hi - lo > 1) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            (detail::gamma_conditions(p, K, led.K_cal_exponent, mid).all() ? hi : lo) = mid;
        }
        led.gamma_exponent = hi;
        const auto cand = detail::gamma_conditions(p, K, led.K_cal_exponent, hi);
        led.certificates.cert_iii = cand.all();
        led.nu = {cand.log2_nu};
    }
    led.gamma = {-static_cast<double>(led.gamma_exponent)};

    // (iv)
    led.k = {led.K_cal.log2 - led.gamma.log2};
    led.d = {detail::log2_add(detail::log2_add(led.k.log2, led.nu.log2), 0.0)};

    // (v)
    const double log2_kappa = std::log2(led.kappa);
    const double log2_noise = std::log2(noise_strength);
    const auto chain = detail::chain_logs(p, log2_kappa, led.gamma.log2, log2_noise);
    led.eps_small = {chain.eps_small};
    led.v = {chain.v};
    led.T = {-2.0 * chain.v};
    led.L = {chain.L};
    {
        // Identities re-derived independently of chain_logs.
        const double tol = 1e-9 * std::max(1.0, std::abs(led.eps_small.log2));
        const bool a = std::abs(led.eps_small.log2 - (led.gamma.log2 + 2.0 * log2_noise)) <= tol;
        const bool b = std::abs(led.eps_small.log2 - (log2_kappa + (p + 1.0) / (p - 1.0) * led.v.log2)) <= tol;
        const bool c = led.T.log2 == -2.0 * led.v.log2 && led.L.log2 == -led.v.log2;
        led.certificates.cert_v = a && b && c;
    }

    // (vi): eps0 = sup of admissible noise strengths.
    {
        auto ok = [&](double x) { return detail::condition_vi(p, log2_kappa, led.gamma.log2, led.nu.log2, x); };
        double lo = 0.0, hi = 0.0, step = 1.0;
        if (ok(0.0)) {
            while (ok(hi + step)) step *= 2.0;
            lo = hi + step / 2.0;
            hi = hi + step;
            if (!ok(lo)) lo = 0.0;
        } else {
            while (!ok(lo - step)) step *= 2.0;
            hi = lo - step / 2.0;
            lo = lo - step;
            if (ok(hi)) lo = hi, hi = 0.0;
        }
        // Relative tolerance 1e-12 on eps0, or the double resolution of log2 eps0 if coarser.
        const double target = 1e-12 * std::numbers::log2e;
        while (hi - lo > target) {
            const double mid = lo + (hi - lo) / 2.0;
            if (mid <= lo || mid >= hi) break;
            (ok(mid) ? lo : hi) = mid;
        }
        led.eps0 = {lo};
        led.eps0_log2_resolution = hi - lo;
        led.certificates.cert_vi = ok(log2_noise);
    }
    return led;
}

/// F and f-bar parameters of a ledger, when v is representable as a double.
inline std::optional<ProfileParams> profile_of(const ParameterLedger& led) {
    const auto v = led.v.value();
    const auto eps = led.eps_small.value();
    const auto T = led.T.value();
    if (!v || !eps || !T) return std::nullopt;
    ProfileParams prof;
    prof.p = led.p;
    prof.theta = led.theta;
    prof.kappa = led.kappa;
    prof.v = *v;
    prof.eps_small = *eps;
    prof.T = *T;
    prof.L = 1.0 / *v;
    return prof;
}

struct SpeedBoundPair {
    Magnitude lower_coeff; ///< (sqrt(2) gamma)^{2(1-p)/(1+p)}
    Magnitude upper_value; ///< 2 d (gamma eps^2 / kappa)^{-(1-p)/(1+p)}
};

inline SpeedBoundPair speed_bounds(double p, double log2_gamma, double log2_kappa, double log2_d, double noise) {
    const double e = speed_exponent(p);
    SpeedBoundPair out;
    out.lower_coeff = {e * (0.5 + log2_gamma)};
    out.upper_value = {1.0 + log2_d - 0.5 * e * (log2_gamma + 2.0 * std::log2(noise) - log2_kappa)};
    return out;
}

inline SpeedBoundPair speed_bounds(const ParameterLedger& led) {
    return speed_bounds(led.p, led.gamma.log2, std::log2(led.kappa), led.d.log2, led.noise_strength);
}

} // namespace wavefront::model
