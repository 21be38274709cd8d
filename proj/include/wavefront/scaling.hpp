#pragma once

// Experiments on the speed V(f, eps): epsilon sweeps and exponent fits,
// the rescaling identity, drift comparison and profile containment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/front.hpp"
#include "wavefront/model.hpp"
#include "wavefront/model_json.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/rng.hpp"
#include "wavefront/spde.hpp"

namespace wavefront::scaling {

/// Simulation resources shared by the experiments.
struct Budget {
    std::size_t realizations = 32;
    double horizon = 20.0;
    spde::SchemeConfig scheme;
    std::size_t initial_ones = 0; ///< leading cells at 1 in the Heaviside start; 0 means half the window
    unsigned threads = 0;
    front::EstimateOptions estimate;
};

inline void to_json(nlohmann::json& j, const Budget& b) {
    j = {{"realizations", b.realizations},
         {"horizon", b.horizon},
         {"scheme", b.scheme},
         {"initial_ones", b.initial_ones},
         {"burn_in_fraction", b.estimate.burn_in_fraction},
         {"resamples", b.estimate.resamples},
         {"bootstrap_seed", b.estimate.seed}};
}

struct SpeedRun {
    front::SpeedEstimate estimate;
    nlohmann::json manifest;
};

inline spde::FieldState heaviside_for(const Budget& b) {
    const std::size_t n = b.scheme.window_cells;
    const std::size_t ones = b.initial_ones ? b.initial_ones : n / 2;
    return spde::heaviside(n, ones, b.scheme.dx);
}

/// One ensemble plus its speed estimate. Failed realizations are an error here.
inline SpeedRun run_speed(const model::DriftSpec& drift, double eps, const Budget& b, std::size_t first_index,
                          const spde::FieldState* initial = nullptr) {
    spde::EnsembleConfig cfg;
    cfg.initial = initial ? *initial : heaviside_for(b);
    cfg.drift = drift;
    cfg.eps = eps;
    cfg.horizon = b.horizon;
    cfg.scheme = b.scheme;
    cfg.realizations = b.realizations;
    cfg.threads = b.threads;
    cfg.first_index = first_index;
    auto ens = spde::run_ensemble(cfg);
    if (ens.failures() > 0) {
        for (std::size_t r = 0; r < ens.errors.size(); ++r)
            if (!ens.errors[r].empty())
                throw EstimationError("realization " + std::to_string(r) + ": " + ens.errors[r]);
    }
    SpeedRun out;
    out.estimate = front::estimate_speed(ens, b.estimate);
    out.manifest = std::move(ens.manifest);
    out.manifest["estimate_options"] = {{"burn_in_fraction", b.estimate.burn_in_fraction},
                                        {"resamples", b.estimate.resamples},
                                        {"bootstrap_seed", b.estimate.seed}};
    out.manifest["estimate"] = out.estimate;
    return out;
}

// ---------------------------------------------------------------------------
// Epsilon sweep
// ---------------------------------------------------------------------------

struct ScalingPlan {
    model::DriftSpec drift;
    std::vector<double> epsilon_grid;
    std::size_t realizations_per_point = 64;
    double horizon = 10.0;
    spde::SchemeConfig scheme;
    std::size_t initial_ones = 0;
    unsigned threads = 0;
    front::EstimateOptions estimate;
    std::size_t min_points = 3; ///< the exponent study needs three; the two-point KPP report lowers this

    void validate() const {
        model::validate(drift);
        scheme.validate();
        if (epsilon_grid.size() < min_points)
            throw ConfigError("epsilon_grid", "needs at least " + std::to_string(min_points) + " values");
        for (std::size_t i = 0; i < epsilon_grid.size(); ++i) {
            if (!(epsilon_grid[i] > 0.0)) throw ConfigError("epsilon_grid", "values must be positive (stochastic study only)");
            if (i > 0 && !(epsilon_grid[i] < epsilon_grid[i - 1]))
                throw ConfigError("epsilon_grid", "must be strictly decreasing");
        }
        if (realizations_per_point < 1) throw ConfigError("realizations_per_point", "must be at least 1");
        if (!(horizon > 0.0)) throw ConfigError("horizon", "must be positive");
    }

    Budget budget() const {
        Budget b;
        b.realizations = realizations_per_point;
        b.horizon = horizon;
        b.scheme = scheme;
        b.initial_ones = initial_ones;
        b.threads = threads;
        b.estimate = estimate;
        return b;
    }
};

struct ScalingRow {
    double eps = 0.0;
    front::SpeedEstimate estimate;
    nlohmann::json manifest;
};

/// Stream block of row k starts at k * kRowStride.
inline constexpr std::size_t kRowStride = 1'000'000;

inline std::vector<ScalingRow> speed_vs_epsilon(const ScalingPlan& plan) {
    plan.validate();
    const Budget b = plan.budget();
    std::vector<ScalingRow> rows;
    for (std::size_t k = 0; k < plan.epsilon_grid.size(); ++k) {
        auto run = run_speed(plan.drift, plan.epsilon_grid[k], b, k * kRowStride);
        rows.push_back({plan.epsilon_grid[k], run.estimate, std::move(run.manifest)});
    }
    return rows;
}

/// Adjacent rows (in grid order) whose intervals are disjoint with the smaller eps faster.
inline std::size_t separated_increases(const std::vector<ScalingRow>& rows) {
    std::size_t n = 0;
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].estimate.ci_low > rows[k - 1].estimate.ci_high) ++n;
    return n;
}

inline bool strictly_increasing(const std::vector<ScalingRow>& rows) {
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (!(rows[k].estimate.slope > rows[k - 1].estimate.slope)) return false;
    return true;
}

struct ExponentFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::optional<double> reference; ///< -2(1-p)/(1+p) for z^p-type drifts
};

inline void to_json(nlohmann::json& j, const ExponentFit& f) {
    j = {{"slope", f.slope}, {"intercept", f.intercept}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high}};
    j["reference"] = f.reference ? nlohmann::json(*f.reference) : nlohmann::json(nullptr);
}

inline std::optional<double> power_of(const model::DriftSpec& d) {
    if (auto* k = std::get_if<model::PowerClipped>(&d.kind)) return k->p;
    if (auto* k = std::get_if<model::CappedPower>(&d.kind)) return k->p;
    if (auto* k = std::get_if<model::PgfDerived>(&d.kind)) return k->p;
    return std::nullopt;
}

/// Least squares of log V on log eps. The interval comes from a parametric bootstrap:
/// each row is redrawn as N(V, (half width / 1.96)^2).
inline ExponentFit fit_exponent(const std::vector<ScalingRow>& rows, std::optional<double> p = std::nullopt,
                                std::size_t resamples = 1000, std::uint64_t seed = 0) {
    if (rows.size() < 3) throw EstimationError("fit_exponent: needs at least 3 rows");
    for (const auto& r : rows)
        if (!(r.estimate.slope > 0.0) || !(r.eps > 0.0))
            throw EstimationError("fit_exponent: speeds and epsilons must be positive");
    auto fit = [&](const std::vector<double>& v) {
        std::vector<front::Point> pts;
        for (std::size_t k = 0; k < rows.size(); ++k) pts.push_back({std::log(rows[k].eps), std::log(v[k])});
        return front::detail::ols(pts);
    };
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.estimate.slope);
    ExponentFit out;
    std::tie(out.slope, out.intercept) = fit(v);
    if (p) out.reference = -model::speed_exponent(*p);

    auto rng = rng::make_stream(seed, "fit_exponent", 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> boots;
    std::vector<double> draw(rows.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        bool ok = true;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const double se = rows[k].estimate.half_width() / 1.959963984540054;
            draw[k] = rows[k].estimate.slope + se * normal(rng);
            ok = ok && draw[k] > 0.0;
        }
        if (ok) boots.push_back(fit(draw).first);
    }
    if (boots.empty()) {
        out.ci_low = out.ci_high = out.slope;
    } else {
        out.ci_low = std::min(front::detail::percentile(boots, 0.025), out.slope);
        out.ci_high = std::max(front::detail::percentile(boots, 0.975), out.slope);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rescaling identity V(f, eps) = sqrt(c) V(f/c, eps c^{-1/4})
// ---------------------------------------------------------------------------

struct RescalingOptions {
    bool shared_seeds = false; ///< both sides use the same streams (c = 1 then gives identical output)
    /// Run the right side on dx sqrt(c), dt c. The two lattice schemes then coincide
    /// in law, so this isolates the estimator from discretization effects.
    bool scale_grid = false;
};

struct RescalingReport {
    double c = 1.0;
    front::SpeedEstimate lhs;
    front::SpeedEstimate rhs_scaled;
    bool compatible = false;
    nlohmann::json lhs_manifest, rhs_manifest;
};

inline front::SpeedEstimate scaled(front::SpeedEstimate e, double k) {
    e.slope *= k;
    e.intercept *= k;
    e.ci_low *= k;
    e.ci_high *= k;
    return e;
}

inline bool intervals_overlap(const front::SpeedEstimate& a, const front::SpeedEstimate& b) {
    return a.ci_low <= b.ci_high && b.ci_low <= a.ci_high;
}

inline RescalingReport rescaling_check(const model::DriftSpec& drift, double c, double eps, const Budget& budget,
                                       const RescalingOptions& opt = {}) {
    if (!(c > 0.0) || !std::isfinite(c)) throw PreconditionError("rescaling_check: c must be positive");
    if (!(eps > 0.0)) throw PreconditionError("rescaling_check: eps must be positive");
    model::DriftSpec rhs_drift = drift;
    rhs_drift.scale = drift.scale / c;
    const double rhs_eps = eps * std::pow(c, -0.25);
    Budget rb = budget;
    if (opt.scale_grid) {
        rb.scheme.dx *= std::sqrt(c);
        rb.scheme.dt *= c;
        rb.horizon *= c;
    }
    RescalingReport out;
    out.c = c;
    auto lhs = run_speed(drift, eps, budget, 0);
    auto rhs = run_speed(rhs_drift, rhs_eps, rb, opt.shared_seeds ? 0 : kRowStride);
    out.lhs = lhs.estimate;
    out.rhs_scaled = scaled(rhs.estimate, std::sqrt(c));
    out.compatible = intervals_overlap(out.lhs, out.rhs_scaled);
    out.lhs_manifest = std::move(lhs.manifest);
    out.rhs_manifest = std::move(rhs.manifest);
    return out;
}

// ---------------------------------------------------------------------------
// Comparison of drifts
// ---------------------------------------------------------------------------

struct TentMinorant {
    model::DriftSpec drift;
    double q = 0.0;
    double width = 0.0;
    double height = 0.0;
};

/// H(.; 2 eps^q, eps^{qp}) with q = 4/(1+p): peak eps^{qp} at z = eps^q, below z^p.
inline TentMinorant make_tent_minorant(double p, double eps) {
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("make_tent_minorant: p must lie in (0, 1)");
    if (!(eps > 0.0)) throw PreconditionError("make_tent_minorant: eps must be positive");
    TentMinorant t;
    t.q = 4.0 / (1.0 + p);
    t.width = 2.0 * std::pow(eps, t.q);
    t.height = std::pow(eps, t.q * p);
    if (t.width > 1.0) throw PreconditionError("make_tent_minorant: tent width 2 eps^q exceeds 1");
    t.drift.kind = model::Tent{t.width, t.height};
    return t;
}

struct ComparisonReport {
    front::SpeedEstimate low, high;
    double slack = 0.0;
    bool ordered = false;
    double max_excess = 0.0; ///< max over the grid of f_low - f_high (<= tolerance)
    nlohmann::json low_manifest, high_manifest;
};

inline constexpr std::size_t kComparisonGrid = 10000;
inline constexpr double kComparisonTolerance = 1e-12;

/// max_z f_low(z) - f_high(z) on kComparisonGrid equispaced points of [0, 1].
inline double domination_excess(const model::DriftSpec& low, const model::DriftSpec& high) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kComparisonGrid; ++i) {
        const double z = static_cast<double>(i) / static_cast<double>(kComparisonGrid - 1);
        worst = std::max(worst, model::eval_drift(low, z) - model::eval_drift(high, z));
    }
    return worst;
}

inline ComparisonReport comparison_check(const model::DriftSpec& low, const model::DriftSpec& high, double eps,
                                         const Budget& budget) {
    ComparisonReport out;
    out.max_excess = domination_excess(low, high);
    if (out.max_excess > kComparisonTolerance)
        throw PreconditionError("comparison_check: drift_low exceeds drift_high on the grid (by " +
                                std::to_string(out.max_excess) + ")");
    auto lo = run_speed(low, eps, budget, 0);
    auto hi = run_speed(high, eps, budget, kRowStride);
    out.low = lo.estimate;
    out.high = hi.estimate;
    out.slack = out.low.half_width() + out.high.half_width();
    out.ordered = out.low.slope <= out.high.slope + out.slack;
    out.low_manifest = std::move(lo.manifest);
    out.high_manifest = std::move(hi.manifest);
    return out;
}

// ---------------------------------------------------------------------------
// Containment under the shifted profile
// ---------------------------------------------------------------------------

struct ContainmentSetup {
    model::ProfileParams profile;
    model::DriftSpec drift;
    double eps = 0.0;
    double d = 1.0; ///< the bound is 1 ^ F(x - d v T)
    spde::SchemeConfig scheme;
    std::size_t trials = 16;
    unsigned threads = 0;
};

struct ContainmentReport {
    std::size_t trials = 0;
    std::size_t held = 0;
    double fraction = std::numeric_limits<double>::quiet_NaN();
    double wilson_low = std::numeric_limits<double>::quiet_NaN();
    double wilson_high = std::numeric_limits<double>::quiet_NaN();
    double worst_excess = -std::numeric_limits<double>::infinity(); ///< max of u - bound over all checks
};

inline void to_json(nlohmann::json& j, const ContainmentReport& r) {
    j = {{"trials", r.trials},
         {"held", r.held},
         {"fraction", model::finite_or_null(r.fraction)},
         {"wilson_low", model::finite_or_null(r.wilson_low)},
         {"wilson_high", model::finite_or_null(r.wilson_high)},
         {"worst_excess", model::finite_or_null(r.worst_excess)}};
}

inline std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn;
    const double den = 1.0 + z * z / nn;
    const double centre = (ph + z * z / (2.0 * nn)) / den;
    const double half = z * std::sqrt(ph * (1.0 - ph) / nn + z * z / (4.0 * nn * nn)) / den;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Lattice samples of 1 ^ F on a window reaching `right` to the right of 0.
inline spde::FieldState profile_field(const model::ProfileParams& prof, double dx, double right) {
    const double x_one = model::profile_F_inverse(1.0, prof); // F(x_one) = 1
    const double left = x_one - 20.0 * dx - 1.0;
    const auto cells = static_cast<std::size_t>(std::ceil((right - left) / dx)) + 1;
    spde::FieldState s;
    s.dx = dx;
    s.frame_offset = std::floor(left / dx) * dx + 0.5 * dx;
    s.values.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) s.values[i] = std::min(1.0, model::profile_F(s.position(i), prof));
    return s;
}

/// Fraction of runs from 1 ^ F with u <= 1 ^ F(x - d v T) at every step up to T.
inline ContainmentReport containment_experiment(const ContainmentSetup& setup) {
    const auto& prof = setup.profile;
    model::require_consistent(prof);
    if (std::abs(std::log10(prof.v)) > 3.0)
        throw RangeError("containment_experiment: |log10 v| > 3 is outside the simulatable range");
    if (!(setup.d > 0.0)) throw PreconditionError("containment_experiment: d must be positive");
    setup.scheme.validate();
    ContainmentReport out;
    if (setup.trials == 0) return out;

    const double shift = setup.d * prof.v * prof.T;
    spde::SchemeConfig scheme = setup.scheme;
    const auto initial = profile_field(prof, scheme.dx, shift + 2.0 + 4.0 * scheme.dx);
    scheme.window_cells = initial.values.size();
    scheme.shift_trigger_margin = std::max<std::size_t>(1, std::min(scheme.shift_trigger_margin, initial.values.size() / 2 - 1));
    const model::DriftFunction f(setup.drift);
    const auto steps = static_cast<std::size_t>(std::llround(prof.T / scheme.dt));

    std::vector<char> held(setup.trials, 0);
    std::vector<double> worst(setup.trials, -std::numeric_limits<double>::infinity());
    parallel_for(setup.trials, resolve_threads(setup.threads), [&](std::size_t r) {
        auto rng = rng::make_stream(scheme.seed, "contain", r);
        spde::FieldState s = initial;
        spde::Workspace ws;
        auto excess = [&] {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.values.size(); ++i) {
                const double bound = std::min(1.0, model::profile_F(s.position(i) - shift, prof));
                m = std::max(m, s.values[i] - bound);
            }
            return m;
        };
        double w = excess();
        for (std::size_t k = 0; k < steps; ++k) {
            spde::step(s, f, setup.eps, scheme, rng, ws);
            w = std::max(w, excess());
        }
        worst[r] = w;
        held[r] = w <= 0.0;
    });
    out.trials = setup.trials;
    out.held = static_cast<std::size_t>(std::count(held.begin(), held.end(), 1));
    out.fraction = static_cast<double>(out.held) / static_cast<double>(out.trials);
    std::tie(out.wilson_low, out.wilson_high) = wilson_interval(out.held, out.trials);
    out.worst_excess = *std::max_element(worst.begin(), worst.end());
    return out;
}

} // namespace wavefront::scaling
