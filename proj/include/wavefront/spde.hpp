#pragma once

// Explicit lattice integrator for du = u_xx dt + f(u) dt + eps sqrt(u(1-u)) dW
// on a window that follows the front.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/model.hpp"
#include "wavefront/model_json.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/rng.hpp"

namespace wavefront::spde {

/// Cell i is centred at frame_offset + i * dx.
struct FieldState {
    std::vector<double> values;
    double dx = 0.1;
    double frame_offset = 0.0;
    double time = 0.0;

    double position(std::size_t i) const { return frame_offset + static_cast<double>(i) * dx; }
};

/// Indicator of x < 0 on `cells` cells, the first `ones` of which are 1.
/// Cell edges fall on multiples of dx, with the 1/0 edge at x = 0.
inline FieldState heaviside(std::size_t cells, std::size_t ones, double dx) {
    if (ones == 0 || ones >= cells) throw PreconditionError("heaviside: need 0 < ones < cells");
    FieldState s;
    s.values.assign(cells, 0.0);
    std::fill_n(s.values.begin(), ones, 1.0);
    s.dx = dx;
    s.frame_offset = -(static_cast<double>(ones) - 0.5) * dx;
    return s;
}

/// How the multiplicative noise increment is sampled.
enum class NoiseScheme {
    /// Gamma increment with the Euler mean and the Wright-Fisher variance, mirrored above 1/2.
    /// Vanishes at 0 and 1 exactly, so both states stay absorbing on the lattice.
    moment_matched_gamma,
    /// Euler-Maruyama with a Gaussian increment, clamped to [0, 1].
    gaussian_clamped,
};

inline std::string noise_name(NoiseScheme n) {
    return n == NoiseScheme::gaussian_clamped ? "gaussian_clamped" : "moment_matched_gamma";
}

struct SchemeConfig {
    double dx = 0.2;
    double dt = 0.01;
    double zero_snap = 1e-12;
    std::size_t window_cells = 1000;
    std::size_t shift_trigger_margin = 100;
    std::uint64_t seed = 1;
    std::size_t record_every = 10; ///< steps between front samples
    NoiseScheme noise = NoiseScheme::moment_matched_gamma;
    double left_boundary = 1.0; ///< Dirichlet value left of cell 0; the right value is 0

    void validate() const {
        if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("scheme.dx", "must be positive");
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("scheme.dt", "must be positive");
        if (dt > 0.5 * dx * dx * (1.0 + 1e-12))
            throw ConfigError("scheme.dt", "explicit stability requires dt <= dx^2/2");
        if (!(zero_snap >= 0.0 && zero_snap < 0.5)) throw ConfigError("scheme.zero_snap", "must lie in [0, 1/2)");
        if (window_cells < 4) throw ConfigError("scheme.window_cells", "must be at least 4");
        if (shift_trigger_margin < 1 || 2 * shift_trigger_margin >= window_cells)
            throw ConfigError("scheme.shift_trigger_margin", "must lie in [1, window_cells/2)");
        if (record_every < 1) throw ConfigError("scheme.record_every", "must be at least 1");
        if (!(left_boundary >= 0.0 && left_boundary <= 1.0))
            throw ConfigError("scheme.left_boundary", "must lie in [0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const SchemeConfig& s) {
    j = {{"dx", s.dx},
         {"dt", s.dt},
         {"zero_snap", s.zero_snap},
         {"window_cells", s.window_cells},
         {"shift_trigger_margin", s.shift_trigger_margin},
         {"seed", s.seed},
         {"record_every", s.record_every},
         {"noise", noise_name(s.noise)},
         {"left_boundary", s.left_boundary}};
}

inline SchemeConfig scheme_from_json(const nlohmann::json& j, const std::string& path = "scheme") {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    SchemeConfig s;
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
        out = j[key].get<double>();
    };
    auto count = [&](const char* key, std::size_t& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_unsigned()) throw ConfigError(path + "." + key, "expected a non-negative integer");
        out = j[key].get<std::size_t>();
    };
    num("dx", s.dx);
    num("dt", s.dt);
    num("zero_snap", s.zero_snap);
    num("left_boundary", s.left_boundary);
    count("window_cells", s.window_cells);
    count("shift_trigger_margin", s.shift_trigger_margin);
    count("record_every", s.record_every);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError(path + ".seed", "expected a non-negative integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        if (n == "moment_matched_gamma") s.noise = NoiseScheme::moment_matched_gamma;
        else if (n == "gaussian_clamped") s.noise = NoiseScheme::gaussian_clamped;
        else throw ConfigError(path + ".noise", "expected moment_matched_gamma or gaussian_clamped");
    }
    s.validate();
    return s;
}

struct StepCounters {
    std::uint64_t steps = 0;
    std::uint64_t clamped_low = 0;  ///< increments that left [0,1] below and were clamped
    std::uint64_t clamped_high = 0; ///< same, above
    std::uint64_t window_shifts = 0;
};

inline void to_json(nlohmann::json& j, const StepCounters& c) {
    j = {{"steps", c.steps}, {"clamped_low", c.clamped_low}, {"clamped_high", c.clamped_high},
         {"window_shifts", c.window_shifts}};
}

/// Reusable buffer for step().
struct Workspace {
    std::vector<double> next;
};

namespace detail {
/// Index of the first cell below 1 and one past the last positive cell.
inline std::pair<std::size_t, std::size_t> active_range(const std::vector<double>& u) {
    std::size_t lo = 0;
    while (lo < u.size() && u[lo] == 1.0) ++lo;
    std::size_t hi = u.size();
    while (hi > lo && u[hi - 1] == 0.0) --hi;
    return {lo, hi};
}
} // namespace detail

/// One explicit step with Dirichlet values left_boundary (left) and 0 (right) outside the window.
template <class Drift>
void step(FieldState& state, const Drift& f, double eps, const SchemeConfig& scheme, rng::Engine& rng,
          Workspace& ws, StepCounters* counters = nullptr) {
    auto& u = state.values;
    const std::size_t n = u.size();
    const double dx = scheme.dx, dt = scheme.dt;
    const double r = dt / (dx * dx);
    const double noise_var = eps * eps * dt / dx; // times u(1-u)
    const double snap = scheme.zero_snap;

    // Cells equal to their neighbours at 0 or 1 are fixed points when f(0)=0 and f(1)>=0
    // (the clamp absorbs f(1)>0), so only [lo-1, hi] needs work.
    std::size_t lo = 0, hi = n;
    if (f.preserves_constant_states() && (scheme.left_boundary == 1.0 || u.front() == 0.0)) {
        auto [a, b] = detail::active_range(u);
        lo = a > 0 ? a - 1 : 0;
        hi = std::min(n, b + 1);
    }
    ws.next.resize(n);
    std::copy(u.begin(), u.end(), ws.next.begin());

    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> gamma;
    using GammaParam = std::gamma_distribution<double>::param_type;

    for (std::size_t i = lo; i < hi; ++i) {
        const double ui = u[i];
        const double left = i == 0 ? scheme.left_boundary : u[i - 1];
        const double right = i + 1 == n ? 0.0 : u[i + 1];
        const double m = ui + r * (right - 2.0 * ui + left) + dt * f(ui);
        double out = m;
        if (noise_var > 0.0 && ui > 0.0 && ui < 1.0) {
            const double var = noise_var * ui * (1.0 - ui);
            if (scheme.noise == NoiseScheme::gaussian_clamped) {
                out = m + std::sqrt(var) * normal(rng);
            } else if (m <= 0.0) {
                out = 0.0;
            } else if (m >= 1.0) {
                out = 1.0;
            } else if (m <= 0.5) {
                out = gamma(rng, GammaParam(m * m / var, var / m));
            } else {
                const double w = 1.0 - m;
                out = 1.0 - gamma(rng, GammaParam(w * w / var, var / w));
            }
        }
        if (out < 0.0) {
            out = 0.0;
            if (counters) ++counters->clamped_low;
        } else if (out > 1.0) {
            out = 1.0;
            if (counters) ++counters->clamped_high;
        }
        if (out < snap) out = 0.0;
        else if (out > 1.0 - snap) out = 1.0;
        ws.next[i] = out;
    }
    u.swap(ws.next);
    state.time += dt;
    if (counters) ++counters->steps;
}

template <class Drift>
void step(FieldState& state, const Drift& f, double eps, const SchemeConfig& scheme, rng::Engine& rng) {
    Workspace ws;
    step(state, f, eps, scheme, rng, ws);
}

struct FrontSample {
    double time = 0.0;
    double front_abs = 0.0;     ///< right edge of the last positive cell; -inf if none
    long long front_cells = -1; ///< window index of the last positive cell; -1 if none
    double frame_offset = 0.0;
};

struct Trajectory {
    std::vector<FrontSample> front_series;
    std::vector<FieldState> snapshots;
    FieldState final_state;
    StepCounters counters;
};

struct EvolveOptions {
    std::size_t snapshot_every = 0; ///< steps between snapshots; 0 keeps only the initial and final fields
};

namespace detail {
inline FrontSample sample(const FieldState& s) {
    FrontSample out;
    out.time = s.time;
    out.frame_offset = s.frame_offset;
    std::size_t hi = s.values.size();
    while (hi > 0 && s.values[hi - 1] == 0.0) --hi;
    if (hi == 0) {
        out.front_abs = -std::numeric_limits<double>::infinity();
        out.front_cells = -1;
    } else {
        out.front_cells = static_cast<long long>(hi - 1);
        out.front_abs = s.position(hi - 1) + 0.5 * s.dx;
    }
    return out;
}

/// Drops `k` cells on the left (all must equal 1) and pads with zeros on the right.
inline void shift_window(FieldState& s, std::size_t k) {
    auto& u = s.values;
    for (std::size_t i = 0; i < k; ++i)
        if (u[i] != 1.0)
            throw WindowTooSmall("window too small: left-edge cell " + std::to_string(i) + " is " +
                                 std::to_string(u[i]) + " at shift time t=" + std::to_string(s.time));
    std::copy(u.begin() + static_cast<std::ptrdiff_t>(k), u.end(), u.begin());
    std::fill(u.end() - static_cast<std::ptrdiff_t>(k), u.end(), 0.0);
    s.frame_offset += static_cast<double>(k) * s.dx;
}
} // namespace detail

inline void check_initial(const FieldState& initial, const SchemeConfig& scheme) {
    if (initial.values.size() < 4) throw PreconditionError("initial field needs at least 4 cells");
    if (std::abs(initial.dx - scheme.dx) > 1e-12 * scheme.dx)
        throw PreconditionError("initial field spacing differs from scheme.dx");
    for (double v : initial.values)
        if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("initial field values must lie in [0, 1]");
    if (initial.values.front() != 1.0 || initial.values.back() != 0.0)
        throw PreconditionError("initial field must be 1 at the left edge and 0 at the right edge");
}

/// Steps to the horizon, following the front. The window length is that of `initial`.
template <class Drift>
Trajectory evolve(const FieldState& initial, const Drift& f, double eps, double horizon, const SchemeConfig& scheme,
                  rng::Engine& rng, const EvolveOptions& opts = {}) {
    scheme.validate();
    check_initial(initial, scheme);
    if (!(horizon >= 0.0)) throw PreconditionError("horizon must be non-negative");
    if (!(eps >= 0.0)) throw PreconditionError("noise strength must be non-negative");

    Trajectory tr;
    FieldState s = initial;
    const std::size_t n = s.values.size();
    const std::size_t margin = std::min(scheme.shift_trigger_margin, n / 2 - 1);
    const auto steps = static_cast<std::size_t>(std::llround(horizon / scheme.dt));
    const double t0 = s.time;
    Workspace ws;

    tr.front_series.push_back(detail::sample(s));
    tr.snapshots.push_back(s);
    for (std::size_t k = 1; k <= steps; ++k) {
        step(s, f, eps, scheme, rng, ws, &tr.counters);
        s.time = t0 + static_cast<double>(k) * scheme.dt; // no drift from repeated addition
        std::size_t hi = n;
        while (hi > 0 && s.values[hi - 1] == 0.0) --hi;
        if (hi + margin > n) {
            detail::shift_window(s, hi + margin - n + margin / 2);
            ++tr.counters.window_shifts;
        }
        if (k % scheme.record_every == 0 || k == steps) tr.front_series.push_back(detail::sample(s));
        if (opts.snapshot_every > 0 && k % opts.snapshot_every == 0 && k != steps) tr.snapshots.push_back(s);
    }
    tr.snapshots.push_back(s);
    tr.final_state = std::move(s);
    return tr;
}

template <class Drift>
Trajectory evolve(const FieldState& initial, const Drift& f, double eps, double horizon, const SchemeConfig& scheme) {
    auto rng = rng::make_stream(scheme.seed, "spde", 0);
    return evolve(initial, f, eps, horizon, scheme, rng);
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleConfig {
    FieldState initial;
    model::DriftSpec drift;
    double eps = 0.0;
    double horizon = 1.0;
    SchemeConfig scheme;
    std::size_t realizations = 1;
    unsigned threads = 0;
    std::size_t first_index = 0; ///< stream index of realization 0
    EvolveOptions evolve;
};

struct Ensemble {
    std::vector<std::optional<Trajectory>> runs; ///< empty where errors[r] is set
    std::vector<std::string> errors;             ///< "" for successful runs
    nlohmann::json manifest;

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(errors.begin(), errors.end(), [](const auto& e) { return !e.empty(); }));
    }
};

/// A spde::FieldState description good enough to rebuild the initial data.
inline nlohmann::json describe_initial(const FieldState& s) {
    std::size_t ones = 0;
    while (ones < s.values.size() && s.values[ones] == 1.0) ++ones;
    const bool is_step = std::all_of(s.values.begin() + static_cast<std::ptrdiff_t>(ones), s.values.end(),
                                     [](double v) { return v == 0.0; });
    nlohmann::json j = {{"cells", s.values.size()}, {"dx", s.dx}, {"frame_offset", s.frame_offset}, {"time", s.time}};
    if (is_step) j["heaviside_ones"] = ones;
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (double v : s.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    }
    j["values_digest"] = h;
    return j;
}

inline nlohmann::json ensemble_config_json(const EnsembleConfig& cfg) {
    return {{"initial", describe_initial(cfg.initial)},
            {"drift", cfg.drift},
            {"eps", cfg.eps},
            {"horizon", cfg.horizon},
            {"scheme", cfg.scheme},
            {"realizations", cfg.realizations},
            {"first_index", cfg.first_index},
            {"snapshot_every", cfg.evolve.snapshot_every}};
}

/// FNV-1a of the canonical (sorted-key) JSON dump.
inline std::uint64_t config_digest(const nlohmann::json& j) { return rng::fnv1a64(j.dump()); }

/// Realization r draws from stream ("spde", first_index + r) of scheme.seed.
inline Ensemble run_ensemble(const EnsembleConfig& cfg) {
    if (cfg.realizations < 1) throw PreconditionError("run_ensemble: realization count must be >= 1");
    cfg.scheme.validate();
    check_initial(cfg.initial, cfg.scheme);
    const model::DriftFunction f(cfg.drift);
    const auto started = std::chrono::steady_clock::now();

    Ensemble ens;
    ens.runs.resize(cfg.realizations);
    ens.errors.assign(cfg.realizations, "");
    parallel_for(cfg.realizations, resolve_threads(cfg.threads), [&](std::size_t r) {
        try {
            auto rng = rng::make_stream(cfg.scheme.seed, "spde", cfg.first_index + r);
            ens.runs[r] = evolve(cfg.initial, f, cfg.eps, cfg.horizon, cfg.scheme, rng, cfg.evolve);
        } catch (const std::exception& e) {
            ens.errors[r] = e.what();
        }
    });

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const auto config = ensemble_config_json(cfg);
    StepCounters total;
    for (const auto& run : ens.runs)
        if (run) {
            total.steps += run->counters.steps;
            total.clamped_low += run->counters.clamped_low;
            total.clamped_high += run->counters.clamped_high;
            total.window_shifts += run->counters.window_shifts;
        }
    nlohmann::json errors = nlohmann::json::array();
    for (std::size_t r = 0; r < ens.errors.size(); ++r)
        if (!ens.errors[r].empty()) errors.push_back({{"index", r}, {"error", ens.errors[r]}});
    ens.manifest = {{"seed", cfg.scheme.seed},
                    {"config", config},
                    {"config_digest", config_digest(config)},
                    {"scheme", cfg.scheme},
                    {"drift", cfg.drift},
                    {"counters", total},
                    {"errors", errors},
                    {"wall_time_seconds", wall}};
    return ens;
}

/// Total mass sum(u) dx.
inline double mass(const FieldState& s) {
    double m = 0.0;
    for (double v : s.values) m += v;
    return m * s.dx;
}

} // namespace wavefront::spde
