#pragma once

// Front functionals and linear speed estimation with bootstrap intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/rng.hpp"
#include "wavefront/spde.hpp"

namespace wavefront::front {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Right edge of the last positive cell, or -inf.
inline double right_front(const spde::FieldState& s) {
    for (std::size_t i = s.values.size(); i-- > 0;)
        if (s.values[i] > 0.0) return s.position(i) + 0.5 * s.dx;
    return kNegInf;
}

/// Left edge of the first cell below 1, or +inf.
inline double left_front(const spde::FieldState& s) {
    for (std::size_t i = 0; i < s.values.size(); ++i)
        if (s.values[i] != 1.0) return s.position(i) - 0.5 * s.dx;
    return kPosInf;
}

/// R - L; +inf when either side is a sentinel.
inline double interface_width(const spde::FieldState& s) {
    const double r = right_front(s), l = left_front(s);
    if (!std::isfinite(r) || !std::isfinite(l)) return kPosInf;
    return r - l;
}

struct SpeedEstimate {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double burn_in_fraction = 0.2;
    std::size_t n_realizations = 1;

    double half_width() const { return 0.5 * (ci_high - ci_low); }
};

inline void to_json(nlohmann::json& j, const SpeedEstimate& e) {
    j = {{"slope", e.slope},         {"intercept", e.intercept},
         {"ci_low", e.ci_low},       {"ci_high", e.ci_high},
         {"burn_in_fraction", e.burn_in_fraction}, {"n_realizations", e.n_realizations}};
}

struct Point {
    double t;
    double x;
};

struct EstimateOptions {
    double burn_in_fraction = 0.2;
    std::size_t resamples = 1000;
    std::uint64_t seed = 0; ///< bootstrap stream seed
    double level = 0.95;
};

namespace detail {

/// Running sums for least squares.
struct Sums {
    double n = 0, t = 0, x = 0, tt = 0, tx = 0;
    void add(double ti, double xi) {
        n += 1;
        t += ti;
        x += xi;
        tt += ti * ti;
        tx += ti * xi;
    }
    void add(const Sums& o) {
        n += o.n;
        t += o.t;
        x += o.x;
        tt += o.tt;
        tx += o.tx;
    }
};

/// Least squares on centred data for stability.
inline std::pair<double, double> ols(std::span<const Point> pts) {
    double mt = 0, mx = 0;
    for (const auto& p : pts) {
        mt += p.t;
        mx += p.x;
    }
    mt /= static_cast<double>(pts.size());
    mx /= static_cast<double>(pts.size());
    double stt = 0, stx = 0;
    for (const auto& p : pts) {
        stt += (p.t - mt) * (p.t - mt);
        stx += (p.t - mt) * (p.x - mx);
    }
    if (!(stt > 0.0)) return {std::numeric_limits<double>::quiet_NaN(), mx};
    const double slope = stx / stt;
    return {slope, mx - slope * mt};
}

inline std::vector<Point> post_burn_in(std::span<const Point> series, double burn_in) {
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw PreconditionError("burn_in_fraction must lie in [0, 1)");
    if (series.empty()) throw EstimationError("empty front series");
    const double t0 = series.front().t, t1 = series.back().t;
    const double cut = t0 + burn_in * (t1 - t0);
    std::vector<Point> out;
    for (const auto& p : series)
        if (p.t >= cut) {
            if (!std::isfinite(p.x)) throw EstimationError("front series contains a sentinel (no positive cell)");
            out.push_back(p);
        }
    if (out.size() < 10) throw EstimationError("front series has fewer than 10 points after burn-in");
    return out;
}

inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + frac * (v[i + 1] - v[i]);
}

inline void set_interval(SpeedEstimate& e, std::vector<double>& boots, double level) {
    if (boots.empty()) {
        e.ci_low = e.ci_high = e.slope;
        return;
    }
    const double a = 0.5 * (1.0 - level);
    e.ci_low = std::min(percentile(boots, a), e.slope);
    e.ci_high = std::max(percentile(boots, 1.0 - a), e.slope);
}

} // namespace detail

inline std::vector<Point> to_points(const std::vector<spde::FrontSample>& series) {
    std::vector<Point> out;
    out.reserve(series.size());
    for (const auto& s : series) out.push_back({s.time, s.front_abs});
    return out;
}

/// OLS slope on one series, moving-block bootstrap with blocks of round(sqrt(n)) points.
inline SpeedEstimate estimate_speed(std::span<const Point> series, const EstimateOptions& opt = {}) {
    const auto pts = detail::post_burn_in(series, opt.burn_in_fraction);
    SpeedEstimate e;
    e.burn_in_fraction = opt.burn_in_fraction;
    e.n_realizations = 1;
    std::tie(e.slope, e.intercept) = detail::ols(pts);
    if (!std::isfinite(e.slope)) throw EstimationError("degenerate time axis");

    const std::size_t n = pts.size();
    const std::size_t block = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(double(n)))));
    auto rng = rng::make_stream(opt.seed, "bootstrap", 0);
    std::uniform_int_distribution<std::size_t> start(0, n - block);
    std::vector<double> boots;
    boots.reserve(opt.resamples);
    std::vector<Point> res;
    res.reserve(n + block);
    for (std::size_t b = 0; b < opt.resamples; ++b) {
        res.clear();
        while (res.size() < n) {
            const std::size_t s = start(rng);
            for (std::size_t k = 0; k < block && res.size() < n; ++k) res.push_back(pts[s + k]);
        }
        const double slope = detail::ols(res).first;
        if (std::isfinite(slope)) boots.push_back(slope);
    }
    detail::set_interval(e, boots, opt.level);
    return e;
}

inline SpeedEstimate estimate_speed(const std::vector<spde::FrontSample>& series, const EstimateOptions& opt = {}) {
    const auto pts = to_points(series);
    return estimate_speed(std::span<const Point>(pts), opt);
}

/// Pooled OLS over realizations, bootstrap over realizations.
inline SpeedEstimate estimate_speed(const std::vector<std::vector<Point>>& ensemble, const EstimateOptions& opt = {}) {
    if (ensemble.empty()) throw EstimationError("empty ensemble");
    if (ensemble.size() == 1) return estimate_speed(std::span<const Point>(ensemble.front()), opt);

    std::vector<detail::Sums> sums;
    std::vector<Point> pooled;
    for (const auto& series : ensemble) {
        const auto pts = detail::post_burn_in(series, opt.burn_in_fraction);
        detail::Sums s;
        for (const auto& p : pts) s.add(p.t, p.x);
        sums.push_back(s);
        pooled.insert(pooled.end(), pts.begin(), pts.end());
    }
    SpeedEstimate e;
    e.burn_in_fraction = opt.burn_in_fraction;
    e.n_realizations = ensemble.size();
    std::tie(e.slope, e.intercept) = detail::ols(pooled);
    if (!std::isfinite(e.slope)) throw EstimationError("degenerate time axis");

    auto slope_of = [](const detail::Sums& s) {
        const double den = s.n * s.tt - s.t * s.t;
        return den > 0.0 ? (s.n * s.tx - s.t * s.x) / den : std::numeric_limits<double>::quiet_NaN();
    };
    auto rng = rng::make_stream(opt.seed, "bootstrap", 1);
    std::uniform_int_distribution<std::size_t> pick(0, sums.size() - 1);
    std::vector<double> boots;
    boots.reserve(opt.resamples);
    for (std::size_t b = 0; b < opt.resamples; ++b) {
        detail::Sums s;
        for (std::size_t k = 0; k < sums.size(); ++k) s.add(sums[pick(rng)]);
        const double slope = slope_of(s);
        if (std::isfinite(slope)) boots.push_back(slope);
    }
    detail::set_interval(e, boots, opt.level);
    return e;
}

inline SpeedEstimate estimate_speed(const spde::Ensemble& ens, const EstimateOptions& opt = {}) {
    std::vector<std::vector<Point>> series;
    for (std::size_t r = 0; r < ens.runs.size(); ++r) {
        if (!ens.runs[r]) throw EstimationError("realization " + std::to_string(r) + " failed: " + ens.errors[r]);
        series.push_back(to_points(ens.runs[r]->front_series));
    }
    return estimate_speed(series, opt);
}

/// OLS slope of the points with t in [t_begin, t_end].
inline double windowed_speed(std::span<const Point> series, double t_begin, double t_end) {
    std::vector<Point> pts;
    for (const auto& p : series)
        if (p.t >= t_begin && p.t <= t_end) pts.push_back(p);
    if (pts.size() < 2) throw EstimationError("window holds fewer than 2 points");
    const double s = detail::ols(pts).first;
    if (!std::isfinite(s)) throw EstimationError("degenerate time axis");
    return s;
}

} // namespace wavefront::front
