#pragma once

// Experiment dispatch for the wavefront-lab executable. Each experiment reads a
// JSON config, writes its tables and reports into the output directory and
// finishes with manifest.json (effective config, digests of every output).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavefront/dual.hpp"
#include "wavefront/errors.hpp"
#include "wavefront/front.hpp"
#include "wavefront/io.hpp"
#include "wavefront/kernels.hpp"
#include "wavefront/model.hpp"
#include "wavefront/model_json.hpp"
#include "wavefront/rng.hpp"
#include "wavefront/scaling.hpp"
#include "wavefront/spde.hpp"

namespace wavefront::cli {

using nlohmann::json;

inline constexpr const char* kArtifactVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidation = 2, kRuntime = 3, kCheckFailed = 4 };

inline const std::vector<std::string>& experiments() {
    static const std::vector<std::string> names = {"simulate", "speed",   "scaling",   "rescale", "compare",
                                                   "contain",  "dual",    "constants", "kernels"};
    return names;
}

/// Typed access to one JSON object; errors name the full key path.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
    }
    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) const {
        if (!j_.contains(k)) throw ConfigError(key(k), "missing");
        return j_.at(k);
    }
    double number(const std::string& k) const {
        const auto& v = raw(k);
        if (!v.is_number()) throw ConfigError(key(k), "expected a number");
        return v.get<double>();
    }
    double number(const std::string& k, double fallback) const { return has(k) ? number(k) : fallback; }
    double positive(const std::string& k, double fallback) const {
        const double v = number(k, fallback);
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key(k), "must be positive");
        return v;
    }
    std::size_t count(const std::string& k, std::size_t fallback) const {
        if (!has(k)) return fallback;
        const auto& v = raw(k);
        if (!v.is_number_unsigned()) throw ConfigError(key(k), "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    bool flag(const std::string& k, bool fallback) const {
        if (!has(k)) return fallback;
        if (!raw(k).is_boolean()) throw ConfigError(key(k), "expected true or false");
        return raw(k).get<bool>();
    }
    std::string text(const std::string& k, const std::string& fallback) const {
        if (!has(k)) return fallback;
        if (!raw(k).is_string()) throw ConfigError(key(k), "expected a string");
        return raw(k).get<std::string>();
    }
    std::vector<double> numbers(const std::string& k) const {
        const auto& v = raw(k);
        if (!v.is_array()) throw ConfigError(key(k), "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(key(k), "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    Reader child(const std::string& k) const { return Reader(raw(k), key(k)); }
    const json& object() const { return j_; }

private:
    const json& j_;
    std::string path_;
};

/// Files written by an experiment, with their FNV-1a digests.
class Outputs {
public:
    explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}
    void put(const std::string& name, const std::string& content) {
        io::write_file((dir_ / name).string(), content);
        digests_[name] = io::hex64(rng::fnv1a64(content));
    }
    void put_json(const std::string& name, const json& j) { put(name, j.dump(2) + "\n"); }
    const json& digests() const { return digests_; }

private:
    std::filesystem::path dir_;
    json digests_ = json::object();
};

struct Context {
    Reader cfg;
    std::uint64_t seed;
    unsigned threads;
    Outputs& out;
    json& details;
    std::vector<std::string>& warnings;
};

// ---------------------------------------------------------------------------
// Config pieces
// ---------------------------------------------------------------------------

inline model::DriftSpec read_drift(const Reader& r, const std::string& k) {
    return model::drift_from_json(r.raw(k), r.key(k));
}

inline spde::SchemeConfig read_scheme(const Reader& r, std::uint64_t seed) {
    json j = r.has("scheme") ? r.raw("scheme") : json::object();
    if (!j.is_object()) throw ConfigError(r.key("scheme"), "expected an object");
    j["seed"] = seed;
    return spde::scheme_from_json(j, r.key("scheme"));
}

inline front::EstimateOptions read_estimate(const Reader& r, std::uint64_t seed) {
    front::EstimateOptions e;
    e.burn_in_fraction = r.number("burn_in_fraction", 0.2);
    if (!(e.burn_in_fraction >= 0.0 && e.burn_in_fraction < 1.0))
        throw ConfigError(r.key("burn_in_fraction"), "must lie in [0, 1)");
    e.resamples = r.count("resamples", 1000);
    e.seed = seed;
    return e;
}

inline scaling::Budget read_budget(const Reader& r, std::uint64_t seed, unsigned threads) {
    scaling::Budget b;
    b.realizations = r.count("realizations", 32);
    if (b.realizations < 1) throw ConfigError(r.key("realizations"), "must be at least 1");
    b.horizon = r.positive("horizon", 20.0);
    b.scheme = read_scheme(r, seed);
    b.initial_ones = r.count("initial_ones", 0);
    if (b.initial_ones >= b.scheme.window_cells) throw ConfigError(r.key("initial_ones"), "must be below window_cells");
    b.threads = threads;
    b.estimate = read_estimate(r, seed);
    return b;
}

inline void counter_warnings(const json& manifest, const std::string& label, std::vector<std::string>& warnings) {
    if (!manifest.contains("counters")) return;
    const auto& c = manifest["counters"];
    const double steps = c.value("steps", 0.0);
    const double low = c.value("clamped_low", 0.0), high = c.value("clamped_high", 0.0);
    if (low + high > 0)
        warnings.push_back(label + ": " + io::fmt(low + high) + " clamped increments over " + io::fmt(steps) + " steps");
    warnings.push_back(label + ": " + io::fmt(c.value("window_shifts", 0.0)) + " window shifts");
}

inline io::Table front_table(const spde::Trajectory& tr) {
    io::Table t;
    t.header = {"time", "front_abs", "front_cells", "frame_offset"};
    for (const auto& s : tr.front_series)
        t.rows.push_back({s.time, s.front_abs, static_cast<double>(s.front_cells), s.frame_offset});
    return t;
}

inline io::Table snapshot_table(const spde::FieldState& s) {
    io::Table t;
    t.header = {"x", "u"};
    for (std::size_t i = 0; i < s.values.size(); ++i) t.rows.push_back({s.position(i), s.values[i]});
    return t;
}

inline std::string index_name(const std::string& stem, std::size_t i, const std::string& ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return stem + "_" + buf + ext;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

inline spde::EnsembleConfig read_ensemble(const Context& c) {
    const auto& r = c.cfg;
    spde::EnsembleConfig e;
    e.drift = read_drift(r, "drift");
    e.eps = r.number("eps", 0.0);
    if (!(e.eps >= 0.0)) throw ConfigError(r.key("eps"), "must be non-negative");
    e.horizon = r.positive("horizon", 10.0);
    e.scheme = read_scheme(r, c.seed);
    e.realizations = r.count("realizations", 1);
    if (e.realizations < 1) throw ConfigError(r.key("realizations"), "must be at least 1");
    const std::size_t ones = r.count("initial_ones", e.scheme.window_cells / 2);
    if (ones == 0 || ones >= e.scheme.window_cells) throw ConfigError(r.key("initial_ones"), "must lie in (0, window_cells)");
    e.initial = spde::heaviside(e.scheme.window_cells, ones, e.scheme.dx);
    e.threads = c.threads;
    e.evolve.snapshot_every = r.count("snapshot_every", 0);
    return e;
}

inline int run_simulate(Context& c) {
    const auto cfg = read_ensemble(c);
    auto ens = spde::run_ensemble(cfg);
    for (std::size_t i = 0; i < ens.runs.size(); ++i) {
        if (!ens.runs[i]) continue;
        c.out.put(index_name("front", i, ".csv"), io::to_csv(front_table(*ens.runs[i])));
        c.out.put(index_name("snapshot", i, ".csv"), io::to_csv(snapshot_table(ens.runs[i]->final_state)));
    }
    counter_warnings(ens.manifest, "simulate", c.warnings);
    for (const auto& e : ens.manifest["errors"]) c.warnings.push_back("realization " + e["index"].dump() + ": " + e["error"].get<std::string>());
    ens.manifest.erase("wall_time_seconds");
    c.details["ensemble"] = ens.manifest;
    return ens.failures() == 0 ? kOk : kRuntime;
}

inline int run_speed(Context& c) {
    const auto cfg = read_ensemble(c);
    const auto est_opts = read_estimate(c.cfg, c.seed);
    auto ens = spde::run_ensemble(cfg);
    if (ens.failures() > 0) throw std::runtime_error("realization failed: " + ens.manifest["errors"].dump());
    const auto est = front::estimate_speed(ens, est_opts);
    c.out.put_json("speed.json", est);
    c.out.put(index_name("front", 0, ".csv"), io::to_csv(front_table(*ens.runs[0])));
    counter_warnings(ens.manifest, "speed", c.warnings);
    ens.manifest.erase("wall_time_seconds");
    c.details["ensemble"] = ens.manifest;
    return kOk;
}

inline io::Table scaling_table(const std::vector<scaling::ScalingRow>& rows) {
    io::Table t;
    t.header = {"epsilon", "V", "ci_low", "ci_high", "n"};
    for (const auto& r : rows)
        t.rows.push_back({r.eps, r.estimate.slope, r.estimate.ci_low, r.estimate.ci_high,
                          static_cast<double>(r.estimate.n_realizations)});
    return t;
}

inline int run_scaling(Context& c) {
    const auto& r = c.cfg;
    scaling::ScalingPlan plan;
    plan.drift = read_drift(r, "drift");
    plan.epsilon_grid = r.numbers("epsilon_grid");
    plan.realizations_per_point = r.count("realizations_per_point", 64);
    plan.horizon = r.positive("horizon", 10.0);
    plan.scheme = read_scheme(r, c.seed);
    plan.initial_ones = r.count("initial_ones", 0);
    plan.threads = c.threads;
    plan.estimate = read_estimate(r, c.seed);
    const bool fit = r.flag("fit", true);
    plan.min_points = fit ? 3 : 2;
    const auto rows = scaling::speed_vs_epsilon(plan);
    const auto table = scaling_table(rows);
    c.out.put("scaling.csv", io::to_csv(table));
    const auto p = scaling::power_of(plan.drift);
    c.out.put("scaling.svg", io::emit_plot(table, io::PlotKind::loglog_scaling, p.value_or(0.5)));
    json report = {{"strictly_increasing", scaling::strictly_increasing(rows)},
                   {"separated_increases", scaling::separated_increases(rows)},
                   {"steps", rows.size() - 1}};
    if (fit) report["fit"] = scaling::fit_exponent(rows, p, 1000, c.seed);
    c.out.put_json("report.json", report);
    json row_manifests = json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        json m = rows[k].manifest;
        m.erase("wall_time_seconds");
        counter_warnings(m, "row " + std::to_string(k), c.warnings);
        row_manifests.push_back({{"eps", rows[k].eps}, {"manifest", m}});
    }
    c.details["rows"] = row_manifests;
    return kOk;
}

inline int run_rescale(Context& c) {
    const auto& r = c.cfg;
    const auto drift = read_drift(r, "drift");
    const double factor = r.positive("c", 4.0);
    const double eps = r.positive("eps", 1.0);
    const auto budget = read_budget(r.has("budget") ? r.child("budget") : r, c.seed, c.threads);
    scaling::RescalingOptions opt;
    opt.shared_seeds = r.flag("shared_seeds", false);
    opt.scale_grid = r.flag("scale_grid", false);
    auto rep = scaling::rescaling_check(drift, factor, eps, budget, opt);
    rep.lhs_manifest.erase("wall_time_seconds");
    rep.rhs_manifest.erase("wall_time_seconds");
    c.out.put_json("rescale.json", {{"c", rep.c}, {"lhs", rep.lhs}, {"rhs_scaled", rep.rhs_scaled}, {"compatible", rep.compatible}});
    counter_warnings(rep.lhs_manifest, "lhs", c.warnings);
    counter_warnings(rep.rhs_manifest, "rhs", c.warnings);
    c.details["lhs"] = rep.lhs_manifest;
    c.details["rhs"] = rep.rhs_manifest;
    return rep.compatible ? kOk : kCheckFailed;
}

inline int run_compare(Context& c) {
    const auto& r = c.cfg;
    model::DriftSpec low;
    json tent = nullptr;
    if (r.has("tent_minorant")) {
        const auto t = r.child("tent_minorant");
        const auto m = scaling::make_tent_minorant(t.number("p", 0.5), t.positive("eps", 0.5));
        low = m.drift;
        tent = {{"q", m.q}, {"width", m.width}, {"height", m.height}};
    } else {
        low = read_drift(r, "drift_low");
    }
    const auto high = read_drift(r, "drift_high");
    const double eps = r.positive("eps", 0.5);
    const auto budget = read_budget(r.has("budget") ? r.child("budget") : r, c.seed, c.threads);
    auto rep = scaling::comparison_check(low, high, eps, budget);
    c.out.put_json("compare.json", {{"low", rep.low},
                                    {"high", rep.high},
                                    {"slack", rep.slack},
                                    {"ordered", rep.ordered},
                                    {"max_excess", rep.max_excess},
                                    {"drift_low", low},
                                    {"tent", tent}});
    rep.low_manifest.erase("wall_time_seconds");
    rep.high_manifest.erase("wall_time_seconds");
    c.details["low"] = rep.low_manifest;
    c.details["high"] = rep.high_manifest;
    return rep.ordered ? kOk : kCheckFailed;
}

inline int run_contain(Context& c) {
    const auto& r = c.cfg;
    scaling::ContainmentSetup s;
    if (r.has("ledger")) {
        const auto l = r.child("ledger");
        const auto led = model::derive_constants(l.number("p", 0.5), l.number("theta", 0.75), l.positive("epsilon", 0.01));
        const auto prof = model::profile_of(led);
        if (!prof) throw RangeError("contain: ledger wave speed v = 2^" + io::fmt(led.v.log2) + " is not representable");
        s.profile = *prof;
    } else {
        const auto p = r.child("profile");
        s.profile = model::ProfileParams::from_wave_speed(p.number("p", 0.5), p.number("theta", 0.75), p.positive("v", 2.0));
    }
    if (r.has("drift")) s.drift = read_drift(r, "drift");
    else s.drift.kind = model::PowerClipped{s.profile.p, 1.0};
    s.eps = r.number("eps", 0.0);
    if (!(s.eps >= 0.0)) throw ConfigError(r.key("eps"), "must be non-negative");
    s.d = r.positive("d", 1.0);
    s.scheme = read_scheme(r, c.seed);
    s.trials = r.count("trials", 16);
    s.threads = c.threads;
    const auto rep = scaling::containment_experiment(s);
    c.out.put_json("contain.json", {{"report", rep},
                                    {"profile", {{"p", s.profile.p}, {"theta", s.profile.theta}, {"v", s.profile.v},
                                                 {"eps_small", s.profile.eps_small}, {"T", s.profile.T}}},
                                    {"d", s.d},
                                    {"eps", s.eps}});
    return kOk;
}

inline json offspring_check(const Reader& r, std::uint64_t seed) {
    const double p = r.number("p", 0.5);
    const std::size_t draws = r.count("draws", 1'000'000);
    const std::uint64_t cap = r.count("cap", 1'000'000);
    dual::OffspringSampler sampler(p, cap);
    auto rng = rng::make_stream(seed, "offspring", 0);
    std::vector<std::uint64_t> counts(11, 0);
    double pgf = 0.0, pgf2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto n = sampler(rng);
        if (n <= 10) ++counts[n];
        const double g = std::pow(0.5, static_cast<double>(n));
        pgf += g;
        pgf2 += g * g;
    }
    const double nd = static_cast<double>(draws);
    json rows = json::array();
    double worst = 0.0;
    for (int n = 2; n <= 10; ++n) {
        const double q = model::offspring_pmf(p, n);
        const double emp = static_cast<double>(counts[n]) / nd;
        const double se = std::sqrt(q * (1.0 - q) / nd);
        worst = std::max(worst, std::abs(emp - q) / se);
        rows.push_back({{"n", n}, {"exact", q}, {"empirical", emp}, {"se", se}});
    }
    pgf /= nd;
    const double pgf_se = std::sqrt(std::max(0.0, pgf2 / nd - pgf * pgf) / nd);
    return {{"p", p},
            {"draws", draws},
            {"cap", cap},
            {"pmf", rows},
            {"max_abs_z", worst},
            {"pgf_half_mc", pgf},
            {"pgf_half_mc_se", pgf_se},
            {"pgf_half_series", model::capped_pgf(p, 100000, 0.5)},
            {"pgf_half_closed", 0.5 - 0.5 * std::pow(0.5, p)},
            {"cap_hits", sampler.cap_hits()},
            {"cap_tail_probability", std::exp(sampler.log_tail(static_cast<double>(cap)))}};
}

inline int run_dual(Context& c) {
    const auto& r = c.cfg;
    int code = kOk;
    if (r.has("offspring_check")) c.out.put_json("offspring.json", offspring_check(r.child("offspring_check"), c.seed));
    if (r.has("t")) {
        const double t = r.number("t");
        const auto xs = r.numbers("x");
        const double eps = r.positive("eps", 1.0);
        dual::DualityBudget b;
        if (r.has("budget")) {
            const auto br = r.child("budget");
            b.spde_realizations = br.count("spde_realizations", b.spde_realizations);
            b.dual_replicas = br.count("dual_replicas", b.dual_replicas);
            b.dual_dt = br.positive("dual_dt", b.dual_dt);
            b.delta = br.positive("delta", b.delta);
            b.particle_cap = br.count("particle_cap", b.particle_cap);
            const auto law = br.text("law", "binary");
            if (law == "binary") b.law = dual::OffspringLaw::binary;
            else if (law == "heavy_tailed") b.law = dual::OffspringLaw::heavy_tailed;
            else throw ConfigError(br.key("law"), "expected binary or heavy_tailed");
            b.p = br.number("p", b.p);
        }
        b.seed = c.seed;
        b.threads = c.threads;
        const auto scheme = read_scheme(r, c.seed);
        const auto rep = dual::duality_gap(t, xs, eps, b, scheme, r.count("window_cells", 0));
        bool within = true;
        for (const auto& row : rep.rows) within = within && std::abs(row.gap) <= 3.0 * row.combined_se;
        const bool judged = b.law == dual::OffspringLaw::binary;
        c.out.put_json("dual.json", {{"rows", rep.rows},
                                     {"mean_particles", rep.mean_particles},
                                     {"cap_hits", rep.cap_hits},
                                     {"within_3se", within},
                                     {"judged", judged},
                                     {"budget", b}});
        if (rep.cap_hits > 0) c.warnings.push_back("dual: " + std::to_string(rep.cap_hits) + " offspring cap hits");
        if (judged && !within) code = kCheckFailed;
    }
    return code;
}

inline int run_constants(Context& c) {
    const auto& r = c.cfg;
    const double p = r.number("p", 0.5), theta = r.number("theta", 0.75);
    const double eps = r.positive("epsilon", 0.01);
    if (!(p >= 0.5 && p < 1.0)) throw ConfigError(r.key("p"), "must lie in [1/2, 1)");
    if (!(theta > 0.5 && theta < 1.0)) throw ConfigError(r.key("theta"), "must lie in (1/2, 1)");
    const auto led = model::derive_constants(p, theta, eps);
    json j = led;
    const auto sb = model::speed_bounds(led);
    j["speed_bounds"] = {{"lower_coeff", model::magnitude_json(sb.lower_coeff)},
                         {"log2_lower_coeff", sb.lower_coeff.log2},
                         {"upper_value", model::magnitude_json(sb.upper_value)},
                         {"log2_upper_value", sb.upper_value.log2}};
    c.out.put_json("ledger.json", j);
    if (r.has("profile_check")) {
        const auto pc = r.child("profile_check");
        const auto prof = model::ProfileParams::from_wave_speed(p, theta, pc.positive("v", 2.0));
        json out = json::object();
        json res = json::array();
        double dx = pc.positive("dx", 0.02);
        const std::size_t levels = pc.count("levels", 3);
        for (std::size_t k = 0; k < levels; ++k, dx /= 2.0) {
            kernels::ProfileGrid g;
            g.dx = dx;
            g.dt = dx * dx / 4.0;
            g.z_min = pc.number("z_min", -2.0);
            const auto rr = kernels::verify_profile_pde(prof, g);
            res.push_back({{"dx", dx}, {"residual", rr}});
        }
        out["refinement"] = res;
        model::DriftSpec d;
        d.kind = model::PowerClipped{p, 1.0};
        const auto mj = model::check_majorant(prof, d, pc.count("grid_points", 10001));
        out["majorant"] = {{"min_gap", mj.min_gap}, {"argmin", mj.argmin}, {"tangency_point", mj.tangency_point},
                           {"gap_at_tangency", model::finite_or_null(mj.gap_at_tangency)}};
        out["profile"] = {{"v", prof.v}, {"eps_small", prof.eps_small}, {"kappa", prof.kappa}, {"T", prof.T}, {"L", prof.L}};
        c.out.put_json("profile.json", out);
    }
    return kOk;
}

inline int run_kernels(Context& c) {
    const auto& r = c.cfg;
    kernels::QuadratureSpec q;
    if (r.has("quadrature")) {
        const auto qr = r.child("quadrature");
        q.rel_tol = qr.positive("rel_tol", q.rel_tol);
        q.max_depth = static_cast<unsigned>(qr.count("max_depth", q.max_depth));
        q.window_sigmas = qr.positive("window_sigmas", q.window_sigmas);
    }
    const auto vs = r.has("v") ? r.numbers("v") : std::vector<double>{0.5, 1.0, 2.0};
    const std::size_t n = r.count("pairs_per_v", 20);
    auto rng = rng::make_stream(c.seed, "kernel_pairs", 0);
    json sweeps = json::array();
    bool all = true;
    for (double v : vs) {
        if (!(v > 0.0)) throw ConfigError(r.key("v"), "speeds must be positive");
        const auto mp = kernels::random_moving_pairs(v, n, rng);
        const auto sp = kernels::random_static_pairs(v, n, rng);
        const auto mr = kernels::verify_difference_bound_moving(v, mp, q);
        const auto sr = kernels::verify_difference_bound_static(v, sp, q);
        auto pairs_json = [](const std::vector<kernels::PointPair>& ps, const kernels::BoundReport& rep) {
            json a = json::array();
            for (std::size_t i = 0; i < ps.size(); ++i)
                a.push_back({{"t", ps[i].a.t}, {"x", ps[i].a.x}, {"t2", ps[i].b.t}, {"x2", ps[i].b.x}, {"result", rep.pairs[i]}});
            return a;
        };
        sweeps.push_back({{"v", v},
                          {"moving", {{"max_ratio", mr.max_ratio}, {"all_hold", mr.all_hold}, {"pairs", pairs_json(mp, mr)}}},
                          {"static", {{"max_ratio", sr.max_ratio}, {"all_hold", sr.all_hold}, {"pairs", pairs_json(sp, sr)}}}});
        all = all && mr.all_hold && sr.all_hold;
        if (!mr.all_hold) c.warnings.push_back("moving bound violated at v=" + io::fmt(v));
        if (!sr.all_hold) c.warnings.push_back("static bound violated at v=" + io::fmt(v));
    }
    json report = {{"quadrature", q}, {"sweeps", sweeps}, {"all_hold", all}};
    if (r.has("killed_mc")) {
        const auto m = r.child("killed_mc");
        kernels::KernelPoint k{m.number("s", 0.0), m.number("y", -1.0), m.positive("t", 0.5), 0.0, m.number("v", 1.0)};
        const double lo = m.number("bin_lo", -4.0), hi = m.number("bin_hi", 0.5), w = m.positive("bin_width", 0.1);
        const auto mc = kernels::killed_kernel_monte_carlo(k, m.count("paths", 10'000'000), m.count("steps", 16), lo, hi, w,
                                                            c.seed, c.threads);
        const double min_count = m.number("min_expected_count", 5e4);
        json bins = json::array();
        double worst = 0.0;
        for (std::size_t i = 0; i < mc.counts.size(); ++i) {
            const double a = lo + w * static_cast<double>(i);
            const double exact = kernels::killed_kernel_bin_average(k, a, a + w);
            const double expected = exact * w * static_cast<double>(mc.paths);
            const double rel = exact > 0 ? std::abs(mc.density(i) - exact) / exact : 0.0;
            const bool used = expected >= min_count;
            if (used) worst = std::max(worst, rel);
            bins.push_back({{"lo", a}, {"exact", exact}, {"mc", mc.density(i)}, {"rel_error", rel}, {"used", used}});
        }
        report["killed_mc"] = {{"paths", mc.paths},
                               {"survivors", mc.survivors},
                               {"survival_exact", kernels::killed_survival(k)},
                               {"max_rel_error", worst},
                               {"bins", bins}};
    }
    c.out.put_json("kernels.json", report);
    return all ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// A manifest is accepted as a config: its stored config is used.
inline json load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("artifact_version") && j.contains("config")) return j["config"];
    return j;
}

struct RunRequest {
    std::string experiment;
    std::string config_path;
    std::string out_dir;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
};

inline int run(const RunRequest& req, std::ostream& err = std::cerr) {
    try {
        const auto& names = experiments();
        if (std::find(names.begin(), names.end(), req.experiment) == names.end())
            throw ConfigError("experiment", "unknown experiment '" + req.experiment + "'");
        json config = load_config(req.config_path);
        if (!config.is_object()) throw ConfigError("config", "expected a JSON object");
        if (config.contains("experiment") && config["experiment"] != req.experiment)
            throw ConfigError("experiment", "config is for '" + config["experiment"].dump() + "', not '" + req.experiment + "'");
        config["experiment"] = req.experiment;
        std::uint64_t seed = 1;
        if (config.contains("seed")) {
            if (!config["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
            seed = config["seed"].get<std::uint64_t>();
        }
        if (req.seed) seed = *req.seed;
        config["seed"] = seed;

        std::filesystem::create_directories(req.out_dir);
        Outputs out(req.out_dir);
        json details = json::object();
        std::vector<std::string> warnings;
        const std::string started = utc_now();
        Context ctx{Reader(config, ""), seed, resolve_threads(req.threads), out, details, warnings};
        int code = kOk;
        const auto& e = req.experiment;
        if (e == "simulate") code = run_simulate(ctx);
        else if (e == "speed") code = run_speed(ctx);
        else if (e == "scaling") code = run_scaling(ctx);
        else if (e == "rescale") code = run_rescale(ctx);
        else if (e == "compare") code = run_compare(ctx);
        else if (e == "contain") code = run_contain(ctx);
        else if (e == "dual") code = run_dual(ctx);
        else if (e == "constants") code = run_constants(ctx);
        else code = run_kernels(ctx);

        json manifest = {{"artifact_version", kArtifactVersion},
                         {"experiment", e},
                         {"master_seed", seed},
                         {"config", config},
                         {"config_digest", io::hex64(rng::fnv1a64(config.dump()))},
                         {"started", started},
                         {"finished", utc_now()},
                         {"outputs", out.digests()},
                         {"warnings", warnings},
                         {"details", details},
                         {"exit_code", code}};
        io::write_file((std::filesystem::path(req.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
        if (code == kCheckFailed) err << "check failed; see outputs in " << req.out_dir << "\n";
        return code;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kValidation;
    } catch (const PreconditionError& e) {
        err << "precondition failed: " << e.what() << "\n";
        return kValidation;
    } catch (const DomainError& e) {
        err << "domain error: " << e.what() << "\n";
        return kValidation;
    } catch (const json::exception& e) {
        err << "configuration error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
}

/// `plot`: table CSV to SVG.
inline int plot(const std::string& table_path, const std::string& kind, const std::string& out_path, double p,
                std::ostream& err = std::cerr) {
    try {
        const auto k = io::plot_kind(kind);
        const auto table = io::parse_csv(io::read_file(table_path));
        io::write_file(out_path, io::emit_plot(table, k, p));
        return kOk;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
}

/// Verifies a manifest: the stored digest matches its config.
inline bool manifest_consistent(const json& manifest) {
    return manifest.contains("config") && manifest.contains("config_digest") &&
           manifest["config_digest"] == io::hex64(rng::fnv1a64(manifest["config"].dump()));
}

} // namespace wavefront::cli
