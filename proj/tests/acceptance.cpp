// Acceptance runner: one criterion per invocation, one PASS/FAIL line on stdout.
// Each run writes its config under the work directory and drives wavefront-lab.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavefront/front.hpp"
#include "wavefront/io.hpp"
#include "wavefront/model.hpp"
#include "wavefront/scaling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wavefront;

namespace {

fs::path g_work;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p.string())); }

struct RunResult {
    int code = -1;
    double seconds = 0.0;
    fs::path dir;
};

RunResult lab(const std::string& experiment, const json& config, const std::string& name) {
    RunResult r;
    r.dir = g_work / name;
    fs::remove_all(r.dir);
    fs::create_directories(r.dir);
    const auto cfg = g_work / (name + ".json");
    io::write_file(cfg.string(), config.dump(2) + "\n");
    const std::string cmd = std::string("\"") + WAVEFRONT_LAB_EXE + "\" " + experiment + " --config \"" + cfg.string() +
                            "\" --out \"" + r.dir.string() + "\" > \"" + (g_work / (name + ".log")).string() + "\" 2>&1";
    const auto t0 = std::chrono::steady_clock::now();
    const int status = std::system(cmd.c_str());
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

json scheme(double dx, double dt, int window, int margin) {
    return {{"dx", dx}, {"dt", dt}, {"window_cells", window}, {"shift_trigger_margin", margin}};
}

json power_half() { return {{"kind", "power_clipped"}, {"p", 0.5}, {"delta", 1.0}}; }

Verdict runtime_gate(Verdict v, const RunResult& r, double limit) {
    v.detail += " (runtime " + fmt(r.seconds) + "s, limit " + fmt(limit) + "s)";
    if (r.seconds > limit) v.pass = false;
    if (r.code != 0 && r.code != 4) {
        v.pass = false;
        v.detail += " exit code " + std::to_string(r.code);
    }
    return v;
}

// --- criteria --------------------------------------------------------------

json config_1() {
    return {{"seed", 1}, {"drift", {{"kind", "kpp"}}}, {"eps", 0.0}, {"horizon", 50.0}, {"initial_ones", 600},
            {"realizations", 1}, {"scheme", scheme(0.2, 0.01, 1500, 200)}};
}

Verdict criterion_1() {
    const auto r = lab("speed", config_1(), "c1");
    Verdict v;
    if (r.code != 0) return runtime_gate({false, "speed run failed"}, r, 60);
    const double s = read_json(r.dir / "speed.json")["slope"].get<double>();
    v.pass = std::abs(s - 2.0) <= 0.1;
    v.detail = "deterministic KPP speed " + fmt(s) + ", target 2 +/- 0.1";
    return runtime_gate(v, r, 60);
}

json config_2() {
    auto s = scheme(0.2, 0.01, 1000, 150);
    s["record_every"] = 10;
    return {{"seed", 1}, {"drift", power_half()}, {"eps", 0.0}, {"horizon", 40.0}, {"initial_ones", 200},
            {"realizations", 1}, {"scheme", s}};
}

Verdict criterion_2() {
    const auto r = lab("simulate", config_2(), "c2");
    if (r.code != 0) return runtime_gate({false, "simulate run failed"}, r, 120);
    const auto table = io::parse_csv(io::read_file((r.dir / "front_000.csv").string()));
    std::vector<front::Point> pts;
    const auto t = table.values("time");
    const auto x = table.values("front_abs");
    for (std::size_t i = 0; i < t.size(); ++i) pts.push_back({t[i], x[i]});
    std::vector<double> speeds;
    for (double a : {10.0, 20.0, 30.0}) speeds.push_back(front::windowed_speed(pts, a, a + 10.0));
    Verdict v;
    v.pass = speeds[0] < speeds[1] && speeds[1] < speeds[2];
    v.detail = "sqrt drift, eps 0, windowed speeds " + fmt(speeds[0]) + ", " + fmt(speeds[1]) + ", " + fmt(speeds[2]) +
               " must strictly increase";
    return runtime_gate(v, r, 120);
}

json config_3() {
    return {{"seed", 3},
            {"drift", power_half()},
            {"epsilon_grid", {1.0, 0.71, 0.5, 0.35, 0.25}},
            {"realizations_per_point", 64},
            {"horizon", 10.0},
            {"initial_ones", 300},
            {"scheme", scheme(0.1, 0.0025, 1000, 150)}};
}

Verdict criterion_3() {
    const auto r = lab("scaling", config_3(), "c3");
    if (r.code != 0 && r.code != 4) return runtime_gate({false, "scaling run failed"}, r, 1800);
    const auto rep = read_json(r.dir / "report.json");
    const bool inc = rep["strictly_increasing"].get<bool>();
    const int sep = rep["separated_increases"].get<int>();
    const double slope = rep["fit"]["slope"].get<double>();
    Verdict v;
    v.pass = inc && sep >= 3 && std::abs(slope + 2.0 / 3.0) <= 0.35;
    v.detail = "increasing " + std::string(inc ? "yes" : "no") + ", separated steps " + std::to_string(sep) +
               ", log-log slope " + fmt(slope) + " vs -2/3 +/- 0.35";
    return runtime_gate(v, r, 1800);
}

json config_4() {
    return {{"seed", 4},
            {"drift", {{"kind", "kpp"}}},
            {"c", 4.0},
            {"eps", 1.0},
            {"budget",
             {{"realizations", 64}, {"horizon", 40.0}, {"initial_ones", 300}, {"resamples", 1000},
              {"scheme", scheme(0.2, 0.01, 1200, 200)}}}};
}

Verdict criterion_4() {
    const auto r = lab("rescale", config_4(), "c4");
    if (r.code != 0 && r.code != 4) return runtime_gate({false, "rescale run failed"}, r, 600);
    const auto rep = read_json(r.dir / "rescale.json");
    Verdict v;
    v.pass = rep["compatible"].get<bool>();
    v.detail = "lhs " + fmt(rep["lhs"]["slope"].get<double>()) + " [" + fmt(rep["lhs"]["ci_low"].get<double>()) + ", " +
               fmt(rep["lhs"]["ci_high"].get<double>()) + "], scaled rhs " + fmt(rep["rhs_scaled"]["slope"].get<double>()) +
               " [" + fmt(rep["rhs_scaled"]["ci_low"].get<double>()) + ", " +
               fmt(rep["rhs_scaled"]["ci_high"].get<double>()) + "]";
    return runtime_gate(v, r, 600);
}

json config_5() {
    return {{"seed", 5},
            {"tent_minorant", {{"p", 0.5}, {"eps", 0.5}}},
            {"drift_high", power_half()},
            {"eps", 0.5},
            {"budget",
             {{"realizations", 32}, {"horizon", 10.0}, {"initial_ones", 300}, {"resamples", 1000},
              {"scheme", scheme(0.1, 0.0025, 1000, 150)}}}};
}

Verdict criterion_5() {
    const auto r = lab("compare", config_5(), "c5");
    if (r.code != 0 && r.code != 4) return runtime_gate({false, "compare run failed"}, r, 600);
    const auto rep = read_json(r.dir / "compare.json");
    Verdict v;
    v.pass = rep["ordered"].get<bool>();
    v.detail = "tent speed " + fmt(rep["low"]["slope"].get<double>()) + " <= sqrt speed " +
               fmt(rep["high"]["slope"].get<double>());
    return runtime_gate(v, r, 600);
}

json config_6() {
    return {{"seed", 6},
            {"t", 1.0},
            {"x", {0.0, 1.0, 2.0}},
            {"eps", 1.0},
            {"budget",
             {{"spde_realizations", 4000}, {"dual_replicas", 40000}, {"dual_dt", 0.001}, {"delta", 0.05},
              {"law", "binary"}}},
            {"scheme", scheme(0.1, 0.002, 300, 100)}};
}

Verdict criterion_6() {
    const auto r = lab("dual", config_6(), "c6");
    if (r.code != 0 && r.code != 4) return runtime_gate({false, "dual run failed"}, r, 900);
    const auto rep = read_json(r.dir / "dual.json");
    Verdict v;
    v.pass = true;
    std::string zs;
    for (const auto& row : rep["rows"]) {
        const double gap = row["gap"].get<double>(), se = row["combined_se"].get<double>();
        v.pass = v.pass && std::abs(gap) <= 3.0 * se;
        zs += (zs.empty() ? "" : ", ") + fmt(gap / se);
    }
    v.detail = "duality gaps in SE units " + zs + ", bound 3";
    return runtime_gate(v, r, 900);
}

json config_7() { return {{"seed", 7}, {"offspring_check", {{"p", 0.5}, {"draws", 1000000}}}}; }

Verdict criterion_7() {
    const auto r = lab("dual", config_7(), "c7");
    if (r.code != 0) return runtime_gate({false, "offspring check failed to run"}, r, 60);
    const auto rep = read_json(r.dir / "offspring.json");
    const double z = rep["max_abs_z"].get<double>();
    const double g = rep["pgf_half_series"].get<double>();
    const double closed = 0.5 - 0.5 * std::sqrt(0.5);
    Verdict v;
    v.pass = z <= 4.0 && std::abs(g - closed) <= 1e-3 && rep["pmf"].size() == 9;
    v.detail = "offspring pmf n=2..10 max |z| " + fmt(z) + " (bound 4), pgf(1/2) " + fmt(g) + " vs " + fmt(closed);
    return runtime_gate(v, r, 60);
}

json config_8() {
    return {{"seed", 8},
            {"v", {0.5, 1.0, 2.0}},
            {"pairs_per_v", 20},
            {"killed_mc",
             {{"v", 1.0}, {"s", 0.0}, {"y", -1.0}, {"t", 0.5}, {"paths", 10000000}, {"steps", 16}, {"bin_width", 0.1},
              {"min_expected_count", 5e4}}}};
}

Verdict criterion_8() {
    const auto r = lab("kernels", config_8(), "c8");
    if (r.code != 0 && r.code != 4) return runtime_gate({false, "kernels run failed"}, r, 600);
    const auto rep = read_json(r.dir / "kernels.json");
    const bool hold = rep["all_hold"].get<bool>();
    const double rel = rep["killed_mc"]["max_rel_error"].get<double>();
    double worst_ratio = 0.0;
    for (const auto& s : rep["sweeps"])
        worst_ratio = std::max({worst_ratio, s["moving"]["max_ratio"].get<double>(), s["static"]["max_ratio"].get<double>()});
    Verdict v;
    v.pass = hold && rel <= 0.02;
    v.detail = "difference bounds hold " + std::string(hold ? "yes" : "no") + " (max lhs/rhs " + fmt(worst_ratio) +
               "), killed kernel MC max rel error " + fmt(rel) + " (bound 0.02)";
    return runtime_gate(v, r, 600);
}

json config_9() {
    return {{"seed", 9}, {"p", 0.5}, {"theta", 0.75}, {"epsilon", 0.01}, {"profile_check", {{"v", 2.0}, {"levels", 3}}}};
}

Verdict criterion_9() {
    const auto r = lab("constants", config_9(), "c9");
    if (r.code != 0) return runtime_gate({false, "constants run failed"}, r, 60);
    const auto led = read_json(r.dir / "ledger.json");
    const auto prof = read_json(r.dir / "profile.json");
    Verdict v;
    v.pass = std::abs(led["kappa"].get<double>() - 16.0 / 3.0) <= 1e-12 &&
             led["exponent"].get<double>() == 2.0 / 3.0;
    for (const auto& [k, c] : led["certificates"].items()) v.pass = v.pass && c.get<bool>();

    // Direct ledgers at several admissible noise strengths.
    int direct = 0;
    for (double e : {1e-6, 1e-3, 0.01, 0.1}) {
        const auto l = model::derive_constants(0.5, 0.75, e);
        const auto& c = l.certificates;
        const bool ok = c.cert_i && c.cert_ii && c.cert_iii && c.cert_v && c.cert_vi;
        v.pass = v.pass && ok;
        direct += ok;
    }

    std::vector<double> res;
    double slope_err = 0.0;
    for (const auto& lv : prof["refinement"]) {
        res.push_back(lv["residual"]["max_residual"].get<double>());
        slope_err = std::max(slope_err, lv["residual"]["slope_rel_error"].get<double>());
    }
    std::string orders;
    for (std::size_t i = 0; i + 1 < res.size(); ++i) {
        const double o = std::log2(res[i] / res[i + 1]);
        v.pass = v.pass && std::abs(o - 2.0) <= 0.2;
        orders += (orders.empty() ? "" : ", ") + fmt(o);
    }
    v.pass = v.pass && res.size() >= 3 && slope_err <= 1e-6;
    v.detail = "kappa " + fmt(led["kappa"].get<double>()) + ", exponent " + fmt(led["exponent"].get<double>()) +
               ", direct ledgers certified " + std::to_string(direct) + "/4, residual orders " + orders +
               ", slope rel error " + fmt(slope_err);
    return runtime_gate(v, r, 60);
}

struct Entry {
    std::string experiment;
    std::function<json()> config;
};

const std::map<int, Entry>& catalog() {
    static const std::map<int, Entry> m{{1, {"speed", config_1}},    {2, {"simulate", config_2}},
                                        {3, {"scaling", config_3}},  {4, {"rescale", config_4}},
                                        {5, {"compare", config_5}},  {6, {"dual", config_6}},
                                        {7, {"dual", config_7}},     {8, {"kernels", config_8}},
                                        {9, {"constants", config_9}}};
    return m;
}

Verdict criterion_10() {
    Verdict v{true, ""};
    int compared = 0;
    for (const auto& [n, e] : catalog()) {
        const std::string name = "c" + std::to_string(n);
        const auto first = g_work / name / "manifest.json";
        if (!fs::exists(first)) lab(e.experiment, e.config(), name);
        if (!fs::exists(first)) {
            v.pass = false;
            v.detail += " " + name + ": no manifest;";
            continue;
        }
        // Re-run from the manifest itself.
        const auto rerun = g_work / (name + "_rerun");
        fs::remove_all(rerun);
        const std::string cmd = std::string("\"") + WAVEFRONT_LAB_EXE + "\" " + e.experiment + " --config \"" +
                                first.string() + "\" --out \"" + rerun.string() + "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        (void)rc;
        const auto a = read_json(first);
        const auto b_path = rerun / "manifest.json";
        if (!fs::exists(b_path)) {
            v.pass = false;
            v.detail += " " + name + ": re-run wrote no manifest;";
            continue;
        }
        const auto b = read_json(b_path);
        bool same = a["outputs"] == b["outputs"] && a["details"] == b["details"] && a["config_digest"] == b["config_digest"];
        for (const auto& [file, digest] : a["outputs"].items())
            same = same && io::read_file((g_work / name / file).string()) == io::read_file((rerun / file).string());
        if (!same) {
            v.pass = false;
            v.detail += " " + name + ": outputs differ;";
        }
        ++compared;
    }
    v.detail = "re-ran " + std::to_string(compared) + "/9 manifests, outputs byte-identical " +
               (v.pass ? "yes" : "no:" + v.detail);
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria for wavefront-lab"};
    int n = 0;
    std::string work = "acceptance_work";
    app.add_option("--criterion", n, "criterion number 1..10")->required()->check(CLI::Range(1, 10));
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);

    g_work = fs::absolute(work);
    fs::create_directories(g_work);
    static const std::function<Verdict()> fns[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                                   criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
    Verdict v;
    try {
        v = fns[n - 1]();
    } catch (const std::exception& e) {
        v = {false, std::string("error: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << v.detail << std::endl;
    return v.pass ? 0 : 1;
}
