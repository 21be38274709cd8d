#pragma once

// JSON round-trip for drift specs and the constants ledger.

#include <cmath>
#include <string>

#include <json.hpp>

#include "wavefront/errors.hpp"
#include "wavefront/model.hpp"

namespace wavefront::model {

inline void to_json(nlohmann::json& j, const DriftSpec& spec) {
    j = nlohmann::json::object();
    j["kind"] = drift_name(spec);
    j["scale"] = spec.scale;
    std::visit(
        [&j](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, PowerClipped>) {
                j["p"] = k.p;
                j["delta"] = k.delta;
            } else if constexpr (std::is_same_v<K, CappedPower>) {
                j["p"] = k.p;
            } else if constexpr (std::is_same_v<K, Tent>) {
                j["width"] = k.width;
                j["height"] = k.height;
            } else if constexpr (std::is_same_v<K, LinearMajorant>) {
                j["theta"] = k.theta;
                j["v"] = k.v;
                j["eps_small"] = k.eps_small;
            } else if constexpr (std::is_same_v<K, PgfDerived>) {
                j["p"] = k.p;
                j["truncation"] = k.truncation;
            }
        },
        spec.kind);
}

/// Reads a drift object; `path` prefixes field names in ConfigError.
inline DriftSpec drift_from_json(const nlohmann::json& j, const std::string& path = "drift") {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    auto num = [&](const char* key, double fallback) -> double {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
        return j[key].get<double>();
    };
    if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(path + ".kind", "missing drift kind");
    const std::string kind = j["kind"].get<std::string>();
    DriftSpec spec;
    spec.scale = num("scale", 1.0);
    if (kind == "zero") spec.kind = ZeroDrift{};
    else if (kind == "kpp") spec.kind = Kpp{};
    else if (kind == "power_clipped") spec.kind = PowerClipped{num("p", 0.5), num("delta", 1.0)};
    else if (kind == "capped_power") spec.kind = CappedPower{num("p", 0.5)};
    else if (kind == "tent") spec.kind = Tent{num("width", 1.0), num("height", 0.5)};
    else if (kind == "linear_majorant") spec.kind = LinearMajorant{num("theta", 0.75), num("v", 1.0), num("eps_small", 1.0)};
    else if (kind == "pgf_derived") {
        const double trunc = num("truncation", 100000.0);
        if (!(trunc >= 2.0) || trunc != std::floor(trunc)) throw ConfigError(path + ".truncation", "expected an integer >= 2");
        spec.kind = PgfDerived{num("p", 0.5), static_cast<std::size_t>(trunc)};
    } else
        throw ConfigError(path + ".kind", "unknown drift kind '" + kind + "'");
    try {
        validate(spec);
    } catch (const PreconditionError& e) {
        throw ConfigError(path, e.what());
    }
    return spec;
}

/// A double, or null when it is not finite.
inline nlohmann::json finite_or_null(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

inline nlohmann::json magnitude_json(const Magnitude& m) {
    if (auto v = m.value()) return *v;
    return nullptr;
}

inline void to_json(nlohmann::json& j, const ParameterLedger& led) {
    j = nlohmann::json::object();
    j["p"] = led.p;
    j["theta"] = led.theta;
    j["noise_strength"] = led.noise_strength;
    j["kappa"] = led.kappa;
    j["exponent"] = led.exponent;
    j["K_cal_exponent"] = led.K_cal_exponent;
    j["series_value"] = led.series_value;
    j["gamma_exponent"] = led.gamma_exponent;
    auto put = [&j](const char* name, const Magnitude& m) {
        j[name] = magnitude_json(m);
        j[std::string("log2_") + name] = m.log2;
    };
    put("K_cal", led.K_cal);
    put("gamma", led.gamma);
    put("nu", led.nu);
    put("k", led.k);
    put("d", led.d);
    put("eps_small", led.eps_small);
    put("v", led.v);
    put("T", led.T);
    put("L", led.L);
    put("eps0", led.eps0);
    j["eps0_log2_resolution"] = led.eps0_log2_resolution;
    j["certificates"] = {{"i", led.certificates.cert_i},
                         {"ii", led.certificates.cert_ii},
                         {"iii", led.certificates.cert_iii},
                         {"v", led.certificates.cert_v},
                         {"vi", led.certificates.cert_vi}};
}

} // namespace wavefront::model
