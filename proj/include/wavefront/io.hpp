#pragma once

// CSV tables, number formatting and the deterministic SVG plots.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "wavefront/errors.hpp"

namespace wavefront::io {

/// Shortest round-trip decimal form; "inf", "-inf", "nan" for non-finite values.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

inline std::string hex64(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << x;
    return os.str();
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("table", "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
    bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }
    std::vector<double> values(const std::string& name) const {
        const auto c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.at(c));
        return out;
    }
};

inline std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
    out += "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt(r[i]);
        out += "\n";
    }
    return out;
}

inline double parse_number(const std::string& s) {
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("table", "not a number: '" + s + "'");
    return v;
}

inline Table parse_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    if (!std::getline(in, line)) return t;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != t.header.size()) throw ConfigError("table", "row width differs from header");
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_number(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("path", "cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

enum class PlotKind { front_trajectory, loglog_scaling, profile_snapshot };

inline PlotKind plot_kind(const std::string& name) {
    if (name == "front_trajectory") return PlotKind::front_trajectory;
    if (name == "loglog_scaling") return PlotKind::loglog_scaling;
    if (name == "profile_snapshot") return PlotKind::profile_snapshot;
    throw ConfigError("kind", "unknown plot kind '" + name + "'");
}

namespace detail {

inline std::string num(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << x;
    return os.str();
}

struct Frame {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    static constexpr double W = 640, H = 480, L = 70, R = 20, T = 30, B = 50;

    double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
    double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }

    static Frame fit(const std::vector<double>& xs, const std::vector<double>& ys) {
        Frame f;
        auto range = [](const std::vector<double>& v, double& lo, double& hi) {
            lo = INFINITY;
            hi = -INFINITY;
            for (double a : v)
                if (std::isfinite(a)) {
                    lo = std::min(lo, a);
                    hi = std::max(hi, a);
                }
            if (!std::isfinite(lo)) {
                lo = 0;
                hi = 1;
            }
            if (hi - lo < 1e-12 * std::max(1.0, std::abs(lo))) {
                lo -= 0.5;
                hi += 0.5;
            }
            const double pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        };
        range(xs, f.x0, f.x1);
        range(ys, f.y0, f.y1);
        return f;
    }
};

inline std::string header(const std::string& title, const Frame& f, const std::string& xlabel,
                          const std::string& ylabel) {
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
    s += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
    const double l = Frame::L, b = Frame::H - Frame::B, r = Frame::W - Frame::R, t = Frame::T;
    s += "<line x1=\"" + num(l) + "\" y1=\"" + num(b) + "\" x2=\"" + num(r) + "\" y2=\"" + num(b) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(l) + "\" y1=\"" + num(b) + "\" x2=\"" + num(l) + "\" y2=\"" + num(t) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        std::ostringstream xs, ys;
        xs << std::setprecision(4) << xv;
        ys << std::setprecision(4) << yv;
        s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(b + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + xs.str() + "</text>\n";
        s += "<text x=\"" + num(l - 6) + "\" y=\"" + num(f.py(yv) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + ys.str() + "</text>\n";
    }
    s += "<text x=\"" + num((l + r) / 2) + "\" y=\"" + num(Frame::H - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xlabel + "</text>\n";
    s += "<text x=\"16\" y=\"" + num((t + b) / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 " + num((t + b) / 2) + ")\">" + ylabel + "</text>\n";
    return s;
}

inline std::string polyline(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::string& colour, const std::string& extra = "") {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
        pts += (pts.empty() ? "" : " ") + num(f.px(xs[i])) + "," + num(f.py(ys[i]));
    }
    if (pts.empty()) return "";
    return "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"" + extra + " points=\"" + pts + "\"/>\n";
}

} // namespace detail

/// SVG for a table. `p` sets the reference slope -2(1-p)/(1+p) of the log-log plot.
inline std::string emit_plot(const Table& t, PlotKind kind, double p = 0.5) {
    using detail::Frame;
    std::string body;
    Frame f;
    std::string title, xl, yl;
    if (kind == PlotKind::front_trajectory) {
        const auto xs = t.values("time"), ys = t.values("front_abs");
        f = Frame::fit(xs, ys);
        title = "front position";
        xl = "t";
        yl = "R(u_t)";
        body = detail::polyline(f, xs, ys, "steelblue");
    } else if (kind == PlotKind::profile_snapshot) {
        const auto xs = t.values("x"), ys = t.values("u");
        f = Frame::fit(xs, ys);
        title = "profile";
        xl = "x";
        yl = "u";
        body = detail::polyline(f, xs, ys, "steelblue");
    } else {
        const auto eps = t.values("epsilon"), v = t.values("V");
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < eps.size(); ++i)
            if (eps[i] > 0 && v[i] > 0) {
                lx.push_back(std::log10(eps[i]));
                ly.push_back(std::log10(v[i]));
            }
        std::vector<double> all_y = ly;
        if (t.has("ci_low") && t.has("ci_high")) {
            const auto lo = t.values("ci_low"), hi = t.values("ci_high");
            for (std::size_t i = 0; i < eps.size(); ++i)
                if (eps[i] > 0 && lo[i] > 0 && hi[i] > 0) {
                    all_y.push_back(std::log10(lo[i]));
                    all_y.push_back(std::log10(hi[i]));
                }
        }
        f = Frame::fit(lx, all_y);
        title = "log10 V against log10 epsilon";
        xl = "log10 epsilon";
        yl = "log10 V";
        if (t.has("ci_low") && t.has("ci_high")) {
            const auto lo = t.values("ci_low"), hi = t.values("ci_high");
            for (std::size_t i = 0; i < eps.size(); ++i)
                if (eps[i] > 0 && lo[i] > 0 && hi[i] > 0) {
                    const double x = f.px(std::log10(eps[i]));
                    body += "<line x1=\"" + detail::num(x) + "\" y1=\"" + detail::num(f.py(std::log10(lo[i]))) + "\" x2=\"" +
                            detail::num(x) + "\" y2=\"" + detail::num(f.py(std::log10(hi[i]))) + "\" stroke=\"gray\"/>\n";
                }
        }
        for (std::size_t i = 0; i < lx.size(); ++i)
            body += "<circle cx=\"" + detail::num(f.px(lx[i])) + "\" cy=\"" + detail::num(f.py(ly[i])) +
                    "\" r=\"4\" fill=\"steelblue\"/>\n";
        if (lx.size() >= 2) {
            double mx = 0, my = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) {
                mx += lx[i];
                my += ly[i];
            }
            mx /= static_cast<double>(lx.size());
            my /= static_cast<double>(lx.size());
            double sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) {
                sxx += (lx[i] - mx) * (lx[i] - mx);
                sxy += (lx[i] - mx) * (ly[i] - my);
            }
            const double slope = sxx > 0 ? sxy / sxx : 0.0;
            const double ref = -2.0 * (1.0 - p) / (1.0 + p);
            const double a = f.x0, b = f.x1;
            body += detail::polyline(f, {a, b}, {my + slope * (a - mx), my + slope * (b - mx)}, "firebrick");
            body += detail::polyline(f, {a, b}, {my + ref * (a - mx), my + ref * (b - mx)}, "black",
                                     " stroke-dasharray=\"6,4\"");
            body += "<text x=\"" + detail::num(Frame::L + 10) + "\" y=\"" + detail::num(Frame::T + 16) +
                    "\" font-size=\"12\" fill=\"firebrick\">fitted slope " + fmt(slope) + "</text>\n";
            body += "<text x=\"" + detail::num(Frame::L + 10) + "\" y=\"" + detail::num(Frame::T + 32) +
                    "\" font-size=\"12\">reference slope " + fmt(ref) + "</text>\n";
        }
    }
    return detail::header(title, f, xl, yl) + body + "</svg>\n";
}

} // namespace wavefront::io
