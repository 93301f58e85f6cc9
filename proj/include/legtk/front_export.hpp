#ifndef LEGTK_FRONT_EXPORT_HPP
#define LEGTK_FRONT_EXPORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "legtk/legendrian_cloud.hpp"

namespace legtk {

enum class ExportFormat
{
    Csv,
    Svg,
    Json
};

inline ExportFormat parse_export_format(const std::string& s)
{
    if (s == "csv")
        return ExportFormat::Csv;
    if (s == "svg")
        return ExportFormat::Svg;
    if (s == "json")
        return ExportFormat::Json;
    throw Error(ErrorCode::UnsupportedFormat, "unknown export format '" + s + "'");
}

/// Fixed viewing directions for 2-D fronts: azimuth and elevation in degrees.
inline constexpr std::array<std::array<double, 2>, 3> kFrontViews{{{30.0, 25.0}, {120.0, 25.0}, {210.0, 50.0}}};

namespace detail {

inline std::string fmt(double x)
{
    std::ostringstream s;
    s << std::setprecision(17) << x;
    return s.str();
}

struct Polyline2
{
    int branch = 0;
    std::vector<std::array<double, 2>> pts;
};

// Drawing-space coordinates: x to the right, y up.
struct Scene
{
    std::vector<Polyline2> lines;
    std::vector<std::array<double, 2>> cusps;
    std::string title;
};

inline std::vector<Scene> front_scenes(const LegendrianCloud& c)
{
    std::vector<Scene> out;
    if (c.base_dim == 1) {
        Scene s;
        s.title = "front (q, u)";
        auto br = c.branches();
        for (const auto& idx : br) {
            Polyline2 line;
            line.branch = c.branch[idx.front()];
            for (std::size_t i : idx)
                line.pts.push_back({c.points[i].q[0], c.points[i].u});
            if (!c.polyline)
                std::sort(line.pts.begin(), line.pts.end());
            s.lines.push_back(std::move(line));
        }
        if (c.polyline)
            for (const FrontFeature& f : detect_cusps(wave_front(c)))
                if (f.kind == FrontFeature::Kind::Cusp)
                    s.cusps.push_back({f.q, f.u});
        out.push_back(std::move(s));
        return out;
    }

    // n = 2: lattice rows and columns of each branch become polylines, seen
    // from each fixed direction by orthographic projection.
    constexpr double deg = 3.14159265358979323846 / 180.0;
    for (const auto& view : kFrontViews) {
        const double a = view[0] * deg, e = view[1] * deg;
        auto project = [&](const Point1Jet& p) -> std::array<double, 2> {
            double x = std::cos(a) * p.q[0] - std::sin(a) * p.q[1];
            double depth = std::sin(a) * p.q[0] + std::cos(a) * p.q[1];
            return {x, p.u * std::cos(e) + depth * std::sin(e)};
        };
        Scene s;
        s.title = "front, azimuth " + fmt(view[0]) + ", elevation " + fmt(view[1]);
        for (std::size_t axis = 0; axis < 2; ++axis) {
            // key: (branch, fixed index on the other axis) -> (index along axis, point)
            std::map<std::pair<int, int>, std::map<int, std::size_t>> rows;
            for (std::size_t i = 0; i < c.size(); ++i) {
                if (c.lattice.size() != c.size())
                    break;
                const auto& node = c.lattice[i];
                rows[{c.branch[i], node[1 - axis]}][node[axis]] = i;
            }
            for (const auto& [key, row] : rows) {
                Polyline2 line;
                line.branch = key.first;
                int prev = std::numeric_limits<int>::min();
                for (const auto& [j, i] : row) {
                    if (j != prev + 1 && line.pts.size() > 1)
                        s.lines.push_back(line);
                    if (j != prev + 1)
                        line.pts.clear();
                    line.pts.push_back(project(c.points[i]));
                    prev = j;
                }
                if (line.pts.size() > 1)
                    s.lines.push_back(std::move(line));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::string render_svg(const std::vector<Scene>& scenes)
{
    constexpr double W = 480, H = 360, pad = 24;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W * static_cast<double>(scenes.size())
      << "\" height=\"" << H << "\">\n";
    for (std::size_t k = 0; k < scenes.size(); ++k) {
        const Scene& s = scenes[k];
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        auto grow = [&](const std::array<double, 2>& p) {
            x0 = std::min(x0, p[0]);
            x1 = std::max(x1, p[0]);
            y0 = std::min(y0, p[1]);
            y1 = std::max(y1, p[1]);
        };
        for (const auto& l : s.lines)
            for (const auto& p : l.pts)
                grow(p);
        for (const auto& p : s.cusps)
            grow(p);
        if (!(x1 > x0)) {
            x0 -= 1;
            x1 += 1;
        }
        if (!(y1 > y0)) {
            y0 -= 1;
            y1 += 1;
        }
        const double sx = (W - 2 * pad) / (x1 - x0), sy = (H - 2 * pad) / (y1 - y0);
        auto X = [&](double x) { return W * static_cast<double>(k) + pad + (x - x0) * sx; };
        auto Y = [&](double y) { return H - pad - (y - y0) * sy; };
        o << "<g>\n<title>" << s.title << "</title>\n";
        for (const auto& l : s.lines) {
            o << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\""
              << palette[static_cast<std::size_t>(std::abs(l.branch)) % std::size(palette)] << "\" data-branch=\""
              << l.branch << "\" points=\"";
            for (const auto& p : l.pts)
                o << std::setprecision(6) << X(p[0]) << ',' << Y(p[1]) << ' ';
            o << "\"/>\n";
        }
        for (const auto& p : s.cusps)
            o << "<circle class=\"cusp\" r=\"4\" fill=\"none\" stroke=\"black\" cx=\"" << X(p[0]) << "\" cy=\""
              << Y(p[1]) << "\"/>\n";
        o << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

} // namespace detail

inline void export_csv(std::ostream& out, const LegendrianCloud& c)
{
    const std::size_t n = c.base_dim;
    out << 'u';
    for (const char* axis : {"q", "p"})
        for (std::size_t i = 0; i < n; ++i)
            out << ',' << axis << (n == 1 ? std::string() : std::to_string(i + 1));
    out << ",branch\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Point1Jet& p = c.points[i];
        out << detail::fmt(p.u);
        for (double x : p.q)
            out << ',' << detail::fmt(x);
        for (double x : p.p)
            out << ',' << detail::fmt(x);
        out << ',' << c.branch[i] << '\n';
    }
}

inline nlohmann::json cloud_to_json(const LegendrianCloud& c)
{
    nlohmann::json j;
    j["base_dim"] = c.base_dim;
    j["branch_count"] = c.branch_count();
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < c.size(); ++i)
        pts.push_back({{"u", c.points[i].u},
                       {"q", c.points[i].q},
                       {"p", c.points[i].p},
                       {"branch", c.branch[i]},
                       {"fold", static_cast<bool>(c.fold[i])}});
    j["points"] = std::move(pts);
    if (c.base_dim == 1 && c.polyline) {
        nlohmann::json cusps = nlohmann::json::array();
        for (const FrontFeature& f : detect_cusps(wave_front(c)))
            cusps.push_back({{"kind", to_string(f.kind)}, {"u", f.u}, {"q", f.q}, {"branch", f.branch}});
        j["features"] = std::move(cusps);
    }
    j["warnings"] = c.warnings;
    return j;
}

/// SVG for n = 1 (one panel) and n = 2 (three fixed-angle panels).
inline std::string export_svg(const LegendrianCloud& c)
{
    if (c.base_dim != 1 && c.base_dim != 2)
        throw Error(ErrorCode::UnsupportedFormat, "svg export needs n = 1 or n = 2, got n = " +
                                                      std::to_string(c.base_dim));
    if (c.base_dim == 2 && c.lattice.size() != c.size())
        throw Error(ErrorCode::UnsupportedFormat, "svg export of a 2-D front needs lattice samples");
    return detail::render_svg(detail::front_scenes(c));
}

inline std::string export_cloud(const LegendrianCloud& c, ExportFormat fmt)
{
    std::ostringstream o;
    switch (fmt) {
    case ExportFormat::Csv: export_csv(o, c); break;
    case ExportFormat::Svg: o << export_svg(c); break;
    case ExportFormat::Json: o << cloud_to_json(c).dump(2) << '\n'; break;
    }
    return o.str();
}

inline void export_cloud_file(const LegendrianCloud& c, ExportFormat fmt, const std::string& path)
{
    std::string text = export_cloud(c, fmt);
    std::ofstream f(path);
    if (!f)
        throw Error(ErrorCode::Io, "cannot write " + path);
    f << text;
}

} // namespace legtk

#endif // LEGTK_FRONT_EXPORT_HPP
