#ifndef LEGTK_FIGURES_HPP
#define LEGTK_FIGURES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "legtk/convex_kit.hpp"
#include "legtk/front_export.hpp"
#include "legtk/verify.hpp"

namespace legtk {

inline std::vector<std::string> figure_ids(bool experimental = false)
{
    std::vector<std::string> ids{"fig1", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"};
    if (experimental)
        ids.insert(ids.begin() + 1, {"fig2", "fig3"});
    return ids;
}

struct FigureOutput
{
    std::string id;
    std::string svg;
    nlohmann::json features = nlohmann::json::object();
    Report report; // feature checks; empty for experimental figures

    bool passed() const
    {
        return std::all_of(report.checks.begin(), report.checks.end(), [](const auto& c) { return c.passed; });
    }
};

namespace detail {

using Pt2 = std::array<double, 2>;

inline Scene curve_scene(std::string title, const std::vector<std::vector<Pt2>>& curves)
{
    Scene s;
    s.title = std::move(title);
    int b = 0;
    for (const auto& c : curves)
        s.lines.push_back({b++, c});
    return s;
}

inline std::vector<Pt2> tabulate(const std::vector<double>& xs, const std::function<double(double)>& f)
{
    std::vector<Pt2> out;
    for (double x : xs)
        out.push_back({x, f(x)});
    return out;
}

inline std::vector<Pt2> finite_points(const GridFunction& g)
{
    std::vector<Pt2> out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.finite[i] && std::isfinite(g.values[i]))
            out.push_back({g.x(i), g.values[i]});
    return out;
}

inline Scene front_scene(const LegendrianCloud& c, std::string title)
{
    Scene s = front_scenes(c).front();
    s.title = std::move(title);
    return s;
}

inline nlohmann::json pt_json(const Pt2& p) { return {{"q", p[0]}, {"u", p[1]}}; }

/// Double points of a 1-D front, merged within `radius`.
inline std::vector<Pt2> front_crossings(const LegendrianCloud& c, double radius = 1e-3)
{
    struct Seg
    {
        Pt2 a, b;
        int branch;
        std::size_t pos;
    };
    std::vector<Seg> segs;
    for (const auto& idx : c.branches())
        for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
            const auto &p = c.points[idx[j]], &r = c.points[idx[j + 1]];
            segs.push_back({{p.q[0], p.u}, {r.q[0], r.u}, c.branch[idx[j]], j});
        }
    // branches meet at folds; touching there is not a crossing
    std::vector<Pt2> folds, out;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c.fold[i])
            folds.push_back({c.points[i].q[0], c.points[i].u});
    for (std::size_t i = 0; i < segs.size(); ++i)
        for (std::size_t j = i + 1; j < segs.size(); ++j) {
            const Seg &s = segs[i], &t = segs[j];
            if (s.branch == t.branch && (s.pos + 1 == t.pos || t.pos + 1 == s.pos))
                continue;
            double dx = s.b[0] - s.a[0], dy = s.b[1] - s.a[1];
            double ex = t.b[0] - t.a[0], ey = t.b[1] - t.a[1];
            double den = dx * ey - dy * ex;
            if (std::abs(den) < 1e-300)
                continue;
            double fx = t.a[0] - s.a[0], fy = t.a[1] - s.a[1];
            double a = (fx * ey - fy * ex) / den, b = (fx * dy - fy * dx) / den;
            constexpr double eps = 1e-12;
            if (a < -eps || a > 1 + eps || b < -eps || b > 1 + eps)
                continue;
            Pt2 x{s.a[0] + a * dx, s.a[1] + a * dy};
            auto near = [&](const Pt2& y) { return std::hypot(x[0] - y[0], x[1] - y[1]) < radius; };
            if (std::none_of(out.begin(), out.end(), near) && std::none_of(folds.begin(), folds.end(), near))
                out.push_back(x);
        }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<FrontFeature> features_of(const LegendrianCloud& c, FrontFeature::Kind kind)
{
    std::vector<FrontFeature> out;
    for (const auto& f : detect_cusps(wave_front(c)))
        if (f.kind == kind)
            out.push_back(f);
    return out;
}

inline nlohmann::json features_json(const std::vector<FrontFeature>& fs)
{
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : fs)
        a.push_back({{"q", f.q}, {"u", f.u}});
    return a;
}

inline Measurement count_is(std::size_t got, std::size_t want, const std::string& what)
{
    return measured(std::abs(static_cast<double>(got) - static_cast<double>(want)),
                    std::to_string(got) + " " + what + ", expected " + std::to_string(want));
}

inline LegendrianCloud one_graph(const std::vector<double>& xs, const std::function<double(double)>& f,
                                 const std::function<double(double)>& df)
{
    LegendrianCloud c;
    for (double x : xs)
        c.add({f(x), {x}, {df(x)}}, 0);
    return c;
}

inline double sup_gap(const GridFunction& g, const std::function<double(double)>& ref, double lo, double hi)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double x = g.x(i);
        if (x < lo - 1e-12 || x > hi + 1e-12)
            continue;
        if (!g.finite[i] || !std::isfinite(g.values[i]))
            return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(g.values[i] - ref(x)));
    }
    return worst;
}

// Each builder fills svg scenes, features and check bodies. The bodies only
// read values computed up front, so run_checks stays cheap.
struct FigureBuild
{
    std::vector<Scene> scenes;
    nlohmann::json features = nlohmann::json::object();
    std::vector<CheckSpec> checks;
};

inline FigureBuild build_fig1(const Scenario& sc)
{
    const auto& p = sc.param("fig1");
    auto qs = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    auto c = sample(transform_T(poly1d({0, 0, -3, 0, 1})), qs, p.at("box").get<double>(), p.at("step").get<double>());
    auto cusps = features_of(c, FrontFeature::Kind::Cusp);
    auto cross = front_crossings(c);
    FigureBuild b;
    b.scenes.push_back(front_scene(c, "front of T(j1 f), f = q^4 - 3q^2"));
    b.features = {{"fronts", 1},
                  {"branches", c.branch_count()},
                  {"cusp_count", cusps.size()},
                  {"cusps", features_json(cusps)},
                  {"self_intersections", cross.size()},
                  {"crossings", nlohmann::json::array()}};
    for (const auto& x : cross)
        b.features["crossings"].push_back(pt_json(x));
    b.checks.push_back({"fig1.cusp_count", [n = cusps.size()] { return count_is(n, 2, "cusps"); }});
    b.checks.push_back({"fig1.cusp_positions", [cusps] {
                            if (cusps.size() != 2)
                                return measured(std::numeric_limits<double>::infinity(), "needs two cusps");
                            const double r = 2 * std::sqrt(2.0);
                            double worst = 0.0;
                            for (const auto& f : cusps)
                                worst = std::max(worst, std::hypot(f.u + 0.75, std::abs(f.q) - r));
                            return measured(worst, "cusps against (-3/4, +-2 sqrt 2)");
                        }});
    b.checks.push_back(
        {"fig1.self_intersections", [n = cross.size()] { return count_is(n, 1, "self-intersection regions"); }});
    return b;
}

inline FigureBuild build_fig2(const Scenario& sc)
{
    const auto& p = sc.param("fig2");
    const double box = p.at("box").get<double>(), step = p.at("step").get<double>();
    FigureBuild b;
    // swallowtail w^4/4 + q1 w^2/2 + q2 w, sliced along q1
    nlohmann::json slices = nlohmann::json::array();
    auto q2 = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    for (double q1 : p.at("slices").get<std::vector<double>>()) {
        GFExpr F = polynomial(1, 1, {{0.25, {0, 4}}, {q1 / 2, {0, 2}}, {1.0, {1, 1}}});
        auto c = sample(F, q2, box, step);
        slices.push_back({{"q1", q1},
                          {"cusp_count", features_of(c, FrontFeature::Kind::Cusp).size()},
                          {"self_intersections", front_crossings(c).size()}});
        b.scenes.push_back(front_scene(c, "swallowtail slice q1 = " + fmt(q1)));
    }
    b.features = {{"slices", slices}};
    return b;
}

inline FigureBuild build_fig3(const Scenario& sc)
{
    const auto& p = sc.param("fig3");
    // trivial knot front: flying saucer w^3/3 - (1 - q^2) w
    GFExpr knot = polynomial(1, 1, {{1.0 / 3, {0, 3}}, {-1.0, {0, 1}}, {1.0, {2, 1}}});
    GFExpr P = product_gf(knot, knot);
    auto axis = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    auto c = sample_legendrian_grid(P, {axis, axis}, Box::cube(2, p.at("box").get<double>()),
                                    p.at("step").get<double>());
    FigureBuild b;
    b.scenes = front_scenes(c);
    b.features = {{"branches", c.branch_count()}, {"points", c.size()}, {"warnings", c.warnings}};
    return b;
}

inline FigureBuild build_fig4(const Scenario& sc)
{
    const auto& p = sc.param("fig4");
    auto qs = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    const double box = p.at("box").get<double>(), step = p.at("step").get<double>();
    const auto offsets = p.at("offsets").get<std::vector<double>>();
    FigureBuild b;
    nlohmann::json regimes = nlohmann::json::array();
    std::vector<LegendrianCloud> clouds;
    for (double a : offsets) {
        // cusp q w - w^3 opening to q >= 0 plus its mirror opening to q <= a
        GFExpr F = sum_gf(polynomial(1, 1, {{1.0, {1, 1}}, {-1.0, {0, 3}}}),
                          polynomial(1, 1, {{a, {0, 1}}, {-1.0, {1, 1}}, {-1.0, {0, 3}}}));
        auto c = sample(F, qs, box, step);
        bool suspect = std::any_of(c.warnings.begin(), c.warnings.end(),
                                   [](const std::string& w) { return w.find("immersion") != std::string::npos; });
        regimes.push_back({{"offset", a},
                           {"points", c.size()},
                           {"branches", c.branch_count()},
                           {"cusp_count", features_of(c, FrontFeature::Kind::Cusp).size()},
                           {"immersion_suspect", suspect}});
        if (!c.empty())
            b.scenes.push_back(front_scene(c, "sum of opposite cusps, offset " + fmt(a)));
        clouds.push_back(std::move(c));
    }
    b.features = {{"regimes", regimes}};
    b.checks.push_back({"fig4.regimes", [regimes] {
                            // open overlap, touching cusps, disjoint supports
                            const auto& r = regimes;
                            bool ok = r.size() == 3 && r[0]["cusp_count"] == 4 && r[1]["immersion_suspect"] == true &&
                                      r[2]["points"] == 0;
                            return measured(ok ? 0.0 : 1.0, r.dump());
                        }});
    return b;
}

inline FigureBuild build_fig5(const Scenario& sc)
{
    const auto& p = sc.param("fig5");
    GFExpr F = polynomial(2, 2, {{1.0, {1, 0, 1, 0}}, {-1.0, {0, 0, 3, 0}}, {1.0, {0, 1, 0, 1}}, {-1.0, {0, 0, 0, 3}}});
    auto axis = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    auto c = sample_legendrian_grid(F, {axis, axis}, Box::cube(2, p.at("box").get<double>()),
                                    p.at("step").get<double>());
    FigureBuild b;
    b.scenes = front_scenes(c);
    b.features = {{"branches", c.branch_count()}, {"points", c.size()}, {"views", kFrontViews.size()}};
    b.checks.push_back({"fig5.branches", [n = c.branch_count()] { return count_is(n, 4, "sheets"); }});
    return b;
}

inline FigureBuild build_fig6(const Scenario& sc)
{
    const auto& p = sc.param("fig6");
    auto qs = uniform_grid(p.at("lo").get<double>(), p.at("hi").get<double>(), p.at("grid_step").get<double>());
    auto f = [](double x) { return x * x + 3 * x; };
    auto conj = [](double q) { return (q - 3) * (q - 3) / 4; };
    auto s = selector_values(transform_T(poly1d({0, 3, 1})), qs, p.at("box").get<double>(), p.at("step").get<double>());
    FigureBuild b;
    auto xs = uniform_grid(-6, 3, 0.05);
    b.scenes.push_back(curve_scene("f = q^2 + 3q", {tabulate(xs, f)}));
    std::vector<std::vector<Pt2>> family;
    for (double q : p.at("family").get<std::vector<double>>())
        family.push_back(tabulate(uniform_grid(-6, 3, 0.05), [q, f](double v) { return q * v - f(v); }));
    b.scenes.push_back(curve_scene("v -> q v - f(v)", family));
    std::vector<Pt2> sel;
    for (std::size_t i = 0; i < qs.size(); ++i)
        sel.push_back({qs[i], s[i]});
    b.scenes.push_back(curve_scene("selector of F_T", {sel, tabulate(qs, conj)}));
    std::vector<double> ref;
    for (double q : qs)
        ref.push_back(conj(q));
    auto m = curve_gap(s, ref, qs);
    b.features = {{"selector_vs_conjugate", m.defect}};
    b.checks.push_back({"fig6.selector_is_conjugate", [m] { return m; }});
    return b;
}

inline FigureBuild build_fig7(const Scenario& sc)
{
    const auto& p = sc.param("fig7");
    const double h = p.at("grid_step").get<double>(), R = p.at("range").get<double>();
    auto f = [](double x) { return x <= -1 ? (x + 1) * (x + 1) : x >= 1 ? (x - 1) * (x - 1) : 0.0; };
    auto df = [](double x) { return x <= -1 ? 2 * (x + 1) : x >= 1 ? 2 * (x - 1) : 0.0; };
    auto conj = [](double q) { return q * q / 4 + std::abs(q); };
    // half-step offset keeps the samples off the corners of f'
    auto xs = uniform_grid(-R + h / 2, R - h / 2, h);
    auto front = geometric_T(one_graph(xs, f, df));
    const double span = R - 1; // f' reaches +-2(R - 1)
    auto fs = GridFunction::sample(f, -R, R, h);
    auto star = lf_transform(fs, UniformGrid::span(-2 * span, 2 * span, static_cast<std::size_t>(4 * span / h) + 1));
    auto back = lf_transform(star, UniformGrid::span(-R / 2, R / 2, static_cast<std::size_t>(R / h) + 1));

    auto vertices = features_of(front, FrontFeature::Kind::Vertex);
    auto cusps = features_of(front, FrontFeature::Kind::Cusp);
    double arcs = 0.0;
    for (const auto& pt : front.points)
        arcs = std::max(arcs, std::abs(pt.u - conj(pt.q[0])));
    const double lf_gap = sup_gap(star, conj, -2 * span, 2 * span);
    const double round_trip = sup_gap(back, f, -R / 2, R / 2);

    FigureBuild b;
    b.scenes.push_back(curve_scene("f", {tabulate(xs, f)}));
    b.scenes.push_back(front_scene(front, "front of T(j1 f)"));
    b.scenes.push_back(curve_scene("f* and f**", {finite_points(star), finite_points(back)}));
    b.features = {{"vertices", features_json(vertices)},
                  {"cusp_count", cusps.size()},
                  {"parabolic_arcs_residual", arcs},
                  {"lf_vs_closed_form", lf_gap},
                  {"round_trip", round_trip}};
    b.checks.push_back({"fig7.corner_at_zero", [vertices, cusps] {
                            if (vertices.size() != 1 || !cusps.empty())
                                return measured(std::numeric_limits<double>::infinity(),
                                                std::to_string(vertices.size()) + " vertices, " +
                                                    std::to_string(cusps.size()) + " cusps");
                            return measured(std::hypot(vertices[0].q, vertices[0].u), "one vertex, no cusp");
                        }});
    b.checks.push_back({"fig7.parabolic_arcs", [arcs] { return measured(arcs, "front vs q^2/4 + |q|"); }});
    b.checks.push_back({"fig7.conjugate", [lf_gap] { return measured(lf_gap, "f* vs q^2/4 + |q|"); }});
    b.checks.push_back({"fig7.round_trip", [round_trip] { return measured(round_trip, "f** vs f"); }});
    return b;
}

inline double quartic_hull(double q)
{
    const double c = std::sqrt(1.5);
    return std::abs(q) <= c ? -2.25 : q * q * q * q - 3 * q * q;
}

inline FigureBuild build_fig8(const Scenario& sc)
{
    const auto& p = sc.param("fig8");
    const double box = p.at("box").get<double>(), step = p.at("step").get<double>();
    const double h = p.at("grid_step").get<double>(), R = p.at("range").get<double>();
    GFExpr f = poly1d({0, 0, -3, 0, 1});
    auto fn = [](double x) { return x * x * x * x - 3 * x * x; };
    auto qs = uniform_grid(-R, R, h);
    auto graph = graph_of(f, qs);
    auto t = sample(transform_T(f), uniform_grid(-5, 5, h), box, step);
    auto tt = sample(transform_T(transform_T(f)), qs, box, step);
    auto fs = GridFunction::sample(fn, -R, R, p.at("lf_step").get<double>());
    auto star = lf_transform(fs);
    auto hull = biconjugate(fs);

    const double tt_gap = distance(tt, graph).value;
    const double hull_gap = sup_gap(hull, quartic_hull, -R, R);
    FigureBuild b;
    b.scenes.push_back(front_scene(graph, "f"));
    b.scenes.push_back(front_scene(t, "T(j1 f)"));
    b.scenes.push_back(front_scene(tt, "T T(j1 f)"));
    b.scenes.push_back(curve_scene("f*", {finite_points(star)}));
    b.scenes.push_back(curve_scene("f**", {finite_points(hull)}));
    b.features = {{"TT_vs_graph", tt_gap}, {"biconjugate_vs_hull", hull_gap}};
    b.checks.push_back({"fig8.TT_returns_graph", [tt_gap] { return measured(tt_gap, "Hausdorff to j1 f"); }});
    b.checks.push_back({"fig8.biconjugate_is_hull", [hull_gap] { return measured(hull_gap, "sup against the hull"); }});
    return b;
}

inline FigureBuild build_fig9(const Scenario& sc)
{
    const auto& p = sc.param("fig9");
    const double R = p.at("range").get<double>();
    auto fn = [](double x) { return x * x * x * x - 3 * x * x; };
    auto qs = uniform_grid(-R, R, p.at("grid_step").get<double>());
    auto s = selector_values(transform_T(transform_T(poly1d({0, 0, -3, 0, 1}))), qs, p.at("box").get<double>(),
                             p.at("step").get<double>());
    auto fs = GridFunction::sample(fn, -2.0, 2.0, p.at("lf_step").get<double>());
    auto hull = biconjugate(fs);
    std::vector<double> fv, hv;
    for (double q : qs) {
        fv.push_back(fn(q));
        hv.push_back(hull(q));
    }
    auto sel = curve_gap(s, fv, qs);
    auto hgap = sup_gap(hull, quartic_hull, -R, R);
    const std::size_t mid = qs.size() / 2;
    const double sep = std::abs(s[mid] - hv[mid]);

    std::vector<Pt2> sp, hp;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        sp.push_back({qs[i], s[i]});
        hp.push_back({qs[i], hv[i]});
    }
    FigureBuild b;
    b.scenes.push_back(curve_scene("s(F_TT) and f**", {sp, hp}));
    b.features = {{"selector_vs_f", sel.defect}, {"biconjugate_vs_hull", hgap}, {"gap_at_zero", sep}};
    b.checks.push_back({"fig9.selector_is_f", [sel] { return sel; }});
    b.checks.push_back({"fig9.biconjugate_is_hull", [hgap] { return measured(hgap, "sup against the hull"); }});
    b.checks.push_back({"fig9.gap_at_zero", [sep] {
                            return measured(sep, "selector minus biconjugate at q = 0", Compare::AtLeast);
                        }});
    return b;
}

} // namespace detail

/// Feature-based reproduction of one figure; tolerances come from `sc`.
inline FigureOutput reproduce_figure(const std::string& id, const Scenario& sc, bool experimental = false,
                                     unsigned threads = 0)
{
    using namespace detail;
    FigureBuild b;
    if (id == "fig1")
        b = build_fig1(sc);
    else if (id == "fig4")
        b = build_fig4(sc);
    else if (id == "fig5")
        b = build_fig5(sc);
    else if (id == "fig6")
        b = build_fig6(sc);
    else if (id == "fig7")
        b = build_fig7(sc);
    else if (id == "fig8")
        b = build_fig8(sc);
    else if (id == "fig9")
        b = build_fig9(sc);
    else if ((id == "fig2" || id == "fig3") && !experimental)
        throw Error(ErrorCode::UnsupportedFormat, id + " is experimental; pass --experimental");
    else if (id == "fig2")
        b = build_fig2(sc);
    else if (id == "fig3")
        b = build_fig3(sc);
    else
        throw Error(ErrorCode::Parse, "unknown figure '" + id + "'");

    FigureOutput out;
    out.id = id;
    out.svg = render_svg(b.scenes);
    out.features = std::move(b.features);
    out.report = run_checks(id, sc, b.checks, threads);
    return out;
}

inline FigureOutput reproduce_figure(const std::string& id, const std::filesystem::path& scenario_dir,
                                     bool experimental = false, unsigned threads = 0)
{
    return reproduce_figure(id, load_scenario(scenario_dir / "figures.json"), experimental, threads);
}

inline nlohmann::json to_json(const FigureOutput& f)
{
    return {{"id", f.id}, {"passed", f.passed()}, {"features", f.features}, {"checks", to_json(f.report)["checks"]}};
}

/// Writes <dir>/<id>.svg and <dir>/<id>.json.
inline void write_figure(const FigureOutput& f, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto put = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream o(p);
        if (!o)
            throw Error(ErrorCode::Io, "cannot write " + p.string());
        o << text;
    };
    put(dir / (f.id + ".svg"), f.svg);
    put(dir / (f.id + ".json"), to_json(f).dump(2) + "\n");
}

} // namespace legtk

#endif // LEGTK_FIGURES_HPP
