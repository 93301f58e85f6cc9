#ifndef LEGTK_VERIFY_HPP
#define LEGTK_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "legtk/convex_kit.hpp"
#include "legtk/gf_ops.hpp"
#include "legtk/legendrian_cloud.hpp"
#include "legtk/minmax.hpp"
#include "legtk/scenario.hpp"

namespace legtk {

inline const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names{"corollary324", "lemma31_crosscheck", "lemma33",
                                                "prop11",       "prop31",             "remark12",
                                                "remark34",     "theorem21",          "theorem327"};
    return names;
}

namespace detail {

inline std::string num(double x)
{
    std::ostringstream s;
    s.precision(6);
    s << x;
    return s.str();
}

inline Measurement measured(double defect, std::string detail, Compare c = Compare::AtMost)
{
    return {defect, std::move(detail), c};
}

inline double step_of(const std::vector<double>& g) { return g.size() > 1 ? g[1] - g[0] : 1.0; }

inline LegendrianCloud sample(const GFExpr& f, const std::vector<double>& grid, double box, double step,
                              bool folds = true)
{
    SampleOptions opt;
    opt.append_folds = folds;
    return sample_legendrian(f, grid, Box::cube(f.fiber_dim(), box), step, opt);
}

inline LegendrianCloud graph_of(const GFExpr& f, const std::vector<double>& grid)
{
    return sample_legendrian(f, grid, Box{}, step_of(grid));
}

inline HausdorffResult distance(const LegendrianCloud& a, const LegendrianCloud& b)
{
    return hausdorff(a, b, a.polyline && b.polyline ? HausdorffMetric::Curve : HausdorffMetric::Point);
}

inline Measurement cloud_gap(const LegendrianCloud& a, const LegendrianCloud& b)
{
    HausdorffResult h = distance(a, b);
    std::string d = num(static_cast<double>(a.size())) + " vs " + num(static_cast<double>(b.size())) + " points";
    if (h.empty)
        d += ", empty side";
    return measured(h.value, d);
}

inline std::vector<double> grid_span(double lo, double hi, double h)
{
    return uniform_grid(std::ceil(lo / h - 1e-9) * h, std::floor(hi / h + 1e-9) * h, h);
}

/// Slopes reached by both clouds, on a grid of step h.
inline std::vector<double> common_p_grid(const LegendrianCloud& a, const LegendrianCloud& b, double h)
{
    auto range = [](const LegendrianCloud& c) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& pt : c.points) {
            lo = std::min(lo, pt.p[0]);
            hi = std::max(hi, pt.p[0]);
        }
        return std::make_pair(lo, hi);
    };
    auto [alo, ahi] = range(a);
    auto [blo, bhi] = range(b);
    double lo = std::max(alo, blo), hi = std::min(ahi, bhi);
    if (!(hi > lo))
        throw Error(ErrorCode::Range, "clouds share no slope range");
    return grid_span(lo, hi, h);
}

inline std::vector<double> selector_values(const GFExpr& f, const Vec& qs, const Box& box, double step,
                                           std::optional<int> index = std::nullopt, bool force_homology = false)
{
    SelectorOptions o;
    o.index = index;
    o.minmax.force_homology = force_homology;
    return selector(f, qs, box, step, o).s_values;
}

inline std::vector<double> selector_values(const GFExpr& f, const Vec& qs, double box, double step,
                                           std::optional<int> index = std::nullopt, bool force_homology = false)
{
    return selector_values(f, qs, Box::cube(f.fiber_dim(), box), step, index, force_homology);
}

inline std::pair<double, std::size_t> max_gap(const std::vector<double>& a, const std::vector<double>& b)
{
    double worst = 0.0;
    std::size_t at = 0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        double d = std::abs(a[i] - b[i]);
        if (!(d <= worst)) {
            worst = d;
            at = i;
        }
    }
    return {worst, at};
}

inline Measurement curve_gap(const std::vector<double>& a, const std::vector<double>& b, const Vec& qs)
{
    auto [gap, at] = max_gap(a, b);
    return measured(gap, "worst at q=" + num(qs[at]) + " over " + std::to_string(qs.size()) + " nodes");
}

inline Polynomial1D random_polynomial(std::mt19937& rng, const nlohmann::json& ranges)
{
    Polynomial1D p;
    for (const auto& r : ranges) {
        std::uniform_real_distribution<double> U(r.at(0).get<double>(), r.at(1).get<double>());
        p.coefficients.push_back(U(rng));
    }
    return p;
}

inline Vec random_vec(std::mt19937& rng, std::size_t n, double r)
{
    std::uniform_real_distribution<double> U(-r, r);
    Vec v(n);
    for (auto& x : v)
        x = U(rng);
    return v;
}

/// Strictly convex quartic a4 w^4 + a3 w^3 + a2 w^2 + a1 w (36 a3^2 < 96 a4 a2).
inline Polynomial1D random_convex_quartic(std::mt19937& rng)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double a4 = 0.1 + 0.9 * U(rng), a2 = 0.5 + 1.5 * U(rng);
    double a3max = std::sqrt(96.0 * a4 * a2) / 6.0;
    double a3 = 0.9 * a3max * (2.0 * U(rng) - 1.0), a1 = 2.0 * U(rng) - 1.0;
    return Polynomial1D{{0.0, a1, a2, a3, a4}};
}

/// Minimum of a strictly convex polynomial by bisection on its derivative.
inline double convex_minimum(const Polynomial1D& p, double lo, double hi)
{
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        double mid = 0.5 * (lo + hi);
        (p.derivative(mid) > 0 ? hi : lo) = mid;
    }
    return p.value(0.5 * (lo + hi));
}

/// Fiber-only polynomial on base dimension 1: sum over fibers of p_i(w_i), scaled by sign.
inline GFExpr separable_fiber(const std::vector<Polynomial1D>& ps, double sign)
{
    std::vector<Monomial> terms;
    const std::size_t k = ps.size();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t d = 0; d < ps[i].coefficients.size(); ++d)
            if (ps[i].coefficients[d] != 0.0 && d > 0) {
                std::vector<int> e(k + 1, 0);
                e[i + 1] = static_cast<int>(d);
                terms.push_back({sign * ps[i].coefficients[d], e});
            }
    return polynomial(1, k, std::move(terms));
}

// ---------------------------------------------------------------------------

inline std::vector<CheckSpec> theorem21_checks(const Scenario& sc)
{
    const auto G = sc.grid("grid");
    const double h = sc.grid_step("grid");
    std::vector<std::pair<std::string, std::pair<GFExpr, GFExpr>>> pairs;
    int i = 0;
    for (const auto& p : sc.param("pairs"))
        pairs.push_back({"pair" + std::to_string(i++), {sc.expr(p.at("f1")), sc.expr(p.at("f2"))}});
    if (sc.params.contains("random_pairs")) {
        const auto& r = sc.param("random_pairs");
        std::mt19937 rng(sc.seed);
        for (int j = 0; j < r.at("count").get<int>(); ++j) {
            GFExpr a = poly1d(random_polynomial(rng, r.at("coefficient_ranges")).coefficients);
            GFExpr b = poly1d(random_polynomial(rng, r.at("coefficient_ranges")).coefficients);
            pairs.push_back({"random" + std::to_string(j), {a, b}});
        }
    }
    std::vector<CheckSpec> out;
    for (const auto& [name, pr] : pairs) {
        GFExpr f1 = pr.first, f2 = pr.second;
        out.push_back({name + ".sum_then_T", [=] {
                           auto L1 = graph_of(f1, G), L2 = graph_of(f2, G);
                           auto lhs = geometric_T(geometric_sum(L1, L2, G));
                           auto rhs = geometric_convolution(geometric_T(L1), geometric_T(L2), G);
                           return cloud_gap(lhs, rhs);
                       }});
        out.push_back({name + ".convolution_then_T", [=] {
                           auto L1 = graph_of(f1, G), L2 = graph_of(f2, G);
                           auto P = common_p_grid(L1, L2, h);
                           auto lhs = geometric_T(geometric_convolution(L1, L2, P));
                           auto rhs = geometric_sum(geometric_T(L1), geometric_T(L2), P);
                           return cloud_gap(lhs, rhs);
                       }});
    }
    return out;
}

inline std::vector<CheckSpec> prop11_checks(const Scenario& sc)
{
    const GFExpr F = sc.gf("gf");
    if (F.base_dim() != 2)
        throw Error(ErrorCode::Arity, "prop11 needs a two-variable input");
    const auto axis = sc.grid("lattice");
    const double lat = std::max(std::abs(axis.front()), std::abs(axis.back()));
    const double fstep = sc.get<double>("fiber_step");
    auto lattice = [=] {
        return sample_legendrian_grid(F, {axis, axis}, Box::cube(F.fiber_dim(), sc.get<double>("fiber_box")), fstep);
    };
    const auto sg = sc.grid("slice_grid"), cg = sc.grid("contour_grid");
    auto win = [](const LegendrianCloud& c, const std::vector<double>& g) { return window(c, g.front(), g.back()); };
    std::vector<CheckSpec> out;
    out.push_back({"slice.T_commutes", [=] {
                       auto L = lattice();
                       return cloud_gap(win(geometric_T(cloud_slice(L, 0)), sg), win(cloud_contour(geometric_T(L), 0), sg));
                   }});
    out.push_back({"contour.T_commutes", [=] {
                       auto L = lattice();
                       return cloud_gap(win(geometric_T(cloud_contour(L, 0)), cg), win(cloud_slice(geometric_T(L), 0), cg));
                   }});
    out.push_back({"slice.gf_route", [=] {
                       GFExpr S = transform_T(slice_gf(F, {0}));
                       auto gfc = sample_legendrian(S, sg, Box::cube(S.fiber_dim(), lat), fstep);
                       return cloud_gap(gfc, win(cloud_contour(geometric_T(lattice()), 0), sg));
                   }});
    out.push_back({"contour.gf_route", [=] {
                       GFExpr K = transform_T(contour_gf(F, {0}));
                       auto gfc = sample_legendrian(K, cg, Box::cube(K.fiber_dim(), lat), fstep);
                       return cloud_gap(gfc, win(cloud_slice(geometric_T(lattice()), 0), cg));
                   }});
    return out;
}

inline std::vector<CheckSpec> remark12_checks(const Scenario& sc)
{
    const GFExpr f1 = sc.gf("f1"), f2 = sc.gf("f2");
    if (f1.base_dim() != 1 || f2.base_dim() != 1)
        throw Error(ErrorCode::Arity, "remark12 factors must have one base variable");
    const auto src = sc.grid("source_grid");
    const auto axis = sc.grid("lattice");
    const double box = sc.get<double>("fiber_box"), fstep = sc.get<double>("fiber_step");
    std::vector<CheckSpec> out;
    out.push_back({"product.T_commutes_clouds", [=] {
                       auto L1 = sample(f1, src, box, fstep), L2 = sample(f2, src, box, fstep);
                       return cloud_gap(geometric_T(cloud_product(L1, L2)),
                                        cloud_product(geometric_T(L1), geometric_T(L2)));
                   }});
    out.push_back({"product.gf_pointwise", [=] {
                       const std::size_t k1 = f1.fiber_dim(), k2 = f2.fiber_dim();
                       GFExpr a = transform_T(product_gf(f1, f2));
                       GFExpr b = product_gf(transform_T(f1), transform_T(f2));
                       std::mt19937 rng(sc.seed);
                       double worst = 0.0;
                       const int probes = sc.get<int>("probes");
                       for (int i = 0; i < probes; ++i) {
                           Vec q = random_vec(rng, 2, 2.0), x = random_vec(rng, 2 + k1 + k2, 2.0);
                           // (v1, v2, w1, w2) -> (v1, w1, v2, w2)
                           Vec y{x[0]};
                           y.insert(y.end(), x.begin() + 2, x.begin() + 2 + static_cast<long>(k1));
                           y.push_back(x[1]);
                           y.insert(y.end(), x.begin() + 2 + static_cast<long>(k1), x.end());
                           worst = std::max(worst, std::abs(eval(a, q, x) - eval(b, q, y)));
                       }
                       return measured(worst, std::to_string(probes) + " random probes");
                   }});
    out.push_back({"product.gf_route", [=] {
                       GFExpr P = transform_T(product_gf(f1, f2));
                       auto gfc = sample_legendrian_grid(P, {axis, axis}, Box::cube(P.fiber_dim(), box), fstep);
                       auto T1 = window(geometric_T(sample(f1, src, box, fstep)), axis.front(), axis.back());
                       auto T2 = window(geometric_T(sample(f2, src, box, fstep)), axis.front(), axis.back());
                       return cloud_gap(gfc, cloud_product(T1, T2));
                   }});
    return out;
}

inline std::vector<CheckSpec> lemma31_checks(const Scenario& sc)
{
    std::vector<CheckSpec> out;
    auto part = [&](const char* key) -> const nlohmann::json& { return sc.param(key); };
    auto grid = [](const nlohmann::json& g) {
        return uniform_grid(g.at("lo").get<double>(), g.at("hi").get<double>(), g.at("step").get<double>());
    };

    {
        const auto& p = part("T");
        GFExpr f = sc.expr(p.at("f"));
        auto src = grid(p.at("source_grid")), g = grid(p.at("grid"));
        double box = p.at("box").get<double>(), step = p.at("step").get<double>();
        out.push_back({"T", [=] {
                           auto gfc = sample(transform_T(f), g, box, step);
                           auto geo = window(geometric_T(sample(f, src, box, step)), g.front(), g.back());
                           return cloud_gap(gfc, geo);
                       }});
    }
    {
        const auto& p = part("sum");
        GFExpr f1 = sc.expr(p.at("f1")), f2 = sc.expr(p.at("f2"));
        auto g = grid(p.at("grid"));
        double box = p.at("box").get<double>(), step = p.at("step").get<double>();
        out.push_back({"sum", [=] {
                           auto gfc = sample(sum_gf(f1, f2), g, box, step);
                           auto geo = geometric_sum(sample(f1, g, box, step), sample(f2, g, box, step), g);
                           return cloud_gap(gfc, geo);
                       }});
    }
    {
        const auto& p = part("convolution");
        GFExpr f1 = sc.expr(p.at("f1")), f2 = sc.expr(p.at("f2"));
        auto src = grid(p.at("source_grid")), g = grid(p.at("grid"));
        double box = p.at("box").get<double>(), step = p.at("step").get<double>();
        out.push_back({"convolution", [=] {
                           auto gfc = sample(convolution_gf(f1, f2), g, box, step);
                           auto L1 = sample(f1, src, box, step), L2 = sample(f2, src, box, step);
                           auto geo = geometric_convolution(L1, L2, common_p_grid(L1, L2, step_of(src)));
                           return cloud_gap(gfc, window(geo, g.front(), g.back()));
                       }});
    }
    {
        const auto& p = part("product");
        GFExpr f1 = sc.expr(p.at("f1")), f2 = sc.expr(p.at("f2"));
        auto a1 = grid(p.at("axis1")), a2 = grid(p.at("axis2"));
        double box = p.at("box").get<double>(), step = p.at("step").get<double>();
        out.push_back({"product", [=] {
                           GFExpr P = product_gf(f1, f2);
                           auto gfc = sample_legendrian_grid(P, {a1, a2}, Box::cube(P.fiber_dim(), box), step);
                           auto geo = cloud_product(sample(f1, a1, box, step, false), sample(f2, a2, box, step, false));
                           return cloud_gap(gfc, geo);
                       }});
    }
    for (const char* which : {"slice", "contour"}) {
        const auto& p = part(which);
        GFExpr f = sc.expr(p.at("f"));
        auto lat = grid(p.at("lattice")), g = grid(p.at("grid"));
        double box = p.at("box").get<double>(), step = p.at("step").get<double>();
        bool is_slice = std::string(which) == "slice";
        out.push_back({which, [=] {
                           auto L = sample_legendrian_grid(f, {lat, lat}, Box::cube(f.fiber_dim(), box), step);
                           LegendrianCloud gfc;
                           if (is_slice) {
                               gfc = sample(slice_gf(f, {0}), g, box, step);
                           } else {
                               GFExpr K = contour_gf(f, {0});
                               Box b = Box::cube(K.fiber_dim(), box);
                               b.lo[0] = lat.front();
                               b.hi[0] = lat.back();
                               gfc = sample_legendrian(K, g, b, step);
                           }
                           auto geo = is_slice ? cloud_slice(L, 0) : cloud_contour(L, 0);
                           return cloud_gap(gfc, window(geo, g.front(), g.back()));
                       }});
    }
    return out;
}

inline std::vector<CheckSpec> prop31_checks(const Scenario& sc)
{
    const auto qs = sc.grid("grid");
    std::vector<CheckSpec> out;
    for (const auto& c : sc.param("cases")) {
        const std::string name = c.at("name").get<std::string>();
        GFExpr f1 = sc.expr(c.at("f1")), f2 = sc.expr(c.at("f2"));
        double box = c.at("box").get<double>(), step = c.at("step").get<double>();
        bool hom = c.value("force_homology", false);
        std::optional<int> i1, i2;
        if (c.contains("iota1"))
            i1 = c.at("iota1").get<int>();
        if (c.contains("iota2"))
            i2 = c.at("iota2").get<int>();
        std::optional<int> i12;
        if (i1 && i2)
            i12 = *i1 + *i2;
        out.push_back({name + ".additive", [=] {
                           auto s1 = selector_values(f1, qs, box, step, i1);
                           auto s2 = selector_values(f2, qs, box, step, i2);
                           SelectorOptions o;
                           o.index = i12;
                           o.minmax.force_homology = hom;
                           auto cur = selector(sum_gf(f1, f2), qs, Box::cube(f1.fiber_dim() + f2.fiber_dim(), box), step, o);
                           std::vector<double> sum(qs.size());
                           for (std::size_t i = 0; i < qs.size(); ++i)
                               sum[i] = s1[i] + s2[i];
                           Measurement m = curve_gap(cur.s_values, sum, qs);
                           auto homs = std::count(cur.method.begin(), cur.method.end(), MinmaxMethod::Homology);
                           m.detail += ", " + std::to_string(homs) + " homology evaluations";
                           return m;
                       }});
        if (c.contains("expect_at_zero")) {
            double expect = c.at("expect_at_zero").get<double>();
            out.push_back({name + ".value_at_zero", [=] {
                               SelectorOptions o;
                               o.index = i12;
                               o.minmax.force_homology = hom;
                               auto cur = selector(sum_gf(f1, f2), Vec{0.0},
                                                   Box::cube(f1.fiber_dim() + f2.fiber_dim(), box), step, o);
                               return measured(std::abs(cur.s_values[0] - expect),
                                               "s(0) = " + num(cur.s_values[0]) + " via " + to_string(cur.method[0]));
                           }});
        }
    }
    return out;
}

inline std::vector<CheckSpec> lemma33_checks(const Scenario& sc)
{
    const int count = sc.get<int>("instances"), hom_count = sc.get<int>("homology_instances");
    const double box = sc.get<double>("box"), step = sc.get<double>("step");
    struct Instance
    {
        GFExpr f;
        double oracle;
        int iota;
    };
    auto make = [=](bool concave) {
        std::mt19937 rng(sc.seed + (concave ? 1u : 0u));
        std::vector<Instance> v;
        for (int i = 0; i < count; ++i) {
            std::size_t k = (i % 2 == 0) ? 1 : 2;
            std::vector<Polynomial1D> ps;
            double oracle = 0.0;
            for (std::size_t a = 0; a < k; ++a) {
                ps.push_back(random_convex_quartic(rng));
                oracle += convex_minimum(ps.back(), -box, box);
            }
            double sign = concave ? -1.0 : 1.0;
            v.push_back({separable_fiber(ps, sign), sign * oracle, concave ? static_cast<int>(k) : 0});
        }
        return v;
    };
    std::vector<CheckSpec> out;
    for (bool concave : {false, true}) {
        std::string tag = concave ? "almost_concave" : "almost_convex";
        out.push_back({tag + (concave ? ".selector_is_max" : ".selector_is_min"), [=] {
                           double worst = 0.0;
                           auto inst = make(concave);
                           for (const auto& in : inst) {
                               auto r = minmax(in.f, Vec{0.0}, in.iota, Box::cube(in.f.fiber_dim(), box), step);
                               worst = std::max(worst, std::abs(r.value - in.oracle));
                           }
                           return measured(worst, std::to_string(inst.size()) + " instances against bisection extremes");
                       }});
        out.push_back({tag + ".homology_agrees", [=] {
                           double worst = 0.0;
                           auto inst = make(concave);
                           MinmaxOptions forced;
                           forced.force_homology = true;
                           for (int i = 0; i < hom_count && i < count; ++i) {
                               const auto& in = inst[static_cast<std::size_t>(i)];
                               Box b = Box::cube(in.f.fiber_dim(), box);
                               double fast = minmax(in.f, Vec{0.0}, in.iota, b, step).value;
                               double slow = minmax(in.f, Vec{0.0}, in.iota, b, step, forced).value;
                               worst = std::max(worst, std::abs(fast - slow));
                           }
                           return measured(worst, std::to_string(std::min(hom_count, count)) + " instances");
                       }});
    }
    return out;
}

inline std::vector<CheckSpec> theorem327_checks(const Scenario& sc)
{
    const GFExpr f1 = sc.gf("f1"), f2 = sc.gf("f2");
    const auto qs = sc.grid("grid");
    const double box = sc.get<double>("box"), step = sc.get<double>("step");
    const double box3 = sc.get<double>("k3_box"), step3 = sc.get<double>("k3_step");
    const auto& dj = sc.param("deformation");
    const auto dq = uniform_grid(dj.at("lo").get<double>(), dj.at("hi").get<double>(), dj.at("step").get<double>());
    const auto ts = dj.at("t").get<std::vector<double>>();

    auto reference = [=](const Vec& q) { return selector_values(transform_T(sum_gf(f1, f2)), q, box, step); };
    auto deformation = [=](PathWeight w) {
        auto ref = reference(dq);
        double worst = 0.0;
        double worst_t = 0.0, worst_q = 0.0;
        for (double t : ts) {
            auto s = selector_values(theorem327_path(f1, f2, t, w), dq, box3, step3, std::nullopt, true);
            auto [gap, at] = max_gap(s, ref);
            if (gap > worst) {
                worst = gap;
                worst_t = t;
                worst_q = dq[at];
            }
        }
        return measured(worst, "worst at t=" + num(worst_t) + ", q=" + num(worst_q) + " over " +
                                   std::to_string(ts.size()) + " t values");
    };

    std::vector<CheckSpec> out;
    out.push_back({"i.selectors_agree", [=] {
                       auto a = selector_values(sum_gf(transform_T(f1), transform_T(f2)), qs, box, step);
                       auto b = selector_values(transform_T(convolution_gf(f1, f2)), qs, box, step);
                       return curve_gap(a, b, qs);
                   }});
    out.push_back({"ii.selectors_agree", [=] {
                       auto a = selector_values(convolution_gf(transform_T(f1), transform_T(f2)), qs, box3, step3);
                       return curve_gap(a, reference(qs), qs);
                   }});
    out.push_back({"ii.stabilized_homology", [=] {
                       auto a = selector_values(stabilize_hyperbolic(transform_T(sum_gf(f1, f2))), qs, box3, step3,
                                                std::nullopt, true);
                       return curve_gap(a, reference(qs), qs);
                   }});
    out.push_back({"ii.deformation_published", [=] { return deformation(PathWeight::Linear); }});
    out.push_back({"ii.deformation_quadratic_weight", [=] { return deformation(PathWeight::Quadratic); }});
    return out;
}

inline std::vector<CheckSpec> corollary324_checks(const Scenario& sc)
{
    auto grid_of = [](const nlohmann::json& g) {
        return UniformGrid::span(g.at("lo").get<double>(), g.at("hi").get<double>(),
                                 static_cast<std::size_t>(std::llround((g.at("hi").get<double>() - g.at("lo").get<double>()) /
                                                                       g.at("step").get<double>())) +
                                     1);
    };
    auto sampled_fn = [grid_of](const Polynomial1D& p, const nlohmann::json& g) {
        UniformGrid u = grid_of(g);
        TailModel tail{p, p, 0};
        return GridFunction::sample([&](double x) { return p.value(x); }, u.x0, u.x(u.count - 1), u.step, tail);
    };
    auto qvec = [](const UniformGrid& u) {
        Vec v(u.count);
        for (std::size_t i = 0; i < u.count; ++i)
            v[i] = u.x(i);
        return v;
    };

    std::vector<CheckSpec> out;
    for (const auto& c : sc.param("convex")) {
        const std::string name = c.at("name").get<std::string>();
        Polynomial1D p{c.at("coefficients").get<std::vector<double>>()};
        GFExpr f = poly1d(p.coefficients);
        double box = c.at("box").get<double>(), step = c.at("step").get<double>();
        UniformGrid qg = grid_of(c.at("grid"));
        nlohmann::json sample_grid = c.at("sample");
        out.push_back({name + ".T_selector_is_conjugate", [=] {
                           auto qs = qvec(qg);
                           auto s = selector_values(transform_T(f), qs, box, step);
                           GridFunction fs = lf_transform(sampled_fn(p, sample_grid), qg);
                           std::vector<double> ref(qs.size());
                           for (std::size_t i = 0; i < qs.size(); ++i)
                               ref[i] = fs.is_finite(i) ? fs.values[i] : s[i];
                           return curve_gap(s, ref, qs);
                       }});
        out.push_back({name + ".TT_selector_is_f", [=] {
                           auto qs = qvec(qg);
                           auto s = selector_values(transform_T(transform_T(f)), qs, box, step);
                           std::vector<double> ref(qs.size());
                           for (std::size_t i = 0; i < qs.size(); ++i)
                               ref[i] = p.value(qs[i]);
                           return curve_gap(s, ref, qs);
                       }});
    }
    {
        const auto& c = sc.param("convolution");
        Polynomial1D p1{c.at("f1").get<std::vector<double>>()}, p2{c.at("f2").get<std::vector<double>>()};
        double box = c.at("box").get<double>(), step = c.at("step").get<double>();
        UniformGrid qg = grid_of(c.at("grid"));
        nlohmann::json sample_grid = c.at("sample");
        out.push_back({"convolution.selector_is_inf_conv", [=] {
                           auto qs = qvec(qg);
                           auto s = selector_values(convolution_gf(poly1d(p1.coefficients), poly1d(p2.coefficients)), qs,
                                                    box, step);
                           std::vector<std::string> warnings;
                           GridFunction ic = inf_conv(sampled_fn(p1, sample_grid), sampled_fn(p2, sample_grid), qg,
                                                      InfConvMethod::Brute, &warnings);
                           Measurement m = curve_gap(s, ic.values, qs);
                           if (!warnings.empty())
                               m.detail += ", " + std::to_string(warnings.size()) + " warnings";
                           return m;
                       }});
    }
    {
        const auto& c = sc.param("discriminator");
        Polynomial1D p{c.at("coefficients").get<std::vector<double>>()};
        double box = c.at("box").get<double>(), step = c.at("step").get<double>();
        nlohmann::json sample_grid = c.at("sample");
        double expect_s = c.at("expect_selector").get<double>(), expect_b = c.at("expect_biconjugate").get<double>();
        auto sel0 = [=] { return selector_values(transform_T(transform_T(poly1d(p.coefficients))), Vec{0.0}, box, step)[0]; };
        auto bic0 = [=] { return biconjugate(sampled_fn(p, sample_grid))(0.0); };
        out.push_back({"discriminator.TT_selector_at_zero", [=] {
                           double s = sel0();
                           return measured(std::abs(s - expect_s), "s(0) = " + num(s));
                       }});
        out.push_back({"discriminator.biconjugate_at_zero", [=] {
                           double b = bic0();
                           return measured(std::abs(b - expect_b), "f**(0) = " + num(b));
                       }});
        out.push_back({"discriminator.separation", [=] {
                           double s = sel0(), b = bic0();
                           return measured(std::abs(s - b), "selector and biconjugate differ by " + num(std::abs(s - b)),
                                           Compare::AtLeast);
                       }});
    }
    return out;
}

inline std::vector<CheckSpec> remark34_checks(const Scenario& sc)
{
    const GFExpr F = sc.gf("gf");
    const auto qs = sc.grid("grid");
    const double box = sc.get<double>("box"), step = sc.get<double>("step"), step3 = sc.get<double>("step3");
    const int probes = sc.get<int>("probes");
    const GFExpr g1 = sc.gf("f1"), g2 = sc.gf("f2");

    auto pointwise = [=](const GFExpr& a, const GFExpr& b, unsigned salt) {
        std::mt19937 rng(sc.seed + salt);
        double worst = 0.0;
        const std::size_t k = std::min(a.fiber_dim(), b.fiber_dim());
        for (int i = 0; i < probes; ++i) {
            Vec q = random_vec(rng, a.base_dim(), 2.0);
            Vec wa = random_vec(rng, a.fiber_dim(), 2.0);
            Vec wb(wa.begin(), wa.begin() + static_cast<long>(k));
            wb.resize(b.fiber_dim(), 0.0);
            worst = std::max(worst, std::abs(eval(a, q, wa) - eval(b, q, wb)));
        }
        return worst;
    };
    auto contours = [=](const GFExpr& a, const GFExpr& b) {
        auto at = [&](const GFExpr& f) {
            return sample_legendrian(f, qs, Box::cube(f.fiber_dim(), box), f.fiber_dim() >= 3 ? step3 : step);
        };
        auto ca = at(a), cb = at(b);
        return hausdorff(ca, cb, HausdorffMetric::Point).value;
    };

    std::vector<CheckSpec> out;
    out.push_back({"case1.pointwise", [=] {
                       double d = pointwise(slice_gf(transform_T(F), {0}), transform_T(contour_gf(F, {0})), 1);
                       return measured(d, "expressions agree pointwise over " + std::to_string(probes) + " probes");
                   }});
    out.push_back({"case1.contours", [=] {
                       double d = contours(slice_gf(transform_T(F), {0}), transform_T(contour_gf(F, {0})));
                       return measured(d, "sampled contours");
                   }});
    out.push_back({"case2.pointwise_differs", [=] {
                       GFExpr a = contour_gf(transform_T(F), {0}), b = transform_T(slice_gf(F, {0}));
                       double d = pointwise(a, b, 2);
                       return measured(d,
                                       "expressions differ pointwise, contours agree (fibers " +
                                           std::to_string(a.fiber_dim()) + " vs " + std::to_string(b.fiber_dim()) + ")",
                                       Compare::AtLeast);
                   }});
    out.push_back({"case2.contours", [=] {
                       double d = contours(contour_gf(transform_T(F), {0}), transform_T(slice_gf(F, {0})));
                       return measured(d, "sampled contours");
                   }});
    out.push_back({"sum_convolution.phi_pointwise", [=] {
                       GFExpr a = fiber_diffeo_sum_conv(sum_gf(transform_T(g1), transform_T(g2)));
                       GFExpr b = transform_T(convolution_gf(g1, g2));
                       return measured(pointwise(a, b, 3), "sum of transforms moved by the inverse fiber map");
                   }});
    return out;
}

inline std::vector<CheckSpec> suite_checks(const std::string& suite, const Scenario& sc)
{
    if (suite == "theorem21")
        return theorem21_checks(sc);
    if (suite == "prop11")
        return prop11_checks(sc);
    if (suite == "remark12")
        return remark12_checks(sc);
    if (suite == "lemma31_crosscheck")
        return lemma31_checks(sc);
    if (suite == "prop31")
        return prop31_checks(sc);
    if (suite == "lemma33")
        return lemma33_checks(sc);
    if (suite == "theorem327")
        return theorem327_checks(sc);
    if (suite == "corollary324")
        return corollary324_checks(sc);
    if (suite == "remark34")
        return remark34_checks(sc);
    throw Error(ErrorCode::Parse, "unknown suite '" + suite + "'");
}

inline Report failed_setup(const std::string& suite, const Error& e)
{
    Report r;
    r.suite = suite;
    CheckResult c;
    c.name = "scenario";
    c.error_code = to_string(e.code());
    c.error_message = e.what();
    r.checks.push_back(std::move(c));
    return r;
}

} // namespace detail

inline Report run_suite(const std::string& suite, const Scenario& sc, unsigned threads = 0)
{
    std::vector<CheckSpec> specs;
    try {
        specs = detail::suite_checks(suite, sc);
    } catch (const Error& e) {
        return detail::failed_setup(suite, e);
    } catch (const nlohmann::json::exception& e) {
        return detail::failed_setup(suite, Error(ErrorCode::Parse, e.what()));
    }
    return run_checks(suite, sc, specs, threads);
}

/// Loads `<dir>/<suite>.json` and runs it.
inline Report run_suite(const std::string& suite, const std::filesystem::path& scenario_dir, unsigned threads = 0)
{
    Scenario sc;
    try {
        sc = load_scenario(scenario_dir / (suite + ".json"));
    } catch (const Error& e) {
        return detail::failed_setup(suite, e);
    }
    return run_suite(suite, sc, threads);
}

/// "all" or one suite name.
inline std::vector<Report> run_suites(const std::string& which, const std::filesystem::path& scenario_dir,
                                      unsigned threads = 0)
{
    const auto known = suite_names();
    std::vector<std::string> names;
    if (which == "all")
        names = known;
    else if (std::find(known.begin(), known.end(), which) != known.end())
        names.push_back(which);
    else
        throw Error(ErrorCode::Parse, "unknown suite '" + which + "'");
    std::vector<Report> out;
    for (const auto& n : names)
        out.push_back(run_suite(n, scenario_dir, threads));
    return out;
}

} // namespace legtk

#endif // LEGTK_VERIFY_HPP
