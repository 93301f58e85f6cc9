#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "legtk/front_export.hpp"
#include "legtk/gf_ops.hpp"
#include "legtk/legendrian_cloud.hpp"
#include "legtk/star_condition.hpp"

using namespace legtk;

namespace {

GFExpr quartic() { return poly1d({0, 0, -3, 0, 1}); }

LegendrianCloud one_graph(const std::vector<double>& coeffs, double lo, double hi, double h)
{
    return sample_legendrian(poly1d(coeffs), uniform_grid(lo, hi, h), Box{}, h);
}

// Dense parametrized reference cloud x -> (u(x), q(x), p(x)).
template <typename F>
LegendrianCloud param_cloud(F&& map, double lo, double hi, double h)
{
    LegendrianCloud c;
    for (double x : uniform_grid(lo, hi, h)) {
        auto [u, q, p] = map(x);
        c.add({u, {q}, {p}}, 0);
    }
    return c;
}

} // namespace

TEST(StarCondition, TransformedParabolaSatisfied)
{
    auto rep = check_star_condition(transform_T(poly1d({0, 0, 0.5})), Box::cube(2, 2.0), 0.05);
    EXPECT_TRUE(rep.satisfied);
    EXPECT_FALSE(rep.witnesses.empty());
    EXPECT_NEAR(rep.worst_sigma_min, std::sqrt(2.0), 1e-6);
}

TEST(StarCondition, FoldIsStillTransverse)
{
    GFExpr f = polynomial(1, 1, {{1.0, {1, 1}}, {-1.0 / 3.0, {0, 3}}});
    auto rep = check_star_condition(f, Box::cube(2, 1.0), 0.05);
    EXPECT_TRUE(rep.satisfied);
}

TEST(StarCondition, CubeIsRejectedAtOrigin)
{
    GFExpr f = polynomial(1, 1, {{1.0, {0, 3}}});
    auto rep = check_star_condition(f, Box::cube(2, 1.0), 0.05);
    EXPECT_FALSE(rep.satisfied);
    bool near_origin = false;
    for (const auto& w : rep.witnesses)
        if (std::abs(w.w[0]) < 1e-3 && !(w.sigma_min > w.threshold))
            near_origin = true;
    EXPECT_TRUE(near_origin);
}

TEST(StarCondition, EmptyContourIsVacuous)
{
    GFExpr f = polynomial(1, 1, {{1.0, {0, 1}}});
    auto rep = check_star_condition(f, Box::cube(2, 1.0), 0.1);
    EXPECT_TRUE(rep.satisfied);
    EXPECT_TRUE(rep.witnesses.empty());
    ASSERT_FALSE(rep.flags.empty());
    EXPECT_EQ(rep.flags.back(), "empty contour in box");
}

TEST(FiberSolver, TransformedQuarticAtZero)
{
    auto r = solve_fiber_critical(transform_T(quartic()), {0.0}, Box::cube(1, 3.0), 0.01);
    ASSERT_EQ(r.roots.size(), 3u);
    EXPECT_NEAR(r.roots[0][0], -std::sqrt(1.5), 1e-10);
    EXPECT_NEAR(r.roots[1][0], 0.0, 1e-10);
    EXPECT_NEAR(r.roots[2][0], std::sqrt(1.5), 1e-10);
}

TEST(FiberSolver, SingleRootCases)
{
    GFExpr f = polynomial(1, 1, {{1.0, {1, 1}}, {-0.5, {0, 2}}});
    auto r = solve_fiber_critical(f, {1.0}, Box::cube(1, 3.0), 0.01);
    ASSERT_EQ(r.roots.size(), 1u);
    EXPECT_NEAR(r.roots[0][0], 1.0, 1e-10);

    // q = 4w^3 - 6w has one real root for q = 10 (discriminant oracle)
    GFExpr g = polynomial(1, 1, {{1.0, {1, 1}}, {-1.0, {0, 4}}, {3.0, {0, 2}}});
    double disc = -4 * 4 * std::pow(-6.0, 3) - 27 * 16 * 100.0;
    EXPECT_LT(disc, 0.0);
    auto s = solve_fiber_critical(g, {10.0}, Box::cube(1, 4.0), 0.01);
    EXPECT_EQ(s.roots.size(), 1u);
}

TEST(FiberSolver, TwoFiberVariables)
{
    GFExpr f = sum_gf(transform_T(quartic()), transform_T(poly1d({0, 0, 1})));
    auto r = solve_fiber_critical(f, {0.5}, Box::cube(2, 3.0), 0.05, 1e-6);
    EXPECT_EQ(r.roots.size(), 3u);
    for (const auto& w : r.roots) {
        EXPECT_NEAR(4 * std::pow(w[0], 3) - 6 * w[0], 0.5, 1e-9);
        EXPECT_NEAR(2 * w[1], 0.5, 1e-9);
    }
}

TEST(Sampler, OneGraphOfQuartic)
{
    auto c = one_graph({0, 0, -3, 0, 1}, -2, 2, 0.01);
    ASSERT_EQ(c.size(), 401u);
    EXPECT_EQ(c.branch_count(), 1u);
    for (const auto& pt : c.points) {
        double x = pt.q[0];
        EXPECT_NEAR(pt.u, x * x * x * x - 3 * x * x, 1e-12);
        EXPECT_NEAR(pt.p[0], 4 * x * x * x - 6 * x, 1e-12);
    }
}

TEST(Sampler, TransformedQuarticMatchesParametrization)
{
    GFExpr f = transform_T(quartic());
    auto c = sample_legendrian(f, uniform_grid(-5, 5, 0.01), Box::cube(1, 3.0), 0.01);
    EXPECT_TRUE(c.warnings.empty());
    EXPECT_EQ(c.branch_count(), 3u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& pt = c.points[i];
        double x = pt.p[0];
        EXPECT_NEAR(pt.q[0], 4 * x * x * x - 6 * x, 1e-9);
        EXPECT_NEAR(pt.u, 3 * x * x * x * x - 3 * x * x, 1e-9);
        // defining equations at the source parameters
        auto g = grad(f, pt.q, c.source_w[i]);
        EXPECT_LT(std::abs(g.dw[0]), 1e-10);
        EXPECT_LT(std::abs(g.value - pt.u), 1e-9);
    }
    auto ref = param_cloud(
        [](double x) { return std::tuple{3 * x * x * x * x - 3 * x * x, 4 * x * x * x - 6 * x, x}; }, -1.9, 1.9, 1e-3);
    EXPECT_LT(hausdorff(window(c, -4.5, 4.5), window(ref, -4.5, 4.5), HausdorffMetric::Curve).value, 0.05);
}

TEST(Sampler, EmptyContourForLinearFiber)
{
    GFExpr f = polynomial(1, 1, {{1.0, {1, 1}}, {-1.0, {0, 1}}});
    auto c = sample_legendrian(f, {-1.0, 0.0, 0.5, 2.0}, Box::cube(1, 2.0), 0.01);
    EXPECT_TRUE(c.empty());
}

TEST(Front, GraphAndEmpty)
{
    auto c = one_graph({0, 3, 1}, -2, 2, 0.1);
    auto w = wave_front(c);
    for (std::size_t i = 0; i < w.size(); ++i)
        EXPECT_NEAR(w.u[i], w.q[i][0] * w.q[i][0] + 3 * w.q[i][0], 1e-12);
    EXPECT_EQ(wave_front(LegendrianCloud{}).size(), 0u);
}

TEST(GeometricT, PointExampleAndInvolution)
{
    LegendrianCloud c;
    c.add({0.0, {1.0}, {-2.0}}, 0);
    auto t = geometric_T(c);
    EXPECT_DOUBLE_EQ(t.points[0].u, -2.0);
    EXPECT_DOUBLE_EQ(t.points[0].q[0], -2.0);
    EXPECT_DOUBLE_EQ(t.points[0].p[0], 1.0);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-10, 10);
    LegendrianCloud r;
    for (int i = 0; i < 1000; ++i)
        r.add({U(rng), {U(rng)}, {U(rng)}}, 0);
    auto back = geometric_T(geometric_T(r));
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_EQ(back.points[i].q[0], r.points[i].q[0]);
        EXPECT_EQ(back.points[i].p[0], r.points[i].p[0]);
        EXPECT_NEAR(back.points[i].u, r.points[i].u, 1e-12);
    }
    EXPECT_LE(hausdorff(back, r).value, 1e-9);
}

TEST(GeometricT, ExponentialGivesEntropyLikeFront)
{
    LegendrianCloud c;
    for (double x : uniform_grid(-3, 3, 0.01))
        c.add({std::exp(x), {x}, {std::exp(x)}}, 0);
    auto t = geometric_T(c);
    for (const auto& pt : t.points) {
        double q = pt.q[0];
        ASSERT_GT(q, 0.0);
        EXPECT_NEAR(pt.u, q * (std::log(q) - 1), 1e-12);
    }
}

TEST(GeometricOps, SumOfOneGraphs)
{
    auto grid = uniform_grid(-2, 2, 0.01);
    auto s = geometric_sum(one_graph({0, 0, 1}, -2, 2, 0.01), one_graph({0, 3}, -2, 2, 0.01), grid);
    auto ref = one_graph({0, 3, 1}, -2, 2, 0.01);
    EXPECT_LE(hausdorff(s, ref, HausdorffMetric::Curve).value, 5 * 0.01);
    EXPECT_LE(hausdorff(s, ref).value, 1e-12);
}

TEST(GeometricOps, ConvolutionOfHalfParabolas)
{
    double h = 0.01;
    auto a = one_graph({0, 0, 0.5}, -3, 3, h);
    auto conv = geometric_convolution(a, a, uniform_grid(-3, 3, h));
    auto ref = one_graph({0, 0, 0.25}, -6, 6, h);
    EXPECT_LE(hausdorff(conv, ref, HausdorffMetric::Curve).value, 5 * h);
}

TEST(GeometricOps, ProductPairsEveryPoint)
{
    auto a = one_graph({0, 0, 1}, -1, 1, 0.5);
    auto b = one_graph({0, 0, 0, 1}, -1, 1, 0.5);
    auto p = cloud_product(a, b);
    EXPECT_EQ(p.size(), 25u);
    EXPECT_EQ(p.base_dim, 2u);
    for (const auto& pt : p.points)
        EXPECT_NEAR(pt.u, pt.q[0] * pt.q[0] + pt.q[1] * pt.q[1] * pt.q[1], 1e-12);
}

TEST(Cusps, TransformedQuarticFront)
{
    auto c = sample_legendrian(transform_T(quartic()), uniform_grid(-5, 5, 0.01), Box::cube(1, 3.0), 0.01);
    auto feats = detect_cusps(wave_front(c));
    std::vector<FrontFeature> cusps;
    for (const auto& f : feats)
        if (f.kind == FrontFeature::Kind::Cusp)
            cusps.push_back(f);
    ASSERT_EQ(cusps.size(), 2u) << feats.size();
    std::sort(cusps.begin(), cusps.end(), [](auto& a, auto& b) { return a.q < b.q; });
    EXPECT_NEAR(cusps[0].q, -2 * std::sqrt(2.0), 1e-3);
    EXPECT_NEAR(cusps[1].q, 2 * std::sqrt(2.0), 1e-3);
    EXPECT_NEAR(cusps[0].u, -0.75, 1e-3);
    EXPECT_NEAR(cusps[1].u, -0.75, 1e-3);
    EXPECT_EQ(feats.size(), 2u);
}

TEST(Cusps, ParametrizedFrontTurningPoints)
{
    auto ref = param_cloud(
        [](double x) { return std::tuple{3 * x * x * x * x - 3 * x * x, 4 * x * x * x - 6 * x, x}; }, -2, 2, 1e-2);
    auto feats = detect_cusps(wave_front(ref));
    ASSERT_EQ(feats.size(), 2u);
    for (const auto& f : feats) {
        EXPECT_EQ(f.kind, FrontFeature::Kind::Cusp);
        EXPECT_NEAR(std::abs(f.q), 2 * std::sqrt(2.0), 1e-3);
        EXPECT_NEAR(f.u, -0.75, 1e-3);
    }
}

TEST(Cusps, GraphHasNone)
{
    EXPECT_TRUE(detect_cusps(wave_front(one_graph({0, 0, -3, 0, 1}, -2, 2, 0.01))).empty());
}

TEST(Cusps, CornerIsVertex)
{
    // graph of q^2/4 + |q|, sampled off the corner
    LegendrianCloud c;
    for (double q : uniform_grid(-2.0005, 1.9995, 1e-3))
        c.add({q * q / 4 + std::abs(q), {q}, {q / 2 + (q < 0 ? -1 : 1)}}, 0);
    auto feats = detect_cusps(wave_front(c));
    ASSERT_EQ(feats.size(), 1u);
    EXPECT_EQ(feats[0].kind, FrontFeature::Kind::Vertex);
    EXPECT_NEAR(feats[0].q, 0.0, 1e-3);
    EXPECT_NEAR(feats[0].u, 0.0, 1e-3);
}

TEST(Hausdorff, Basics)
{
    auto c = one_graph({0, 0, 1}, -1, 1, 0.1);
    EXPECT_EQ(hausdorff(c, c).value, 0.0);
    auto s = c;
    for (auto& pt : s.points)
        pt.u += 0.25;
    EXPECT_NEAR(hausdorff(c, s).value, 0.25, 1e-12);
    auto e = hausdorff(c, LegendrianCloud{});
    EXPECT_TRUE(e.empty);
    EXPECT_TRUE(std::isinf(e.value));
}

TEST(Export, CsvColumnsAndRows)
{
    auto c = one_graph({0, 0, 1}, -1, 1, 0.5);
    std::string csv = export_cloud(c, ExportFormat::Csv);
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    EXPECT_EQ(header, "u,q,p,branch");
    std::getline(in, row);
    EXPECT_EQ(row, "1,-1,-2,0");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Export, SvgOfFrontHasCuspMarkers)
{
    auto c = sample_legendrian(transform_T(quartic()), uniform_grid(-6, 6, 0.01), Box::cube(1, 3), 0.05);
    std::string svg = export_cloud(c, ExportFormat::Svg);
    auto count = [&](const std::string& needle) {
        std::size_t n = 0;
        for (auto at = svg.find(needle); at != std::string::npos; at = svg.find(needle, at + 1))
            ++n;
        return n;
    };
    EXPECT_EQ(count("class=\"cusp\""), 2u);
    EXPECT_EQ(count("<polyline"), c.branch_count());
    auto j = nlohmann::json::parse(export_cloud(c, ExportFormat::Json));
    EXPECT_EQ(j["points"].size(), c.size());
    EXPECT_EQ(j["features"].size(), 2u);
}

TEST(Export, HandkerchiefFrontInThreeViews)
{
    // two transverse lines of cusps, one per base axis
    GFExpr F = polynomial(2, 2, {{1.0, {1, 0, 1, 0}}, {-1.0, {0, 0, 3, 0}}, {1.0, {0, 1, 0, 1}}, {-1.0, {0, 0, 0, 3}}});
    auto axis = uniform_grid(-1, 1, 0.1);
    auto c = sample_legendrian_grid(F, {axis, axis}, Box::cube(2, 1.5), 0.1);
    ASSERT_FALSE(c.empty());
    EXPECT_EQ(c.branch_count(), 4u);
    std::string svg = export_cloud(c, ExportFormat::Svg);
    std::size_t panels = 0;
    for (auto at = svg.find("<g>"); at != std::string::npos; at = svg.find("<g>", at + 1))
        ++panels;
    EXPECT_EQ(panels, 3u);
    std::string csv = export_cloud(c, ExportFormat::Csv);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "u,q1,q2,p1,p2,branch");
}

TEST(Export, UnsupportedCombinations)
{
    EXPECT_THROW(parse_export_format("png"), Error);
    LegendrianCloud c;
    c.base_dim = 3;
    c.add({0.0, {0, 0, 0}, {0, 0, 0}}, 0);
    try {
        export_cloud(c, ExportFormat::Svg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedFormat);
    }
    EXPECT_NO_THROW(export_cloud(c, ExportFormat::Csv));
}
