#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "legtk/gf_ops.hpp"
#include "legtk/legendrian_cloud.hpp"
#include "legtk/minmax.hpp"

using namespace legtk;

namespace {

struct Rng
{
    std::mt19937 gen{31};
    std::uniform_real_distribution<double> U{-2, 2};
    Vec vec(std::size_t n)
    {
        Vec v(n);
        for (auto& x : v)
            x = U(gen);
        return v;
    }
};

// j^1 of a base polynomial, sampled on the grid (k = 0 sampler path).
LegendrianCloud graph_cloud(std::vector<double> coefficients, const std::vector<double>& qs)
{
    return sample_legendrian(poly1d(std::move(coefficients)), qs, Box{}, 0.1);
}

double defect(const LegendrianCloud& a, const LegendrianCloud& b)
{
    return hausdorff(a, b, HausdorffMetric::Curve).value;
}

const GFExpr square = poly1d({0, 0, 1});
const GFExpr quartic = poly1d({0, 0, -3, 0, 1});

} // namespace

TEST(GfOps, ArityRules)
{
    GFExpr two = polynomial(2, 1, {{1.0, {2, 0, 0}}, {1.0, {0, 2, 0}}, {1.0, {1, 0, 1}}});
    EXPECT_EQ(transform_T(two).fiber_dim(), 3u);
    EXPECT_EQ(contour_gf(two, {0}).fiber_dim(), 2u);
    EXPECT_EQ(slice_gf(two, {1}).fiber_dim(), 1u);
    GFExpr a = transform_T(quartic), b = transform_T(square);
    EXPECT_EQ(sum_gf(a, b).fiber_dim(), 2u);
    EXPECT_EQ(convolution_gf(a, b).fiber_dim(), 3u);
    EXPECT_EQ(product_gf(a, b).base_dim(), 2u);
    EXPECT_THROW(slice_gf(two, {}), Error);
    EXPECT_THROW(slice_gf(two, {0, 1}), Error);
    EXPECT_THROW(sum_gf(a, two), Error);
}

TEST(GfOps, SliceExamples)
{
    GFExpr f = polynomial(2, 0, {{1.0, {2, 0}}, {1.0, {0, 2}}});
    EXPECT_DOUBLE_EQ(eval(slice_gf(f, {0}), Vec{1.5}, Vec{}), 2.25);
    GFExpr p = product_gf(poly1d({0, 0, 1}), poly1d({4, 1}));
    EXPECT_DOUBLE_EQ(eval(slice_gf(p, {0}), Vec{3.0}, Vec{}), 9.0 + 4.0);
}

TEST(GfOps, TransformOfParabolas)
{
    auto qs = uniform_grid(-3, 3, 0.01);
    auto selfdual = sample_legendrian(transform_T(poly1d({0, 0, 0.5})), qs, Box::cube(1, 5), 0.05);
    EXPECT_LE(defect(selfdual, graph_cloud({0, 0, 0.5}, qs)), 5 * 0.01);
    auto quarter = sample_legendrian(transform_T(square), qs, Box::cube(1, 5), 0.05);
    EXPECT_LE(defect(quarter, graph_cloud({0, 0, 0.25}, qs)), 5 * 0.01);
}

TEST(GfOps, TransformTwiceReturnsTheGraph)
{
    // the second fiber sits at f'(q), which stays below 5 on this range
    auto qs = uniform_grid(-1.5, 1.5, 0.01);
    auto tt = sample_legendrian(transform_T(transform_T(quartic)), qs, Box::cube(2, 5), 0.05);
    EXPECT_LE(defect(tt, graph_cloud({0, 0, -3, 0, 1}, qs)), 5 * 0.01);
}

TEST(GfOps, SliceCommutesWithTransformPointwise)
{
    GFExpr F = polynomial(2, 1, {{1.0, {2, 0, 0}}, {0.5, {1, 1, 0}}, {1.0, {0, 0, 2}}, {-1.0, {0, 1, 3}}});
    GFExpr ts = slice_gf(transform_T(F), {0});
    GFExpr kt = transform_T(contour_gf(F, {0}));
    ASSERT_EQ(ts.fiber_dim(), kt.fiber_dim());
    Rng r;
    for (int i = 0; i < 200; ++i) {
        Vec q = r.vec(1), w = r.vec(ts.fiber_dim());
        EXPECT_NEAR(eval(ts, q, w), eval(kt, q, w), 1e-12);
    }
}

TEST(GfOps, ContourOfTransformDiffersButContoursAgree)
{
    GFExpr F = polynomial(2, 0, {{1.0, {2, 0}}, {0.5, {1, 1}}, {1.0, {0, 2}}});
    GFExpr tk = contour_gf(transform_T(F), {0});
    GFExpr st = transform_T(slice_gf(F, {0}));
    EXPECT_NE(tk.fiber_dim(), st.fiber_dim());
    auto qs = uniform_grid(-2, 2, 0.05);
    auto a = sample_legendrian(tk, qs, Box::cube(3, 2.5), 0.25);
    auto b = sample_legendrian(st, qs, Box::cube(1, 2.5), 0.05);
    ASSERT_FALSE(a.points.empty());
    EXPECT_LE(hausdorff(a, b, HausdorffMetric::Point).value, 5 * 0.05);
}

TEST(GfOps, StabilizationKeepsContourAndStrips)
{
    Eigen::MatrixXd H(2, 2);
    H << 1, 0, 0, -1;
    GFExpr S = stabilize(square, H);
    auto qs = uniform_grid(-2, 2, 0.02);
    auto c = sample_legendrian(S, qs, Box::cube(2, 2), 0.1);
    EXPECT_LE(defect(c, graph_cloud({0, 0, 1}, qs)), 1e-9);
    EXPECT_EQ(&strip_stabilization(S).node(), &square.node());
    EXPECT_THROW(strip_stabilization(square), Error);
}

TEST(GfOps, StabilizedSelectorMatches)
{
    GFExpr F = transform_T(quartic);
    GFExpr S = stabilize_hyperbolic(F);
    Vec qs;
    for (int i = 0; i <= 40; ++i)
        qs.push_back(-3 + 0.15 * i);
    auto a = selector(F, qs, Box::cube(1, 3), 0.02);
    auto b = selector(S, qs, Box::cube(3, 3), 0.2);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_NEAR(a.s_values[i], b.s_values[i], 1e-8) << qs[i];
}

TEST(GfOps, PhiMatchesTransformedConvolution)
{
    GFExpr sum = sum_gf(transform_T(square), transform_T(square));
    GFExpr moved = fiber_diffeo_sum_conv(sum);
    GFExpr target = transform_T(convolution_gf(square, square));
    ASSERT_EQ(moved.fiber_dim(), target.fiber_dim());
    Rng r;
    for (int i = 0; i < 500; ++i) {
        Vec q = r.vec(1), w = r.vec(2);
        EXPECT_NEAR(eval(moved, q, w), eval(target, q, w), 1e-12);
    }
    EXPECT_THROW(fiber_diffeo_sum_conv(square), Error);
}

TEST(GfOps, PhiRoundTripAndUnitJacobian)
{
    GFExpr F = sum_gf(transform_T(quartic), transform_T(square));
    GFExpr there = fiber_diffeo(F, FiberMap::Phi, 0, 1);
    GFExpr back = fiber_diffeo(there, FiberMap::PhiInv, 0, 1);
    Rng r;
    for (int i = 0; i < 200; ++i) {
        Vec q = r.vec(1), w = r.vec(2);
        EXPECT_NEAR(eval(back, q, w), eval(F, q, w), 1e-10);
    }
    // the map's components, read off linear coordinate functions
    GFExpr x1 = polynomial(1, 2, {{1.0, {0, 1, 0}}}), x2 = polynomial(1, 2, {{1.0, {0, 0, 1}}});
    GFExpr p1 = fiber_diffeo(x1, FiberMap::Phi, 0, 1), p2 = fiber_diffeo(x2, FiberMap::Phi, 0, 1);
    Vec w{0.3, -0.7};
    auto g1 = grad(p1, Vec{0.0}, w), g2 = grad(p2, Vec{0.0}, w);
    double det = g1.dw[0] * g2.dw[1] - g1.dw[1] * g2.dw[0];
    EXPECT_DOUBLE_EQ(std::abs(det), 1.0);
}

TEST(GfOps, PathEndpointsPointwise)
{
    Rng r;
    for (PathWeight wt : {PathWeight::Linear, PathWeight::Quadratic}) {
        GFExpr p0 = theorem327_path(square, square, 0.0, wt);
        GFExpr p1 = theorem327_path(quartic, square, 1.0, wt);
        GFExpr start = stabilize_hyperbolic(transform_T(sum_gf(square, square)));
        GFExpr end = convolution_gf(transform_T(quartic), transform_T(square));
        for (int i = 0; i < 200; ++i) {
            Vec q = r.vec(1), w = r.vec(3);
            double v = w[0], vp = w[1], V = w[2];
            EXPECT_NEAR(eval(p0, q, w), q[0] * v - 2 * v * v + V * vp, 1e-12);
            EXPECT_NEAR(eval(p0, q, w), eval(start, q, Vec{v, vp, V}), 1e-12);
            // convolution layout is (x, v1, v2) with x = V, v1 = v', v2 = v
            EXPECT_NEAR(eval(p1, q, w), eval(end, q, Vec{V, vp, v}), 1e-12);
        }
    }
    EXPECT_THROW(theorem327_path(square, square, 1.5), Error);
}

TEST(GfOps, PublishedPathContourMovesInsideTheInterval)
{
    // Oracle for F1 = F2 = q^2: on the contour v' = t v and
    // q = 2(c^2 + 1) v with c = 1 - t + t^2, hence u = q^2 / (4(c^2 + 1)).
    auto qs = uniform_grid(-2, 2, 0.02);
    for (double t : {0.25, 0.5, 0.75}) {
        double c = 1 - t + t * t;
        auto cloud = sample_legendrian(theorem327_path(square, square, t), qs, Box::cube(3, 2), 0.1);
        ASSERT_FALSE(cloud.points.empty());
        EXPECT_LE(defect(cloud, graph_cloud({0, 0, 1 / (4 * (c * c + 1))}, qs)), 5 * 0.02) << t;
        EXPECT_GT(defect(cloud, graph_cloud({0, 0, 0.125}, qs)), 0.05) << t;
    }
}

TEST(GfOps, QuadraticWeightPathHasConstantContour)
{
    auto qs = uniform_grid(-2, 2, 0.02);
    auto ref = graph_cloud({0, 0, 0.125}, qs);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        auto cloud = sample_legendrian(theorem327_path(square, square, t, PathWeight::Quadratic), qs, Box::cube(3, 2),
                                       0.1);
        EXPECT_LE(defect(cloud, ref), 5 * 0.02) << t;
    }
}
