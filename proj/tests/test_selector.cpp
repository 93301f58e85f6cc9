#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "legtk/minmax.hpp"

using namespace legtk;

namespace {

// Fiber functions in one or two variables; the single base variable is unused.
GFExpr fiber1(std::vector<double> c)
{
    std::vector<Monomial> terms;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i] != 0.0)
            terms.push_back({c[i], {0, static_cast<int>(i)}});
    return polynomial(1, 1, terms);
}

GFExpr saddle2() { return polynomial(1, 2, {{1.0, {0, 2, 0}}, {-1.0, {0, 0, 2}}}); }

double dense_extreme(const std::function<double(double)>& f, double lo, double hi, bool want_max)
{
    double best = want_max ? -INFINITY : INFINITY;
    for (int i = 0; i <= 2000000; ++i) {
        double x = lo + (hi - lo) * i / 2000000.0;
        best = want_max ? std::max(best, f(x)) : std::min(best, f(x));
    }
    return best;
}

const Vec q0{0.0};

} // namespace

TEST(Persistence, ParabolaHasOneEssentialComponent)
{
    CubicalGrid g;
    g.shape = {41};
    for (int i = 0; i < 41; ++i) {
        double w = -2 + 0.1 * i;
        g.values.push_back(w * w);
    }
    for (Field fld : {Field::Z2, Field::Q}) {
        auto pd = relative_sublevel_persistence(g, -INFINITY, fld);
        auto c = pd.essential_counts(1);
        EXPECT_EQ(c[0], 1);
        EXPECT_EQ(c[1], 0);
        for (const Bar& b : pd.bars)
            if (b.essential)
                EXPECT_NEAR(b.birth, 0.0, 1e-12);
    }
}

TEST(Persistence, DoubleWellPairsSecondMinimumWithBump)
{
    CubicalGrid g;
    g.shape = {81};
    for (int i = 0; i < 81; ++i) {
        double w = -2 + 0.05 * i;
        g.values.push_back(std::pow(w, 4) - 3 * w * w + 0.1 * w);
    }
    auto pd = relative_sublevel_persistence(g, -INFINITY, Field::Z2);
    int finite = 0;
    for (const Bar& b : pd.bars)
        if (!b.essential) {
            ++finite;
            EXPECT_EQ(b.degree, 0);
            EXPECT_NEAR(b.death, 0.0, 0.01); // the bump at w = 0
        }
    EXPECT_EQ(finite, 1);
}

TEST(Persistence, SaddleRelativeClassInDegreeOne)
{
    CubicalGrid g;
    g.shape = {41, 41};
    for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 41; ++j) {
            double a = -2 + 0.1 * i, b = -2 + 0.1 * j;
            g.values.push_back(a * a - b * b);
        }
    for (Field fld : {Field::Z2, Field::Q}) {
        auto pd = relative_sublevel_persistence(g, -1.0, fld);
        auto c = pd.essential_counts(2);
        EXPECT_EQ(c, (std::vector<int>{0, 1, 0})) << to_string(fld);
    }
}

TEST(Persistence, ConstantCubeIsContractible)
{
    CubicalGrid g;
    g.shape = {3, 3, 3};
    g.values.assign(27, 1.0);
    auto pd = relative_sublevel_persistence(g, -INFINITY, Field::Z2);
    EXPECT_EQ(pd.cells, 125u);
    EXPECT_EQ(pd.essential_counts(3), (std::vector<int>{1, 0, 0, 0}));
}

TEST(CriticalValues, ConcaveDoubleBump)
{
    auto s = critical_values_1d(fiber1({0, 0, 3, 0, -1}), q0, -3, 3, 0.01);
    ASSERT_EQ(s.values.size(), 2u);
    EXPECT_NEAR(s.values[0], 0.0, 1e-12);
    EXPECT_NEAR(s.values[1], 2.25, 1e-12);
    EXPECT_EQ(s.multiplicity, (std::vector<int>{1, 2}));
    EXPECT_EQ(s.morse_indices[1], (std::vector<int>{1, 1}));
    EXPECT_EQ(s.morse_indices[0], (std::vector<int>{0}));
}

TEST(CriticalValues, ParabolaAndDoubleWell)
{
    auto p = critical_values_1d(fiber1({0, 0, 1}), q0, -3, 3, 0.01);
    ASSERT_EQ(p.values.size(), 1u);
    EXPECT_NEAR(p.values[0], 0.0, 1e-15);

    auto d = critical_values_1d(fiber1({0, 0, -3, 0, 1}), q0, -3, 3, 0.01);
    ASSERT_EQ(d.values.size(), 2u);
    EXPECT_NEAR(d.values[0], -2.25, 1e-12);
    EXPECT_EQ(d.multiplicity[0], 2);
    EXPECT_NEAR(d.values[1], 0.0, 1e-12);
    EXPECT_LT(2 * 2.25, d.bound_C);
}

TEST(CriticalValues, BoundaryRootFlagged)
{
    auto s = critical_values_1d(fiber1({0, 0, 1}), q0, 0, 1, 0.1);
    EXPECT_FALSE(s.flags.empty());
}

TEST(Minmax, ParabolaIndexZero)
{
    auto r = minmax(fiber1({0, 0, 1}), q0, 0, Box::cube(1, 3), 0.05);
    EXPECT_EQ(r.method, MinmaxMethod::Minimum);
    EXPECT_DOUBLE_EQ(r.value, 0.0);
}

TEST(Minmax, AlmostConcaveQuarticIndexOne)
{
    GFExpr f = fiber1({0, 0, 3, 0, -1});
    double oracle = dense_extreme([](double w) { return -std::pow(w, 4) + 3 * w * w; }, -3, 3, true);
    auto fast = minmax(f, q0, 1, Box::cube(1, 3), 0.05);
    EXPECT_EQ(fast.method, MinmaxMethod::Maximum);
    EXPECT_NEAR(fast.value, 2.25, 1e-12);
    EXPECT_NEAR(fast.value, oracle, 1e-9);

    MinmaxOptions opt;
    opt.force_homology = true;
    for (Field fld : {Field::Z2, Field::Q}) {
        opt.field = fld;
        auto hom = minmax(f, q0, 1, Box::cube(1, 3), 0.05, opt);
        EXPECT_EQ(hom.method, MinmaxMethod::Homology);
        EXPECT_NEAR(hom.value, 2.25, 1e-12);
        EXPECT_NEAR(hom.birth, 2.25, 0.05);
    }
}

TEST(Minmax, HyperbolicSaddle)
{
    for (Field fld : {Field::Z2, Field::Q}) {
        MinmaxOptions opt;
        opt.field = fld;
        auto r = minmax(saddle2(), q0, 1, Box::cube(2, 2), 0.1, opt);
        EXPECT_EQ(r.method, MinmaxMethod::Homology);
        EXPECT_NEAR(r.value, 0.0, 1e-12);
    }
}

TEST(Minmax, WrongIndexIsReportedNotGuessed)
{
    try {
        GFExpr bowl = polynomial(1, 2, {{1.0, {0, 2, 0}}, {1.0, {0, 0, 2}}});
        minmax(bowl, q0, 1, Box::cube(2, 2), 0.1);
        FAIL() << "expected homology failure";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HomologyNotSimple);
    }
}

TEST(Minmax, BoxExpandedUntilBoundaryGradientExceedsBound)
{
    MinmaxOptions opt;
    opt.bound = 5.0;
    auto r = minmax(fiber1({0, 0, 1}), q0, 0, Box::cube(1, 1), 0.05, opt);
    EXPECT_EQ(r.expansions, 2);
    EXPECT_FALSE(r.flags.empty());
    EXPECT_GT(r.box.hi[0], 2.5);

    opt.bound = 1e6;
    EXPECT_THROW(minmax(fiber1({0, 0, 1}), q0, 0, Box::cube(1, 1), 0.05, opt), Error);
}

TEST(Minmax, FastPathsAgreeWithHomologyOnRandomInstances)
{
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int trial = 0; trial < 8; ++trial) {
        double sign = trial % 2 == 0 ? 1.0 : -1.0; // almost-convex, then almost-concave
        std::vector<double> c{U(rng), U(rng), sign * (1 + U(rng)), U(rng), sign * (1.5 + 0.5 * U(rng))};
        GFExpr f = fiber1(c);
        int iota = sign > 0 ? 0 : 1;
        auto fast = minmax(f, q0, iota, Box::cube(1, 4), 0.02);
        MinmaxOptions opt;
        opt.force_homology = true;
        auto hom = minmax(f, q0, iota, Box::cube(1, 4), 0.02, opt);
        EXPECT_NEAR(fast.value, hom.value, 1e-8) << "trial " << trial;
        auto poly = [&](double w) {
            double s = 0, p = 1;
            for (double a : c) {
                s += a * p;
                p *= w;
            }
            return s;
        };
        EXPECT_NEAR(fast.value, dense_extreme(poly, -4, 4, sign < 0), 1e-8) << "trial " << trial;
    }
}

TEST(Minmax, DirectSumOfParabolaAndNegativeParabola)
{
    auto rep = minmax_direct_sum_check(fiber1({0, 0, 1}), 0, Box::cube(1, 2), fiber1({0, 0, -1}), 1,
                                       Box::cube(1, 2), q0, 0.05);
    EXPECT_EQ(rep.method, MinmaxMethod::Homology);
    EXPECT_NEAR(rep.s_sum, 0.0, 1e-12);
    EXPECT_LT(rep.gap, 1e-12);
}

TEST(Minmax, DirectSumConcaveBumpWithParabola)
{
    auto rep = minmax_direct_sum_check(fiber1({0, 0, 3, 0, -1}), 1, Box::cube(1, 3), fiber1({0, 0, 1}), 0,
                                       Box::cube(1, 3), q0, 0.05);
    EXPECT_NEAR(rep.s1, 2.25, 1e-12);
    EXPECT_NEAR(rep.s_sum, 2.25, 1e-10);
    EXPECT_LT(rep.gap, 1e-10);
}

TEST(Minmax, DirectSumOfTwoConcaveBumps)
{
    GFExpr f = fiber1({0, 0, 3, 0, -1});
    auto rep = minmax_direct_sum_check(f, 1, Box::cube(1, 3), f, 1, Box::cube(1, 3), q0, 0.05);
    EXPECT_NEAR(rep.s_sum, 4.5, 1e-10);

    MinmaxOptions opt;
    opt.force_homology = true;
    auto hom = minmax_direct_sum_check(f, 1, Box::cube(1, 3), f, 1, Box::cube(1, 3), q0, 0.05, opt);
    EXPECT_EQ(hom.method, MinmaxMethod::Homology);
    EXPECT_NEAR(hom.s_sum, 4.5, 1e-10);
}

TEST(Minmax, GenuineSaddleInTwoFibers)
{
    // concave bump (+) convex well: index 1 of 2, a real saddle of the sum
    GFExpr f1 = fiber1({0, 0, 3, 0, -1});
    GFExpr f2 = fiber1({0, 0, -3, 0, 1});
    for (Field fld : {Field::Z2, Field::Q}) {
        MinmaxOptions opt;
        opt.field = fld;
        auto rep = minmax_direct_sum_check(f1, 1, Box::cube(1, 3), f2, 0, Box::cube(1, 3), q0, 0.1, opt);
        EXPECT_EQ(rep.method, MinmaxMethod::Homology);
        EXPECT_NEAR(rep.s_sum, 0.0, 1e-10);
        EXPECT_LT(rep.gap, 1e-10);
    }
}

TEST(Selector, TransformedQuarticAtOrigin)
{
    GFExpr F = transform_T(poly1d({0, 0, -3, 0, 1}));
    auto curve = selector(F, Vec{0.0}, Box::cube(1, 3), 0.02);
    double oracle = dense_extreme([](double v) { return -std::pow(v, 4) + 3 * v * v; }, -3, 3, true);
    EXPECT_NEAR(curve.s_values[0], 2.25, 1e-10);
    EXPECT_NEAR(curve.s_values[0], oracle, 1e-9);
}

TEST(Selector, ConjugateOfShiftedParabola)
{
    GFExpr F = transform_T(poly1d({0, 3, 1}));
    Vec qs;
    for (int i = 0; i <= 100; ++i)
        qs.push_back(-5 + 0.1 * i);
    auto curve = selector(F, qs, Box::cube(1, 8), 0.05);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_NEAR(curve.s_values[i], std::pow(qs[i] - 3, 2) / 4, 1e-6) << qs[i];
    EXPECT_TRUE(curve.continuous);
}

TEST(Selector, SumIsAdditive)
{
    GFExpr Fa = transform_T(poly1d({0, 0, -3, 0, 1}));
    GFExpr Fb = transform_T(poly1d({0, 0, 1}));
    Vec qs;
    for (int i = 0; i <= 20; ++i)
        qs.push_back(-2 + 0.2 * i);
    Box b1 = Box::cube(1, 3);
    auto sa = selector(Fa, qs, b1, 0.02);
    auto sb = selector(Fb, qs, b1, 0.02);
    auto sab = selector(sum_gf(Fa, Fb), qs, Box::cube(2, 3), 0.05);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_NEAR(sab.s_values[i], sa.s_values[i] + sb.s_values[i], 1e-6) << qs[i];
}

TEST(Selector, ValuesAreCriticalValues)
{
    GFExpr F = transform_T(poly1d({0, 0, -3, 0, 1}));
    Vec qs;
    for (int i = 0; i <= 40; ++i)
        qs.push_back(-4 + 0.2 * i);
    auto curve = selector(F, qs, Box::cube(1, 3), 0.02);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_TRUE(curve.critical[i].contains(curve.s_values[i], 1e-10));
}

TEST(Selector, StabilizationInvariance)
{
    GFExpr F = transform_T(poly1d({0, 0, -3, 0, 1}));
    Eigen::MatrixXd H(2, 2);
    H << 1, 0, 0, -1;
    GFExpr S = stabilize(F, H);
    ASSERT_EQ(as_decomposition(S)->index, 2);
    Vec qs;
    for (int i = 0; i <= 100; ++i)
        qs.push_back(-3 + 0.06 * i);
    auto a = selector(F, qs, Box::cube(1, 3), 0.02);
    auto b = selector(S, qs, Box::cube(3, 3), 0.2);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_NEAR(a.s_values[i], b.s_values[i], 1e-8) << qs[i];
    for (auto m : b.method)
        EXPECT_EQ(m, MinmaxMethod::Homology);
}

TEST(Selector, FieldsAgree)
{
    GFExpr F = sum_gf(transform_T(poly1d({0, 0, -3, 0, 1})), transform_T(poly1d({0, 1, -2, 0, 1})));
    Vec qs{-1.0, -0.3, 0.0, 0.4, 1.1};
    SelectorOptions z, q;
    z.minmax.force_homology = q.minmax.force_homology = true;
    q.minmax.field = Field::Q;
    auto a = selector(F, qs, Box::cube(2, 3), 0.1, z);
    auto b = selector(F, qs, Box::cube(2, 3), 0.1, q);
    for (std::size_t i = 0; i < qs.size(); ++i)
        EXPECT_EQ(a.s_values[i], b.s_values[i]);
}

TEST(Selector, UntrackedIndexNeedsCaller)
{
    GFExpr f = polynomial(1, 1, {{1.0, {1, 1}}, {-1.0, {0, 3}}});
    try {
        selector(f, Vec{0.5}, Box::cube(1, 2), 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotTracked);
    }
}

TEST(Selector, NoFiberIsTheFunctionItself)
{
    auto curve = selector(poly1d({1, 0, 1}), Vec{0.0, 0.5, 1.0}, Box{}, 0.1);
    EXPECT_DOUBLE_EQ(curve.s_values[2], 2.0);
    EXPECT_EQ(curve.method[0], MinmaxMethod::Direct);
}
