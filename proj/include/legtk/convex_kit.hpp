#ifndef LEGTK_CONVEX_KIT_HPP
#define LEGTK_CONVEX_KIT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "legtk/error.hpp"
#include "legtk/grid_function.hpp"

namespace legtk {

/// Uniform output grid: count points starting at x0 with spacing step.
struct UniformGrid
{
    double x0 = 0.0;
    double step = 1.0;
    std::size_t count = 0;

    double x(std::size_t i) const { return x0 + static_cast<double>(i) * step; }

    static UniformGrid of(const GridFunction& g) { return {g.x0, g.step, g.size()}; }

    static UniformGrid span(double lo, double hi, std::size_t count)
    {
        if (count < 2 || !(hi > lo))
            throw Error(ErrorCode::Range, "grid span needs lo < hi and at least two points");
        return {lo, (hi - lo) / static_cast<double>(count - 1), count};
    }
};

enum class ConjugateMethod
{
    Llt,
    Brute
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct HullPoint
{
    double x;
    double y;
    std::size_t index; // position in the source grid
};

/// Lower convex hull of the finite samples, left to right.
inline std::vector<HullPoint> lower_hull(const GridFunction& f)
{
    std::vector<HullPoint> h;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.is_finite(i))
            continue;
        HullPoint p{f.x(i), f.values[i], i};
        while (h.size() >= 2) {
            const HullPoint& a = h[h.size() - 2];
            const HullPoint& b = h.back();
            // drop b when it lies on or above the chord a -> p
            if ((b.y - a.y) * (p.x - a.x) >= (p.y - a.y) * (b.x - a.x))
                h.pop_back();
            else
                break;
        }
        h.push_back(p);
    }
    return h;
}

inline double hull_slope(const std::vector<HullPoint>& h, std::size_t j)
{
    return (h[j + 1].y - h[j].y) / (h[j + 1].x - h[j].x);
}

/// sup over x beyond the edge of p*x - tail(x). Returns -inf when the
/// supremum sits at the edge itself.
inline double tail_sup(const Polynomial1D& tail, Side side, double p, double edge)
{
    int d = tail.degree();
    double sign = side == Side::Right ? 1.0 : -1.0;
    if (d <= 1) {
        double slope = d == 1 ? tail.coefficients[1] : 0.0;
        if (p == slope)
            return -(d >= 0 ? tail.coefficients[0] : 0.0);
        return -kInf;
    }
    // tail'(x) = p on the outer side, by bisection over an expanding bracket
    auto g = [&](double x) { return tail.derivative(x) - p; };
    double a = edge, b = edge + sign;
    double ga = g(a);
    if (ga * sign >= 0.0)
        return -kInf; // objective already decreasing outward
    for (int it = 0; it < 200 && g(b) * sign < 0.0; ++it)
        b = edge + 2.0 * (b - edge);
    if (g(b) * sign < 0.0)
        return -kInf;
    for (int it = 0; it < 200 && std::abs(b - a) > 1e-14 * (1.0 + std::abs(a)); ++it) {
        double m = 0.5 * (a + b);
        (g(m) * sign < 0.0 ? a : b) = m;
    }
    double x = 0.5 * (a + b);
    return p * x - tail.value(x);
}

inline void require_conjugable(const GridFunction& f, const UniformGrid& p)
{
    if (!f.tail || f.tail->index == 0)
        return;
    std::string sides;
    for (Side s : {Side::Left, Side::Right}) {
        const Polynomial1D& poly = f.tail->side(s);
        bool bad = poly.degree() >= 2 &&
                   (!f.tail->conjugate_finite(s, p.x(0)) || !f.tail->conjugate_finite(s, p.x(p.count - 1)));
        if (bad) {
            if (!sides.empty())
                sides += ", ";
            sides += s == Side::Left ? "left" : "right";
        }
    }
    if (sides.empty())
        sides = "left, right";
    throw Error(ErrorCode::ConjugateNotFinite,
                "tail index " + std::to_string(f.tail->index) + " on side(s): " + sides);
}

} // namespace detail

/// Discrete Legendre-Fenchel transform f*(p) = sup_x { p x - f(x) }.
/// The linear-time path walks a pointer along the lower hull; the brute path
/// scans every sample. With a tail model the sup also runs over the tails:
/// an unbounded side masks the entry to +inf, a bounded one is maximized
/// beyond the edge. Without a tail the sup is taken over the grid.
inline GridFunction lf_transform(const GridFunction& f, std::optional<UniformGrid> slopes = std::nullopt,
                                 ConjugateMethod method = ConjugateMethod::Llt)
{
    UniformGrid pg = slopes ? *slopes : UniformGrid::of(f);
    if (pg.count == 0)
        throw Error(ErrorCode::Range, "empty slope grid");
    detail::require_conjugable(f, pg);

    GridFunction out(pg.x0, pg.step, std::vector<double>(pg.count, detail::kInf));
    std::vector<detail::HullPoint> hull = detail::lower_hull(f);
    if (hull.empty()) {
        out.finite.assign(pg.count, false);
        return out;
    }
    const std::size_t first = hull.front().index, last = hull.back().index;

    std::size_t j = 0;
    for (std::size_t k = 0; k < pg.count; ++k) {
        double p = pg.x(k);
        double best;
        if (method == ConjugateMethod::Llt) {
            if (k > 0 && p < pg.x(k - 1))
                j = 0;
            while (j + 1 < hull.size() && detail::hull_slope(hull, j) <= p)
                ++j;
            best = p * hull[j].x - hull[j].y;
        } else {
            best = -detail::kInf;
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (!f.is_finite(i))
                    continue;
                double v = p * f.x(i) - f.values[i];
                best = std::max(best, v);
            }
        }
        if (f.tail) {
            bool unbounded = false;
            for (Side sd : {Side::Left, Side::Right}) {
                if (!f.tail->conjugate_finite(sd, p)) {
                    unbounded = true;
                    break;
                }
                best = std::max(best, detail::tail_sup(f.tail->side(sd), sd, p, f.x(sd == Side::Left ? first : last)));
            }
            if (unbounded) {
                out.finite[k] = false;
                continue;
            }
        }
        out.values[k] = best;
    }
    return out;
}

/// Infimal convolution (f1 [] f2)(q) = inf_v { f1(v) + f2(q - v) }.
/// Brute: v over the samples of f1, f2 read piecewise-linearly (tail model
/// outside its grid). Convex: exact for the piecewise-linear hulls, by
/// merging hull edges in slope order (the conjugate identity
/// (f1 [] f2)* = f1* + f2* for piecewise-linear convex functions).
enum class InfConvMethod
{
    Brute,
    Convex
};

inline GridFunction inf_conv(const GridFunction& f1, const GridFunction& f2, const UniformGrid& qg,
                             InfConvMethod method = InfConvMethod::Brute, std::vector<std::string>* warnings = nullptr)
{
    GridFunction out(qg.x0, qg.step, std::vector<double>(qg.count, detail::kInf));
    if (method == InfConvMethod::Convex) {
        auto h1 = detail::lower_hull(f1), h2 = detail::lower_hull(f2);
        if (h1.empty() || h2.empty()) {
            out.finite.assign(qg.count, false);
            return out;
        }
        std::vector<std::pair<double, double>> verts{{h1[0].x + h2[0].x, h1[0].y + h2[0].y}};
        std::size_t a = 0, b = 0;
        while (a + 1 < h1.size() || b + 1 < h2.size()) {
            bool take_a = b + 1 >= h2.size() ||
                          (a + 1 < h1.size() && detail::hull_slope(h1, a) <= detail::hull_slope(h2, b));
            double dx, dy;
            if (take_a) {
                dx = h1[a + 1].x - h1[a].x;
                dy = h1[a + 1].y - h1[a].y;
                ++a;
            } else {
                dx = h2[b + 1].x - h2[b].x;
                dy = h2[b + 1].y - h2[b].y;
                ++b;
            }
            verts.emplace_back(verts.back().first + dx, verts.back().second + dy);
        }
        for (std::size_t k = 0; k < qg.count; ++k) {
            double q = qg.x(k);
            double tol = 1e-12 * (1.0 + std::abs(q));
            if (q < verts.front().first - tol || q > verts.back().first + tol) {
                out.finite[k] = false;
                continue;
            }
            auto it = std::lower_bound(verts.begin(), verts.end(), q,
                                       [](const std::pair<double, double>& v, double x) { return v.first < x; });
            if (it == verts.begin()) {
                out.values[k] = it->second;
            } else if (it == verts.end()) {
                out.values[k] = verts.back().second;
            } else {
                auto prev = it - 1;
                double t = (q - prev->first) / (it->first - prev->first);
                out.values[k] = (1 - t) * prev->second + t * it->second;
            }
        }
        return out;
    }

    std::size_t uncovered = 0;
    for (std::size_t k = 0; k < qg.count; ++k) {
        double q = qg.x(k), best = detail::kInf;
        for (std::size_t i = 0; i < f1.size(); ++i) {
            if (!f1.is_finite(i))
                continue;
            double y = q - f1.x(i);
            double tol = 1e-9 * f2.step;
            bool inside = y >= f2.x0 - tol && y <= f2.x_last() + tol;
            if (!inside && !f2.tail)
                continue;
            if (inside)
                y = std::clamp(y, f2.x0, f2.x_last());
            double v2 = f2.linear(y);
            best = std::min(best, f1.values[i] + v2);
        }
        if (std::isinf(best)) {
            out.finite[k] = false;
            ++uncovered;
        } else {
            out.values[k] = best;
        }
    }
    if (uncovered && warnings)
        warnings->push_back(std::to_string(uncovered) + " output nodes not covered by the input grids");
    return out;
}

/// f** via two discrete conjugates. The slope grid spans the hull slopes
/// with `slope_count` points (the input size when zero).
inline GridFunction biconjugate(const GridFunction& f, std::size_t slope_count = 0)
{
    auto hull = detail::lower_hull(f);
    if (hull.size() < 2)
        throw Error(ErrorCode::Range, "biconjugate needs at least two finite samples");
    double smin = detail::hull_slope(hull, 0), smax = detail::hull_slope(hull, hull.size() - 2);
    if (smax - smin < 1e-12)
        smax = smin + 1.0;
    GridFunction bare = f;
    bare.tail.reset();
    UniformGrid pg = UniformGrid::span(smin, smax, slope_count ? slope_count : std::max<std::size_t>(f.size(), 2));
    GridFunction fs = lf_transform(bare, pg);
    return lf_transform(fs, UniformGrid::of(f));
}

/// Legendre transform of a simple function by inverting its derivative.
struct LegendreSimple
{
    std::function<std::pair<double, double>(double)> f; // value and derivative
    double lo = 0.0;
    double hi = 0.0;
    bool increasing = true;
    double slope_lo = 0.0; // derivative range, ascending
    double slope_hi = 0.0;

    /// (f')^{-1}(q) by monotone bisection.
    double inverse_slope(double q) const
    {
        if (q < slope_lo || q > slope_hi)
            throw Error(ErrorCode::Range, "slope " + std::to_string(q) + " outside the derivative range [" +
                                              std::to_string(slope_lo) + ", " + std::to_string(slope_hi) + "]");
        double a = lo, b = hi;
        for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
            double m = 0.5 * (a + b);
            double d = f(m).second;
            if ((d < q) == increasing)
                a = m;
            else
                b = m;
        }
        return 0.5 * (a + b);
    }

    double operator()(double q) const
    {
        double v = inverse_slope(q);
        return q * v - f(v).first;
    }

    /// (f^t)'(q) = (f')^{-1}(q).
    double derivative(double q) const { return inverse_slope(q); }
};

namespace detail {

inline LegendreSimple make_legendre(std::function<std::pair<double, double>(double)> fn, double lo, double hi,
                                    const std::vector<double>& xs, const std::vector<double>& slopes)
{
    bool inc = slopes.back() > slopes.front();
    for (std::size_t i = 0; i + 1 < slopes.size(); ++i) {
        double d = slopes[i + 1] - slopes[i];
        if (!(inc ? d > 0.0 : d < 0.0))
            throw Error(ErrorCode::NotSimple, "derivative not strictly monotone on [" + std::to_string(xs[i]) + ", " +
                                                  std::to_string(xs[i + 1]) + "]");
    }
    LegendreSimple L;
    L.f = std::move(fn);
    L.lo = lo;
    L.hi = hi;
    L.increasing = inc;
    L.slope_lo = std::min(slopes.front(), slopes.back());
    L.slope_hi = std::max(slopes.front(), slopes.back());
    return L;
}

} // namespace detail

inline LegendreSimple legendre_simple(const GridFunction& g)
{
    if (g.size() < 3)
        throw Error(ErrorCode::Range, "legendre_simple needs at least three samples");
    std::vector<double> xs(g.size()), s(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.is_finite(i))
            throw Error(ErrorCode::NotSimple, "infinite sample at x=" + std::to_string(g.x(i)));
        xs[i] = g.x(i);
        s[i] = g.node_slope(i);
    }
    return detail::make_legendre([g](double x) { return g.evaluate(x); }, g.x0, g.x_last(), xs, s);
}

inline LegendreSimple legendre_simple(const Polynomial1D& p, double lo, double hi, std::size_t samples = 10001)
{
    if (samples < 3 || !(hi > lo))
        throw Error(ErrorCode::Range, "legendre_simple needs lo < hi and at least three samples");
    std::vector<double> xs(samples), s(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(samples - 1);
        s[i] = p.derivative(xs[i]);
    }
    return detail::make_legendre([p](double x) { return std::make_pair(p.value(x), p.derivative(x)); }, lo, hi, xs, s);
}

} // namespace legtk

#endif // LEGTK_CONVEX_KIT_HPP
