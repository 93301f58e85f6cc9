#ifndef LEGTK_MINMAX_HPP
#define LEGTK_MINMAX_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "legtk/cubical_persistence.hpp"
#include "legtk/gf_ops.hpp"
#include "legtk/legendrian_cloud.hpp"
#include "legtk/star_condition.hpp"

namespace legtk {

struct CriticalPoint
{
    Vec w;
    double value = 0.0;
    int morse_index = 0;
    bool degenerate = false;
    double grad_q_norm = 0.0;
};

struct CriticalValueSet
{
    std::vector<double> values;     // distinct, ascending
    std::vector<int> multiplicity;  // per value
    std::vector<std::vector<int>> morse_indices; // per value, one entry per point
    std::vector<CriticalPoint> points;
    double bound_C = 1.0; // every value lies in (-C, C)
    std::vector<std::string> flags;

    bool empty() const { return values.empty(); }

    /// Index of the value nearest to v, or npos when the set is empty.
    std::size_t nearest(double v) const
    {
        std::size_t best = static_cast<std::size_t>(-1);
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < values.size(); ++i)
            if (std::abs(values[i] - v) < bd) {
                bd = std::abs(values[i] - v);
                best = i;
            }
        return best;
    }

    bool contains(double v, double tol) const
    {
        std::size_t i = nearest(v);
        return i != static_cast<std::size_t>(-1) && std::abs(values[i] - v) <= tol;
    }
};

namespace detail {

inline CriticalPoint classify(const GFExpr& f, const Vec& q, const Vec& w)
{
    CriticalPoint cp;
    cp.w = w;
    Gradient g = grad(f, q, w);
    cp.value = g.value;
    double s = 0.0;
    for (double x : g.dq)
        s += x * x;
    cp.grad_q_norm = std::sqrt(s);
    Eigen::MatrixXd H = fiber_hessian(f, q, w);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    double scale = 1.0 + ev.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < 0)
            ++cp.morse_index;
        if (std::abs(ev(i)) < 1e-7 * scale)
            cp.degenerate = true;
    }
    return cp;
}

inline CriticalValueSet assemble(std::vector<CriticalPoint> pts, std::vector<std::string> flags)
{
    std::sort(pts.begin(), pts.end(), [](const CriticalPoint& a, const CriticalPoint& b) { return a.value < b.value; });
    CriticalValueSet s;
    s.flags = std::move(flags);
    double vmax = 0.0;
    for (const CriticalPoint& p : pts) {
        vmax = std::max(vmax, std::abs(p.value));
        if (!s.values.empty() && std::abs(p.value - s.values.back()) <= 1e-9 * (1.0 + std::abs(p.value))) {
            ++s.multiplicity.back();
            s.morse_indices.back().push_back(p.morse_index);
        } else {
            s.values.push_back(p.value);
            s.multiplicity.push_back(1);
            s.morse_indices.push_back({p.morse_index});
        }
        if (p.degenerate)
            s.flags.push_back("degenerate critical point at value " + std::to_string(p.value));
    }
    s.points = std::move(pts);
    s.bound_C = 2.0 * vmax + 1.0;
    return s;
}

} // namespace detail

/// Critical values of w -> F(q, w) for one fiber variable: sign changes of
/// the derivative on the grid, bisected to 1e-10.
inline CriticalValueSet critical_values_1d(const GFExpr& f, const Vec& q, double lo, double hi, double step)
{
    if (f.fiber_dim() != 1)
        throw Error(ErrorCode::Arity, "critical_values_1d needs exactly one fiber variable");
    if (!(step > 0.0) || !(hi > lo))
        throw Error(ErrorCode::Range, "critical_values_1d needs lo < hi and a positive step");
    auto deriv = [&](double w) {
        detail::Buf g{};
        grad_w(f, q.data(), &w, g.data());
        return g[0];
    };
    const auto count = static_cast<std::size_t>(std::ceil((hi - lo) / step - 1e-9));
    const double h = (hi - lo) / static_cast<double>(count);
    std::vector<double> xs(count + 1), ds(count + 1);
    double scale = 0.0;
    for (std::size_t i = 0; i <= count; ++i) {
        xs[i] = i == count ? hi : lo + static_cast<double>(i) * h;
        ds[i] = deriv(xs[i]);
        scale = std::max(scale, std::abs(ds[i]));
    }
    std::vector<std::string> flags;
    const double tiny = 1e-12 * (1.0 + scale);
    if (std::abs(ds.front()) <= tiny || std::abs(ds.back()) <= tiny)
        flags.push_back("boundary sign change unresolved");

    std::vector<CriticalPoint> pts;
    for (std::size_t i = 0; i < count; ++i) {
        double a = xs[i], b = xs[i + 1], fa = ds[i], fb = ds[i + 1];
        double root;
        if (fa == 0.0) {
            root = a;
        } else if (fa * fb < 0.0) {
            while (b - a > 1e-10) {
                double m = 0.5 * (a + b), fm = deriv(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if ((fm < 0) == (fa < 0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            root = 0.5 * (a + b);
        } else {
            continue;
        }
        pts.push_back(detail::classify(f, q, Vec{root}));
    }
    if (ds.back() == 0.0)
        pts.push_back(detail::classify(f, q, Vec{hi}));
    return detail::assemble(std::move(pts), std::move(flags));
}

/// Critical values for 1 to 3 fiber variables. One variable uses bisection;
/// more use the lattice scan and Newton polish of the fiber solver.
inline CriticalValueSet critical_values(const GFExpr& f, const Vec& q, const Box& box, double step)
{
    const std::size_t k = f.fiber_dim();
    if (k == 1)
        return critical_values_1d(f, q, box.lo[0], box.hi[0], step);
    FiberRoots fr = solve_fiber_critical(f, q, box, step, step);
    std::vector<CriticalPoint> pts;
    for (const Vec& w : fr.roots)
        pts.push_back(detail::classify(f, q, w));
    auto flags = fr.flags;
    if (fr.unresolved_cells)
        flags.push_back("unresolved cell");
    return detail::assemble(std::move(pts), std::move(flags));
}

enum class MinmaxMethod
{
    Direct,   // no fiber variables: the value itself
    Minimum,  // index 0
    Maximum,  // index k
    Homology  // cubical relative persistence
};

inline const char* to_string(MinmaxMethod m)
{
    switch (m) {
    case MinmaxMethod::Direct: return "direct";
    case MinmaxMethod::Minimum: return "minimum";
    case MinmaxMethod::Maximum: return "maximum";
    case MinmaxMethod::Homology: return "homology";
    }
    return "unknown";
}

struct MinmaxOptions
{
    Field field = Field::Z2;
    bool force_homology = false;
    int max_expansions = 3;
    double bound = -1.0; // boundary gradient bound B; negative takes it from metadata
    std::size_t max_cells = 4'000'000;
    std::size_t max_cells_rational = 250'000;
};

struct MinmaxResult
{
    double value = 0.0;
    int index = 0;
    MinmaxMethod method = MinmaxMethod::Direct;
    CriticalValueSet critical;
    std::optional<PersistenceDiagram> diagram;
    Box box;
    int expansions = 0;
    double step_used = 0.0;
    double birth = std::numeric_limits<double>::quiet_NaN(); // raw grid birth before snapping
    std::vector<std::string> flags;
};

namespace detail {

/// Smallest |grad_w F| over the boundary shell of the box, sampled at `step`.
inline double boundary_gradient_min(const GFExpr& f, const Vec& q, const Box& box, double step)
{
    const std::size_t k = box.dim();
    std::vector<std::size_t> cnt(k);
    for (std::size_t i = 0; i < k; ++i)
        cnt[i] = static_cast<std::size_t>(std::ceil((box.hi[i] - box.lo[i]) / step - 1e-9)) + 1;
    double best = std::numeric_limits<double>::infinity();
    Vec w(k);
    Buf g{};
    std::vector<std::size_t> idx(k, 0);
    for (;;) {
        bool on_shell = false;
        for (std::size_t i = 0; i < k; ++i) {
            double t = cnt[i] > 1 ? static_cast<double>(idx[i]) / static_cast<double>(cnt[i] - 1) : 0.0;
            w[i] = box.lo[i] + t * (box.hi[i] - box.lo[i]);
            if (idx[i] == 0 || idx[i] + 1 == cnt[i])
                on_shell = true;
        }
        if (on_shell) {
            grad_w(f, q.data(), w.data(), g.data());
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i)
                s += g[i] * g[i];
            best = std::min(best, std::sqrt(s));
        }
        std::size_t a = k;
        while (a-- > 0) {
            if (++idx[a] < cnt[a])
                break;
            idx[a] = 0;
        }
        if (a == static_cast<std::size_t>(-1))
            break;
    }
    return best;
}

inline CubicalGrid sample_box(const GFExpr& f, const Vec& q, const Box& box, double step,
                              std::vector<double>& spacing)
{
    const std::size_t k = box.dim();
    CubicalGrid g;
    g.shape.resize(k);
    spacing.resize(k);
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) {
        g.shape[i] = static_cast<std::size_t>(std::ceil((box.hi[i] - box.lo[i]) / step - 1e-9)) + 1;
        spacing[i] = (box.hi[i] - box.lo[i]) / static_cast<double>(g.shape[i] - 1);
        total *= g.shape[i];
    }
    g.values.resize(total);
    std::vector<std::size_t> stride(k, 1);
    for (std::size_t i = k - 1; i-- > 0;)
        stride[i] = stride[i + 1] * g.shape[i + 1];
    Vec w(k);
    for (std::size_t lin = 0; lin < total; ++lin) {
        std::size_t rem = lin;
        for (std::size_t i = 0; i < k; ++i) {
            w[i] = box.lo[i] + static_cast<double>(rem / stride[i]) * spacing[i];
            rem %= stride[i];
        }
        g.values[lin] = eval(f, q, w);
    }
    return g;
}

inline std::size_t cell_count(const Box& box, double step)
{
    std::size_t total = 1;
    for (std::size_t i = 0; i < box.dim(); ++i)
        total *= 2 * (static_cast<std::size_t>(std::ceil((box.hi[i] - box.lo[i]) / step - 1e-9)) + 1) - 1;
    return total;
}

inline std::string describe(const std::vector<int>& counts)
{
    std::ostringstream os;
    os << "essential ranks (";
    for (std::size_t i = 0; i < counts.size(); ++i)
        os << (i ? "," : "") << counts[i];
    os << ")";
    return os.str();
}

} // namespace detail

/// Min-max of w -> F(q, w) for homological index `iota`.
inline MinmaxResult minmax(const GFExpr& f, const Vec& q, int iota, const Box& box, double step,
                           const MinmaxOptions& opt = {})
{
    const std::size_t k = f.fiber_dim();
    if (q.size() != f.base_dim())
        throw Error(ErrorCode::Arity, "base point has the wrong dimension");
    MinmaxResult res;
    res.index = iota;
    res.step_used = step;
    if (k == 0) {
        res.value = eval(f, q, Vec{});
        res.method = MinmaxMethod::Direct;
        return res;
    }
    if (k > 3)
        throw Error(ErrorCode::Arity, "min-max supports at most 3 fiber variables");
    if (iota < 0 || static_cast<std::size_t>(iota) > k)
        throw Error(ErrorCode::Range, "index " + std::to_string(iota) + " outside [0, " + std::to_string(k) + "]");
    if (box.dim() != k)
        throw Error(ErrorCode::Arity, "fiber box dimension does not match the fiber");
    if (!(step > 0.0))
        throw Error(ErrorCode::Range, "step must be positive");

    double B = opt.bound;
    if (B < 0.0) {
        auto meta = as_decomposition(f);
        B = meta ? meta->bound : 0.0;
    }

    Box work = box;
    int expansions = 0;
    for (;;) {
        double gmin = detail::boundary_gradient_min(f, q, work, step);
        if (gmin > B)
            break;
        if (expansions == opt.max_expansions)
            throw Error(ErrorCode::HomologyNotSimple,
                        "boundary gradient " + std::to_string(gmin) + " does not exceed B = " + std::to_string(B) +
                            " after " + std::to_string(expansions) + " box expansions");
        work = work.scaled(2.0);
        ++expansions;
    }
    if (expansions)
        res.flags.push_back("fiber box expanded " + std::to_string(expansions) + " times");

    auto solve = [&](const Box& bx) {
        res.box = bx;
        res.critical = critical_values(f, q, bx, step);
        if (!opt.force_homology && (iota == 0 || static_cast<std::size_t>(iota) == k)) {
            if (res.critical.empty())
                throw Error(ErrorCode::HomologyNotSimple, "no critical point in the fiber box");
            res.method = iota == 0 ? MinmaxMethod::Minimum : MinmaxMethod::Maximum;
            res.value = iota == 0 ? res.critical.values.front() : res.critical.values.back();
            return true;
        }

        res.method = MinmaxMethod::Homology;
        double h = step;
        std::size_t limit = opt.field == Field::Q ? opt.max_cells_rational : opt.max_cells;
        while (detail::cell_count(bx, h) > limit)
            h *= 1.25;
        if (h != step)
            res.flags.push_back("homology grid coarsened to step " + std::to_string(h));
        res.step_used = h;

        std::vector<double> spacing;
        CubicalGrid grid = detail::sample_box(f, q, bx, h, spacing);
        const double C = res.critical.bound_C;
        PersistenceDiagram pd = relative_sublevel_persistence(grid, -C, opt.field);
        auto counts = pd.essential_counts(k);
        res.diagram = pd;
        bool simple = true;
        for (std::size_t d = 0; d <= k; ++d)
            if (counts[d] != (d == static_cast<std::size_t>(iota) ? 1 : 0))
                simple = false;
        if (!simple)
            return false;

        const Bar* bar = nullptr;
        for (const Bar& b : pd.bars)
            if (b.essential && b.degree == iota)
                bar = &b;
        res.birth = bar->birth;

        // Snap the grid birth to an actual critical value. The tolerance is
        // the oscillation of F over the birth cell's neighbourhood.
        Vec w0(k);
        double gnorm = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            w0[i] = bx.lo[i] + 0.5 * bar->birth_cell[i] * spacing[i];
        {
            Gradient g = grad(f, q, w0);
            for (double x : g.dw)
                gnorm += x * x;
            gnorm = std::sqrt(gnorm);
        }
        double hmax = *std::max_element(spacing.begin(), spacing.end());
        Eigen::MatrixXd H = fiber_hessian(f, q, w0);
        double tol = (gnorm + H.cwiseAbs().maxCoeff() * hmax) * hmax * std::sqrt(static_cast<double>(k)) + 1e-9;
        std::size_t near = res.critical.nearest(res.birth);
        if (near != static_cast<std::size_t>(-1) && std::abs(res.critical.values[near] - res.birth) <= tol) {
            res.value = res.critical.values[near];
            return true;
        }
        Vec qq = q, w = w0;
        PolishResult pr = newton_polish(f, qq, w, false);
        if (pr.converged && bx.contains(w.data()) && std::abs(eval(f, q, w) - res.birth) <= tol) {
            res.value = eval(f, q, w);
            res.flags.push_back("snapped to a critical point missing from the enumeration");
            return true;
        }
        res.value = res.birth;
        res.flags.push_back("birth value not snapped to a critical value");
        return true;
    };

    for (;;) {
        if (solve(work))
            break;
        auto counts = res.diagram->essential_counts(k);
        if (expansions == opt.max_expansions)
            throw Error(ErrorCode::HomologyNotSimple, detail::describe(counts) + " for index " +
                                                         std::to_string(iota) + ": enlarge box or grid");
        work = work.scaled(2.0);
        ++expansions;
        res.flags.push_back("fiber box expanded after " + detail::describe(counts));
    }
    res.expansions = expansions;
    return res;
}

struct SelectorOptions
{
    MinmaxOptions minmax;
    std::optional<int> index;    // overrides metadata when set
    bool perturb_degenerate = true; // retry at q +- half a step on homology failure
    unsigned threads = 0;        // 0: hardware concurrency
};

struct SelectorCurve
{
    std::vector<Vec> q_grid;
    std::vector<double> s_values;
    std::vector<int> iota;
    std::vector<CriticalValueSet> critical;
    std::vector<MinmaxMethod> method;
    std::vector<Vec> q_used; // differs from q_grid where the point was perturbed
    bool continuous = true;
    double worst_jump_ratio = 0.0; // max jump / modulus over adjacent pairs
    std::vector<std::string> flags;

    std::size_t size() const { return q_grid.size(); }
};

namespace detail {

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++)
            fn(i);
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
}

inline std::string format_point(const Vec& q)
{
    std::ostringstream os;
    os.precision(10);
    os << "q=(";
    for (std::size_t i = 0; i < q.size(); ++i)
        os << (i ? "," : "") << q[i];
    os << ")";
    return os.str();
}

} // namespace detail

/// s(F)(q) = minmax of F(q, .) over a list of base points.
inline SelectorCurve selector(const GFExpr& f, const std::vector<Vec>& q_grid, const Box& fiber_box, double step,
                              const SelectorOptions& opt = {})
{
    int iota = 0;
    if (f.fiber_dim() > 0) {
        if (opt.index) {
            iota = *opt.index;
        } else if (auto meta = as_decomposition(f)) {
            iota = meta->index;
        } else {
            throw Error(ErrorCode::NotTracked, "selector needs a tracked or supplied index");
        }
    }
    const std::size_t N = q_grid.size();
    SelectorCurve curve;
    curve.q_grid = q_grid;
    curve.s_values.assign(N, 0.0);
    curve.iota.assign(N, iota);
    curve.critical.resize(N);
    curve.method.resize(N);
    curve.q_used = q_grid;
    std::vector<std::vector<std::string>> local_flags(N);
    std::vector<std::exception_ptr> errors(N);

    auto half_step = [&](std::size_t i) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t j : {i - 1, i + 1}) {
            if (j >= N)
                continue;
            double s = 0.0;
            for (std::size_t a = 0; a < q_grid[i].size(); ++a)
                s += (q_grid[j][a] - q_grid[i][a]) * (q_grid[j][a] - q_grid[i][a]);
            d = std::min(d, std::sqrt(s));
        }
        return std::isfinite(d) ? 0.5 * d : 0.5 * step;
    };

    detail::parallel_for(N, opt.threads, [&](std::size_t i) {
        try {
            MinmaxResult r;
            try {
                r = minmax(f, q_grid[i], iota, fiber_box, step, opt.minmax);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::HomologyNotSimple || !opt.perturb_degenerate || f.base_dim() != 1)
                    throw;
                Vec qp = q_grid[i];
                qp[0] += half_step(i);
                r = minmax(f, qp, iota, fiber_box, step, opt.minmax);
                curve.q_used[i] = qp;
                local_flags[i].push_back("perturbed to " + detail::format_point(qp) + " after: " + e.what());
            }
            curve.s_values[i] = r.value;
            curve.method[i] = r.method;
            curve.critical[i] = std::move(r.critical);
            for (auto& fl : r.flags)
                local_flags[i].push_back(detail::format_point(q_grid[i]) + ": " + fl);
        } catch (const Error& e) {
            errors[i] = std::make_exception_ptr(
                Error(e.code(), std::string(e.what()) + " at " + detail::format_point(q_grid[i])));
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    for (auto& fl : local_flags)
        for (auto& s : fl)
            curve.flags.push_back(std::move(s));

    // Discrete continuity: jumps bounded by 10 x |grad_q F| x |dq|.
    auto gq = [&](std::size_t i) {
        if (f.fiber_dim() == 0) {
            Gradient g = grad(f, curve.q_used[i], Vec{});
            double s = 0.0;
            for (double x : g.dq)
                s += x * x;
            return std::sqrt(s);
        }
        double m = 0.0;
        for (const auto& p : curve.critical[i].points)
            m = std::max(m, p.grad_q_norm);
        return m;
    };
    for (std::size_t i = 0; i + 1 < N; ++i) {
        double dq = 0.0;
        for (std::size_t a = 0; a < q_grid[i].size(); ++a)
            dq += std::pow(curve.q_used[i + 1][a] - curve.q_used[i][a], 2);
        dq = std::sqrt(dq);
        double modulus = 10.0 * std::max(gq(i), gq(i + 1)) * dq + 1e-9;
        double jump = std::abs(curve.s_values[i + 1] - curve.s_values[i]);
        curve.worst_jump_ratio = std::max(curve.worst_jump_ratio, jump / modulus);
        if (jump > modulus) {
            curve.continuous = false;
            curve.flags.push_back("continuity check failed between " + detail::format_point(q_grid[i]) + " and " +
                                  detail::format_point(q_grid[i + 1]));
        }
    }
    return curve;
}

/// One base variable convenience overload.
inline SelectorCurve selector(const GFExpr& f, const Vec& q_grid, const Box& fiber_box, double step,
                              const SelectorOptions& opt = {})
{
    std::vector<Vec> pts;
    pts.reserve(q_grid.size());
    for (double q : q_grid)
        pts.push_back(Vec{q});
    return selector(f, pts, fiber_box, step, opt);
}

struct DirectSumReport
{
    double s1 = 0.0;
    double s2 = 0.0;
    double s_sum = 0.0;
    double gap = 0.0; // |s(f1 + f2) - (s(f1) + s(f2))|
    MinmaxMethod method = MinmaxMethod::Direct;
};

/// Compares s(f1 (+) f2) with s(f1) + s(f2) for fiber functions sharing the
/// base point q.
inline DirectSumReport minmax_direct_sum_check(const GFExpr& f1, int iota1, const Box& box1, const GFExpr& f2,
                                               int iota2, const Box& box2, const Vec& q, double step,
                                               const MinmaxOptions& opt = {})
{
    const std::size_t k1 = f1.fiber_dim(), k2 = f2.fiber_dim();
    if (k1 < 1 || k1 > 2 || k2 < 1 || k2 > 2 || k1 + k2 > 3)
        throw Error(ErrorCode::Arity, "direct sum check needs fiber dimensions in {1,2} with total at most 3");
    DirectSumReport rep;
    rep.s1 = minmax(f1, q, iota1, box1, step, opt).value;
    rep.s2 = minmax(f2, q, iota2, box2, step, opt).value;
    Box both{box1.lo, box1.hi};
    both.lo.insert(both.lo.end(), box2.lo.begin(), box2.lo.end());
    both.hi.insert(both.hi.end(), box2.hi.begin(), box2.hi.end());
    MinmaxResult r = minmax(sum_gf(f1, f2), q, iota1 + iota2, both, step, opt);
    rep.s_sum = r.value;
    rep.method = r.method;
    rep.gap = std::abs(rep.s_sum - (rep.s1 + rep.s2));
    return rep;
}

} // namespace legtk

#endif // LEGTK_MINMAX_HPP
