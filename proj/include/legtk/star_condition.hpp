#ifndef LEGTK_STAR_CONDITION_HPP
#define LEGTK_STAR_CONDITION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "legtk/gf_expr.hpp"

namespace legtk {

/// Axis-aligned box. For the condition check it spans (q, w); for fiber
/// solvers it spans w only.
struct Box
{
    Vec lo;
    Vec hi;

    std::size_t dim() const { return lo.size(); }

    static Box cube(std::size_t d, double r) { return {Vec(d, -r), Vec(d, r)}; }

    bool contains(const double* x, double slack = 0.0) const
    {
        for (std::size_t i = 0; i < dim(); ++i)
            if (x[i] < lo[i] - slack || x[i] > hi[i] + slack)
                return false;
        return true;
    }

    Box scaled(double factor) const
    {
        Box b = *this;
        for (std::size_t i = 0; i < dim(); ++i) {
            double c = 0.5 * (lo[i] + hi[i]), r = 0.5 * (hi[i] - lo[i]) * factor;
            b.lo[i] = c - r;
            b.hi[i] = c + r;
        }
        return b;
    }
};

inline constexpr double kRootTolerance = 1e-10;
inline constexpr int kNewtonIterations = 40;

struct PolishResult
{
    bool converged = false;
    double residual = 0.0;
    int iterations = 0;
};

namespace detail {

inline double residual_norm(const GFExpr& f, const double* q, const double* w)
{
    Buf g{};
    grad_w(f, q, w, g.data());
    double s = 0.0;
    for (std::size_t i = 0; i < f.fiber_dim(); ++i)
        s += g[i] * g[i];
    return std::sqrt(s);
}

} // namespace detail

/// Damped minimum-norm Newton on grad_w F = 0. With `move_q` the base
/// point is free too (underdetermined system); otherwise only w moves.
inline PolishResult newton_polish(const GFExpr& f, Vec& q, Vec& w, bool move_q)
{
    const std::size_t n = f.base_dim(), k = f.fiber_dim();
    PolishResult res;
    res.residual = detail::residual_norm(f, q.data(), w.data());
    for (int it = 0; it < kNewtonIterations && res.residual >= kRootTolerance; ++it) {
        res.iterations = it + 1;
        Eigen::MatrixXd J = fiber_jacobian(f, q, w);
        if (!move_q)
            J = J.rightCols(static_cast<Eigen::Index>(k)).eval();
        detail::Buf g{};
        grad_w(f, q.data(), w.data(), g.data());
        Eigen::Map<const Eigen::VectorXd> r(g.data(), static_cast<Eigen::Index>(k));
        Eigen::VectorXd dx = J.completeOrthogonalDecomposition().solve(r);
        if (!dx.allFinite())
            break;
        double lambda = 1.0;
        bool improved = false;
        for (int damp = 0; damp < 12; ++damp, lambda *= 0.5) {
            Vec q2 = q, w2 = w;
            std::size_t off = 0;
            if (move_q) {
                for (std::size_t i = 0; i < n; ++i)
                    q2[i] -= lambda * dx(static_cast<Eigen::Index>(i));
                off = n;
            }
            for (std::size_t i = 0; i < k; ++i)
                w2[i] -= lambda * dx(static_cast<Eigen::Index>(off + i));
            double r2 = detail::residual_norm(f, q2.data(), w2.data());
            if (r2 < res.residual) {
                q = std::move(q2);
                w = std::move(w2);
                res.residual = r2;
                improved = true;
                break;
            }
        }
        if (!improved)
            break;
    }
    res.converged = res.residual < kRootTolerance;
    return res;
}

/// Smallest singular value of the k x (n+k) Jacobian of grad_w F and the
/// rank threshold it is compared against.
inline std::pair<double, double> transversality(const GFExpr& f, std::span<const double> q, std::span<const double> w)
{
    Eigen::MatrixXd J = fiber_jacobian(f, q, w);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    double sigma = svd.singularValues().size() ? svd.singularValues().minCoeff() : 0.0;
    double threshold = 1e-6 * (1.0 + J.cwiseAbs().maxCoeff());
    return {sigma, threshold};
}

struct StarWitness
{
    Vec q;
    Vec w;
    double sigma_min = 0.0;
    double threshold = 0.0;
    double residual = 0.0;
};

struct StarReport
{
    bool satisfied = true;
    double worst_sigma_min = std::numeric_limits<double>::infinity();
    std::vector<StarWitness> witnesses;
    std::vector<std::string> flags;
    std::size_t grid_points = 0;
};

/// Scans the (q, w) box, polishes local minima of |grad_w F| along the
/// fiber directions onto the contour and tests the rank condition there.
/// The step is coarsened when the grid would exceed `max_points`.
inline StarReport check_star_condition(const GFExpr& f, const Box& box, double grid_step,
                                       std::size_t max_points = 400000)
{
    const std::size_t n = f.base_dim(), k = f.fiber_dim(), d = n + k;
    if (k == 0)
        throw Error(ErrorCode::Arity, "condition check needs at least one fiber variable");
    if (box.dim() != d)
        throw Error(ErrorCode::Arity, "box must span base and fiber variables");
    if (!(grid_step > 0.0))
        throw Error(ErrorCode::Range, "grid step must be positive");

    StarReport rep;
    auto counts = [&](double h) {
        std::vector<std::size_t> c(d);
        double total = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            c[i] = static_cast<std::size_t>(std::floor((box.hi[i] - box.lo[i]) / h + 1e-9)) + 1;
            total *= static_cast<double>(c[i]);
        }
        return std::make_pair(c, total);
    };
    double h = grid_step;
    auto [cnt, total] = counts(h);
    while (total > static_cast<double>(max_points)) {
        h *= 1.25;
        std::tie(cnt, total) = counts(h);
    }
    if (h != grid_step)
        rep.flags.push_back("grid coarsened to step " + std::to_string(h));

    // residuals on the full grid, row-major with the last axis fastest
    std::vector<double> res(static_cast<std::size_t>(total));
    std::vector<std::size_t> stride(d, 1);
    for (std::size_t i = d - 1; i-- > 0;)
        stride[i] = stride[i + 1] * cnt[i + 1];
    std::vector<std::size_t> idx(d, 0);
    detail::Buf x{};
    for (std::size_t lin = 0; lin < res.size(); ++lin) {
        std::size_t rem = lin;
        for (std::size_t i = 0; i < d; ++i) {
            idx[i] = rem / stride[i];
            rem %= stride[i];
            x[i] = box.lo[i] + static_cast<double>(idx[i]) * h;
        }
        res[lin] = detail::residual_norm(f, x.data(), x.data() + n);
    }
    rep.grid_points = res.size();

    double scale = *std::max_element(res.begin(), res.end());
    std::vector<StarWitness> found;
    for (std::size_t lin = 0; lin < res.size(); ++lin) {
        std::size_t rem = lin;
        for (std::size_t i = 0; i < d; ++i) {
            idx[i] = rem / stride[i];
            rem %= stride[i];
        }
        bool local_min = true;
        for (std::size_t a = n; a < d && local_min; ++a) {
            if (idx[a] > 0 && res[lin - stride[a]] < res[lin])
                local_min = false;
            if (idx[a] + 1 < cnt[a] && res[lin + stride[a]] < res[lin])
                local_min = false;
        }
        if (!local_min || res[lin] > 1e-2 * scale + 1e-12)
            continue;
        Vec q(n), w(k);
        for (std::size_t i = 0; i < d; ++i) {
            double v = box.lo[i] + static_cast<double>(idx[i]) * h;
            (i < n ? q[i] : w[i - n]) = v;
        }
        PolishResult pr = newton_polish(f, q, w, true);
        if (!pr.converged)
            continue;
        Vec all(q);
        all.insert(all.end(), w.begin(), w.end());
        if (!box.contains(all.data(), h))
            continue;
        bool dup = false;
        for (const auto& s : found) {
            double dist = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                dist = std::max(dist, std::abs(s.q[i] - q[i]));
            for (std::size_t i = 0; i < k; ++i)
                dist = std::max(dist, std::abs(s.w[i] - w[i]));
            if (dist < 0.5 * h) {
                dup = true;
                break;
            }
        }
        if (dup)
            continue;
        auto [sigma, thr] = transversality(f, q, w);
        found.push_back({q, w, sigma, thr, pr.residual});
        rep.worst_sigma_min = std::min(rep.worst_sigma_min, sigma);
        if (!(sigma > thr))
            rep.satisfied = false;
    }
    rep.witnesses = std::move(found);
    if (rep.witnesses.empty())
        rep.flags.push_back("empty contour in box");
    return rep;
}

} // namespace legtk

#endif // LEGTK_STAR_CONDITION_HPP
