#ifndef LEGTK_GF_OPS_HPP
#define LEGTK_GF_OPS_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "legtk/gf_expr.hpp"

namespace legtk {

namespace detail {

inline std::shared_ptr<Node> derived(NodeKind kind, std::size_t n, std::size_t k, std::vector<GFExpr> children)
{
    auto nd = make_node(kind, n, k);
    nd->children = std::move(children);
    return nd;
}

/// Fiber index of a node for additive rules: k = 0 counts as index 0.
inline std::optional<std::pair<int, double>> additive_index(const GFExpr& f)
{
    if (f.fiber_dim() == 0)
        return std::make_pair(0, 0.0);
    if (f.as_meta())
        return std::make_pair(f.as_meta()->index, f.as_meta()->bound);
    return std::nullopt;
}

inline void validate_kept(const std::vector<std::size_t>& kept, std::size_t n)
{
    if (kept.empty() || kept.size() >= n)
        throw Error(ErrorCode::Arity, "kept base set must be a proper nonempty subset");
    std::set<std::size_t> s(kept.begin(), kept.end());
    if (s.size() != kept.size() || *s.rbegin() >= n)
        throw Error(ErrorCode::Arity, "kept base indices must be distinct and < base_dim");
}

inline Eigen::MatrixXd hyperbolic_pairing(std::size_t n)
{
    // (v', V) -> v'.V
    auto m = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * m, 2 * m);
    for (Eigen::Index i = 0; i < m; ++i) {
        A(i, m + i) = 0.5;
        A(m + i, i) = 0.5;
    }
    return A;
}

} // namespace detail

/// F_T(q, v, w) = q.v - F(v, w).
inline GFExpr transform_T(const GFExpr& f)
{
    const std::size_t n = f.base_dim(), k = f.fiber_dim();
    auto nd = detail::derived(NodeKind::TransformT, n, n + k, {f});
    nd->fiber_names = detail::fresh_names("v", n);
    nd->fiber_names.insert(nd->fiber_names.end(), f.fiber_names().begin(), f.fiber_names().end());

    const Node& c = f.node();
    if (c.joint_index) {
        // -F on (v, w) has index (n + k) - joint(F).
        int idx = static_cast<int>(n + k) - *c.joint_index;
        nd->meta = AsMeta{nullptr, c.joint_bound, idx};
    }
    if (auto ci = detail::additive_index(f)) {
        // Hessian of q.v - F(v,w) is congruent to a hyperbolic n-block plus -H_ww.
        nd->joint_index = static_cast<int>(n) + static_cast<int>(k) - ci->first;
        nd->joint_bound = ci->second;
    }
    return GFExpr(nd);
}

/// F_sigma(q1, w) = F(q1, 0, w): demoted base variables pinned to zero.
inline GFExpr slice_gf(const GFExpr& f, std::vector<std::size_t> kept)
{
    detail::validate_kept(kept, f.base_dim());
    auto nd = detail::derived(NodeKind::Slice, kept.size(), f.fiber_dim(), {f});
    nd->kept = std::move(kept);
    nd->fiber_names = f.fiber_names();
    nd->meta = f.as_meta();
    return GFExpr(nd);
}

/// F_kappa(q1, v, w) = F(q1, v, w): demoted base variables become the
/// leading fiber variables, in increasing index order.
inline GFExpr contour_gf(const GFExpr& f, std::vector<std::size_t> kept)
{
    detail::validate_kept(kept, f.base_dim());
    const std::size_t d = f.base_dim() - kept.size();
    auto nd = detail::derived(NodeKind::Contour, kept.size(), d + f.fiber_dim(), {f});
    nd->kept = std::move(kept);
    nd->fiber_names = detail::fresh_names("v", d);
    nd->fiber_names.insert(nd->fiber_names.end(), f.fiber_names().begin(), f.fiber_names().end());
    return GFExpr(nd);
}

/// F(q1, q2, w1, w2) = F1(q1, w1) + F2(q2, w2).
inline GFExpr product_gf(const GFExpr& a, const GFExpr& b)
{
    auto nd = detail::derived(NodeKind::Product, a.base_dim() + b.base_dim(), a.fiber_dim() + b.fiber_dim(), {a, b});
    nd->fiber_names = a.fiber_names();
    nd->fiber_names.insert(nd->fiber_names.end(), b.fiber_names().begin(), b.fiber_names().end());
    auto ia = detail::additive_index(a), ib = detail::additive_index(b);
    if (nd->fiber_dim > 0 && ia && ib)
        nd->meta = AsMeta{nullptr, ia->second + ib->second, ia->first + ib->first};
    if (a.node().joint_index && b.node().joint_index) {
        nd->joint_index = *a.node().joint_index + *b.node().joint_index;
        nd->joint_bound = a.node().joint_bound + b.node().joint_bound;
    }
    return GFExpr(nd);
}

/// F(q, w1, w2) = F1(q, w1) + F2(q, w2).
inline GFExpr sum_gf(const GFExpr& a, const GFExpr& b)
{
    if (a.base_dim() != b.base_dim())
        throw Error(ErrorCode::Arity, "sum needs equal base dimensions");
    const std::size_t n = a.base_dim();
    auto nd = detail::derived(NodeKind::SumOp, n, a.fiber_dim() + b.fiber_dim(), {a, b});
    nd->fiber_names = a.fiber_names();
    nd->fiber_names.insert(nd->fiber_names.end(), b.fiber_names().begin(), b.fiber_names().end());
    auto ia = detail::additive_index(a), ib = detail::additive_index(b);
    if (nd->fiber_dim > 0 && ia && ib)
        nd->meta = AsMeta{nullptr, ia->second + ib->second, ia->first + ib->first};
    const auto& ja = a.node().joint_index;
    const auto& jb = b.node().joint_index;
    if (a.fiber_dim() == 0 && b.fiber_dim() == 0 && ja && jb && *ja == *jb &&
        (*ja == 0 || *ja == static_cast<int>(n))) {
        nd->joint_index = *ja;
        nd->joint_bound = a.node().joint_bound + b.node().joint_bound;
    }
    return GFExpr(nd);
}

/// F(q, v, w1, w2) = F1(v, w1) + F2(q - v, w2).
inline GFExpr convolution_gf(const GFExpr& a, const GFExpr& b)
{
    if (a.base_dim() != b.base_dim())
        throw Error(ErrorCode::Arity, "convolution needs equal base dimensions");
    const std::size_t n = a.base_dim();
    auto nd = detail::derived(NodeKind::Convolution, n, n + a.fiber_dim() + b.fiber_dim(), {a, b});
    nd->fiber_names = detail::fresh_names("v", n);
    nd->fiber_names.insert(nd->fiber_names.end(), a.fiber_names().begin(), a.fiber_names().end());
    nd->fiber_names.insert(nd->fiber_names.end(), b.fiber_names().begin(), b.fiber_names().end());

    const auto& ja = a.node().joint_index;
    const auto& jb = b.node().joint_index;
    const double bound = a.node().joint_bound + b.node().joint_bound;
    if (a.fiber_dim() == 0 && b.fiber_dim() == 0 && ja && jb && *ja == *jb) {
        // f1(v) + f2(q - v): convex + convex stays convex in v, same for concave.
        if (*ja == 0) {
            nd->meta = AsMeta{nullptr, bound, 0};
            nd->joint_index = 0;
            nd->joint_bound = bound;
        } else if (*ja == static_cast<int>(n)) {
            nd->meta = AsMeta{nullptr, bound, static_cast<int>(n)};
            nd->joint_index = static_cast<int>(2 * n);
            nd->joint_bound = bound;
        }
    } else if (a.kind() == NodeKind::TransformT && b.kind() == NodeKind::TransformT) {
        // (T A) conv (T B) is equivalent to T(A + B) stabilized by a
        // hyperbolic n-pair, hence index (n - j) + n.
        const GFExpr& ga = a.node().children[0];
        const GFExpr& gb = b.node().children[0];
        const auto& gja = ga.node().joint_index;
        const auto& gjb = gb.node().joint_index;
        if (ga.fiber_dim() == 0 && gb.fiber_dim() == 0 && gja && gjb && *gja == *gjb &&
            (*gja == 0 || *gja == static_cast<int>(n))) {
            nd->meta = AsMeta{nullptr, bound, static_cast<int>(2 * n) - *gja};
        }
    }
    return GFExpr(nd);
}

/// F(q, w) + xi^T Q xi with fresh fiber variables xi.
inline GFExpr stabilize(const GFExpr& f, const Eigen::MatrixXd& Q)
{
    if (Q.rows() != Q.cols() || Q.rows() == 0)
        throw Error(ErrorCode::Arity, "stabilization needs a nonempty square form");
    Eigen::MatrixXd S = 0.5 * (Q + Q.transpose());
    int neg = detail::negative_count(S);
    auto m = static_cast<std::size_t>(Q.rows());
    auto nd = detail::derived(NodeKind::Stabilize, f.base_dim(), f.fiber_dim() + m, {f});
    nd->matrix = S;
    nd->fiber_names = f.fiber_names();
    auto extra = detail::fresh_names("s", m);
    nd->fiber_names.insert(nd->fiber_names.end(), extra.begin(), extra.end());
    if (auto ia = detail::additive_index(f))
        nd->meta = AsMeta{nullptr, ia->second, ia->first + neg};
    if (f.node().joint_index) {
        nd->joint_index = *f.node().joint_index + neg;
        nd->joint_bound = f.node().joint_bound;
    }
    return GFExpr(nd);
}

/// Inverse of stabilize(): accepts a Stabilize node, or a sum whose right
/// operand is a base-independent quadratic form in fresh variables.
inline GFExpr strip_stabilization(const GFExpr& f)
{
    if (f.kind() == NodeKind::Stabilize)
        return f.node().children[0];
    if (f.kind() == NodeKind::SumOp && f.node().children[1].kind() == NodeKind::QuadraticForm)
        return f.node().children[0];
    throw Error(ErrorCode::NoStabilization, std::string("node kind ") + to_string(f.kind()));
}

/// F o (id_q x map) where the map acts on the n-blocks at offsets o1, o2.
inline GFExpr fiber_diffeo(const GFExpr& f, FiberMap map, std::size_t o1, std::size_t o2)
{
    const std::size_t n = f.base_dim();
    if (o1 + n > f.fiber_dim() || o2 + n > f.fiber_dim() || (o1 < o2 + n && o2 < o1 + n))
        throw Error(ErrorCode::PatternNotApplicable, "fiber blocks out of range or overlapping");
    auto nd = detail::derived(NodeKind::FiberDiffeo, n, f.fiber_dim(), {f});
    nd->map = map;
    nd->kept = {o1, o2};
    nd->fiber_names = f.fiber_names();
    nd->meta = f.as_meta();
    nd->joint_index = f.node().joint_index;
    nd->joint_bound = f.node().joint_bound;
    return GFExpr(nd);
}

/// Takes F = F_{(T1)+(T2)} and returns F o phi^{-1}, which coincides with
/// F_{T(1 conv 2)} up to the placement of the w-blocks.
inline GFExpr fiber_diffeo_sum_conv(const GFExpr& f)
{
    if (f.kind() != NodeKind::SumOp || f.node().children[0].kind() != NodeKind::TransformT ||
        f.node().children[1].kind() != NodeKind::TransformT)
        throw Error(ErrorCode::PatternNotApplicable, "expected sum of two transformed generating functions");
    const std::size_t o2 = f.node().children[0].fiber_dim();
    return fiber_diffeo(f, FiberMap::PhiInv, 0, o2);
}

enum class PathWeight
{
    Linear,   // F1((1-t)v + t v'): the published family
    Quadratic // F1((1-t^2)v + t v'): same endpoints, contour independent of t
};

/// Deformation F_t between the stabilized F_{T(1+2)} (t = 0) and
/// F_{(T1) conv (T2)} (t = 1). Fiber layout (v, v', V, w1, w2).
/// With the linear weight the contour moves for 0 < t < 1: on it v' = t v,
/// so F1 is evaluated at (1 - t + t^2) v.
inline GFExpr theorem327_path(const GFExpr& a, const GFExpr& b, double t,
                              PathWeight weight = PathWeight::Linear)
{
    if (!(t >= 0.0 && t <= 1.0))
        throw Error(ErrorCode::Range, "path parameter t must lie in [0, 1]");
    if (a.base_dim() != b.base_dim())
        throw Error(ErrorCode::Arity, "path needs equal base dimensions");
    const std::size_t n = a.base_dim();
    auto nd = detail::derived(NodeKind::PathBlend, n, 3 * n + a.fiber_dim() + b.fiber_dim(), {a, b});
    nd->t = t;
    nd->t_squared = weight == PathWeight::Quadratic;
    nd->fiber_names = detail::fresh_names("v", 3 * n);
    nd->fiber_names.insert(nd->fiber_names.end(), a.fiber_names().begin(), a.fiber_names().end());
    nd->fiber_names.insert(nd->fiber_names.end(), b.fiber_names().begin(), b.fiber_names().end());
    // The index is that of the t = 0 endpoint.
    GFExpr start = stabilize(transform_T(sum_gf(a, b)), detail::hyperbolic_pairing(n));
    nd->meta = start.as_meta();
    return GFExpr(nd);
}

/// Stabilization used by the deformation: F + v'.V on 2n fresh variables.
inline GFExpr stabilize_hyperbolic(const GFExpr& f)
{
    return stabilize(f, detail::hyperbolic_pairing(f.base_dim()));
}

} // namespace legtk

#endif // LEGTK_GF_OPS_HPP
