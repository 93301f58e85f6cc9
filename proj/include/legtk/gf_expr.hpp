#ifndef LEGTK_GF_EXPR_HPP
#define LEGTK_GF_EXPR_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "legtk/error.hpp"
#include "legtk/grid_function.hpp"

namespace legtk {

using Vec = std::vector<double>;

/// Upper bound on base + fiber variables of any node. Evaluation uses
/// stack buffers of this size.
inline constexpr std::size_t kMaxDim = 24;

enum class NodeKind {
    Poly1D,
    Polynomial,
    QuadraticForm,
    SampledTail,
    TransformT,
    Slice,
    Contour,
    Product,
    SumOp,
    Convolution,
    Stabilize,
    FiberDiffeo,
    PathBlend,
};

inline const char* to_string(NodeKind k)
{
    switch (k) {
    case NodeKind::Poly1D: return "poly1d";
    case NodeKind::Polynomial: return "poly";
    case NodeKind::QuadraticForm: return "quadratic";
    case NodeKind::SampledTail: return "sampled";
    case NodeKind::TransformT: return "transform_t";
    case NodeKind::Slice: return "slice";
    case NodeKind::Contour: return "contour";
    case NodeKind::Product: return "product";
    case NodeKind::SumOp: return "sum";
    case NodeKind::Convolution: return "convolution";
    case NodeKind::Stabilize: return "stabilize";
    case NodeKind::FiberDiffeo: return "fiber_diffeo";
    case NodeKind::PathBlend: return "path_blend";
    }
    return "?";
}

/// Fixed catalog of fiber diffeomorphisms, acting on two n-blocks of the
/// fiber (at recorded offsets) and leaving the rest alone.
///   Phi:    (v1, v2, w) -> (v1 + v2, v1, w)
///   PhiInv: (V, v, w)   -> (v, V - v, w)
enum class FiberMap { Phi, PhiInv };

inline const char* to_string(FiberMap m) { return m == FiberMap::Phi ? "phi" : "phi_inv"; }

struct Monomial
{
    double coef = 0.0;
    std::vector<int> exponents; // over (q..., w...)
};

class GFExpr;

/// Almost-simple decomposition record: F = G + H with G(q,.) simple of
/// Morse index `index` and |grad_w H| <= bound.
struct AsMeta
{
    std::shared_ptr<const GFExpr> simple_part; // null when not closed-form or F itself
    double bound = 0.0;
    int index = 0;
};

struct Node
{
    NodeKind kind{};
    std::size_t base_dim = 0;
    std::size_t fiber_dim = 0;
    std::vector<std::string> fiber_names;

    std::vector<GFExpr> children;
    std::vector<double> coefficients;          // Poly1D
    std::vector<Monomial> terms;               // Polynomial
    Eigen::MatrixXd matrix;                    // QuadraticForm, Stabilize
    std::shared_ptr<const GridFunction> grid;  // SampledTail
    std::vector<std::size_t> kept;             // Slice, Contour; block offsets for FiberDiffeo
    FiberMap map = FiberMap::Phi;              // FiberDiffeo
    double t = 0.0;                            // PathBlend
    bool t_squared = false;                    // PathBlend: (1-t^2) weight on v instead of (1-t)

    std::optional<AsMeta> meta;
    /// Morse index of the whole function on (q, w) jointly, when tracked.
    std::optional<int> joint_index;
    /// Bound on the non-simple part of the joint function.
    double joint_bound = 0.0;
};

/// Immutable generating function F(q, w). Cheap to copy.
class GFExpr
{
public:
    GFExpr() = default;
    explicit GFExpr(std::shared_ptr<const Node> n)
        : node_(std::move(n))
    {
    }

    const Node& node() const { return *node_; }
    NodeKind kind() const { return node_->kind; }
    std::size_t base_dim() const { return node_->base_dim; }
    std::size_t fiber_dim() const { return node_->fiber_dim; }
    const std::vector<std::string>& fiber_names() const { return node_->fiber_names; }
    const std::optional<AsMeta>& as_meta() const { return node_->meta; }
    bool valid() const { return static_cast<bool>(node_); }
    const Node* identity() const { return node_.get(); }

private:
    std::shared_ptr<const Node> node_;
};

namespace detail {

inline std::string fresh_name(const char* prefix)
{
    static std::atomic<unsigned long> counter{0};
    return std::string(prefix) + std::to_string(counter.fetch_add(1));
}

inline std::vector<std::string> fresh_names(const char* prefix, std::size_t count)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(fresh_name(prefix));
    return out;
}

inline void check_dims(std::size_t n, std::size_t k)
{
    if (n + k > kMaxDim)
        throw Error(ErrorCode::Arity, "total dimension " + std::to_string(n + k) +
                                          " exceeds " + std::to_string(kMaxDim));
}

using Buf = std::array<double, kMaxDim>;

/// Recursive evaluation. gq/gw may be null when only the value is needed.
inline double eval_node(const Node& nd, const double* q, const double* w, double* gq, double* gw)
{
    const std::size_t n = nd.base_dim;
    const std::size_t k = nd.fiber_dim;
    const bool want = gq != nullptr;

    switch (nd.kind) {
    case NodeKind::Poly1D: {
        double x = q[0], acc = 0.0, dacc = 0.0;
        const auto& c = nd.coefficients;
        for (std::size_t i = c.size(); i-- > 0;) {
            dacc = dacc * x + acc;
            acc = acc * x + c[i];
        }
        if (want)
            gq[0] = dacc;
        return acc;
    }
    case NodeKind::Polynomial: {
        Buf x{};
        std::copy(q, q + n, x.begin());
        std::copy(w, w + k, x.begin() + static_cast<std::ptrdiff_t>(n));
        const std::size_t m = n + k;
        Buf g{};
        double val = 0.0;
        for (const auto& term : nd.terms) {
            double prod = term.coef;
            for (std::size_t i = 0; i < m; ++i)
                if (term.exponents[i] != 0)
                    prod *= std::pow(x[i], term.exponents[i]);
            val += prod;
            if (!want)
                continue;
            for (std::size_t i = 0; i < m; ++i) {
                int e = term.exponents[i];
                if (e == 0)
                    continue;
                double d = term.coef * e * std::pow(x[i], e - 1);
                for (std::size_t j = 0; j < m; ++j)
                    if (j != i && term.exponents[j] != 0)
                        d *= std::pow(x[j], term.exponents[j]);
                g[i] += d;
            }
        }
        if (want) {
            std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n), gq);
            std::copy(g.begin() + static_cast<std::ptrdiff_t>(n),
                      g.begin() + static_cast<std::ptrdiff_t>(m), gw);
        }
        return val;
    }
    case NodeKind::QuadraticForm: {
        double val = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                row += nd.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * w[j];
            val += w[i] * row;
            if (want)
                gw[i] = 2.0 * row;
        }
        if (want)
            std::fill(gq, gq + n, 0.0);
        return val;
    }
    case NodeKind::SampledTail: {
        auto [v, d] = nd.grid->evaluate(q[0]);
        if (want)
            gq[0] = d;
        return v;
    }
    case NodeKind::TransformT: {
        const Node& c = nd.children[0].node();
        const std::size_t cn = c.base_dim; // == n
        const double* v = w;
        const double* cw = w + cn;
        Buf cgq{}, cgw{};
        double cv = eval_node(c, v, cw, want ? cgq.data() : nullptr, want ? cgw.data() : nullptr);
        double qv = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            qv += q[i] * v[i];
        if (want) {
            for (std::size_t i = 0; i < n; ++i) {
                gq[i] = v[i];
                gw[i] = q[i] - cgq[i];
            }
            for (std::size_t j = 0; j < c.fiber_dim; ++j)
                gw[cn + j] = -cgw[j];
        }
        return qv - cv;
    }
    case NodeKind::Slice: {
        const Node& c = nd.children[0].node();
        Buf cq{};
        for (std::size_t i = 0; i < n; ++i)
            cq[nd.kept[i]] = q[i];
        Buf cgq{};
        double val = eval_node(c, cq.data(), w, want ? cgq.data() : nullptr, want ? gw : nullptr);
        if (want)
            for (std::size_t i = 0; i < n; ++i)
                gq[i] = cgq[nd.kept[i]];
        return val;
    }
    case NodeKind::Contour: {
        const Node& c = nd.children[0].node();
        const std::size_t cn = c.base_dim;
        const std::size_t d = cn - n;
        Buf cq{};
        std::array<bool, kMaxDim> is_kept{};
        for (std::size_t i = 0; i < n; ++i) {
            cq[nd.kept[i]] = q[i];
            is_kept[nd.kept[i]] = true;
        }
        std::size_t j = 0;
        for (std::size_t i = 0; i < cn; ++i)
            if (!is_kept[i])
                cq[i] = w[j++];
        Buf cgq{};
        double val = eval_node(c, cq.data(), w + d, want ? cgq.data() : nullptr, want ? gw + d : nullptr);
        if (want) {
            for (std::size_t i = 0; i < n; ++i)
                gq[i] = cgq[nd.kept[i]];
            j = 0;
            for (std::size_t i = 0; i < cn; ++i)
                if (!is_kept[i])
                    gw[j++] = cgq[i];
        }
        return val;
    }
    case NodeKind::Product: {
        const Node& a = nd.children[0].node();
        const Node& b = nd.children[1].node();
        double va = eval_node(a, q, w, gq, gw);
        double vb = eval_node(b, q + a.base_dim, w + a.fiber_dim,
                              want ? gq + a.base_dim : nullptr, want ? gw + a.fiber_dim : nullptr);
        return va + vb;
    }
    case NodeKind::SumOp: {
        const Node& a = nd.children[0].node();
        const Node& b = nd.children[1].node();
        Buf gqb{};
        double va = eval_node(a, q, w, gq, gw);
        double vb = eval_node(b, q, w + a.fiber_dim, want ? gqb.data() : nullptr,
                              want ? gw + a.fiber_dim : nullptr);
        if (want)
            for (std::size_t i = 0; i < n; ++i)
                gq[i] += gqb[i];
        return va + vb;
    }
    case NodeKind::Convolution: {
        const Node& a = nd.children[0].node();
        const Node& b = nd.children[1].node();
        const double* v = w;
        Buf qmv{};
        for (std::size_t i = 0; i < n; ++i)
            qmv[i] = q[i] - v[i];
        Buf gqa{}, gqb{};
        double va = eval_node(a, v, w + n, want ? gqa.data() : nullptr, want ? gw + n : nullptr);
        double vb = eval_node(b, qmv.data(), w + n + a.fiber_dim, want ? gqb.data() : nullptr,
                              want ? gw + n + a.fiber_dim : nullptr);
        if (want)
            for (std::size_t i = 0; i < n; ++i) {
                gq[i] = gqb[i];
                gw[i] = gqa[i] - gqb[i];
            }
        return va + vb;
    }
    case NodeKind::Stabilize: {
        const Node& c = nd.children[0].node();
        const std::size_t ck = c.fiber_dim;
        double val = eval_node(c, q, w, gq, gw);
        const std::size_t m = k - ck;
        const double* xi = w + ck;
        for (std::size_t i = 0; i < m; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                row += nd.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * xi[j];
            val += xi[i] * row;
            if (want)
                gw[ck + i] = 2.0 * row;
        }
        return val;
    }
    case NodeKind::FiberDiffeo: {
        // kept[0], kept[1]: offsets of the two n-blocks the map acts on.
        const Node& c = nd.children[0].node();
        const std::size_t o1 = nd.kept[0], o2 = nd.kept[1];
        Buf cw{};
        std::copy(w, w + k, cw.begin());
        for (std::size_t i = 0; i < n; ++i) {
            double a = w[o1 + i], b = w[o2 + i];
            if (nd.map == FiberMap::Phi) {
                cw[o1 + i] = a + b;
                cw[o2 + i] = a;
            } else {
                cw[o1 + i] = b;
                cw[o2 + i] = a - b;
            }
        }
        Buf cgw{};
        double val = eval_node(c, q, cw.data(), gq, want ? cgw.data() : nullptr);
        if (want) {
            std::copy(cgw.begin(), cgw.begin() + static_cast<std::ptrdiff_t>(k), gw);
            for (std::size_t i = 0; i < n; ++i) {
                double ga = cgw[o1 + i], gb = cgw[o2 + i];
                if (nd.map == FiberMap::Phi) {
                    gw[o1 + i] = ga + gb;
                    gw[o2 + i] = ga;
                } else {
                    gw[o1 + i] = gb;
                    gw[o2 + i] = ga - gb;
                }
            }
        }
        return val;
    }
    case NodeKind::PathBlend: {
        // F_t(q, v, v', V, w1, w2) = q.v - F1(c v + t v', w1) - F2(v, w2) + V.(v' - t v)
        // with c = 1 - t, or c = 1 - t^2 which keeps the F1 argument equal to v on the contour.
        const Node& a = nd.children[0].node();
        const Node& b = nd.children[1].node();
        const double t = nd.t;
        const double c = nd.t_squared ? 1.0 - t * t : 1.0 - t;
        const double* v = w;
        const double* vp = w + n;
        const double* V = w + 2 * n;
        const double* w1 = w + 3 * n;
        const double* w2 = w1 + a.fiber_dim;
        Buf x{};
        for (std::size_t i = 0; i < n; ++i)
            x[i] = c * v[i] + t * vp[i];
        Buf ga{}, gb{};
        double fa = eval_node(a, x.data(), w1, want ? ga.data() : nullptr, want ? gw + 3 * n : nullptr);
        double fb = eval_node(b, v, w2, want ? gb.data() : nullptr, want ? gw + 3 * n + a.fiber_dim : nullptr);
        double val = -fa - fb;
        for (std::size_t i = 0; i < n; ++i)
            val += q[i] * v[i] + V[i] * (vp[i] - t * v[i]);
        if (want) {
            for (std::size_t j = 0; j < a.fiber_dim + b.fiber_dim; ++j)
                gw[3 * n + j] = -gw[3 * n + j];
            for (std::size_t i = 0; i < n; ++i) {
                gq[i] = v[i];
                gw[i] = q[i] - c * ga[i] - gb[i] - t * V[i];
                gw[n + i] = -t * ga[i] + V[i];
                gw[2 * n + i] = vp[i] - t * v[i];
            }
        }
        return val;
    }
    }
    return 0.0;
}

inline void check_point(const GFExpr& f, std::size_t nq, std::size_t nw)
{
    if (nq != f.base_dim() || nw != f.fiber_dim())
        throw Error(ErrorCode::Arity, std::string("expected (q,w) dims (") + std::to_string(f.base_dim()) +
                                          "," + std::to_string(f.fiber_dim()) + "), got (" +
                                          std::to_string(nq) + "," + std::to_string(nw) + ")");
}

} // namespace detail

/// F(q, w).
inline double eval(const GFExpr& f, std::span<const double> q, std::span<const double> w)
{
    detail::check_point(f, q.size(), w.size());
    return detail::eval_node(f.node(), q.data(), w.data(), nullptr, nullptr);
}

struct Gradient
{
    double value = 0.0;
    Vec dq;
    Vec dw;
};

/// Value with exact gradients with respect to base and fiber variables.
inline Gradient grad(const GFExpr& f, std::span<const double> q, std::span<const double> w)
{
    detail::check_point(f, q.size(), w.size());
    Gradient g;
    g.dq.assign(f.base_dim(), 0.0);
    g.dw.assign(f.fiber_dim(), 0.0);
    detail::Buf gq{}, gw{};
    g.value = detail::eval_node(f.node(), q.data(), w.data(), gq.data(), gw.data());
    std::copy(gq.begin(), gq.begin() + static_cast<std::ptrdiff_t>(f.base_dim()), g.dq.begin());
    std::copy(gw.begin(), gw.begin() + static_cast<std::ptrdiff_t>(f.fiber_dim()), g.dw.begin());
    return g;
}

/// grad_w F only, allocation free for the caller's buffer.
inline double grad_w(const GFExpr& f, const double* q, const double* w, double* out)
{
    detail::Buf gq{};
    return detail::eval_node(f.node(), q, w, gq.data(), out);
}

/// Jacobian of grad_w F with respect to (q, w): k x (n + k), by central
/// differences of the exact gradient.
inline Eigen::MatrixXd fiber_jacobian(const GFExpr& f, std::span<const double> q, std::span<const double> w)
{
    const std::size_t n = f.base_dim(), k = f.fiber_dim();
    Eigen::MatrixXd J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n + k));
    detail::Buf x{};
    std::copy(q.begin(), q.end(), x.begin());
    std::copy(w.begin(), w.end(), x.begin() + static_cast<std::ptrdiff_t>(n));
    detail::Buf gp{}, gm{};
    for (std::size_t c = 0; c < n + k; ++c) {
        double h = 1e-6 * (1.0 + std::abs(x[c]));
        double saved = x[c];
        x[c] = saved + h;
        grad_w(f, x.data(), x.data() + n, gp.data());
        x[c] = saved - h;
        grad_w(f, x.data(), x.data() + n, gm.data());
        x[c] = saved;
        for (std::size_t r = 0; r < k; ++r)
            J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (gp[r] - gm[r]) / (2.0 * h);
    }
    return J;
}

/// Fiber Hessian d^2 F / dw^2 (symmetrized).
inline Eigen::MatrixXd fiber_hessian(const GFExpr& f, std::span<const double> q, std::span<const double> w)
{
    const auto n = static_cast<Eigen::Index>(f.base_dim());
    const auto k = static_cast<Eigen::Index>(f.fiber_dim());
    Eigen::MatrixXd H = fiber_jacobian(f, q, w).rightCols(k);
    (void)n;
    return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Base constructors

namespace detail {

inline std::shared_ptr<Node> make_node(NodeKind kind, std::size_t n, std::size_t k)
{
    check_dims(n, k);
    auto nd = std::make_shared<Node>();
    nd->kind = kind;
    nd->base_dim = n;
    nd->fiber_dim = k;
    return nd;
}

/// Bound of f' - g' where g' is the monotone envelope of f' on [-R, R]
/// (running max for the convex model, running min for the concave one).
inline double monotone_defect(const Polynomial1D& p, bool convex, double radius = 10.0, int samples = 4001)
{
    double env = convex ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        double x = -radius + 2.0 * radius * i / (samples - 1);
        double d = p.derivative(x);
        env = convex ? std::max(env, d) : std::min(env, d);
        worst = std::max(worst, std::abs(d - env));
    }
    return worst;
}

inline int negative_count(const Eigen::MatrixXd& A)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    int neg = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (std::abs(es.eigenvalues()(i)) < 1e-12)
            throw Error(ErrorCode::Range, "quadratic form is degenerate");
        if (es.eigenvalues()(i) < 0)
            ++neg;
    }
    return neg;
}

} // namespace detail

/// f(q) = sum c_i q^i on one base variable, no fiber.
inline GFExpr poly1d(std::vector<double> coefficients)
{
    auto nd = detail::make_node(NodeKind::Poly1D, 1, 0);
    Polynomial1D p{coefficients};
    nd->coefficients = std::move(coefficients);
    int d = p.degree();
    if (d >= 2 && d % 2 == 0) {
        bool convex = p.leading() > 0;
        nd->joint_index = convex ? 0 : 1;
        nd->joint_bound = detail::monotone_defect(p, convex);
    }
    return GFExpr(nd);
}

/// General polynomial in (q, w). Index metadata is not tracked unless given
/// through with_meta().
inline GFExpr polynomial(std::size_t base_dim, std::size_t fiber_dim, std::vector<Monomial> terms)
{
    auto nd = detail::make_node(NodeKind::Polynomial, base_dim, fiber_dim);
    for (const auto& t : terms)
        if (t.exponents.size() != base_dim + fiber_dim)
            throw Error(ErrorCode::Arity, "monomial exponent count mismatch");
    nd->terms = std::move(terms);
    nd->fiber_names = detail::fresh_names("w", fiber_dim);
    return GFExpr(nd);
}

/// w^T A w over `A.rows()` fiber variables, constant in the base.
inline GFExpr quadratic_form(std::size_t base_dim, const Eigen::MatrixXd& A)
{
    if (A.rows() != A.cols() || A.rows() == 0)
        throw Error(ErrorCode::Arity, "quadratic form needs a nonempty square matrix");
    auto k = static_cast<std::size_t>(A.rows());
    auto nd = detail::make_node(NodeKind::QuadraticForm, base_dim, k);
    nd->matrix = 0.5 * (A + A.transpose());
    nd->fiber_names = detail::fresh_names("w", k);
    int neg = detail::negative_count(nd->matrix);
    // the form is its own simple part; left null to avoid a self reference
    nd->meta = AsMeta{nullptr, 0.0, neg};
    return GFExpr(nd);
}

/// Grid-sampled function of one base variable with its tail model.
inline GFExpr sampled(GridFunction g)
{
    auto nd = detail::make_node(NodeKind::SampledTail, 1, 0);
    if (g.tail) {
        nd->joint_index = g.tail->index;
        double worst = 0.0, env = g.tail->index == 0 ? -1e300 : 1e300;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double d = g.node_slope(i);
            env = g.tail->index == 0 ? std::max(env, d) : std::min(env, d);
            worst = std::max(worst, std::abs(d - env));
        }
        nd->joint_bound = worst;
    }
    nd->grid = std::make_shared<const GridFunction>(std::move(g));
    return GFExpr(nd);
}

/// Returns a copy of `f` with an explicitly declared decomposition.
inline GFExpr with_meta(const GFExpr& f, AsMeta meta)
{
    if (meta.index < 0 || static_cast<std::size_t>(meta.index) > f.fiber_dim())
        throw Error(ErrorCode::Range, "declared index outside [0, fiber_dim]");
    if (f.fiber_dim() == 0)
        throw Error(ErrorCode::Arity, "no fiber variables: nothing to declare");
    auto nd = std::make_shared<Node>(f.node());
    nd->meta = std::move(meta);
    return GFExpr(nd);
}

/// Structurally tracked decomposition, or nullopt ("not tracked").
inline std::optional<AsMeta> as_decomposition(const GFExpr& f) { return f.as_meta(); }

/// Joint Morse index on (q, w) if tracked.
inline std::optional<int> joint_index(const GFExpr& f) { return f.node().joint_index; }

} // namespace legtk

#endif // LEGTK_GF_EXPR_HPP
