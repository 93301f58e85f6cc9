#ifndef LEGTK_LEGENDRIAN_CLOUD_HPP
#define LEGTK_LEGENDRIAN_CLOUD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "legtk/gf_expr.hpp"
#include "legtk/star_condition.hpp"

namespace legtk {

/// A point (u, q, p) of J^1(R^n, R).
struct Point1Jet
{
    double u = 0.0;
    Vec q;
    Vec p;
};

/// Sampled Legendrian. When `polyline` is set, consecutive points of the
/// same branch are neighbours along the curve (n = 1 only).
struct LegendrianCloud
{
    std::size_t base_dim = 1;
    std::vector<Point1Jet> points;
    std::vector<int> branch;
    std::vector<Vec> source_w;           // fiber parameters, empty for derived clouds
    std::vector<bool> fold;              // point sits on a fold of the projection to q
    std::vector<std::vector<int>> lattice; // grid node of lattice samples, empty otherwise
    bool polyline = true;
    std::vector<std::string> warnings;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void add(Point1Jet pt, int b, bool is_fold = false)
    {
        points.push_back(std::move(pt));
        branch.push_back(b);
        fold.push_back(is_fold);
    }

    /// Point indices per branch id (ascending ids), in insertion order.
    std::vector<std::vector<std::size_t>> branches() const
    {
        std::map<int, std::vector<std::size_t>> m;
        for (std::size_t i = 0; i < size(); ++i)
            m[branch[i]].push_back(i);
        std::vector<std::vector<std::size_t>> out;
        for (auto& [id, v] : m)
            out.push_back(std::move(v));
        return out;
    }

    std::size_t branch_count() const { return std::set<int>(branch.begin(), branch.end()).size(); }

    void warn(const std::string& w)
    {
        if (std::find(warnings.begin(), warnings.end(), w) == warnings.end())
            warnings.push_back(w);
    }
};

/// Projection to (u, q).
struct WaveFront
{
    std::size_t base_dim = 1;
    std::vector<double> u;
    std::vector<Vec> q;
    std::vector<int> branch;
    std::vector<bool> fold;
    bool polyline = true;

    std::size_t size() const { return u.size(); }
};

struct FiberRoots
{
    std::vector<Vec> roots;
    std::size_t unresolved_cells = 0;
    std::vector<std::string> flags;
};

namespace detail {

inline double dist2(const Vec& a, const Vec& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// Greedy nearest matching of items between consecutive nodes. Returns
/// per node the branch id of each item.
inline std::vector<std::vector<int>> stitch_nearest(const std::vector<std::vector<Vec>>& groups, int& next_id)
{
    std::vector<std::vector<int>> ids(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        ids[i].assign(groups[i].size(), -1);
        if (i > 0) {
            struct Pair { double d; std::size_t a, b; };
            std::vector<Pair> pairs;
            for (std::size_t a = 0; a < groups[i - 1].size(); ++a)
                for (std::size_t b = 0; b < groups[i].size(); ++b)
                    pairs.push_back({dist2(groups[i - 1][a], groups[i][b]), a, b});
            std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
                return x.d < y.d || (x.d == y.d && (x.a < y.a || (x.a == y.a && x.b < y.b)));
            });
            std::vector<bool> used(groups[i - 1].size(), false);
            for (const auto& pr : pairs) {
                if (used[pr.a] || ids[i][pr.b] >= 0)
                    continue;
                used[pr.a] = true;
                ids[i][pr.b] = ids[i - 1][pr.a];
            }
        }
        for (auto& id : ids[i])
            if (id < 0)
                id = next_id++;
    }
    return ids;
}

inline bool cell_straddles(const std::vector<double>& g, const std::vector<std::size_t>& corners, std::size_t k)
{
    for (std::size_t j = 0; j < k; ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t c : corners) {
            lo = std::min(lo, g[c * k + j]);
            hi = std::max(hi, g[c * k + j]);
        }
        if (lo > 0.0 || hi < 0.0)
            return false;
    }
    return true;
}

/// Evaluates grad_w on a regular lattice and lists the cells whose corner
/// values straddle zero in every component.
struct FiberLattice
{
    std::size_t k = 0;
    std::vector<std::size_t> count;
    std::vector<std::size_t> stride;
    Vec lo;
    double h = 0.0;
    std::vector<double> g;

    FiberLattice(const GFExpr& f, const double* q, const Vec& lo_, const Vec& hi, double h_)
        : k(lo_.size())
        , count(k)
        , stride(k, 1)
        , lo(lo_)
        , h(h_)
    {
        std::size_t total = 1;
        for (std::size_t a = 0; a < k; ++a) {
            count[a] = static_cast<std::size_t>(std::floor((hi[a] - lo[a]) / h + 1e-9)) + 1;
            total *= count[a];
        }
        for (std::size_t a = k - 1; a-- > 0;)
            stride[a] = stride[a + 1] * count[a + 1];
        g.resize(total * k);
        Buf w{}, out{};
        for (std::size_t lin = 0; lin < total; ++lin) {
            node(lin, w.data());
            grad_w(f, q, w.data(), out.data());
            std::copy(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), g.begin() + static_cast<std::ptrdiff_t>(lin * k));
        }
    }

    void node(std::size_t lin, double* w) const
    {
        for (std::size_t a = 0; a < k; ++a) {
            std::size_t i = lin / stride[a];
            lin %= stride[a];
            w[a] = lo[a] + static_cast<double>(i) * h;
        }
    }

    std::vector<std::size_t> candidate_cells() const
    {
        std::vector<std::size_t> out;
        std::size_t total = g.size() / k;
        std::vector<std::size_t> corners(std::size_t{1} << k);
        for (std::size_t lin = 0; lin < total; ++lin) {
            bool interior = true;
            std::size_t rem = lin;
            for (std::size_t a = 0; a < k; ++a) {
                std::size_t i = rem / stride[a];
                rem %= stride[a];
                if (i + 1 >= count[a])
                    interior = false;
            }
            if (!interior)
                continue;
            for (std::size_t c = 0; c < corners.size(); ++c) {
                std::size_t off = lin;
                for (std::size_t a = 0; a < k; ++a)
                    if (c & (std::size_t{1} << a))
                        off += stride[a];
                corners[c] = off;
            }
            if (cell_straddles(g, corners, k))
                out.push_back(lin);
        }
        return out;
    }
};

} // namespace detail

/// All roots of grad_w F(q, .) = 0 in the fiber box: sign-structure scan on
/// a lattice of the given step, Newton polish from each candidate cell,
/// one subdivision for cells where Newton fails. Roots closer than
/// `dedupe_radius` (default 3 * step) are merged.
inline FiberRoots solve_fiber_critical(const GFExpr& f, const Vec& q, const Box& box, double step,
                                       double dedupe_radius = -1.0)
{
    const std::size_t k = f.fiber_dim();
    if (k < 1 || k > 3)
        throw Error(ErrorCode::Arity, "fiber solver supports 1 to 3 fiber variables");
    if (box.dim() != k)
        throw Error(ErrorCode::Arity, "fiber box dimension mismatch");
    if (q.size() != f.base_dim())
        throw Error(ErrorCode::Arity, "base point dimension mismatch");
    if (!(step > 0.0))
        throw Error(ErrorCode::Range, "scan step must be positive");
    if (dedupe_radius < 0.0)
        dedupe_radius = 3.0 * step;

    FiberRoots out;
    detail::FiberLattice lat(f, q.data(), box.lo, box.hi, step);

    auto try_newton = [&](const Vec& seed) -> std::optional<Vec> {
        Vec qq = q, w = seed;
        PolishResult pr = newton_polish(f, qq, w, false);
        if (!pr.converged || !box.contains(w.data(), step))
            return std::nullopt;
        return w;
    };

    std::vector<Vec> found;
    for (std::size_t cell : lat.candidate_cells()) {
        Vec c(k);
        lat.node(cell, c.data());
        for (auto& x : c)
            x += 0.5 * step;
        if (auto r = try_newton(c)) {
            found.push_back(*r);
            continue;
        }
        // one subdivision: 2^k half cells
        Vec base(k);
        lat.node(cell, base.data());
        detail::FiberLattice sub(f, q.data(), base, [&] {
            Vec hi(k);
            for (std::size_t a = 0; a < k; ++a)
                hi[a] = base[a] + step;
            return hi;
        }(), 0.5 * step);
        bool any = false;
        for (std::size_t sc : sub.candidate_cells()) {
            Vec s(k);
            sub.node(sc, s.data());
            for (auto& x : s)
                x += 0.25 * step;
            if (auto r = try_newton(s)) {
                found.push_back(*r);
                any = true;
            }
        }
        if (!any)
            ++out.unresolved_cells;
    }
    if (out.unresolved_cells > 0)
        out.flags.push_back("unresolved cell");

    std::sort(found.begin(), found.end());
    const double r2 = dedupe_radius * dedupe_radius;
    for (const Vec& w : found) {
        bool dup = false;
        for (const Vec& kept : out.roots)
            if (detail::dist2(kept, w) <= r2) {
                dup = true;
                break;
            }
        if (!dup)
            out.roots.push_back(w);
    }
    return out;
}

struct SampleOptions
{
    bool append_folds = true;
    bool check_immersion = true;
    double dedupe_radius = -1.0; // default 3 * step
};

namespace detail {

/// Fold point near (q0, w0): grad_w F = 0 and det d2F/dw2 = 0, with q
/// accepted only in [qlo, qhi].
inline std::optional<std::pair<double, Vec>> solve_fold(const GFExpr& f, double q0, Vec w0, double qlo, double qhi)
{
    const std::size_t k = f.fiber_dim();
    const auto m = static_cast<Eigen::Index>(k + 1);
    auto residual = [&](const Eigen::VectorXd& x) {
        Vec q{x(0)}, w(k);
        for (std::size_t i = 0; i < k; ++i)
            w[i] = x(static_cast<Eigen::Index>(i + 1));
        Eigen::VectorXd r(m);
        Buf g{};
        grad_w(f, q.data(), w.data(), g.data());
        for (std::size_t i = 0; i < k; ++i)
            r(static_cast<Eigen::Index>(i)) = g[i];
        Eigen::MatrixXd H = fiber_hessian(f, q, w);
        r(m - 1) = H.determinant() / std::pow(1.0 + H.cwiseAbs().maxCoeff(), static_cast<double>(k - 1));
        return r;
    };
    Eigen::VectorXd x(m);
    x(0) = q0;
    for (std::size_t i = 0; i < k; ++i)
        x(static_cast<Eigen::Index>(i + 1)) = w0[i];
    Eigen::VectorXd r = residual(x);
    for (int it = 0; it < 60 && r.norm() > 1e-12; ++it) {
        Eigen::MatrixXd J(m, m);
        for (Eigen::Index c = 0; c < m; ++c) {
            double h = 1e-5 * (1.0 + std::abs(x(c)));
            Eigen::VectorXd xp = x, xm = x;
            xp(c) += h;
            xm(c) -= h;
            J.col(c) = (residual(xp) - residual(xm)) / (2.0 * h);
        }
        Eigen::VectorXd dx = J.completeOrthogonalDecomposition().solve(r);
        if (!dx.allFinite())
            return std::nullopt;
        double lambda = 1.0;
        bool improved = false;
        for (int d = 0; d < 12; ++d, lambda *= 0.5) {
            Eigen::VectorXd xn = x - lambda * dx;
            Eigen::VectorXd rn = residual(xn);
            if (rn.norm() < r.norm()) {
                x = xn;
                r = rn;
                improved = true;
                break;
            }
        }
        if (!improved)
            break;
    }
    if (r.head(static_cast<Eigen::Index>(k)).norm() > 1e-8 || std::abs(r(m - 1)) > 1e-6)
        return std::nullopt;
    Vec q{x(0)}, w(k);
    for (std::size_t i = 0; i < k; ++i)
        w[i] = x(static_cast<Eigen::Index>(i + 1));
    if (!newton_polish(f, q, w, false).converged)
        return std::nullopt;
    if (q[0] < qlo || q[0] > qhi)
        return std::nullopt;
    return std::make_pair(q[0], w);
}

inline Point1Jet jet_at(const GFExpr& f, const Vec& q, const Vec& w)
{
    Gradient g = grad(f, q, w);
    return {g.value, q, g.dq};
}

} // namespace detail

/// Contour of F over a 1-D base grid. Roots are stitched into branches by
/// nearest fiber position; where branches appear or vanish between two
/// nodes the fold point is located and appended to each affected branch.
inline LegendrianCloud sample_legendrian(const GFExpr& f, const std::vector<double>& q_grid, const Box& fiber_box,
                                         double step, const SampleOptions& opt = {})
{
    if (f.base_dim() != 1)
        throw Error(ErrorCode::Arity, "curve sampler needs one base variable; use sample_legendrian_grid");
    const std::size_t k = f.fiber_dim();
    LegendrianCloud cloud;
    cloud.base_dim = 1;

    std::vector<std::vector<Vec>> roots(q_grid.size());
    for (std::size_t i = 0; i < q_grid.size(); ++i) {
        if (k == 0) {
            roots[i].push_back({});
            continue;
        }
        FiberRoots fr = solve_fiber_critical(f, Vec{q_grid[i]}, fiber_box, step, opt.dedupe_radius);
        roots[i] = std::move(fr.roots);
        if (fr.unresolved_cells)
            cloud.warn("unresolved cell at q=" + std::to_string(q_grid[i]));
        if (opt.check_immersion)
            for (const Vec& w : roots[i]) {
                auto [sigma, thr] = transversality(f, Vec{q_grid[i]}, w);
                if (!(sigma > thr))
                    cloud.warn("immersion suspect at q=" + std::to_string(q_grid[i]));
            }
    }
    if (opt.check_immersion && k > 0)
        for (std::size_t i = 0; i < q_grid.size(); ++i) {
            bool empty_before = i == 0 || roots[i - 1].empty();
            bool empty_after = i + 1 == q_grid.size() || roots[i + 1].empty();
            if (!roots[i].empty() && empty_before && empty_after && q_grid.size() > 1)
                cloud.warn("immersion suspect at q=" + std::to_string(q_grid[i]) + ": isolated contour point");
        }
    int next_id = 0;
    auto ids = detail::stitch_nearest(roots, next_id);

    auto push = [&](double q, const Vec& w, int b, bool is_fold) {
        cloud.add(detail::jet_at(f, Vec{q}, w), b, is_fold);
        cloud.source_w.push_back(w);
    };

    std::vector<double> fold_qs;
    for (std::size_t i = 0; i < q_grid.size(); ++i) {
        if (i > 0 && k > 0 && opt.append_folds) {
            std::set<int> prev(ids[i - 1].begin(), ids[i - 1].end()), cur(ids[i].begin(), ids[i].end());
            auto events = [&](std::size_t node, const std::set<int>& other) {
                std::vector<std::size_t> ev;
                for (std::size_t j = 0; j < roots[node].size(); ++j)
                    if (!other.count(ids[node][j]))
                        ev.push_back(j);
                return ev;
            };
            for (std::size_t node : {i - 1, i}) {
                auto ev = events(node, node == i - 1 ? cur : prev);
                std::vector<bool> done(ev.size(), false);
                for (std::size_t a = 0; a < ev.size(); ++a) {
                    if (done[a])
                        continue;
                    // seeds: midpoint with the nearest root at the node, midpoint
                    // with the nearest other vanishing root, the root itself
                    auto nearest = [&](bool vanishing_only) {
                        std::size_t best = roots[node].size(), best_ev = ev.size();
                        double bd = std::numeric_limits<double>::infinity();
                        for (std::size_t b = 0; b < ev.size(); ++b)
                            if (b != a && !done[b]) {
                                double d = detail::dist2(roots[node][ev[a]], roots[node][ev[b]]);
                                if (d < bd) {
                                    bd = d;
                                    best = ev[b];
                                    best_ev = b;
                                }
                            }
                        if (!vanishing_only)
                            for (std::size_t j = 0; j < roots[node].size(); ++j)
                                if (j != ev[a] && std::find(ev.begin(), ev.end(), j) == ev.end()) {
                                    double d = detail::dist2(roots[node][ev[a]], roots[node][j]);
                                    if (d < bd) {
                                        bd = d;
                                        best = j;
                                        best_ev = ev.size();
                                    }
                                }
                        return std::make_pair(best, best_ev);
                    };
                    done[a] = true;
                    const Vec& wa = roots[node][ev[a]];
                    const double h = std::abs(q_grid[i] - q_grid[i - 1]);
                    std::optional<std::pair<double, Vec>> fold;
                    std::size_t best = roots[node].size(), best_ev = ev.size();
                    for (int attempt = 0; attempt < 3 && !fold; ++attempt) {
                        auto cand = attempt == 2 ? std::make_pair(roots[node].size(), ev.size())
                                                 : nearest(attempt == 1);
                        if (attempt == 1 && cand.second == ev.size())
                            continue;
                        Vec seed = wa;
                        if (cand.first < roots[node].size())
                            for (std::size_t c = 0; c < k; ++c)
                                seed[c] = 0.5 * (wa[c] + roots[node][cand.first][c]);
                        // a coarse fiber step loses close root pairs some nodes before the fold
                        for (double reach : {1.0, 25.0})
                            if (!fold)
                                fold = detail::solve_fold(f, 0.5 * (q_grid[i - 1] + q_grid[i]), seed,
                                                          std::min(q_grid[i - 1], q_grid[i]) - reach * h,
                                                          std::max(q_grid[i - 1], q_grid[i]) + reach * h);
                        if (fold)
                            std::tie(best, best_ev) = cand;
                    }
                    if (!fold) {
                        bool seen = std::any_of(fold_qs.begin(), fold_qs.end(),
                                                [&](double fq) { return std::abs(fq - q_grid[node]) <= 25.0 * h; });
                        if (!seen)
                            cloud.warn("branch event unresolved near q=" + std::to_string(q_grid[node]));
                        continue;
                    }
                    fold_qs.push_back(fold->first);
                    push(fold->first, fold->second, ids[node][ev[a]], true);
                    if (best_ev < ev.size()) {
                        done[best_ev] = true;
                        push(fold->first, fold->second, ids[node][best], true);
                    }
                }
            }
        }
        for (std::size_t j = 0; j < roots[i].size(); ++j)
            push(q_grid[i], roots[i][j], ids[i][j], false);
    }

    // keep each branch in curve order: fold points of vanishing branches
    // were appended after the branch's last node, births before the first
    return cloud;
}

/// Contour of F over a tensor grid (any n). Branch ids are the rank of the
/// root in lexicographic fiber order; lattice indices are recorded.
inline LegendrianCloud sample_legendrian_grid(const GFExpr& f, const std::vector<std::vector<double>>& axes,
                                              const Box& fiber_box, double step, const SampleOptions& opt = {})
{
    const std::size_t n = f.base_dim(), k = f.fiber_dim();
    if (axes.size() != n)
        throw Error(ErrorCode::Arity, "one grid axis per base variable expected");
    LegendrianCloud cloud;
    cloud.base_dim = n;
    cloud.polyline = false;
    std::vector<std::size_t> idx(n, 0);
    std::size_t total = 1;
    for (const auto& a : axes)
        total *= a.size();
    for (std::size_t lin = 0; lin < total; ++lin) {
        std::size_t rem = lin;
        Vec q(n);
        std::vector<int> node(n);
        for (std::size_t a = n; a-- > 0;) {
            idx[a] = rem % axes[a].size();
            rem /= axes[a].size();
            q[a] = axes[a][idx[a]];
            node[a] = static_cast<int>(idx[a]);
        }
        std::vector<Vec> roots;
        if (k == 0) {
            roots.push_back({});
        } else {
            FiberRoots fr = solve_fiber_critical(f, q, fiber_box, step, opt.dedupe_radius);
            roots = std::move(fr.roots);
            if (fr.unresolved_cells)
                cloud.warn("unresolved cell");
        }
        for (std::size_t r = 0; r < roots.size(); ++r) {
            if (opt.check_immersion && k > 0) {
                auto [sigma, thr] = transversality(f, q, roots[r]);
                if (!(sigma > thr))
                    cloud.warn("immersion suspect");
            }
            cloud.add(detail::jet_at(f, q, roots[r]), static_cast<int>(r));
            cloud.source_w.push_back(roots[r]);
            cloud.lattice.push_back(node);
        }
    }
    return cloud;
}

inline WaveFront wave_front(const LegendrianCloud& c)
{
    WaveFront w;
    w.base_dim = c.base_dim;
    w.polyline = c.polyline;
    for (std::size_t i = 0; i < c.size(); ++i) {
        w.u.push_back(c.points[i].u);
        w.q.push_back(c.points[i].q);
        w.branch.push_back(c.branch[i]);
        w.fold.push_back(c.fold[i]);
    }
    return w;
}

/// (u, q, p) -> (p.q - u, p, q), pointwise; labels and lattice are kept.
inline LegendrianCloud geometric_T(const LegendrianCloud& c)
{
    LegendrianCloud out = c;
    out.source_w.clear();
    std::fill(out.fold.begin(), out.fold.end(), false);
    for (auto& pt : out.points) {
        double pq = 0.0;
        for (std::size_t i = 0; i < pt.q.size(); ++i)
            pq += pt.p[i] * pt.q[i];
        pt.u = pq - pt.u;
        std::swap(pt.q, pt.p);
    }
    return out;
}

namespace detail {

/// Piece of a branch on which the chosen coordinate is monotone, stored
/// ascending. `o` is the remaining coordinate (p when keyed by q, q when
/// keyed by p).
struct MonotonePiece
{
    Vec key, u, o;
    bool keyed_by_q = true;

    double lo() const { return key.front(); }
    double hi() const { return key.back(); }

    std::pair<double, double> at(double x) const
    {
        auto it = std::upper_bound(key.begin(), key.end(), x);
        std::size_t j = it == key.begin() ? 0 : static_cast<std::size_t>(it - key.begin()) - 1;
        if (j + 1 >= key.size())
            j = key.size() - 2;
        double dx = key[j + 1] - key[j];
        double t = dx > 0 ? (x - key[j]) / dx : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        double o_val = (1 - t) * o[j] + t * o[j + 1];
        double u_val;
        if (keyed_by_q) {
            // du/dq = p: cubic Hermite
            double t2 = t * t, t3 = t2 * t;
            u_val = (2 * t3 - 3 * t2 + 1) * u[j] + (t3 - 2 * t2 + t) * dx * o[j] + (-2 * t3 + 3 * t2) * u[j + 1] +
                    (t3 - t2) * dx * o[j + 1];
        } else {
            u_val = (1 - t) * u[j] + t * u[j + 1];
        }
        return {u_val, o_val};
    }
};

inline std::vector<MonotonePiece> monotone_pieces(const LegendrianCloud& c, bool by_q)
{
    if (c.base_dim != 1)
        throw Error(ErrorCode::UnsupportedFormat, "branch resampling needs n = 1");
    std::vector<MonotonePiece> out;
    for (const auto& br : c.branches()) {
        std::vector<std::size_t> pts;
        for (std::size_t i : br) {
            double key = by_q ? c.points[i].q[0] : c.points[i].p[0];
            if (!pts.empty()) {
                double prev = by_q ? c.points[pts.back()].q[0] : c.points[pts.back()].p[0];
                if (key == prev)
                    continue;
            }
            pts.push_back(i);
        }
        if (pts.size() < 2)
            continue;
        auto key_of = [&](std::size_t i) { return by_q ? c.points[i].q[0] : c.points[i].p[0]; };
        std::size_t start = 0;
        while (start + 1 < pts.size()) {
            double dir = key_of(pts[start + 1]) - key_of(pts[start]);
            std::size_t end = start + 1;
            while (end + 1 < pts.size() && (key_of(pts[end + 1]) - key_of(pts[end])) * dir > 0)
                ++end;
            MonotonePiece pc;
            pc.keyed_by_q = by_q;
            for (std::size_t j = start; j <= end; ++j) {
                const auto& pt = c.points[pts[j]];
                pc.key.push_back(key_of(pts[j]));
                pc.u.push_back(pt.u);
                pc.o.push_back(by_q ? pt.p[0] : pt.q[0]);
            }
            if (dir < 0) {
                std::reverse(pc.key.begin(), pc.key.end());
                std::reverse(pc.u.begin(), pc.u.end());
                std::reverse(pc.o.begin(), pc.o.end());
            }
            out.push_back(std::move(pc));
            start = end;
        }
    }
    return out;
}

/// Pairs every monotone piece of A with every piece of B over their
/// common key range, resampled on the grid plus the piece endpoints.
inline LegendrianCloud combine_pieces(const LegendrianCloud& A, const LegendrianCloud& B, const std::vector<double>& grid,
                                      bool by_q)
{
    auto pa = monotone_pieces(A, by_q), pb = monotone_pieces(B, by_q);
    LegendrianCloud out;
    out.base_dim = 1;
    std::size_t skipped = 0;
    auto count_skips = [&](const std::vector<MonotonePiece>& pieces) {
        if (pieces.empty())
            return;
        double glo = std::numeric_limits<double>::infinity(), ghi = -glo;
        for (const auto& p : pieces) {
            glo = std::min(glo, p.lo());
            ghi = std::max(ghi, p.hi());
        }
        for (const auto& p : pieces)
            for (double x : grid)
                if (x >= glo && x <= ghi && (x < p.lo() || x > p.hi()))
                    ++skipped;
    };
    count_skips(pa);
    count_skips(pb);

    int id = 0;
    for (const auto& a : pa)
        for (const auto& b : pb) {
            double lo = std::max(a.lo(), b.lo()), hi = std::min(a.hi(), b.hi());
            if (lo > hi)
                continue;
            Vec nodes;
            for (double x : grid)
                if (x >= lo && x <= hi)
                    nodes.push_back(x);
            nodes.push_back(lo);
            nodes.push_back(hi);
            std::sort(nodes.begin(), nodes.end());
            nodes.erase(std::unique(nodes.begin(), nodes.end(),
                                    [](double x, double y) { return std::abs(x - y) < 1e-12; }),
                        nodes.end());
            for (double x : nodes) {
                auto [ua, oa] = a.at(x);
                auto [ub, ob] = b.at(x);
                Point1Jet pt;
                pt.u = ua + ub;
                if (by_q) {
                    pt.q = {x};
                    pt.p = {oa + ob};
                } else {
                    pt.q = {oa + ob};
                    pt.p = {x};
                }
                out.add(std::move(pt), id);
            }
            ++id;
        }
    if (skipped)
        out.warn("skipped " + std::to_string(skipped) + " (node, branch) pairs outside branch ranges");
    return out;
}

} // namespace detail

/// {(u1 + u2, q, p1 + p2)} over matching q. For n = 1 the branches are
/// resampled on `q_grid`; for n >= 2 points are paired on identical q.
inline LegendrianCloud geometric_sum(const LegendrianCloud& A, const LegendrianCloud& B, const std::vector<double>& q_grid)
{
    if (A.base_dim != B.base_dim)
        throw Error(ErrorCode::Arity, "sum needs equal base dimensions");
    if (A.base_dim == 1)
        return detail::combine_pieces(A, B, q_grid, true);
    LegendrianCloud out;
    out.base_dim = A.base_dim;
    out.polyline = false;
    const int nb = B.empty() ? 1 : *std::max_element(B.branch.begin(), B.branch.end()) + 1;
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < B.size(); ++j) {
            if (detail::dist2(A.points[i].q, B.points[j].q) > 1e-18)
                continue;
            Point1Jet pt = A.points[i];
            pt.u += B.points[j].u;
            for (std::size_t c = 0; c < pt.p.size(); ++c)
                pt.p[c] += B.points[j].p[c];
            out.add(std::move(pt), A.branch[i] * nb + B.branch[j]);
        }
    return out;
}

/// {(u1 + u2, q1 + q2, p)} over matching p (n = 1).
inline LegendrianCloud geometric_convolution(const LegendrianCloud& A, const LegendrianCloud& B,
                                             const std::vector<double>& p_grid)
{
    if (A.base_dim != 1 || B.base_dim != 1)
        throw Error(ErrorCode::UnsupportedFormat, "geometric convolution implemented for n = 1");
    return detail::combine_pieces(A, B, p_grid, false);
}

/// (u1 + u2, (q1, q2), (p1, p2)) over all pairs of points.
inline LegendrianCloud cloud_product(const LegendrianCloud& A, const LegendrianCloud& B)
{
    LegendrianCloud out;
    out.base_dim = A.base_dim + B.base_dim;
    out.polyline = false;
    const int nb = B.empty() ? 1 : *std::max_element(B.branch.begin(), B.branch.end()) + 1;
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < B.size(); ++j) {
            Point1Jet pt;
            pt.u = A.points[i].u + B.points[j].u;
            pt.q = A.points[i].q;
            pt.q.insert(pt.q.end(), B.points[j].q.begin(), B.points[j].q.end());
            pt.p = A.points[i].p;
            pt.p.insert(pt.p.end(), B.points[j].p.begin(), B.points[j].p.end());
            out.add(std::move(pt), A.branch[i] * nb + B.branch[j]);
        }
    return out;
}

namespace detail {

/// Zero crossings of value(point) along the lattice lines of a 2-D cloud,
/// in both lattice directions. Each crossing keeps coordinate `kept` of q
/// and p, with u, q, p linearly interpolated.
template <typename ValueFn>
LegendrianCloud lattice_crossings(const LegendrianCloud& L, std::size_t kept, ValueFn value)
{
    if (L.base_dim != 2 || L.lattice.size() != L.size())
        throw Error(ErrorCode::UnsupportedFormat, "cloud slice/contour needs a 2-D lattice sample");
    if (kept > 1)
        throw Error(ErrorCode::Arity, "kept index must be 0 or 1");
    LegendrianCloud out;
    out.base_dim = 1;
    out.polyline = false;
    std::set<std::size_t> emitted;
    auto emit_point = [&](std::size_t i) {
        if (!emitted.insert(i).second)
            return;
        const auto& pt = L.points[i];
        out.add({pt.u, {pt.q[kept]}, {pt.p[kept]}}, 0);
    };
    for (std::size_t dir = 0; dir < 2; ++dir) {
        // lines: fixed lattice index on the other axis, same branch
        std::map<std::pair<int, int>, std::vector<std::size_t>> lines;
        for (std::size_t i = 0; i < L.size(); ++i)
            lines[{L.lattice[i][1 - dir], L.branch[i]}].push_back(i);
        for (auto& [key, idx] : lines) {
            std::sort(idx.begin(), idx.end(),
                      [&](std::size_t a, std::size_t b) { return L.lattice[a][dir] < L.lattice[b][dir]; });
            for (std::size_t j = 0; j < idx.size(); ++j) {
                double va = value(L.points[idx[j]]);
                if (va == 0.0) {
                    emit_point(idx[j]);
                    continue;
                }
                if (j + 1 >= idx.size() || L.lattice[idx[j + 1]][dir] != L.lattice[idx[j]][dir] + 1)
                    continue;
                double vb = value(L.points[idx[j + 1]]);
                if (va * vb >= 0.0)
                    continue;
                double t = va / (va - vb);
                const auto& a = L.points[idx[j]];
                const auto& b = L.points[idx[j + 1]];
                out.add({(1 - t) * a.u + t * b.u, {(1 - t) * a.q[kept] + t * b.q[kept]},
                         {(1 - t) * a.p[kept] + t * b.p[kept]}},
                        0);
            }
        }
    }
    return out;
}

} // namespace detail

/// Points with the demoted base coordinate equal to zero.
inline LegendrianCloud cloud_slice(const LegendrianCloud& L, std::size_t kept)
{
    const std::size_t demoted = 1 - kept;
    return detail::lattice_crossings(L, kept, [demoted](const Point1Jet& pt) { return pt.q[demoted]; });
}

/// Points with the demoted slope coordinate equal to zero.
inline LegendrianCloud cloud_contour(const LegendrianCloud& L, std::size_t kept)
{
    const std::size_t demoted = 1 - kept;
    return detail::lattice_crossings(L, kept, [demoted](const Point1Jet& pt) { return pt.p[demoted]; });
}

// ---------------------------------------------------------------------------
// Singular points of 1-D fronts

struct FrontFeature
{
    enum class Kind { Cusp, Vertex };
    Kind kind = Kind::Cusp;
    double u = 0.0;
    double q = 0.0;
    int branch = 0;
};

inline const char* to_string(FrontFeature::Kind k) { return k == FrontFeature::Kind::Cusp ? "cusp" : "vertex"; }

/// Cusps are fold points of the sampler and turning points of q along a
/// branch (refined by a parabola through the three nearest samples).
/// Vertices are isolated slope jumps of u(q) inside a branch.
inline std::vector<FrontFeature> detect_cusps(const WaveFront& front)
{
    if (front.base_dim != 1)
        throw Error(ErrorCode::UnsupportedFormat, "cusp detection needs n = 1");
    std::vector<FrontFeature> out;
    auto add_unique = [&](FrontFeature f) {
        for (const auto& g : out)
            if (g.kind == f.kind && std::abs(g.u - f.u) < 1e-7 && std::abs(g.q - f.q) < 1e-7)
                return;
        out.push_back(f);
    };
    for (std::size_t i = 0; i < front.size(); ++i)
        if (front.fold[i])
            add_unique({FrontFeature::Kind::Cusp, front.u[i], front.q[i][0], front.branch[i]});
    if (!front.polyline)
        return out;

    std::map<int, std::vector<std::size_t>> by_branch;
    for (std::size_t i = 0; i < front.size(); ++i)
        by_branch[front.branch[i]].push_back(i);

    for (auto& [id, raw] : by_branch) {
        std::vector<std::size_t> idx;
        for (std::size_t i : raw)
            if (idx.empty() || front.q[i][0] != front.q[idx.back()][0] || front.u[i] != front.u[idx.back()])
                idx.push_back(i);
        const std::size_t m = idx.size();
        auto Q = [&](std::size_t j) { return front.q[idx[j]][0]; };
        auto U = [&](std::size_t j) { return front.u[idx[j]]; };

        for (std::size_t j = 1; j + 1 < m; ++j) {
            double d0 = Q(j) - Q(j - 1), d1 = Q(j + 1) - Q(j);
            if (d0 * d1 >= 0.0)
                continue;
            // parabola through t = -1, 0, 1
            double a = 0.5 * (Q(j + 1) + Q(j - 1)) - Q(j), b = 0.5 * (Q(j + 1) - Q(j - 1));
            double ts = a != 0.0 ? std::clamp(-b / (2 * a), -1.0, 1.0) : 0.0;
            double au = 0.5 * (U(j + 1) + U(j - 1)) - U(j), bu = 0.5 * (U(j + 1) - U(j - 1));
            add_unique({FrontFeature::Kind::Cusp, U(j) + bu * ts + au * ts * ts, Q(j) + b * ts + a * ts * ts, id});
        }

        if (m < 8)
            continue;
        Vec slope(m - 1), dq(m - 1);
        for (std::size_t j = 0; j + 1 < m; ++j) {
            dq[j] = Q(j + 1) - Q(j);
            slope[j] = dq[j] != 0.0 ? (U(j + 1) - U(j)) / dq[j] : 0.0;
        }
        Vec kappa(m - 2);
        for (std::size_t j = 0; j + 2 < m; ++j)
            kappa[j] = std::abs(slope[j + 1] - slope[j]) / std::max(1e-300, 0.5 * std::abs(dq[j] + dq[j + 1]));
        Vec sorted = kappa;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        double med = sorted[sorted.size() / 2];
        std::size_t j = 3;
        while (j + 4 < m) {
            if (kappa[j] > 25.0 * med + 1e-9 && std::abs(slope[j + 1] - slope[j]) > 0.1) {
                std::size_t e = j;
                while (e + 1 + 4 < m && kappa[e + 1] > 25.0 * med + 1e-9)
                    ++e;
                // intersect the tangent lines left of j and right of e + 1
                double sl = slope[j - 1], sr = slope[e + 2];
                double ql = Q(j), ul = U(j), qr = Q(e + 2), ur = U(e + 2);
                double qv = std::abs(sl - sr) > 1e-12 ? (ur - ul + sl * ql - sr * qr) / (sl - sr) : 0.5 * (ql + qr);
                add_unique({FrontFeature::Kind::Vertex, ul + sl * (qv - ql), qv, id});
                j = e + 2;
                continue;
            }
            ++j;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hausdorff distance

enum class HausdorffMetric {
    Point, ///< point set to point set
    Curve, ///< point set to the branch polylines of the other cloud (when ordered)
};

struct HausdorffResult
{
    double value = 0.0;
    bool empty = false;
};

namespace detail {

inline Vec embed(const Point1Jet& p)
{
    Vec x{p.u};
    x.insert(x.end(), p.q.begin(), p.q.end());
    x.insert(x.end(), p.p.begin(), p.p.end());
    return x;
}

inline double seg_dist2(const Vec& x, const Vec& a, const Vec& b)
{
    double ab2 = 0.0, t = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ab2 += (b[i] - a[i]) * (b[i] - a[i]);
        t += (x[i] - a[i]) * (b[i] - a[i]);
    }
    t = ab2 > 0.0 ? std::clamp(t / ab2, 0.0, 1.0) : 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - (a[i] + t * (b[i] - a[i]));
        s += d * d;
    }
    return s;
}

/// Segments bucketed along the first base coordinate.
class SegmentIndex
{
public:
    SegmentIndex(std::vector<std::pair<Vec, Vec>> segs)
        : segs_(std::move(segs))
    {
        if (segs_.empty())
            return;
        lo_ = std::numeric_limits<double>::infinity();
        double hi = -lo_;
        for (const auto& [a, b] : segs_) {
            lo_ = std::min({lo_, a[1], b[1]});
            hi = std::max({hi, a[1], b[1]});
        }
        std::size_t nb = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(segs_.size()))), 1, 4096);
        width_ = std::max((hi - lo_) / static_cast<double>(nb), 1e-12);
        bins_.resize(nb);
        for (std::size_t s = 0; s < segs_.size(); ++s) {
            auto [a, b] = std::minmax(segs_[s].first[1], segs_[s].second[1]);
            for (std::size_t i = bin(a); i <= bin(b); ++i)
                bins_[i].push_back(s);
        }
    }

    double nearest2(const Vec& x) const
    {
        double best = std::numeric_limits<double>::infinity();
        if (segs_.empty())
            return best;
        const auto nb = static_cast<long>(bins_.size());
        const long b0 = static_cast<long>(bin(x[1]));
        for (long r = 0;; ++r) {
            bool any = false;
            for (long b : {b0 - r, b0 + r}) {
                if (b < 0 || b >= nb || (r == 0 && b == b0 + r && any))
                    continue;
                any = true;
                for (std::size_t s : bins_[static_cast<std::size_t>(b)])
                    best = std::min(best, seg_dist2(x, segs_[s].first, segs_[s].second));
            }
            if (!any && (b0 - r < 0 && b0 + r >= nb))
                break;
            double left = lo_ + static_cast<double>(b0 - r) * width_;
            double right = lo_ + static_cast<double>(b0 + r + 1) * width_;
            double gap = std::max(0.0, std::min(x[1] - left, right - x[1]));
            if (gap * gap >= best)
                break;
        }
        return best;
    }

private:
    std::size_t bin(double v) const
    {
        double t = (v - lo_) / width_;
        if (t <= 0.0)
            return 0;
        return std::min(static_cast<std::size_t>(t), bins_.size() - 1);
    }

    std::vector<std::pair<Vec, Vec>> segs_;
    std::vector<std::vector<std::size_t>> bins_;
    double lo_ = 0.0;
    double width_ = 1.0;
};

inline SegmentIndex build_index(const LegendrianCloud& c, bool as_curve)
{
    std::vector<std::pair<Vec, Vec>> segs;
    if (as_curve && c.polyline && c.base_dim == 1) {
        for (const auto& br : c.branches()) {
            if (br.size() == 1)
                segs.emplace_back(embed(c.points[br[0]]), embed(c.points[br[0]]));
            for (std::size_t j = 0; j + 1 < br.size(); ++j)
                segs.emplace_back(embed(c.points[br[j]]), embed(c.points[br[j + 1]]));
        }
    } else {
        for (const auto& p : c.points)
            segs.emplace_back(embed(p), embed(p));
    }
    return SegmentIndex(std::move(segs));
}

inline double directed(const LegendrianCloud& from, const SegmentIndex& to)
{
    double worst = 0.0;
    for (const auto& p : from.points)
        worst = std::max(worst, to.nearest2(embed(p)));
    return std::sqrt(worst);
}

} // namespace detail

/// Symmetric Hausdorff distance in (u, q, p) space. Empty input gives +inf
/// with the flag set.
inline HausdorffResult hausdorff(const LegendrianCloud& A, const LegendrianCloud& B,
                                 HausdorffMetric metric = HausdorffMetric::Point)
{
    if (A.base_dim != B.base_dim)
        throw Error(ErrorCode::Arity, "clouds live in different jet spaces");
    if (A.empty() || B.empty())
        return {std::numeric_limits<double>::infinity(), true};
    bool curve = metric == HausdorffMetric::Curve;
    auto ia = detail::build_index(A, curve), ib = detail::build_index(B, curve);
    return {std::max(detail::directed(A, ib), detail::directed(B, ia)), false};
}

/// Restriction of a 1-D cloud to q in [lo, hi].
inline LegendrianCloud window(const LegendrianCloud& c, double lo, double hi)
{
    LegendrianCloud out;
    out.base_dim = c.base_dim;
    out.polyline = c.polyline;
    out.warnings = c.warnings;
    // a branch that leaves the window and comes back continues under a new id
    int next_id = 0;
    for (const auto& br : c.branches()) {
        bool open = false;
        for (std::size_t i : br) {
            if (c.points[i].q[0] < lo || c.points[i].q[0] > hi) {
                if (open)
                    ++next_id;
                open = false;
                continue;
            }
            open = true;
            out.add(c.points[i], next_id, c.fold[i]);
            if (!c.source_w.empty())
                out.source_w.push_back(c.source_w[i]);
        }
        if (open)
            ++next_id;
    }
    return out;
}

/// Uniform grid lo, lo + h, ..., hi.
inline std::vector<double> uniform_grid(double lo, double hi, double h)
{
    std::vector<double> g;
    auto n = static_cast<std::size_t>(std::llround((hi - lo) / h));
    for (std::size_t i = 0; i <= n; ++i)
        g.push_back(lo + static_cast<double>(i) * h);
    return g;
}

} // namespace legtk

#endif // LEGTK_LEGENDRIAN_CLOUD_HPP
