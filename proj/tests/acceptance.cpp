#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "legtk/convex_kit.hpp"
#include "legtk/star_condition.hpp"
#include "legtk/verify.hpp"

using namespace legtk;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = LEGTK_SCENARIO_DIR;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string g(double x)
{
    std::ostringstream s;
    s.precision(3);
    s << x;
    return s.str();
}

// Summary of a report: failing checks by name, else the worst defect ratio.
Outcome from_reports(const std::vector<Report>& reports)
{
    Outcome o{true, ""};
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : reports)
        for (const auto& c : r.checks) {
            if (!c.passed) {
                o.pass = false;
                o.detail += (o.detail.empty() ? "failed: " : ", ") + r.suite + "/" + c.name + " (" +
                            (c.error_code ? c.error_message : "defect " + g(c.defect) + " vs " + g(c.tolerance)) +
                            ")";
            } else if (c.compare == Compare::AtMost && c.tolerance > 0 && c.defect / c.tolerance >= worst) {
                worst = c.defect / c.tolerance;
                worst_name = r.suite + "/" + c.name;
            }
        }
    if (o.pass)
        o.detail = "worst defect/tolerance " + g(worst) + " at " + worst_name;
    return o;
}

Outcome criterion1()
{
    const double h = 1e-3;
    // e^q: flat tail on the left, superlinear on the right
    auto t0 = std::chrono::steady_clock::now();
    GridFunction e = GridFunction::sample([](double x) { return std::exp(x); }, -5, 5, h, TailModel{{{}}, {{0, 0, 1}}, 0});
    GridFunction es = lf_transform(e, UniformGrid::span(-2, 5, 7001));
    double t_exp = seconds_since(t0);
    double err_exp = 0.0;
    bool masked = true;
    for (std::size_t k = 0; k < es.size(); ++k) {
        double p = es.x(k);
        if (p < -1e-12)
            masked = masked && !es.is_finite(k);
        else if (p >= 0.1 - 1e-12 && p <= 5 + 1e-12)
            err_exp = es.is_finite(k) ? std::max(err_exp, std::abs(es.values[k] - p * (std::log(p) - 1)))
                                      : std::numeric_limits<double>::infinity();
    }

    t0 = std::chrono::steady_clock::now();
    auto flat = [](double x) { return x <= -1 ? (x + 1) * (x + 1) : x >= 1 ? (x - 1) * (x - 1) : 0.0; };
    GridFunction f = GridFunction::sample(flat, -5, 5, h, TailModel{{{1, 2, 1}}, {{1, -2, 1}}, 0});
    GridFunction fs = lf_transform(f, UniformGrid::span(-6, 6, 12001));
    double t_flat = seconds_since(t0);
    double err_flat = 0.0;
    for (std::size_t k = 0; k < fs.size(); ++k) {
        double p = fs.x(k);
        err_flat = std::max(err_flat, std::abs(fs.values[k] - (p * p / 4 + std::abs(p))));
    }
    bool pass = masked && err_exp <= 5 * h && err_flat <= 5 * h && t_exp < 5 && t_flat < 5;
    return {pass, "exp: sup err " + g(err_exp) + (masked ? ", q<0 masked" : ", q<0 NOT masked") + ", " +
                      g(t_exp) + " s; flat bottom: sup err " + g(err_flat) + ", " + g(t_flat) + " s; bound " +
                      g(5 * h)};
}

Outcome criterion2()
{
    auto t0 = std::chrono::steady_clock::now();
    Outcome o = from_reports({run_suite("theorem21", kScenarios)});
    double t = seconds_since(t0);
    o.pass = o.pass && t < 30;
    o.detail += ", " + g(t) + " s";
    return o;
}

Outcome criterion7()
{
    auto t0 = std::chrono::steady_clock::now();
    Report r = run_suite("theorem327", kScenarios);
    double t = seconds_since(t0);
    Outcome o = from_reports({r});
    o.pass = o.pass && t < 300;
    if (const auto* q = r.find("ii.deformation_quadratic_weight"))
        o.detail += "; quadratic-weight deformation " + std::string(q->passed ? "constant" : "not constant") +
                    " within " + g(q->defect);
    o.detail += ", " + g(t) + " s";
    return o;
}

Outcome criterion8()
{
    Report r = run_suite("corollary324", kScenarios);
    Outcome o{true, ""};
    for (const char* name : {"discriminator.TT_selector_at_zero", "discriminator.biconjugate_at_zero",
                             "discriminator.separation"}) {
        const auto* c = r.find(name);
        bool ok = c && c->passed;
        o.pass = o.pass && ok;
        o.detail += std::string(o.detail.empty() ? "" : "; ") + name + " " + (c ? c->detail : "missing");
    }
    return o;
}

Outcome criterion9()
{
    auto qs = uniform_grid(-5, 5, 0.01);
    auto c = sample_legendrian(transform_T(poly1d({0, 0, -3, 0, 1})), qs, Box::cube(1, 3), 0.05);
    std::vector<FrontFeature> cusps;
    for (const auto& f : detect_cusps(wave_front(c)))
        if (f.kind == FrontFeature::Kind::Cusp)
            cusps.push_back(f);
    // oracle: dq/dx = 12x^2 - 6 vanishes at x = +-1/sqrt 2 on (3x^4 - 3x^2, 4x^3 - 6x)
    const double x = 1 / std::sqrt(2.0);
    const double u0 = 3 * std::pow(x, 4) - 3 * x * x, q0 = std::abs(4 * x * x * x - 6 * x);
    double worst = cusps.size() == 2 ? 0.0 : std::numeric_limits<double>::infinity();
    for (const auto& f : cusps)
        worst = std::max(worst, std::max(std::abs(f.u - u0), std::abs(std::abs(f.q) - q0)));
    return {cusps.size() == 2 && worst <= 1e-3, std::to_string(cusps.size()) + " cusps, max deviation " + g(worst)};
}

std::vector<GFExpr> every_node_kind()
{
    GFExpr a = poly1d({0, 0, -3, 0, 1});
    GFExpr b = poly1d({0, 0.5, 1});
    Eigen::MatrixXd H(2, 2);
    H << 1, 0.2, 0.2, -1;
    GFExpr two = polynomial(2, 1, {{1.0, {1, 0, 1}}, {-1.0, {0, 0, 3}}, {0.5, {0, 1, 2}}, {1.0, {0, 2, 0}}});
    TailModel tail{{{0, 0, 1}}, {{0, 0, 1}}, 0};
    GFExpr smp = sampled(GridFunction::sample([](double x) { return x * x + std::sin(x); }, -3, 3, 0.001, tail));
    return {a,
            two,
            quadratic_form(1, H),
            smp,
            transform_T(a),
            slice_gf(two, {0}),
            contour_gf(two, {1}),
            product_gf(transform_T(a), two),
            sum_gf(transform_T(a), transform_T(b)),
            convolution_gf(transform_T(a), transform_T(b)),
            stabilize(transform_T(a), H),
            fiber_diffeo_sum_conv(sum_gf(transform_T(a), transform_T(b))),
            theorem327_path(a, b, 0.37),
            theorem327_path(a, b, 0.37, PathWeight::Quadratic)};
}

Outcome criterion10()
{
    std::mt19937 rng(10);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    double worst = 0.0;
    std::string worst_kind;
    std::size_t probes = 0;
    for (const GFExpr& f : every_node_kind()) {
        const bool smp = f.kind() == NodeKind::SampledTail;
        for (int i = 0; i < 1000; ++i, ++probes) {
            Vec q(f.base_dim()), w(f.fiber_dim());
            for (auto& x : q)
                x = U(rng);
            for (auto& x : w)
                x = U(rng);
            if (smp) // the interpolant is smooth inside a cell; probe at cell centres
                q[0] = -3 + 0.001 * (std::floor((q[0] + 3) / 0.001) + 0.5);
            Gradient an = grad(f, q, w);
            const double h = smp ? 1e-6 : 1e-5;
            auto fd = [&](Vec& v, std::size_t j) {
                double s = v[j];
                v[j] = s + h;
                double fp = eval(f, q, w);
                v[j] = s - h;
                double fm = eval(f, q, w);
                v[j] = s;
                return (fp - fm) / (2 * h);
            };
            auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
            for (std::size_t j = 0; j < q.size(); ++j) {
                double r = rel(an.dq[j], fd(q, j));
                if (r > worst) {
                    worst = r;
                    worst_kind = to_string(f.kind());
                }
            }
            for (std::size_t j = 0; j < w.size(); ++j) {
                double r = rel(an.dw[j], fd(w, j));
                if (r > worst) {
                    worst = r;
                    worst_kind = to_string(f.kind());
                }
            }
        }
    }
    return {worst <= 1e-6, std::to_string(probes) + " probes over 14 expressions, worst relative error " + g(worst) +
                               " (" + worst_kind + ")"};
}

void collect_gfs(const nlohmann::json& j, std::vector<nlohmann::json>& out)
{
    if (j.is_object()) {
        if (j.contains("kind")) {
            out.push_back(j);
            return;
        }
        for (const auto& [k, v] : j.items())
            collect_gfs(v, out);
    } else if (j.is_array()) {
        for (const auto& v : j)
            collect_gfs(v, out);
    }
}

Outcome criterion11()
{
    auto cube = polynomial(1, 1, {{1.0, {0, 3}}});
    bool rejected = !check_star_condition(cube, Box::cube(2, 1.0), 0.05).satisfied;

    // every gf declared by a suite scenario, plus its transform when it has one base variable
    std::vector<GFExpr> inputs;
    for (const auto& name : suite_names()) {
        Scenario sc = load_scenario(kScenarios / (name + ".json"));
        std::vector<nlohmann::json> js;
        collect_gfs(sc.params, js);
        for (const auto& j : js) {
            GFExpr f = sc.expr(j);
            if (f.fiber_dim() > 0)
                inputs.push_back(f);
            if (f.base_dim() == 1 && f.fiber_dim() <= 1)
                inputs.push_back(transform_T(f));
        }
    }
    std::size_t failed = 0, checked = 0, empty = 0;
    for (const GFExpr& f : inputs) {
        auto rep = check_star_condition(f, Box::cube(f.base_dim() + f.fiber_dim(), 2.0), 0.1, 60000);
        ++checked;
        failed += rep.satisfied ? 0 : 1;
        empty += rep.witnesses.empty() ? 1 : 0;
    }
    return {rejected && failed == 0 && checked > 0,
            std::string("w^3 ") + (rejected ? "rejected" : "NOT rejected") + "; " + std::to_string(checked - failed) +
                "/" + std::to_string(checked) + " suite inputs pass (" + std::to_string(empty) +
                " with empty contour in the box)"};
}

} // namespace

int main()
{
    struct Criterion
    {
        int id;
        const char* title;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "conjugate closed forms", criterion1},
        {2, "sum/convolution identities under T", criterion2},
        {3, "slice/contour and product cloud identities",
         [] { return from_reports({run_suite("prop11", kScenarios), run_suite("remark12", kScenarios)}); }},
        {4, "gf combinators vs geometric operations", [] { return from_reports({run_suite("lemma31_crosscheck", kScenarios)}); }},
        {5, "almost-convex and almost-concave selectors", [] { return from_reports({run_suite("lemma33", kScenarios)}); }},
        {6, "selector additivity", [] { return from_reports({run_suite("prop31", kScenarios)}); }},
        {7, "selectors of the paired constructions and the deformation", criterion7},
        {8, "selector involution vs convexification", criterion8},
        {9, "cusp geometry", criterion9},
        {10, "analytic vs finite-difference gradients", criterion10},
        {11, "rank condition", criterion11},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
