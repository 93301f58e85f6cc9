#ifndef LEGTK_GRID_FUNCTION_HPP
#define LEGTK_GRID_FUNCTION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "legtk/error.hpp"

namespace legtk {

/// Polynomial coefficients, lowest degree first.
struct Polynomial1D
{
    std::vector<double> coefficients;

    double value(double x) const
    {
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it)
            acc = acc * x + *it;
        return acc;
    }

    double derivative(double x) const
    {
        double acc = 0.0;
        for (std::size_t i = coefficients.size(); i-- > 1;)
            acc = acc * x + static_cast<double>(i) * coefficients[i];
        return acc;
    }

    /// Degree ignoring trailing zero coefficients; -1 for the zero polynomial.
    int degree() const
    {
        for (std::size_t i = coefficients.size(); i-- > 0;)
            if (coefficients[i] != 0.0)
                return static_cast<int>(i);
        return -1;
    }

    double leading() const
    {
        int d = degree();
        return d < 0 ? 0.0 : coefficients[static_cast<std::size_t>(d)];
    }
};

enum class Side { Left, Right };

/// Behaviour of a sampled function outside its grid. Each side carries its
/// own polynomial; `index` is the declared Morse index of the model
/// (0 for convex growth, 1 for concave growth).
struct TailModel
{
    Polynomial1D left;
    Polynomial1D right;
    int index = 0;

    const Polynomial1D& side(Side s) const { return s == Side::Left ? left : right; }

    /// True when p*x - tail(x) stays bounded above as x runs off to the
    /// given side, i.e. the tail grows faster than any line of slope p.
    bool conjugate_finite(Side s, double p) const
    {
        const Polynomial1D& poly = side(s);
        int d = poly.degree();
        double sign = (s == Side::Right) ? 1.0 : -1.0;
        if (d >= 2) {
            // leading behaviour of -tail(x) with x -> sign*inf
            double lead = -poly.leading() * std::pow(sign, d);
            return lead < 0.0;
        }
        double slope = d == 1 ? poly.coefficients[1] : 0.0;
        // (p - slope) * x must not grow.
        double growth = (p - slope) * sign;
        return growth <= 0.0;
    }
};

/// Uniformly sampled function of one variable with an explicit tail model.
/// Entries with `finite[i] == false` stand for +infinity.
struct GridFunction
{
    double x0 = 0.0;
    double step = 1.0;
    std::vector<double> values;
    std::vector<bool> finite;
    std::optional<TailModel> tail;

    GridFunction() = default;

    GridFunction(double x0_, double step_, std::vector<double> values_,
                 std::optional<TailModel> tail_ = std::nullopt)
        : x0(x0_)
        , step(step_)
        , values(std::move(values_))
        , finite(values.size(), true)
        , tail(std::move(tail_))
    {
        if (!(step > 0.0))
            throw Error(ErrorCode::Range, "grid step must be positive");
    }

    template <typename F>
    static GridFunction sample(F&& f, double lo, double hi, double step,
                               std::optional<TailModel> tail = std::nullopt)
    {
        auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = f(lo + static_cast<double>(i) * step);
        return GridFunction(lo, step, std::move(v), std::move(tail));
    }

    std::size_t size() const { return values.size(); }
    double x(std::size_t i) const { return x0 + static_cast<double>(i) * step; }
    double x_last() const { return x(size() - 1); }
    bool is_finite(std::size_t i) const { return finite.empty() || finite[i]; }

    /// Nodal derivative: centered differences inside, tail derivative at the
    /// two ends (one-sided difference when there is no tail).
    double node_slope(std::size_t i) const
    {
        const std::size_t n = size();
        if (n < 2)
            return tail ? tail->right.derivative(x(i)) : 0.0;
        if (i == 0)
            return tail ? tail->left.derivative(x0) : (values[1] - values[0]) / step;
        if (i == n - 1)
            return tail ? tail->right.derivative(x_last())
                        : (values[n - 1] - values[n - 2]) / step;
        return (values[i + 1] - values[i - 1]) / (2.0 * step);
    }

    /// Value and derivative: cubic Hermite inside the grid, tail model
    /// outside. Throws when asked to extrapolate without a tail.
    std::pair<double, double> evaluate(double xq) const
    {
        if (values.empty())
            throw Error(ErrorCode::Range, "empty grid function");
        if (xq < x0 || xq > x_last()) {
            if (!tail)
                throw Error(ErrorCode::NoTailModel,
                            "x=" + std::to_string(xq) + " outside sampled range without tail model");
            const Polynomial1D& p = xq < x0 ? tail->left : tail->right;
            return {p.value(xq), p.derivative(xq)};
        }
        double s = (xq - x0) / step;
        auto i = static_cast<std::size_t>(std::floor(s));
        if (i >= size() - 1)
            i = size() - 2;
        double t = s - static_cast<double>(i);
        double y0 = values[i], y1 = values[i + 1];
        double m0 = node_slope(i) * step, m1 = node_slope(i + 1) * step;
        double t2 = t * t, t3 = t2 * t;
        double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
        double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        double val = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1;
        double d01 = -6 * t2 + 6 * t, d11 = 3 * t2 - 2 * t;
        double der = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / step;
        return {val, der};
    }

    double operator()(double xq) const { return evaluate(xq).first; }

    /// Piecewise-linear value used by the discrete convex kit.
    double linear(double xq) const
    {
        if (xq < x0 || xq > x_last()) {
            if (!tail)
                throw Error(ErrorCode::NoTailModel, "linear lookup outside grid");
            return (xq < x0 ? tail->left : tail->right).value(xq);
        }
        double s = (xq - x0) / step;
        auto i = static_cast<std::size_t>(std::floor(s));
        if (i >= size() - 1)
            return values.back();
        double t = s - static_cast<double>(i);
        if (!is_finite(i) || !is_finite(i + 1))
            return std::numeric_limits<double>::infinity();
        return (1 - t) * values[i] + t * values[i + 1];
    }
};

inline TailModel tail_from_json(const nlohmann::json& j)
{
    if (j.value("kind", std::string("poly")) != "poly")
        throw Error(ErrorCode::Parse, "unsupported tail kind");
    TailModel t;
    if (j.contains("coefficients")) {
        t.left.coefficients = j.at("coefficients").get<std::vector<double>>();
        t.right = t.left;
    }
    if (j.contains("left"))
        t.left.coefficients = j.at("left").get<std::vector<double>>();
    if (j.contains("right"))
        t.right.coefficients = j.at("right").get<std::vector<double>>();
    t.index = j.value("index", 0);
    return t;
}

inline nlohmann::json tail_to_json(const TailModel& t)
{
    return {{"kind", "poly"},
            {"left", t.left.coefficients},
            {"right", t.right.coefficients},
            {"index", t.index}};
}

/// Reads `x,value` rows (header optional). "inf" marks a masked entry.
inline GridFunction read_grid_csv(std::istream& in, std::optional<TailModel> tail = std::nullopt)
{
    std::vector<double> xs, vs;
    std::vector<bool> fin;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw Error(ErrorCode::Parse, "expected 'x,value' row: " + line);
        std::string a = line.substr(0, comma), b = line.substr(comma + 1);
        char* end = nullptr;
        double xv = std::strtod(a.c_str(), &end);
        if (end == a.c_str())
            continue; // header
        double vv = std::strtod(b.c_str(), &end);
        bool f = std::isfinite(vv);
        xs.push_back(xv);
        vs.push_back(f ? vv : 0.0);
        fin.push_back(f);
    }
    if (xs.size() < 2)
        throw Error(ErrorCode::Parse, "grid csv needs at least two rows");
    double step = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (std::abs(xs[i] - xs[i - 1] - step) > 1e-6 * std::max(1.0, step))
            throw Error(ErrorCode::Parse, "grid csv is not uniformly spaced");
    GridFunction g(xs.front(), step, std::move(vs), std::move(tail));
    g.finite = std::move(fin);
    return g;
}

inline GridFunction read_grid_files(const std::string& csv_path, const std::string& tail_path)
{
    std::ifstream in(csv_path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + csv_path);
    std::optional<TailModel> tail;
    if (!tail_path.empty()) {
        std::ifstream tj(tail_path);
        if (!tj)
            throw Error(ErrorCode::Io, "cannot open " + tail_path);
        tail = tail_from_json(nlohmann::json::parse(tj));
    }
    return read_grid_csv(in, std::move(tail));
}

inline void write_grid_csv(std::ostream& out, const GridFunction& g, const char* value_name = "value")
{
    out << "x," << value_name << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < g.size(); ++i) {
        out << g.x(i) << ',';
        if (g.is_finite(i))
            out << g.values[i];
        else
            out << "inf";
        out << '\n';
    }
}

} // namespace legtk

#endif // LEGTK_GRID_FUNCTION_HPP
