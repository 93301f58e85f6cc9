#ifndef LEGTK_CUBICAL_PERSISTENCE_HPP
#define LEGTK_CUBICAL_PERSISTENCE_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "legtk/error.hpp"

namespace legtk {

enum class Field
{
    Z2,
    Q
};

inline const char* to_string(Field f) { return f == Field::Z2 ? "z2" : "q"; }

struct Bar
{
    int degree = 0;
    double birth = 0.0;
    double death = std::numeric_limits<double>::infinity();
    bool essential = false;
    std::vector<int> birth_cell; // Khalimsky coordinates: even = vertex, odd = edge midpoint
};

struct PersistenceDiagram
{
    std::vector<Bar> bars;
    Field field = Field::Z2;
    std::size_t cells = 0;

    /// Essential bar count per degree, sized dim + 1.
    std::vector<int> essential_counts(std::size_t dim) const
    {
        std::vector<int> c(dim + 1, 0);
        for (const Bar& b : bars)
            if (b.essential && b.degree >= 0 && static_cast<std::size_t>(b.degree) <= dim)
                ++c[static_cast<std::size_t>(b.degree)];
        return c;
    }
};

/// Vertex samples of a function on a regular grid, row-major with the last
/// axis fastest.
struct CubicalGrid
{
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

namespace detail {

struct CubicalComplex
{
    std::vector<std::size_t> kdim;   // Khalimsky extent per axis, 2N - 1
    std::vector<std::size_t> stride; // strides in the Khalimsky array
    std::vector<double> value;       // lower-star value per cell
    std::size_t size = 0;

    std::vector<int> coords(std::size_t lin) const
    {
        std::vector<int> c(kdim.size());
        for (std::size_t a = 0; a < kdim.size(); ++a) {
            c[a] = static_cast<int>(lin / stride[a]);
            lin %= stride[a];
        }
        return c;
    }

    int cell_dim(std::size_t lin) const
    {
        int d = 0;
        for (std::size_t a = 0; a < kdim.size(); ++a) {
            d += static_cast<int>((lin / stride[a]) & 1u);
            lin %= stride[a];
        }
        return d;
    }
};

inline CubicalComplex build_lower_star(const CubicalGrid& g)
{
    const std::size_t d = g.shape.size();
    CubicalComplex cx;
    cx.kdim.resize(d);
    cx.stride.assign(d, 1);
    std::size_t nv = 1;
    for (std::size_t a = 0; a < d; ++a) {
        if (g.shape[a] < 2)
            throw Error(ErrorCode::Range, "cubical grid needs at least two samples per axis");
        cx.kdim[a] = 2 * g.shape[a] - 1;
        nv *= g.shape[a];
    }
    if (g.values.size() != nv)
        throw Error(ErrorCode::Arity, "cubical grid value count does not match its shape");
    for (std::size_t a = d - 1; a-- > 0;)
        cx.stride[a] = cx.stride[a + 1] * cx.kdim[a + 1];
    cx.size = cx.stride[0] * cx.kdim[0];
    cx.value.assign(cx.size, -std::numeric_limits<double>::infinity());

    std::vector<std::size_t> vstride(d, 1);
    for (std::size_t a = d - 1; a-- > 0;)
        vstride[a] = vstride[a + 1] * g.shape[a + 1];
    for (std::size_t v = 0; v < nv; ++v) {
        std::size_t rem = v, lin = 0;
        for (std::size_t a = 0; a < d; ++a) {
            lin += 2 * (rem / vstride[a]) * cx.stride[a];
            rem %= vstride[a];
        }
        cx.value[lin] = g.values[v];
    }
    // Axis by axis: a cell odd along `a` and even along later axes takes the
    // max of its two neighbours along `a`, which are already filled.
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t lin = 0; lin < cx.size; ++lin) {
            std::size_t rem = lin;
            bool take = true;
            for (std::size_t b = 0; b < d && take; ++b) {
                std::size_t c = rem / cx.stride[b];
                rem %= cx.stride[b];
                if (b == a && (c & 1u) == 0)
                    take = false;
                if (b > a && (c & 1u))
                    take = false;
            }
            if (take)
                cx.value[lin] = std::max(cx.value[lin - cx.stride[a]], cx.value[lin + cx.stride[a]]);
        }
    }
    return cx;
}

using Rational = boost::multiprecision::cpp_rational;

template <class Entry>
std::uint32_t row_of(const Entry& e)
{
    if constexpr (std::is_same_v<Entry, std::uint32_t>)
        return e;
    else
        return e.first;
}

// Z2 column addition: symmetric difference of sorted index lists.
inline void add_column(std::vector<std::uint32_t>& dst, const std::vector<std::uint32_t>& src,
                       std::vector<std::uint32_t>& tmp)
{
    tmp.clear();
    std::set_symmetric_difference(dst.begin(), dst.end(), src.begin(), src.end(), std::back_inserter(tmp));
    dst.swap(tmp);
}

// Q column elimination: dst -= (dst.low / src.low) * src.
inline void add_column(std::vector<std::pair<std::uint32_t, Rational>>& dst,
                       const std::vector<std::pair<std::uint32_t, Rational>>& src,
                       std::vector<std::pair<std::uint32_t, Rational>>& tmp)
{
    Rational factor = dst.back().second / src.back().second;
    tmp.clear();
    auto i = dst.cbegin();
    auto j = src.cbegin();
    while (i != dst.cend() || j != src.cend()) {
        if (j == src.cend() || (i != dst.cend() && i->first < j->first)) {
            tmp.push_back(*i++);
        } else if (i == dst.cend() || j->first < i->first) {
            tmp.emplace_back(j->first, -factor * j->second);
            ++j;
        } else {
            Rational c = i->second - factor * j->second;
            if (c != 0)
                tmp.emplace_back(i->first, std::move(c));
            ++i;
            ++j;
        }
    }
    dst.swap(tmp);
}

template <class Entry>
PersistenceDiagram reduce(const CubicalComplex& cx, double cutoff, Field field)
{
    const std::size_t d = cx.kdim.size();
    std::vector<std::uint32_t> order;
    order.reserve(cx.size);
    for (std::size_t lin = 0; lin < cx.size; ++lin)
        if (cx.value[lin] > cutoff)
            order.push_back(static_cast<std::uint32_t>(lin));
    std::vector<int> dim(cx.size, 0);
    for (std::uint32_t c : order)
        dim[c] = cx.cell_dim(c);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (cx.value[a] != cx.value[b])
            return cx.value[a] < cx.value[b];
        if (dim[a] != dim[b])
            return dim[a] < dim[b];
        return a < b;
    });
    const std::size_t m = order.size();
    std::vector<std::int64_t> pos(cx.size, -1);
    for (std::size_t i = 0; i < m; ++i)
        pos[order[i]] = static_cast<std::int64_t>(i);

    auto boundary = [&](std::uint32_t cell) {
        std::vector<Entry> col;
        std::size_t rem = cell;
        int odd_seen = 0;
        for (std::size_t a = 0; a < d; ++a) {
            std::size_t c = rem / cx.stride[a];
            rem %= cx.stride[a];
            if ((c & 1u) == 0)
                continue;
            int sign = (odd_seen % 2 == 0) ? 1 : -1;
            ++odd_seen;
            for (int side : {-1, 1}) {
                std::size_t face = side < 0 ? cell - cx.stride[a] : cell + cx.stride[a];
                if (pos[face] < 0)
                    continue; // face lies in the coned-off low sublevel
                auto r = static_cast<std::uint32_t>(pos[face]);
                if constexpr (std::is_same_v<Entry, std::uint32_t>)
                    col.push_back(r);
                else
                    col.emplace_back(r, Rational(side * sign));
            }
        }
        std::sort(col.begin(), col.end(), [](const Entry& x, const Entry& y) { return row_of(x) < row_of(y); });
        return col;
    };

    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> pivot_col(m, kNone); // row -> column owning it as pivot
    std::vector<char> cleared(m, 0);
    std::vector<std::vector<Entry>> reduced(m);
    std::vector<Entry> tmp;

    for (int D = static_cast<int>(d); D >= 1; --D) {
        for (std::size_t j = 0; j < m; ++j) {
            if (dim[order[j]] != D || cleared[j])
                continue;
            std::vector<Entry> col = boundary(order[j]);
            while (!col.empty()) {
                std::uint32_t low = row_of(col.back());
                std::uint32_t other = pivot_col[low];
                if (other == kNone)
                    break;
                add_column(col, reduced[other], tmp);
            }
            if (!col.empty()) {
                std::uint32_t low = row_of(col.back());
                pivot_col[low] = static_cast<std::uint32_t>(j);
                cleared[low] = 1;
                reduced[j] = std::move(col);
            }
        }
    }

    PersistenceDiagram out;
    out.field = field;
    out.cells = m;
    for (std::size_t j = 0; j < m; ++j) {
        if (!reduced[j].empty()) {
            std::size_t i = row_of(reduced[j].back());
            double b = cx.value[order[i]], e = cx.value[order[j]];
            if (e > b)
                out.bars.push_back({dim[order[i]], b, e, false, cx.coords(order[i])});
        } else if (!cleared[j] && pivot_col[j] == kNone) {
            out.bars.push_back({dim[order[j]], cx.value[order[j]], std::numeric_limits<double>::infinity(), true,
                                cx.coords(order[j])});
        }
    }
    return out;
}

} // namespace detail

/// Persistence of the lower-star sublevel filtration of `grid` relative to
/// the subcomplex of cells with value <= cutoff. The relative pair is built
/// as a quotient: those cells are dropped, so their chains vanish.
/// Essential bars then record H_*(X, X_{<= cutoff}).
inline PersistenceDiagram relative_sublevel_persistence(const CubicalGrid& grid, double cutoff, Field field)
{
    if (grid.shape.empty() || grid.shape.size() > 3)
        throw Error(ErrorCode::Arity, "cubical persistence supports 1 to 3 dimensions");
    detail::CubicalComplex cx = detail::build_lower_star(grid);
    if (field == Field::Z2)
        return detail::reduce<std::uint32_t>(cx, cutoff, field);
    return detail::reduce<std::pair<std::uint32_t, detail::Rational>>(cx, cutoff, field);
}

} // namespace legtk

#endif // LEGTK_CUBICAL_PERSISTENCE_HPP
