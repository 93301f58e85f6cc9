#ifndef LEGTK_GF_JSON_HPP
#define LEGTK_GF_JSON_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "legtk/gf_ops.hpp"

namespace legtk {

namespace detail {

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j)
{
    auto rows = j.get<std::vector<std::vector<double>>>();
    auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd A(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != m)
            throw Error(ErrorCode::Parse, "matrix must be square");
        for (Eigen::Index c = 0; c < m; ++c)
            A(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return A;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& A)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < A.cols(); ++c)
            row.push_back(A(r, c));
        rows.push_back(row);
    }
    return rows;
}

} // namespace detail

/// Parses an expression. Relative csv/tail paths of sampled nodes are
/// resolved against `base_dir`.
inline GFExpr gf_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    const std::string kind = j.at("kind").get<std::string>();
    auto child = [&](const char* key) { return gf_from_json(j.at(key), base_dir); };
    GFExpr out;

    if (kind == "poly1d") {
        out = poly1d(j.at("coefficients").get<std::vector<double>>());
    } else if (kind == "poly") {
        std::vector<Monomial> terms;
        for (const auto& t : j.at("terms"))
            terms.push_back({t.at("coef").get<double>(), t.at("exponents").get<std::vector<int>>()});
        out = polynomial(j.at("base_dim").get<std::size_t>(), j.at("fiber_dim").get<std::size_t>(), std::move(terms));
    } else if (kind == "quadratic") {
        out = quadratic_form(j.value("base_dim", std::size_t{1}), detail::matrix_from_json(j.at("matrix")));
    } else if (kind == "sampled") {
        if (j.contains("csv")) {
            auto resolve = [&](const std::string& p) {
                std::filesystem::path fp(p);
                return (fp.is_relative() ? base_dir / fp : fp).string();
            };
            out = sampled(read_grid_files(resolve(j.at("csv").get<std::string>()),
                                          j.contains("tail_file") ? resolve(j.at("tail_file").get<std::string>()) : ""));
        } else {
            std::optional<TailModel> tail;
            if (j.contains("tail"))
                tail = tail_from_json(j.at("tail"));
            out = sampled(GridFunction(j.at("x0").get<double>(), j.at("step").get<double>(),
                                       j.at("values").get<std::vector<double>>(), tail));
        }
    } else if (kind == "transform_t") {
        out = transform_T(child("child"));
    } else if (kind == "slice") {
        out = slice_gf(child("child"), j.at("kept").get<std::vector<std::size_t>>());
    } else if (kind == "contour") {
        out = contour_gf(child("child"), j.at("kept").get<std::vector<std::size_t>>());
    } else if (kind == "product") {
        out = product_gf(child("left"), child("right"));
    } else if (kind == "sum") {
        out = sum_gf(child("left"), child("right"));
    } else if (kind == "convolution") {
        out = convolution_gf(child("left"), child("right"));
    } else if (kind == "stabilize") {
        out = stabilize(child("child"), detail::matrix_from_json(j.at("matrix")));
    } else if (kind == "fiber_diffeo") {
        std::string m = j.at("map").get<std::string>();
        if (m != "phi" && m != "phi_inv")
            throw Error(ErrorCode::Parse, "unknown fiber map " + m);
        out = fiber_diffeo(child("child"), m == "phi" ? FiberMap::Phi : FiberMap::PhiInv,
                           j.value("offset1", std::size_t{0}), j.at("offset2").get<std::size_t>());
    } else if (kind == "path_blend") {
        out = theorem327_path(child("left"), child("right"), j.at("t").get<double>(),
                              j.value("weight", std::string("linear")) == "quadratic" ? PathWeight::Quadratic
                                                                                     : PathWeight::Linear);
    } else {
        throw Error(ErrorCode::Parse, "unknown expression kind '" + kind + "'");
    }

    if (j.contains("index")) {
        AsMeta meta;
        meta.index = j.at("index").get<int>();
        meta.bound = j.value("bound", 0.0);
        out = with_meta(out, meta);
    }
    return out;
}

inline nlohmann::json gf_to_json(const GFExpr& f)
{
    const Node& nd = f.node();
    nlohmann::json j;
    j["kind"] = to_string(nd.kind);
    switch (nd.kind) {
    case NodeKind::Poly1D:
        j["coefficients"] = nd.coefficients;
        break;
    case NodeKind::Polynomial: {
        j["base_dim"] = nd.base_dim;
        j["fiber_dim"] = nd.fiber_dim;
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : nd.terms)
            terms.push_back({{"coef", t.coef}, {"exponents", t.exponents}});
        j["terms"] = terms;
        break;
    }
    case NodeKind::QuadraticForm:
        j["base_dim"] = nd.base_dim;
        j["matrix"] = detail::matrix_to_json(nd.matrix);
        break;
    case NodeKind::SampledTail:
        j["x0"] = nd.grid->x0;
        j["step"] = nd.grid->step;
        j["values"] = nd.grid->values;
        if (nd.grid->tail)
            j["tail"] = tail_to_json(*nd.grid->tail);
        break;
    case NodeKind::TransformT:
        j["child"] = gf_to_json(nd.children[0]);
        break;
    case NodeKind::Slice:
    case NodeKind::Contour:
        j["kept"] = nd.kept;
        j["child"] = gf_to_json(nd.children[0]);
        break;
    case NodeKind::Product:
    case NodeKind::SumOp:
    case NodeKind::Convolution:
        j["left"] = gf_to_json(nd.children[0]);
        j["right"] = gf_to_json(nd.children[1]);
        break;
    case NodeKind::Stabilize:
        j["matrix"] = detail::matrix_to_json(nd.matrix);
        j["child"] = gf_to_json(nd.children[0]);
        break;
    case NodeKind::FiberDiffeo:
        j["map"] = to_string(nd.map);
        j["offset1"] = nd.kept[0];
        j["offset2"] = nd.kept[1];
        j["child"] = gf_to_json(nd.children[0]);
        break;
    case NodeKind::PathBlend:
        j["t"] = nd.t;
        j["weight"] = nd.t_squared ? "quadratic" : "linear";
        j["left"] = gf_to_json(nd.children[0]);
        j["right"] = gf_to_json(nd.children[1]);
        break;
    }
    return j;
}

} // namespace legtk

#endif // LEGTK_GF_JSON_HPP
