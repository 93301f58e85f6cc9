#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "legtk/convex_kit.hpp"
#include "legtk/figures.hpp"
#include "legtk/front_export.hpp"
#include "legtk/verify.hpp"

#ifndef LEGTK_SCENARIO_DIR
#define LEGTK_SCENARIO_DIR "scenarios"
#endif

namespace fs = std::filesystem;
using namespace legtk;

namespace {

struct GfInput
{
    std::string path;
    double box = 3.0;
    double fiber_step = 0.05;
};

void add_gf_options(CLI::App* cmd, GfInput& in)
{
    cmd->add_option("--gf", in.path, "JSON file: a gf expression, or an object with a \"gf\" member")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--box", in.box, "half-width of the fiber search box")->capture_default_str();
    cmd->add_option("--fiber-step", in.fiber_step, "fiber scan step")->capture_default_str();
}

// Box and step in the file win over the command-line defaults only when the
// flags were not given explicitly.
GFExpr load_gf(GfInput& in, const CLI::App* cmd)
{
    std::ifstream f(in.path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, in.path + ": " + e.what());
    }
    nlohmann::json expr = j;
    if (j.contains("gf")) {
        expr = j.at("gf");
        if (j.contains("box") && cmd->count("--box") == 0)
            in.box = j.at("box").get<double>();
        if (j.contains("fiber_step") && cmd->count("--fiber-step") == 0)
            in.fiber_step = j.at("fiber_step").get<double>();
    }
    try {
        return gf_from_json(expr, fs::path(in.path).parent_path());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, in.path + ": " + e.what());
    }
}

std::string extension_of(const std::string& path)
{
    std::string ext = fs::path(path).extension().string();
    return ext.empty() ? ext : ext.substr(1);
}

void write_text(const std::string& path, const std::string& text)
{
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream o(path);
    if (!o)
        throw Error(ErrorCode::Io, "cannot write " + path);
    o << text;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Legendrian operations, generating functions and selectors"};
    app.require_subcommand(1);

    GfInput gf;
    double qmin = -2.0, qmax = 2.0, qstep = 0.01;
    std::string out;

    auto* front = app.add_subcommand("front", "sample the contour of a gf and export its front");
    add_gf_options(front, gf);
    front->add_option("--qmin", qmin)->capture_default_str();
    front->add_option("--qmax", qmax)->capture_default_str();
    front->add_option("--step", qstep, "base grid step")->capture_default_str();
    front->add_option("--out", out, "output file; .csv, .svg or .json")->required();

    std::string field = "z2";
    std::optional<int> index;
    auto* sel = app.add_subcommand("selector", "min-max selector curve of a gf");
    add_gf_options(sel, gf);
    sel->add_option("--qmin", qmin)->capture_default_str();
    sel->add_option("--qmax", qmax)->capture_default_str();
    sel->add_option("--step", qstep, "base grid step")->capture_default_str();
    sel->add_option("--field", field, "coefficient field")->check(CLI::IsMember({"z2", "q"}))->capture_default_str();
    sel->add_option("--index", index, "min-max index, overriding the gf metadata");
    sel->add_option("--out", out, "curve CSV (q,s,iota,n_critical)")->required();

    std::string in, tail, method = "llt";
    auto* conj = app.add_subcommand("conjugate", "discrete Legendre-Fenchel transform of a sampled function");
    conj->add_option("--in", in, "CSV x,value")->required()->check(CLI::ExistingFile);
    conj->add_option("--tail", tail, "tail model JSON")->check(CLI::ExistingFile);
    conj->add_option("--method", method)->check(CLI::IsMember({"llt", "brute"}))->capture_default_str();
    conj->add_option("--out", out, "CSV x,value of the conjugate")->required();

    std::string suite = "all", report, scenario_dir = LEGTK_SCENARIO_DIR;
    unsigned threads = 0;
    auto* ver = app.add_subcommand("verify", "run identity suites against their scenario files");
    ver->add_option("--suite", suite, "all or one suite name")->capture_default_str();
    ver->add_option("--report", report, "JSON report path");
    ver->add_option("--scenarios", scenario_dir, "scenario directory")->capture_default_str();
    ver->add_option("--threads", threads, "worker threads, 0 for all cores")->capture_default_str();

    std::string fig_id;
    bool experimental = false;
    auto* fig = app.add_subcommand("figure", "reproduce a figure as SVG plus feature JSON");
    fig->add_option("--id", fig_id, "figure id, or all")->required();
    fig->add_option("--out", out, "output directory")->required();
    fig->add_flag("--experimental", experimental, "allow fig2 and fig3");
    fig->add_option("--scenarios", scenario_dir, "scenario directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*front) {
            GFExpr f = load_gf(gf, front);
            auto qs = uniform_grid(qmin, qmax, qstep);
            LegendrianCloud c;
            if (f.base_dim() == 1)
                c = sample_legendrian(f, qs, Box::cube(f.fiber_dim(), gf.box), gf.fiber_step);
            else
                c = sample_legendrian_grid(f, std::vector<std::vector<double>>(f.base_dim(), qs),
                                           Box::cube(f.fiber_dim(), gf.box), gf.fiber_step);
            export_cloud_file(c, parse_export_format(extension_of(out)), out);
            for (const auto& w : c.warnings)
                std::cerr << "warning: " << w << '\n';
            std::cerr << c.size() << " points, " << c.branch_count() << " branches\n";
            return 0;
        }
        if (*sel) {
            GFExpr f = load_gf(gf, sel);
            SelectorOptions o;
            o.minmax.field = field == "q" ? Field::Q : Field::Z2;
            o.index = index;
            auto qs = uniform_grid(qmin, qmax, qstep);
            auto curve = selector(f, qs, Box::cube(f.fiber_dim(), gf.box), gf.fiber_step, o);
            std::ostringstream csv;
            csv << "q,s,iota,n_critical\n" << std::setprecision(17);
            for (std::size_t i = 0; i < curve.size(); ++i)
                csv << curve.q_grid[i][0] << ',' << curve.s_values[i] << ',' << curve.iota[i] << ','
                    << curve.critical[i].points.size() << '\n';
            write_text(out, csv.str());
            for (const auto& fl : curve.flags)
                std::cerr << "flag: " << fl << '\n';
            return 0;
        }
        if (*conj) {
            GridFunction g = read_grid_files(in, tail);
            GridFunction star = lf_transform(g, std::nullopt, method == "brute" ? ConjugateMethod::Brute
                                                                                : ConjugateMethod::Llt);
            std::ostringstream csv;
            write_grid_csv(csv, star);
            write_text(out, csv.str());
            return 0;
        }
        if (*ver) {
            auto reports = run_suites(suite, scenario_dir, threads);
            for (const auto& r : reports)
                for (const auto& c : r.checks)
                    std::cout << (c.passed ? "PASS " : "FAIL ") << r.suite << '/' << c.name << "  defect "
                              << c.defect << (c.compare == Compare::AtMost ? " <= " : " >= ") << c.tolerance
                              << (c.error_code ? "  error: " + c.error_message : "") << '\n';
            nlohmann::json j = to_json(reports);
            if (!report.empty())
                write_text(report, j.dump(2) + "\n");
            return j.at("passed").get<bool>() ? 0 : 1;
        }
        if (*fig) {
            auto ids = fig_id == "all" ? figure_ids(experimental) : std::vector<std::string>{fig_id};
            bool ok = true;
            for (const auto& id : ids) {
                FigureOutput f = reproduce_figure(id, fs::path(scenario_dir), experimental);
                write_figure(f, out);
                for (const auto& c : f.report.checks)
                    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
                std::cout << id << ": " << (fs::path(out) / (id + ".svg")).string() << '\n';
                ok = ok && f.passed();
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
