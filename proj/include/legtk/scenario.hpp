#ifndef LEGTK_SCENARIO_HPP
#define LEGTK_SCENARIO_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "legtk/gf_json.hpp"
#include "legtk/legendrian_cloud.hpp"
#include "legtk/minmax.hpp"

namespace legtk {

inline constexpr int kScenarioSchema = 1;

/// A scenario file: named constructions, grids and per-check tolerances.
struct Scenario
{
    std::string name;
    std::filesystem::path dir;
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json checks = nlohmann::json::object();
    unsigned seed = 0;

    const nlohmann::json& check_entry(const std::string& check) const
    {
        auto it = checks.find(check);
        if (it == checks.end())
            throw Error(ErrorCode::Parse, "scenario '" + name + "' declares no check '" + check + "'");
        return *it;
    }

    double tolerance(const std::string& check) const
    {
        const auto& e = check_entry(check);
        if (!e.contains("tolerance"))
            throw Error(ErrorCode::Parse, "check '" + check + "' has no tolerance");
        return e.at("tolerance").get<double>();
    }

    std::string anchor(const std::string& check) const
    {
        return check_entry(check).at("anchor").get<std::string>();
    }

    const nlohmann::json& param(const std::string& key) const
    {
        auto it = params.find(key);
        if (it == params.end())
            throw Error(ErrorCode::Parse, "scenario '" + name + "' misses parameter '" + key + "'");
        return *it;
    }

    template <typename T>
    T get(const std::string& key) const
    {
        return param(key).get<T>();
    }

    GFExpr expr(const nlohmann::json& j) const { return gf_from_json(j, dir); }
    GFExpr gf(const std::string& key) const { return expr(param(key)); }

    /// {"lo", "hi", "step"} -> uniform grid.
    std::vector<double> grid(const std::string& key) const
    {
        const auto& g = param(key);
        return uniform_grid(g.at("lo").get<double>(), g.at("hi").get<double>(), g.at("step").get<double>());
    }

    double grid_step(const std::string& key) const { return param(key).at("step").get<double>(); }
};

inline Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& dir = {})
{
    if (!j.contains("schema") || j.at("schema").get<int>() != kScenarioSchema)
        throw Error(ErrorCode::Parse, "scenario schema must be " + std::to_string(kScenarioSchema));
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.dir = dir;
    s.params = j.value("params", nlohmann::json::object());
    s.checks = j.value("checks", nlohmann::json::object());
    s.seed = j.value("seed", 0u);
    for (const auto& [key, entry] : s.checks.items())
        if (!entry.contains("anchor") || !entry.contains("tolerance"))
            throw Error(ErrorCode::Parse, "check '" + key + "' needs an anchor and a tolerance");
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read scenario " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
    return scenario_from_json(j, path.parent_path());
}

enum class Compare
{
    AtMost,  // pass when defect <= tolerance
    AtLeast, // pass when defect >= tolerance (a separation that must show)
};

/// What a check body measures.
struct Measurement
{
    double defect = 0.0;
    std::string detail;
    Compare compare = Compare::AtMost;
};

struct CheckResult
{
    std::string name;
    std::string anchor;
    bool passed = false;
    double defect = std::numeric_limits<double>::quiet_NaN();
    double tolerance = std::numeric_limits<double>::quiet_NaN();
    Compare compare = Compare::AtMost;
    std::string detail;
    std::optional<std::string> error_code;
    std::string error_message;
};

struct CheckSpec
{
    std::string name;
    std::function<Measurement()> body;
};

struct Report
{
    std::string suite;
    std::vector<CheckResult> checks;

    bool passed() const
    {
        return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }

    const CheckResult* find(const std::string& name) const
    {
        for (const auto& c : checks)
            if (c.name == name)
                return &c;
        return nullptr;
    }
};

/// Runs the checks concurrently; any error becomes a failed check carrying
/// its structured cause. Results come back sorted by name.
inline Report run_checks(const std::string& suite, const Scenario& sc, const std::vector<CheckSpec>& specs,
                         unsigned threads = 0)
{
    Report rep;
    rep.suite = suite;
    rep.checks.resize(specs.size());
    detail::parallel_for(specs.size(), threads, [&](std::size_t i) {
        CheckResult& r = rep.checks[i];
        r.name = specs[i].name;
        try {
            r.anchor = sc.anchor(r.name);
            r.tolerance = sc.tolerance(r.name);
            Measurement m = specs[i].body();
            r.defect = m.defect;
            r.detail = std::move(m.detail);
            r.compare = m.compare;
            r.passed = std::isfinite(r.defect) &&
                       (m.compare == Compare::AtMost ? r.defect <= r.tolerance : r.defect >= r.tolerance);
        } catch (const Error& e) {
            r.error_code = to_string(e.code());
            r.error_message = e.what();
        } catch (const std::exception& e) {
            r.error_code = "internal";
            r.error_message = e.what();
        }
    });
    std::sort(rep.checks.begin(), rep.checks.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return rep;
}

inline nlohmann::json to_json(const CheckResult& c)
{
    auto num = [](double x) -> nlohmann::json {
        if (std::isnan(x))
            return nullptr;
        if (std::isinf(x))
            return x > 0 ? "inf" : "-inf";
        return x;
    };
    nlohmann::json j{{"name", c.name},
                     {"anchor", c.anchor},
                     {"passed", c.passed},
                     {"defect", num(c.defect)},
                     {"tolerance", num(c.tolerance)},
                     {"compare", c.compare == Compare::AtMost ? "at_most" : "at_least"},
                     {"detail", c.detail}};
    if (c.error_code)
        j["error"] = {{"code", *c.error_code}, {"message", c.error_message}};
    return j;
}

inline nlohmann::json to_json(const Report& r)
{
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks)
        checks.push_back(to_json(c));
    return {{"suite", r.suite}, {"passed", r.passed()}, {"checks", std::move(checks)}};
}

inline nlohmann::json to_json(const std::vector<Report>& reports)
{
    nlohmann::json suites = nlohmann::json::array();
    bool ok = !reports.empty();
    for (const auto& r : reports) {
        suites.push_back(to_json(r));
        ok = ok && r.passed();
    }
    return {{"schema", kScenarioSchema}, {"passed", ok}, {"suites", std::move(suites)}};
}

} // namespace legtk

#endif // LEGTK_SCENARIO_HPP
