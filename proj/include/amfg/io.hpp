#pragma once

#include "amfg/mfg.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace amfg
{

using json = nlohmann::ordered_json;

inline constexpr const char* artifact_version = "1.0.0";

class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Study-specific knobs that are not part of the problem itself.
struct CheckConfig
{
    int pmp_samples = 20;
    unsigned pmp_seed = 12345;
    std::size_t particles = 20000;
    std::vector<double> sweep_sigmas{0.1, 0.05, 0.025};
    double lq_tolerance = 0.02;
    double pmp_value_tolerance = 0.02;
    double pmp_feedback_tolerance = 0.05;
    double second_moment_tolerance = 0.05;
    double mass_tolerance = 1e-8;
};

struct RunConfig
{
    MFGProblem problem{PhaseGrid(-4, 4, -3, 3, 96, 96), TimeGrid(1.0, 200), {}, {}, {}, 0.0, {}};
    IterationConfig iteration;
    CheckConfig checks;
    std::string study;
};

namespace detail
{

template <class E>
struct EnumName
{
    E value;
    const char* name;
};

inline constexpr EnumName<RunningCost::Kind> running_kinds[] = {{RunningCost::Kind::zero, "zero"},
                                                                {RunningCost::Kind::constant, "constant"},
                                                                {RunningCost::Kind::cosine_bump, "cosine_bump"},
                                                                {RunningCost::Kind::gaussian_bump, "gaussian_bump"}};
inline constexpr EnumName<CouplingSpec::Kind> coupling_kinds[] = {
    {CouplingSpec::Kind::gaussian, "gaussian"}, {CouplingSpec::Kind::self_convolution_gaussian, "self_convolution_gaussian"}};
inline constexpr EnumName<InitialDensity::Kind> density_kinds[] = {{InitialDensity::Kind::truncated_gaussian, "truncated_gaussian"},
                                                                   {InitialDensity::Kind::bump, "bump"},
                                                                   {InitialDensity::Kind::two_bumps, "two_bumps"}};
inline constexpr EnumName<NumericalHamiltonian> flux_kinds[] = {{NumericalHamiltonian::lax_friedrichs, "lax_friedrichs"},
                                                                {NumericalHamiltonian::godunov, "godunov"}};
inline constexpr EnumName<IterationConfig::Metric> metric_kinds[] = {{IterationConfig::Metric::sliced_d1, "sliced_d1"},
                                                                     {IterationConfig::Metric::l1_density, "l1_density"}};
inline constexpr EnumName<IterationConfig::Start> start_kinds[] = {{IterationConfig::Start::free_transport, "free_transport"},
                                                                   {IterationConfig::Start::stationary, "stationary"}};

template <class E, std::size_t N>
const char* enum_to_string(const EnumName<E> (&table)[N], E v)
{
    for (const auto& e : table)
        if (e.value == v)
            return e.name;
    return "?";
}

template <class E, std::size_t N>
E enum_from_string(const EnumName<E> (&table)[N], const std::string& s, const std::string& where)
{
    for (const auto& e : table)
        if (s == e.name)
            return e.value;
    std::string options;
    for (const auto& e : table)
        options += std::string(options.empty() ? "" : ", ") + e.name;
    throw ConfigError(where + ": unknown value \"" + s + "\" (expected one of " + options + ")");
}

/// Reads fields of one JSON object, rejecting keys that were never asked for.
class ObjectReader
{
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        try
        {
            out = it->template get<T>();
        }
        catch (const json::exception&)
        {
            throw ConfigError(where(key) + ": wrong type (" + it->type_name() + ")");
        }
    }

    template <class E, std::size_t N>
    void get_enum(const char* key, const EnumName<E> (&table)[N], E& out)
    {
        std::string s = enum_to_string(table, out);
        get(key, s);
        out = enum_from_string(table, s, where(key));
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& child(const char* key)
    {
        seen_.insert(key);
        return j_.at(key);
    }
    std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(where(it.key().c_str()) + ": unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string line_column(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < byte && k < text.size(); ++k)
    {
        if (text[k] == '\n')
            ++line, col = 1;
        else
            ++col;
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

} // namespace detail

inline RunConfig config_from_json(const json& root)
{
    using detail::ObjectReader;
    RunConfig cfg;
    ObjectReader top(root, "");
    top.get("study", cfg.study);

    double x_min = cfg.problem.grid.x_min(), x_max = cfg.problem.grid.x_max();
    double v_min = cfg.problem.grid.v_min(), v_max = cfg.problem.grid.v_max();
    int nx = cfg.problem.grid.nx(), nv = cfg.problem.grid.nv();
    if (top.has("grid"))
    {
        ObjectReader r(top.child("grid"), "grid");
        r.get("x_min", x_min), r.get("x_max", x_max), r.get("v_min", v_min), r.get("v_max", v_max);
        r.get("nx", nx), r.get("nv", nv);
        r.finish();
    }
    double horizon = cfg.problem.time.horizon();
    int nt = cfg.problem.time.nt();
    if (top.has("time"))
    {
        ObjectReader r(top.child("time"), "time");
        r.get("horizon", horizon), r.get("nt", nt);
        r.finish();
    }
    try
    {
        cfg.problem.grid = PhaseGrid(x_min, x_max, v_min, v_max, nx, nv);
        cfg.problem.time = TimeGrid(horizon, nt);
    }
    catch (const std::invalid_argument& e)
    {
        throw ConfigError(e.what());
    }
    top.get("sigma", cfg.problem.sigma);

    if (top.has("running_cost"))
    {
        auto& l = cfg.problem.running;
        ObjectReader r(top.child("running_cost"), "running_cost");
        r.get_enum("kind", detail::running_kinds, l.kind);
        r.get("amplitude", l.amplitude), r.get("length_x", l.length_x), r.get("length_v", l.length_v);
        r.get("center_x", l.center_x), r.get("center_v", l.center_v);
        r.finish();
    }
    if (top.has("coupling"))
    {
        auto& c = cfg.problem.coupling;
        ObjectReader r(top.child("coupling"), "coupling");
        r.get_enum("kind", detail::coupling_kinds, c.kind);
        r.get("rho_F", c.rho_F), r.get("rho_G", c.rho_G), r.get("c_F", c.c_F), r.get("c_G", c.c_G);
        r.finish();
    }
    if (top.has("initial_density"))
    {
        auto& m = cfg.problem.m0;
        ObjectReader r(top.child("initial_density"), "initial_density");
        r.get_enum("kind", detail::density_kinds, m.kind);
        r.get("center_x", m.center_x), r.get("center_v", m.center_v);
        r.get("spread_x", m.spread_x), r.get("spread_v", m.spread_v), r.get("separation", m.separation);
        r.finish();
    }
    if (top.has("hjb"))
    {
        ObjectReader r(top.child("hjb"), "hjb");
        r.get_enum("flux", detail::flux_kinds, cfg.problem.hjb.flux);
        r.get("lf_theta_floor", cfg.problem.hjb.lf_theta_floor);
        if (!(cfg.problem.hjb.lf_theta_floor >= 0.0))
            throw ConfigError("hjb.lf_theta_floor must be >= 0");
        r.finish();
    }
    if (top.has("iteration"))
    {
        auto& it = cfg.iteration;
        ObjectReader r(top.child("iteration"), "iteration");
        r.get("damping", it.damping), r.get("tol_fp", it.tol_fp), r.get("max_iters", it.max_iters);
        r.get_enum("metric", detail::metric_kinds, it.metric);
        r.get("fictitious_play", it.fictitious_play);
        r.get_enum("start", detail::start_kinds, it.start);
        r.finish();
    }
    if (top.has("checks"))
    {
        auto& c = cfg.checks;
        ObjectReader r(top.child("checks"), "checks");
        r.get("pmp_samples", c.pmp_samples), r.get("pmp_seed", c.pmp_seed), r.get("particles", c.particles);
        r.get("sweep_sigmas", c.sweep_sigmas), r.get("lq_tolerance", c.lq_tolerance);
        r.get("pmp_value_tolerance", c.pmp_value_tolerance), r.get("pmp_feedback_tolerance", c.pmp_feedback_tolerance);
        r.get("second_moment_tolerance", c.second_moment_tolerance), r.get("mass_tolerance", c.mass_tolerance);
        r.finish();
        if (c.pmp_samples < 1)
            throw ConfigError("checks.pmp_samples: must be >= 1");
        for (double s : c.sweep_sigmas)
            if (!(s > 0.0))
                throw ConfigError("checks.sweep_sigmas: every entry must be positive");
    }
    top.finish();

    try
    {
        cfg.problem.validate();
        cfg.iteration.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline json config_to_json(const RunConfig& cfg)
{
    const auto& p = cfg.problem;
    json j;
    if (!cfg.study.empty())
        j["study"] = cfg.study;
    j["grid"] = {{"x_min", p.grid.x_min()}, {"x_max", p.grid.x_max()}, {"v_min", p.grid.v_min()},
                 {"v_max", p.grid.v_max()}, {"nx", p.grid.nx()},       {"nv", p.grid.nv()}};
    j["time"] = {{"horizon", p.time.horizon()}, {"nt", p.time.nt()}};
    j["sigma"] = p.sigma;
    j["running_cost"] = {{"kind", detail::enum_to_string(detail::running_kinds, p.running.kind)},
                         {"amplitude", p.running.amplitude},
                         {"length_x", p.running.length_x},
                         {"length_v", p.running.length_v},
                         {"center_x", p.running.center_x},
                         {"center_v", p.running.center_v}};
    j["coupling"] = {{"kind", detail::enum_to_string(detail::coupling_kinds, p.coupling.kind)},
                     {"rho_F", p.coupling.rho_F},
                     {"rho_G", p.coupling.rho_G},
                     {"c_F", p.coupling.c_F},
                     {"c_G", p.coupling.c_G}};
    j["initial_density"] = {{"kind", detail::enum_to_string(detail::density_kinds, p.m0.kind)},
                            {"center_x", p.m0.center_x},
                            {"center_v", p.m0.center_v},
                            {"spread_x", p.m0.spread_x},
                            {"spread_v", p.m0.spread_v},
                            {"separation", p.m0.separation}};
    j["hjb"] = {{"flux", detail::enum_to_string(detail::flux_kinds, p.hjb.flux)}, {"lf_theta_floor", p.hjb.lf_theta_floor}};
    const auto& it = cfg.iteration;
    j["iteration"] = {{"damping", it.damping},
                      {"tol_fp", it.tol_fp},
                      {"max_iters", it.max_iters},
                      {"metric", detail::enum_to_string(detail::metric_kinds, it.metric)},
                      {"fictitious_play", it.fictitious_play},
                      {"start", detail::enum_to_string(detail::start_kinds, it.start)}};
    const auto& c = cfg.checks;
    j["checks"] = {{"pmp_samples", c.pmp_samples},
                   {"pmp_seed", c.pmp_seed},
                   {"particles", c.particles},
                   {"sweep_sigmas", c.sweep_sigmas},
                   {"lq_tolerance", c.lq_tolerance},
                   {"pmp_value_tolerance", c.pmp_value_tolerance},
                   {"pmp_feedback_tolerance", c.pmp_feedback_tolerance},
                   {"second_moment_tolerance", c.second_moment_tolerance},
                   {"mass_tolerance", c.mass_tolerance}};
    return j;
}

inline RunConfig parse_config(const std::string& text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        throw ConfigError("parse error at " + detail::line_column(text, e.byte) + ": " + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Fixed-format number so repeated runs write identical bytes.
inline std::string format_number(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string slice_tag(double t)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%.6f", t);
    return buf;
}

inline void write_field_csv(const std::filesystem::path& file, const ScalarField& f)
{
    std::ofstream out(file);
    if (!out)
        throw std::runtime_error("cannot write " + file.string());
    const auto& g = f.grid();
    out << "x,v,value\n";
    for (int i = 0; i < g.nx(); ++i)
        for (int j = 0; j < g.nv(); ++j)
            out << format_number(g.x(i)) << ',' << format_number(g.v(j)) << ',' << format_number(f(i, j)) << '\n';
}

/// One file per checkpoint: <dir>/<name>_t0.250000.csv
inline void write_path_checkpoints(const std::filesystem::path& dir, const std::string& name, const FieldPath& path)
{
    for (int n : checkpoint_slices(path.time()))
        write_field_csv(dir / (name + "_" + slice_tag(path.time().t(n)) + ".csv"), path[n]);
}

inline void write_trace_csv(const std::filesystem::path& file, const std::string& key, const std::vector<double>& keys,
                            const std::vector<double>& values)
{
    std::ofstream out(file);
    if (!out)
        throw std::runtime_error("cannot write " + file.string());
    out << key << ",value\n";
    for (std::size_t k = 0; k < values.size(); ++k)
        out << format_number(keys[k]) << ',' << format_number(values[k]) << '\n';
}

inline void write_time_trace(const std::filesystem::path& file, const TimeGrid& time, const std::vector<double>& values)
{
    std::vector<double> t(values.size());
    for (std::size_t n = 0; n < values.size(); ++n)
        t[n] = time.t(static_cast<int>(n));
    write_trace_csv(file, "t", t, values);
}

inline void write_iteration_trace(const std::filesystem::path& file, const std::vector<double>& values)
{
    std::vector<double> k(values.size());
    for (std::size_t n = 0; n < values.size(); ++n)
        k[n] = static_cast<double>(n + 1);
    write_trace_csv(file, "iteration", k, values);
}

/// Structured run record: config echo, diagnostics, and one entry per assertion.
class Manifest
{
public:
    Manifest(std::string study, const RunConfig& cfg)
    {
        doc_["artifact_version"] = artifact_version;
        doc_["study"] = std::move(study);
        doc_["config"] = config_to_json(cfg);
        doc_["diagnostics"] = json::object();
        doc_["assertions"] = json::array();
    }

    json& diagnostics() { return doc_["diagnostics"]; }

    bool check(const std::string& name, double measured, const std::string& relation, double threshold)
    {
        bool pass = false;
        if (relation == "<=")
            pass = measured <= threshold;
        else if (relation == ">=")
            pass = measured >= threshold;
        else if (relation == ">")
            pass = measured > threshold;
        else if (relation == "==")
            pass = measured == threshold;
        else
            throw std::invalid_argument("Manifest::check: unknown relation " + relation);
        doc_["assertions"].push_back(
            {{"name", name}, {"measured", measured}, {"relation", relation}, {"threshold", threshold}, {"pass", pass}});
        all_pass_ = all_pass_ && pass;
        return pass;
    }

    bool check_flag(const std::string& name, bool pass)
    {
        doc_["assertions"].push_back({{"name", name}, {"measured", pass}, {"pass", pass}});
        all_pass_ = all_pass_ && pass;
        return pass;
    }

    void set_status(const std::string& s) { doc_["status"] = s; }
    bool all_pass() const { return all_pass_; }
    const json& document() const { return doc_; }

    void write(const std::filesystem::path& file) const
    {
        std::ofstream out(file);
        if (!out)
            throw std::runtime_error("cannot write " + file.string());
        out << doc_.dump(2) << '\n';
    }

private:
    json doc_;
    bool all_pass_ = true;
};

} // namespace amfg
