#pragma once

#include "amfg/amfg.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>

namespace amfg::cli
{

enum ExitCode
{
    exit_pass = 0,
    exit_assertion = 1,
    exit_config = 2,
    exit_abort = 3
};

struct CliOptions
{
    std::filesystem::path config;
    std::filesystem::path out = "out";
    double resolution_scale = 1.0;
    std::optional<double> sigma;
    bool quiet = false;
};

/// Wall-clock per stage, kept out of the manifest so artifacts stay byte-identical.
class StageTimer
{
public:
    template <class Fn>
    auto run(const std::string& stage, Fn&& fn)
    {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>)
        {
            fn();
            record(stage, t0);
        }
        else
        {
            auto r = fn();
            record(stage, t0);
            return r;
        }
    }

    json document() const
    {
        json j = json::object();
        for (const auto& [k, v] : seconds_)
            j[k] = v;
        return j;
    }

private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point t0)
    {
        seconds_.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::vector<std::pair<std::string, double>> seconds_;
};

struct Context
{
    RunConfig cfg;
    CliOptions opts;
    Manifest manifest;
    StageTimer timer;
    std::ostream& log;
};

inline ScalarField lq_oracle_slice(const PhaseGrid& g, double t, double T)
{
    LQOracle o{T};
    return ScalarField::from_function(g, [&](double, double v) { return o.value(v, t); });
}

inline double lq_error(const ValueSolution& sol)
{
    double e = 0.0;
    for (int n = 0; n <= sol.time().nt(); ++n)
        e = std::max(e, inner_sup_diff(sol.u[n], lq_oracle_slice(sol.grid(), sol.time().t(n), sol.time().horizon())));
    return e;
}

inline FieldPath stationary_path(const MFGProblem& p)
{
    FieldPath m(p.grid, p.time);
    const ScalarField m0 = p.m0.discretize(p.grid);
    for (int n = 0; n <= p.time.nt(); ++n)
        m[n] = m0;
    return m;
}

inline json lipschitz_json(const LipschitzReport& r)
{
    return {{"x_ratio", r.x_ratio}, {"v_ratio", r.v_ratio}, {"t_ratio", r.t_ratio}};
}

inline bool is_lq(const MFGProblem& p)
{
    return p.running.kind == RunningCost::Kind::zero && p.coupling.decoupled();
}

inline void report_value_diagnostics(Context& c, const ValueSolution& sol, const EffectiveCost& cost)
{
    auto& d = c.manifest.diagnostics();
    const auto bounds = check_value_bounds(sol, cost);
    d["value_bounds"] = {{"lower_bound", bounds.lower_bound},
                         {"worst_lower_margin", bounds.worst_lower_margin},
                         {"worst_upper_margin", bounds.worst_upper_margin},
                         {"tol_scheme", bounds.tol_scheme},
                         {"sup_ell", cost.sup_ell()},
                         {"sup_g", cost.sup_g()}};
    d["lipschitz"] = lipschitz_json(lipschitz_report(sol));
    d["semiconcavity_max"] = semiconcavity_report(sol);
    d["max_abs_dvu"] = sol.max_gradient;
    d["hjb_cfl_margin"] = sol.cfl_margin;
    c.manifest.check("value_bound_violations", static_cast<double>(bounds.violations.size()), "==", 0.0);
}

inline void report_density_diagnostics(Context& c, const DensityPath& m)
{
    auto& d = c.manifest.diagnostics();
    const auto mr = moment_report(m);
    d["transport"] = {{"mass_drift", mass_drift(m)},
                      {"min_pre_clamp", m.min_pre_clamp},
                      {"clamp_correction", m.clamp_correction},
                      {"k_run", m.max_value},
                      {"moment_initial", mr.initial},
                      {"moment_max", mr.max},
                      {"moment_constant", mr.constant},
                      {"holder_ratio", time_holder_report(m).max_ratio},
                      {"cfl_margin", m.cfl_margin}};
    c.manifest.check("mass_drift", mass_drift(m), "<=", c.cfg.checks.mass_tolerance);
    c.manifest.check("min_pre_clamp", m.min_pre_clamp, ">=", -1e-12);
}

inline MFGSolution solve_and_report_mfg(Context& c)
{
    const auto& p = c.cfg.problem;
    MFGSolution sol = c.timer.run("picard", [&] { return picard_solve(p, c.cfg.iteration); });
    auto& d = c.manifest.diagnostics();
    d["iterations"] = sol.iterations;
    d["residual_history"] = sol.residual_history;
    d["l1_history"] = sol.l1_history;
    d["terminal_mismatch"] = sol.terminal_mismatch;
    c.manifest.check("fixed_point_residual", sol.residual_history.back(), "<=", c.cfg.iteration.tol_fp);
    if (p.coupling.decoupled())
        c.manifest.check("decoupled_iterations", sol.iterations, "==", 1.0);
    return sol;
}

inline void cmd_solve_hjb(Context& c)
{
    const auto& p = c.cfg.problem;
    const EffectiveCost cost = make_effective_cost(p.running, p.coupling, stationary_path(p));
    const ValueSolution sol = c.timer.run("hjb", [&] { return solve_hjb_backward(cost, p.sigma, p.hjb); });
    report_value_diagnostics(c, sol, cost);
    if (is_lq(p))
    {
        const double e1 = lq_error(sol);
        const MFGProblem fine = p.refined(2.0);
        const double e2 = c.timer.run("hjb_refined", [&] {
            return lq_error(solve_hjb_backward(make_effective_cost(fine.grid, fine.time, fine.running), p.sigma, p.hjb));
        });
        c.manifest.diagnostics()["lq_oracle"] = {
            {"error", e1}, {"error_refined", e2}, {"ratio", e1 / e2}, {"order", std::log2(e1 / e2)}};
        if (p.sigma == 0.0)
        {
            c.manifest.check("lq_oracle_error", e1, "<=", c.cfg.checks.lq_tolerance);
            c.manifest.check("lq_refinement_ratio", e1 / e2, ">=", 1.5);
        }
    }
    c.timer.run("write", [&] {
        write_path_checkpoints(c.opts.out, "u", sol.u);
        write_path_checkpoints(c.opts.out, "dxu", sol.dxu);
        write_path_checkpoints(c.opts.out, "dvu", sol.dvu);
    });
}

inline void cmd_solve_mfg(Context& c)
{
    const auto& p = c.cfg.problem;
    const MFGSolution sol = solve_and_report_mfg(c);
    const EffectiveCost cost = make_effective_cost(p.running, p.coupling, sol.m.m);
    report_value_diagnostics(c, sol.u, cost);
    report_density_diagnostics(c, sol.m);
    const KktReport kkt = c.timer.run("kkt", [&] { return kkt_residuals(sol, p); });
    c.manifest.diagnostics()["kkt"] = {{"hjb_residual_mean", kkt.hjb_residual},
                                       {"hjb_residual_sup", kkt.hjb_residual_sup},
                                       {"weak_residuals", kkt.weak_residuals}};
    if (p.sigma > 0.0)
    {
        const auto pos = interior_positivity(sol.m);
        c.manifest.diagnostics()["interior_positivity"] = {
            {"stencil_reach", pos.reach}, {"first_positive_slice", pos.first_positive}, {"min_after_reach", pos.min_after_reach}};
        c.manifest.check("min_interior_density_after_reach", pos.min_after_reach, ">", 0.0);
        c.manifest.check("first_positive_slice", pos.first_positive, "<=", pos.reach);
    }
    c.timer.run("write", [&] {
        write_path_checkpoints(c.opts.out, "u", sol.u.u);
        write_path_checkpoints(c.opts.out, "m", sol.m.m);
        write_iteration_trace(c.opts.out / "residual_history.csv", sol.residual_history);
        write_iteration_trace(c.opts.out / "l1_history.csv", sol.l1_history);
        write_time_trace(c.opts.out / "mass.csv", p.time, sol.m.mass);
        write_time_trace(c.opts.out / "second_moment.csv", p.time, sol.m.moment);
    });
}

struct PmpSample
{
    double x, v, t, cost, value, feedback;
    bool converged;
};

/// Start states drawn uniformly from the inner half-box (velocity shrunk by
/// 0.8) and t in [0, T/2] with a fixed seed.
inline std::vector<StatePoint> pmp_start_states(const MFGProblem& p, int count, unsigned seed)
{
    const auto& g = p.grid;
    const double hx = 0.25 * (g.x_max() - g.x_min()), hv = 0.2 * (g.v_max() - g.v_min());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(g.x_center() - hx, g.x_center() + hx);
    std::uniform_real_distribution<double> uv(g.v_center() - hv, g.v_center() + hv);
    std::uniform_real_distribution<double> ut(0.0, 0.5 * p.time.horizon());
    std::vector<StatePoint> s;
    for (int k = 0; k < count; ++k)
    {
        const double x = ux(rng), v = uv(rng), t = ut(rng);
        s.push_back({x, v, t});
    }
    return s;
}

inline std::vector<PmpSample> run_pmp_samples(const std::vector<StatePoint>& starts, const EffectiveCost& cost,
                                              const ValueSolution& u)
{
    const CostInterpolant ci(cost);
    std::vector<PmpSample> out;
    for (const auto& s : starts)
    {
        const PMPTrajectory tr = shoot(s.x, s.v, s.t, ci, {}, &u);
        out.push_back({s.x, s.v, s.t, tr.cost, u.value_at(s.x, s.v, s.t), feedback_residual(tr, u), tr.converged});
    }
    return out;
}

inline void cmd_pmp_check(Context& c)
{
    const auto& p = c.cfg.problem;
    const MFGSolution sol = solve_and_report_mfg(c);
    const EffectiveCost cost = make_effective_cost(p.running, p.coupling, sol.m.m);
    const ValueSolution u = c.timer.run("hjb", [&] { return solve_hjb_backward(cost, p.sigma, p.hjb); });
    const auto starts = pmp_start_states(p, c.cfg.checks.pmp_samples, c.cfg.checks.pmp_seed);
    const auto samples = c.timer.run("shoot", [&] { return run_pmp_samples(starts, cost, u); });
    double max_gap = 0.0, max_fb = 0.0;
    int failures = 0;
    json rows = json::array();
    for (const auto& s : samples)
    {
        max_gap = std::max(max_gap, std::abs(s.cost - s.value));
        max_fb = std::max(max_fb, s.feedback);
        failures += s.converged ? 0 : 1;
        rows.push_back({{"x0", s.x}, {"v0", s.v}, {"t0", s.t}, {"cost", s.cost}, {"value", s.value}, {"feedback", s.feedback}});
    }
    c.manifest.diagnostics()["pmp_samples"] = rows;
    c.manifest.check("shooting_failures", failures, "==", 0.0);
    c.manifest.check("max_cost_value_gap", max_gap, "<=", c.cfg.checks.pmp_value_tolerance);
    c.manifest.check("max_feedback_residual", max_fb, "<=", c.cfg.checks.pmp_feedback_tolerance);
    c.timer.run("write", [&] {
        std::ofstream out(c.opts.out / "pmp_samples.csv");
        out << "x0,v0,t0,cost,value,feedback\n";
        for (const auto& s : samples)
            out << format_number(s.x) << ',' << format_number(s.v) << ',' << format_number(s.t) << ','
                << format_number(s.cost) << ',' << format_number(s.value) << ',' << format_number(s.feedback) << '\n';
    });
}

inline RepresentationReport particles_representation(const MFGProblem& p, const MFGSolution& sol, std::size_t n)
{
    const ScalarField m0 = p.m0.discretize(p.grid);
    const ParticleEnsemble ens = sample_from_density(m0, n);
    const ParticleTrajectories tr = advect(ens, sol.u.dvu);
    const double r = std::max(p.m0.spread_x, p.m0.spread_v);
    return representation_check(tr, sol.m, default_test_functions(p.m0.center_x, p.m0.center_v, r),
                                checkpoint_slices(p.time));
}

inline void cmd_particles_check(Context& c)
{
    const auto& p = c.cfg.problem;
    const MFGSolution sol = solve_and_report_mfg(c);
    const auto rep = c.timer.run("particles", [&] { return particles_representation(p, sol, c.cfg.checks.particles); });
    c.manifest.diagnostics()["representation"] = {{"max_abs", rep.max_abs},
                                                  {"mass_discrepancy", rep.mass_discrepancy},
                                                  {"max_abs_first_order", rep.max_abs_first_order},
                                                  {"max_rel_second_order", rep.max_rel_second_order},
                                                  {"max_abs_bump", rep.max_abs_bump}};
    c.manifest.check("particle_mass_discrepancy", rep.mass_discrepancy, "<=", c.cfg.checks.mass_tolerance);
    c.manifest.check("max_rel_second_order", rep.max_rel_second_order, "<=", c.cfg.checks.second_moment_tolerance);
    c.timer.run("write", [&] {
        std::ofstream out(c.opts.out / "representation.csv");
        out << "test,t,grid,particles,abs_diff,rel_diff\n";
        for (const auto& e : rep.entries)
            out << e.name << ',' << format_number(p.time.t(e.slice)) << ',' << format_number(e.grid_side) << ','
                << format_number(e.particle_side) << ',' << format_number(e.abs_diff) << ',' << format_number(e.rel_diff)
                << '\n';
    });
}

inline void cmd_viscosity_sweep(Context& c)
{
    const auto& p = c.cfg.problem;
    const SweepReport rep =
        c.timer.run("sweep", [&] { return viscosity_sweep(p, c.cfg.checks.sweep_sigmas, c.cfg.iteration); });
    json rows = json::array();
    std::vector<SweepEntry> all{rep.reference};
    all.insert(all.end(), rep.entries.begin(), rep.entries.end());
    for (const auto& e : all)
    {
        rows.push_back({{"sigma", e.sigma},
                        {"status", e.ok ? "ok" : e.error},
                        {"iterations", e.iterations},
                        {"u_distance", e.u_distance},
                        {"m_distance_mid", e.m_distance_mid},
                        {"semiconcavity", e.semiconcavity},
                        {"lipschitz", lipschitz_json(e.lipschitz)},
                        {"k_run", e.k_run},
                        {"moment_constant", e.moment_constant}});
        c.manifest.check_flag("solve_ok_sigma_" + format_number(e.sigma), e.ok);
    }
    c.manifest.diagnostics()["sweep"] = rows;
    c.manifest.check_flag("u_distance_decreasing", rep.u_decreasing);
    c.manifest.check_flag("m_distance_decreasing", rep.m_decreasing);
    c.timer.run("write", [&] {
        std::ofstream out(c.opts.out / "sweep.csv");
        out << "sigma,u_distance,m_distance_mid,semiconcavity,k_run\n";
        for (const auto& e : rep.entries)
            out << format_number(e.sigma) << ',' << format_number(e.u_distance) << ',' << format_number(e.m_distance_mid)
                << ',' << format_number(e.semiconcavity) << ',' << format_number(e.k_run) << '\n';
    });
}

inline void cmd_uniqueness_probe(Context& c)
{
    const auto& p = c.cfg.problem;
    const UniquenessReport r = c.timer.run("probe", [&] { return uniqueness_probe(p, c.cfg.iteration); });
    c.manifest.diagnostics()["uniqueness"] = {{"monotone_coupling", r.monotone_coupling},
                                              {"both_converged", r.both_converged},
                                              {"iterations_free", r.iterations_free},
                                              {"iterations_stationary", r.iterations_stationary},
                                              {"min_monotonicity", r.min_monotonicity},
                                              {"counterexample", r.counterexample}};
    c.manifest.check_flag("both_converged", r.both_converged);
    c.manifest.check("density_gap", r.max_density_gap, "<=", r.density_threshold);
    c.manifest.check("value_gap", r.value_gap, "<=", r.value_threshold);
    c.manifest.check("min_monotonicity_integral", r.min_monotonicity, ">=", -1e-12);
    if (!r.counterexample.empty())
        c.log << "counterexample: " << r.counterexample << '\n';
}

inline const std::map<std::string, std::function<void(Context&)>>& commands()
{
    static const std::map<std::string, std::function<void(Context&)>> table{
        {"solve-hjb", cmd_solve_hjb},         {"solve-mfg", cmd_solve_mfg},
        {"pmp-check", cmd_pmp_check},         {"particles-check", cmd_particles_check},
        {"viscosity-sweep", cmd_viscosity_sweep}, {"uniqueness-probe", cmd_uniqueness_probe}};
    return table;
}

/// Loads the config, applies flag overrides, runs the study and writes
/// manifest.json (deterministic) and timings.json into the output directory.
inline int run_command(const std::string& name, const CliOptions& opts, std::ostream& out, std::ostream& err)
{
    std::ostream null_stream(nullptr);
    std::ostream& log = opts.quiet ? null_stream : out;
    auto it = commands().find(name);
    if (it == commands().end())
    {
        err << "unknown command " << name << '\n';
        return exit_config;
    }
    RunConfig cfg;
    try
    {
        cfg = load_config(opts.config);
        if (!(opts.resolution_scale > 0.0))
            throw ConfigError("--resolution-scale must be positive");
        if (opts.sigma)
        {
            if (!(*opts.sigma >= 0.0))
                throw ConfigError("--sigma must be >= 0");
            cfg.problem.sigma = *opts.sigma;
        }
        if (opts.resolution_scale != 1.0)
            cfg.problem = cfg.problem.refined(opts.resolution_scale);
        cfg.problem.validate();
        std::filesystem::create_directories(opts.out);
    }
    catch (const std::exception& e)
    {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }

    Context c{cfg, opts, Manifest(name, cfg), {}, log};
    int code = exit_pass;
    try
    {
        it->second(c);
        code = c.manifest.all_pass() ? exit_pass : exit_assertion;
        c.manifest.set_status(code == exit_pass ? "pass" : "assertion_failure");
    }
    catch (const SolverAbort& e)
    {
        err << "solver abort: " << e.what() << '\n';
        c.manifest.set_status(std::string("solver_abort: ") + e.what());
        code = exit_abort;
    }
    catch (const ConfigError& e)
    {
        err << "config error: " << e.what() << '\n';
        c.manifest.set_status(std::string("config_error: ") + e.what());
        code = exit_config;
    }
    catch (const std::invalid_argument& e)
    {
        err << "config error: " << e.what() << '\n';
        c.manifest.set_status(std::string("config_error: ") + e.what());
        code = exit_config;
    }
    catch (const std::exception& e)
    {
        err << "solver abort: " << e.what() << '\n';
        c.manifest.set_status(std::string("solver_abort: ") + e.what());
        code = exit_abort;
    }

    for (const auto& a : c.manifest.document()["assertions"])
        log << (a["pass"].get<bool>() ? "PASS " : "FAIL ") << a["name"].get<std::string>() << " = " << a["measured"].dump()
            << '\n';
    try
    {
        c.manifest.write(opts.out / "manifest.json");
        std::ofstream t(opts.out / "timings.json");
        t << c.timer.document().dump(2) << '\n';
    }
    catch (const std::exception& e)
    {
        err << "cannot write manifest: " << e.what() << '\n';
        return exit_abort;
    }
    return code;
}

} // namespace amfg::cli
