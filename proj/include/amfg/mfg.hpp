#pragma once

#include "amfg/coupling.hpp"
#include "amfg/distance.hpp"
#include "amfg/grid.hpp"
#include "amfg/hjb.hpp"
#include "amfg/model.hpp"
#include "amfg/transport.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace amfg
{

struct MFGProblem
{
    PhaseGrid grid;
    TimeGrid time;
    RunningCost running;
    CouplingSpec coupling;
    InitialDensity m0;
    double sigma = 0.0;
    HjbOptions hjb;

    void validate() const
    {
        running.validate();
        coupling.validate();
        m0.validate();
        if (!(sigma >= 0.0))
            throw std::invalid_argument("MFGProblem: sigma must be >= 0");
        if (!m0.support_within_margin(grid))
            throw std::invalid_argument("MFGProblem: initial density support must stay 20% of the box width away from the boundary");
    }

    MFGProblem with_sigma(double s) const
    {
        MFGProblem p = *this;
        p.sigma = s;
        return p;
    }

    MFGProblem refined(double scale) const
    {
        MFGProblem p = *this;
        p.grid = grid.refined(scale);
        p.time = time.refined(scale);
        return p;
    }
};

struct IterationConfig
{
    enum class Metric
    {
        sliced_d1,
        l1_density
    };
    enum class Start
    {
        free_transport, ///< transport of m0 under the uncoupled optimal feedback
        stationary      ///< m(t) = m0 for every t
    };

    double damping = 0.5;
    double tol_fp = 1e-4;
    int max_iters = 50;
    Metric metric = Metric::sliced_d1;
    bool fictitious_play = false; ///< damping 1/k instead of a constant
    Start start = Start::free_transport;

    void validate() const
    {
        if (!(damping > 0.0 && damping <= 1.0))
            throw std::invalid_argument("IterationConfig: damping must lie in (0, 1]");
        if (!(tol_fp > 0.0))
            throw std::invalid_argument("IterationConfig: tol_fp must be positive");
        if (max_iters < 1)
            throw std::invalid_argument("IterationConfig: max_iters must be >= 1");
    }
};

struct MFGSolution
{
    ValueSolution u;
    DensityPath m; ///< undamped transport under the final u
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history; ///< selected metric, max over checkpoints
    std::vector<double> l1_history;       ///< density L1 guard, max over checkpoints
    double damping = 0.5;
    double terminal_mismatch = 0.0; ///< sup |u(T) - G[m(T)]|
};

namespace detail
{

inline double l1_distance(const ScalarField& a, const ScalarField& b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k)
        s += std::abs(a[k] - b[k]);
    return s * a.grid().cell_area();
}

} // namespace detail

/// Damped Picard iteration on the density path:
/// u_k = HJB(l + F[m_k], G[m_k(T)]), m~ = transport(m0, D_v u_k),
/// m_{k+1} = (1 - theta) m_k + theta m~, until the checkpoint residual <= tol.
inline MFGSolution picard_solve(const MFGProblem& problem, const IterationConfig& cfg)
{
    problem.validate();
    cfg.validate();
    const PhaseGrid& g = problem.grid;
    const TimeGrid& tg = problem.time;
    const ScalarField m0 = problem.m0.discretize(g);
    const auto checkpoints = checkpoint_slices(tg);
    const SlicedW1 d1(g);

    FieldPath m_bar(g, tg);
    if (cfg.start == IterationConfig::Start::stationary)
    {
        for (int n = 0; n <= tg.nt(); ++n)
            m_bar[n] = m0;
    }
    else
    {
        const auto u0 = solve_hjb_backward(make_effective_cost(g, tg, problem.running), problem.sigma, problem.hjb);
        m_bar = solve_transport_forward(m0, u0.dvu, problem.sigma).m;
    }

    MFGSolution sol;
    sol.damping = cfg.damping;
    for (int k = 1; k <= cfg.max_iters; ++k)
    {
        EffectiveCost cost = make_effective_cost(problem.running, problem.coupling, m_bar);
        ValueSolution u = solve_hjb_backward(cost, problem.sigma, problem.hjb);
        DensityPath m_tilde = solve_transport_forward(m0, u.dvu, problem.sigma);

        // With no coupling the map is constant, so its first output is the fixed point.
        const double theta = problem.coupling.decoupled() ? 1.0 : cfg.fictitious_play ? 1.0 / k : cfg.damping;
        FieldPath m_next(g, tg);
        double res = 0.0, l1 = 0.0;
        for (int n = 0; n <= tg.nt(); ++n)
        {
            ScalarField a = m_bar[n];
            a *= 1.0 - theta;
            ScalarField b = m_tilde.m[n];
            b *= theta;
            a += b;
            m_next[n] = std::move(a);
        }
        for (int n : checkpoints)
        {
            const double dd = problem.coupling.decoupled() ? 0.0 : d1(m_next[n], m_bar[n]);
            const double ll = problem.coupling.decoupled() ? 0.0 : detail::l1_distance(m_next[n], m_bar[n]);
            res = std::max(res, cfg.metric == IterationConfig::Metric::sliced_d1 ? dd : ll);
            l1 = std::max(l1, ll);
        }
        sol.residual_history.push_back(res);
        sol.l1_history.push_back(l1);
        sol.iterations = k;
        sol.u = std::move(u);
        sol.m = std::move(m_tilde);
        m_bar = std::move(m_next);
        if (res <= cfg.tol_fp)
        {
            sol.converged = true;
            break;
        }
    }
    const ScalarField gT = eval_coupling(problem.coupling, sol.m.m.back(), CouplingSpec::Which::G);
    sol.terminal_mismatch = (sol.u.u.back() - gT).max_abs();
    return sol;
}

/// Smooth compactly supported space-time test function
/// psi = b((x - cx)/rx) b((v - cv)/rv) sin^2(pi t / T), b(s) = ((1 + cos pi s)/2)^2.
struct SpaceTimeTest
{
    double cx = 0.0, cv = 0.0, rx = 1.0, rv = 1.0;

    struct Derivs
    {
        double value, dt, dx, dv, lap;
    };

    Derivs eval(double x, double v, double t, double T) const
    {
        using std::numbers::pi;
        auto prof = [](double s, double r, double& f, double& df, double& d2f) {
            if (std::abs(s) >= 1.0)
            {
                f = df = d2f = 0.0;
                return;
            }
            const double c = std::cos(pi * s), sn = std::sin(pi * s), h = 0.5 * (1 + c);
            f = h * h;
            df = -pi * h * sn / r;
            d2f = -0.5 * pi * pi * (c + std::cos(2 * pi * s)) / (r * r);
        };
        double fx, dfx, d2fx, fv, dfv, d2fv;
        prof((x - cx) / rx, rx, fx, dfx, d2fx);
        prof((v - cv) / rv, rv, fv, dfv, d2fv);
        const double st = std::sin(pi * t / T);
        const double eta = st * st, deta = 2 * st * std::cos(pi * t / T) * pi / T;
        return {fx * fv * eta, fx * fv * deta, dfx * fv * eta, fx * dfv * eta, (d2fx * fv + fx * d2fv) * eta};
    }
};

struct KktReport
{
    double hjb_residual = 0.0;              ///< mean |residual| over inner half-box nodes and t < T
    double hjb_residual_sup = 0.0;          ///< stays O(1) at kinks of u
    std::vector<double> weak_residuals;     ///< one per test function
    double max_weak_residual = 0.0;
};

/// Five test functions around the density's centre of mass at T/2.
inline std::vector<SpaceTimeTest> default_weak_tests(const MFGSolution& sol)
{
    const auto& mid = sol.m.m[sol.m.time().nt() / 2];
    const double cx = mid.integrate([](double x, double) { return x; });
    const double cv = mid.integrate([](double, double v) { return v; });
    const auto& g = mid.grid();
    const double rx = 0.25 * (g.x_max() - g.x_min()), rv = 0.25 * (g.v_max() - g.v_min());
    return {{cx, cv, rx, rv},
            {cx + 0.25 * rx, cv, 0.5 * rx, 0.5 * rv},
            {cx - 0.25 * rx, cv, 0.5 * rx, 0.5 * rv},
            {cx, cv + 0.25 * rv, 0.5 * rx, 0.5 * rv},
            {cx, cv - 0.25 * rv, 0.5 * rx, 0.5 * rv}};
}

/// Strong HJB residual from difference quotients of u with F[m] of the
/// returned density, and the weak continuity residual
/// int int m (-d_t psi - sigma Lap psi + D_v psi D_v u - v D_x psi).
inline KktReport kkt_residuals(const MFGSolution& sol, const MFGProblem& problem,
                               std::optional<std::vector<SpaceTimeTest>> tests = std::nullopt)
{
    const auto& g = sol.u.grid();
    const auto& tg = sol.u.time();
    const double dx = g.dx(), dv = g.dv(), dt = tg.dt(), sigma = problem.sigma, T = tg.horizon();
    KktReport r;
    double sum = 0.0;
    long count = 0;

    const ScalarField lf = ScalarField::from_function(g, [&](double x, double v) { return problem.running(x, v); });
    for (int n = 0; n < tg.nt(); ++n)
    {
        ScalarField ell = lf;
        if (problem.coupling.c_F != 0.0)
            ell += eval_coupling(problem.coupling, sol.m.m[n], CouplingSpec::Which::F);
        const ScalarField& u = sol.u.u[n + 1];
        for (int i = 1; i + 1 < g.nx(); ++i)
            for (int j = 1; j + 1 < g.nv(); ++j)
            {
                if (!g.node_in_inner_half(i, j))
                    continue;
                const double v = g.v(j);
                const double ut = (sol.u.u[n + 1](i, j) - sol.u.u[n](i, j)) / dt;
                const double ux = (u(i + 1, j) - u(i - 1, j)) / (2 * dx);
                const double uv = (u(i, j + 1) - u(i, j - 1)) / (2 * dv);
                const double lap = (u(i + 1, j) - 2 * u(i, j) + u(i - 1, j)) / (dx * dx) +
                                   (u(i, j + 1) - 2 * u(i, j) + u(i, j - 1)) / (dv * dv);
                const double res = -ut - sigma * lap - v * ux + 0.5 * uv * uv - 0.5 * v * v - ell(i, j);
                r.hjb_residual_sup = std::max(r.hjb_residual_sup, std::abs(res));
                sum += std::abs(res);
                ++count;
            }
    }

    r.hjb_residual = count > 0 ? sum / count : 0.0;

    const auto psis = tests ? *tests : default_weak_tests(sol);
    for (const auto& psi : psis)
    {
        double total = 0.0;
        for (int n = 0; n <= tg.nt(); ++n)
        {
            const double t = tg.t(n), w = (n == 0 || n == tg.nt()) ? 0.5 : 1.0;
            const ScalarField& m = sol.m.m[n];
            const ScalarField& uv = sol.u.dvu[n];
            double s = 0.0;
            for (int i = 0; i < g.nx(); ++i)
                for (int j = 0; j < g.nv(); ++j)
                {
                    if (m(i, j) == 0.0)
                        continue;
                    const auto d = psi.eval(g.x(i), g.v(j), t, T);
                    s += m(i, j) * (-d.dt - sigma * d.lap + d.dv * uv(i, j) - g.v(j) * d.dx);
                }
            total += w * s;
        }
        total *= dt * g.cell_area();
        r.weak_residuals.push_back(std::abs(total));
        r.max_weak_residual = std::max(r.max_weak_residual, std::abs(total));
    }
    return r;
}

struct SweepEntry
{
    double sigma = 0.0;
    bool ok = false;
    std::string error;
    int iterations = 0;
    double u_distance = 0.0;       ///< sup over inner half-box and slices of |u^sigma - u^0|
    double m_distance_mid = 0.0;   ///< d1_estimate(m^sigma(T/2), m^0(T/2))
    std::vector<double> m_distance_checkpoints;
    double semiconcavity = 0.0;
    LipschitzReport lipschitz;
    double k_run = 0.0;
    double moment_constant = 0.0;
};

struct SweepReport
{
    SweepEntry reference; ///< sigma = 0
    std::vector<SweepEntry> entries;
    bool u_decreasing = false;
    bool m_decreasing = false;
    double slack = 0.1;
};

namespace detail
{

inline bool decreasing_with_slack(const std::vector<double>& a, double slack)
{
    for (std::size_t k = 1; k < a.size(); ++k)
        if (a[k] > (1.0 + slack) * a[k - 1])
            return false;
    return true;
}

} // namespace detail

/// Coupled solves for each sigma (run concurrently) compared against sigma = 0.
inline SweepReport viscosity_sweep(const MFGProblem& problem, const std::vector<double>& sigmas, const IterationConfig& cfg)
{
    std::vector<double> all{0.0};
    all.insert(all.end(), sigmas.begin(), sigmas.end());
    std::vector<std::future<MFGSolution>> jobs;
    for (double s : all)
        jobs.push_back(std::async(std::launch::async, [&problem, &cfg, s] { return picard_solve(problem.with_sigma(s), cfg); }));

    std::vector<std::optional<MFGSolution>> sols(all.size());
    SweepReport rep;
    std::vector<SweepEntry> entries(all.size());
    for (std::size_t k = 0; k < all.size(); ++k)
    {
        entries[k].sigma = all[k];
        try
        {
            sols[k] = jobs[k].get();
            entries[k].ok = sols[k]->converged;
            entries[k].iterations = sols[k]->iterations;
            if (!sols[k]->converged)
                entries[k].error = "fixed point did not converge";
        }
        catch (const std::exception& e)
        {
            entries[k].error = e.what();
        }
    }
    const auto checkpoints = checkpoint_slices(problem.time);
    for (std::size_t k = 0; k < all.size(); ++k)
    {
        if (!sols[k])
            continue;
        const auto& s = *sols[k];
        auto& e = entries[k];
        e.semiconcavity = semiconcavity_report(s.u);
        e.lipschitz = lipschitz_report(s.u);
        e.k_run = s.m.max_value;
        e.moment_constant = moment_report(s.m).constant;
        if (k > 0 && sols[0])
        {
            const auto& ref = *sols[0];
            for (int n = 0; n <= problem.time.nt(); ++n)
                e.u_distance = std::max(e.u_distance, inner_sup_diff(s.u.u[n], ref.u.u[n]));
            const SlicedW1 d1(problem.grid);
            for (int n : checkpoints)
                e.m_distance_checkpoints.push_back(d1(s.m.m[n], ref.m.m[n]));
            e.m_distance_mid = d1(s.m.m[problem.time.nt() / 2], ref.m.m[problem.time.nt() / 2]);
        }
    }
    rep.reference = entries[0];
    rep.entries.assign(entries.begin() + 1, entries.end());
    std::vector<double> ud, md;
    bool all_ok = rep.reference.ok;
    for (const auto& e : rep.entries)
    {
        ud.push_back(e.u_distance);
        md.push_back(e.m_distance_mid);
        all_ok = all_ok && e.ok;
    }
    rep.u_decreasing = all_ok && detail::decreasing_with_slack(ud, rep.slack);
    rep.m_decreasing = all_ok && detail::decreasing_with_slack(md, rep.slack);
    return rep;
}

struct UniquenessReport
{
    bool monotone_coupling = false;
    bool both_converged = false;
    int iterations_free = 0, iterations_stationary = 0;
    double max_density_gap = 0.0; ///< max over checkpoints of d1_estimate
    double density_threshold = 0.0;
    double value_gap = 0.0; ///< sup |u1 - u2|
    double value_threshold = 0.0;
    double min_monotonicity = 0.0; ///< min over checkpoints of the Lasry-Lions integral
    std::string counterexample;
    bool agree() const
    {
        return both_converged && max_density_gap <= density_threshold && value_gap <= value_threshold &&
               min_monotonicity >= -1e-12;
    }
};

/// Runs the fixed point from the free-transport and the stationary start and
/// compares the limits. Disagreement is reported, never thrown.
inline UniquenessReport uniqueness_probe(const MFGProblem& problem, IterationConfig cfg)
{
    UniquenessReport r;
    r.monotone_coupling = problem.coupling.monotone() && problem.coupling.c_F > 0.0;
    IterationConfig c1 = cfg, c2 = cfg;
    c1.start = IterationConfig::Start::free_transport;
    c2.start = IterationConfig::Start::stationary;
    auto f1 = std::async(std::launch::async, [&] { return picard_solve(problem, c1); });
    auto f2 = std::async(std::launch::async, [&] { return picard_solve(problem, c2); });
    const MFGSolution s1 = f1.get(), s2 = f2.get();
    r.both_converged = s1.converged && s2.converged;
    r.iterations_free = s1.iterations;
    r.iterations_stationary = s2.iterations;

    const SlicedW1 d1(problem.grid);
    r.min_monotonicity = std::numeric_limits<double>::infinity();
    for (int n : checkpoint_slices(problem.time))
    {
        r.max_density_gap = std::max(r.max_density_gap, d1(s1.m.m[n], s2.m.m[n]));
        r.min_monotonicity = std::min(r.min_monotonicity, monotonicity_integral(problem.coupling, s1.m.m[n], s2.m.m[n]));
    }
    for (int n = 0; n <= problem.time.nt(); ++n)
        r.value_gap = std::max(r.value_gap, (s1.u.u[n] - s2.u.u[n]).max_abs());

    const double lip = problem.time.horizon() * problem.coupling.lipschitz_d1(problem.grid, CouplingSpec::Which::F) +
                       problem.coupling.lipschitz_d1(problem.grid, CouplingSpec::Which::G);
    r.density_threshold = 5 * cfg.tol_fp;
    r.value_threshold = 5 * cfg.tol_fp * (1.0 + lip);
    if (!r.agree())
    {
        r.counterexample = "two starts disagree: density gap " + std::to_string(r.max_density_gap) + " (limit " +
                           std::to_string(r.density_threshold) + "), value gap " + std::to_string(r.value_gap) +
                           " (limit " + std::to_string(r.value_threshold) + "), min monotonicity integral " +
                           std::to_string(r.min_monotonicity) + (r.both_converged ? "" : ", a run did not converge") +
                           (r.monotone_coupling ? "" : ", coupling is not monotone");
    }
    return r;
}

} // namespace amfg
