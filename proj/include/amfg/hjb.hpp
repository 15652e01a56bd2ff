#pragma once

#include "amfg/coupling.hpp"
#include "amfg/grid.hpp"
#include "amfg/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace amfg
{

/// Running cost l + F[m(t)] on the time grid and terminal cost G[m(T)].
struct EffectiveCost
{
    FieldPath ell;
    ScalarField g;

    const PhaseGrid& grid() const { return ell.grid(); }
    const TimeGrid& time() const { return ell.time(); }
    double sup_ell() const { return ell.max_abs(); }
    double sup_g() const { return g.max_abs(); }
};

/// l(x,v) alone, no coupling, zero terminal cost unless given.
inline EffectiveCost make_effective_cost(const PhaseGrid& grid, const TimeGrid& time, const RunningCost& l,
                                         const ScalarField* terminal = nullptr)
{
    EffectiveCost c{FieldPath(grid, time), terminal ? *terminal : ScalarField(grid)};
    const ScalarField lf = ScalarField::from_function(grid, [&l](double x, double v) { return l(x, v); });
    for (int n = 0; n <= time.nt(); ++n)
        c.ell[n] = lf;
    return c;
}

/// l + F[m(t)] per slice and G[m(T)] for a frozen density path.
inline EffectiveCost make_effective_cost(const RunningCost& l, const CouplingSpec& coupling, const FieldPath& m)
{
    EffectiveCost c = make_effective_cost(m.grid(), m.time(), l);
    c.g = eval_coupling(coupling, m.back(), CouplingSpec::Which::G);
    if (coupling.c_F != 0.0)
        for (int n = 0; n <= m.nt(); ++n)
            c.ell[n] += eval_coupling(coupling, m[n], CouplingSpec::Which::F);
    return c;
}

enum class NumericalHamiltonian
{
    lax_friedrichs,
    godunov
};

struct HjbOptions
{
    NumericalHamiltonian flux = NumericalHamiltonian::lax_friedrichs;
    /// Lower bound on the Lax-Friedrichs coefficient. Two runs sharing a floor
    /// above both gradient maxima use the same monotone scheme.
    double lf_theta_floor = 0.0;
};

struct ValueSolution
{
    FieldPath u;
    FieldPath dxu;
    FieldPath dvu;
    double sigma = 0.0;
    NumericalHamiltonian flux = NumericalHamiltonian::lax_friedrichs;
    double max_gradient = 0.0; ///< max |one-sided D_v u| seen by the scheme
    double cfl_margin = 0.0;   ///< max over slices of dt * explicit_rate, must stay <= 1

    const PhaseGrid& grid() const { return u.grid(); }
    const TimeGrid& time() const { return u.time(); }
    double value_at(double x, double v, double t) const { return interp_path(u, x, v, t); }
};

namespace detail
{

struct StepStats
{
    double theta = 0.0;
};

// Largest one-sided |D_v u| on a slice (ghost differences equal the adjacent interior ones).
inline double max_one_sided_dv(const ScalarField& u)
{
    const auto& g = u.grid();
    double m = 0.0;
    for (int i = 0; i < g.nx(); ++i)
        for (int j = 0; j + 1 < g.nv(); ++j)
            m = std::max(m, std::abs(u(i, j + 1) - u(i, j)));
    return m / g.dv();
}

} // namespace detail

/// Explicit monotone march from t = T to t = 0.
///
/// Transport term: upwind by sign(v). Kinetic term -|D_v u|^2/2: Godunov
/// (inf over the control of the upwinded drift) or Lax-Friedrichs with
/// coefficient theta = max |D_v u| on the slice. Viscosity: 5-point
/// Laplacian. The box edge uses a linearly extrapolated ghost layer, floored
/// at the edge value in v; the upwind x-difference at an inflow edge is zero.
inline ValueSolution solve_hjb_backward(const EffectiveCost& cost, double sigma, const HjbOptions& opts = {})
{
    const PhaseGrid& g = cost.grid();
    const TimeGrid& tg = cost.time();
    if (!(sigma >= 0.0))
        throw std::invalid_argument("solve_hjb_backward: sigma must be >= 0");
    if (!(cost.g.grid() == g))
        throw std::invalid_argument("solve_hjb_backward: terminal cost lives on a different grid");

    ValueSolution sol{FieldPath(g, tg), FieldPath(g, tg), FieldPath(g, tg), sigma, opts.flux};
    const int nx = g.nx(), nv = g.nv(), nt = tg.nt();
    const double dx = g.dx(), dv = g.dv(), dt = tg.dt();
    sol.u[nt] = cost.g;

    for (int n = nt - 1; n >= 0; --n)
    {
        const ScalarField& un = sol.u[n + 1];
        const ScalarField& ell = cost.ell[n];
        ScalarField& out = sol.u[n];

        const double grad = detail::max_one_sided_dv(un);
        const double theta = std::max(grad, opts.lf_theta_floor);
        sol.max_gradient = std::max(sol.max_gradient, grad);
        const double limit = cfl_dt(g, theta, sigma);
        const double margin = dt * explicit_rate(g, theta, sigma);
        sol.cfl_margin = std::max(sol.cfl_margin, margin);
        if (dt > limit || margin > 1.0)
            throw SolverAbort("hjb: CFL violated at slice " + std::to_string(n + 1) + " (t=" +
                              std::to_string(tg.t(n + 1)) + "): dt=" + std::to_string(dt) +
                              " > limit=" + std::to_string(limit) + ", max|D_v u|=" + std::to_string(theta));

        auto at = [&](int i, int j) {
            // Linear extrapolation into one ghost layer.
            if (i < 0)
                return 2 * un(0, j) - un(1, j);
            if (i >= nx)
                return 2 * un(nx - 1, j) - un(nx - 2, j);
            // In v the ghost never lies below the edge value, which keeps the
            // kinetic term nondecreasing in the interior neighbour.
            if (j < 0)
                return std::max(2 * un(i, 0) - un(i, 1), un(i, 0));
            if (j >= nv)
                return std::max(2 * un(i, nv - 1) - un(i, nv - 2), un(i, nv - 1));
            return un(i, j);
        };

        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nv; ++j)
            {
                const double v = g.v(j);
                const double c = un(i, j);
                double ux = 0.0;
                if (v > 0 && i + 1 < nx)
                    ux = (un(i + 1, j) - c) / dx;
                else if (v < 0 && i > 0)
                    ux = (c - un(i - 1, j)) / dx;
                const double pm = (c - at(i, j - 1)) / dv;
                const double pp = (at(i, j + 1) - c) / dv;
                double kinetic;
                if (opts.flux == NumericalHamiltonian::godunov)
                {
                    const double a = std::min(pp, 0.0), b = std::max(pm, 0.0);
                    kinetic = -0.5 * std::max(a * a, b * b);
                }
                else
                {
                    const double pbar = 0.5 * (pm + pp);
                    kinetic = -0.5 * pbar * pbar + 0.5 * theta * (pp - pm);
                }
                double lap = 0.0;
                if (sigma > 0.0)
                    lap = sigma * ((at(i + 1, j) - 2 * c + at(i - 1, j)) / (dx * dx) +
                                   (at(i, j + 1) - 2 * c + at(i, j - 1)) / (dv * dv));
                out(i, j) = c + dt * (v * ux + kinetic + 0.5 * v * v + ell(i, j) + lap);
            }
        if (!out.all_finite())
            throw SolverAbort("hjb: non-finite value at slice " + std::to_string(n));
    }

    for (int n = 0; n <= nt; ++n)
    {
        sol.dxu[n] = diff_x(sol.u[n]);
        sol.dvu[n] = diff_v(sol.u[n]);
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct BoundViolation
{
    int slice, i, j;
    double value, lower, upper;
};

struct BoundReport
{
    double lower_bound = 0.0;
    double worst_lower_margin = 0.0; ///< min over nodes of u - lower
    double worst_upper_margin = 0.0; ///< min over nodes of upper - u
    double tol_scheme = 0.0;
    std::vector<BoundViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// Bounds realized by the a = 0 competitor:
/// -(T sup|l| + sup|g|) <= u <= (T - t)(sup|l| + v^2/2) + sup|g| + tol.
/// The default tolerance is dx + dv + dt.
inline BoundReport check_value_bounds(const ValueSolution& sol, const EffectiveCost& cost, double tol_scheme = -1.0)
{
    const auto& g = sol.grid();
    const auto& tg = sol.time();
    if (tol_scheme < 0.0)
        tol_scheme = g.dx() + g.dv() + tg.dt();
    const double sl = cost.sup_ell(), sg = cost.sup_g(), T = tg.horizon();
    BoundReport r;
    r.tol_scheme = tol_scheme;
    r.lower_bound = -(T * sl + sg);
    r.worst_lower_margin = r.worst_upper_margin = std::numeric_limits<double>::infinity();
    constexpr std::size_t max_listed = 32;
    for (int n = 0; n <= tg.nt(); ++n)
        for (int i = 0; i < g.nx(); ++i)
            for (int j = 0; j < g.nv(); ++j)
            {
                const double v = g.v(j), u = sol.u[n](i, j);
                const double upper = (T - tg.t(n)) * (sl + 0.5 * v * v) + sg + tol_scheme;
                const double lm = u - r.lower_bound, um = upper - u;
                r.worst_lower_margin = std::min(r.worst_lower_margin, lm);
                r.worst_upper_margin = std::min(r.worst_upper_margin, um);
                if ((lm < 0.0 || um < 0.0) && r.violations.size() < max_listed)
                    r.violations.push_back({n, i, j, u, r.lower_bound, upper});
            }
    return r;
}

struct LipschitzReport
{
    double x_ratio = 0.0; ///< max |Delta_x u| / dx
    double v_ratio = 0.0; ///< max |Delta_v u| / (dv (1 + |v|))
    double t_ratio = 0.0; ///< max |Delta_t u| / (dt (1 + v^2))
};

/// Difference-quotient growth constants over the inner half-box.
inline LipschitzReport lipschitz_report(const ValueSolution& sol)
{
    const auto& g = sol.grid();
    const auto& tg = sol.time();
    LipschitzReport r;
    for (int n = 0; n <= tg.nt(); ++n)
    {
        const ScalarField& u = sol.u[n];
        for (int i = 0; i < g.nx(); ++i)
            for (int j = 0; j < g.nv(); ++j)
            {
                if (!g.node_in_inner_half(i, j))
                    continue;
                if (i + 1 < g.nx() && g.node_in_inner_half(i + 1, j))
                    r.x_ratio = std::max(r.x_ratio, std::abs(u(i + 1, j) - u(i, j)) / g.dx());
                if (j + 1 < g.nv() && g.node_in_inner_half(i, j + 1))
                {
                    const double vm = std::abs(0.5 * (g.v(j) + g.v(j + 1)));
                    r.v_ratio = std::max(r.v_ratio, std::abs(u(i, j + 1) - u(i, j)) / (g.dv() * (1 + vm)));
                }
                if (n < tg.nt())
                {
                    const double v = g.v(j);
                    r.t_ratio = std::max(r.t_ratio, std::abs(sol.u[n + 1](i, j) - u(i, j)) / (tg.dt() * (1 + v * v)));
                }
            }
    }
    return r;
}

/// Max of the centered second difference quotient along x, v, x+v, x-v
/// over inner-half-box nodes and all slices (one-sided semiconcavity constant).
inline double semiconcavity_report(const ValueSolution& sol)
{
    const auto& g = sol.grid();
    const double dx = g.dx(), dv = g.dv();
    const double hx2 = dx * dx, hv2 = dv * dv, hd2 = dx * dx + dv * dv;
    double best = -std::numeric_limits<double>::infinity();
    for (int n = 0; n <= sol.time().nt(); ++n)
    {
        const ScalarField& u = sol.u[n];
        for (int i = 1; i + 1 < g.nx(); ++i)
            for (int j = 1; j + 1 < g.nv(); ++j)
            {
                if (!g.node_in_inner_half(i, j))
                    continue;
                const double c2 = 2 * u(i, j);
                best = std::max(best, (u(i + 1, j) - c2 + u(i - 1, j)) / hx2);
                best = std::max(best, (u(i, j + 1) - c2 + u(i, j - 1)) / hv2);
                best = std::max(best, (u(i + 1, j + 1) - c2 + u(i - 1, j - 1)) / hd2);
                best = std::max(best, (u(i + 1, j - 1) - c2 + u(i - 1, j + 1)) / hd2);
            }
    }
    return best;
}

struct StatePoint
{
    double x, v, t;
};

struct DppReport
{
    std::vector<double> residuals;
    std::vector<double> minimizers;
    double max_residual = 0.0;
};

/// One-step dynamic programming check with a piecewise-constant control:
/// |u(x,v,t) - min_a { dt (a^2/2 + v^2/2 + l) + u(x + v dt, v + a dt, t + dt) }|.
inline DppReport dpp_consistency(const ValueSolution& sol, const EffectiveCost& cost, std::span<const StatePoint> samples,
                                 double alpha_spacing = -1.0)
{
    const auto& g = sol.grid();
    const double dt = sol.time().dt();
    if (alpha_spacing <= 0.0)
        alpha_spacing = g.dv();
    double amax = 2.0;
    for (int n = 0; n <= sol.time().nt(); ++n)
        amax = std::max(amax, 1.5 * sol.dvu[n].max_abs());
    const int na = static_cast<int>(std::ceil(amax / alpha_spacing));

    DppReport r;
    for (const auto& s : samples)
    {
        if (s.t + dt > sol.time().horizon() + 1e-12)
            throw std::invalid_argument("dpp_consistency: sample needs t + dt <= T");
        const double ell = interp_path(cost.ell, s.x, s.v, s.t);
        const double x1 = s.x + s.v * dt;
        double best = std::numeric_limits<double>::infinity(), arg = 0.0;
        for (int k = -na; k <= na; ++k)
        {
            const double a = k * alpha_spacing;
            const double val = dt * (0.5 * a * a + 0.5 * s.v * s.v + ell) + interp_path(sol.u, x1, s.v + a * dt, s.t + dt);
            if (val < best)
                best = val, arg = a;
        }
        const double res = std::abs(sol.value_at(s.x, s.v, s.t) - best);
        r.residuals.push_back(res);
        r.minimizers.push_back(arg);
        r.max_residual = std::max(r.max_residual, res);
    }
    return r;
}

} // namespace amfg
