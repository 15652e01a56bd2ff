#pragma once

#include "amfg/grid.hpp"
#include "amfg/hjb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace amfg
{

/// Sampled solution of the state-costate system with its boundary residual.
struct PMPTrajectory
{
    std::vector<double> s, x, v, px, pv, alpha;
    std::vector<double> running_cost; ///< cumulative integral of the running cost from t0
    std::array<double, 2> residual{}; ///< p(T) + Dg(x(T), v(T))
    double cost = 0.0;                ///< J = running + terminal
    double terminal_cost = 0.0;
    bool converged = false;
    int iterations = 0;

    double residual_norm() const { return std::hypot(residual[0], residual[1]); }
    std::size_t size() const { return s.size(); }
};

struct ShootOptions
{
    double tolerance = 1e-10;
    int max_iterations = 50;
    int segments = 1; ///< > 1 selects multiple shooting
    /// Initial costate p(t0); defaults to -Du from the value solution when
    /// one is supplied, else zero.
    std::optional<std::array<double, 2>> initial_costate;
};

/// Effective cost prepared for off-grid evaluation: values and gradients by
/// central differences, bicubic in (x, v), linear in t.
class CostInterpolant
{
public:
    explicit CostInterpolant(const EffectiveCost& cost)
        : ell_(cost.ell), dx_ell_(cost.grid(), cost.time()), dv_ell_(cost.grid(), cost.time()), g_(cost.g),
          dx_g_(diff_x(cost.g)), dv_g_(diff_v(cost.g))
    {
        for (int n = 0; n <= cost.time().nt(); ++n)
        {
            dx_ell_[n] = diff_x(cost.ell[n]);
            dv_ell_[n] = diff_v(cost.ell[n]);
        }
    }

    double ell(double x, double v, double t) const { return interp_path_cubic(ell_, x, v, t); }
    double dx_ell(double x, double v, double t) const { return interp_path_cubic(dx_ell_, x, v, t); }
    double dv_ell(double x, double v, double t) const { return interp_path_cubic(dv_ell_, x, v, t); }
    double g(double x, double v) const { return interp_bicubic(g_, x, v); }
    std::array<double, 2> dg(double x, double v) const { return {interp_bicubic(dx_g_, x, v), interp_bicubic(dv_g_, x, v)}; }

    const PhaseGrid& grid() const { return ell_.grid(); }
    const TimeGrid& time() const { return ell_.time(); }

private:
    FieldPath ell_, dx_ell_, dv_ell_;
    ScalarField g_, dx_g_, dv_g_;
};

namespace detail
{

using PmpState = std::array<double, 5>; // x, v, p_x, p_v, accumulated running cost

inline PmpState pmp_rhs(const CostInterpolant& c, const PmpState& y, double s)
{
    const double x = y[0], v = y[1], px = y[2], pv = y[3];
    return {v, pv, c.dx_ell(x, v, s), -px + v + c.dv_ell(x, v, s), 0.5 * pv * pv + 0.5 * v * v + c.ell(x, v, s)};
}

inline PmpState rk4_step(const CostInterpolant& c, const PmpState& y, double s, double h)
{
    auto axpy = [](const PmpState& a, double k, const PmpState& b) {
        PmpState r;
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = a[i] + k * b[i];
        return r;
    };
    const PmpState k1 = pmp_rhs(c, y, s);
    const PmpState k2 = pmp_rhs(c, axpy(y, 0.5 * h, k1), s + 0.5 * h);
    const PmpState k3 = pmp_rhs(c, axpy(y, 0.5 * h, k2), s + 0.5 * h);
    const PmpState k4 = pmp_rhs(c, axpy(y, h, k3), s + h);
    PmpState r;
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = y[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return r;
}

inline void check_escape(const PhaseGrid& g, double x, double v, double s)
{
    const double hx = g.x_max() - g.x_min(), hv = g.v_max() - g.v_min();
    const bool inside = x >= g.x_center() - hx && x <= g.x_center() + hx && v >= g.v_center() - hv && v <= g.v_center() + hv;
    if (!inside || !std::isfinite(x) || !std::isfinite(v))
        throw SolverAbort("pmp: trajectory left twice the box at s=" + std::to_string(s) + " (x=" + std::to_string(x) +
                          ", v=" + std::to_string(v) + ")");
}

/// Integrates [s0, s1] with `steps` RK4 steps, optionally recording samples.
inline PmpState integrate(const CostInterpolant& c, PmpState y, double s0, double s1, int steps, PMPTrajectory* rec)
{
    const double h = (s1 - s0) / steps;
    auto record = [&](const PmpState& z, double s) {
        if (!rec)
            return;
        rec->s.push_back(s);
        rec->x.push_back(z[0]);
        rec->v.push_back(z[1]);
        rec->px.push_back(z[2]);
        rec->pv.push_back(z[3]);
        rec->alpha.push_back(z[3]);
        rec->running_cost.push_back(z[4]);
    };
    record(y, s0);
    for (int k = 0; k < steps; ++k)
    {
        const double s = s0 + k * h;
        y = rk4_step(c, y, s, h);
        check_escape(c.grid(), y[0], y[1], s + h);
        record(y, k + 1 == steps ? s1 : s0 + (k + 1) * h);
    }
    return y;
}

// Dense solve with partial pivoting; returns false when singular.
inline bool solve_dense(std::vector<double> a, std::vector<double>& b, int n)
{
    for (int k = 0; k < n; ++k)
    {
        int piv = k;
        for (int r = k + 1; r < n; ++r)
            if (std::abs(a[r * n + k]) > std::abs(a[piv * n + k]))
                piv = r;
        if (std::abs(a[piv * n + k]) < 1e-300)
            return false;
        if (piv != k)
        {
            for (int c = 0; c < n; ++c)
                std::swap(a[k * n + c], a[piv * n + c]);
            std::swap(b[k], b[piv]);
        }
        for (int r = k + 1; r < n; ++r)
        {
            const double f = a[r * n + k] / a[k * n + k];
            for (int c = k; c < n; ++c)
                a[r * n + c] -= f * a[k * n + c];
            b[r] -= f * b[k];
        }
    }
    for (int k = n - 1; k >= 0; --k)
    {
        double s = b[k];
        for (int c = k + 1; c < n; ++c)
            s -= a[k * n + c] * b[c];
        b[k] = s / a[k * n + k];
    }
    return true;
}

} // namespace detail

/// Solves x' = v, v' = p_v, p_x' = D_x l, p_v' = -p_x + v + D_v l with
/// x(t0) = x0, v(t0) = v0, p(T) = -Dg(x(T), v(T)) by shooting on the
/// unknown costate, damped Newton with a finite-difference Jacobian.
inline PMPTrajectory shoot(double x0, double v0, double t0, const CostInterpolant& cost, const ShootOptions& opts = {},
                           const ValueSolution* guess = nullptr)
{
    const TimeGrid& tg = cost.time();
    const double T = tg.horizon();
    if (!(t0 >= 0.0 && t0 < T))
        throw std::invalid_argument("shoot: t0 must lie in [0, T)");
    if (opts.segments < 1)
        throw std::invalid_argument("shoot: segments must be >= 1");
    const int total_steps = std::max(2, static_cast<int>(std::ceil((T - t0) / (0.5 * tg.dt()) - 1e-9)));
    const int nseg = opts.segments;
    const int steps_per = (total_steps + nseg - 1) / nseg;

    std::array<double, 2> p0{0.0, 0.0};
    if (opts.initial_costate)
        p0 = *opts.initial_costate;
    else if (guess)
        p0 = {-interp_path(guess->dxu, x0, v0, t0), -interp_path(guess->dvu, x0, v0, t0)};

    // Unknowns: p(t0), then (x, v, p_x, p_v) at each interior segment start.
    const int nunk = 2 + 4 * (nseg - 1);
    std::vector<double> z(static_cast<std::size_t>(nunk), 0.0);
    z[0] = p0[0];
    z[1] = p0[1];
    auto seg_time = [&](int k) { return k == nseg ? T : t0 + (T - t0) * k / nseg; };
    if (nseg > 1)
    {
        // Seed interior nodes from a single forward sweep of the initial guess.
        detail::PmpState y{x0, v0, p0[0], p0[1], 0.0};
        for (int k = 1; k < nseg; ++k)
        {
            y = detail::integrate(cost, y, seg_time(k - 1), seg_time(k), steps_per, nullptr);
            for (int c = 0; c < 4; ++c)
                z[static_cast<std::size_t>(2 + 4 * (k - 1) + c)] = y[static_cast<std::size_t>(c)];
        }
    }

    auto residual = [&](const std::vector<double>& q, PMPTrajectory* rec) {
        std::vector<double> r(static_cast<std::size_t>(nunk));
        detail::PmpState y{x0, v0, q[0], q[1], 0.0};
        double running = 0.0;
        for (int k = 0; k < nseg; ++k)
        {
            if (k > 0)
            {
                const std::size_t b = static_cast<std::size_t>(2 + 4 * (k - 1));
                for (int c = 0; c < 4; ++c)
                    r[b + c] = y[static_cast<std::size_t>(c)] - q[b + c];
                y = {q[b], q[b + 1], q[b + 2], q[b + 3], 0.0};
                if (rec)
                {
                    // Drop the duplicated joint sample.
                    rec->s.pop_back(), rec->x.pop_back(), rec->v.pop_back(), rec->px.pop_back(), rec->pv.pop_back();
                    rec->alpha.pop_back(), rec->running_cost.pop_back();
                }
            }
            const std::size_t before = rec ? rec->s.size() : 0;
            y = detail::integrate(cost, y, seg_time(k), seg_time(k + 1), steps_per, rec);
            if (rec)
                for (std::size_t i = before; i < rec->running_cost.size(); ++i)
                    rec->running_cost[i] += running;
            running += y[4];
        }
        const auto dg = cost.dg(y[0], y[1]);
        r[0] = y[2] + dg[0];
        r[1] = y[3] + dg[1];
        if (rec)
        {
            rec->residual = {r[0], r[1]};
            rec->terminal_cost = cost.g(y[0], y[1]);
            rec->cost = running + rec->terminal_cost;
        }
        return r;
    };
    auto norm = [](const std::vector<double>& r) {
        double s = 0.0;
        for (double a : r)
            s += a * a;
        return std::sqrt(s);
    };

    auto newton = [&](std::vector<double>& q, int& it) {
        std::vector<double> r = residual(q, nullptr);
        double rn = norm(r);
        for (; it < opts.max_iterations && rn > opts.tolerance; ++it)
        {
            std::vector<double> jac(static_cast<std::size_t>(nunk * nunk));
            for (int c = 0; c < nunk; ++c)
            {
                const double h = 1e-6 * std::max(1.0, std::abs(q[static_cast<std::size_t>(c)]));
                auto zp = q, zm = q;
                zp[static_cast<std::size_t>(c)] += h;
                zm[static_cast<std::size_t>(c)] -= h;
                const auto rp = residual(zp, nullptr), rm = residual(zm, nullptr);
                for (int rr = 0; rr < nunk; ++rr)
                    jac[static_cast<std::size_t>(rr * nunk + c)] = (rp[static_cast<std::size_t>(rr)] - rm[static_cast<std::size_t>(rr)]) / (2 * h);
            }
            std::vector<double> step = r;
            if (!detail::solve_dense(jac, step, nunk))
                break;
            double lambda = 1.0;
            bool accepted = false;
            for (int k = 0; k < 30; ++k, lambda *= 0.5)
            {
                auto trial = q;
                for (int c = 0; c < nunk; ++c)
                    trial[static_cast<std::size_t>(c)] -= lambda * step[static_cast<std::size_t>(c)];
                std::vector<double> rt;
                try
                {
                    rt = residual(trial, nullptr);
                }
                catch (const SolverAbort&)
                {
                    continue;
                }
                const double tn = norm(rt);
                if (tn < rn)
                {
                    q = std::move(trial), r = std::move(rt), rn = tn;
                    accepted = true;
                    break;
                }
            }
            if (!accepted)
                break;
        }
        return rn;
    };

    int it = 0;
    double rn = newton(z, it);
    if (rn > opts.tolerance && !opts.initial_costate && nseg == 1)
    {
        // Newton on the grid guess can stall near a kink of u; retry from a fixed ring of costates
        // and keep the cheapest converged arc.
        double best = std::numeric_limits<double>::infinity();
        for (double a : {0.0, -1.0, 1.0})
            for (double b : {0.0, -1.0, 1.0, -2.0, 2.0})
            {
                if (a == 0.0 && b == 0.0)
                    continue;
                std::vector<double> q{p0[0] + a, p0[1] + b};
                int itq = 0;
                double rq;
                try
                {
                    rq = newton(q, itq);
                }
                catch (const SolverAbort&)
                {
                    continue;
                }
                it += itq;
                if (rq > opts.tolerance)
                    continue;
                PMPTrajectory probe;
                residual(q, &probe);
                if (probe.cost < best)
                    best = probe.cost, z = q, rn = rq;
            }
    }
    PMPTrajectory traj;
    residual(z, &traj);
    traj.iterations = it;
    traj.converged = rn <= opts.tolerance;
    return traj;
}

/// Convenience overload building the interpolant on the fly.
inline PMPTrajectory shoot(double x0, double v0, double t0, const EffectiveCost& cost, const ShootOptions& opts = {},
                           const ValueSolution* guess = nullptr)
{
    return shoot(x0, v0, t0, CostInterpolant(cost), opts, guess);
}

/// max_s |alpha(s) + D_v u(x(s), v(s), s)|.
inline double feedback_residual(const PMPTrajectory& traj, const ValueSolution& sol)
{
    double r = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k)
        r = std::max(r, std::abs(traj.alpha[k] + interp_path(sol.dvu, traj.x[k], traj.v[k], traj.s[k])));
    return r;
}

struct GrowthReport
{
    double max_v = 0.0, max_dv = 0.0, max_alpha = 0.0, max_dalpha = 0.0;
    double constant = 0.0; ///< C_run = max of the four / (1 + |v0|)
};

inline GrowthReport growth_check(const PMPTrajectory& traj, const CostInterpolant& cost)
{
    GrowthReport g;
    for (std::size_t k = 0; k < traj.size(); ++k)
    {
        const double dalpha = -traj.px[k] + traj.v[k] + cost.dv_ell(traj.x[k], traj.v[k], traj.s[k]);
        g.max_v = std::max(g.max_v, std::abs(traj.v[k]));
        g.max_dv = std::max(g.max_dv, std::abs(traj.pv[k]));
        g.max_alpha = std::max(g.max_alpha, std::abs(traj.alpha[k]));
        g.max_dalpha = std::max(g.max_dalpha, std::abs(dalpha));
    }
    const double m = std::max({g.max_v, g.max_dv, g.max_alpha, g.max_dalpha});
    g.constant = traj.size() ? m / (1.0 + std::abs(traj.v.front())) : 0.0;
    return g;
}

/// Max over samples of max_a (p_v a - a^2/2) - (p_v alpha - alpha^2/2) on a test grid.
inline double maximum_condition_gap(const PMPTrajectory& traj, double spacing = 1e-3, double range = 10.0)
{
    double worst = 0.0;
    const int n = static_cast<int>(range / spacing);
    for (std::size_t k = 0; k < traj.size(); ++k)
    {
        const double pv = traj.pv[k], a = traj.alpha[k];
        const double at = pv * a - 0.5 * a * a;
        double best = -std::numeric_limits<double>::infinity();
        for (int i = -n; i <= n; ++i)
        {
            const double b = i * spacing;
            best = std::max(best, pv * b - 0.5 * b * b);
        }
        worst = std::max(worst, best - at);
    }
    return worst;
}

} // namespace amfg
