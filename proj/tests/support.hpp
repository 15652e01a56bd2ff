#pragma once

#include "amfg/amfg.hpp"

#include <random>

namespace amfg::test
{

inline PhaseGrid baseline_grid(double scale = 1.0)
{
    return PhaseGrid(-4.0, 4.0, -3.0, 3.0, 96, 96).refined(scale);
}

inline TimeGrid baseline_time(double scale = 1.0)
{
    return TimeGrid(1.0, 200).refined(scale);
}

inline RunningCost baseline_running()
{
    RunningCost l = RunningCost::cosine_bump(1.0, 1.0, 1.0);
    l.center_x = 0.3;
    return l;
}

inline InitialDensity baseline_m0()
{
    InitialDensity m;
    m.center_x = -0.3;
    m.spread_x = 0.3;
    m.spread_v = 0.45;
    return m;
}

inline HjbOptions godunov()
{
    return {NumericalHamiltonian::godunov};
}

/// Weak Gaussian coupling on the cosine-bump instance, the shipped baseline.
inline MFGProblem baseline_problem(double scale = 1.0)
{
    CouplingSpec c;
    c.c_F = 0.05;
    MFGProblem p{baseline_grid(), baseline_time(), baseline_running(), c, baseline_m0(), 0.0, godunov()};
    return scale == 1.0 ? p : p.refined(scale);
}

inline MFGProblem lq_problem(double scale = 1.0)
{
    MFGProblem p{baseline_grid(), baseline_time(), RunningCost::zero(), CouplingSpec{}, baseline_m0(), 0.0, godunov()};
    return scale == 1.0 ? p : p.refined(scale);
}

/// Exact LQ feedback gradient tanh(T - t) v on every slice.
inline FieldPath lq_dvu(const PhaseGrid& g, const TimeGrid& tg)
{
    FieldPath p(g, tg);
    for (int n = 0; n <= tg.nt(); ++n)
    {
        const double k = std::tanh(tg.horizon() - tg.t(n));
        p[n] = ScalarField::from_function(g, [k](double, double v) { return k * v; });
    }
    return p;
}

/// Unit-mass density made of a few random Gaussian blobs inside the inner half-box.
inline ScalarField random_density(const PhaseGrid& g, std::mt19937_64& rng, int blobs = 3)
{
    std::uniform_real_distribution<double> ux(0.5 * g.x_min(), 0.5 * g.x_max());
    std::uniform_real_distribution<double> uv(0.5 * g.v_min(), 0.5 * g.v_max());
    std::uniform_real_distribution<double> us(0.2, 0.5), uw(0.2, 1.0);
    struct Blob
    {
        double x, v, s, w;
    };
    std::vector<Blob> b;
    for (int k = 0; k < blobs; ++k)
        b.push_back({ux(rng), uv(rng), us(rng), uw(rng)});
    ScalarField m = ScalarField::from_function(g, [&](double x, double v) {
        double s = 0.0;
        for (const auto& q : b)
            s += q.w * std::exp(-0.5 * ((x - q.x) * (x - q.x) + (v - q.v) * (v - q.v)) / (q.s * q.s));
        return s;
    });
    m *= 1.0 / m.integral();
    return m;
}

} // namespace amfg::test
