#pragma once

#include "amfg/grid.hpp"
#include "amfg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace amfg
{

struct DensityPath
{
    FieldPath m;
    double sigma = 0.0;
    std::vector<double> mass;   ///< per-slice total mass
    std::vector<double> moment; ///< per-slice second moment of (x, v)
    double max_value = 0.0;     ///< K_run: sup over slices of max m
    double min_pre_clamp = 0.0; ///< most negative value produced by the scheme
    double clamp_correction = 0.0;
    double cfl_margin = 0.0;

    const PhaseGrid& grid() const { return m.grid(); }
    const TimeGrid& time() const { return m.time(); }
};

struct TransportOptions
{
    double negative_tolerance = 1e-12;
    double max_clamp_correction = 1e-8;
    double max_boundary_mass = 1e-6;
    int first_slice = 0; ///< start the march at this time index (restart support)
};

inline double second_moment(const ScalarField& m)
{
    return m.integrate([](double x, double v) { return x * x + v * v; });
}

/// Conservative upwind finite-volume march of
///   d_t m + v d_x m - d_v(m D_v u) = sigma Lap m
/// with drift (v, -D_v u), zero flux through the box edge.
/// Slices before opts.first_slice are copies of m_start.
inline DensityPath solve_transport_forward(const ScalarField& m_start, const FieldPath& dvu, double sigma,
                                           const TransportOptions& opts = {})
{
    const PhaseGrid& g = dvu.grid();
    const TimeGrid& tg = dvu.time();
    if (!(m_start.grid() == g))
        throw std::invalid_argument("solve_transport_forward: density and drift grids differ");
    if (!(sigma >= 0.0))
        throw std::invalid_argument("solve_transport_forward: sigma must be >= 0");
    const int nx = g.nx(), nv = g.nv(), nt = tg.nt();
    const double dx = g.dx(), dv = g.dv(), dt = tg.dt(), area = g.cell_area();

    DensityPath path;
    path.m = FieldPath(g, tg);
    path.sigma = sigma;
    path.mass.assign(static_cast<std::size_t>(nt) + 1, 0.0);
    path.moment.assign(static_cast<std::size_t>(nt) + 1, 0.0);
    for (int n = 0; n <= opts.first_slice; ++n)
        path.m[n] = m_start;

    auto boundary_mass = [&](const ScalarField& m) {
        double s = 0.0;
        for (int i = 0; i < nx; ++i)
            s += m(i, 0) + m(i, nv - 1);
        for (int j = 1; j + 1 < nv; ++j)
            s += m(0, j) + m(nx - 1, j);
        return s * area;
    };

    std::vector<double> fx(static_cast<std::size_t>(nx + 1) * nv), fv(static_cast<std::size_t>(nx) * (nv + 1));
    auto FX = [&](int i, int j) -> double& { return fx[static_cast<std::size_t>(i) * nv + j]; };
    auto FV = [&](int i, int j) -> double& { return fv[static_cast<std::size_t>(i) * (nv + 1) + j]; };

    for (int n = opts.first_slice; n < nt; ++n)
    {
        const ScalarField& m = path.m[n];
        const ScalarField& d = dvu[n];
        const double max_drift = d.max_abs();
        const double margin = dt * explicit_rate(g, max_drift, sigma);
        path.cfl_margin = std::max(path.cfl_margin, margin);
        if (dt > cfl_dt(g, max_drift, sigma) || margin > 1.0)
            throw SolverAbort("transport: CFL violated at slice " + std::to_string(n) +
                              ": max|D_v u|=" + std::to_string(max_drift) + ", dt=" + std::to_string(dt));

        // x-faces i-1/2 for i = 0..nx; outer faces carry no flux.
        for (int j = 0; j < nv; ++j)
        {
            const double v = g.v(j);
            FX(0, j) = FX(nx, j) = 0.0;
            for (int i = 1; i < nx; ++i)
            {
                double f = v > 0 ? v * m(i - 1, j) : v * m(i, j);
                if (sigma > 0.0)
                    f -= sigma * (m(i, j) - m(i - 1, j)) / dx;
                FX(i, j) = f;
            }
        }
        // v-faces j-1/2 for j = 0..nv with drift -D_v u averaged onto the face.
        for (int i = 0; i < nx; ++i)
        {
            FV(i, 0) = FV(i, nv) = 0.0;
            for (int j = 1; j < nv; ++j)
            {
                const double b = -0.5 * (d(i, j - 1) + d(i, j));
                double f = b > 0 ? b * m(i, j - 1) : b * m(i, j);
                if (sigma > 0.0)
                    f -= sigma * (m(i, j) - m(i, j - 1)) / dv;
                FV(i, j) = f;
            }
        }

        ScalarField next(g);
        double most_negative = 0.0, negative_mass = 0.0;
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nv; ++j)
            {
                const double val =
                    m(i, j) - dt * ((FX(i + 1, j) - FX(i, j)) / dx + (FV(i, j + 1) - FV(i, j)) / dv);
                if (val < 0.0)
                {
                    most_negative = std::min(most_negative, val);
                    negative_mass -= val;
                }
                next(i, j) = val;
            }
        if (!next.all_finite())
            throw SolverAbort("transport: non-finite density at slice " + std::to_string(n + 1));
        path.min_pre_clamp = std::min(path.min_pre_clamp, most_negative);
        if (negative_mass > 0.0)
        {
            // Clamp to the admissible cone and restore the pre-clamp mass.
            const double before = next.integral();
            for (double& a : next.values())
                a = std::max(a, 0.0);
            next *= before / next.integral();
            path.clamp_correction += negative_mass * area;
            if (path.clamp_correction > opts.max_clamp_correction)
                throw SolverAbort("transport: clamp correction " + std::to_string(path.clamp_correction) +
                                  " exceeds tolerance at slice " + std::to_string(n + 1));
        }
        const double leak = boundary_mass(next);
        if (leak > opts.max_boundary_mass)
            throw SolverAbort("transport: mass " + std::to_string(leak) + " reached the box edge at slice " +
                              std::to_string(n + 1) + " (t=" + std::to_string(tg.t(n + 1)) +
                              "); enlarge the box or shorten the horizon");
        path.m[n + 1] = std::move(next);
    }

    for (int n = 0; n <= nt; ++n)
    {
        path.mass[n] = path.m[n].integral();
        path.moment[n] = second_moment(path.m[n]);
        path.max_value = std::max(path.max_value, path.m[n].max_value());
    }
    return path;
}

inline DensityPath solve_transport_forward(const InitialDensity& m0, const FieldPath& dvu, double sigma,
                                           const TransportOptions& opts = {})
{
    return solve_transport_forward(m0.discretize(dvu.grid()), dvu, sigma, opts);
}

struct MomentReport
{
    double initial = 0.0;
    double max = 0.0;
    double constant = 0.0; ///< K with max <= K (initial + 1)
};

inline MomentReport moment_report(const DensityPath& path)
{
    MomentReport r;
    r.initial = path.moment.front();
    r.max = *std::max_element(path.moment.begin(), path.moment.end());
    r.constant = r.max / (r.initial + 1.0);
    return r;
}

inline double mass_drift(const DensityPath& path)
{
    double e = 0.0;
    for (double a : path.mass)
        e = std::max(e, std::abs(a - path.mass.front()));
    return e;
}

struct PositivityReport
{
    int reach = 0;          ///< max L1 cell distance from the initial support to an interior node
    int first_positive = -1; ///< first slice with every interior node > 0, -1 if none
    double min_after_reach = 0.0;
    bool ok() const { return first_positive >= 0 && first_positive <= reach && min_after_reach > 0.0; }
};

/// The explicit 5-point stencil moves mass one cell per step, so interior
/// positivity can only hold from slice `reach` on.
inline PositivityReport interior_positivity(const DensityPath& path)
{
    const auto& g = path.grid();
    const int nx = g.nx(), nv = g.nv();
    constexpr int far = std::numeric_limits<int>::max() / 4;
    std::vector<int> d(g.size(), far);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nv; ++j)
            if (path.m[0](i, j) > 0.0)
                d[g.index(i, j)] = 0;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nv; ++j)
        {
            int& c = d[g.index(i, j)];
            if (i > 0)
                c = std::min(c, d[g.index(i - 1, j)] + 1);
            if (j > 0)
                c = std::min(c, d[g.index(i, j - 1)] + 1);
        }
    for (int i = nx - 1; i >= 0; --i)
        for (int j = nv - 1; j >= 0; --j)
        {
            int& c = d[g.index(i, j)];
            if (i + 1 < nx)
                c = std::min(c, d[g.index(i + 1, j)] + 1);
            if (j + 1 < nv)
                c = std::min(c, d[g.index(i, j + 1)] + 1);
        }

    PositivityReport r;
    for (int i = 1; i + 1 < nx; ++i)
        for (int j = 1; j + 1 < nv; ++j)
            r.reach = std::max(r.reach, d[g.index(i, j)]);
    r.min_after_reach = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= path.time().nt(); ++n)
    {
        double mn = std::numeric_limits<double>::infinity();
        for (int i = 1; i + 1 < nx; ++i)
            for (int j = 1; j + 1 < nv; ++j)
                mn = std::min(mn, path.m[n](i, j));
        if (mn > 0.0 && r.first_positive < 0)
            r.first_positive = n;
        if (n >= r.reach)
            r.min_after_reach = std::min(r.min_after_reach, mn);
    }
    if (r.reach > path.time().nt())
        r.min_after_reach = 0.0;
    return r;
}

} // namespace amfg
