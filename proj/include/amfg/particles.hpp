#pragma once

#include "amfg/grid.hpp"
#include "amfg/model.hpp"
#include "amfg/transport.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace amfg
{

struct ParticleEnsemble
{
    std::vector<double> x, v, w;
    std::size_t size() const { return w.size(); }
    double total_weight() const { return std::accumulate(w.begin(), w.end(), 0.0); }
};

inline constexpr std::size_t min_active_cells = 100;

/// Deterministic stratified sampler: every grid cell with m0 above a relative
/// threshold is split into s x s sub-cells (s chosen so the count reaches n),
/// one particle per sub-cell center, weight = cell mass / s^2.
inline ParticleEnsemble sample_from_density(const ScalarField& m0, std::size_t n, double rel_threshold = 1e-12)
{
    if (n < 100)
        throw std::invalid_argument("sample_from_density: need n >= 100");
    const auto& g = m0.grid();
    const double cut = rel_threshold * m0.max_value();
    std::vector<std::pair<int, int>> active;
    for (int i = 0; i < g.nx(); ++i)
        for (int j = 0; j < g.nv(); ++j)
            if (m0(i, j) > cut)
                active.emplace_back(i, j);
    if (active.size() < min_active_cells)
        throw std::invalid_argument("sample_from_density: only " + std::to_string(active.size()) +
                                    " cells above threshold; m0 is degenerate for this grid");
    const int s = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) / active.size()) - 1e-12)));

    ParticleEnsemble e;
    const std::size_t count = active.size() * static_cast<std::size_t>(s * s);
    e.x.reserve(count), e.v.reserve(count), e.w.reserve(count);
    double total = 0.0;
    for (auto [i, j] : active)
    {
        const double wcell = m0(i, j) * g.cell_area() / (s * s);
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b)
            {
                e.x.push_back(g.x(i) + g.dx() * ((a + 0.5) / s - 0.5));
                e.v.push_back(g.v(j) + g.dv() * ((b + 0.5) / s - 0.5));
                e.w.push_back(wcell);
                total += wcell;
            }
    }
    for (double& w : e.w)
        w /= total;
    return e;
}

inline ParticleEnsemble sample_from_density(const InitialDensity& m0, const PhaseGrid& grid, std::size_t n)
{
    return sample_from_density(m0.discretize(grid), n);
}

/// Positions of every particle at every time node.
struct ParticleTrajectories
{
    TimeGrid time;
    std::vector<std::vector<double>> x, v; ///< [time index][particle]
    std::vector<double> w;

    std::size_t particles() const { return w.size(); }
    ParticleEnsemble at(int n) const { return {x[static_cast<std::size_t>(n)], v[static_cast<std::size_t>(n)], w}; }
};

/// RK4 for the ensemble under a drift (x, v, t) -> (dx/dt, dv/dt), one step
/// per time-grid interval from time index n0 to n1 (n1 < n0 integrates backward).
template <class Drift>
ParticleTrajectories advect_flow(const ParticleEnsemble& ens, const PhaseGrid& box, const TimeGrid& time, Drift&& drift,
                                 int n0 = 0, int n1 = -1)
{
    if (n1 < 0)
        n1 = time.nt();
    const int dir = n1 >= n0 ? 1 : -1;
    ParticleTrajectories tr{time, {}, {}, ens.w};
    tr.x.assign(static_cast<std::size_t>(time.nt()) + 1, {});
    tr.v.assign(static_cast<std::size_t>(time.nt()) + 1, {});
    tr.x[static_cast<std::size_t>(n0)] = ens.x;
    tr.v[static_cast<std::size_t>(n0)] = ens.v;
    const std::size_t np = ens.size();

    for (int n = n0; n != n1; n += dir)
    {
        const double t = time.t(n), h = time.t(n + dir) - t;
        const auto& xs = tr.x[static_cast<std::size_t>(n)];
        const auto& vs = tr.v[static_cast<std::size_t>(n)];
        std::vector<double> xn(np), vn(np);
        for (std::size_t p = 0; p < np; ++p)
        {
            const double x = xs[p], v = vs[p];
            const std::array<double, 2> k1 = drift(x, v, t);
            const std::array<double, 2> k2 = drift(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], t + 0.5 * h);
            const std::array<double, 2> k3 = drift(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], t + 0.5 * h);
            const std::array<double, 2> k4 = drift(x + h * k3[0], v + h * k3[1], t + h);
            xn[p] = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
            vn[p] = v + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
            if (!box.contains(xn[p], vn[p]))
                throw SolverAbort("particles: particle " + std::to_string(p) + " left the box at t=" +
                                  std::to_string(time.t(n + dir)) + "; the truncation is too tight");
        }
        tr.x[static_cast<std::size_t>(n + dir)] = std::move(xn);
        tr.v[static_cast<std::size_t>(n + dir)] = std::move(vn);
    }
    return tr;
}

/// Optimal flow x' = v, v' = -D_v u with D_v u bilinear in space, linear in time.
inline ParticleTrajectories advect(const ParticleEnsemble& ens, const FieldPath& dvu)
{
    return advect_flow(ens, dvu.grid(), dvu.time(), [&dvu](double x, double v, double t) {
        return std::array<double, 2>{v, -interp_path(dvu, x, v, t)};
    });
}

struct TestFunction
{
    std::string name;
    std::function<double(double, double)> phi;
    int order = 0; ///< polynomial degree for monomials, -1 for bumps
};

/// 1, x, v, x^2, v^2, xv and three Gaussian bumps around (cx, cv) with width r.
inline std::vector<TestFunction> default_test_functions(double cx, double cv, double r)
{
    auto bump = [r](double bx, double bv) {
        return [=](double x, double v) { return std::exp(-0.5 * ((x - bx) * (x - bx) + (v - bv) * (v - bv)) / (r * r)); };
    };
    return {
        {"1", [](double, double) { return 1.0; }, 0},
        {"x", [](double x, double) { return x; }, 1},
        {"v", [](double, double v) { return v; }, 1},
        {"x2", [](double x, double) { return x * x; }, 2},
        {"v2", [](double, double v) { return v * v; }, 2},
        {"xv", [](double x, double v) { return x * v; }, 2},
        {"bump_c", bump(cx, cv), -1},
        {"bump_p", bump(cx + r, cv + 0.5 * r), -1},
        {"bump_m", bump(cx - r, cv - 0.5 * r), -1},
    };
}

struct RepresentationEntry
{
    std::string name;
    int slice = 0;
    double grid_side = 0.0, particle_side = 0.0;
    double abs_diff = 0.0, rel_diff = 0.0;
};

struct RepresentationReport
{
    std::vector<RepresentationEntry> entries;
    double max_abs = 0.0;
    double max_rel_second_order = 0.0; ///< x2, v2 relative to value; xv relative to sqrt(<x2><v2>)
    double mass_discrepancy = 0.0;     ///< phi = 1
    double max_abs_first_order = 0.0;
    double max_abs_bump = 0.0;
};

/// Compares the grid density against the particle pushforward of m0 for each
/// test function at the given time indices.
inline RepresentationReport representation_check(const ParticleTrajectories& tr, const DensityPath& path,
                                                 const std::vector<TestFunction>& tests, const std::vector<int>& slices)
{
    if (!(tr.time == path.time()))
        throw std::invalid_argument("representation_check: time grids differ");
    RepresentationReport r;
    for (int n : slices)
    {
        const auto& xs = tr.x[static_cast<std::size_t>(n)];
        const auto& vs = tr.v[static_cast<std::size_t>(n)];
        auto particle_mean = [&](const std::function<double(double, double)>& f) {
            double s = 0.0;
            for (std::size_t p = 0; p < tr.particles(); ++p)
                s += tr.w[p] * f(xs[p], vs[p]);
            return s;
        };
        const double px2 = particle_mean([](double x, double) { return x * x; });
        const double pv2 = particle_mean([](double, double v) { return v * v; });
        for (const auto& tf : tests)
        {
            RepresentationEntry e{tf.name, n, path.m[n].integrate(tf.phi), particle_mean(tf.phi)};
            e.abs_diff = std::abs(e.grid_side - e.particle_side);
            double scale = std::abs(e.particle_side);
            if (tf.name == "xv")
                scale = std::sqrt(px2 * pv2);
            e.rel_diff = scale > 0.0 ? e.abs_diff / scale : e.abs_diff;
            r.max_abs = std::max(r.max_abs, e.abs_diff);
            if (tf.order == 2)
                r.max_rel_second_order = std::max(r.max_rel_second_order, e.rel_diff);
            else if (tf.order == 1)
                r.max_abs_first_order = std::max(r.max_abs_first_order, e.abs_diff);
            else if (tf.order == 0)
                r.mass_discrepancy = std::max(r.mass_discrepancy, e.abs_diff);
            else
                r.max_abs_bump = std::max(r.max_abs_bump, e.abs_diff);
            r.entries.push_back(std::move(e));
        }
    }
    return r;
}

} // namespace amfg
