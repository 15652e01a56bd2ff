#pragma once

#include "amfg/grid.hpp"
#include "amfg/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace amfg
{

inline constexpr double d1_mass_tolerance = 1e-6;

/// Unit directions at 0, pi/4, pi/2, 3pi/4. Their negations give the same 1D
/// distance, so averaging over these four equals averaging over all eight.
inline std::array<std::array<double, 2>, 4> sliced_directions()
{
    const double r = std::numbers::sqrt2 / 2;
    return {{{1.0, 0.0}, {r, r}, {0.0, 1.0}, {-r, r}}};
}

/// Mean of |<e, z>| over the direction set; d1_estimate of a translation by z.
inline double sliced_translation_factor(double zx, double zv)
{
    double s = 0.0;
    for (auto e : sliced_directions())
        s += std::abs(e[0] * zx + e[1] * zv);
    return s / 4.0;
}

/// Sliced Monge-Kantorovich surrogate: average over the direction set of the
/// exact 1D W1 of the projected node masses. Never exceeds the true d1.
/// Holds the projection orderings of one grid so repeated calls skip the sort.
class SlicedW1
{
public:
    explicit SlicedW1(const PhaseGrid& grid) : grid_(grid)
    {
        const std::size_t n = grid.size();
        std::vector<double> proj(n);
        auto dirs = sliced_directions();
        for (std::size_t d = 0; d < dirs.size(); ++d)
        {
            for (int i = 0; i < grid.nx(); ++i)
                for (int j = 0; j < grid.nv(); ++j)
                    proj[grid.index(i, j)] = dirs[d][0] * grid.x(i) + dirs[d][1] * grid.v(j);
            auto& order = orders_[d];
            order.resize(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });
            positions_[d].resize(n);
            for (std::size_t k = 0; k < n; ++k)
                positions_[d][k] = proj[order[k]];
        }
    }

    double operator()(const ScalarField& m1, const ScalarField& m2) const
    {
        if (!(m1.grid() == grid_) || !(m2.grid() == grid_))
            throw std::invalid_argument("d1_estimate: fields live on different grids");
        const double a1 = m1.integral(), a2 = m2.integral();
        if (std::abs(a1 - a2) > d1_mass_tolerance)
            throw std::invalid_argument("d1_estimate: mass mismatch " + std::to_string(a1 - a2));
        const std::size_t n = grid_.size();
        double total = 0.0;
        for (std::size_t d = 0; d < orders_.size(); ++d)
        {
            const auto& order = orders_[d];
            const auto& pos = positions_[d];
            double cdf = 0.0, acc = 0.0;
            for (std::size_t k = 0; k + 1 < n; ++k)
            {
                cdf += m1[order[k]] - m2[order[k]];
                acc += std::abs(cdf) * (pos[k + 1] - pos[k]);
            }
            total += acc * grid_.cell_area();
        }
        return total / static_cast<double>(orders_.size());
    }

private:
    PhaseGrid grid_;
    std::array<std::vector<std::size_t>, 4> orders_;
    std::array<std::vector<double>, 4> positions_;
};

inline double d1_estimate(const ScalarField& m1, const ScalarField& m2)
{
    return SlicedW1(m1.grid())(m1, m2);
}

/// Exact Euclidean W1 between two grid densities by successive shortest
/// paths on the transportation problem. Dense O((n1 + n2)^2) Dijkstra per
/// augmentation; intended for coarse grids (about 32 x 32) and compact supports.
inline double exact_w1(const ScalarField& m1, const ScalarField& m2, double mass_floor = 1e-14)
{
    const auto& g = m1.grid();
    if (!(m2.grid() == g))
        throw std::invalid_argument("exact_w1: fields live on different grids");
    struct Site
    {
        double x, v, mass;
    };
    auto collect = [&](const ScalarField& m) {
        std::vector<Site> s;
        double total = 0.0;
        for (int i = 0; i < g.nx(); ++i)
            for (int j = 0; j < g.nv(); ++j)
                if (m(i, j) * g.cell_area() > mass_floor)
                    s.push_back({g.x(i), g.v(j), m(i, j) * g.cell_area()}), total += s.back().mass;
        for (auto& a : s)
            a.mass /= total;
        return s;
    };
    auto src = collect(m1), dst = collect(m2);
    const std::size_t ns = src.size(), nd = dst.size(), nn = ns + nd;
    if (ns == 0 || nd == 0)
        throw std::invalid_argument("exact_w1: empty measure");

    std::vector<double> cost(ns * nd), flow(ns * nd, 0.0);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < nd; ++j)
            cost[i * nd + j] = std::hypot(src[i].x - dst[j].x, src[i].v - dst[j].v);

    std::vector<double> supply(ns), demand(nd), pot(nn, 0.0), dist(nn);
    for (std::size_t i = 0; i < ns; ++i)
        supply[i] = src[i].mass;
    for (std::size_t j = 0; j < nd; ++j)
        demand[j] = dst[j].mass;
    std::vector<long> parent(nn);
    std::vector<char> done(nn);
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr double eps = 1e-15;

    double remaining = 1.0;
    while (remaining > 1e-13)
    {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        for (std::size_t i = 0; i < ns; ++i)
            if (supply[i] > eps)
                dist[i] = 0.0;
        long target = -1;
        for (;;)
        {
            long u = -1;
            for (std::size_t k = 0; k < nn; ++k)
                if (!done[k] && dist[k] < inf && (u < 0 || dist[k] < dist[static_cast<std::size_t>(u)]))
                    u = static_cast<long>(k);
            if (u < 0)
                break;
            const auto uu = static_cast<std::size_t>(u);
            done[uu] = 1;
            if (uu >= ns && demand[uu - ns] > eps)
            {
                target = u;
                break;
            }
            if (uu < ns)
            {
                for (std::size_t j = 0; j < nd; ++j)
                {
                    const std::size_t w = ns + j;
                    if (done[w])
                        continue;
                    const double rc = std::max(0.0, cost[uu * nd + j] + pot[uu] - pot[w]);
                    if (dist[uu] + rc < dist[w])
                        dist[w] = dist[uu] + rc, parent[w] = u;
                }
            }
            else
            {
                const std::size_t j = uu - ns;
                for (std::size_t i = 0; i < ns; ++i)
                {
                    if (done[i] || flow[i * nd + j] <= 0.0)
                        continue;
                    const double rc = std::max(0.0, -cost[i * nd + j] + pot[uu] - pot[i]);
                    if (dist[uu] + rc < dist[i])
                        dist[i] = dist[uu] + rc, parent[i] = u;
                }
            }
        }
        if (target < 0)
            break;
        const double dt = dist[static_cast<std::size_t>(target)];
        for (std::size_t k = 0; k < nn; ++k)
            pot[k] += std::min(dist[k], dt);

        // Bottleneck along the path back to a source.
        double amount = demand[static_cast<std::size_t>(target) - ns];
        long w = target;
        while (parent[static_cast<std::size_t>(w)] >= 0)
        {
            const long p = parent[static_cast<std::size_t>(w)];
            if (static_cast<std::size_t>(p) >= ns) // backward arc sink p -> source w
                amount = std::min(amount, flow[static_cast<std::size_t>(w) * nd + (static_cast<std::size_t>(p) - ns)]);
            w = p;
        }
        amount = std::min(amount, supply[static_cast<std::size_t>(w)]);
        supply[static_cast<std::size_t>(w)] -= amount;
        demand[static_cast<std::size_t>(target) - ns] -= amount;
        w = target;
        while (parent[static_cast<std::size_t>(w)] >= 0)
        {
            const auto p = static_cast<std::size_t>(parent[static_cast<std::size_t>(w)]);
            const auto ww = static_cast<std::size_t>(w);
            if (p < ns)
                flow[p * nd + (ww - ns)] += amount;
            else
                flow[ww * nd + (p - ns)] -= amount;
            w = parent[static_cast<std::size_t>(w)];
        }
        remaining -= amount;
    }

    double total = 0.0;
    for (std::size_t k = 0; k < ns * nd; ++k)
        total += flow[k] * cost[k];
    return total;
}

struct HolderReport
{
    double max_ratio = 0.0; ///< max d1_estimate(m(t1), m(t2)) / sqrt(t2 - t1)
    int pairs = 0;
};

/// Pairs (k h, (k+1) h) for strides h = nt, nt/2, ... down to one time step.
inline HolderReport time_holder_report(const DensityPath& path)
{
    const auto& tg = path.time();
    const SlicedW1 d1(path.grid());
    HolderReport r;
    for (int stride = tg.nt(); stride >= 1; stride /= 2)
        for (int n = 0; n + stride <= tg.nt(); n += stride)
        {
            const double d = d1(path.m[n], path.m[n + stride]);
            r.max_ratio = std::max(r.max_ratio, d / std::sqrt(tg.t(n + stride) - tg.t(n)));
            ++r.pairs;
        }
    return r;
}

} // namespace amfg
