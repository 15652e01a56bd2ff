#pragma once

#include "amfg/grid.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace amfg
{

/// H(x, v, p_v) = max_a (-a p_v - l(x,v,a)) with l = l(x,v) + |a|^2/2 + |v|^2/2.
inline double eval_hamiltonian(double v, double p_v, double l_val)
{
    return 0.5 * p_v * p_v - 0.5 * v * v - l_val;
}

/// The maximizer in eval_hamiltonian.
inline double optimal_control(double p_v) { return -p_v; }

/// Sup-norms of a C^2 function and of its first and second derivatives.
struct C2Bounds
{
    double value = 0.0;
    double gradient = 0.0;
    double hessian = 0.0;
    double c2_norm() const { return value + gradient + hessian; }
};

/// The x,v-dependent part l(x,v) of the running cost.
struct RunningCost
{
    enum class Kind
    {
        zero,
        constant,
        cosine_bump,
        gaussian_bump
    };

    Kind kind = Kind::zero;
    double amplitude = 0.0;
    double length_x = 1.0;
    double length_v = 1.0;
    double center_x = 0.0;
    double center_v = 0.0;

    static RunningCost zero() { return {}; }
    static RunningCost constant(double c) { return {Kind::constant, c}; }
    static RunningCost cosine_bump(double a, double lx, double lv) { return {Kind::cosine_bump, a, lx, lv}; }
    static RunningCost gaussian_bump(double a, double lx, double lv) { return {Kind::gaussian_bump, a, lx, lv}; }

    void validate() const
    {
        if (!std::isfinite(amplitude) || !(length_x > 0.0) || !(length_v > 0.0))
            throw std::invalid_argument("RunningCost: amplitude must be finite and length scales positive");
    }

    double operator()(double x, double v) const
    {
        if (kind == Kind::zero)
            return 0.0;
        if (kind == Kind::constant)
            return amplitude;
        return amplitude * profile((x - center_x) / length_x).f * profile((v - center_v) / length_v).f;
    }

    /// (d/dx, d/dv)
    std::array<double, 2> gradient(double x, double v) const
    {
        if (kind == Kind::zero || kind == Kind::constant)
            return {0.0, 0.0};
        const Profile px = profile((x - center_x) / length_x);
        const Profile pv = profile((v - center_v) / length_v);
        return {amplitude * px.df / length_x * pv.f, amplitude * px.f * pv.df / length_v};
    }

    /// Closed-form bounds for the separable profile a * f(x/Lx) * f(v/Lv).
    C2Bounds bounds() const
    {
        if (kind == Kind::zero)
            return {};
        if (kind == Kind::constant)
            return {std::abs(amplitude), 0.0, 0.0};
        auto [f0, f1, f2] = profile_bounds();
        const double a = std::abs(amplitude);
        const double lx = length_x, lv = length_v;
        C2Bounds b;
        b.value = a * f0 * f0;
        b.gradient = a * f1 * f0 * std::hypot(1.0 / lx, 1.0 / lv);
        // Frobenius norm of the Hessian with each entry bounded separately.
        const double hxx = f2 * f0 / (lx * lx), hvv = f0 * f2 / (lv * lv), hxv = f1 * f1 / (lx * lv);
        b.hessian = a * std::sqrt(hxx * hxx + hvv * hvv + 2 * hxv * hxv);
        return b;
    }

private:
    struct Profile
    {
        double f, df, d2f;
    };

    Profile profile(double s) const
    {
        using std::numbers::pi;
        if (kind == Kind::cosine_bump)
        {
            // ((1 + cos(pi s)) / 2)^2 on |s| < 1, zero outside; C^3.
            if (std::abs(s) >= 1.0)
                return {0.0, 0.0, 0.0};
            const double c = std::cos(pi * s), sn = std::sin(pi * s);
            const double h = 0.5 * (1 + c);
            return {h * h, -pi * h * sn, -0.5 * pi * pi * (c + std::cos(2 * pi * s))};
        }
        if (kind == Kind::gaussian_bump)
        {
            const double e = std::exp(-0.5 * s * s);
            return {e, -s * e, (s * s - 1) * e};
        }
        return {1.0, 0.0, 0.0};
    }

    std::array<double, 3> profile_bounds() const
    {
        using std::numbers::pi;
        if (kind == Kind::cosine_bump)
            return {1.0, 3.0 * std::sqrt(3.0) * pi / 8.0, pi * pi};
        // Gaussian: max |s e^{-s^2/2}| = e^{-1/2}, max |(s^2-1) e^{-s^2/2}| = 1.
        return {1.0, std::exp(-0.5), 1.0};
    }
};

/// Compactly supported initial density; discretize() normalizes on the grid.
struct InitialDensity
{
    enum class Kind
    {
        truncated_gaussian,
        bump,
        two_bumps
    };

    Kind kind = Kind::truncated_gaussian;
    double center_x = 0.0;
    double center_v = 0.0;
    double spread_x = 0.3; ///< std dev (gaussian) or radius (bump)
    double spread_v = 0.3;
    double separation = 1.0; ///< two_bumps: centers at center_x -/+ separation/2

    static constexpr double gaussian_cutoff = 3.0;

    void validate() const
    {
        if (!(spread_x > 0.0) || !(spread_v > 0.0))
            throw std::invalid_argument("InitialDensity: spreads must be positive");
        if (kind == Kind::two_bumps && !(separation > 0.0))
            throw std::invalid_argument("InitialDensity: two_bumps separation must be positive");
    }

    /// Unnormalized profile.
    double raw(double x, double v) const
    {
        auto bump = [](double s) {
            if (std::abs(s) >= 1.0)
                return 0.0;
            const double c = 0.5 * (1 + std::cos(std::numbers::pi * s));
            return c * c;
        };
        switch (kind)
        {
        case Kind::truncated_gaussian:
        {
            const double sx = (x - center_x) / spread_x, sv = (v - center_v) / spread_v;
            if (std::abs(sx) > gaussian_cutoff || std::abs(sv) > gaussian_cutoff)
                return 0.0;
            return std::exp(-0.5 * (sx * sx + sv * sv));
        }
        case Kind::bump:
            return bump((x - center_x) / spread_x) * bump((v - center_v) / spread_v);
        case Kind::two_bumps:
            return bump((x - center_x + 0.5 * separation) / spread_x) * bump((v - center_v) / spread_v)
                 + bump((x - center_x - 0.5 * separation) / spread_x) * bump((v - center_v) / spread_v);
        }
        return 0.0;
    }

    /// Axis-aligned box {x_lo, x_hi, v_lo, v_hi} outside which raw() vanishes.
    std::array<double, 4> support() const
    {
        const double rx = kind == Kind::truncated_gaussian ? gaussian_cutoff * spread_x : spread_x;
        const double rv = kind == Kind::truncated_gaussian ? gaussian_cutoff * spread_v : spread_v;
        const double half = kind == Kind::two_bumps ? 0.5 * separation : 0.0;
        return {center_x - half - rx, center_x + half + rx, center_v - rv, center_v + rv};
    }

    /// True when the support keeps at least margin * (box width) from every edge.
    bool support_within_margin(const PhaseGrid& g, double margin = 0.2) const
    {
        auto s = support();
        const double mx = margin * (g.x_max() - g.x_min()), mv = margin * (g.v_max() - g.v_min());
        return s[0] >= g.x_min() + mx && s[1] <= g.x_max() - mx && s[2] >= g.v_min() + mv && s[3] <= g.v_max() - mv;
    }

    ScalarField discretize(const PhaseGrid& g) const
    {
        validate();
        auto s = support();
        if (!(s[0] > g.x_min() && s[1] < g.x_max() && s[2] > g.v_min() && s[3] < g.v_max()))
            throw std::invalid_argument("InitialDensity: support must lie strictly inside the grid box");
        auto m = ScalarField::from_function(g, [this](double x, double v) { return raw(x, v); });
        const double mass = m.integral();
        if (!(mass > 0.0))
            throw std::invalid_argument("InitialDensity: no grid node inside the support");
        m *= 1.0 / mass;
        return m;
    }
};

/// Closed-form value for l = 0, g = 0: u = tanh(T - t) v^2 / 2.
struct LQOracle
{
    double horizon = 1.0;

    double slope(double t) const { return std::tanh(horizon - t); }
    double value(double v, double t) const { return 0.5 * slope(t) * v * v; }
    double dv_value(double v, double t) const { return slope(t) * v; }
    /// Optimal velocity from v0 at time 0.
    double velocity(double v0, double t) const { return v0 * std::cosh(horizon - t) / std::cosh(horizon); }
};

inline double lq_value(double /*x*/, double v, double t, double horizon)
{
    if (!(t >= 0.0 && t <= horizon))
        throw std::domain_error("lq_value: t must lie in [0, T]");
    return LQOracle{horizon}.value(v, t);
}

/// Largest stable explicit step for the transport/HJB pair.
inline double cfl_dt(const PhaseGrid& grid, double max_dvu, double sigma)
{
    constexpr double safety = 0.9;
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto ratio = [](double num, double den) { return den > 0.0 ? num / den : inf; };
    const double dx = grid.dx(), dv = grid.dv();
    double m = std::min({ratio(dx, grid.max_abs_v()), ratio(dv, max_dvu), ratio(dx * dx, 4 * sigma),
                         ratio(dv * dv, 4 * sigma)});
    return safety * m;
}

/// Sum of explicit rates; the update is a convex combination iff dt * rate <= 1.
inline double explicit_rate(const PhaseGrid& grid, double max_dvu, double sigma)
{
    const double dx = grid.dx(), dv = grid.dv();
    return grid.max_abs_v() / dx + max_dvu / dv + 2 * sigma / (dx * dx) + 2 * sigma / (dv * dv);
}

} // namespace amfg
