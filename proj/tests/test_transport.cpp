#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <numbers>

using namespace amfg;
using Catch::Approx;

namespace
{

FieldPath zero_drift(const PhaseGrid& g, const TimeGrid& tg) { return FieldPath(g, tg); }

FieldPath bump_drift(double scale = 1.0)
{
    const auto g = test::baseline_grid(scale);
    const auto tg = test::baseline_time(scale);
    return solve_hjb_backward(make_effective_cost(g, tg, test::baseline_running()), 0.0, test::godunov()).dvu;
}

double mean_x(const ScalarField& m) { return m.integrate([](double x, double) { return x; }); }
double mean_v(const ScalarField& m) { return m.integrate([](double, double v) { return v; }); }
double var_v(const ScalarField& m)
{
    const double mu = mean_v(m);
    return m.integrate([mu](double, double v) { return (v - mu) * (v - mu); });
}

/// Worst relative error of the velocity variance against Var0 (cosh(T - t) / cosh T)^2 at the checkpoints.
double lq_variance_error(double scale)
{
    const auto g = test::baseline_grid(scale);
    const auto tg = test::baseline_time(scale);
    const auto path = solve_transport_forward(test::baseline_m0(), test::lq_dvu(g, tg), 0.0);
    const double v0 = var_v(path.m[0]);
    double worst = 0.0;
    for (int n : checkpoint_slices(tg))
    {
        const double k = std::cosh(1.0 - tg.t(n)) / std::cosh(1.0);
        worst = std::max(worst, std::abs(var_v(path.m[n]) / (v0 * k * k) - 1.0));
    }
    return worst;
}

} // namespace

TEST_CASE("free transport moves the centre of mass at the mean velocity", "[transport]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    InitialDensity b;
    b.kind = InitialDensity::Kind::bump;
    b.center_x = -0.5;
    b.center_v = 0.6;
    b.spread_x = 0.5;
    b.spread_v = 0.4;
    const auto path = solve_transport_forward(b, zero_drift(g, tg), 0.0);
    const double x0 = mean_x(path.m[0]), v0 = mean_v(path.m[0]);
    for (int n : checkpoint_slices(tg))
    {
        CHECK(std::abs(mean_x(path.m[n]) - (x0 + v0 * tg.t(n))) <= 1e-3);
        CHECK(std::abs(mean_v(path.m[n]) - v0) <= 1e-12);
    }
}

TEST_CASE("LQ feedback contracts the velocity variance", "[transport][oracle]")
{
    const double e1 = lq_variance_error(1.0), e2 = lq_variance_error(2.0);
    INFO("relative variance error " << e1 << " -> " << e2);
    CHECK(e2 < e1);
    CHECK(e1 / e2 >= 1.5);
}

TEST_CASE("LQ velocity variance within 5% at baseline", "[transport][oracle][!mayfail]")
{
    // First-order upwinding in v adds O(dv) numerical diffusion to a
    // contracting velocity marginal; see the README on known-red thresholds.
    const double e = lq_variance_error(1.0);
    INFO("relative variance error " << e);
    CHECK(e <= 0.05);
}

TEST_CASE("mass is conserved for any drift and viscosity", "[transport][conservation]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    const FieldPath drifts[] = {zero_drift(g, tg), test::lq_dvu(g, tg), bump_drift()};
    // The edge-mass guard is lifted: zero-flux faces must conserve mass even
    // when the undriven viscous run piles mass on the boundary.
    TransportOptions open;
    open.max_boundary_mass = 1.0;
    for (const auto& d : drifts)
        for (double sigma : {0.0, 0.01, 0.1})
        {
            const auto path = solve_transport_forward(test::baseline_m0(), d, sigma, open);
            CHECK(mass_drift(path) <= 1e-8);
            CHECK(std::abs(path.mass.front() - 1.0) <= 1e-10);
            CHECK(path.min_pre_clamp >= -1e-12);
            CHECK(path.clamp_correction == 0.0);
            CHECK(path.cfl_margin <= 1.0);
        }
}

TEST_CASE("second moments", "[transport][moments]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    const ScalarField m0 = test::baseline_m0().discretize(g);
    const double exx = m0.integrate([](double x, double) { return x * x; });
    const double exv = m0.integrate([](double x, double v) { return x * v; });
    const double evv = m0.integrate([](double, double v) { return v * v; });

    SECTION("free transport follows the moment algebra")
    {
        // Forward Euler upwinding adds exactly dt * dx * E|v| to E x^2 per step
        // and lags the E xv growth by one step; both are O(h).
        const double eav = m0.integrate([](double, double v) { return std::abs(v); });
        const auto path = solve_transport_forward(m0, zero_drift(g, tg), 0.0);
        for (int n : checkpoint_slices(tg))
        {
            const double t = tg.t(n);
            const double want = exx + 2 * t * exv + t * t * evv + evv;
            const double scheme = want - evv * t * tg.dt() + t * g.dx() * eav;
            INFO("t " << t << " moment " << path.moment[n] << " closed form " << want);
            CHECK(path.moment[n] == Approx(scheme).epsilon(1e-9));
            CHECK(std::abs(path.moment[n] - want) <= t * (g.dx() * eav + tg.dt() * evv) + 1e-12);
        }
    }
    SECTION("viscosity adds the heat-kernel increment")
    {
        // Diffusion adds 2 sigma t to each of E x^2 and E v^2; the v-noise
        // is also carried into x, adding 2 sigma t^3 / 3.
        const double sigma = 0.01;
        const auto p0 = solve_transport_forward(m0, zero_drift(g, tg), 0.0);
        const auto p1 = solve_transport_forward(m0, zero_drift(g, tg), sigma);
        for (int n : checkpoint_slices(tg))
        {
            const double t = tg.t(n);
            const double want = 4 * sigma * t + 2 * sigma * t * t * t / 3;
            INFO("t " << t << " increment " << p1.moment[n] - p0.moment[n] << " closed form " << want);
            CHECK(p1.moment[n] - p0.moment[n] == Approx(want).margin(1e-3));
        }
    }
    SECTION("LQ drift contracts the velocity moment")
    {
        const auto path = solve_transport_forward(m0, test::lq_dvu(g, tg), 0.0);
        double prev = std::numeric_limits<double>::infinity();
        for (int n = 0; n <= tg.nt(); n += 10)
        {
            const double e = path.m[n].integrate([](double, double v) { return v * v; });
            CHECK(e < prev);
            prev = e;
        }
    }
    SECTION("moment constant is bounded uniformly in sigma")
    {
        // The viscous excess over sigma = 0 is at most the heat-kernel increment.
        const auto d = bump_drift();
        const double k0 = moment_report(solve_transport_forward(m0, d, 0.0)).constant;
        for (double sigma : {0.01, 0.1})
        {
            const auto r = moment_report(solve_transport_forward(m0, d, sigma));
            const double heat = (4 * sigma + 2 * sigma / 3) / (r.initial + 1.0);
            INFO("sigma " << sigma << " K " << r.constant << " vs " << k0 << " + " << heat);
            CHECK(r.max <= r.constant * (r.initial + 1.0) * (1 + 1e-12));
            CHECK(r.constant <= 1.2 * (k0 + heat));
        }
    }
}

TEST_CASE("moment constant within 20% across sigma in {0, 0.01, 0.1}", "[transport][moments][!mayfail]")
{
    // sigma = 0.1 adds about 0.47 to the second moment against a denominator of 1.29.
    const auto d = bump_drift();
    const ScalarField m0 = test::baseline_m0().discretize(d.grid());
    const double k0 = moment_report(solve_transport_forward(m0, d, 0.0)).constant;
    for (double sigma : {0.01, 0.1})
    {
        const double k = moment_report(solve_transport_forward(m0, d, sigma)).constant;
        INFO("sigma " << sigma << " K " << k << " vs " << k0);
        CHECK(std::abs(k - k0) <= 0.2 * k0);
    }
}

TEST_CASE("L-infinity bound of the density", "[transport][estimates]")
{
    const auto d = bump_drift();
    const double k0 = solve_transport_forward(test::baseline_m0(), d, 0.0).max_value;
    SECTION("viscosity does not raise it")
    {
        for (double sigma : {0.01, 0.1})
        {
            const double k = solve_transport_forward(test::baseline_m0(), d, sigma).max_value;
            INFO("sigma " << sigma << " K_run " << k << " vs " << k0);
            CHECK(k <= 1.2 * k0);
        }
    }
    SECTION("refinement keeps it within 20%")
    {
        const double k2 = solve_transport_forward(test::baseline_m0(), bump_drift(2.0), 0.0).max_value;
        INFO(k0 << " vs " << k2);
        CHECK(std::abs(k0 - k2) <= 0.2 * k2);
    }
}

TEST_CASE("time Hoelder ratio", "[transport][estimates]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    SECTION("a stationary path gives zero")
    {
        // All mass on the v = 0 row of an odd grid: nothing moves.
        const PhaseGrid g0(-4.0, 4.0, -3.0, 3.0, 97, 97);
        ScalarField m(g0, 0.0);
        for (int i = 30; i <= 60; ++i)
            m(i, 48) = 1.0;
        m *= 1.0 / m.integral();
        const auto path = solve_transport_forward(m, FieldPath(g0, tg), 0.0);
        const auto r = time_holder_report(path);
        CHECK(r.pairs > 0);
        CHECK(r.max_ratio == 0.0);
    }
    SECTION("free transport is bounded by the mean speed")
    {
        InitialDensity b = test::baseline_m0();
        b.center_v = 0.5;
        const auto path = solve_transport_forward(b, zero_drift(g, tg), 0.0);
        const auto r = time_holder_report(path);
        CHECK(std::isfinite(r.max_ratio));
        CHECK(r.max_ratio <= (0.5 + 3 * 0.45) * std::sqrt(tg.horizon()));
    }
    SECTION("LQ path is bounded by the largest drift")
    {
        const auto d = test::lq_dvu(g, tg);
        const auto path = solve_transport_forward(test::baseline_m0(), d, 0.0);
        const double drift = std::max(g.max_abs_v(), d.max_abs());
        CHECK(time_holder_report(path).max_ratio <= drift * std::sqrt(tg.horizon()));
    }
    SECTION("bounded uniformly in sigma")
    {
        // Heat-kernel spreading adds at most sqrt(4 sigma / pi) per projected direction.
        const auto d = bump_drift();
        const double h0 = time_holder_report(solve_transport_forward(test::baseline_m0(), d, 0.0)).max_ratio;
        for (double sigma : {0.01, 0.1})
        {
            const double h = time_holder_report(solve_transport_forward(test::baseline_m0(), d, sigma)).max_ratio;
            INFO("sigma " << sigma << " ratio " << h << " vs " << h0);
            CHECK(h <= 1.3 * h0 + std::sqrt(4 * sigma / std::numbers::pi));
        }
        const double h1 = time_holder_report(solve_transport_forward(test::baseline_m0(), d, 0.01)).max_ratio;
        CHECK(std::abs(h1 - h0) <= 0.3 * h0);
    }
}

TEST_CASE("time Hoelder ratio within 30% across sigma in {0, 0.01, 0.1}", "[transport][estimates][!mayfail]")
{
    const auto d = bump_drift();
    const double h0 = time_holder_report(solve_transport_forward(test::baseline_m0(), d, 0.0)).max_ratio;
    for (double sigma : {0.01, 0.1})
    {
        const double h = time_holder_report(solve_transport_forward(test::baseline_m0(), d, sigma)).max_ratio;
        INFO("sigma " << sigma << " ratio " << h << " vs " << h0);
        CHECK(std::abs(h - h0) <= 0.3 * h0);
    }
}

TEST_CASE("restarting from the midpoint reproduces the path", "[transport]")
{
    const auto d = bump_drift();
    for (double sigma : {0.0, 0.05})
    {
        const auto full = solve_transport_forward(test::baseline_m0(), d, sigma);
        const int mid = d.nt() / 2;
        TransportOptions o;
        o.first_slice = mid;
        const auto restarted = solve_transport_forward(full.m[mid], d, sigma, o);
        double worst = 0.0;
        for (int n = mid; n <= d.nt(); ++n)
            worst = std::max(worst, (restarted.m[n] - full.m[n]).max_abs());
        CHECK(worst <= 1e-10);
    }
}

TEST_CASE("viscous density fills the interior after the stencil reach", "[transport][positivity]")
{
    const auto path = solve_transport_forward(test::baseline_m0(), bump_drift(), 0.05);
    const auto r = interior_positivity(path);
    INFO("reach " << r.reach << " first positive " << r.first_positive << " min " << r.min_after_reach);
    CHECK(r.ok());
}

TEST_CASE("transport aborts", "[transport][errors]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    SECTION("drift above the CFL limit")
    {
        FieldPath d(g, tg, 0.0);
        d[3] = ScalarField(g, 50.0);
        CHECK_THROWS_WITH(solve_transport_forward(test::baseline_m0(), d, 0.0), Catch::Matchers::ContainsSubstring("CFL violated at slice 3"));
    }
    SECTION("mass reaching the box edge")
    {
        InitialDensity fast = test::baseline_m0();
        fast.center_v = 1.2;
        fast.center_x = 1.0;
        CHECK_THROWS_WITH(solve_transport_forward(fast, zero_drift(g, tg), 0.0), Catch::Matchers::ContainsSubstring("box edge"));
    }
    SECTION("mismatched grids")
    {
        const ScalarField m0 = test::baseline_m0().discretize(test::baseline_grid(0.5));
        CHECK_THROWS_AS(solve_transport_forward(m0, zero_drift(g, tg), 0.0), std::invalid_argument);
    }
}
