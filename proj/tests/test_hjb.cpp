#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace amfg;
using Catch::Approx;

namespace
{

double lq_inner_error(const ValueSolution& sol)
{
    const LQOracle o{sol.time().horizon()};
    const auto& g = sol.grid();
    double e = 0.0;
    for (int n = 0; n <= sol.time().nt(); ++n)
        for (int i = 0; i < g.nx(); ++i)
            for (int j = 0; j < g.nv(); ++j)
                if (g.node_in_inner_half(i, j))
                    e = std::max(e, std::abs(sol.u[n](i, j) - o.value(g.v(j), sol.time().t(n))));
    return e;
}

ValueSolution solve_lq(double scale, double sigma = 0.0, HjbOptions opts = test::godunov())
{
    const auto g = test::baseline_grid(scale);
    const auto tg = test::baseline_time(scale);
    return solve_hjb_backward(make_effective_cost(g, tg, RunningCost::zero()), sigma, opts);
}

ValueSolution solve_bump(double scale, double sigma = 0.0)
{
    const auto g = test::baseline_grid(scale);
    const auto tg = test::baseline_time(scale);
    return solve_hjb_backward(make_effective_cost(g, tg, test::baseline_running()), sigma, test::godunov());
}

std::vector<StatePoint> bump_samples()
{
    return {{0.0, 0.5, 0.2}, {0.4, -0.3, 0.5}, {-0.6, 0.8, 0.1}, {1.0, 0.0, 0.7}, {-1.2, -0.6, 0.35}, {0.3, 1.1, 0.6}};
}

} // namespace

TEST_CASE("LQ value converges to the closed form", "[hjb][oracle]")
{
    const auto coarse = solve_lq(1.0), fine = solve_lq(2.0);
    const double e1 = lq_inner_error(coarse), e2 = lq_inner_error(fine);
    INFO("error " << e1 << " -> " << e2);
    CHECK(e1 <= 0.02);
    CHECK(e1 / e2 >= 1.5);
    CHECK(std::log2(e1 / e2) >= 0.8);
    const auto& g = coarse.grid();
    CHECK(e1 <= 2.0 * (g.dx() + g.dv() + coarse.time().dt()));
}

TEST_CASE("LQ value with the Lax-Friedrichs flux still converges", "[hjb][oracle]")
{
    const double e1 = lq_inner_error(solve_lq(1.0, 0.0, {})), e2 = lq_inner_error(solve_lq(2.0, 0.0, {}));
    INFO("error " << e1 << " -> " << e2);
    CHECK(e1 / e2 >= 1.5);
}

TEST_CASE("terminal slice is copied bit-exactly", "[hjb]")
{
    const auto g = test::baseline_grid(0.5);
    const auto tg = test::baseline_time(0.5);
    const ScalarField term = ScalarField::from_function(g, [](double x, double v) { return 0.1 * std::sin(x) * std::cos(v); });
    const auto sol = solve_hjb_backward(make_effective_cost(g, tg, test::baseline_running(), &term), 0.0, test::godunov());
    CHECK(sol.u.back() == term);
}

TEST_CASE("constant costs give the trivial value at v = 0", "[hjb]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    SECTION("constant running cost")
    {
        const double c0 = 0.7;
        const auto sol = solve_hjb_backward(make_effective_cost(g, tg, RunningCost::constant(c0)), 0.0, test::godunov());
        double worst = 0.0;
        for (int n = 0; n <= tg.nt(); n += 10)
            for (double x : {-1.5, -0.2, 0.0, 0.9, 1.7})
                worst = std::max(worst, std::abs(sol.value_at(x, 0.0, tg.t(n)) - c0 * (1.0 - tg.t(n))));
        CHECK(worst <= 1e-3);
    }
    SECTION("constant terminal cost")
    {
        const double c1 = -0.4;
        const ScalarField term(g, c1);
        const auto sol = solve_hjb_backward(make_effective_cost(g, tg, RunningCost::zero(), &term), 0.0, test::godunov());
        double worst = 0.0;
        for (int n = 0; n <= tg.nt(); n += 10)
            for (double x : {-1.5, 0.0, 1.7})
                worst = std::max(worst, std::abs(sol.value_at(x, 0.0, tg.t(n)) - c1));
        CHECK(worst <= 1e-3);
        CHECK(semiconcavity_report(sol) <= 1.0);
    }
}

TEST_CASE("value bounds from the zero-control competitor", "[hjb][bounds]")
{
    const auto g = test::baseline_grid();
    const auto tg = test::baseline_time();
    const auto lq = make_effective_cost(g, tg, RunningCost::zero());

    SECTION("LQ instance")
    {
        const auto sol = solve_hjb_backward(lq, 0.0, test::godunov());
        const auto r = check_value_bounds(sol, lq);
        CHECK(r.ok());
        CHECK(r.lower_bound == 0.0);
        CHECK(r.worst_lower_margin >= 0.0);
        CHECK(lq_value(0.0, 1.0, 0.0, 1.0) <= 0.5);
        CHECK(sol.value_at(0.0, 1.0, 0.0) <= 0.5);
    }
    SECTION("same constants under viscosity")
    {
        const auto r0 = check_value_bounds(solve_hjb_backward(lq, 0.0, test::godunov()), lq);
        const auto r1 = check_value_bounds(solve_hjb_backward(lq, 0.05, test::godunov()), lq);
        CHECK(r1.ok());
        CHECK(r1.lower_bound == r0.lower_bound);
        CHECK(r1.tol_scheme == r0.tol_scheme);
    }
    SECTION("baseline cost at the CFL step")
    {
        const auto cost = make_effective_cost(g, tg, test::baseline_running());
        for (double sigma : {0.0, 0.01, 0.1})
        {
            const auto sol = solve_hjb_backward(cost, sigma, test::godunov());
            CHECK(sol.cfl_margin <= 1.0);
            CHECK(check_value_bounds(sol, cost).ok());
        }
    }
}

TEST_CASE("Lipschitz ratios", "[hjb][estimates]")
{
    SECTION("LQ instance")
    {
        const auto r = lipschitz_report(solve_lq(1.0));
        CHECK(r.x_ratio <= 1e-10);
        CHECK(r.v_ratio <= std::tanh(1.0) + 0.02);
    }
    SECTION("cosine bump at two resolutions")
    {
        const auto a = lipschitz_report(solve_bump(1.0)), b = lipschitz_report(solve_bump(2.0));
        INFO("x " << a.x_ratio << " " << b.x_ratio << " v " << a.v_ratio << " " << b.v_ratio << " t " << a.t_ratio << " " << b.t_ratio);
        CHECK(std::abs(a.x_ratio - b.x_ratio) <= 0.2 * b.x_ratio);
        CHECK(std::abs(a.v_ratio - b.v_ratio) <= 0.2 * b.v_ratio);
        CHECK(std::abs(a.t_ratio - b.t_ratio) <= 0.2 * b.t_ratio);
    }
    SECTION("cosine bump across viscosities")
    {
        // The growth constants are upper bounds; viscosity may only tighten them.
        const auto r0 = lipschitz_report(solve_bump(1.0, 0.0));
        for (double sigma : {0.01, 0.1})
        {
            const auto r = lipschitz_report(solve_bump(1.0, sigma));
            INFO("sigma " << sigma << " x " << r.x_ratio << " v " << r.v_ratio << " t " << r.t_ratio);
            CHECK(r.x_ratio <= 1.3 * r0.x_ratio);
            CHECK(r.v_ratio <= 1.3 * r0.v_ratio);
            CHECK(r.t_ratio <= 1.3 * r0.t_ratio);
        }
    }
}

TEST_CASE("semiconcavity constant", "[hjb][estimates]")
{
    SECTION("LQ instance matches tanh(T - t)")
    {
        const double s = semiconcavity_report(solve_lq(1.0, 0.0, {}));
        CHECK(s <= std::tanh(1.0) + 0.02);
        CHECK(s >= std::tanh(1.0) - 0.05);
    }
    SECTION("Godunov LQ stays below one at the sonic point")
    {
        // The one-sided kinetic term sharpens the minimum at v = 0 by a
        // resolution-independent amount.
        const double a = semiconcavity_report(solve_lq(1.0)), b = semiconcavity_report(solve_lq(3.0));
        INFO(a << " vs " << b);
        CHECK(a < 1.0);
        CHECK(a == Approx(b).epsilon(0.01));
    }
    SECTION("cosine bump is bounded by the inviscid constant")
    {
        const double s0 = semiconcavity_report(solve_bump(1.0, 0.0));
        for (double sigma : {0.01, 0.1})
        {
            const double s = semiconcavity_report(solve_bump(1.0, sigma));
            INFO("sigma " << sigma << ": " << s << " vs " << s0);
            CHECK(s <= 1.1 * s0);
        }
    }
    SECTION("cosine bump is stable under refinement")
    {
        const double a = semiconcavity_report(solve_bump(1.0)), b = semiconcavity_report(solve_bump(2.0));
        INFO(a << " vs " << b);
        CHECK(std::abs(a - b) <= 0.3 * b);
    }
}

TEST_CASE("one-step dynamic programming", "[hjb][dpp]")
{
    SECTION("LQ at (0, 1, 0.5)")
    {
        const auto g = test::baseline_grid();
        const auto tg = test::baseline_time();
        const auto cost = make_effective_cost(g, tg, RunningCost::zero());
        const auto sol = solve_hjb_backward(cost, 0.0, test::godunov());
        const StatePoint p{0.0, 1.0, 0.5};
        const auto r = dpp_consistency(sol, cost, std::span<const StatePoint>(&p, 1));
        CHECK(r.max_residual <= 5 * (tg.dt() + g.dv()));
    }
    SECTION("zero data one step before the horizon")
    {
        const PhaseGrid g(-4.0, 4.0, -3.0, 3.0, 97, 97);
        const TimeGrid tg(1.0, 200);
        const auto cost = make_effective_cost(g, tg, RunningCost::zero());
        const auto sol = solve_hjb_backward(cost, 0.0, test::godunov());
        std::vector<StatePoint> pts{{0.0, 0.0, 1.0 - tg.dt()}, {1.0, 0.0, 1.0 - tg.dt()}};
        const auto r = dpp_consistency(sol, cost, pts);
        CHECK(r.max_residual <= 1e-6);
        for (double a : r.minimizers)
            CHECK(std::abs(a) <= g.dv());
    }
    SECTION("cosine bump residual halves under refinement")
    {
        auto run = [](double scale) {
            const auto g = test::baseline_grid(scale);
            const auto tg = test::baseline_time(scale);
            const auto cost = make_effective_cost(g, tg, test::baseline_running());
            const auto sol = solve_hjb_backward(cost, 0.0, test::godunov());
            const auto pts = bump_samples();
            return dpp_consistency(sol, cost, pts).max_residual;
        };
        const double a = run(1.0), b = run(2.0);
        INFO(a << " -> " << b);
        CHECK(a / b >= 1.4);
        CHECK(a / b <= 2.6);
    }
}

TEST_CASE("discrete comparison principle on 10 perturbation pairs", "[hjb][property]")
{
    const PhaseGrid g(-4.0, 4.0, -3.0, 3.0, 48, 48);
    const TimeGrid tg(1.0, 100);
    std::mt19937_64 rng(314);
    std::uniform_real_distribution<double> amp(0.0, 0.3), pos(-2.0, 2.0), wid(0.3, 1.0);
    for (int k = 0; k < 10; ++k)
    {
        const double a = amp(rng), cx = pos(rng), cv = pos(rng), w = wid(rng);
        const ScalarField g1 = ScalarField::from_function(g, [](double x, double v) { return 0.2 * std::sin(x + v); });
        ScalarField g2 = g1;
        g2 += ScalarField::from_function(g, [&](double x, double v) {
            return a * std::exp(-((x - cx) * (x - cx) + (v - cv) * (v - cv)) / (w * w));
        });
        // Lax-Friedrichs is compared at a shared coefficient above both gradient maxima.
        for (HjbOptions opts : {HjbOptions{NumericalHamiltonian::godunov}, HjbOptions{NumericalHamiltonian::lax_friedrichs, 4.0}})
        {
            const auto u1 = solve_hjb_backward(make_effective_cost(g, tg, test::baseline_running(), &g1), 0.0, opts);
            const auto u2 = solve_hjb_backward(make_effective_cost(g, tg, test::baseline_running(), &g2), 0.0, opts);
            if (opts.flux == NumericalHamiltonian::lax_friedrichs)
                REQUIRE(std::max(u1.max_gradient, u2.max_gradient) < opts.lf_theta_floor);
            double worst = 0.0;
            for (int n = 0; n <= tg.nt(); ++n)
                worst = std::min(worst, (u2.u[n] - u1.u[n]).min_value());
            CHECK(worst >= -1e-14);
        }
    }
}

TEST_CASE("solver aborts", "[hjb][errors]")
{
    const auto g = test::baseline_grid();
    SECTION("time step above the CFL limit")
    {
        const TimeGrid tg(1.0, 20);
        const auto cost = make_effective_cost(g, tg, test::baseline_running());
        CHECK_THROWS_WITH(solve_hjb_backward(cost, 0.0), Catch::Matchers::ContainsSubstring("CFL violated at slice"));
    }
    SECTION("gradient growth during the march")
    {
        // Steep terminal cost: the first slices are fine for dx / max|v| but D_v u is not.
        const TimeGrid tg(1.0, 200);
        const ScalarField term = ScalarField::from_function(g, [](double, double v) { return 40.0 * v; });
        const auto cost = make_effective_cost(g, tg, RunningCost::zero(), &term);
        CHECK_THROWS_AS(solve_hjb_backward(cost, 0.0), SolverAbort);
    }
    SECTION("non-finite data")
    {
        const TimeGrid tg(1.0, 200);
        auto cost = make_effective_cost(g, tg, RunningCost::zero());
        cost.ell[100](10, 10) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH(solve_hjb_backward(cost, 0.0), Catch::Matchers::ContainsSubstring("non-finite"));
    }
    SECTION("negative viscosity")
    {
        const TimeGrid tg(1.0, 200);
        CHECK_THROWS_AS(solve_hjb_backward(make_effective_cost(g, tg, RunningCost::zero()), -0.1), std::invalid_argument);
    }
}
