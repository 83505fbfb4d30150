#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fkpp_pde.hpp"
#include "measures.hpp"
#include "util.hpp"

using namespace bbm;

TEST_CASE("zero potential reduces to the heat semigroup") {
    // with V = 0 the equation is linear and u(T, x) = P_x(|B_T| <= y)
    auto g = PdeGrid::build_zero(20.0, 0.02, 0.002, PdeGrid::Version::L);
    double y = 2.0, T = 1.0;
    auto sol = solve_fkpp_1d(g, y, OffspringLaw::binary(), {T});
    for (double xq : {0.0, 0.5, 1.0, 1.9, 3.0}) {
        double exact = normal_cdf((y - xq) / std::sqrt(T)) - normal_cdf((-y - xq) / std::sqrt(T));
        CHECK(std::abs(sol.at(0, xq, g) - exact) < 2e-3);
    }
    CHECK(sol.max_principle_excess < 1e-12);
}

TEST_CASE("R-version heat check uses the one-sided initial data") {
    auto g = PdeGrid::build_zero(20.0, 0.02, 0.002, PdeGrid::Version::R);
    double y = 1.0, T = 2.0;
    auto sol = solve_fkpp_1d(g, y, OffspringLaw::binary(), {T});
    for (double xq : {-1.0, 0.0, 1.0, 2.0}) {
        double exact = normal_cdf((y - xq) / std::sqrt(T));
        CHECK(std::abs(sol.at(0, xq, g) - exact) < 2e-3);
    }
}

TEST_CASE("mollified potential carries the measure mass") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}, {1.5, 0, 0}}, {1.0, 0.5});
    auto g = PdeGrid::build(mu, 12.0, 0.0125, 0.005, 0.05, PdeGrid::Version::L);
    double trap = 0.0;
    for (int i = 0; i + 1 < g.n; ++i) trap += 0.5 * (g.V[i] + g.V[i + 1]) * g.h;
    CHECK(trap == doctest::Approx(1.5).epsilon(1e-10));
    // peaks sit at the atoms
    int i0 = int(std::round((0.0 + g.X) / g.h));
    CHECK(g.V[i0] > g.V[i0 + 8]);
    CHECK(g.V[i0] > 2.0 * g.V[i0 + 40]); // 0.5 away: essentially zero
}

TEST_CASE("solution is monotone in the threshold and bounded") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto g = PdeGrid::build(mu, 16.0, 0.025, 0.005, 0.05, PdeGrid::Version::L);
    auto bin = OffspringLaw::binary();
    auto u2 = solve_fkpp_1d(g, 2.0, bin, {2.0, 4.0});
    auto u3 = solve_fkpp_1d(g, 3.0, bin, {2.0, 4.0});
    // larger allowance means larger success probability, at every record time
    for (size_t it = 0; it < 2; ++it)
        for (double xq : {0.0, 1.0, 2.0})
            CHECK(u3.at(it, xq, g) >= u2.at(it, xq, g) - 1e-10);
    // later time, harder event
    CHECK(u2.at(1, 0.0, g) <= u2.at(0, 0.0, g) + 1e-10);
    CHECK(u2.max_principle_excess < 1e-12);
    CHECK(u3.max_principle_excess < 1e-12);
}

TEST_CASE("two-sided extreme dominates the one-sided one") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto gl = PdeGrid::build(mu, 16.0, 0.025, 0.005, 0.05, PdeGrid::Version::L);
    auto gr = PdeGrid::build(mu, 16.0, 0.025, 0.005, 0.05, PdeGrid::Version::R);
    auto bin = OffspringLaw::binary();
    auto ul = solve_fkpp_1d(gl, 2.5, bin, {4.0});
    auto ur = solve_fkpp_1d(gr, 2.5, bin, {4.0});
    // {L_T <= y} is contained in {R_T <= y}
    for (double xq : {0.0, 0.5, 1.5})
        CHECK(ul.at(0, xq, gl) <= ur.at(0, xq, gr) + 1e-10);
}

TEST_CASE("stronger branching pushes the front out") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto g = PdeGrid::build(mu, 16.0, 0.025, 0.005, 0.05, PdeGrid::Version::L);
    auto bin = OffspringLaw::binary();
    auto ter = OffspringLaw::from_map({{3, 1.0}});
    auto ub = solve_fkpp_1d(g, 3.0, bin, {4.0});
    auto ut = solve_fkpp_1d(g, 3.0, ter, {4.0});
    // more offspring, bigger maximum, smaller P(L <= y)
    CHECK(ut.at(0, 0.0, g) < ub.at(0, 0.0, g));
}

TEST_CASE("record times must align with the step") {
    auto g = PdeGrid::build_zero(8.0, 0.05, 0.004, PdeGrid::Version::L);
    CHECK_THROWS(solve_fkpp_1d(g, 1.0, OffspringLaw::binary(), {1.0002}));
}

TEST_CASE("front curve: median height interpolation and monotonicity") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto g = PdeGrid::build(mu, 24.0, 0.025, 0.01, 0.05, PdeGrid::Version::L);
    std::vector<double> ys, Ts{4.0, 8.0};
    for (double y = 1.0; y <= 8.01; y += 0.5) ys.push_back(y);
    auto fc = front_curve(g, OffspringLaw::binary(), 0.0, ys, Ts);
    REQUIRE(fc.T.size() == 2);
    REQUIRE(fc.y_half.size() == 2);
    // u increases in y at fixed T
    for (size_t iy = 1; iy < fc.y_grid.size(); ++iy)
        CHECK(fc.u[iy][0] >= fc.u[iy - 1][0] - 1e-10);
    // the median front moves out over time, roughly at speed 1/2
    CHECK(std::isfinite(fc.y_half[0]));
    CHECK(std::isfinite(fc.y_half[1]));
    CHECK(fc.y_half[1] > fc.y_half[0]);
    CHECK(fc.y_half[1] - fc.y_half[0] == doctest::Approx(2.0).epsilon(0.25));
    // interpolation consistency: u at the bracketing y values straddles 1/2
    for (size_t it = 0; it < 2; ++it) {
        size_t iy = 0;
        while (iy < fc.y_grid.size() && fc.y_grid[iy] < fc.y_half[it]) ++iy;
        REQUIRE(iy > 0);
        REQUIRE(iy < fc.y_grid.size());
        CHECK(fc.u[iy - 1][it] <= 0.5 + 1e-12);
        CHECK(fc.u[iy][it] >= 0.5 - 1e-12);
    }
}

TEST_CASE("grid refinement moves the median front by little") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    std::vector<double> ys;
    for (double y = 1.0; y <= 5.01; y += 0.25) ys.push_back(y);
    std::vector<double> Ts{4.0};

    auto gc = PdeGrid::build(mu, 16.0, 0.025, 0.01, 0.05, PdeGrid::Version::L);
    auto gf = PdeGrid::build(mu, 16.0, 0.0125, 0.0025, 0.05, PdeGrid::Version::L);
    auto fc = front_curve(gc, OffspringLaw::binary(), 0.0, ys, Ts);
    auto ff = front_curve(gf, OffspringLaw::binary(), 0.0, ys, Ts);
    CHECK(std::abs(fc.y_half[0] - ff.y_half[0]) < 0.02);
}

TEST_CASE("tail decay: smooth exponential region is fit cleanly") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto g = PdeGrid::build(mu, 24.0, 0.025, 0.01, 0.05, PdeGrid::Version::L);
    auto td = tail_decay_check(g, OffspringLaw::binary(), 0.0, 0.75, {6.0, 8.0, 10.0, 12.0});
    REQUIRE(td.T.size() >= 3);
    CHECK(td.slope < -0.1);   // clearly decaying
    CHECK(td.slope > -0.5);   // but not collapsing
    for (double v : td.one_minus_u) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // survival-above-the-ray probabilities shrink with T
    for (size_t i = 1; i < td.one_minus_u.size(); ++i)
        CHECK(td.one_minus_u[i] < td.one_minus_u[i - 1]);
}
