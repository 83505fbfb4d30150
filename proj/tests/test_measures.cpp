#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "measures.hpp"
#include "rng.hpp"
#include "util.hpp"

using namespace bbm;

namespace {

// two-sample Kolmogorov-Smirnov distance
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) ++i; else ++j;
        double fa = double(i) / a.size(), fb = double(j) / b.size();
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

} // namespace

TEST_CASE("measure factories validate their arguments") {
    CHECK_THROWS_AS(BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {-1.0}), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::atoms(4, {{0, 0, 0}}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::sphere_surface(2, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::sphere_surface(1, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::lattice_atoms(1.0, 10), std::invalid_argument); // needs p > 1
    CHECK_THROWS_AS(BranchingRateMeasure::exp_decay(1, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BranchingRateMeasure::ball_indicator(3, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("total mass and support radius") {
    auto two = BranchingRateMeasure::atoms(1, {{-1, 0, 0}, {2, 0, 0}}, {0.5, 1.5});
    CHECK(two.total_mass() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(two.support_radius() == doctest::Approx(2.0).epsilon(1e-14));

    auto ball = BranchingRateMeasure::ball_indicator(3, 2.0, 0.25);
    // c * volume of radius-2 ball
    CHECK(ball.total_mass() == doctest::Approx(0.25 * 4.0 / 3.0 * M_PI * 8.0).epsilon(1e-10));
    CHECK(ball.support_radius() == doctest::Approx(2.0).epsilon(1e-14));

    auto shell = BranchingRateMeasure::sphere_surface(3, 1.5, 2.0);
    CHECK(shell.total_mass() == doctest::Approx(2.0 * 4.0 * M_PI * 1.5 * 1.5).epsilon(1e-10));

    auto lat = BranchingRateMeasure::lattice_atoms(1.5, 30);
    double m = 0.0;
    for (int n = -30; n <= 30; ++n) m += std::exp(-std::pow(std::abs(double(n)), 1.5));
    CHECK(lat.total_mass() == doctest::Approx(m).epsilon(1e-12));
    CHECK(lat.support_radius() == doctest::Approx(30.0).epsilon(1e-14));
}

TEST_CASE("density evaluation matches the closed forms") {
    auto ball = BranchingRateMeasure::ball_indicator(1, 1.0, 3.0);
    double in = 0.5, out = 1.5, edge[1] = {0.999};
    CHECK(ball.density_at(&in) == doctest::Approx(3.0));
    CHECK(ball.density_at(&out) == doctest::Approx(0.0));
    CHECK(ball.density_at(edge) == doctest::Approx(3.0));

    auto pw = BranchingRateMeasure::power_law_compact(1, 1.0, 0.5, 1.0);
    double x = 0.25;
    CHECK(pw.density_at(&x) == doctest::Approx(std::pow(0.25, -0.5)).epsilon(1e-12));

    auto ed = BranchingRateMeasure::exp_decay(1, 2.0, 1.5);
    double y = 1.25;
    CHECK(ed.density_at(&y) == doctest::Approx(1.5 * std::exp(-std::pow(1.25, 2.0))).epsilon(1e-12));
}

TEST_CASE("classification flags") {
    auto d1 = classify_measure(BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0}));
    CHECK(d1.is_kato);
    CHECK(d1.is_green_tight);
    CHECK(d1.nu_beta_all_beta);

    auto d2 = classify_measure(BranchingRateMeasure::atoms(2, {{0, 0, 0}}, {1.0}));
    CHECK_FALSE(d2.is_kato); // point masses are polar in the plane

    auto lat = classify_measure(BranchingRateMeasure::lattice_atoms(1.5, 30));
    CHECK(lat.is_kato);
    CHECK(lat.nu_beta_all_beta); // e^{-|n|^p}, p > 1 beats every exponential

    auto shell = classify_measure(BranchingRateMeasure::sphere_surface(3, 1.0, 2.0));
    CHECK(shell.is_kato);
    CHECK(shell.is_green_tight);
}

TEST_CASE("band increment is the banded midpoint rule") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {2.0});
    double dt = 1e-4, eps = 5e-3;
    double a = -0.001, b = 0.003; // midpoint 0.001, inside the band
    CHECK(pcaf_increment(mu, dt, eps, &a, &b) ==
          doctest::Approx(dt / (2.0 * eps) * 2.0).epsilon(1e-14));
    double c = 0.02, d = 0.03; // outside
    CHECK(pcaf_increment(mu, dt, eps, &c, &d) == doctest::Approx(0.0));
    // multiplier rescales linearly
    CHECK(pcaf_increment(mu, dt, eps, &a, &b, 3.0) ==
          doctest::Approx(3.0 * pcaf_increment(mu, dt, eps, &a, &b)).epsilon(1e-14));
    CHECK_THROWS_AS(pcaf_increment(mu, 0.0, eps, &a, &b), std::invalid_argument);
    CHECK_THROWS_AS(pcaf_increment(mu, dt, 0.0, &a, &b), std::invalid_argument);
}

TEST_CASE("density increment is the endpoint trapezoid") {
    auto mu = BranchingRateMeasure::ball_indicator(1, 1.0, 2.0);
    double a = 0.0, b = 0.5;
    CHECK(pcaf_increment(mu, 0.01, 5e-3, &a, &b) == doctest::Approx(0.01 * 2.0).epsilon(1e-14));
    double c = 0.95, d = 1.05; // straddles the edge: half weight
    CHECK(pcaf_increment(mu, 0.01, 5e-3, &c, &d) == doctest::Approx(0.01 * 1.0).epsilon(1e-14));
}

TEST_CASE("bridge local time sample: deterministic properties") {
    // u = 1 gives the almost-sure minimum, which is zero off the level
    CHECK(bridge_local_time_sample(0.5, 0.7, 0.01, 1.0) == doctest::Approx(0.0));
    CHECK(bridge_local_time_sample(-0.5, 0.7, 0.01, 1.0) == doctest::Approx(0.0));
    // monotone nonincreasing in u
    double prev = std::numeric_limits<double>::infinity();
    for (double u : {0.001, 0.01, 0.1, 0.5, 0.9, 1.0}) {
        double l = bridge_local_time_sample(0.1, -0.1, 0.01, u);
        CHECK(l <= prev + 1e-15);
        prev = l;
    }
    // a crossing path always carries local time for u < 1
    CHECK(bridge_local_time_sample(-1.0, 1.0, 0.05, 0.999) > 0.0);
    CHECK_THROWS_AS(bridge_local_time_sample(0, 0, -1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(bridge_local_time_sample(0, 0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(bridge_local_time_sample(0, 0, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("bridge local time mean at the level integrates exactly") {
    // from a = b = 0 over T = 1 the sample is sqrt(-2 ln u); its mean over
    // u in (0,1] must be E ell = sqrt(pi/2)
    double m = integrate([](double u) { return bridge_local_time_sample(0.0, 0.0, 1.0, u); },
                         1e-13, 1.0, 1e-11);
    CHECK(m == doctest::Approx(std::sqrt(M_PI / 2.0)).epsilon(1e-8));
}

TEST_CASE("summed bridge increments reproduce the exact local time law") {
    // walk a discretized Brownian path and draw per-step bridge local time;
    // the total must match the exact joint sampler's ell marginal in
    // distribution (two-sample KS at the 1% level) and in mean
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    const int n = 4000, steps = 20;
    const double t = 1.0, dt = t / steps;
    Rng rng(123456, 7);
    std::vector<double> summed(n), exact(n);
    for (int k = 0; k < n; ++k) {
        double x = 0.0, acc = 0.0;
        for (int s = 0; s < steps; ++s) {
            double y = x + std::sqrt(dt) * rng.normal();
            acc += pcaf_increment_sampled(mu, dt, 5e-3, &x, &y, rng);
            x = y;
        }
        summed[k] = acc;
        exact[k] = sample_bm_localtime_joint(t, rng).ell;
    }
    double d = ks_two_sample(summed, exact);
    // 1% two-sample critical value: 1.628 * sqrt(2/n)
    CHECK(d < 1.628 * std::sqrt(2.0 / n));

    double mean = 0.0;
    for (double v : summed) mean += v;
    mean /= n;
    CHECK(std::abs(mean - std::sqrt(2.0 / M_PI)) < 4.0 * 0.61 / std::sqrt(double(n)));
}

TEST_CASE("joint local time sampler: marginals and mixed moment") {
    const int n = 20000;
    Rng rng(777, 0);
    double mean_ell = 0.0, mean_lx = 0.0;
    std::vector<double> xs(n);
    for (int k = 0; k < n; ++k) {
        auto s = sample_bm_localtime_joint(1.0, rng);
        CHECK(s.ell >= 0.0);
        mean_ell += s.ell;
        mean_lx += s.ell * std::abs(s.x);
        xs[k] = s.x;
    }
    mean_ell /= n; mean_lx /= n;
    CHECK(std::abs(mean_ell - std::sqrt(2.0 / M_PI)) < 4.0 * 0.61 / std::sqrt(double(n)));
    // E[ell |x|] = E[U(1-U)] E[m^2] = (1/6)(3t) = t/2
    CHECK(std::abs(mean_lx - 0.5) < 4.0 * 0.5 / std::sqrt(double(n)));

    // endpoint marginal is N(0, t): one-sample KS at the 1% level
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (int k = 0; k < n; ++k) {
        double f = normal_cdf(xs[k]);
        d = std::max(d, std::abs(f - double(k + 1) / n));
        d = std::max(d, std::abs(f - double(k) / n));
    }
    CHECK(d < 1.628 / std::sqrt(double(n)));
    CHECK_THROWS_AS(sample_bm_localtime_joint(0.0, rng), std::invalid_argument);
}

TEST_CASE("sampled increment reports the support point and respects the multiplier") {
    auto mu = BranchingRateMeasure::atoms(1, {{-3, 0, 0}, {1, 0, 0}}, {1.0, 1.0});
    Rng rng(42, 0);
    double a = 0.9, b = 1.1;
    Vec3 sp{0, 0, 0};
    // crossing the atom at 1; u < 1 a.s. gives positive local time there
    double v = 0.0;
    for (int k = 0; k < 50 && v == 0.0; ++k)
        v = pcaf_increment_sampled(mu, 1e-3, 5e-3, &a, &b, rng, &sp);
    REQUIRE(v > 0.0);
    CHECK(sp[0] == doctest::Approx(1.0));

    // same uniforms, doubled multiplier: exactly doubled increment
    Rng r1(99, 0), r2(99, 0);
    double v1 = pcaf_increment_sampled(mu, 1e-3, 5e-3, &a, &b, r1, nullptr, 1.0);
    double v2 = pcaf_increment_sampled(mu, 1e-3, 5e-3, &a, &b, r2, nullptr, 2.0);
    CHECK(v2 == doctest::Approx(2.0 * v1).epsilon(1e-14));
}

TEST_CASE("sampled increment for densities stays the trapezoid") {
    auto mu = BranchingRateMeasure::ball_indicator(1, 1.0, 2.0);
    Rng rng(5, 0);
    double a = 0.0, b = 0.25;
    CHECK(pcaf_increment_sampled(mu, 0.01, 5e-3, &a, &b, rng) ==
          doctest::Approx(pcaf_increment(mu, 0.01, 5e-3, &a, &b)).epsilon(1e-14));
}

TEST_CASE("offspring law construction and sampling") {
    auto bin = OffspringLaw::binary();
    REQUIRE(bin.n.size() == 1);
    CHECK(bin.n[0] == 2);
    CHECK(bin.mean == doctest::Approx(2.0));
    CHECK(bin.llogl_finite);

    auto law = OffspringLaw::from_map({{2, 0.5}, {3, 0.5}});
    CHECK(law.prob[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(law.prob[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(law.mean == doctest::Approx(2.5).epsilon(1e-14));

    CHECK_THROWS_AS(OffspringLaw::from_map({}), std::invalid_argument);
    CHECK_THROWS_AS(OffspringLaw::from_map({{0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(OffspringLaw::from_map({{2, -1.0}}), std::invalid_argument);
    // the constructor takes probabilities, not weights
    CHECK_THROWS_AS(OffspringLaw::from_map({{2, 2.0}, {3, 2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(OffspringLaw::from_map({{2, 0.5}, {3, 0.4}}), std::invalid_argument);

    auto geo = OffspringLaw::geometric(0.5);
    CHECK(geo.mean == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(geo.prob[0] == doctest::Approx(0.5).epsilon(1e-9));

    Rng rng(2024, 3);
    double m = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) m += geo.sample(rng);
    m /= n;
    // var = 2 for this law
    CHECK(std::abs(m - 2.0) < 4.0 * std::sqrt(2.0) / std::sqrt(double(n)));
}

TEST_CASE("pcaf accumulator sums band increments") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    PcafAccumulator acc;
    acc.mu = &mu;
    acc.eps = 5e-3;
    acc.multiplier = 2.0;
    double a = -0.001, b = 0.001;
    acc.add_step(1e-4, &a, &b);
    acc.add_step(1e-4, &a, &b);
    CHECK(acc.value == doctest::Approx(2.0 * 2.0 * 1e-4 / 0.01).epsilon(1e-13));
    acc.reset();
    CHECK(acc.value == 0.0);
}
