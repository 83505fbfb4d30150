#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "util.hpp"

using namespace bbm;

TEST_CASE("normal cdf and pdf reference values") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(normal_cdf(1.0) == doctest::Approx(0.841344746068543).epsilon(1e-12));
    CHECK(normal_cdf(2.0) == doctest::Approx(0.977249868051821).epsilon(1e-12));
    CHECK(normal_cdf(-1.0) == doctest::Approx(1.0 - normal_cdf(1.0)).epsilon(1e-14));
    CHECK(normal_cdf(-40.0) == doctest::Approx(0.0).epsilon(1e-300));
    CHECK(normal_pdf(0.0) == doctest::Approx(0.398942280401433).epsilon(1e-12));
    CHECK(normal_pdf(2.0) == doctest::Approx(normal_pdf(-2.0)).epsilon(1e-15));
}

TEST_CASE("adaptive simpson hits polynomial and gaussian integrals") {
    double p = integrate([](double x) { return x * x; }, 0.0, 1.0, 1e-13);
    CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    double g = integrate([](double x) { return normal_pdf(x); }, -8.0, 8.0, 1e-13);
    CHECK(g == doctest::Approx(std::erf(8.0 / std::sqrt(2.0))).epsilon(1e-12));

    // relative-tolerance variant should survive a large constant scale
    double big = integrate_rel([](double x) { return 1e12 * std::sin(x); }, 0.0, M_PI, 1e-10);
    CHECK(big == doctest::Approx(2e12).epsilon(1e-9));
}

TEST_CASE("bisect finds the cosine root and rejects non-brackets") {
    double r = bisect([](double x) { return std::cos(x); }, 1.0, 2.0, 1e-14);
    CHECK(r == doctest::Approx(M_PI / 2.0).epsilon(1e-13));
    CHECK_THROWS_AS(bisect([](double x) { return 1.0 + x * x; }, -1.0, 1.0, 1e-12),
                    std::runtime_error);
}

TEST_CASE("bessel I0 matches high-precision references") {
    // reference values computed with 30-digit arithmetic
    struct Ref { double x, v; };
    const Ref refs[] = {
        {0.5, 1.06348337074132351926318441545},
        {1.0, 1.26606587775200833559824462521},
        {2.0, 2.27958530233606726743720444081},
        {3.0, 4.88079258586502408561123554602},
        {5.0, 27.2398718236044468945442320759},
        {10.0, 2815.71662846625447146981115343},
    };
    for (const auto& r : refs)
        CHECK(bessel_i0(r.x) == doctest::Approx(r.v).epsilon(1e-12));
    CHECK(bessel_i0(0.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bessel K0 matches high-precision references") {
    struct Ref { double x, v; };
    const Ref refs[] = {
        {0.5, 0.92441907122766586178192416753},
        {1.0, 0.421024438240708333335627379213},
        {2.0, 0.113893872749533435652719574932},
        {3.0, 0.0347395043862792480723495513511},
        {5.0, 0.00369109833404259427473526100746},
        {10.0, 1.77800623161676518113011927995e-5},
    };
    for (const auto& r : refs)
        CHECK(bessel_k0(r.x) == doctest::Approx(r.v).epsilon(1e-11));
    CHECK_THROWS_AS(bessel_k0(0.0), std::domain_error);
    CHECK_THROWS_AS(bessel_k0(-1.0), std::domain_error);
}

TEST_CASE("bessel K0 is continuous across the series/integral seam") {
    // k0 switches evaluation strategy at x = 2; both sides must agree there
    // (offset small enough that |K0'(2)| * 2e-12 ~ 3e-13 cannot mask a seam)
    double below = bessel_k0(2.0 - 1e-12);
    double above = bessel_k0(2.0 + 1e-12);
    CHECK(std::abs(below - above) < 1e-11);
}

TEST_CASE("fit_line recovers an exact line and reports errors") {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double xi : x) y.push_back(2.0 * xi + 1.0);
    LineFit f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(f.slope_se == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.n == 5);

    CHECK_THROWS_AS(fit_line({1.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_line({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_line({1.0, 2.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("fit_line slope error matches residual scatter") {
    // y = x with one point displaced: known closed-form least squares
    std::vector<double> x{0, 1, 2, 3}, y{0, 1, 2, 4};
    LineFit f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(-0.2).epsilon(1e-11));
    CHECK(f.slope_se > 0.0);
}

TEST_CASE("log-sum-exp accumulates without overflow") {
    LogSumExp l;
    CHECK(l.value() == -std::numeric_limits<double>::infinity());
    l.add(std::log(2.0));
    l.add(std::log(3.0));
    CHECK(l.value() == doctest::Approx(std::log(5.0)).epsilon(1e-14));

    LogSumExp h;
    h.add(1000.0);
    h.add(1000.0);
    CHECK(h.value() == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));

    LogSumExp mixed;
    mixed.add(-2000.0);
    mixed.add(0.0);
    CHECK(mixed.value() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(mixed.n == 2);
}
