#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "bbm_sim.hpp"
#include "measures.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "util.hpp"

using namespace bbm;

namespace {

SimParams dirac_params(double horizon) {
    SimParams sp;
    sp.dim = 1;
    sp.dt = 1e-3;
    sp.eps = 5e-3;
    sp.horizon = horizon;
    sp.population_cap = 200000;
    sp.record_every = 0.5;
    sp.deltas = {0.25};
    return sp;
}

} // namespace

TEST_CASE("event skeleton: branchless probability and first-moment growth") {
    // unit dirac at the origin, started on the atom. Exact skeleton: the
    // clock is driven by closed-form local time, so these are oracle values
    // P(no branch by 1) = 2 e^{1/2} Phi(-1) and E Z_1 = 2 e^{1/2} Phi(1)
    Rng rng(31337, 0);
    const int n = 60000;
    int branchless = 0;
    double mean_z = 0.0;
    for (int k = 0; k < n; ++k) {
        auto sk = exact_event_skeleton_dirac1d(1.0, 0.0, 0.0, 1.0, rng);
        if (sk.times.empty()) ++branchless;
        mean_z += 1.0 + double(sk.count_at(1.0)); // Z_t = 1 + #events by t
    }
    double p0 = double(branchless) / n;
    mean_z /= n;
    double p0_exact = 0.52315658373025;   // 2 e^{1/2} Phi(-1)
    double ez_exact = 2.77428595767001;   // 2 e^{1/2} Phi(1)
    CHECK(std::abs(p0 - p0_exact) < 4.0 * std::sqrt(p0_exact * (1 - p0_exact) / n));
    // Z_1 is heavy-ish tailed but bounded in L^2 here; empirical sd ~ 2.9
    CHECK(std::abs(mean_z - ez_exact) < 4.0 * 3.0 / std::sqrt(double(n)));
}

TEST_CASE("single-path clock mgf is unbiased at coarse dt") {
    // E exp(A_t) for the unit dirac over t = 1 equals E Z_1; the bridge
    // sampler keeps this exact even when dt is far above eps^2
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    Rng rng(991, 2);
    const int n = 30000, steps = 50;
    const double dt = 1.0 / steps;
    double mean = 0.0, m2 = 0.0;
    for (int k = 0; k < n; ++k) {
        double x = 0.0, a = 0.0;
        for (int s = 0; s < steps; ++s) {
            double y = x + std::sqrt(dt) * rng.normal();
            a += pcaf_increment_sampled(mu, dt, 5e-3, &x, &y, rng);
            x = y;
        }
        double w = std::exp(a);
        mean += w;
        m2 += w * w;
    }
    mean /= n;
    m2 /= n;
    double se = std::sqrt((m2 - mean * mean) / n);
    CHECK(std::abs(mean - 2.77428595767001) < 4.0 * se);
    CHECK(se < 0.06); // sanity on the error bar itself
}

TEST_CASE("replica runs are deterministic in the seed") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();
    SimParams sp = dirac_params(3.0);

    auto a = run_ensemble(sp, mu, off, nullptr, 3, 777, 0);
    auto b = run_ensemble(sp, mu, off, nullptr, 3, 777, 0);
    REQUIRE(a.size() == b.size());
    for (size_t r = 0; r < a.size(); ++r) {
        REQUIRE(a[r].rows.size() == b[r].rows.size());
        CHECK(a[r].branch_events == b[r].branch_events);
        for (size_t i = 0; i < a[r].rows.size(); ++i) {
            CHECK(a[r].rows[i].Z == b[r].rows[i].Z);
            // bitwise reproducibility, not approximate agreement
            CHECK(a[r].rows[i].L == b[r].rows[i].L);
            CHECK(a[r].rows[i].R == b[r].rows[i].R);
        }
    }
    // different seed, different paths
    auto c = run_ensemble(sp, mu, off, nullptr, 3, 778, 0);
    bool any_diff = false;
    for (size_t r = 0; r < a.size() && !any_diff; ++r)
        for (size_t i = 0; i < a[r].rows.size() && !any_diff; ++i)
            if (a[r].rows[i].L != c[r].rows[i].L) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("replica stream indexing makes ensembles extendable") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();
    SimParams sp = dirac_params(2.0);
    auto five = run_ensemble(sp, mu, off, nullptr, 5, 123, 0);
    auto three = run_ensemble(sp, mu, off, nullptr, 3, 123, 0);
    for (size_t r = 0; r < three.size(); ++r)
        for (size_t i = 0; i < three[r].rows.size(); ++i)
            CHECK(five[r].rows[i].L == three[r].rows[i].L);
}

TEST_CASE("record rows are well-formed and ordered") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();
    SimParams sp = dirac_params(4.0);
    sp.deltas = {0.25, 0.6};
    auto res = run_ensemble(sp, mu, off, nullptr, 4, 55, 0);
    for (const auto& rep : res) {
        REQUIRE(!rep.rows.empty());
        double tprev = -1.0;
        for (const auto& row : rep.rows) {
            CHECK(row.t > tprev);
            tprev = row.t;
            CHECK(row.Z >= 1);                 // no deaths: population never shrinks
            CHECK(row.L >= row.R);             // max |x| dominates max x
            CHECK(row.L >= 0.0);
            REQUIRE(row.Zd.size() == 2);
            CHECK(row.Zd[0] >= row.Zd[1]);     // smaller delta is a weaker cut
            CHECK(row.Zd[0] <= row.Z);
        }
        // population only grows along a replica
        for (size_t i = 1; i < rep.rows.size(); ++i)
            CHECK(rep.rows[i].Z >= rep.rows[i - 1].Z);
    }
}

TEST_CASE("population growth rate matches the spectral prediction") {
    // unit dirac: E Z_t ~ e^{t/2}; with 400 replicas to t = 6 the fitted
    // slope of log E Z lands within a few percent
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();
    SimParams sp = dirac_params(6.0);
    auto res = run_ensemble(sp, mu, off, nullptr, 400, 2026, 0);
    size_t nrows = res.front().rows.size();
    std::vector<double> ts, logmean;
    for (size_t i = 0; i < nrows; ++i) {
        double t = res.front().rows[i].t;
        if (t < 2.0) continue;
        double m = 0.0;
        for (const auto& rep : res) m += double(rep.rows[i].Z);
        ts.push_back(t);
        logmean.push_back(std::log(m / res.size()));
    }
    LineFit f = fit_line(ts, logmean);
    CHECK(std::abs(f.slope - 0.5) < 0.05);
}

TEST_CASE("martingale column tracks h(x0) when a spectral handle is present") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();
    auto spec = lambda_single_dirac(1.0);
    SimParams sp = dirac_params(5.0);
    auto res = run_ensemble(sp, mu, off, &spec, 500, 424242, 0);
    double h0 = spec.h->eval1(0.0);
    size_t nrows = res.front().rows.size();
    // test at the last record time: mean of M within 4 sigma of h(0)
    double m = 0.0, m2 = 0.0;
    int cnt = 0;
    for (const auto& rep : res) {
        const auto& row = rep.rows[nrows - 1];
        REQUIRE(row.has_M);
        m += row.M;
        m2 += row.M * row.M;
        ++cnt;
    }
    m /= cnt; m2 /= cnt;
    double se = std::sqrt(std::max(0.0, m2 - m * m) / cnt);
    CHECK(std::abs(m - h0) < 4.0 * se);
}

TEST_CASE("population cap terminates a replica gracefully") {
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {3.0});
    auto off = OffspringLaw::binary();
    SimParams sp = dirac_params(8.0);
    sp.population_cap = 50; // tiny: e^{4.5 t} growth hits it fast
    auto res = run_ensemble(sp, mu, off, nullptr, 6, 9, 0);
    int hit = 0;
    for (const auto& rep : res) {
        if (!rep.cap_hit) continue;
        ++hit;
        CHECK(rep.cap_time > 0.0);
        CHECK(rep.cap_time <= sp.horizon);
        // rows stop at the cap, and the last row never exceeds it wildly
        CHECK(rep.rows.back().t <= sp.horizon + 1e-12);
    }
    CHECK(hit >= 5); // at this coupling nearly every replica caps
}

TEST_CASE("rate estimation from a window of a decaying series") {
    std::vector<double> t, y;
    for (int i = 0; i <= 20; ++i) {
        t.push_back(0.5 * i);
        y.push_back(std::exp(-0.3 * 0.5 * i) * 5.0);
    }
    RateFit f = estimate_rate(t, y, 2.0, 10.0);
    CHECK(f.slope == doctest::Approx(-0.3).epsilon(1e-10));
    // nonpositive values inside the window are rejected
    y[10] = 0.0;
    CHECK_THROWS_AS(estimate_rate(t, y, 2.0, 10.0), std::domain_error);
}

TEST_CASE("far-field acceleration leaves one-particle statistics unchanged") {
    // a single particle far from the support takes long jumps; its endpoint
    // law at the horizon must match the small-step law
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto off = OffspringLaw::binary();

    SimParams fast = dirac_params(4.0);
    fast.x0 = {40.0, 0.0, 0.0}; // 40 sigma out: no branching in sight
    fast.far_field = true;
    SimParams slow = fast;
    slow.far_field = false;

    auto fr = run_ensemble(fast, mu, off, nullptr, 300, 31415, 0);
    auto sr = run_ensemble(slow, mu, off, nullptr, 300, 27182, 0);
    double mf = 0.0, vf = 0.0, ms = 0.0, vs = 0.0;
    for (const auto& rep : fr) { double v = rep.rows.back().R; mf += v; vf += v * v; }
    for (const auto& rep : sr) { double v = rep.rows.back().R; ms += v; vs += v * v; }
    mf /= fr.size(); vf = vf / fr.size() - mf * mf;
    ms /= sr.size(); vs = vs / sr.size() - ms * ms;
    // both should look like x0 + N(0, t): mean 40, var 4
    double se_mean = std::sqrt(4.0 / 300.0);
    CHECK(std::abs(mf - ms) < 4.0 * std::sqrt(2.0) * se_mean);
    CHECK(std::abs(mf - 40.0) < 4.0 * se_mean);
    CHECK(vf == doctest::Approx(4.0).epsilon(0.35));
    CHECK(vs == doctest::Approx(4.0).epsilon(0.35));
    // none of these replicas should ever branch
    for (const auto& rep : fr) CHECK(rep.branch_events == 0);
}

TEST_CASE("offspring multiplicity feeds the growth rate") {
    // ternary splitting doubles the compensated measure: E Z_t ~ e^{(Q-1) c^2 ... }
    // for the unit dirac with Q = 3 the clock still runs on mu, so the
    // growth exponent of E Z becomes 2 * (1/2) = 1 only in the spectral
    // sense; here we just check ternary beats binary decisively
    auto mu = BranchingRateMeasure::atoms(1, {{0, 0, 0}}, {1.0});
    auto bin = OffspringLaw::binary();
    auto ter = OffspringLaw::from_map({{3, 1.0}});
    SimParams sp = dirac_params(6.0);
    auto rb = run_ensemble(sp, mu, bin, nullptr, 200, 5050, 0);
    auto rt = run_ensemble(sp, mu, ter, nullptr, 200, 5050, 0);
    double zb = 0.0, zt = 0.0;
    for (const auto& rep : rb) zb += double(rep.rows.back().Z);
    for (const auto& rep : rt) zt += double(rep.rows.back().Z);
    CHECK(zt > 1.5 * zb);
}
