#pragma once
// Branching-rate measures on R^d (d <= 3), their Kato-class bookkeeping,
// the additive-functional (clock) increments used by the particle system,
// offspring laws, and the exact joint sampler for (endpoint, local time)
// of a one-dimensional Brownian motion.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rng.hpp"

namespace bbm {

using Vec3 = std::array<double, 3>;

enum class MeasureKind { Atoms, LatticeAtoms, SphereSurface, Density };
enum class DensityForm { BallIndicator, PowerLawCompact, ExpDecay };

struct BranchingRateMeasure {
    MeasureKind kind = MeasureKind::Atoms;
    int dim = 1;

    // Atoms
    std::vector<Vec3> atom_pos;
    std::vector<double> atom_w;

    // LatticeAtoms: weights exp(-|n|^p) on n = -N..N (d=1)
    double lattice_p = 0.0;
    int lattice_N = 0;

    // SphereSurface / Density parameters
    double c = 0.0; // coupling / amplitude
    double R = 0.0; // radius (sphere, ball, power-law support)
    double p = 0.0; // exponent (power law, exp decay)
    DensityForm form = DensityForm::BallIndicator;

    static BranchingRateMeasure atoms(int dim, std::vector<Vec3> pos, std::vector<double> w);
    static BranchingRateMeasure lattice_atoms(double p, int N);
    static BranchingRateMeasure sphere_surface(int dim, double R, double c);
    static BranchingRateMeasure ball_indicator(int dim, double R, double c);
    static BranchingRateMeasure power_law_compact(int dim, double R, double p, double c);
    static BranchingRateMeasure exp_decay(int dim, double p, double c);

    bool is_density() const { return kind == MeasureKind::Density; }
    // pointwise density for Density kinds; throws otherwise
    double density_at(const double* x) const;
    double total_mass() const;
    // radius beyond which the measure (or its density, below 1e-18 of peak)
    // vanishes; infinity never occurs for the supported presets
    double support_radius() const;
};

struct MeasureClassification {
    bool is_kato = false;
    bool is_green_tight = false;     // Kato with vanishing tail Green potential
    bool nu_beta_all_beta = false;   // e^{beta|x|} mu stays in the class for every beta
    std::string note;
};

MeasureClassification classify_measure(const BranchingRateMeasure& mu);

// One midpoint-rule increment of the additive functional over a step from
// x0 to x1 of duration dt. For singular parts (atoms, lattice, sphere) the
// band rule with half-width eps applies to the step midpoint; for densities
// the trapezoid of the density at the endpoints. `multiplier` rescales the
// measure (1 for mu itself, Q-1 for the branching-compensated measure).
// The band rule keeps an unbiased mean for any dt, but its increments arrive
// in chunks of mass dt/(2 eps), which exponentially tilts E e^A unless
// dt << eps^2. Exponential functionals should use the sampled variant below.
double pcaf_increment(const BranchingRateMeasure& mu, double dt, double eps,
                      const double* x0, const double* x1, double multiplier = 1.0);

// Local time a Brownian path from a to b (signed coordinates relative to the
// level) accrues at that level over duration T, sampled exactly by inverting
// the reflection identity P(L > l) = exp(((a-b)^2 - (|a|+|b|+l)^2)/(2T)) at
// the uniform u. Tanaka (occupation-density) normalization, as everywhere.
double bridge_local_time_sample(double a, double b, double T, double u);

// Sampled increment of the additive functional over a step from x0 to x1 of
// duration dt: exact in law given the endpoints for d=1 atoms and lattice
// sites (bridge local time per atom) and for sphere bands (bridge local time
// of the radial coordinate; the Bessel drift within a single step is
// neglected). Densities use the deterministic trapezoid, whose increments
// are already O(c dt). Summed over the steps of a path, the result has the
// law of the exact clock, so E e^A is unbiased at any dt, unlike the band
// rule. When the increment is positive and support_pt is non-null, it
// receives the support point that produced it (the dominant atom, the radial
// projection onto the sphere, or x1 for densities): offspring created by a
// branch inside the step belong there.
double pcaf_increment_sampled(const BranchingRateMeasure& mu, double dt, double eps,
                              const double* x0, const double* x1, Rng& rng,
                              Vec3* support_pt = nullptr, double multiplier = 1.0);

struct PcafAccumulator {
    const BranchingRateMeasure* mu = nullptr;
    double eps = 5e-3;
    double multiplier = 1.0;
    double value = 0.0;
    void add_step(double dt, const double* x0, const double* x1) {
        value += pcaf_increment(*mu, dt, eps, x0, x1, multiplier);
    }
    void reset() { value = 0.0; }
};

// Exact sample of (B_t, ell_t) for a 1d Brownian motion started at the
// origin, where ell is the local time at 0 normalized so that
// ell_t = lim (1/2eps) int_0^t 1_{(-eps,eps)}(B_s) ds  (occupation density).
// Joint density: (ell+|x|)/sqrt(2 pi t^3) exp(-(ell+|x|)^2/(2t)), ell >= 0.
// Sampling: m = ell+|x| is sqrt(t) times a 3d Gaussian norm, ell | m is
// uniform on (0,m), sign of x symmetric. The factorization is verified
// against a discretized-path oracle in the tests before anything uses it.
struct BmLocalTimeSample { double x; double ell; };
BmLocalTimeSample sample_bm_localtime_joint(double t, Rng& rng);

struct OffspringLaw {
    // support n >= 1 only: no deaths, extinction impossible
    std::vector<int> n;
    std::vector<double> prob;
    std::vector<double> cdf;
    double mean = 0.0;           // Q
    bool llogl_finite = true;    // sum n log n p_n < infinity (finite support: always)

    static OffspringLaw from_map(const std::map<int, double>& pmf);
    static OffspringLaw binary();
    // geometric tail p_n ~ ratio^n, n >= 1, truncated below 1e-16 relative mass
    static OffspringLaw geometric(double ratio);

    int sample(Rng& rng) const;
};

} // namespace bbm
