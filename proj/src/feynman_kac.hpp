#pragma once
// Feynman-Kac expectations E_x[e^{A_t} ; B_t in E] by weighted-path Monte
// Carlo, and for the single-atom d=1 case by deterministic quadrature over
// the joint (local time, endpoint) density plus closed forms. The quadrature
// and closed-form routes are independent of the particle simulator and serve
// as its oracles.

#include <string>

#include "measures.hpp"
#include "rng.hpp"

namespace bbm {

struct FkEvent {
    enum class Kind { All, NormGe, DirGe };
    Kind kind = Kind::All;
    double threshold = 0.0; // absolute distance; callers pass delta*t themselves
    Vec3 dir{1.0, 0.0, 0.0};

    static FkEvent all() { return {}; }
    static FkEvent norm_ge(double r);
    static FkEvent dir_ge(const Vec3& r, double thr);
    bool contains(const double* x, int dim) const;
    std::string describe() const;
};

enum class FkMethod { Mc, Quadrature, ClosedForm };

struct FkEstimate {
    double value = 0.0;
    double se = 0.0; // 0 for quadrature and closed form
    FkMethod method = FkMethod::Mc;
    double t = 0.0;
    Vec3 x{0.0, 0.0, 0.0};
    FkEvent event;
};

// weighted-path Monte Carlo; the measure is taken as nu directly, callers
// apply the (Q-1) rescaling through nu_multiplier. Log-space accumulation.
FkEstimate fk_mc(const BranchingRateMeasure& mu, int dim, const Vec3& x, double t,
                 const FkEvent& event, int n_paths, double dt, double eps, Rng& rng,
                 double nu_multiplier = 1.0);

// 2-D adaptive quadrature of e^{c l} 1_E against the joint density
// (l+|x|)/sqrt(2 pi t^3) e^{-(l+|x|)^2/(2t)}; start at the atom only
FkEstimate fk_quadrature_dirac1d(double c, double t, const FkEvent& event);

// E_0[e^{c l_t}] = 2 e^{c^2 t/2} Phi(c sqrt(t))
double fk_total_mass_dirac1d(double c, double t);
// E_0[e^{c l_t}; |B_t| >= r] = 2 e^{c^2 t/2 - c r} Phi((c t - r)/sqrt(t)),
// the all-space value as r -> 0
double fk_norm_ge_dirac1d_closed(double c, double t, double r);

struct TiltedProbability {
    FkEstimate num;
    FkEstimate den;
    double ratio = 0.0; // in [0,1]
};

// P under the e^{A}-tilted path measure of |B_t| >= delta t, Dirac preset,
// both legs by quadrature
TiltedProbability tilted_prob_dirac1d(double c, double t, double delta);

struct DualityRow {
    double t = 0.0;
    std::string event_desc;
    double sim = 0.0, sim_se = 0.0;
    double fk = 0.0, fk_se = 0.0;
    double diff = 0.0, joint_se = 0.0;
    bool pass = false;
};

// |sim - fk| <= 3 sqrt(sim_se^2 + fk_se^2); equality passes when both se = 0
DualityRow duality_compare(double t, const std::string& event_desc, double sim,
                           double sim_se, double fk, double fk_se);

} // namespace bbm
