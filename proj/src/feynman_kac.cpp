#include "feynman_kac.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "util.hpp"

namespace bbm {

FkEvent FkEvent::norm_ge(double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("FkEvent: radius must be nonnegative");
    FkEvent e;
    e.kind = Kind::NormGe;
    e.threshold = r;
    return e;
}

FkEvent FkEvent::dir_ge(const Vec3& r, double thr) {
    FkEvent e;
    e.kind = Kind::DirGe;
    e.dir = r;
    e.threshold = thr;
    return e;
}

bool FkEvent::contains(const double* x, int dim) const {
    switch (kind) {
        case Kind::All:
            return true;
        case Kind::NormGe: {
            double r2 = 0.0;
            for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
            return r2 >= threshold * threshold;
        }
        case Kind::DirGe: {
            double v = 0.0;
            for (int i = 0; i < dim; ++i) v += x[i] * dir[i];
            return v >= threshold;
        }
    }
    return false;
}

std::string FkEvent::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::All: os << "all"; break;
        case Kind::NormGe: os << "|x|>=" << threshold; break;
        case Kind::DirGe: os << "<x,r>>=" << threshold; break;
    }
    return os.str();
}

FkEstimate fk_mc(const BranchingRateMeasure& mu, int dim, const Vec3& x, double t,
                 const FkEvent& event, int n_paths, double dt, double eps, Rng& rng,
                 double nu_multiplier) {
    if (n_paths < 100) throw std::invalid_argument("fk_mc: need n_paths >= 100");
    if (!(t > 0.0) || !(dt > 0.0)) throw std::invalid_argument("fk_mc: t and dt must be positive");
    long n_steps = std::lround(std::ceil(t / dt - 1e-9));
    double dt_last = t - double(n_steps - 1) * dt;

    // first and second weight moments in log space; only event paths count
    LogSumExp l1, l2;
    Vec3 cur, nxt;
    for (int p = 0; p < n_paths; ++p) {
        cur = x;
        double A = 0.0;
        for (long k = 0; k < n_steps; ++k) {
            double h = (k + 1 == n_steps) ? dt_last : dt;
            double sh = std::sqrt(h);
            nxt = cur;
            for (int i = 0; i < dim; ++i) nxt[i] += sh * rng.normal();
            A += pcaf_increment_sampled(mu, h, eps, cur.data(), nxt.data(), rng, nullptr,
                                        nu_multiplier);
            cur = nxt;
        }
        if (event.contains(cur.data(), dim)) {
            l1.add(A);
            l2.add(2.0 * A);
        }
    }
    FkEstimate out;
    out.method = FkMethod::Mc;
    out.t = t;
    out.x = x;
    out.event = event;
    double logn = std::log(double(n_paths));
    double m1 = (l1.n > 0) ? std::exp(l1.value() - logn) : 0.0;
    double m2 = (l2.n > 0) ? std::exp(l2.value() - logn) : 0.0;
    out.value = m1;
    out.se = std::sqrt(std::max(0.0, m2 - m1 * m1) / double(n_paths));
    return out;
}

namespace {

// joint density of (l_t, B_t) for standard BM from the atom, l the local
// time at the atom: (l+|x|)/sqrt(2 pi t^3) exp(-(l+|x|)^2/(2t)), l>=0
double joint_density(double ell, double ax, double t) {
    double m = ell + ax;
    return m / std::sqrt(2.0 * M_PI * t * t * t) * std::exp(-0.5 * m * m / t);
}

} // namespace

FkEstimate fk_quadrature_dirac1d(double c, double t, const FkEvent& event) {
    if (!(c > 0.0) || !(t > 0.0))
        throw std::invalid_argument("fk_quadrature_dirac1d: c and t must be positive");
    if (0.5 * c * c * t > 600.0)
        throw std::domain_error("fk_quadrature_dirac1d: e^{c^2 t/2} overflows");

    // the integrand peaks near l+|x| = ct; 12 sigma beyond that the Gaussian
    // tail is below 1e-31 relative
    double mmax = c * t + 12.0 * std::sqrt(t);

    auto inner = [&](double ax) {
        // integrate over l at fixed |x|
        double lmax = mmax - ax;
        if (lmax <= 0.0) return 0.0;
        auto f = [&](double ell) { return std::exp(c * ell) * joint_density(ell, ax, t); };
        return integrate_rel(f, 0.0, lmax, 1e-10);
    };

    double lo = 0.0, hi = mmax;
    double factor = 2.0; // both signs of x
    switch (event.kind) {
        case FkEvent::Kind::All:
            break;
        case FkEvent::Kind::NormGe:
            lo = event.threshold;
            break;
        case FkEvent::Kind::DirGe:
            // d=1: <x, r> >= thr with r = +-1
            if (std::abs(std::abs(event.dir[0]) - 1.0) > 1e-12)
                throw std::invalid_argument("fk_quadrature_dirac1d: direction must be +-1");
            lo = event.threshold;
            factor = 1.0; // one sign only; density is symmetric in x
            break;
    }
    FkEstimate out;
    out.method = FkMethod::Quadrature;
    out.t = t;
    out.event = event;
    if (lo >= hi) {
        out.value = 0.0;
        return out;
    }
    out.value = factor * integrate_rel(inner, lo, hi, 1e-9);
    return out;
}

double fk_total_mass_dirac1d(double c, double t) {
    if (!(c > 0.0) || !(t > 0.0))
        throw std::invalid_argument("fk_total_mass_dirac1d: c and t must be positive");
    return 2.0 * std::exp(0.5 * c * c * t) * normal_cdf(c * std::sqrt(t));
}

double fk_norm_ge_dirac1d_closed(double c, double t, double r) {
    if (!(c > 0.0) || !(t > 0.0) || !(r >= 0.0))
        throw std::invalid_argument("fk_norm_ge_dirac1d_closed: bad arguments");
    return 2.0 * std::exp(0.5 * c * c * t - c * r) * normal_cdf((c * t - r) / std::sqrt(t));
}

TiltedProbability tilted_prob_dirac1d(double c, double t, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("tilted_prob_dirac1d: delta must be >= 0");
    TiltedProbability out;
    out.num = fk_quadrature_dirac1d(c, t, FkEvent::norm_ge(delta * t));
    out.den = fk_quadrature_dirac1d(c, t, FkEvent::all());
    out.ratio = out.num.value / out.den.value;
    if (out.ratio > 1.0 && out.ratio < 1.0 + 1e-12) out.ratio = 1.0;
    return out;
}

DualityRow duality_compare(double t, const std::string& event_desc, double sim,
                           double sim_se, double fk, double fk_se) {
    DualityRow row;
    row.t = t;
    row.event_desc = event_desc;
    row.sim = sim;
    row.sim_se = sim_se;
    row.fk = fk;
    row.fk_se = fk_se;
    row.diff = sim - fk;
    row.joint_se = std::sqrt(sim_se * sim_se + fk_se * fk_se);
    row.pass = std::abs(row.diff) <= 3.0 * row.joint_se || row.diff == 0.0;
    return row;
}

} // namespace bbm
