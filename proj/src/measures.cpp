#include "measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bbm {

static void check_dim(int dim) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("measure: dim must be 1, 2 or 3");
}

BranchingRateMeasure BranchingRateMeasure::atoms(int dim, std::vector<Vec3> pos, std::vector<double> w) {
    check_dim(dim);
    if (pos.empty() || pos.size() != w.size())
        throw std::invalid_argument("atoms: need matching nonempty positions and weights");
    for (double wi : w)
        if (!(wi > 0.0) || !std::isfinite(wi))
            throw std::invalid_argument("atoms: weights must be positive and finite");
    BranchingRateMeasure m;
    m.kind = MeasureKind::Atoms;
    m.dim = dim;
    m.atom_pos = std::move(pos);
    m.atom_w = std::move(w);
    return m;
}

BranchingRateMeasure BranchingRateMeasure::lattice_atoms(double p, int N) {
    if (!(p > 1.0)) throw std::invalid_argument("lattice_atoms: p must exceed 1");
    if (N < 0) throw std::invalid_argument("lattice_atoms: N must be nonnegative");
    BranchingRateMeasure m;
    m.kind = MeasureKind::LatticeAtoms;
    m.dim = 1;
    m.lattice_p = p;
    m.lattice_N = N;
    return m;
}

BranchingRateMeasure BranchingRateMeasure::sphere_surface(int dim, double R, double c) {
    check_dim(dim);
    if (dim < 2) throw std::invalid_argument("sphere_surface: needs dim >= 2");
    if (!(R > 0.0) || !(c > 0.0)) throw std::invalid_argument("sphere_surface: R and c must be positive");
    BranchingRateMeasure m;
    m.kind = MeasureKind::SphereSurface;
    m.dim = dim;
    m.R = R;
    m.c = c;
    return m;
}

BranchingRateMeasure BranchingRateMeasure::ball_indicator(int dim, double R, double c) {
    check_dim(dim);
    if (!(R > 0.0) || !(c > 0.0)) throw std::invalid_argument("ball_indicator: R and c must be positive");
    BranchingRateMeasure m;
    m.kind = MeasureKind::Density;
    m.form = DensityForm::BallIndicator;
    m.dim = dim;
    m.R = R;
    m.c = c;
    return m;
}

BranchingRateMeasure BranchingRateMeasure::power_law_compact(int dim, double R, double p, double c) {
    check_dim(dim);
    if (!(R > 0.0) || !(c > 0.0)) throw std::invalid_argument("power_law_compact: R and c must be positive");
    // Kato condition for |x|^{-p} near the origin
    double pmax = (dim == 1) ? 1.0 : 2.0;
    if (!(p < pmax))
        throw std::invalid_argument("power_law_compact: p must satisfy p < 1 (d=1) or p < 2 (d>=2)");
    if (p < 0.0) throw std::invalid_argument("power_law_compact: p must be nonnegative");
    BranchingRateMeasure m;
    m.kind = MeasureKind::Density;
    m.form = DensityForm::PowerLawCompact;
    m.dim = dim;
    m.R = R;
    m.p = p;
    m.c = c;
    return m;
}

BranchingRateMeasure BranchingRateMeasure::exp_decay(int dim, double p, double c) {
    check_dim(dim);
    if (!(p > 1.0)) throw std::invalid_argument("exp_decay: p must exceed 1");
    if (!(c > 0.0)) throw std::invalid_argument("exp_decay: c must be positive");
    BranchingRateMeasure m;
    m.kind = MeasureKind::Density;
    m.form = DensityForm::ExpDecay;
    m.dim = dim;
    m.p = p;
    m.c = c;
    return m;
}

static double norm_d(const double* x, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

double BranchingRateMeasure::density_at(const double* x) const {
    if (kind != MeasureKind::Density)
        throw std::logic_error("density_at: measure has no density");
    double r = norm_d(x, dim);
    switch (form) {
        case DensityForm::BallIndicator:
            return (r <= R) ? c : 0.0;
        case DensityForm::PowerLawCompact: {
            if (r > R) return 0.0;
            double rr = std::max(r, 1e-300);
            return c * std::pow(rr, -p);
        }
        case DensityForm::ExpDecay:
            return c * std::exp(-std::pow(r, p));
    }
    return 0.0;
}

double BranchingRateMeasure::total_mass() const {
    switch (kind) {
        case MeasureKind::Atoms: {
            double s = 0.0;
            for (double w : atom_w) s += w;
            return s;
        }
        case MeasureKind::LatticeAtoms: {
            double s = 1.0;
            for (int k = 1; k <= lattice_N; ++k) s += 2.0 * std::exp(-std::pow(double(k), lattice_p));
            return s;
        }
        case MeasureKind::SphereSurface:
            // surface area of the (d-1)-sphere of radius R times c
            return c * ((dim == 2) ? 2.0 * M_PI * R : 4.0 * M_PI * R * R);
        case MeasureKind::Density: {
            // closed forms for the radial presets
            if (form == DensityForm::BallIndicator) {
                if (dim == 1) return c * 2.0 * R;
                if (dim == 2) return c * M_PI * R * R;
                return c * 4.0 / 3.0 * M_PI * R * R * R;
            }
            if (form == DensityForm::PowerLawCompact) {
                double d = double(dim);
                double surf = (dim == 1) ? 2.0 : (dim == 2 ? 2.0 * M_PI : 4.0 * M_PI);
                // int_0^R r^{d-1-p} dr, exponent > -1 guaranteed by construction
                return c * surf * std::pow(R, d - p) / (d - p);
            }
            // ExpDecay: int c e^{-r^p} over R^d; gamma-function form
            double d = double(dim);
            double surf = (dim == 1) ? 2.0 : (dim == 2 ? 2.0 * M_PI : 4.0 * M_PI);
            return c * surf / p * std::tgamma(d / p);
        }
    }
    return 0.0;
}

double BranchingRateMeasure::support_radius() const {
    switch (kind) {
        case MeasureKind::Atoms: {
            double r = 0.0;
            for (const auto& a : atom_pos) r = std::max(r, norm_d(a.data(), dim));
            return r;
        }
        case MeasureKind::LatticeAtoms:
            return double(lattice_N);
        case MeasureKind::SphereSurface:
            return R;
        case MeasureKind::Density:
            if (form == DensityForm::ExpDecay)
                return std::pow(41.5, 1.0 / p); // e^{-r^p} < 1e-18 beyond this
            return R;
    }
    return 0.0;
}

MeasureClassification classify_measure(const BranchingRateMeasure& mu) {
    MeasureClassification cl;
    switch (mu.kind) {
        case MeasureKind::Atoms:
            if (mu.dim == 1) {
                cl.is_kato = cl.is_green_tight = cl.nu_beta_all_beta = true;
                cl.note = "finite atomic measure on the line: compactly supported and finite";
            } else {
                cl.note = "point masses in d >= 2 fail the Kato condition";
            }
            break;
        case MeasureKind::LatticeAtoms:
            cl.is_kato = cl.is_green_tight = true;
            // weights e^{-|n|^p} with p > 1 beat every exponential e^{beta|n|}
            cl.nu_beta_all_beta = true;
            cl.note = "summable lattice atoms with super-exponential weight decay";
            break;
        case MeasureKind::SphereSurface:
            cl.is_kato = cl.is_green_tight = cl.nu_beta_all_beta = true;
            cl.note = "compactly supported surface measure";
            break;
        case MeasureKind::Density:
            cl.is_kato = cl.is_green_tight = true;
            if (mu.form == DensityForm::ExpDecay) {
                cl.nu_beta_all_beta = true; // p > 1 enforced at construction
                cl.note = "density with super-exponential decay";
            } else {
                cl.nu_beta_all_beta = true; // compact support
                cl.note = "compactly supported bounded-or-integrable density";
            }
            break;
    }
    return cl;
}

double pcaf_increment(const BranchingRateMeasure& mu, double dt, double eps,
                      const double* x0, const double* x1, double multiplier) {
    if (!(dt > 0.0)) throw std::invalid_argument("pcaf_increment: dt must be positive");
    if (!(eps > 0.0)) throw std::invalid_argument("pcaf_increment: eps must be positive");

    if (mu.kind == MeasureKind::Density) {
        double v = 0.5 * (mu.density_at(x0) + mu.density_at(x1));
        return multiplier * dt * v;
    }

    double mid[3] = {0, 0, 0};
    for (int i = 0; i < mu.dim; ++i) mid[i] = 0.5 * (x0[i] + x1[i]);
    double unit = dt / (2.0 * eps);

    switch (mu.kind) {
        case MeasureKind::Atoms: {
            double acc = 0.0;
            for (size_t j = 0; j < mu.atom_pos.size(); ++j) {
                double d2 = 0.0;
                for (int i = 0; i < mu.dim; ++i) {
                    double d = mid[i] - mu.atom_pos[j][i];
                    d2 += d * d;
                }
                if (d2 < eps * eps) acc += mu.atom_w[j];
            }
            return multiplier * unit * acc;
        }
        case MeasureKind::LatticeAtoms: {
            // eps << 1/2, so at most the nearest integer site can match
            double m = mid[0];
            double nstar = std::round(m);
            if (std::abs(nstar) <= double(mu.lattice_N) && std::abs(m - nstar) < eps)
                return multiplier * unit * std::exp(-std::pow(std::abs(nstar), mu.lattice_p));
            return 0.0;
        }
        case MeasureKind::SphereSurface: {
            double r = norm_d(mid, mu.dim);
            if (std::abs(r - mu.R) < eps) return multiplier * unit * mu.c;
            return 0.0;
        }
        default:
            break;
    }
    return 0.0;
}

double bridge_local_time_sample(double a, double b, double T, double u) {
    if (!(T > 0.0)) throw std::invalid_argument("bridge_local_time_sample: T must be positive");
    if (!(u > 0.0) || u > 1.0)
        throw std::invalid_argument("bridge_local_time_sample: u must lie in (0,1]");
    double d = a - b;
    double l = std::sqrt(d * d - 2.0 * T * std::log(u)) - std::abs(a) - std::abs(b);
    return std::max(0.0, l);
}

double pcaf_increment_sampled(const BranchingRateMeasure& mu, double dt, double eps,
                              const double* x0, const double* x1, Rng& rng,
                              Vec3* support_pt, double multiplier) {
    if (!(dt > 0.0)) throw std::invalid_argument("pcaf_increment_sampled: dt must be positive");

    // paths from a to b on the same side of a level carry local time there
    // with probability e^{-2ab/T}; skip draws that cannot matter
    auto touchable = [&](double a, double b) { return a * b <= 0.0 || 2.0 * a * b <= 60.0 * dt; };

    switch (mu.kind) {
        case MeasureKind::Atoms: {
            if (mu.dim != 1) break; // point atoms are polar in d >= 2; band fallback
            double acc = 0.0, best = 0.0;
            for (size_t j = 0; j < mu.atom_pos.size(); ++j) {
                double a = x0[0] - mu.atom_pos[j][0];
                double b = x1[0] - mu.atom_pos[j][0];
                if (!touchable(a, b)) continue;
                double l = bridge_local_time_sample(a, b, dt, rng.uniform_pos());
                double contrib = mu.atom_w[j] * l;
                acc += contrib;
                if (contrib > best) {
                    best = contrib;
                    if (support_pt) *support_pt = mu.atom_pos[j];
                }
            }
            return multiplier * acc;
        }
        case MeasureKind::LatticeAtoms: {
            // sites are unit-spaced and steps are O(sqrt dt): only the site
            // nearest the midpoint can carry local time
            double m = 0.5 * (x0[0] + x1[0]);
            double ns = std::clamp(std::round(m), -double(mu.lattice_N), double(mu.lattice_N));
            double a = x0[0] - ns, b = x1[0] - ns;
            if (!touchable(a, b)) return 0.0;
            double l = bridge_local_time_sample(a, b, dt, rng.uniform_pos());
            if (l > 0.0 && support_pt) *support_pt = Vec3{ns, 0.0, 0.0};
            return multiplier * std::exp(-std::pow(std::abs(ns), mu.lattice_p)) * l;
        }
        case MeasureKind::SphereSurface: {
            double a = norm_d(x0, mu.dim) - mu.R;
            double b = norm_d(x1, mu.dim) - mu.R;
            if (!touchable(a, b)) return 0.0;
            double l = bridge_local_time_sample(a, b, dt, rng.uniform_pos());
            if (l > 0.0 && support_pt) {
                double r1 = norm_d(x1, mu.dim);
                const double* base = (r1 > 0.0) ? x1 : x0;
                double rb = (r1 > 0.0) ? r1 : norm_d(x0, mu.dim);
                *support_pt = Vec3{0.0, 0.0, 0.0};
                for (int i = 0; i < mu.dim; ++i) (*support_pt)[i] = base[i] * (mu.R / rb);
            }
            return multiplier * mu.c * l;
        }
        case MeasureKind::Density: {
            double v = 0.5 * (mu.density_at(x0) + mu.density_at(x1));
            if (v > 0.0 && support_pt) {
                *support_pt = Vec3{0.0, 0.0, 0.0};
                for (int i = 0; i < mu.dim; ++i) (*support_pt)[i] = x1[i];
            }
            return multiplier * dt * v;
        }
    }
    return pcaf_increment(mu, dt, eps, x0, x1, multiplier);
}

BmLocalTimeSample sample_bm_localtime_joint(double t, Rng& rng) {
    if (!(t > 0.0)) throw std::invalid_argument("sample_bm_localtime_joint: t must be positive");
    double n1 = rng.normal(), n2 = rng.normal(), n3 = rng.normal();
    double m = std::sqrt(t) * std::sqrt(n1 * n1 + n2 * n2 + n3 * n3);
    double u = rng.uniform();
    double ell = u * m;
    double ax = m - ell;
    double x = (rng.next_u64() & 1) ? ax : -ax;
    return {x, ell};
}

OffspringLaw OffspringLaw::from_map(const std::map<int, double>& pmf) {
    if (pmf.empty()) throw std::invalid_argument("offspring: empty law");
    OffspringLaw law;
    double total = 0.0;
    for (auto [k, pk] : pmf) {
        if (k < 1) throw std::invalid_argument("offspring: support must be n >= 1 (no deaths)");
        if (!(pk > 0.0) || pk > 1.0) throw std::invalid_argument("offspring: probabilities must lie in (0,1]");
        law.n.push_back(k);
        law.prob.push_back(pk);
        total += pk;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("offspring: probabilities must sum to 1 within 1e-12");
    double cum = 0.0, mean = 0.0, nlogn = 0.0;
    for (size_t i = 0; i < law.n.size(); ++i) {
        cum += law.prob[i];
        law.cdf.push_back(cum);
        mean += law.n[i] * law.prob[i];
        nlogn += law.n[i] * std::log(double(law.n[i])) * law.prob[i];
    }
    law.cdf.back() = 1.0;
    law.mean = mean;
    law.llogl_finite = std::isfinite(nlogn);
    return law;
}

OffspringLaw OffspringLaw::binary() { return from_map({{2, 1.0}}); }

OffspringLaw OffspringLaw::geometric(double ratio) {
    if (!(ratio > 0.0) || !(ratio < 1.0))
        throw std::invalid_argument("offspring: geometric ratio must lie in (0,1)");
    std::map<int, double> pmf;
    double w = ratio, total = 0.0;
    int k = 1;
    while (w > 1e-16 * (1.0 - ratio) && k < 4096) {
        pmf[k] = w;
        total += w;
        w *= ratio;
        ++k;
    }
    // renormalize the truncation, dumping the residual on the first point;
    // the last point is O(1e-16) and rounding could push it nonpositive
    double fix = 1.0;
    for (auto& [kk, pk] : pmf) { (void)kk; pk /= total; fix -= pk; }
    pmf.begin()->second += fix;
    return from_map(pmf);
}

int OffspringLaw::sample(Rng& rng) const {
    double u = rng.uniform();
    // laws here have a handful of support points; linear walk wins
    for (size_t i = 0; i + 1 < cdf.size(); ++i)
        if (u < cdf[i]) return n[i];
    return n.back();
}

} // namespace bbm
