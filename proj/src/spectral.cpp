#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "util.hpp"

namespace bbm {

// ---------------- Green kernels ----------------

double green_resolvent(int dim, double alpha, const double* x, const double* y) {
    if (!(alpha > 0.0)) throw std::domain_error("green_resolvent: alpha must be positive");
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) { double d = x[i] - y[i]; r2 += d * d; }
    double r = std::sqrt(r2);
    double s = std::sqrt(2.0 * alpha);
    switch (dim) {
        case 1:
            return std::exp(-s * r) / s;
        case 2:
            if (r <= 0.0) throw std::domain_error("green_resolvent: kernel diverges at r=0 for d=2");
            return bessel_k0(s * r) / M_PI;
        case 3:
            if (r <= 0.0) throw std::domain_error("green_resolvent: kernel diverges at r=0 for d=3");
            return std::exp(-s * r) / (2.0 * M_PI * r);
        default:
            throw std::invalid_argument("green_resolvent: dim must be 1, 2 or 3");
    }
}

// ---------------- eigenfunction handle ----------------

double EigenfunctionHandle::eval1(double x) const {
    switch (form) {
        case Form::SingleDiracClosed:
            return std::sqrt(c) * std::exp(-c * std::abs(x - a));
        case Form::AtomicResolvent: {
            double v = 0.0;
            for (size_t j = 0; j < pos.size(); ++j) v += coef[j] * std::exp(-s * std::abs(x - pos[j]));
            return v;
        }
        case Form::Grid1D:
        case Form::GridRadial3D: {
            if (grid_x.size() < 2) return 0.0;
            double xx = (form == Form::GridRadial3D) ? std::abs(x) : x;
            if (xx <= grid_x.front()) return (form == Form::GridRadial3D) ? grid_h.front() : 0.0;
            if (xx >= grid_x.back()) return 0.0;
            double h0 = grid_x[1] - grid_x[0];
            size_t i = size_t((xx - grid_x.front()) / h0);
            i = std::min(i, grid_x.size() - 2);
            double w = (xx - grid_x[i]) / (grid_x[i + 1] - grid_x[i]);
            return (1.0 - w) * grid_h[i] + w * grid_h[i + 1];
        }
    }
    return 0.0;
}

double EigenfunctionHandle::eval(const double* x, int dim) const {
    if (form == Form::GridRadial3D) {
        double r = 0.0;
        for (int i = 0; i < dim; ++i) r += x[i] * x[i];
        return eval1(std::sqrt(r));
    }
    return eval1(x[0]);
}

double EigenfunctionHandle::integral() const {
    switch (form) {
        case Form::SingleDiracClosed:
            return 2.0 / std::sqrt(c);
        case Form::AtomicResolvent: {
            double v = 0.0;
            for (double cj : coef) v += cj * 2.0 / s;
            return v;
        }
        case Form::Grid1D: {
            double acc = 0.0;
            for (size_t i = 0; i + 1 < grid_x.size(); ++i)
                acc += 0.5 * (grid_h[i] + grid_h[i + 1]) * (grid_x[i + 1] - grid_x[i]);
            return acc;
        }
        case Form::GridRadial3D: {
            double acc = 0.0;
            for (size_t i = 0; i + 1 < grid_x.size(); ++i) {
                double r0 = grid_x[i], r1 = grid_x[i + 1];
                double f0 = grid_h[i] * r0 * r0, f1 = grid_h[i + 1] * r1 * r1;
                acc += 0.5 * (f0 + f1) * (r1 - r0);
            }
            return 4.0 * M_PI * acc;
        }
    }
    return 0.0;
}

double EigenfunctionHandle::l2_norm() const {
    switch (form) {
        case Form::SingleDiracClosed:
            return 1.0;
        case Form::AtomicResolvent: {
            // int e^{-s|x-a|} e^{-s|x-b|} dx = e^{-s d}(1/s + d), d = |a-b|
            double acc = 0.0;
            for (size_t j = 0; j < pos.size(); ++j)
                for (size_t k = 0; k < pos.size(); ++k) {
                    double d = std::abs(pos[j] - pos[k]);
                    acc += coef[j] * coef[k] * std::exp(-s * d) * (1.0 / s + d);
                }
            return std::sqrt(acc);
        }
        case Form::Grid1D: {
            double acc = 0.0;
            for (size_t i = 0; i + 1 < grid_x.size(); ++i) {
                double f0 = grid_h[i] * grid_h[i], f1 = grid_h[i + 1] * grid_h[i + 1];
                acc += 0.5 * (f0 + f1) * (grid_x[i + 1] - grid_x[i]);
            }
            return std::sqrt(acc);
        }
        case Form::GridRadial3D: {
            double acc = 0.0;
            for (size_t i = 0; i + 1 < grid_x.size(); ++i) {
                double r0 = grid_x[i], r1 = grid_x[i + 1];
                double f0 = grid_h[i] * grid_h[i] * r0 * r0;
                double f1 = grid_h[i + 1] * grid_h[i + 1] * r1 * r1;
                acc += 0.5 * (f0 + f1) * (r1 - r0);
            }
            return std::sqrt(4.0 * M_PI * acc);
        }
    }
    return 0.0;
}

// ---------------- closed-form and matrix eigenvalues ----------------

static SpectralResult make_result(double lambda, std::string method) {
    SpectralResult r;
    r.lambda = lambda;
    r.speed = (lambda < 0.0) ? std::sqrt(-lambda / 2.0) : 0.0;
    r.method = std::move(method);
    return r;
}

SpectralResult lambda_single_dirac(double c, double a) {
    if (!(c > 0.0)) throw std::invalid_argument("lambda_single_dirac: c must be positive");
    SpectralResult r = make_result(-0.5 * c * c, "closed form, Perron condition c G(0,0) = 1");
    EigenfunctionHandle h;
    h.form = EigenfunctionHandle::Form::SingleDiracClosed;
    h.c = c;
    h.a = a;
    r.h = h;
    return r;
}

// Perron (largest) eigenvalue of the symmetrized kernel
// K~(s)_ij = sqrt(w_i w_j) e^{-s|x_i-x_j|} / s via power iteration.
static double perron_root_1d(const std::vector<double>& xs, const std::vector<double>& ws,
                             double s, std::vector<double>* vec_out = nullptr) {
    size_t n = xs.size();
    std::vector<double> K(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            K[i * n + j] = std::sqrt(ws[i] * ws[j]) * std::exp(-s * std::abs(xs[i] - xs[j])) / s;
    std::vector<double> v(n, 1.0), Kv(n);
    double rho = 0.0;
    for (int it = 0; it < 10000; ++it) {
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += K[i * n + j] * v[j];
            Kv[i] = acc;
        }
        double num = 0.0, den = 0.0, nrm = 0.0;
        for (size_t i = 0; i < n; ++i) { num += v[i] * Kv[i]; den += v[i] * v[i]; nrm += Kv[i] * Kv[i]; }
        double rho_new = num / den;
        nrm = std::sqrt(nrm);
        for (size_t i = 0; i < n; ++i) v[i] = Kv[i] / nrm;
        if (std::abs(rho_new - rho) <= 1e-14 * std::max(1.0, std::abs(rho_new)) && it > 3) {
            rho = rho_new;
            break;
        }
        rho = rho_new;
    }
    if (vec_out) *vec_out = v;
    return rho;
}

SpectralResult lambda_atomic(const BranchingRateMeasure& mu, double multiplier) {
    if (!(multiplier > 0.0)) throw std::invalid_argument("lambda_atomic: multiplier must be positive");
    std::vector<double> xs, ws;
    if (mu.kind == MeasureKind::Atoms) {
        if (mu.dim != 1)
            throw std::invalid_argument("lambda_atomic: point masses are outside the Kato class for d >= 2");
        for (size_t j = 0; j < mu.atom_pos.size(); ++j) {
            xs.push_back(mu.atom_pos[j][0]);
            ws.push_back(multiplier * mu.atom_w[j]);
        }
    } else if (mu.kind == MeasureKind::LatticeAtoms) {
        for (int k = -mu.lattice_N; k <= mu.lattice_N; ++k) {
            xs.push_back(double(k));
            ws.push_back(multiplier * std::exp(-std::pow(std::abs(double(k)), mu.lattice_p)));
        }
    } else {
        throw std::invalid_argument("lambda_atomic: measure must be atomic");
    }

    // rho(s) is strictly decreasing, diverges as s -> 0, vanishes as s -> inf
    double s_hi = 1.0;
    while (perron_root_1d(xs, ws, s_hi) > 1.0) {
        s_hi *= 2.0;
        if (s_hi > 1e9) throw std::runtime_error("lambda_atomic: no root located");
    }
    double s_lo = s_hi;
    while (perron_root_1d(xs, ws, s_lo) < 1.0) s_lo *= 0.5;
    double s = bisect([&](double t) { return perron_root_1d(xs, ws, t) - 1.0; }, s_lo, s_hi, 1e-12);

    SpectralResult r = make_result(-0.5 * s * s, "Perron root of the resolvent kernel matrix, bisection in s");

    // eigenfunction: h(x) = sum_j G_s(x, x_j) w_j phi_j with phi the Perron
    // vector of the unsymmetrized kernel; recover phi_j = v_j / sqrt(w_j)
    std::vector<double> v;
    perron_root_1d(xs, ws, s, &v);
    EigenfunctionHandle h;
    h.form = EigenfunctionHandle::Form::AtomicResolvent;
    h.s = s;
    h.pos = xs;
    h.coef.resize(xs.size());
    for (size_t j = 0; j < xs.size(); ++j)
        h.coef[j] = ws[j] * (v[j] / std::sqrt(ws[j])) / s;
    double nrm = h.l2_norm();
    for (auto& cj : h.coef) cj /= nrm;
    r.h = h;
    return r;
}

SpectralResult lambda_two_diracs(double c1, double c2, double a) {
    if (!(c1 > 0.0) || !(c2 > 0.0)) throw std::invalid_argument("lambda_two_diracs: c1, c2 must be positive");
    if (!(a > 0.0)) throw std::invalid_argument("lambda_two_diracs: a must be positive");
    double cmax = std::max(c1, c2), csum = c1 + c2;
    auto f = [&](double s) { return (s - c1) * (s - c2) - c1 * c2 * std::exp(-4.0 * a * s); };
    // f(cmax) = -c1 c2 e^{-4 a cmax} < 0 and f(c1+c2) > 0
    double s = bisect(f, cmax, csum + 1e-12, 1e-12);
    return make_result(-0.5 * s * s, "determinant condition (s-c1)(s-c2) = c1 c2 e^{-4as}, bisection in s");
}

SpectralResult lambda_delta_shell_d3(double c, double R) {
    if (!(c > 0.0) || !(R > 0.0)) throw std::invalid_argument("lambda_delta_shell_d3: c, R must be positive");
    SpectralResult r;
    if (c * R <= 0.5) {
        r = make_result(0.0, "no bound state: cR <= 1/2");
    } else {
        // s = c (1 - e^{-2 s R}); left side grows from 1/(2R) at 0+ to c
        auto f = [&](double s) { return s - c * (1.0 - std::exp(-2.0 * s * R)); };
        double s = bisect(f, 1e-14, c, 1e-13 * std::max(1.0, c));
        r = make_result(-0.5 * s * s, "s-wave matching s e^{sR}/sinh(sR) = 2c, bisection in s");
    }
    // printed variant: 2 s e^{2sR}/(e^{2sR}-1) = c, threshold cR = 1
    if (c * R > 1.0) {
        auto g = [&](double s) { return s - 0.5 * c * (1.0 - std::exp(-2.0 * s * R)); };
        r.lambda_printed_form = -0.5 * std::pow(bisect(g, 1e-14, c, 1e-13 * std::max(1.0, c)), 2);
    } else {
        r.lambda_printed_form = 0.0;
    }
    return r;
}

SpectralResult lambda_circle_d2(double c, double R) {
    if (!(c > 0.0) || !(R > 0.0)) throw std::invalid_argument("lambda_circle_d2: c, R must be positive");
    // Perron condition: c int_0^{2pi} G_{s^2/2}(x, y(theta)) R dtheta = 1 with
    // x on the circle, |x - y(theta)| = 2R sin(theta/2). The K0 log
    // singularity at theta=0 is integrable; the quadrature splits it off.
    auto ring = [&](double s) {
        auto f = [&](double th) { return bessel_k0(s * 2.0 * R * std::sin(0.5 * th)) / M_PI; };
        double inner = integrate_rel(f, 1e-12, 0.25, 1e-11) + integrate_rel(f, 0.25, M_PI, 1e-11);
        return 2.0 * c * R * inner; // factor 2: theta symmetric about pi
    };
    // ring(s) decreases in s from +inf to 0: always a unique root (d=2)
    double hi = 1.0;
    while (ring(hi) > 1.0) hi *= 2.0;
    double lo = hi;
    while (ring(lo) < 1.0) lo *= 0.5;
    double s = bisect([&](double t) { return ring(t) - 1.0; }, lo, hi, 1e-11);
    return make_result(-0.5 * s * s, "circle-averaged resolvent Perron condition, K0 quadrature");
}

double ball_d3_cstar(double R) { return M_PI * M_PI / (8.0 * R * R); }

SpectralResult lambda_ball_d3(double c, double R) {
    if (!(c > 0.0) || !(R > 0.0)) throw std::invalid_argument("lambda_ball_d3: c, R must be positive");
    double cstar = ball_d3_cstar(R);
    if (c <= cstar) return make_result(0.0, "no bound state: c <= pi^2/(8R^2)");
    // ground state: k in (pi/2R, min(pi/R, sqrt(2c))), g(k) = k cot(kR) + s
    // with s = sqrt(2c - k^2); g > 0 at the left end, < 0 at the right
    auto g = [&](double k) {
        double s = std::sqrt(std::max(2.0 * c - k * k, 0.0));
        return k * std::cos(k * R) / std::sin(k * R) + s;
    };
    double klo = M_PI / (2.0 * R) * (1.0 + 1e-12);
    double khi = std::min(M_PI / R * (1.0 - 1e-12), std::sqrt(2.0 * c) * (1.0 - 1e-15));
    double k = bisect(g, klo, khi, 1e-13);
    double lambda = 0.5 * k * k - c;
    SpectralResult r = make_result(lambda, "s-wave matching k cot(kR) = -sqrt(-2 lambda), bisection in k");
    // the printed form tan(kR)/(kR) = -1/sqrt(-2 lambda) is the same equation
    // rescaled only when R = 1; solve it literally for the record
    auto gp = [&](double kk) {
        double s = std::sqrt(std::max(2.0 * c - kk * kk, 0.0));
        return std::tan(kk * R) / (kk * R) + 1.0 / s;
    };
    double sign_lo = gp(klo), sign_hi = gp(khi);
    if ((sign_lo > 0) != (sign_hi > 0)) {
        double kp = bisect(gp, klo, khi, 1e-13);
        r.lambda_printed_form = 0.5 * kp * kp - c;
    }
    return r;
}

SpectralResult lambda_ball_1d(double c, double R) {
    if (!(c > 0.0) || !(R > 0.0)) throw std::invalid_argument("lambda_ball_1d: c, R must be positive");
    // even ground state: cos(kx) inside, e^{-s|x|} outside, k tan(kR) = s,
    // k^2 + s^2 = 2c. g(k) = k tan(kR) - sqrt(2c - k^2) runs from -sqrt(2c)
    // to +inf (or to a positive value at k = sqrt(2c)); one root, always bound.
    double kmax = std::min(0.5 * M_PI / R * (1.0 - 1e-12), std::sqrt(2.0 * c) * (1.0 - 1e-15));
    auto g = [&](double k) { return k * std::tan(k * R) - std::sqrt(std::max(2.0 * c - k * k, 0.0)); };
    double k = bisect(g, 1e-12, kmax, 1e-13);
    return make_result(0.5 * k * k - c, "even-well matching k tan(kR) = sqrt(2c - k^2), bisection in k");
}

// ---------------- grid eigensolver ----------------

namespace {

// number of eigenvalues of the symmetric tridiagonal (diag, off) below sigma,
// by counting negative pivots of the LDL^T factorization
int sturm_count(const std::vector<double>& diag, double off, double sigma) {
    int count = 0;
    double q = diag[0] - sigma;
    if (q < 0) ++count;
    const double tiny = 1e-300;
    for (size_t i = 1; i < diag.size(); ++i) {
        double denom = (std::abs(q) < tiny) ? ((q < 0) ? -tiny : tiny) : q;
        q = (diag[i] - sigma) - off * off / denom;
        if (q < 0) ++count;
    }
    return count;
}

// one inverse-iteration pass: solve (T - sigma I) x = b in place.
// Tridiagonal LU with partial pivoting; the shift sits below the spectrum,
// so plain Thomas elimination can hit near-zero pivots.
void tridiag_solve_shifted(const std::vector<double>& diag, double off, double sigma,
                           std::vector<double>& x) {
    size_t n = diag.size();
    std::vector<double> d(n), u1(n, 0.0), u2(n, 0.0), l(n, 0.0);
    std::vector<char> piv(n, 0);
    for (size_t i = 0; i < n; ++i) d[i] = diag[i] - sigma;
    for (size_t i = 0; i + 1 < n; ++i) u1[i] = off;
    for (size_t i = 0; i + 1 < n; ++i) {
        double sub = off; // entry (i+1, i); elimination never rewrites it
        if (std::abs(sub) > std::abs(d[i])) {
            piv[i] = 1;
            std::swap(d[i], sub);
            std::swap(u1[i], d[i + 1]);
            if (i + 2 < n) std::swap(u2[i], u1[i + 1]);
        }
        double m = sub / d[i];
        l[i] = m;
        d[i + 1] -= m * u1[i];
        if (i + 2 < n) u1[i + 1] -= m * u2[i];
    }
    std::vector<double> y = x;
    for (size_t i = 0; i + 1 < n; ++i) {
        if (piv[i]) std::swap(y[i], y[i + 1]);
        y[i + 1] -= l[i] * y[i];
    }
    x[n - 1] = y[n - 1] / d[n - 1];
    for (size_t i = n - 1; i-- > 0;) {
        double acc = y[i] - u1[i] * x[i + 1];
        if (i + 2 < n) acc -= u2[i] * x[i + 2];
        x[i] = acc / d[i];
    }
}

} // namespace

double lambda_grid(const BranchingRateMeasure& mu, GridMode mode, double X, int n,
                   EigenfunctionHandle* h_out, double multiplier) {
    if (!(X > 0.0) || n < 16) throw std::invalid_argument("lambda_grid: need X > 0 and n >= 16");
    if (!(multiplier > 0.0)) throw std::invalid_argument("lambda_grid: multiplier must be positive");
    if (mu.kind == MeasureKind::Atoms && mu.dim != 1)
        throw std::invalid_argument("lambda_grid: point masses are outside the Kato class for d >= 2");
    if (mode == GridMode::Line1D && mu.dim != 1)
        throw std::invalid_argument("lambda_grid: line mode needs a 1d measure");
    if (mode == GridMode::RadialD3 && mu.dim != 3)
        throw std::invalid_argument("lambda_grid: radial mode needs a 3d measure");

    std::vector<double> nodes(n), V(n, 0.0);
    double h;
    if (mode == GridMode::Line1D) {
        h = 2.0 * X / double(n - 1);
        for (int i = 0; i < n; ++i) nodes[i] = -X + h * i;
    } else {
        h = X / double(n);
        for (int i = 0; i < n; ++i) nodes[i] = h * (i + 1);
    }

    auto deposit = [&](double where, double mass) {
        // nearest-node deposit of a point mass: V_j += mass/h
        long j;
        if (mode == GridMode::Line1D) j = std::lround((where + X) / h);
        else j = std::lround(where / h) - 1;
        if (j >= 0 && j < n) V[size_t(j)] += mass / h;
    };

    switch (mu.kind) {
        case MeasureKind::Atoms:
            for (size_t k = 0; k < mu.atom_pos.size(); ++k) deposit(mu.atom_pos[k][0], mu.atom_w[k]);
            break;
        case MeasureKind::LatticeAtoms:
            for (int k = -mu.lattice_N; k <= mu.lattice_N; ++k)
                deposit(double(k), std::exp(-std::pow(std::abs(double(k)), mu.lattice_p)));
            break;
        case MeasureKind::SphereSurface:
            if (mode != GridMode::RadialD3)
                throw std::invalid_argument("lambda_grid: sphere surface needs the radial mode");
            // radial reduction carries coefficient c exactly (w = r u form)
            deposit(mu.R, mu.c);
            break;
        case MeasureKind::Density: {
            // cell-averaged sampling: a point sample biases a discontinuous
            // edge by O(h/2); 16 midpoint subsamples cut that to O(h/32)
            const int sub = 16;
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int q = 0; q < sub; ++q) {
                    double xq = nodes[i] + h * ((q + 0.5) / double(sub) - 0.5);
                    double xv[3] = {xq, 0.0, 0.0};
                    acc += mu.density_at(xv);
                }
                V[i] = acc / double(sub);
            }
            break;
        }
    }
    if (multiplier != 1.0)
        for (auto& v : V) v *= multiplier;

    // H = -(1/2) D2 - V, Dirichlet ends
    double inv_h2 = 1.0 / (h * h);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = inv_h2 - V[i];
    double off = -0.5 * inv_h2;

    double maxV = 0.0;
    for (double v : V) maxV = std::max(maxV, v);
    double lo = -maxV - 1.0, hi = 2.0 * inv_h2 + 1.0;
    // locate the smallest eigenvalue by Sturm bisection
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
        double mid = 0.5 * (lo + hi);
        if (sturm_count(diag, off, mid) >= 1) hi = mid;
        else lo = mid;
    }
    double lambda = 0.5 * (lo + hi);
    if (lambda > -1e-10) lambda = 0.0; // clamp: no bound state resolved

    if (h_out) {
        // inverse iteration at a shift just below the located eigenvalue
        double sigma = 0.5 * (lo + hi) - 1e-9 * std::max(1.0, std::abs(lambda));
        std::vector<double> v(n, 1.0);
        for (int pass = 0; pass < 4; ++pass) {
            tridiag_solve_shifted(diag, off, sigma, v);
            double nrm = 0.0;
            for (double t : v) nrm += t * t;
            nrm = std::sqrt(nrm);
            for (double& t : v) t /= nrm;
        }
        double sgn = 0.0;
        for (double t : v) sgn += t;
        if (sgn < 0) for (double& t : v) t = -t;

        EigenfunctionHandle eh;
        eh.grid_x = nodes;
        if (mode == GridMode::Line1D) {
            eh.form = EigenfunctionHandle::Form::Grid1D;
            eh.grid_h = v;
        } else {
            eh.form = EigenfunctionHandle::Form::GridRadial3D;
            eh.grid_h.resize(n);
            for (int i = 0; i < n; ++i) eh.grid_h[i] = v[i] / nodes[i]; // u = w/r
        }
        double nrm = eh.l2_norm();
        for (double& t : eh.grid_h) t /= nrm;
        *h_out = eh;
    }
    return lambda;
}

// ---------------- exponents and tails ----------------

double big_lambda(double lambda, double delta) {
    if (!(lambda < 0.0)) throw std::domain_error("big_lambda: needs lambda < 0");
    if (!(delta > 0.0)) throw std::domain_error("big_lambda: needs delta > 0");
    double s = std::sqrt(-2.0 * lambda);
    return (delta <= s) ? lambda + s * delta : 0.5 * delta * delta;
}

double p_opt(double lambda, double delta) {
    if (!(lambda < 0.0)) throw std::domain_error("p_opt: needs lambda < 0");
    if (!(delta > 0.0)) throw std::domain_error("p_opt: needs delta > 0");
    double s = std::sqrt(-2.0 * lambda);
    return (delta < s) ? 1.0 - delta / s : 0.0;
}

double p_opt_objective(double lambda, double delta, double p) {
    if (!(p >= 0.0) || !(p < 1.0)) throw std::domain_error("p_opt_objective: p must lie in [0,1)");
    return -lambda * p - delta * delta / (2.0 * (1.0 - p));
}

double gaussian_tail(double t, int d) {
    if (d < 1 || d > 3) throw std::invalid_argument("gaussian_tail: d must be 1, 2 or 3");
    if (!(t >= 0.0)) throw std::invalid_argument("gaussian_tail: t must be nonnegative");
    double upper = t + 15.0; // e^{-t dt - dt^2/2} < 1e-48 relative beyond
    auto f = [&](double v) { return std::exp(-0.5 * (v * v - t * t)) * std::pow(v, d - 1); };
    // integrate the rescaled integrand, restore the factor afterwards
    double val = integrate_rel(f, t, upper, 1e-11);
    return val * std::exp(-0.5 * t * t);
}

BallTail ball_tail_monotonicity(int dim, double t, double R, const double* x) {
    if (!(t > 0.0) || !(R > 0.0)) throw std::invalid_argument("ball_tail: t and R must be positive");
    double rho = 0.0;
    for (int i = 0; i < dim; ++i) rho += x[i] * x[i];
    rho = std::sqrt(rho);
    double st = std::sqrt(t);

    auto from = [&](double r0) -> double {
        switch (dim) {
            case 1:
                return normal_cdf((r0 - R) / st) + normal_cdf((-R - r0) / st);
            case 2: {
                if (r0 < 1e-12) {
                    // P(|B_t| >= R) = e^{-R^2/(2t)} for the 2d norm
                    return std::exp(-0.5 * R * R / t);
                }
                // radial density (r/t) e^{-(r^2+rho^2)/2t} I0(r rho / t);
                // the angular factor comes from periodic trapezoid quadrature
                auto dens = [&](double r) {
                    int m = 128;
                    double ang = 0.0;
                    for (int k = 0; k < m; ++k) {
                        double th = (2.0 * M_PI * k) / m;
                        ang += std::exp((r * r0 * std::cos(th) - 0.5 * (r * r + r0 * r0)) / t);
                    }
                    ang *= 2.0 * M_PI / m;
                    return r / (2.0 * M_PI * t) * ang;
                };
                double upper = std::max(R, r0) + 10.0 * st;
                return integrate_rel(dens, R, upper, 1e-9);
            }
            case 3: {
                if (r0 < 1e-12)
                    return std::sqrt(2.0 / M_PI) * gaussian_tail(R / st, 3);
                auto dens = [&](double r) {
                    double a = std::exp(-0.5 * (r - r0) * (r - r0) / t);
                    double b = std::exp(-0.5 * (r + r0) * (r + r0) / t);
                    return r / (r0 * std::sqrt(2.0 * M_PI * t)) * (a - b);
                };
                double upper = std::max(R, r0) + 10.0 * st;
                return integrate_rel(dens, R, upper, 1e-9);
            }
            default:
                throw std::invalid_argument("ball_tail: dim must be 1, 2 or 3");
        }
    };

    BallTail out;
    out.from_x = from(rho);
    out.from_origin = from(0.0);
    return out;
}

} // namespace bbm
