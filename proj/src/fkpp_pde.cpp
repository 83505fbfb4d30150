#include "fkpp_pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "util.hpp"

namespace bbm {

namespace {

double trapezoid_mass(const std::vector<double>& V, double h) {
    if (V.size() < 2) return 0.0;
    double s = 0.5 * (V.front() + V.back());
    for (size_t i = 1; i + 1 < V.size(); ++i) s += V[i];
    return s * h;
}

} // namespace

PdeGrid PdeGrid::build(const BranchingRateMeasure& mu, double X, double h, double dt,
                       double mollifier_width, Version v) {
    if (mu.dim != 1) throw std::invalid_argument("fkpp grid: measure must be one-dimensional");
    if (mu.kind == MeasureKind::SphereSurface)
        throw std::invalid_argument("fkpp grid: surface measures have no d=1 version");
    PdeGrid g = build_zero(X, h, dt, v);

    switch (mu.kind) {
        case MeasureKind::Atoms:
            for (size_t j = 0; j < mu.atom_pos.size(); ++j)
                for (int i = 0; i < g.n; ++i) {
                    double z = (g.x[i] - mu.atom_pos[j][0]) / mollifier_width;
                    g.V[i] += mu.atom_w[j] * std::exp(-0.5 * z * z) /
                              (mollifier_width * std::sqrt(2.0 * M_PI));
                }
            break;
        case MeasureKind::LatticeAtoms:
            for (int k = -mu.lattice_N; k <= mu.lattice_N; ++k) {
                double w = std::exp(-std::pow(std::abs(double(k)), mu.lattice_p));
                for (int i = 0; i < g.n; ++i) {
                    double z = (g.x[i] - double(k)) / mollifier_width;
                    g.V[i] += w * std::exp(-0.5 * z * z) /
                              (mollifier_width * std::sqrt(2.0 * M_PI));
                }
            }
            break;
        case MeasureKind::Density:
            for (int i = 0; i < g.n; ++i) g.V[i] = mu.density_at(&g.x[i]);
            break;
        case MeasureKind::SphereSurface:
            break; // rejected above
    }

    // pin the grid mass to the measure mass; rasterization drops O(h) of it
    double target = mu.total_mass();
    double got = trapezoid_mass(g.V, g.h);
    if (!(got > 0.0)) throw std::runtime_error("fkpp grid: potential vanished on the grid");
    double scale = target / got;
    for (double& vi : g.V) vi *= scale;

    double vmax = *std::max_element(g.V.begin(), g.V.end());
    if (dt * vmax > 0.1)
        throw std::invalid_argument("fkpp grid: dt * max(V) exceeds 0.1, shrink dt");
    return g;
}

PdeGrid PdeGrid::build_zero(double X, double h, double dt, Version v) {
    if (!(X > 0.0) || !(h > 0.0) || !(dt > 0.0))
        throw std::invalid_argument("fkpp grid: X, h, dt must be positive");
    PdeGrid g;
    int half = int(std::lround(X / h));
    if (half < 8) throw std::invalid_argument("fkpp grid: fewer than 17 nodes");
    g.n = 2 * half + 1; // odd: x = 0 is a node
    g.X = X;
    g.h = X / double(half);
    g.dt = dt;
    g.version = v;
    g.x.resize(g.n);
    for (int i = 0; i < g.n; ++i) g.x[i] = -X + g.h * i;
    g.V.assign(g.n, 0.0);
    return g;
}

double PdeSolution::at(std::size_t row, double xq, const PdeGrid& g) const {
    const auto& uu = u.at(row);
    if (xq <= g.x.front()) return uu.front();
    if (xq >= g.x.back()) return uu.back();
    double f = (xq - g.x.front()) / g.h;
    size_t i = std::min(size_t(f), size_t(g.n - 2));
    double w = f - double(i);
    return (1.0 - w) * uu[i] + w * uu[i + 1];
}

namespace {

// prefactored Thomas solve for the constant tridiagonal (1+2r, -r);
// interior unknowns only
struct TridiagFactors {
    double r = 0.0;
    std::vector<double> cp;      // superdiagonal multipliers
    std::vector<double> inv_den; // pivot reciprocals

    void factor(int m, double r_) {
        r = r_;
        cp.assign(size_t(m), 0.0);
        inv_den.assign(size_t(m), 0.0);
        double a = 1.0 + 2.0 * r, b = -r;
        double den = a;
        inv_den[0] = 1.0 / den;
        cp[0] = b / den;
        for (int i = 1; i < m; ++i) {
            den = a - b * cp[size_t(i - 1)];
            inv_den[size_t(i)] = 1.0 / den;
            cp[size_t(i)] = b / den;
        }
    }

    void solve(std::vector<double>& d) const {
        int m = int(d.size());
        double b = -r;
        d[0] *= inv_den[0];
        for (int i = 1; i < m; ++i)
            d[size_t(i)] = (d[size_t(i)] - b * d[size_t(i - 1)]) * inv_den[size_t(i)];
        for (int i = m - 2; i >= 0; --i) d[size_t(i)] -= cp[size_t(i)] * d[size_t(i + 1)];
    }
};

// theta-scheme diffusion over tau for u_t = (1/2) u_xx, Dirichlet ends
void diffusion_half(std::vector<double>& u, std::vector<double>& rhs,
                    const TridiagFactors& F, double s, double r) {
    int n = int(u.size());
    int m = n - 2;
    rhs.resize(size_t(m));
    for (int i = 1; i <= m; ++i) {
        size_t k = size_t(i);
        rhs[size_t(i - 1)] =
            u[k] + s * (u[k - 1] - 2.0 * u[k] + u[k + 1]);
    }
    rhs[0] += r * u[0];
    rhs[size_t(m - 1)] += r * u[size_t(n - 1)];
    F.solve(rhs);
    for (int i = 1; i <= m; ++i) u[size_t(i)] = rhs[size_t(i - 1)];
}

// how many full backward-Euler startup steps the discontinuous initial data
// needs before Crank-Nicolson cannot ring: every Fourier mode the CN factor
// would flip in sign (tau k^2 > 4) must be damped below ~1e-14 first
int startup_steps(double dt, double h) {
    double tau = 0.5 * dt;
    double kmax = M_PI / h;
    double kstar = 2.0 / std::sqrt(tau);
    if (kstar >= kmax) return 6; // grid cannot represent flipping modes
    int halves = int(std::ceil(std::log(2e14 / kstar) / std::log(3.0)));
    return std::max(6, (halves + 1) / 2);
}

} // namespace

PdeSolution solve_fkpp_1d(const PdeGrid& g, double y, const OffspringLaw& offspring,
                          const std::vector<double>& record_t) {
    if (record_t.empty()) throw std::invalid_argument("solve_fkpp_1d: no record times");
    std::vector<long> record_step(record_t.size());
    long n_steps = 0;
    for (size_t i = 0; i < record_t.size(); ++i) {
        double k = record_t[i] / g.dt;
        record_step[i] = std::lround(k);
        if (std::abs(k - double(record_step[i])) > 1e-9)
            throw std::invalid_argument("solve_fkpp_1d: record times must be multiples of dt");
        if (i > 0 && record_step[i] <= record_step[i - 1])
            throw std::invalid_argument("solve_fkpp_1d: record times must increase");
        n_steps = std::max(n_steps, record_step[i]);
    }

    // cell averages of the indicator rather than point samples: a pointwise
    // step biases the effective interface by h/2 when y lands on a node
    auto cell_below = [&](double xi) {
        // average of 1_{x <= y} over [xi - h/2, xi + h/2]
        return std::clamp((y - (xi - 0.5 * g.h)) / g.h, 0.0, 1.0);
    };
    std::vector<double> u(size_t(g.n));
    if (g.version == PdeGrid::Version::L) {
        for (int i = 0; i < g.n; ++i) {
            double ax = std::abs(g.x[size_t(i)]);
            // interior cells never straddle the origin once y >= h
            u[size_t(i)] = cell_below(ax);
        }
        double ub = (y >= g.X) ? 1.0 : 0.0;
        u[0] = ub;
        u[size_t(g.n - 1)] = ub;
    } else {
        for (int i = 0; i < g.n; ++i) u[size_t(i)] = cell_below(g.x[size_t(i)]);
        u[0] = 1.0;
        u[size_t(g.n - 1)] = (y >= g.X) ? 1.0 : 0.0;
    }

    // dense offspring pmf by exponent, for Horner evaluation of sum p_n u^n
    int max_n = 0;
    for (int k : offspring.n) max_n = std::max(max_n, k);
    std::vector<double> pmf(size_t(max_n) + 1, 0.0);
    for (size_t i = 0; i < offspring.n.size(); ++i) pmf[size_t(offspring.n[i])] = offspring.prob[i];

    double tau = 0.5 * g.dt;
    // theta = 1/2 (Crank-Nicolson) and theta = 1 (backward Euler) factors
    double r_cn = 0.5 * tau / (2.0 * g.h * g.h), s_cn = r_cn;
    double r_be = tau / (2.0 * g.h * g.h), s_be = 0.0;
    TridiagFactors F_cn, F_be;
    F_cn.factor(g.n - 2, r_cn);
    F_be.factor(g.n - 2, r_be);
    int n_startup = startup_steps(g.dt, g.h);

    PdeSolution sol;
    sol.record_t = record_t;
    sol.u.resize(record_t.size());
    size_t next_rec = 0;
    while (next_rec < record_step.size() && record_step[next_rec] == 0) {
        sol.u[next_rec] = u;
        ++next_rec;
    }

    std::vector<double> rhs;
    for (long step = 1; step <= n_steps; ++step) {
        bool be = step <= n_startup;
        const TridiagFactors& F = be ? F_be : F_cn;
        double s = be ? s_be : s_cn, r = be ? r_be : r_cn;

        diffusion_half(u, rhs, F, s, r);
        for (int i = 1; i + 1 < g.n; ++i) {
            size_t k = size_t(i);
            if (g.V[k] == 0.0) continue;
            double uu = u[k];
            double gen = 0.0;
            for (int e = max_n; e >= 0; --e) gen = gen * uu + pmf[size_t(e)];
            u[k] = uu + g.dt * g.V[k] * (gen - uu);
        }
        diffusion_half(u, rhs, F, s, r);

        double excess = 0.0;
        for (auto& ui : u) {
            if (ui < 0.0) { excess = std::max(excess, -ui); ui = 0.0; }
            else if (ui > 1.0) { excess = std::max(excess, ui - 1.0); ui = 1.0; }
        }
        sol.max_principle_excess = std::max(sol.max_principle_excess, excess);
        if (excess > 1e-12)
            throw std::runtime_error("solve_fkpp_1d: maximum principle violated beyond 1e-12");

        while (next_rec < record_step.size() && record_step[next_rec] == step) {
            sol.u[next_rec] = u;
            ++next_rec;
        }
    }
    return sol;
}

FrontCurve front_curve(const PdeGrid& g, const OffspringLaw& offspring, double x0,
                       const std::vector<double>& y_grid, const std::vector<double>& T_grid) {
    if (y_grid.size() < 2) throw std::invalid_argument("front_curve: need at least 2 y values");
    for (size_t i = 1; i < y_grid.size(); ++i)
        if (!(y_grid[i] > y_grid[i - 1]))
            throw std::invalid_argument("front_curve: y grid must increase");

    // u(T, x0, y) for every y; one PDE solve per y
    std::vector<std::vector<double>> uy(y_grid.size());
    for (size_t k = 0; k < y_grid.size(); ++k) {
        PdeSolution sol = solve_fkpp_1d(g, y_grid[k], offspring, T_grid);
        uy[k].resize(T_grid.size());
        for (size_t j = 0; j < T_grid.size(); ++j) uy[k][j] = sol.at(j, x0, g);
    }

    FrontCurve fc;
    fc.T = T_grid;
    fc.y_grid = y_grid;
    fc.u = uy;
    fc.y_half.assign(T_grid.size(), std::numeric_limits<double>::quiet_NaN());
    for (size_t j = 0; j < T_grid.size(); ++j) {
        for (size_t k = 1; k < y_grid.size(); ++k) {
            double u0 = uy[k - 1][j], u1 = uy[k][j];
            if (u0 < 0.5 && u1 >= 0.5) {
                double w = (0.5 - u0) / (u1 - u0);
                fc.y_half[j] = y_grid[k - 1] + w * (y_grid[k] - y_grid[k - 1]);
                break;
            }
        }
    }
    return fc;
}

TailDecay tail_decay_check(const PdeGrid& g, const OffspringLaw& offspring, double x0,
                           double delta, const std::vector<double>& T_grid) {
    if (!(delta > 0.0)) throw std::invalid_argument("tail_decay_check: delta must be positive");
    TailDecay td;
    std::vector<double> xs, ys;
    for (double T : T_grid) {
        PdeSolution sol = solve_fkpp_1d(g, delta * T, offspring, {T});
        double one_minus = 1.0 - sol.at(0, x0, g);
        if (one_minus < 1e-14) { // underflow floor: drop the row
            td.truncated = true;
            continue;
        }
        td.T.push_back(T);
        td.one_minus_u.push_back(one_minus);
        xs.push_back(T);
        ys.push_back(std::log(one_minus));
    }
    if (xs.size() < 2)
        throw std::runtime_error("tail_decay_check: fewer than 2 usable rows above the underflow floor");
    LineFit f = fit_line(xs, ys);
    td.slope = f.slope;
    td.se = f.slope_se;
    return td;
}

} // namespace bbm
