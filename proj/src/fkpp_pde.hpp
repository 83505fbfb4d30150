#pragma once
// d=1 semilinear heat equation u_t = (1/2) u_xx + V(x) (sum_n p_n u^n - u)
// for mollified branching-rate densities. u(T, x, y) approximates
// P_x(L_T <= y) (L-version, initial data 1_{y >= |x|}) or P_x(R_T <= y)
// (R-version, 1_{y >= x}). Front extraction and tail-decay fitting on top.

#include <vector>

#include "measures.hpp"

namespace bbm {

struct PdeGrid {
    enum class Version { L, R };
    double X = 0.0;  // domain [-X, X]
    int n = 0;       // nodes, odd so x=0 is a node
    double h = 0.0;  // spacing
    double dt = 0.0;
    Version version = Version::L;
    std::vector<double> x;
    std::vector<double> V; // mollified potential, trapezoid mass matched to mu

    // atoms become Gaussians of the given width; densities are sampled
    // pointwise; either way V is rescaled so its trapezoid integral equals
    // the measure mass exactly
    static PdeGrid build(const BranchingRateMeasure& mu, double X, double h, double dt,
                         double mollifier_width, Version v);
    static PdeGrid build_zero(double X, double h, double dt, Version v);
};

struct PdeSolution {
    std::vector<double> record_t;
    std::vector<std::vector<double>> u; // one spatial profile per record time
    double max_principle_excess = 0.0;  // worst excursion outside [0,1] seen

    // value at x by linear interpolation on the grid
    double at(std::size_t row, double xq, const PdeGrid& g) const;
};

// Strang splitting, Crank-Nicolson diffusion halves with backward-Euler
// startup, explicit reaction. Boundary values are frozen at the initial
// data's boundary limits. record_t must be multiples of dt.
PdeSolution solve_fkpp_1d(const PdeGrid& g, double y, const OffspringLaw& offspring,
                          const std::vector<double>& record_t);

struct FrontCurve {
    std::vector<double> T;
    std::vector<double> y_half;         // NaN where u never crosses 1/2 on the y grid
    std::vector<double> y_grid;         // the y values scanned
    std::vector<std::vector<double>> u; // u[iy][iT] = u(T, x0) for threshold y
};

// one solve per y value; y_half by monotone interpolation of u(T, x0, y)
// across the y grid
FrontCurve front_curve(const PdeGrid& g, const OffspringLaw& offspring, double x0,
                       const std::vector<double>& y_grid, const std::vector<double>& T_grid);

struct TailDecay {
    std::vector<double> T;           // rows kept (1-u above the underflow floor)
    std::vector<double> one_minus_u; // at (T, x0, delta T)
    double slope = 0.0;              // fitted d/dT log(1-u)
    double se = 0.0;
    bool truncated = false;          // some rows fell below 1e-14
};

// one solve per T with y = delta T
TailDecay tail_decay_check(const PdeGrid& g, const OffspringLaw& offspring, double x0,
                           double delta, const std::vector<double>& T_grid);

} // namespace bbm
