#pragma once
// Principal eigenvalue solvers for -Delta/2 - mu with the measure presets,
// resolvent (Green) kernels for d <= 3, the growth/decay exponent Lambda,
// the optimal split point of the branching bound, and Gaussian tail
// utilities. Bisection runs in s = sqrt(-2 lambda) wherever the defining
// equation is analytic in s.

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "measures.hpp"

namespace bbm {

// alpha-resolvent kernel of Brownian motion (generator Delta/2), alpha > 0
double green_resolvent(int dim, double alpha, const double* x, const double* y);

// L2-normalized principal eigenfunction in one of several representations.
struct EigenfunctionHandle {
    enum class Form { SingleDiracClosed, AtomicResolvent, Grid1D, GridRadial3D };
    Form form = Form::SingleDiracClosed;

    // SingleDiracClosed: h(x) = sqrt(c) e^{-c|x-a|}
    double c = 0.0, a = 0.0;

    // AtomicResolvent (d=1): h(x) = sum_j coef_j e^{-s|x - pos_j|}
    double s = 0.0;
    std::vector<double> pos;
    std::vector<double> coef;

    // Grid forms: nodes and values of h (d=1) or of the radial profile u(r)
    // with h(x) = u(|x|) (d=3); linear interpolation, zero beyond the grid.
    std::vector<double> grid_x;
    std::vector<double> grid_h;

    double eval1(double x) const;          // d=1 or radial evaluation
    double eval(const double* x, int dim) const;
    double integral() const;               // int h dx
    double l2_norm() const;                // should be 1 (checked in tests)
};

struct SpectralResult {
    double lambda = 0.0;
    double speed = 0.0;                    // sqrt(-lambda/2), 0 if lambda == 0
    std::string method;
    std::optional<EigenfunctionHandle> h;
    // root of the alternative printed form of the defining equation where one
    // exists and differs (delta shell d=3); quiet NaN otherwise
    double lambda_printed_form = std::numeric_limits<double>::quiet_NaN();
};

// mu = c delta_a on the line: lambda = -c^2/2, h = sqrt(c) e^{-c|x-a|}
SpectralResult lambda_single_dirac(double c, double a = 0.0);

// finite atomic measure on the line: Perron root of the resolvent kernel
// matrix K(s)_{ij} = G_s(x_i,x_j) w_j, bisection on s to 1e-12
SpectralResult lambda_atomic(const BranchingRateMeasure& atoms, double multiplier = 1.0);

// mu = c1 delta_{-a} + c2 delta_{+a}: bisection on the determinant condition
// (s-c1)(s-c2) = c1 c2 e^{-4 a s} on (max(c1,c2), c1+c2]
SpectralResult lambda_two_diracs(double c1, double c2, double a);

// c times the surface measure of the radius-R sphere in d=3.
// s-wave matching: s e^{sR}/sinh(sR) = 2c, i.e. s = c(1 - e^{-2sR});
// bound state iff cR > 1/2. lambda_printed_form carries the root of the
// variant with the left side halved (threshold cR = 1), which circulates in
// print; the grid solver arbitrates between them.
SpectralResult lambda_delta_shell_d3(double c, double R);

// c times the arc-length measure of the radius-R circle in d=2.
// Perron condition c oint G_{s^2/2}(x,y) sigma_R(dy) = 1 for x on the circle,
// evaluated by K0 quadrature; equivalent to 2 c R I0(sR) K0(sR) = 1.
SpectralResult lambda_circle_d2(double c, double R);

// V = c 1_{|x| <= R} in d=3: ground state from k cot(kR) = -s with
// k = sqrt(2(lambda + c)); bound state iff c > c* = pi^2/(8 R^2)
SpectralResult lambda_ball_d3(double c, double R);
double ball_d3_cstar(double R);

// V = c 1_{|x| <= R} in d=1: even ground state from k tan(kR) = s,
// k^2 + s^2 = 2c. Always bound for c > 0.
SpectralResult lambda_ball_1d(double c, double R);

enum class GridMode { Line1D, RadialD3 };

// Finite-difference principal eigenvalue on [-X,X] (line) or (0,X] (radial
// d=3, Dirichlet at both ends, acting on w = r u). Atoms and shells are
// deposited as mass/h at the nearest node. Eigenvalues above -1e-10 clamp
// to 0 (no bound state). n is the number of interior nodes.
double lambda_grid(const BranchingRateMeasure& mu, GridMode mode, double X, int n,
                   EigenfunctionHandle* h_out = nullptr, double multiplier = 1.0);

// Growth/decay exponent of the population beyond delta t:
// Lambda(delta) = lambda + sqrt(-2 lambda) delta for delta <= sqrt(-2 lambda),
// delta^2/2 beyond.
double big_lambda(double lambda, double delta);

// maximizer of F(p) = -lambda p - delta^2/(2(1-p)) on [0,1):
// p0 = 1 - delta/sqrt(-2 lambda) when delta < sqrt(-2 lambda), else 0;
// F(p0) = -Lambda(delta)
double p_opt(double lambda, double delta);
double p_opt_objective(double lambda, double delta, double p);

// int_t^infty e^{-v^2/2} v^{d-1} dv by adaptive quadrature (rel. 1e-10)
double gaussian_tail(double t, int d);

// P_x(|B_t| >= R) and P_0(|B_t| >= R); the former never falls below the
// latter. d=1 closed form, d=2,3 by radial reduction quadrature.
struct BallTail { double from_x; double from_origin; };
BallTail ball_tail_monotonicity(int dim, double t, double R, const double* x);

} // namespace bbm
