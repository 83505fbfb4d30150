#pragma once
// Branching Brownian motion simulator: Euler-Maruyama diffusion, PCAF-driven
// exponential branching clocks, spread statistics, an exact event-skeleton
// sampler for the single-atom d=1 case, and windowed rate fitting.

#include <cstdint>
#include <vector>

#include "measures.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace bbm {

struct Particle {
    std::uint64_t id = 0;
    std::uint64_t parent = 0;
    Vec3 x{0.0, 0.0, 0.0};
    double tau = 0.0; // Exp(1) clock threshold
    double A = 0.0;   // PCAF accumulated since birth; A < tau while alive
};

struct SimParams {
    int dim = 1;
    double dt = 1e-3;
    double eps = 5e-3;
    double horizon = 14.0;
    std::size_t population_cap = 200000;
    double record_every = 0.5;
    double burn_in = 2.0;
    Vec3 x0{0.0, 0.0, 0.0};
    std::vector<double> deltas;
    std::vector<Vec3> directions; // unit vectors, d components
    // long-range stepping: a particle farther than this many sigma from the
    // support of mu takes one step sized to keep re-entry sub-1e-9 unlikely
    bool far_field = true;
    double far_field_sigmas = 6.0;
};

// one record-grid snapshot; vectors run parallel to deltas/directions
struct RecordRow {
    double t = 0.0;
    std::size_t Z = 0;
    double L = 0.0;                 // max_k |x_k|
    double R = 0.0;                 // rightmost coordinate, d=1 only
    std::vector<double> Lr;         // max_k <x_k, r_i> per direction
    std::vector<Vec3> argmax_r;     // the particle attaining Lr[i]
    std::vector<std::size_t> Zd;    // #{ |x_k| >= delta_j t }
    std::vector<std::size_t> Zdr;   // #{ <x_k, r_i> >= delta_j t }, i-major
    double M = 0.0;                 // e^{lambda t} sum_k h(x_k), when recorded
    bool has_M = false;
};

struct ReplicaResult {
    std::vector<RecordRow> rows;
    std::size_t branch_events = 0;
    std::size_t events_before_burnin = 0;
    double last_branch_time = 0.0; // 0 when no branching occurred
    bool cap_hit = false;
    double cap_time = 0.0;
};

Particle init_particle(const Vec3& x0, Rng& rng);

// advance every particle by dt and branch those whose clock fired;
// exposed for the small-step unit tests, run_replica has its own loop
void step_population(std::vector<Particle>& pop, int dim, double dt, double eps,
                     const BranchingRateMeasure& mu, const OffspringLaw& offspring,
                     Rng& rng, std::uint64_t& next_id, std::size_t& branch_events);

ReplicaResult run_replica(const SimParams& sp, const BranchingRateMeasure& mu,
                          const OffspringLaw& offspring, const SpectralResult* spectral,
                          Rng& rng);

// replicas use streams base_stream, base_stream+1, ... of the master seed;
// results are indexed by replica so aggregation order never depends on
// execution order
std::vector<ReplicaResult> run_ensemble(const SimParams& sp, const BranchingRateMeasure& mu,
                                        const OffspringLaw& offspring,
                                        const SpectralResult* spectral, int replicas,
                                        std::uint64_t seed, std::uint64_t base_stream = 0);

struct RateFit {
    double slope = 0.0;
    double se = 0.0;
    double t0 = 0.0, t1 = 0.0;
    int n = 0;
};

// least-squares slope of log(values) against time restricted to [t0, t1];
// throws if any value in the window is not strictly positive
RateFit estimate_rate(const std::vector<double>& times, const std::vector<double>& values,
                      double t0, double t1);

// exact branch times for a single atom c delta_a in d=1 with binary offspring.
// Every branch happens at the atom; only times are random. Times come out
// sorted. Z_t = 1 + #{T_n <= t}.
struct EventSkeleton {
    std::vector<double> times;
    std::size_t count_at(double t) const;
};

EventSkeleton exact_event_skeleton_dirac1d(double c, double x0, double a, double horizon,
                                           Rng& rng);

} // namespace bbm
