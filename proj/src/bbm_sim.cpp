#include "bbm_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "util.hpp"

namespace bbm {

Particle init_particle(const Vec3& x0, Rng& rng) {
    Particle p;
    p.id = 1;
    p.parent = 0;
    p.x = x0;
    p.tau = rng.exponential();
    p.A = 0.0;
    return p;
}

namespace {

double norm_d(const Vec3& x, int dim) {
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) r2 += x[i] * x[i];
    return std::sqrt(r2);
}

double dot_d(const Vec3& x, const Vec3& r, int dim) {
    double v = 0.0;
    for (int i = 0; i < dim; ++i) v += x[i] * r[i];
    return v;
}

// distance from x to the support of mu (0 when inside or on it)
double dist_to_support(const BranchingRateMeasure& mu, const Vec3& x, int dim) {
    switch (mu.kind) {
        case MeasureKind::Atoms: {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& a : mu.atom_pos) {
                double r2 = 0.0;
                for (int i = 0; i < dim; ++i) { double d = x[i] - a[i]; r2 += d * d; }
                best = std::min(best, r2);
            }
            return std::sqrt(best);
        }
        case MeasureKind::LatticeAtoms: {
            double ax = std::abs(x[0]);
            if (ax <= double(mu.lattice_N)) return std::abs(x[0] - std::round(x[0]));
            return ax - double(mu.lattice_N);
        }
        case MeasureKind::SphereSurface:
            return std::abs(norm_d(x, dim) - mu.R);
        case MeasureKind::Density:
            return std::max(0.0, norm_d(x, dim) - mu.support_radius());
    }
    return 0.0;
}

struct StackEntry {
    Particle p;
    double s; // time elapsed within the current record window
};

RecordRow make_row(const std::vector<Particle>& pop, double t, int dim, const SimParams& sp,
                   bool record_M, double lambda, const EigenfunctionHandle* h) {
    RecordRow row;
    row.t = t;
    row.Z = pop.size();
    row.Lr.assign(sp.directions.size(), -std::numeric_limits<double>::infinity());
    row.argmax_r.assign(sp.directions.size(), Vec3{0.0, 0.0, 0.0});
    row.Zd.assign(sp.deltas.size(), 0);
    row.Zdr.assign(sp.directions.size() * sp.deltas.size(), 0);
    double L = -std::numeric_limits<double>::infinity();
    double R = -std::numeric_limits<double>::infinity();
    double hsum = 0.0;
    for (const auto& p : pop) {
        double nx = norm_d(p.x, dim);
        L = std::max(L, nx);
        if (dim == 1) R = std::max(R, p.x[0]);
        for (size_t i = 0; i < sp.directions.size(); ++i) {
            double pr = dot_d(p.x, sp.directions[i], dim);
            if (pr > row.Lr[i]) { row.Lr[i] = pr; row.argmax_r[i] = p.x; }
            for (size_t j = 0; j < sp.deltas.size(); ++j)
                if (pr >= sp.deltas[j] * t) ++row.Zdr[i * sp.deltas.size() + j];
        }
        for (size_t j = 0; j < sp.deltas.size(); ++j)
            if (nx >= sp.deltas[j] * t) ++row.Zd[j];
        if (record_M) hsum += h->eval(p.x.data(), dim);
    }
    row.L = L;
    row.R = (dim == 1) ? R : std::numeric_limits<double>::quiet_NaN();
    if (record_M) {
        row.M = std::exp(lambda * t) * hsum;
        row.has_M = true;
    }
    return row;
}

} // namespace

void step_population(std::vector<Particle>& pop, int dim, double dt, double eps,
                     const BranchingRateMeasure& mu, const OffspringLaw& offspring,
                     Rng& rng, std::uint64_t& next_id, std::size_t& branch_events) {
    double sdt = std::sqrt(dt);
    std::vector<Particle> born;
    for (auto& p : pop) {
        Vec3 xe = p.x;
        for (int i = 0; i < dim; ++i) xe[i] += sdt * rng.normal();
        Vec3 spt{0.0, 0.0, 0.0};
        double dA = pcaf_increment_sampled(mu, dt, eps, p.x.data(), xe.data(), rng, &spt);
        p.A += dA;
        p.x = xe;
        if (dA <= 0.0) continue; // A unchanged, no threshold newly crossed
        // carry the excess A - tau into the next clock: zeroing it would thin
        // the event stream; offspring start on the support point of the step
        while (p.A >= p.tau) {
            ++branch_events;
            int n = offspring.sample(rng);
            std::uint64_t pid = p.id;
            for (int j = 1; j < n; ++j) {
                Particle ch;
                ch.id = next_id++;
                ch.parent = pid;
                ch.x = spt;
                ch.tau = rng.exponential();
                born.push_back(ch);
            }
            p.id = next_id++;
            p.parent = pid;
            p.A -= p.tau;
            p.tau = rng.exponential();
        }
    }
    pop.insert(pop.end(), born.begin(), born.end());
}

ReplicaResult run_replica(const SimParams& sp, const BranchingRateMeasure& mu,
                          const OffspringLaw& offspring, const SpectralResult* spectral,
                          Rng& rng) {
    if (!(sp.dt > 0.0) || !(sp.record_every > 0.0) || !(sp.horizon > 0.0))
        throw std::invalid_argument("run_replica: dt, record_every and horizon must be positive");
    ReplicaResult out;
    bool record_M = spectral && spectral->lambda < 0.0 && spectral->h.has_value();
    double lambda = spectral ? spectral->lambda : 0.0;
    const EigenfunctionHandle* h = record_M ? &*spectral->h : nullptr;

    std::uint64_t next_id = 2;
    std::vector<Particle> pop{init_particle(sp.x0, rng)};
    std::size_t alive = 1;

    out.rows.push_back(make_row(pop, 0.0, sp.dim, sp, record_M, lambda, h));

    // longest pure-diffusion step a particle at distance db from the support
    // may take while keeping the chance of touching it below ~1e-9
    double sig2 = sp.far_field_sigmas * sp.far_field_sigmas;

    int n_rec = int(std::floor(sp.horizon / sp.record_every + 1e-9));
    double t_cur = 0.0;
    std::vector<StackEntry> work, done;
    for (int k = 1; k <= n_rec && !out.cap_hit; ++k) {
        double t_next = double(k) * sp.record_every;
        double window = t_next - t_cur;
        work.clear();
        done.clear();
        work.reserve(pop.size());
        for (auto& p : pop) work.push_back({p, 0.0});
        pop.clear();
        while (!work.empty()) {
            StackEntry e = work.back();
            work.pop_back();
            while (e.s < window - 1e-12) {
                double dtp = sp.dt;
                if (sp.far_field) {
                    double db = dist_to_support(mu, e.p.x, sp.dim) - sp.eps;
                    if (db > 0.0) dtp = std::max(dtp, db * db / sig2);
                }
                bool coarse = dtp > sp.dt * (1.0 + 1e-9);
                dtp = std::min(dtp, window - e.s);
                double sdt = std::sqrt(dtp);
                Vec3 xe = e.p.x;
                for (int i = 0; i < sp.dim; ++i) xe[i] += sdt * rng.normal();
                // coarse steps stay clear of the support: no PCAF accrues
                double dA = 0.0;
                Vec3 spt{0.0, 0.0, 0.0};
                if (!coarse)
                    dA = pcaf_increment_sampled(mu, dtp, sp.eps, e.p.x.data(), xe.data(), rng,
                                                &spt);
                e.p.A += dA;
                e.p.x = xe;
                e.s += dtp;
                if (dA <= 0.0) continue;
                // same overshoot carry as step_population: one increment can
                // cross several exponential thresholds
                while (e.p.A >= e.p.tau) {
                    ++out.branch_events;
                    double t_abs = t_cur + e.s;
                    out.last_branch_time = t_abs;
                    if (t_abs <= sp.burn_in) ++out.events_before_burnin;
                    int n = offspring.sample(rng);
                    alive += std::size_t(n) - 1;
                    if (alive > sp.population_cap) {
                        out.cap_hit = true;
                        out.cap_time = t_abs;
                        return out;
                    }
                    std::uint64_t pid = e.p.id;
                    for (int j = 1; j < n; ++j) {
                        StackEntry ch;
                        ch.p.id = next_id++;
                        ch.p.parent = pid;
                        ch.p.x = spt;
                        ch.p.tau = rng.exponential();
                        ch.p.A = 0.0;
                        ch.s = e.s;
                        work.push_back(ch);
                    }
                    e.p.id = next_id++;
                    e.p.parent = pid;
                    e.p.A -= e.p.tau;
                    e.p.tau = rng.exponential();
                }
            }
            done.push_back(e);
        }
        pop.reserve(done.size());
        for (auto& e : done) pop.push_back(e.p);
        t_cur = t_next;
        out.rows.push_back(make_row(pop, t_cur, sp.dim, sp, record_M, lambda, h));
    }
    return out;
}

std::vector<ReplicaResult> run_ensemble(const SimParams& sp, const BranchingRateMeasure& mu,
                                        const OffspringLaw& offspring,
                                        const SpectralResult* spectral, int replicas,
                                        std::uint64_t seed, std::uint64_t base_stream) {
    if (replicas < 1) throw std::invalid_argument("run_ensemble: replicas must be >= 1");
    std::vector<ReplicaResult> out;
    out.resize(std::size_t(replicas));
    for (int r = 0; r < replicas; ++r) {
        Rng rng(seed, base_stream + std::uint64_t(r));
        out[std::size_t(r)] = run_replica(sp, mu, offspring, spectral, rng);
    }
    return out;
}

RateFit estimate_rate(const std::vector<double>& times, const std::vector<double>& values,
                      double t0, double t1) {
    if (times.size() != values.size())
        throw std::invalid_argument("estimate_rate: times and values differ in length");
    std::vector<double> xs, ys;
    for (size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t0 - 1e-12 || times[i] > t1 + 1e-12) continue;
        if (!(values[i] > 0.0))
            throw std::domain_error("estimate_rate: nonpositive value in fit window");
        xs.push_back(times[i]);
        ys.push_back(std::log(values[i]));
    }
    if (xs.size() < 2) throw std::invalid_argument("estimate_rate: fewer than 2 points in window");
    LineFit f = fit_line(xs, ys);
    RateFit out;
    out.slope = f.slope;
    out.se = f.slope_se;
    out.t0 = t0;
    out.t1 = t1;
    out.n = int(xs.size());
    return out;
}

std::size_t EventSkeleton::count_at(double t) const {
    return std::size_t(std::upper_bound(times.begin(), times.end(), t) - times.begin());
}

EventSkeleton exact_event_skeleton_dirac1d(double c, double x0, double a, double horizon,
                                           Rng& rng) {
    if (!(c > 0.0)) throw std::invalid_argument("exact_event_skeleton_dirac1d: c must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("exact_event_skeleton_dirac1d: horizon must be positive");

    auto nonzero_normal = [&rng]() {
        double n;
        do { n = rng.normal(); } while (n == 0.0);
        return n;
    };
    // inverse local time at level l: first passage of the running maximum,
    // equal in law to the hitting time (l/|N|)^2
    auto inv_local_time = [&](double level) {
        double n = nonzero_normal();
        double q = level / n;
        return q * q;
    };

    EventSkeleton sk;
    std::priority_queue<double, std::vector<double>, std::greater<double>> heap;

    double first = 0.0;
    double d0 = std::abs(x0 - a);
    if (d0 > 0.0) {
        double n = nonzero_normal();
        double q = d0 / n;
        first = q * q; // hitting time of the atom
    }
    first += inv_local_time(rng.exponential() / c);
    if (first <= horizon) heap.push(first);

    while (!heap.empty()) {
        double T = heap.top();
        heap.pop();
        sk.times.push_back(T);
        for (int j = 0; j < 2; ++j) {
            double Tn = T + inv_local_time(rng.exponential() / c);
            if (Tn <= horizon) heap.push(Tn);
        }
    }
    return sk;
}

} // namespace bbm
