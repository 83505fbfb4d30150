#pragma once
// Configuration loading/validation, scenario presets, ensemble orchestration,
// statistical checks, and report/CSV emission. Everything here is
// deterministic given (config, seed).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bbm_sim.hpp"
#include "measures.hpp"
#include "spectral.hpp"

namespace bbm {

struct SimConfig {
    std::string scenario;
    std::map<std::string, double> params; // scenario parameters, validated per preset
    int dimension = 1;
    OffspringLaw offspring = OffspringLaw::binary();
    std::string offspring_desc = "binary";

    double dt = 1e-3;
    double eps = 5e-3;
    double horizon = 14.0;
    int replicas = 200;
    std::size_t population_cap = 200000;
    double record_every = 0.5;
    double burn_in = 2.0;
    std::uint64_t seed = 12345;

    std::vector<double> deltas;
    std::vector<Vec3> directions;
    Vec3 x0{0.0, 0.0, 0.0};
    std::string out; // output directory; empty = no files

    // pde mode discretization; the mollifier needs a few cells per width
    double pde_h = 0.0125;
    double pde_dt = 0.005;
    double pde_width = 0.05;

    std::vector<std::string> warnings; // filled during validation
};

SimConfig load_config_file(const std::string& path);
SimConfig load_config_json(const std::string& text);
// canonical JSON encoding; load(emit(c)) reproduces c
std::string emit_config(const SimConfig& c);

BranchingRateMeasure scenario_measure(const SimConfig& c);

// principal eigenvalue by at least two independent routes per scenario
struct SpectralBlock {
    std::vector<std::pair<std::string, double>> methods; // route name -> lambda
    double lambda = 0.0; // adopted value (first route)
    double speed = 0.0;
    std::string formula; // provenance of the adopted route
    std::optional<EigenfunctionHandle> h;
    double agreement = 0.0;     // worst pairwise |difference|
    double agreement_tol = 0.0; // route-dependent
    std::optional<double> threshold_c; // critical coupling where applicable
    std::vector<std::pair<double, double>> big_lambda; // delta -> Lambda_delta
};

SpectralBlock spectral_block(const SimConfig& c);

struct CriterionRow {
    std::string id;
    std::string kind;    // spectral | rate | duality | martingale | qualitative | info
    std::string formula; // provenance of the theory value
    double theory = 0.0;
    double measured = 0.0;
    double tol = 0.0;
    double se = 0.0;
    bool pass = false;
};

struct FkTableRow {
    double t = 0.0;
    double delta = 0.0; // 0 for the all-space event
    std::string method;
    double value = 0.0;
    double se = 0.0;
};

struct Report {
    SimConfig config;
    SpectralBlock spectral;
    bool has_sim = false;
    std::vector<CriterionRow> criteria;
    std::vector<ReplicaResult> replicas; // kept for CSV emission
    std::vector<FkTableRow> fk_rows;     // fk mode
    std::vector<std::pair<double, double>> front_rows;    // pde mode: T, y_half
    std::vector<std::array<double, 3>> tail_rows;         // pde mode: T, y, 1-u
    std::vector<std::array<double, 3>> pde_u_rows;        // pde mode: T, y, u
    int replicas_used = 0;          // after cap / conditioning exclusions
    int cap_terminated = 0;
    int discarded_conditioning = 0; // d >= 3 surrogate conditioning
    bool all_pass = true;
    std::string mode;
};

enum class RunMode { Spectral, Simulate, Fk, Pde, Full, Selftest };

Report run_scenario(const SimConfig& c, RunMode mode);

std::string report_to_json(const Report& r);
// writes report.json, series.csv, rates.dat (and fk/pde CSVs per mode) into
// config.out; byte-identical for identical config+seed
void emit_report_files(const Report& r);

// "[PASS] id measured=... theory=... tol=..." one-line rendering
std::string criterion_line(const CriterionRow& c);

} // namespace bbm
