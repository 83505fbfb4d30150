// Command-line front end. Talks to the library exclusively through the C
// interface in bbm/bbm.h, so it doubles as a smoke test of that boundary.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "bbm/bbm.h"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int replicas = 0;
    bool json = false;
};

void attach_common(CLI::App* sub, CommonOpts& o, bool config_required) {
    auto* copt = sub->add_option("-c,--config", o.config_path, "JSON config file");
    if (config_required) copt->required();
    sub->add_option("--out", o.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", o.seed, "master seed (overrides config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
    sub->add_option("--replicas", o.replicas, "replica count (overrides config)");
    sub->add_flag("--json", o.json, "print the full report JSON instead of one line per check");
}

int fail(const char* stage) {
    std::fprintf(stderr, "bbm: %s: %s\n", stage, bbm_last_error());
    return 2;
}

int run_mode(const CommonOpts& o, bbm_run_mode mode) {
    bbm_config* cfg = nullptr;
    bbm_status st;
    if (!o.config_path.empty()) {
        st = bbm_config_from_file(o.config_path.c_str(), &cfg);
    } else {
        // selftest runs fine on the default preset
        st = bbm_config_from_json("{\"scenario\": \"dirac1d\", \"params\": {\"c\": 1.0}}", &cfg);
    }
    if (st != BBM_OK) return fail("config");

    if (o.seed_set && bbm_config_set_seed(cfg, o.seed) != BBM_OK) {
        bbm_config_free(cfg);
        return fail("config");
    }
    if (o.replicas > 0 && bbm_config_set_replicas(cfg, o.replicas) != BBM_OK) {
        bbm_config_free(cfg);
        return fail("config");
    }
    if (!o.out_dir.empty() && bbm_config_set_out_dir(cfg, o.out_dir.c_str()) != BBM_OK) {
        bbm_config_free(cfg);
        return fail("config");
    }

    for (size_t i = 0; i < bbm_config_warning_count(cfg); ++i)
        std::fprintf(stderr, "warning: %s\n", bbm_config_warning(cfg, i));

    bbm_report* rep = nullptr;
    st = bbm_run(cfg, mode, &rep);
    if (st != BBM_OK) {
        bbm_config_free(cfg);
        return fail("run");
    }

    if (o.json) {
        char* text = nullptr;
        if (bbm_report_to_json(rep, &text) != BBM_OK) {
            bbm_report_free(rep);
            bbm_config_free(cfg);
            return fail("report");
        }
        std::fputs(text, stdout);
        bbm_string_free(text);
    } else {
        for (size_t i = 0; i < bbm_report_criteria_count(rep); ++i) {
            char* line = nullptr;
            if (bbm_report_criterion_line(rep, i, &line) == BBM_OK) {
                std::puts(line);
                bbm_string_free(line);
            }
        }
    }

    int pass = bbm_report_pass(rep);
    if (!o.json)
        std::printf("%s (%zu checks)\n", pass ? "PASS" : "FAIL", bbm_report_criteria_count(rep));
    bbm_report_free(rep);
    bbm_config_free(cfg);
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"branching Brownian motion with singular branching rates: "
                 "spectral routes, particle ensembles, dual expectations, wave fronts"};
    app.require_subcommand(1);

    CommonOpts spectral_o, simulate_o, fk_o, pde_o, report_o, selftest_o;
    attach_common(app.add_subcommand("spectral", "eigenvalue by independent routes"), spectral_o, true);
    attach_common(app.add_subcommand("simulate", "particle ensemble and rate checks"), simulate_o, true);
    attach_common(app.add_subcommand("fk", "weighted-path expectations (dirac1d)"), fk_o, true);
    attach_common(app.add_subcommand("pde", "front and tail of the semilinear equation (d=1)"), pde_o, true);
    attach_common(app.add_subcommand("report", "spectral + ensemble + duality, full emission"), report_o, true);
    attach_common(app.add_subcommand("selftest", "fast internal consistency suite"), selftest_o, false);

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("spectral")) return run_mode(spectral_o, BBM_RUN_SPECTRAL);
    if (app.got_subcommand("simulate")) return run_mode(simulate_o, BBM_RUN_SIMULATE);
    if (app.got_subcommand("fk")) return run_mode(fk_o, BBM_RUN_FK);
    if (app.got_subcommand("pde")) return run_mode(pde_o, BBM_RUN_PDE);
    if (app.got_subcommand("report")) return run_mode(report_o, BBM_RUN_REPORT);
    if (app.got_subcommand("selftest")) return run_mode(selftest_o, BBM_RUN_SELFTEST);
    return 2;
}
