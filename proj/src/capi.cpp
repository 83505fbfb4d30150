#include "bbm/bbm.h"

#include <cstring>
#include <new>
#include <stdexcept>
#include <string>

#include "harness.hpp"

struct bbm_config {
    bbm::SimConfig cfg;
};

struct bbm_report {
    bbm::Report rep;
};

namespace {

thread_local std::string g_last_error = "no error";

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
    char* out = new (std::nothrow) char[s.size() + 1];
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// exceptions never cross the C boundary; classify them instead
template <class F>
bbm_status guarded(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        set_error(e.what());
        std::string w = e.what();
        return w.rfind("config: parse failure", 0) == 0 ? BBM_E_PARSE : BBM_E_VALIDATE;
    } catch (const std::bad_alloc&) {
        set_error("out of memory");
        return BBM_E_RUNTIME;
    } catch (const std::exception& e) {
        set_error(e.what());
        std::string w = e.what();
        return w.rfind("config: cannot open", 0) == 0 || w.rfind("cannot write", 0) == 0
                   ? BBM_E_IO
                   : BBM_E_RUNTIME;
    } catch (...) {
        set_error("unknown failure");
        return BBM_E_RUNTIME;
    }
}

} // namespace

extern "C" {

int bbm_abi_version(void) { return 1; }

const char* bbm_last_error(void) { return g_last_error.c_str(); }

bbm_status bbm_config_from_json(const char* json_text, bbm_config** out) {
    if (!json_text || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    return guarded([&]() {
        auto* h = new bbm_config{bbm::load_config_json(json_text)};
        *out = h;
        return BBM_OK;
    });
}

bbm_status bbm_config_from_file(const char* path, bbm_config** out) {
    if (!path || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    return guarded([&]() {
        auto* h = new bbm_config{bbm::load_config_file(path)};
        *out = h;
        return BBM_OK;
    });
}

bbm_status bbm_config_set_seed(bbm_config* cfg, uint64_t seed) {
    if (!cfg) {
        set_error("null config");
        return BBM_E_ARG;
    }
    cfg->cfg.seed = seed;
    return BBM_OK;
}

bbm_status bbm_config_set_replicas(bbm_config* cfg, int replicas) {
    if (!cfg) {
        set_error("null config");
        return BBM_E_ARG;
    }
    if (replicas < 1) {
        set_error("replicas must be at least 1");
        return BBM_E_VALIDATE;
    }
    cfg->cfg.replicas = replicas;
    return BBM_OK;
}

bbm_status bbm_config_set_out_dir(bbm_config* cfg, const char* dir) {
    if (!cfg) {
        set_error("null config");
        return BBM_E_ARG;
    }
    cfg->cfg.out = dir ? dir : "";
    return BBM_OK;
}

bbm_status bbm_config_to_json(const bbm_config* cfg, char** out) {
    if (!cfg || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    return guarded([&]() {
        *out = dup_string(bbm::emit_config(cfg->cfg));
        if (!*out) {
            set_error("out of memory");
            return BBM_E_RUNTIME;
        }
        return BBM_OK;
    });
}

size_t bbm_config_warning_count(const bbm_config* cfg) {
    return cfg ? cfg->cfg.warnings.size() : 0;
}

const char* bbm_config_warning(const bbm_config* cfg, size_t index) {
    if (!cfg || index >= cfg->cfg.warnings.size()) return nullptr;
    return cfg->cfg.warnings[index].c_str();
}

void bbm_config_free(bbm_config* cfg) { delete cfg; }

bbm_status bbm_run(const bbm_config* cfg, bbm_run_mode mode, bbm_report** out) {
    if (!cfg || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    bbm::RunMode m;
    switch (mode) {
        case BBM_RUN_SPECTRAL: m = bbm::RunMode::Spectral; break;
        case BBM_RUN_SIMULATE: m = bbm::RunMode::Simulate; break;
        case BBM_RUN_FK: m = bbm::RunMode::Fk; break;
        case BBM_RUN_PDE: m = bbm::RunMode::Pde; break;
        case BBM_RUN_REPORT: m = bbm::RunMode::Full; break;
        case BBM_RUN_SELFTEST: m = bbm::RunMode::Selftest; break;
        default: set_error("unknown run mode"); return BBM_E_ARG;
    }
    return guarded([&]() {
        auto* h = new bbm_report{bbm::run_scenario(cfg->cfg, m)};
        bbm::emit_report_files(h->rep);
        *out = h;
        return BBM_OK;
    });
}

bbm_status bbm_report_to_json(const bbm_report* rep, char** out) {
    if (!rep || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    return guarded([&]() {
        *out = dup_string(bbm::report_to_json(rep->rep));
        if (!*out) {
            set_error("out of memory");
            return BBM_E_RUNTIME;
        }
        return BBM_OK;
    });
}

int bbm_report_pass(const bbm_report* rep) { return rep && rep->rep.all_pass ? 1 : 0; }

size_t bbm_report_criteria_count(const bbm_report* rep) {
    return rep ? rep->rep.criteria.size() : 0;
}

bbm_status bbm_report_criterion_line(const bbm_report* rep, size_t index, char** out) {
    if (!rep || !out) {
        set_error("null argument");
        return BBM_E_ARG;
    }
    *out = nullptr;
    if (index >= rep->rep.criteria.size()) {
        set_error("criterion index out of range");
        return BBM_E_ARG;
    }
    return guarded([&]() {
        *out = dup_string(bbm::criterion_line(rep->rep.criteria[index]));
        if (!*out) {
            set_error("out of memory");
            return BBM_E_RUNTIME;
        }
        return BBM_OK;
    });
}

void bbm_report_free(bbm_report* rep) { delete rep; }

void bbm_string_free(char* s) { delete[] s; }

} // extern "C"
