// extern "C" surface of the shared library; maps exceptions from the C++
// core onto status codes and a thread-local error message.
#include "fpmv/fpmv.h"

#include <string>

#include "common.hpp"
#include "runner.hpp"
#include "scenario.hpp"

#if defined(__GNUC__)
#define FPMV_EXPORT __attribute__((visibility("default")))
#else
#define FPMV_EXPORT
#endif

struct fpmv_scenario {
    fpmv::ConfigMap cfg;
};

namespace {

thread_local std::string t_last_error;

fpmv_status set_error(const std::exception& e, fpmv_status fallback) {
    t_last_error = e.what();
    if (auto* err = dynamic_cast<const fpmv::Error*>(&e))
        return err->kind() == fpmv::ErrorKind::Validation ? FPMV_ERROR_VALIDATION
                                                          : FPMV_ERROR_NUMERIC;
    return fallback;
}

fpmv_status bad_arg(const char* msg) {
    t_last_error = msg;
    return FPMV_ERROR_BADARG;
}

}  // namespace

extern "C" {

FPMV_EXPORT const char* fpmv_version(void) { return "0.1.0"; }

FPMV_EXPORT const char* fpmv_last_error(void) { return t_last_error.c_str(); }

FPMV_EXPORT fpmv_status fpmv_scenario_load(const char* path, fpmv_scenario** out) {
    if (!path || !out) return bad_arg("fpmv_scenario_load: null argument");
    *out = nullptr;
    try {
        auto cfg = fpmv::ConfigMap::parse_file(path);
        (void)fpmv::build_scenario(cfg);  // validate eagerly
        *out = new fpmv_scenario{std::move(cfg)};
        return FPMV_OK;
    } catch (const std::exception& e) {
        return set_error(e, FPMV_ERROR_VALIDATION);
    }
}

FPMV_EXPORT fpmv_status fpmv_scenario_parse(const char* text, fpmv_scenario** out) {
    if (!text || !out) return bad_arg("fpmv_scenario_parse: null argument");
    *out = nullptr;
    try {
        auto cfg = fpmv::ConfigMap::parse_text(text);
        (void)fpmv::build_scenario(cfg);
        *out = new fpmv_scenario{std::move(cfg)};
        return FPMV_OK;
    } catch (const std::exception& e) {
        return set_error(e, FPMV_ERROR_VALIDATION);
    }
}

FPMV_EXPORT void fpmv_scenario_free(fpmv_scenario* sc) { delete sc; }

FPMV_EXPORT fpmv_status fpmv_scenario_override(fpmv_scenario* sc, const char* key,
                                               const char* value) {
    if (!sc || !key || !value) return bad_arg("fpmv_scenario_override: null argument");
    try {
        sc->cfg.set(key, value);
        return FPMV_OK;
    } catch (const std::exception& e) {
        return set_error(e, FPMV_ERROR_VALIDATION);
    }
}

FPMV_EXPORT fpmv_status fpmv_run(fpmv_scenario* sc, const char* command,
                                 const fpmv_run_options* options) {
    if (!sc || !command) return bad_arg("fpmv_run: null argument");
    if (!fpmv::is_command(command)) return bad_arg("fpmv_run: unknown command");
    try {
        fpmv::RunOptions opts;
        if (options) {
            opts.threads = options->threads;
            opts.no_timestamp = options->no_timestamp != 0;
            if (options->convergence_levels > 0)
                opts.convergence_levels = options->convergence_levels;
            if (options->out_dir) opts.out_dir = std::string(options->out_dir);
            if (options->has_seed_override)
                opts.seed_override = static_cast<std::uint64_t>(options->seed_override);
        }
        fpmv::run_command(sc->cfg, command, opts);
        return FPMV_OK;
    } catch (const std::exception& e) {
        return set_error(e, FPMV_ERROR_NUMERIC);
    }
}

}  // extern "C"
