/* fpmv - nonlinear Fokker-Planck / McKean-Vlasov solver toolkit.
 *
 * C interface of the shared library. Scenarios are opaque handles created
 * from config files (or raw text); commands run against a handle and write
 * their reports under the scenario output directory. All functions return
 * a status code; fpmv_last_error() holds a thread-local message for the
 * most recent failure on the calling thread.
 */
#ifndef FPMV_H
#define FPMV_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fpmv_status {
    FPMV_OK = 0,
    FPMV_ERROR_VALIDATION = 2, /* bad config, bad arguments, failed preconditions */
    FPMV_ERROR_NUMERIC = 3,    /* solver failures: stalls, non-convergence, breakdowns */
    FPMV_ERROR_BADARG = 4      /* null pointers, unknown commands */
} fpmv_status;

typedef struct fpmv_scenario fpmv_scenario;

typedef struct fpmv_run_options {
    int threads;                       /* worker cap; 0 = hardware concurrency */
    int no_timestamp;                  /* nonzero: omit timestamped header lines */
    int convergence_levels;            /* 0 = scenario value; convergence command only */
    const char* out_dir;               /* NULL = scenario output.dir */
    int has_seed_override;             /* nonzero: seed_override applies */
    unsigned long long seed_override;  /* replaces sde.seed and suite.seed */
} fpmv_run_options;

const char* fpmv_version(void);

/* Message for the last failure on this thread; valid until the next call. */
const char* fpmv_last_error(void);

fpmv_status fpmv_scenario_load(const char* path, fpmv_scenario** out);
fpmv_status fpmv_scenario_parse(const char* text, fpmv_scenario** out);
void fpmv_scenario_free(fpmv_scenario* sc);

/* Sets or replaces one dotted config key; revalidated on the next run. */
fpmv_status fpmv_scenario_override(fpmv_scenario* sc, const char* key, const char* value);

/* command: check | resolve | suite | evolve | expcheck | viscosity |
 *          simulate | compare | convergence.
 * options may be NULL for defaults. */
fpmv_status fpmv_run(fpmv_scenario* sc, const char* command, const fpmv_run_options* options);

#ifdef __cplusplus
}
#endif

#endif /* FPMV_H */
