// fpmv command-line front end; consumes only the C API of the shared
// library. Exit codes: 0 success, 2 validation error, 3 numerical failure.
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fpmv/fpmv.h"

int main(int argc, char** argv) {
    CLI::App app{"fpmv - nonlinear Fokker-Planck / McKean-Vlasov solver toolkit"};
    app.footer("commands: check resolve suite evolve expcheck viscosity simulate compare "
               "convergence");

    std::string command, scenario_path;
    int threads = 0;
    bool no_timestamp = false;
    int double_l = 0;
    std::string out_dir;
    std::uint64_t seed_override = 0;
    bool has_seed = false;

    app.add_option("command", command, "command to run")->required();
    app.add_option("scenario", scenario_path, "scenario config file")->required();
    app.add_option("--threads", threads, "cap on worker threads (0 = all cores)");
    app.add_flag("--no-timestamp", no_timestamp, "omit timestamped header lines from outputs");
    app.add_option("--double-L", double_l, "levels for the convergence command");
    app.add_option("--out", out_dir, "override the scenario output directory");
    auto* seed_opt =
        app.add_option("--seed-override", seed_override, "override sde.seed and suite.seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the error
        return code == 0 ? 0 : 2;
    }
    has_seed = seed_opt->count() > 0;

    fpmv_scenario* sc = nullptr;
    fpmv_status st = fpmv_scenario_load(scenario_path.c_str(), &sc);
    if (st != FPMV_OK) {
        std::fprintf(stderr, "fpmv: %s\n", fpmv_last_error());
        return st == FPMV_ERROR_NUMERIC ? 3 : 2;
    }

    fpmv_run_options opts{};
    opts.threads = threads;
    opts.no_timestamp = no_timestamp ? 1 : 0;
    opts.convergence_levels = double_l;
    opts.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    opts.has_seed_override = has_seed ? 1 : 0;
    opts.seed_override = seed_override;

    st = fpmv_run(sc, command.c_str(), &opts);
    fpmv_scenario_free(sc);
    if (st != FPMV_OK) {
        std::fprintf(stderr, "fpmv: %s\n", fpmv_last_error());
        return st == FPMV_ERROR_NUMERIC ? 3 : 2;
    }
    return 0;
}
