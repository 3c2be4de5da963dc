// Exercises the shared-library C surface end to end, including the CLI
// binary (exit codes, output files, determinism of --no-timestamp runs).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fpmv/fpmv.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyScenario =
    "dim = 1\n"
    "grid.L = 6.0\n"
    "grid.n = 64\n"
    "coeff.mode = nondegenerate\n"
    "coeff.gamma = 1.0\n"
    "coeff.a.1.1 = \"1\"\n"
    "coeff.b.1 = \"tanh(u)\"\n"
    "coeff.b_inf = 1.0\n"
    "initial.density = \"exp(-x1^2/0.5)\"\n"
    "time.T = 0.25\n"
    "time.n_steps = 8\n"
    "sde.N = 2000\n"
    "sde.dt = 1e-2\n"
    "sde.seed = 99\n"
    "suite.trials = 10\n"
    "suite.lambdas = 0.05\n";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_root() {
    auto p = fs::temp_directory_path() / "fpmv_capi_tests";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("version and error text") {
    CHECK(std::string(fpmv_version()) == "0.1.0");
    fpmv_scenario* sc = nullptr;
    CHECK(fpmv_scenario_load("/definitely/not/there.cfg", &sc) == FPMV_ERROR_VALIDATION);
    CHECK(sc == nullptr);
    CHECK(std::string(fpmv_last_error()).find("not/there.cfg") != std::string::npos);
    CHECK(fpmv_scenario_load(nullptr, &sc) == FPMV_ERROR_BADARG);
}

TEST_CASE("parse, override, run check and evolve") {
    fpmv_scenario* sc = nullptr;
    REQUIRE(fpmv_scenario_parse(kTinyScenario, &sc) == FPMV_OK);

    auto out = temp_root() / "run1";
    fs::remove_all(out);
    REQUIRE(fpmv_scenario_override(sc, "output.dir", out.string().c_str()) == FPMV_OK);

    fpmv_run_options opts{};
    opts.no_timestamp = 1;
    CHECK(fpmv_run(sc, "check", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "hypotheses.csv"));

    CHECK(fpmv_run(sc, "evolve", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "trace" / "meta.csv"));
    int snaps = 0;
    for (auto& e : fs::directory_iterator(out / "trace"))
        if (e.path().filename().string().rfind("snap_", 0) == 0) ++snaps;
    CHECK(snaps == 9);  // n_steps + 1

    CHECK(fpmv_run(sc, "frobnicate", &opts) == FPMV_ERROR_BADARG);
    fpmv_scenario_free(sc);
}

TEST_CASE("validation failures map to status 2") {
    fpmv_scenario* sc = nullptr;
    CHECK(fpmv_scenario_parse("dim = 1\n", &sc) == FPMV_ERROR_VALIDATION);
    CHECK(sc == nullptr);
    CHECK(std::string(fpmv_last_error()).find("grid.L") != std::string::npos);

    // hypothesis gate: drift without override fails validation at run time
    std::string gated = kTinyScenario;
    gated += "check.samples = 1500\n";
    REQUIRE(fpmv_scenario_parse(gated.c_str(), &sc) == FPMV_OK);
    REQUIRE(fpmv_scenario_override(sc, "coeff.b.1", "\"1\"") == FPMV_OK);
    auto out = temp_root() / "gated";
    fpmv_scenario_override(sc, "output.dir", out.string().c_str());
    fpmv_run_options opts{};
    opts.no_timestamp = 1;
    CHECK(fpmv_run(sc, "evolve", &opts) == FPMV_ERROR_VALIDATION);
    REQUIRE(fpmv_scenario_override(sc, "check.override", "true") == FPMV_OK);
    CHECK(fpmv_run(sc, "evolve", &opts) == FPMV_OK);
    fpmv_scenario_free(sc);
}

TEST_CASE("numeric failures map to status 3 and leave a FAILED marker") {
    fpmv_scenario* sc = nullptr;
    REQUIRE(fpmv_scenario_parse(kTinyScenario, &sc) == FPMV_OK);
    auto out = temp_root() / "numfail";
    fs::remove_all(out);
    fpmv_scenario_override(sc, "output.dir", out.string().c_str());
    // resolvent far beyond the admissible bound with a starved iteration cap
    fpmv_scenario_override(sc, "resolvent.lambda", "40.0");
    fpmv_scenario_override(sc, "resolvent.max_outer", "1");
    fpmv_run_options opts{};
    opts.no_timestamp = 1;
    CHECK(fpmv_run(sc, "resolve", &opts) == FPMV_ERROR_NUMERIC);
    CHECK(fs::exists(out / "FAILED"));
    fpmv_scenario_free(sc);
}

TEST_CASE("seed override changes outputs, fixed seeds reproduce them") {
    fpmv_scenario* sc = nullptr;
    REQUIRE(fpmv_scenario_parse(kTinyScenario, &sc) == FPMV_OK);
    auto out_a = temp_root() / "det_a";
    auto out_b = temp_root() / "det_b";
    auto out_c = temp_root() / "det_c";
    for (auto& o : {out_a, out_b, out_c}) fs::remove_all(o);

    fpmv_run_options opts{};
    opts.no_timestamp = 1;

    fpmv_scenario_override(sc, "output.dir", out_a.string().c_str());
    REQUIRE(fpmv_run(sc, "compare", &opts) == FPMV_OK);
    fpmv_scenario_override(sc, "output.dir", out_b.string().c_str());
    REQUIRE(fpmv_run(sc, "compare", &opts) == FPMV_OK);
    CHECK(slurp(out_a / "comparison.csv") == slurp(out_b / "comparison.csv"));

    opts.has_seed_override = 1;
    opts.seed_override = 31337;
    fpmv_scenario_override(sc, "output.dir", out_c.string().c_str());
    REQUIRE(fpmv_run(sc, "compare", &opts) == FPMV_OK);
    CHECK(slurp(out_a / "comparison.csv") != slurp(out_c / "comparison.csv"));
    fpmv_scenario_free(sc);
}

TEST_CASE("remaining commands write their fixed-name reports") {
    fpmv_scenario* sc = nullptr;
    REQUIRE(fpmv_scenario_parse(kTinyScenario, &sc) == FPMV_OK);
    auto out = temp_root() / "cmds";
    fs::remove_all(out);
    fpmv_scenario_override(sc, "output.dir", out.string().c_str());
    fpmv_scenario_override(sc, "expcheck.n_list", "4, 8, 16");
    fpmv_run_options opts{};
    opts.no_timestamp = 1;

    CHECK(fpmv_run(sc, "resolve", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "resolve.csv"));
    CHECK(fpmv_run(sc, "suite", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "suite.csv"));
    CHECK(fpmv_run(sc, "expcheck", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "expcheck.csv"));
    CHECK(fpmv_run(sc, "simulate", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "ensemble" / "ens_000000.csv"));
    CHECK(fs::exists(out / "ensemble" / "ens_000008.csv"));
    opts.convergence_levels = 2;
    CHECK(fpmv_run(sc, "convergence", &opts) == FPMV_OK);
    CHECK(fs::exists(out / "convergence.csv"));
    fpmv_scenario_free(sc);

    // viscosity needs a degenerate scenario
    const char* degenerate =
        "dim = 1\n"
        "grid.L = 5.0\n"
        "grid.n = 64\n"
        "coeff.mode = degenerate_x_independent\n"
        "coeff.a.1.1 = \"min(u,1)\"\n"
        "coeff.b.1 = \"0\"\n"
        "initial.density = \"max(0.36 - x1^2/12, 0)\"\n"
        "time.T = 0.25\n"
        "time.n_steps = 8\n"
        "regularization.viscosity_eps = 0.04, 0.02, 0.01\n";
    REQUIRE(fpmv_scenario_parse(degenerate, &sc) == FPMV_OK);
    auto out2 = temp_root() / "visc";
    fs::remove_all(out2);
    fpmv_scenario_override(sc, "output.dir", out2.string().c_str());
    CHECK(fpmv_run(sc, "viscosity", &opts) == FPMV_OK);
    CHECK(fs::exists(out2 / "viscosity.csv"));
    CHECK(fs::exists(out2 / "trace" / "meta.csv"));
    fpmv_scenario_free(sc);
}

#ifdef FPMV_CLI_PATH
TEST_CASE("CLI: exit codes and byte-identical reruns under --no-timestamp") {
    auto dir = temp_root();
    auto cfg_path = dir / "tiny.cfg";
    {
        std::ofstream out(cfg_path);
        out << kTinyScenario;
    }
    auto run = [&](const std::string& args) {
        std::string cmd = std::string(FPMV_CLI_PATH) + " " + args + " > /dev/null 2>&1";
        int rc = std::system(cmd.c_str());
        return WEXITSTATUS(rc);
    };

    auto out1 = dir / "cli1";
    auto out2 = dir / "cli2";
    fs::remove_all(out1);
    fs::remove_all(out2);
    CHECK(run("evolve " + cfg_path.string() + " --no-timestamp --out " + out1.string()) == 0);
    CHECK(run("evolve " + cfg_path.string() + " --no-timestamp --out " + out2.string()) == 0);
    CHECK(slurp(out1 / "trace" / "snap_000008.csv") == slurp(out2 / "trace" / "snap_000008.csv"));
    CHECK(slurp(out1 / "trace" / "meta.csv") == slurp(out2 / "trace" / "meta.csv"));

    // validation error -> 2
    auto bad_cfg = dir / "bad.cfg";
    {
        std::ofstream out(bad_cfg);
        out << "dim = 1\n";
    }
    CHECK(run("evolve " + bad_cfg.string()) == 2);
    // unknown command -> 2
    CHECK(run("explode " + cfg_path.string()) == 2);
    // numeric failure -> 3
    auto stall_cfg = dir / "stall.cfg";
    {
        std::ofstream out(stall_cfg);
        out << kTinyScenario << "resolvent.lambda = 40.0\nresolvent.max_outer = 1\n";
    }
    CHECK(run("resolve " + stall_cfg.string() + " --out " + (dir / "stall_out").string()) == 3);
}
#endif
