#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "common.hpp"

namespace fs = std::filesystem;

namespace fpmv {

const char* const kCommands[] = {"check",     "resolve",  "suite",    "evolve",     "expcheck",
                                 "viscosity", "simulate", "compare",  "convergence"};
const int kCommandCount = 9;

bool is_command(const std::string& name) {
    for (int i = 0; i < kCommandCount; ++i)
        if (name == kCommands[i]) return true;
    return false;
}

namespace {

RegularizedSet make_effective(const Scenario& sc, const CoefficientSet& cs) {
    if (cs.mode == CoeffMode::DegenerateXIndependent)
        return add_viscosity(cs, sc.viscosity_eps_list.back());
    if (sc.mollifier_eps > 0.0) return mollify(cs, sc.mollifier_eps, sc.mollifier_nodes);
    return RegularizedSet(cs);
}

struct Prepared {
    RegularizedSet eff;
    CoefficientSet resolved;  // base coefficients with resolved bounds
    HypothesisReport report;
};

Prepared prepare(const Scenario& sc, bool gate) {
    RegularizedSet eff0 = make_effective(sc, sc.coeffs);
    HypothesisReport rep = check_hypotheses(eff0, sc.check_box(), sc.check.samples, 0);
    if (gate && !rep.all_pass && !sc.check_override)
        throw ValidationError(
            "hypothesis check failed (set check.override = true to proceed):\n" + rep.to_text());
    CoefficientSet resolved = with_resolved_bounds(sc.coeffs, rep);
    return {make_effective(sc, resolved), std::move(resolved), std::move(rep)};
}

void write_hypotheses_csv(const std::string& path, const HypothesisReport& rep, int dim,
                          bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "check,value,bound,pass,note,witness_u");
    for (int k = 0; k < dim; ++k) std::fprintf(fp, ",witness_x%d", k + 1);
    std::fprintf(fp, "\n");
    for (const auto& c : rep.checks) {
        std::fprintf(fp, "%s,%s,%s,%d,%s", c.name.c_str(), fmt17(c.value).c_str(),
                     fmt17(c.bound).c_str(), c.pass ? 1 : 0, c.note.c_str());
        if (c.witness_x.empty()) {
            for (int k = 0; k <= dim; ++k) std::fprintf(fp, ",");
        } else {
            std::fprintf(fp, ",%s", fmt17(c.witness_u).c_str());
            for (int k = 0; k < dim; ++k) std::fprintf(fp, ",%s", fmt17(c.witness_x[k]).c_str());
        }
        std::fprintf(fp, "\n");
    }
    std::fclose(fp);
}

void write_convergence_csv(const std::string& path, const std::vector<double>& Ls,
                           const std::vector<int>& ns, const std::vector<double>& leaks,
                           const std::vector<double>& diffs, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "level,L,n,total_leak,l1_diff_to_next\n");
    for (std::size_t k = 0; k < Ls.size(); ++k) {
        std::fprintf(fp, "%zu,%s,%d,%s,", k, fmt17(Ls[k]).c_str(), ns[k], fmt17(leaks[k]).c_str());
        if (k < diffs.size()) std::fprintf(fp, "%s", fmt17(diffs[k]).c_str());
        std::fprintf(fp, "\n");
    }
    std::fclose(fp);
}

/// L1 distance between a final field and the restriction of a double-box
/// field onto the common (smaller) box, including the mass outside it.
double l1_dist_nested(const DensityField& small_f, const DensityField& big_f) {
    const Grid& gs = small_f.grid;
    const Grid& gb = big_f.grid;
    const int d = gs.dim;
    const int off = gs.cells_per_axis / 2;  // n doubles with L, h fixed
    std::vector<int> mi(d), mj(d);
    std::vector<char> covered(big_f.values.size(), 0);
    double acc = 0.0;
    for (long c = 0; c < gs.total_cells(); ++c) {
        gs.unflatten(c, mi.data());
        for (int k = 0; k < d; ++k) mj[k] = mi[k] + off;
        long cb = gb.flatten(mj.data());
        covered[cb] = 1;
        acc += std::fabs(small_f.values[c] - big_f.values[cb]);
    }
    for (std::size_t cb = 0; cb < big_f.values.size(); ++cb)
        if (!covered[cb]) acc += std::fabs(big_f.values[cb]);
    return acc * gs.cell_volume();
}

void cmd_check(const Scenario& sc, bool ts) {
    RegularizedSet eff = make_effective(sc, sc.coeffs);
    HypothesisReport rep = check_hypotheses(eff, sc.check_box(), sc.check.samples, 0);
    std::fputs(rep.to_text().c_str(), stdout);
    write_hypotheses_csv(sc.out_dir + "/hypotheses.csv", rep, sc.dim, ts);
}

void cmd_resolve(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    DensityField u0 = sc.initial_density();
    ResolventResult r = resolve_extended(u0, sc.resolve_lambda, sc.resolvent, p.eff);
    write_density_csv(sc.out_dir + "/resolve.csv", r.u, ts);
    std::printf("resolve: lambda=%s outer=%d substeps=%d increment=%s residual=%s mass_drift=%s "
                "min=%s leak=%s\n",
                fmt17(sc.resolve_lambda).c_str(), r.diag.outer_iterations, r.diag.lambda_substeps,
                fmt17(r.diag.final_increment).c_str(), fmt17(r.diag.nonlinear_residual).c_str(),
                fmt17(r.diag.mass_defect_raw).c_str(), fmt17(r.diag.min_value).c_str(),
                fmt17(r.diag.dirichlet_leak).c_str());
}

void cmd_suite(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    SuiteReport rep = accretivity_suite(p.eff, sc.grid(), sc.suite.lambdas, sc.suite.trials,
                                        sc.suite.seed, sc.resolvent);
    write_suite_csv(sc.out_dir + "/suite.csv", rep, ts);
    if (!rep.failures.empty()) {
        fs::create_directories(sc.out_dir + "/replay");
        for (const auto& f : rep.failures) {
            std::string base = sc.out_dir + "/replay/lambda_" + fmt17(f.lambda) + "_trial_" +
                               std::to_string(f.trial);
            write_density_csv(base + "_f1.csv", f.f1, ts);
            write_density_csv(base + "_f2.csv", f.f2, ts);
        }
    }
    std::printf("suite: %zu checks, %d violations\n", rep.rows.size(), rep.violations);
}

void cmd_evolve(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    EvolutionTrace trace = evolve(sc.initial_density(), sc.T, sc.n_steps, p.eff, sc.resolvent);
    write_trace(sc.out_dir + "/trace", trace, ts);
    std::printf("evolve: %d steps, final mass %s, min %s, total leak %s\n", sc.n_steps,
                fmt17(trace.snapshots.back().mass()).c_str(),
                fmt17(trace.min_snapshot_value()).c_str(), fmt17(trace.total_leak()).c_str());
}

void cmd_expcheck(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    ConvergenceReport rep = exponential_check(sc.initial_density(), sc.T, sc.expcheck_n_list,
                                              p.eff, sc.resolvent);
    write_expcheck_csv(sc.out_dir + "/expcheck.csv", sc.expcheck_n_list, rep, ts);
    std::printf("expcheck: cauchy=%s\n", rep.cauchy ? "true" : "false");
}

void cmd_viscosity(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    auto [trace, rep] = vanishing_viscosity(sc.initial_density(), sc.T, sc.n_steps, p.resolved,
                                            sc.viscosity_eps_list, sc.resolvent);
    write_viscosity_csv(sc.out_dir + "/viscosity.csv", rep, ts);
    write_trace(sc.out_dir + "/trace", trace, ts);
    std::printf("viscosity: cauchy=%s min_extrapolated=%s%s%s\n", rep.cauchy ? "true" : "false",
                fmt17(rep.min_extrapolated).c_str(), rep.warning.empty() ? "" : " ",
                rep.warning.c_str());
}

std::vector<ParticleEnsemble> run_simulation(const Scenario& sc, const Prepared& p,
                                             EvolutionTrace& trace_out) {
    trace_out = evolve(sc.initial_density(), sc.T, sc.n_steps, p.eff, sc.resolvent);
    SimulateOptions opts;
    opts.n_particles = sc.sde.N;
    opts.dt = sc.sde.dt;
    opts.seed = sc.sde.seed;
    opts.convention = sc.sde.convention;
    opts.record_stride = sc.sde.record_stride;
    return simulate(trace_out, p.resolved, opts);
}

void cmd_simulate(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    EvolutionTrace trace;
    auto ensembles = run_simulation(sc, p, trace);
    write_trace(sc.out_dir + "/trace", trace, ts);
    fs::remove_all(sc.out_dir + "/ensemble");
    fs::create_directories(sc.out_dir + "/ensemble");
    char name[32];
    for (std::size_t i = 0; i < ensembles.size(); ++i) {
        std::snprintf(name, sizeof(name), "/ensemble/ens_%06zu.csv", i);
        write_ensemble_csv(sc.out_dir + name, ensembles[i], ts);
    }
    std::printf("simulate: %zu ensembles of %ld particles, final escaped fraction %s\n",
                ensembles.size(), sc.sde.N, fmt17(ensembles.back().escaped_fraction).c_str());
}

void cmd_compare(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    EvolutionTrace trace;
    auto ensembles = run_simulation(sc, p, trace);
    std::vector<double> times = sc.compare_times;
    if (times.empty())
        for (const auto& e : ensembles) times.push_back(e.time);
    auto rows = superposition_check(trace, ensembles, times);
    write_comparison_csv(sc.out_dir + "/comparison.csv", rows, sc.dim, ts);
    std::printf("compare: %zu rows, final W1_axis1 %s\n", rows.size(),
                rows.empty() ? "n/a" : fmt17(rows.back().w1_axis[0]).c_str());
}

void cmd_convergence(const Scenario& sc, bool ts) {
    Prepared p = prepare(sc, true);
    const int levels = sc.convergence_levels;
    std::vector<DensityField> finals(levels);
    std::vector<double> Ls(levels), leaks(levels);
    std::vector<int> ns(levels);
    for (int k = 0; k < levels; ++k) {
        Ls[k] = sc.L * std::pow(2.0, k);
        ns[k] = sc.n << k;
        Grid g(sc.dim, Ls[k], ns[k]);
        EvolutionTrace t = evolve(sc.initial_density(g), sc.T, sc.n_steps, p.eff, sc.resolvent);
        finals[k] = t.snapshots.back();
        leaks[k] = t.total_leak();
    }
    std::vector<double> diffs;
    for (int k = 0; k + 1 < levels; ++k) diffs.push_back(l1_dist_nested(finals[k], finals[k + 1]));
    write_convergence_csv(sc.out_dir + "/convergence.csv", Ls, ns, leaks, diffs, ts);
    std::printf("convergence: %d levels", levels);
    for (double dv : diffs) std::printf(" %s", fmt17(dv).c_str());
    std::printf("\n");
}

}  // namespace

void run_command(const ConfigMap& cfg, const std::string& command, const RunOptions& opts) {
    if (!is_command(command)) throw ValidationError("unknown command '" + command + "'");
    set_thread_cap(opts.threads);

    Scenario sc = build_scenario(cfg);
    if (opts.seed_override) {
        sc.sde.seed = *opts.seed_override;
        sc.suite.seed = *opts.seed_override;
    }
    if (opts.out_dir) sc.out_dir = *opts.out_dir;
    if (opts.convergence_levels) sc.convergence_levels = *opts.convergence_levels;

    fs::create_directories(sc.out_dir);
    std::error_code ec;
    fs::remove(sc.out_dir + "/FAILED", ec);

    const bool ts = !opts.no_timestamp;
    try {
        if (command == "check") cmd_check(sc, ts);
        else if (command == "resolve") cmd_resolve(sc, ts);
        else if (command == "suite") cmd_suite(sc, ts);
        else if (command == "evolve") cmd_evolve(sc, ts);
        else if (command == "expcheck") cmd_expcheck(sc, ts);
        else if (command == "viscosity") cmd_viscosity(sc, ts);
        else if (command == "simulate") cmd_simulate(sc, ts);
        else if (command == "compare") cmd_compare(sc, ts);
        else if (command == "convergence") cmd_convergence(sc, ts);
    } catch (const std::exception& e) {
        std::FILE* fp = std::fopen((sc.out_dir + "/FAILED").c_str(), "w");
        if (fp) {
            std::fprintf(fp, "%s\n", e.what());
            std::fclose(fp);
        }
        throw;
    }
}

}  // namespace fpmv
