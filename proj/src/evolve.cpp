#include "evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "common.hpp"

namespace fpmv {

double EvolutionTrace::total_leak() const {
    double s = 0.0;
    for (const auto& st : steps) s += std::fabs(st.dirichlet_leak);
    return s;
}

double EvolutionTrace::min_snapshot_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : snapshots) m = std::min(m, s.min_value());
    return m;
}

EvolutionTrace evolve(const DensityField& u0, double T, int n_steps, const RegularizedSet& coeffs,
                      const ResolventParams& params) {
    if (!(T > 0.0)) throw ValidationError("evolve: T must be > 0");
    if (n_steps < 1) throw ValidationError("evolve: n_steps must be >= 1");
    for (double v : u0.values)
        if (!std::isfinite(v)) throw ValidationError("evolve: initial state must be finite");

    const double ht = T / n_steps;
    EvolutionTrace trace;
    trace.grid = u0.grid;
    trace.T = T;
    trace.n_steps = n_steps;
    trace.times.reserve(n_steps + 1);
    trace.snapshots.reserve(n_steps + 1);
    trace.times.push_back(0.0);
    trace.snapshots.push_back(u0);

    DensityField u = u0;
    for (int i = 1; i <= n_steps; ++i) {
        ResolventResult r;
        try {
            r = resolve_extended(u, ht, params, coeffs);
        } catch (const Error& e) {
            throw Error(e.kind(), "evolve failed at step " + std::to_string(i) + ": " + e.what());
        }
        StepDiagnostics sd;
        sd.step = i;
        sd.time = i * ht;
        sd.outer_iterations = r.diag.outer_iterations;
        sd.lambda_substeps = r.diag.lambda_substeps;
        sd.mass = r.u.mass();
        sd.min_value = r.diag.min_value;
        sd.l1_increment = l1_dist(r.u, u);
        sd.dirichlet_leak = r.diag.dirichlet_leak;
        trace.steps.push_back(sd);
        u = std::move(r.u);
        trace.times.push_back(sd.time);
        trace.snapshots.push_back(u);
    }
    return trace;
}

ConvergenceReport exponential_check(const DensityField& u0, double T, std::span<const int> n_list,
                                    const RegularizedSet& coeffs, const ResolventParams& params) {
    if (n_list.size() < 3) throw ValidationError("exponential check needs at least 3 step counts");
    for (std::size_t k = 0; k + 1 < n_list.size(); ++k) {
        if (n_list[k] < 1 || n_list[k + 1] % n_list[k] != 0 || n_list[k + 1] <= n_list[k])
            throw ValidationError("exponential check: each step count must divide the next");
    }

    std::vector<DensityField> finals(n_list.size(), DensityField{});
    parallel_for(static_cast<long>(n_list.size()), [&](long b, long e) {
        for (long k = b; k < e; ++k)
            finals[k] = evolve(u0, T, n_list[k], coeffs, params).snapshots.back();
    });

    ConvergenceReport rep;
    std::vector<double> diffs;
    for (std::size_t k = 0; k + 1 < n_list.size(); ++k)
        diffs.push_back(l1_dist(finals[k], finals[k + 1]));
    rep.cauchy = true;
    for (std::size_t k = 0; k + 1 < diffs.size(); ++k)
        if (!(diffs[k + 1] < diffs[k])) rep.cauchy = false;
    for (std::size_t k = 0; k < diffs.size(); ++k) {
        ConvergenceEntry en;
        en.n_coarse = n_list[k];
        en.n_fine = n_list[k + 1];
        en.l1_diff = diffs[k];
        en.observed_order = (k + 1 < diffs.size() && diffs[k + 1] > 0.0)
                                ? std::log2(diffs[k] / diffs[k + 1])
                                : std::numeric_limits<double>::quiet_NaN();
        rep.entries.push_back(en);
    }
    return rep;
}

std::pair<EvolutionTrace, ViscosityReport> vanishing_viscosity(
    const DensityField& u0, double T, int n_steps, const CoefficientSet& coeffs,
    std::span<const double> eps_list, const ResolventParams& params) {
    if (eps_list.size() < 3) throw ValidationError("vanishing viscosity needs at least 3 epsilons");
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        if (!(eps_list[k] > 0.0)) throw ValidationError("vanishing viscosity: epsilons must be > 0");
        if (k > 0 && !(eps_list[k] < eps_list[k - 1]))
            throw ValidationError("vanishing viscosity: epsilons must decrease");
    }

    std::vector<EvolutionTrace> traces(eps_list.size());
    parallel_for(static_cast<long>(eps_list.size()), [&](long b, long e) {
        for (long k = b; k < e; ++k)
            traces[k] = evolve(u0, T, n_steps, add_viscosity(coeffs, eps_list[k]), params);
    });

    ViscosityReport rep;
    rep.eps_list.assign(eps_list.begin(), eps_list.end());
    for (std::size_t k = 0; k + 1 < eps_list.size(); ++k)
        rep.pairwise_l1.push_back(
            l1_dist(traces[k].snapshots.back(), traces[k + 1].snapshots.back()));
    rep.cauchy = true;
    for (std::size_t k = 0; k + 1 < rep.pairwise_l1.size(); ++k)
        if (!(rep.pairwise_l1[k + 1] < rep.pairwise_l1[k])) rep.cauchy = false;
    if (!rep.cauchy) {
        rep.warning = "NotCauchy: pairwise distances fail to decrease";
        log(LogLevel::Warn, "vanishing_viscosity: " + rep.warning);
    }

    // Richardson extrapolation, linear in eps, from the two smallest
    const std::size_t ks = eps_list.size() - 1;  // smallest
    const std::size_t kl = eps_list.size() - 2;
    const double e_s = eps_list[ks], e_l = eps_list[kl];
    rep.extrapolation_eps_small = e_s;
    rep.extrapolation_eps_large = e_l;
    EvolutionTrace limit = traces[ks];
    double minv = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < limit.snapshots.size(); ++i) {
        auto& out = limit.snapshots[i].values;
        const auto& small_v = traces[ks].snapshots[i].values;
        const auto& large_v = traces[kl].snapshots[i].values;
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] = (e_l * small_v[c] - e_s * large_v[c]) / (e_l - e_s);
            minv = std::min(minv, out[c]);
        }
    }
    rep.min_extrapolated = minv;
    return {std::move(limit), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Weak residual
// ---------------------------------------------------------------------------

std::vector<double> weak_residual(const EvolutionTrace& trace, const CoefficientSet& coeffs,
                                  std::span<const Expr> phis) {
    const Grid& g = trace.grid;
    const int d = g.dim;
    const int n = g.cells_per_axis;
    const double h = g.spacing();
    const double vol = g.cell_volume();
    const double T = trace.T;
    const double ht = T / trace.n_steps;

    std::vector<double> residuals;
    residuals.reserve(phis.size());

    for (const Expr& phi : phis) {
        if (phi.references_u()) throw ValidationError("test functions may not reference u");

        // support check: phi must vanish at t = 0, t = T and on the
        // boundary shell
        double max_abs = 0.0, max_violation = 0.0;
        {
            std::vector<double> x(d);
            std::vector<int> mi(d);
            for (long c = 0; c < g.total_cells(); ++c) {
                g.cell_center(c, x.data());
                max_violation = std::max(max_violation, std::fabs(phi.eval(x, 0.0, 0.0)));
                max_violation = std::max(max_violation, std::fabs(phi.eval(x, 0.0, T)));
                max_abs = std::max(max_abs, std::fabs(phi.eval(x, 0.0, 0.5 * T)));
            }
            for (int i = 0; i < trace.n_steps; ++i) {
                double tm = (i + 0.5) * ht;
                for (long c = 0; c < g.total_cells(); ++c) {
                    g.unflatten(c, mi.data());
                    bool shell = false;
                    for (int k = 0; k < d; ++k)
                        if (mi[k] == 0 || mi[k] == n - 1) shell = true;
                    if (!shell) continue;
                    g.cell_center(c, x.data());
                    max_violation = std::max(max_violation, std::fabs(phi.eval(x, 0.0, tm)));
                }
            }
        }
        if (max_violation > 1e-12 * std::max(1.0, max_abs))
            throw ValidationError("test function does not vanish near t=0, t=T and the boundary");

        double acc = 0.0;
        std::vector<double> x(d), xs(d);
        for (int i = 0; i < trace.n_steps; ++i) {
            const double tm = (i + 0.5) * ht;
            const auto& ua = trace.snapshots[i].values;
            const auto& ub = trace.snapshots[i + 1].values;
            double slab = 0.0;
            for (long c = 0; c < g.total_cells(); ++c) {
                double uv = 0.5 * (ua[c] + ub[c]);
                if (uv == 0.0) continue;
                g.cell_center(c, x.data());

                double phi_t = phi.eval_with_partial(x, 0.0, VarRef::t(), tm).partial;
                double term = uv * phi_t;

                // drift part: b(x,u) . grad(phi) * u
                for (int k = 0; k < d; ++k) {
                    double bk = coeffs.b_value(k, x, uv);
                    if (bk == 0.0) continue;
                    double phik = phi.eval_with_partial(x, 0.0, VarRef::x(k), tm).partial;
                    term += bk * phik * uv;
                }

                // diffusion part: a_ij(x,u) u D2_ij phi, second differences of
                // the exact first partials
                for (int ii = 0; ii < d; ++ii) {
                    for (int jj = ii; jj < d; ++jj) {
                        double aij = coeffs.a_value(ii, jj, x, uv);
                        if (aij == 0.0) continue;
                        xs = x;
                        xs[ii] = x[ii] + h;
                        double pj_p = phi.eval_with_partial(xs, 0.0, VarRef::x(jj), tm).partial;
                        xs[ii] = x[ii] - h;
                        double pj_m = phi.eval_with_partial(xs, 0.0, VarRef::x(jj), tm).partial;
                        xs[ii] = x[ii];
                        double d2 = (pj_p - pj_m) / (2.0 * h);
                        if (ii != jj) {
                            xs[jj] = x[jj] + h;
                            double pi_p = phi.eval_with_partial(xs, 0.0, VarRef::x(ii), tm).partial;
                            xs[jj] = x[jj] - h;
                            double pi_m = phi.eval_with_partial(xs, 0.0, VarRef::x(ii), tm).partial;
                            xs[jj] = x[jj];
                            d2 = 0.5 * (d2 + (pi_p - pi_m) / (2.0 * h));
                            term += 2.0 * aij * uv * d2;  // symmetric pair (ii,jj), (jj,ii)
                        } else {
                            term += aij * uv * d2;
                        }
                    }
                }
                slab += term;
            }
            acc += slab * vol * ht;
        }
        residuals.push_back(std::fabs(acc));
    }
    return residuals;
}

std::vector<Expr> default_test_battery(int dim, double L, double T) {
    // bump(s) = exp(-1/max(1-s^2, tiny)); exactly zero outside |s|<1 and
    // expressible in the DSL without domain errors
    auto bump = [](const std::string& s) {
        return "exp(-1/max(1-(" + s + ")^2,1e-300))";
    };
    const double tau[3] = {0.9, 0.7, 0.5};
    const double wid[3] = {0.7, 0.5, 0.35};
    std::vector<Expr> battery;
    SymbolTable syms{dim, false, true};
    for (int m = 0; m < 3; ++m) {
        std::string src = bump("(2*t/" + fmt17(T) + "-1)/" + fmt17(tau[m]));
        for (int k = 0; k < dim; ++k)
            src += "*" + bump("x" + std::to_string(k + 1) + "/" + fmt17(wid[m] * L));
        battery.push_back(Expr::parse(src, syms));
    }
    return battery;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_trace(const std::string& dir, const EvolutionTrace& trace, bool timestamp) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    // drop snapshots from any previous, possibly longer run
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("snap_", 0) == 0) fs::remove(e.path());
    }
    std::string meta = dir + "/meta.csv";
    std::FILE* fp = std::fopen(meta.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + meta);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "# d=%d L=%s n=%d n_steps=%d T=%s\n", trace.grid.dim,
                 fmt17(trace.grid.half_width).c_str(), trace.grid.cells_per_axis, trace.n_steps,
                 fmt17(trace.T).c_str());
    std::fprintf(fp, "step,time,outer_iterations,lambda_substeps,mass,min_value,l1_increment,leak\n");
    std::fprintf(fp, "0,%s,,,%s,%s,,\n", fmt17(0.0).c_str(), fmt17(trace.snapshots[0].mass()).c_str(),
                 fmt17(trace.snapshots[0].min_value()).c_str());
    for (const auto& s : trace.steps)
        std::fprintf(fp, "%d,%s,%d,%d,%s,%s,%s,%s\n", s.step, fmt17(s.time).c_str(),
                     s.outer_iterations, s.lambda_substeps, fmt17(s.mass).c_str(),
                     fmt17(s.min_value).c_str(), fmt17(s.l1_increment).c_str(),
                     fmt17(s.dirichlet_leak).c_str());
    std::fclose(fp);

    char name[32];
    for (std::size_t i = 0; i < trace.snapshots.size(); ++i) {
        std::snprintf(name, sizeof(name), "/snap_%06zu.csv", i);
        write_density_csv(dir + name, trace.snapshots[i], timestamp);
    }
}

void write_expcheck_csv(const std::string& path, std::span<const int> n_list,
                        const ConvergenceReport& report, bool timestamp) {
    (void)n_list;
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "# cauchy=%s\n", report.cauchy ? "true" : "false");
    std::fprintf(fp, "n_coarse,n_fine,l1_diff,observed_order\n");
    for (const auto& en : report.entries) {
        if (std::isnan(en.observed_order))
            std::fprintf(fp, "%d,%d,%s,\n", en.n_coarse, en.n_fine, fmt17(en.l1_diff).c_str());
        else
            std::fprintf(fp, "%d,%d,%s,%s\n", en.n_coarse, en.n_fine, fmt17(en.l1_diff).c_str(),
                         fmt17(en.observed_order).c_str());
    }
    std::fclose(fp);
}

void write_viscosity_csv(const std::string& path, const ViscosityReport& report, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "# cauchy=%s extrapolated_from=%s,%s min_extrapolated=%s%s%s\n",
                 report.cauchy ? "true" : "false", fmt17(report.extrapolation_eps_large).c_str(),
                 fmt17(report.extrapolation_eps_small).c_str(),
                 fmt17(report.min_extrapolated).c_str(), report.warning.empty() ? "" : " warning=",
                 report.warning.c_str());
    std::fprintf(fp, "eps_coarse,eps_fine,l1_dist\n");
    for (std::size_t k = 0; k + 1 < report.eps_list.size(); ++k)
        std::fprintf(fp, "%s,%s,%s\n", fmt17(report.eps_list[k]).c_str(),
                     fmt17(report.eps_list[k + 1]).c_str(), fmt17(report.pairwise_l1[k]).c_str());
    std::fclose(fp);
}

}  // namespace fpmv
