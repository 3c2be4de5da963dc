#include "resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "common.hpp"
#include "rng.hpp"

namespace fpmv {

double ResolventParams::effective_outer_tol(const DensityField& f) const {
    return outer_tol_rel * std::fabs(f.mass()) + outer_tol_abs;
}

namespace {

// mass(f) - mass(u) decomposes into the boundary-column flux functional;
// restricting the column sums to the boundary shell keeps the interior
// telescoping property an actual check rather than an identity.
double boundary_leak(const SparseOperator& op, const DensityField& u) {
    const Grid& g = op.grid();
    auto cs = op.column_sums();
    const int n = g.cells_per_axis;
    std::vector<int> mi(g.dim);
    double leak = 0.0;
    for (long c = 0; c < g.total_cells(); ++c) {
        g.unflatten(c, mi.data());
        bool shell = false;
        for (int k = 0; k < g.dim; ++k)
            if (mi[k] == 0 || mi[k] == n - 1) shell = true;
        if (shell) leak += (cs[c] - 1.0) * u.values[c];
    }
    return leak * g.cell_volume();
}

bool boundary_cells_zero(const DensityField& f) {
    const Grid& g = f.grid;
    const int n = g.cells_per_axis;
    std::vector<int> mi(g.dim);
    for (long c = 0; c < g.total_cells(); ++c) {
        g.unflatten(c, mi.data());
        for (int k = 0; k < g.dim; ++k)
            if ((mi[k] == 0 || mi[k] == n - 1) && f.values[c] != 0.0) return false;
    }
    return true;
}

void finish_diagnostics(ResolventDiagnostics& diag, const SparseOperator& op,
                        const DensityField& f, const DensityField& u) {
    diag.min_value = u.min_value();
    diag.dirichlet_leak = boundary_leak(op, u);
    diag.mass_defect_raw = f.mass() - u.mass();
    diag.mass_identity_error = std::fabs(diag.mass_defect_raw - diag.dirichlet_leak);
}

}  // namespace

ResolventResult resolve(const DensityField& f, const ResolventParams& params,
                        const RegularizedSet& coeffs) {
    const Grid& grid = f.grid;
    if (!(params.lambda > 0.0)) throw ValidationError("resolve: lambda must be > 0");
    if (!(params.theta > 0.0 && params.theta <= 1.0))
        throw ValidationError("resolve: damping theta must lie in (0,1]");
    for (double v : f.values)
        if (!std::isfinite(v)) throw ValidationError("resolve: input field must be finite");

    const double tol = params.effective_outer_tol(f);
    ResolventDiagnostics diag;
    diag.theta_final = params.theta;

    DensityField v = f;  // warm start: the resolvent perturbs the identity
    double theta = params.theta;
    int consecutive_increases = 0;
    double last_inc = std::numeric_limits<double>::infinity();

    for (int k = 0; k < params.max_outer; ++k) {
        SparseOperator op = assemble(grid, coeffs, v, params.lambda, params.assembly);
        auto w = solve_linear(op, f.values, params.linear_tol, params.linear_max_iter, v.values);

        DensityField vn = v;
        for (std::size_t i = 0; i < w.size(); ++i)
            vn.values[i] = theta * w[i] + (1.0 - theta) * v.values[i];

        double inc = l1_dist(vn, v);
        diag.increment_history.push_back(inc);
        diag.outer_iterations = k + 1;

        double iter_norm = 0.0;
        for (double y : vn.values) iter_norm += y * y;
        diag.max_iterate_norm = std::max(diag.max_iterate_norm, std::sqrt(iter_norm));

        if (inc > last_inc) {
            if (++consecutive_increases >= 3 && theta > 1.0 / 64.0) {
                theta = 0.5 * theta;
                consecutive_increases = 0;
                log(LogLevel::Debug, "resolve: oscillation detected, damping halved to " +
                                         std::to_string(theta));
            }
        } else {
            consecutive_increases = 0;
        }
        last_inc = inc;
        v = std::move(vn);

        if (inc <= tol) {
            // one extra assemble-apply guards against fixed points of the
            // damped map that do not solve the equation
            SparseOperator op_final = assemble(grid, coeffs, v, params.lambda, params.assembly);
            std::vector<double> r(v.values.size());
            op_final.apply(v.values, r);
            double res = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) res += std::fabs(r[i] - f.values[i]);
            res *= grid.cell_volume();
            if (res <= 10.0 * tol) {
                diag.final_increment = inc;
                diag.nonlinear_residual = res;
                diag.theta_final = theta;
                finish_diagnostics(diag, op_final, f, v);
                return {std::move(v), std::move(diag)};
            }
        }
    }
    throw FixedPointStall("resolvent fixed point stalled after " +
                              std::to_string(params.max_outer) + " outer iterations",
                          diag.increment_history);
}

ResolventResult resolve_extended(const DensityField& f, double lambda,
                                 const ResolventParams& params, const RegularizedSet& coeffs) {
    if (!(lambda > 0.0)) throw ValidationError("resolve_extended: lambda must be > 0");
    double l0 = lambda0(coeffs);
    if (!(l0 > 0.0))
        throw ValidationError("resolve_extended: admissible step bound is zero; regularize the "
                              "coefficient set first");
    double lambda_safe = 0.9 * l0;

    if (lambda < lambda_safe || std::isinf(l0)) {
        ResolventParams p = params;
        p.lambda = lambda;
        return resolve(f, p, coeffs);
    }

    const double ratio = lambda_safe / lambda;  // in (0, 0.9]
    const double tol = params.effective_outer_tol(f);
    ResolventParams inner = params;
    inner.lambda = lambda_safe;

    DensityField w = f;
    ResolventDiagnostics diag;
    const int cap = std::max(1000, 10 * params.max_outer);
    for (int it = 0; it < cap; ++it) {
        DensityField g = f;
        for (std::size_t i = 0; i < g.values.size(); ++i)
            g.values[i] = ratio * f.values[i] + (1.0 - ratio) * w.values[i];
        ResolventResult inner_res = resolve(g, inner, coeffs);
        double inc = l1_dist(inner_res.u, w);
        w = std::move(inner_res.u);
        diag.outer_iterations += inner_res.diag.outer_iterations;
        diag.lambda_substeps = it + 1;
        diag.theta_final = inner_res.diag.theta_final;
        diag.max_iterate_norm = std::max(diag.max_iterate_norm, inner_res.diag.max_iterate_norm);
        diag.increment_history.push_back(inc);
        if (inc <= tol) {
            diag.final_increment = inc;
            SparseOperator op = assemble(f.grid, coeffs, w, lambda, params.assembly);
            std::vector<double> r(w.values.size());
            op.apply(w.values, r);
            double res = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) res += std::fabs(r[i] - f.values[i]);
            diag.nonlinear_residual = res * f.grid.cell_volume();
            finish_diagnostics(diag, op, f, w);
            return {std::move(w), std::move(diag)};
        }
    }
    throw IdentityStall("resolvent identity iteration stalled after " + std::to_string(cap) +
                            " passes",
                        1.0 - ratio);
}

// ---------------------------------------------------------------------------
// Accretivity suite
// ---------------------------------------------------------------------------

DensityField random_bump_field(const Grid& grid, std::uint64_t seed, std::uint64_t stream) {
    const int d = grid.dim;
    const double L = grid.half_width;
    DensityField f(grid);

    // three gaussian bumps, parameters from the counter RNG
    constexpr int kBumps = 3;
    std::vector<double> centers(kBumps * d), widths(kBumps), weights(kBumps);
    std::uint64_t ctr = 0;
    auto next_u01 = [&]() {
        rng::Block b = rng::philox2x64(seed, stream, ctr++);
        return rng::u01_open(b.x);
    };
    for (int m = 0; m < kBumps; ++m) {
        for (int k = 0; k < d; ++k) centers[m * d + k] = (next_u01() - 0.5) * L;  // in [-L/2, L/2]
        widths[m] = (0.08 + 0.17 * next_u01()) * L;
        weights[m] = 0.2 + 0.8 * next_u01();
    }

    std::vector<double> x(d);
    for (long c = 0; c < grid.total_cells(); ++c) {
        grid.cell_center(c, x.data());
        double val = 0.0;
        for (int m = 0; m < kBumps; ++m) {
            double q = 0.0;
            for (int k = 0; k < d; ++k) {
                double dx = x[k] - centers[m * d + k];
                q += dx * dx;
            }
            val += weights[m] * std::exp(-q / (2.0 * widths[m] * widths[m]));
        }
        f.values[c] = val;
    }

    // hard zero margin keeps the data interior-supported with exactly-zero
    // boundary cells
    const int n = grid.cells_per_axis;
    const int margin = std::max(1, n / 10);
    std::vector<int> mi(d);
    for (long c = 0; c < grid.total_cells(); ++c) {
        grid.unflatten(c, mi.data());
        for (int k = 0; k < d; ++k)
            if (mi[k] < margin || mi[k] >= n - margin) f.values[c] = 0.0;
    }
    normalize_mass(f, 1.0);
    return f;
}

SuiteReport accretivity_suite(const RegularizedSet& coeffs, const Grid& grid,
                              std::span<const double> lambdas, int trials, std::uint64_t seed,
                              const ResolventParams& params) {
    if (trials < 10) throw ValidationError("accretivity suite requires at least 10 trials");
    SuiteReport report;
    const long total = static_cast<long>(lambdas.size()) * trials;
    std::vector<std::vector<SuiteRow>> rows(total);
    std::vector<std::unique_ptr<SuiteReplay>> fails(total);

    parallel_for(total, [&](long b, long e) {
        for (long job = b; job < e; ++job) {
            const int li = static_cast<int>(job / trials);
            const int trial = static_cast<int>(job % trials);
            const double lam = lambdas[li];
            DensityField f1 = random_bump_field(grid, seed, static_cast<std::uint64_t>(job) * 2);
            DensityField f2 = random_bump_field(grid, seed, static_cast<std::uint64_t>(job) * 2 + 1);

            ResolventResult r1 = resolve_extended(f1, lam, params, coeffs);
            ResolventResult r2 = resolve_extended(f2, lam, params, coeffs);

            std::vector<SuiteRow>& out = rows[job];
            bool all_ok = true;

            double dist_u = l1_dist(r1.u, r2.u);
            double dist_f = l1_dist(f1, f2);
            SuiteRow contraction{lam, trial, "contraction", dist_u, dist_f + 1e-9,
                                 dist_u <= dist_f + 1e-9};
            all_ok = all_ok && contraction.pass;
            out.push_back(std::move(contraction));

            double min_u = std::min(r1.diag.min_value, r2.diag.min_value);
            SuiteRow positivity{lam, trial, "positivity", min_u, -1e-12, min_u >= -1e-12};
            all_ok = all_ok && positivity.pass;
            out.push_back(std::move(positivity));

            const bool interior = boundary_cells_zero(f1) && boundary_cells_zero(f2);
            double mass_err = interior
                                  ? std::max(r1.diag.mass_identity_error, r2.diag.mass_identity_error)
                                  : std::max(std::fabs(r1.diag.mass_defect_raw),
                                             std::fabs(r2.diag.mass_defect_raw));
            SuiteRow mass{lam, trial, "mass", mass_err, 1e-10, mass_err <= 1e-10};
            all_ok = all_ok && mass.pass;
            out.push_back(std::move(mass));

            if (!all_ok) {
                auto rep = std::make_unique<SuiteReplay>();
                rep->lambda = lam;
                rep->trial = trial;
                rep->f1 = f1;
                rep->f2 = f2;
                fails[job] = std::move(rep);
            }
        }
    });

    for (long job = 0; job < total; ++job) {
        for (auto& r : rows[job]) {
            if (!r.pass) ++report.violations;
            report.rows.push_back(std::move(r));
        }
        if (fails[job]) report.failures.push_back(std::move(*fails[job]));
    }
    return report;
}

void write_suite_csv(const std::string& path, const SuiteReport& report, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "lambda,trial,check,value,bound,pass\n");
    for (const auto& r : report.rows)
        std::fprintf(fp, "%s,%d,%s,%s,%s,%d\n", fmt17(r.lambda).c_str(), r.trial, r.check.c_str(),
                     fmt17(r.value).c_str(), fmt17(r.bound).c_str(), r.pass ? 1 : 0);
    std::fclose(fp);
}

}  // namespace fpmv
