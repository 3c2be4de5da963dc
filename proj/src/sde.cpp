#include "sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "common.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace fpmv {

namespace {
// counter layout: c0 = particle id; c1 < 2^63 for stepping noise,
// c1 >= 2^63 for initial sampling draws
constexpr std::uint64_t kInitCounterBase = 1ULL << 63;
}  // namespace

std::vector<double> diffusion_amplitude(std::span<const double> a, int d,
                                        AmplitudeConvention convention) {
    const double fac = convention == AmplitudeConvention::MatchFpe ? 2.0 : 1.0;
    if (d == 1) {
        if (a[0] < -1e-12) throw NotPSD(a[0]);
        double v = std::max(a[0], 0.0);
        return {std::sqrt(fac * v)};
    }
    SymEig eig = sym_eig(a, d);
    if (eig.eigenvalues.front() < -1e-12) throw NotPSD(eig.eigenvalues.front());
    std::vector<double> s(static_cast<std::size_t>(d) * d, 0.0);
    for (int k = 0; k < d; ++k) {
        double lam = std::sqrt(fac * std::max(eig.eigenvalues[k], 0.0));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                s[i * d + j] += eig.eigenvectors[i * d + k] * lam * eig.eigenvectors[j * d + k];
    }
    return s;
}

double interpolate_density(const EvolutionTrace& trace, double t, std::span<const double> x) {
    const Grid& g = trace.grid;
    const int d = g.dim;
    for (int k = 0; k < d; ++k)
        if (std::fabs(x[k]) > g.half_width) return 0.0;

    const double ht = trace.T / trace.n_steps;
    double tc = std::clamp(t, 0.0, trace.T);
    int i = std::min(static_cast<int>(tc / ht), trace.n_steps - 1);
    double wt = std::clamp((tc - i * ht) / ht, 0.0, 1.0);

    const double h = g.spacing();
    const int n = g.cells_per_axis;
    // base cell and fraction per axis
    int base[8];
    double frac[8];
    if (d > 8) throw ValidationError("interpolation supports dim <= 8");
    for (int k = 0; k < d; ++k) {
        double s = (x[k] + g.half_width) / h - 0.5;
        double fl = std::floor(s);
        base[k] = static_cast<int>(fl);
        frac[k] = s - fl;
    }

    auto corner_value = [&](const std::vector<double>& vals) {
        double acc = 0.0;
        const int corners = 1 << d;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            long flat = 0;
            bool ok = true;
            for (int k = d - 1; k >= 0; --k) {
                int idx = base[k] + ((c >> k) & 1);
                w *= ((c >> k) & 1) ? frac[k] : 1.0 - frac[k];
                if (idx < 0 || idx >= n) {
                    ok = false;
                    break;
                }
                flat = flat * n + idx;
            }
            if (ok && w != 0.0) acc += w * vals[flat];
        }
        return acc;
    };

    double va = corner_value(trace.snapshots[i].values);
    double vb = corner_value(trace.snapshots[i + 1].values);
    return (1.0 - wt) * va + wt * vb;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

namespace {

std::vector<double> sample_initial(const EvolutionTrace& trace, long N, std::uint64_t seed) {
    const Grid& g = trace.grid;
    const int d = g.dim;
    const double h = g.spacing();
    const auto& u0 = trace.snapshots.front().values;

    // cell masses (clip the tolerated tiny negatives)
    std::vector<double> prefix(u0.size() + 1, 0.0);
    for (std::size_t c = 0; c < u0.size(); ++c) prefix[c + 1] = prefix[c] + std::max(u0[c], 0.0);
    double total = prefix.back();
    if (!(total > 0.0)) throw ValidationError("initial snapshot has no positive mass to sample");

    std::vector<double> pos(static_cast<std::size_t>(N) * d);
    parallel_for(N, [&](long b, long e) {
        std::vector<int> mi(d);
        for (long p = b; p < e; ++p) {
            rng::Block blk = rng::philox2x64(seed, static_cast<std::uint64_t>(p), kInitCounterBase);
            double q = rng::u01_open(blk.x) * total;
            long cell = static_cast<long>(
                std::upper_bound(prefix.begin(), prefix.end(), q) - prefix.begin() - 1);
            cell = std::clamp(cell, 0L, static_cast<long>(u0.size()) - 1);
            g.unflatten(cell, mi.data());
            if (d == 1) {
                // inverse CDF: uniform within the cell of a piecewise
                // constant density
                double cell_mass = prefix[cell + 1] - prefix[cell];
                double fr = cell_mass > 0.0 ? (q - prefix[cell]) / cell_mass : 0.5;
                pos[p] = -g.half_width + (mi[0] + fr) * h;
            } else {
                // cell-categorical plus in-cell uniform jitter
                for (int k = 0; k < d; ++k) {
                    double jit = (k % 2 == 0) ? rng::u01_open(rng::philox2x64(
                                                    seed, static_cast<std::uint64_t>(p),
                                                    kInitCounterBase + 1 + k / 2).x)
                                              : rng::u01_open(rng::philox2x64(
                                                    seed, static_cast<std::uint64_t>(p),
                                                    kInitCounterBase + 1 + k / 2).y);
                    pos[p * d + k] = -g.half_width + (mi[k] + jit) * h;
                }
            }
        }
    });
    return pos;
}

double escaped_fraction_of(const std::vector<double>& pos, long N, int d, double L) {
    long esc = 0;
    for (long p = 0; p < N; ++p)
        for (int k = 0; k < d; ++k)
            if (std::fabs(pos[p * d + k]) > L) {
                ++esc;
                break;
            }
    return N > 0 ? static_cast<double>(esc) / static_cast<double>(N) : 0.0;
}

}  // namespace

std::vector<ParticleEnsemble> simulate_from(std::vector<double> positions,
                                            const EvolutionTrace& trace,
                                            const CoefficientSet& coeffs,
                                            const SimulateOptions& opts) {
    const Grid& g = trace.grid;
    const int d = g.dim;
    const long N = static_cast<long>(positions.size()) / d;
    if (N < 1) throw ValidationError("simulate: need at least one particle");
    if (coeffs.dim != d) throw ValidationError("simulate: coefficient dimension mismatch");
    const double ht = trace.T / trace.n_steps;
    if (!(opts.dt > 0.0) || opts.dt > ht * (1.0 + 1e-12))
        throw ValidationError("simulate: dt must lie in (0, trace step]");
    const int stride = std::max(1, opts.record_stride);

    const long n_sub = std::max<long>(1, static_cast<long>(std::ceil(ht / opts.dt - 1e-9)));
    const double dt_eff = ht / static_cast<double>(n_sub);
    const double sqrt_dt = std::sqrt(dt_eff);
    const std::uint64_t blocks = (d + 1) / 2;
    const double fac = opts.convention == AmplitudeConvention::MatchFpe ? 2.0 : 1.0;

    std::vector<ParticleEnsemble> out;
    auto record = [&](int step_idx) {
        ParticleEnsemble e;
        e.count = N;
        e.dim = d;
        e.time = trace.times[step_idx];
        e.seed = opts.seed;
        e.positions = positions;
        e.escaped_fraction = escaped_fraction_of(positions, N, d, g.half_width);
        out.push_back(std::move(e));
    };
    record(0);

    for (int step = 0; step < trace.n_steps; ++step) {
        const double t0 = trace.times[step];
        parallel_for(N, [&](long pb, long pe) {
            std::vector<double> xp(d), bvec(d), amat(static_cast<std::size_t>(d) * d), xi(d + 1);
            for (long p = pb; p < pe; ++p) {
                for (int k = 0; k < d; ++k) xp[k] = positions[p * d + k];
                for (long sub = 0; sub < n_sub; ++sub) {
                    const double t = t0 + sub * dt_eff;
                    const std::uint64_t gsub =
                        static_cast<std::uint64_t>(step) * n_sub + static_cast<std::uint64_t>(sub);
                    double uh = interpolate_density(trace, t, xp);

                    // draw d standard normals from the particle stream
                    for (std::uint64_t blk = 0; blk < blocks; ++blk) {
                        rng::Block rb = rng::philox2x64(opts.seed, static_cast<std::uint64_t>(p),
                                                        gsub * blocks + blk);
                        auto [n0, n1] = rng::normal_pair(rb);
                        xi[blk * 2] = n0;
                        if (blk * 2 + 1 < static_cast<std::uint64_t>(d) + 1) xi[blk * 2 + 1] = n1;
                    }

                    if (d == 1) {
                        double av = coeffs.a_value(0, 0, xp, uh);
                        if (av < -1e-12) throw NotPSD(av);
                        double bv = coeffs.b_value(0, xp, uh);
                        xp[0] += bv * dt_eff + std::sqrt(fac * std::max(av, 0.0)) * sqrt_dt * xi[0];
                    } else {
                        for (int i = 0; i < d; ++i) {
                            bvec[i] = coeffs.b_value(i, xp, uh);
                            for (int j = i; j < d; ++j)
                                amat[i * d + j] = amat[j * d + i] = coeffs.a_value(i, j, xp, uh);
                        }
                        auto sig = diffusion_amplitude(amat, d, opts.convention);
                        for (int i = 0; i < d; ++i) {
                            double diff = 0.0;
                            for (int j = 0; j < d; ++j) diff += sig[i * d + j] * xi[j];
                            xp[i] += bvec[i] * dt_eff + diff * sqrt_dt;
                        }
                    }
                }
                for (int k = 0; k < d; ++k) positions[p * d + k] = xp[k];
            }
        });
        int idx = step + 1;
        if (idx % stride == 0 || idx == trace.n_steps) record(idx);
    }
    return out;
}

std::vector<ParticleEnsemble> simulate(const EvolutionTrace& trace, const CoefficientSet& coeffs,
                                       const SimulateOptions& opts) {
    if (opts.n_particles < 1) throw ValidationError("simulate: need at least one particle");
    auto pos = sample_initial(trace, opts.n_particles, opts.seed);
    return simulate_from(std::move(pos), trace, coeffs, opts);
}

// ---------------------------------------------------------------------------
// Marginals and distances
// ---------------------------------------------------------------------------

DensityField estimate_marginal(const ParticleEnsemble& ens, const Grid& grid) {
    if (ens.count < 1) throw ValidationError("estimate_marginal: empty ensemble");
    if (ens.dim != grid.dim) throw ValidationError("estimate_marginal: dimension mismatch");
    DensityField f(grid);
    const double h = grid.spacing();
    const int n = grid.cells_per_axis;
    const double w = 1.0 / (static_cast<double>(ens.count) * grid.cell_volume());
    std::vector<int> mi(grid.dim);
    for (long p = 0; p < ens.count; ++p) {
        bool inside = true;
        for (int k = 0; k < grid.dim; ++k) {
            double s = (ens.positions[p * grid.dim + k] + grid.half_width) / h;
            int idx = static_cast<int>(std::floor(s));
            if (idx < 0 || idx >= n) {
                inside = false;
                break;
            }
            mi[k] = idx;
        }
        if (inside) f.values[grid.flatten(mi.data())] += w;
    }
    return f;
}

namespace {

// piecewise-linear CDF of a nonnegative cell density on the axis grid
struct GridCdf {
    double L, h;
    int n;
    std::vector<double> cum;  // size n+1, cum[k] = mass below edge k

    double operator()(double x) const {
        if (x <= -L) return 0.0;
        if (x >= L) return cum[n];
        double s = (x + L) / h;
        int k = std::min(static_cast<int>(std::floor(s)), n - 1);
        double frac = s - k;
        return cum[k] + frac * (cum[k + 1] - cum[k]);
    }
};

GridCdf make_cdf(const Grid& axis_grid, std::span<const double> density) {
    GridCdf cdf;
    cdf.L = axis_grid.half_width;
    cdf.h = axis_grid.spacing();
    cdf.n = axis_grid.cells_per_axis;
    cdf.cum.assign(cdf.n + 1, 0.0);
    for (int k = 0; k < cdf.n; ++k)
        cdf.cum[k + 1] = cdf.cum[k] + std::max(density[k], 0.0) * cdf.h;
    return cdf;
}

std::vector<double> breakpoints(std::span<const double> sorted_samples, const GridCdf& cdf) {
    std::vector<double> bp;
    bp.reserve(sorted_samples.size() + cdf.n + 1);
    for (int k = 0; k <= cdf.n; ++k) bp.push_back(-cdf.L + k * cdf.h);
    bp.insert(bp.end(), sorted_samples.begin(), sorted_samples.end());
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    return bp;
}

}  // namespace

double wasserstein1_1d(std::span<const double> samples, const Grid& axis_grid,
                       std::span<const double> density) {
    if (samples.empty()) throw ValidationError("wasserstein1_1d: no samples");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    GridCdf cdf = make_cdf(axis_grid, density);
    auto bp = breakpoints(s, cdf);
    const double invn = 1.0 / static_cast<double>(s.size());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        double p = bp[i], q = bp[i + 1];
        double fe = invn * static_cast<double>(std::upper_bound(s.begin(), s.end(), p) - s.begin());
        double f0 = fe - cdf(p);
        double f1 = fe - cdf(q);
        double w = q - p;
        if (f0 * f1 >= 0.0) {
            acc += 0.5 * (std::fabs(f0) + std::fabs(f1)) * w;
        } else {
            double a0 = std::fabs(f0), a1 = std::fabs(f1);
            acc += 0.5 * w * (a0 * a0 + a1 * a1) / (a0 + a1);
        }
    }
    return acc;
}

double kolmogorov_smirnov_1d(std::span<const double> samples, const Grid& axis_grid,
                             std::span<const double> density) {
    if (samples.empty()) throw ValidationError("kolmogorov_smirnov_1d: no samples");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    GridCdf cdf = make_cdf(axis_grid, density);
    auto bp = breakpoints(s, cdf);
    const double invn = 1.0 / static_cast<double>(s.size());

    double ks = 0.0;
    for (double p : bp) {
        double g = cdf(p);
        double below = invn * static_cast<double>(std::lower_bound(s.begin(), s.end(), p) - s.begin());
        double at = invn * static_cast<double>(std::upper_bound(s.begin(), s.end(), p) - s.begin());
        ks = std::max(ks, std::max(std::fabs(below - g), std::fabs(at - g)));
    }
    return ks;
}

std::vector<MarginalComparison> superposition_check(const EvolutionTrace& trace,
                                                    std::span<const ParticleEnsemble> ensembles,
                                                    std::span<const double> times) {
    const Grid& g = trace.grid;
    const int d = g.dim;
    const double tol = 1e-9 * std::max(1.0, trace.T);

    std::vector<MarginalComparison> out;
    for (double t : times) {
        // snapshot: exact time or nearest with a warning
        std::size_t best = 0;
        double best_err = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < trace.times.size(); ++i) {
            double err = std::fabs(trace.times[i] - t);
            if (err < best_err) {
                best_err = err;
                best = i;
            }
        }
        bool nearest = best_err > tol;
        if (nearest)
            log(LogLevel::Warn, "superposition_check: time " + fmt17(t) +
                                    " not in trace, using nearest snapshot at " +
                                    fmt17(trace.times[best]));

        const ParticleEnsemble* ens = nullptr;
        double ens_err = std::numeric_limits<double>::infinity();
        for (const auto& e : ensembles) {
            double err = std::fabs(e.time - trace.times[best]);
            if (err < ens_err) {
                ens_err = err;
                ens = &e;
            }
        }
        if (!ens) throw ValidationError("superposition_check: no ensembles supplied");

        MarginalComparison cmp;
        cmp.time = trace.times[best];
        cmp.n_particles = ens->count;
        cmp.nearest_time_used = nearest || ens_err > tol;
        cmp.l1 = l1_dist(estimate_marginal(*ens, g), trace.snapshots[best]);

        Grid axis_grid(1, g.half_width, g.cells_per_axis);
        const auto& snap = trace.snapshots[best].values;
        for (int axis = 0; axis < d; ++axis) {
            // axis marginal of the snapshot
            std::vector<double> marg(g.cells_per_axis, 0.0);
            double slab = g.cell_volume() / g.spacing();
            std::vector<int> mi(d);
            for (long c = 0; c < g.total_cells(); ++c) {
                g.unflatten(c, mi.data());
                marg[mi[axis]] += snap[c] * slab;
            }
            std::vector<double> coords(ens->count);
            for (long p = 0; p < ens->count; ++p) coords[p] = ens->positions[p * d + axis];
            cmp.w1_axis.push_back(wasserstein1_1d(coords, axis_grid, marg));
            cmp.ks_axis.push_back(kolmogorov_smirnov_1d(coords, axis_grid, marg));
        }
        out.push_back(std::move(cmp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_ensemble_csv(const std::string& path, const ParticleEnsemble& ens, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "# time=%s escaped_fraction=%s\n", fmt17(ens.time).c_str(),
                 fmt17(ens.escaped_fraction).c_str());
    std::fprintf(fp, "particle_id");
    for (int k = 0; k < ens.dim; ++k) std::fprintf(fp, ",x%d", k + 1);
    std::fprintf(fp, "\n");
    for (long p = 0; p < ens.count; ++p) {
        std::fprintf(fp, "%ld", p);
        for (int k = 0; k < ens.dim; ++k)
            std::fprintf(fp, ",%s", fmt17(ens.positions[p * ens.dim + k]).c_str());
        std::fprintf(fp, "\n");
    }
    std::fclose(fp);
}

void write_comparison_csv(const std::string& path, std::span<const MarginalComparison> rows,
                          int dim, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "time,N,L1");
    for (int k = 0; k < dim; ++k) std::fprintf(fp, ",W1_axis%d", k + 1);
    for (int k = 0; k < dim; ++k) std::fprintf(fp, ",KS_axis%d", k + 1);
    std::fprintf(fp, "\n");
    for (const auto& r : rows) {
        std::fprintf(fp, "%s,%ld,%s", fmt17(r.time).c_str(), r.n_particles, fmt17(r.l1).c_str());
        for (double v : r.w1_axis) std::fprintf(fp, ",%s", fmt17(v).c_str());
        for (double v : r.ks_axis) std::fprintf(fp, ",%s", fmt17(v).c_str());
        std::fprintf(fp, "\n");
    }
    std::fclose(fp);
}

}  // namespace fpmv
