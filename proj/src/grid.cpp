#include "grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "common.hpp"

namespace fpmv {

// ---------------------------------------------------------------------------
// Grid / DensityField
// ---------------------------------------------------------------------------

Grid::Grid(int d, double L, int n) : dim(d), half_width(L), cells_per_axis(n) {
    if (d < 1) throw ValidationError("grid dimension must be >= 1");
    if (!(L > 0.0) || !std::isfinite(L)) throw ValidationError("grid half-width must be > 0");
    if (n < 8) throw ValidationError("grid needs at least 8 cells per axis");
    double cells = std::pow(static_cast<double>(n), d);
    if (cells > 2e8) throw ValidationError("grid too large");
}

long Grid::total_cells() const {
    long t = 1;
    for (int k = 0; k < dim; ++k) t *= cells_per_axis;
    return t;
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (int k = 0; k < dim; ++k) v *= spacing();
    return v;
}

void Grid::cell_center(long flat, double* out) const {
    for (int k = 0; k < dim; ++k) {
        out[k] = center(k, flat % cells_per_axis);
        flat /= cells_per_axis;
    }
}

long Grid::flatten(const int* mi) const {
    long f = 0;
    for (int k = dim - 1; k >= 0; --k) f = f * cells_per_axis + mi[k];
    return f;
}

void Grid::unflatten(long flat, int* mi) const {
    for (int k = 0; k < dim; ++k) {
        mi[k] = static_cast<int>(flat % cells_per_axis);
        flat /= cells_per_axis;
    }
}

double DensityField::mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_volume();
}

double DensityField::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values) m = std::min(m, v);
    return values.empty() ? 0.0 : m;
}

double l1_norm(const DensityField& f) {
    double s = 0.0;
    for (double v : f.values) s += std::fabs(v);
    return s * f.grid.cell_volume();
}

double l1_dist(const DensityField& f, const DensityField& g) {
    if (!(f.grid == g.grid)) throw ValidationError("l1_dist: fields live on different grids");
    double s = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) s += std::fabs(f.values[i] - g.values[i]);
    return s * f.grid.cell_volume();
}

void normalize_mass(DensityField& f, double target) {
    double m = f.mass();
    if (!(m > 0.0)) throw ValidationError("cannot normalize a field with nonpositive mass");
    double scale = target / m;
    for (double& v : f.values) v *= scale;
}

void write_density_csv(const std::string& path, const DensityField& f, bool timestamp) {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw ValidationError("cannot open for writing: " + path);
    if (timestamp) std::fprintf(fp, "# generated %s\n", iso_timestamp().c_str());
    std::fprintf(fp, "# %d %s %d\n", f.grid.dim, fmt17(f.grid.half_width).c_str(),
                 f.grid.cells_per_axis);
    std::vector<double> x(f.grid.dim);
    for (long i = 0; i < f.grid.total_cells(); ++i) {
        f.grid.cell_center(i, x.data());
        std::fprintf(fp, "%ld", i);
        for (int k = 0; k < f.grid.dim; ++k) std::fprintf(fp, ",%s", fmt17(x[k]).c_str());
        std::fprintf(fp, ",%s\n", fmt17(f.values[i]).c_str());
    }
    std::fclose(fp);
}

DensityField read_density_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open for reading: " + path);
    std::string line;
    int d = 0, n = 0;
    double L = 0.0;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.rfind("# generated", 0) == 0) continue;
        if (line.rfind("# ", 0) == 0) {
            if (std::sscanf(line.c_str(), "# %d %lf %d", &d, &L, &n) != 3)
                throw ValidationError("malformed density header in " + path);
            have_header = true;
            break;
        }
        throw ValidationError("missing density header in " + path);
    }
    if (!have_header) throw ValidationError("missing density header in " + path);
    DensityField f{Grid(d, L, n)};
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const char* p = line.c_str();
        char* end = nullptr;
        long idx = std::strtol(p, &end, 10);
        if (end == p || idx < 0 || idx >= f.grid.total_cells())
            throw ValidationError("bad cell index in " + path);
        // skip the coordinate columns; the value is the last field
        const char* last = std::strrchr(line.c_str(), ',');
        if (!last) throw ValidationError("malformed row in " + path);
        f.values[idx] = std::strtod(last + 1, nullptr);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace {

// per-cell coefficient tables; ghost cells evaluated on demand at v = 0
struct CoeffTables {
    int d = 1;
    bool has_cross = false;
    std::vector<double> diag;   // [cell*d + i] = (a*_ii)_u(x, v)
    std::vector<double> cross;  // [cell*npairs + p] for pairs (i<j)
    std::vector<double> vel;    // [cell*d + i] = b_i - sum_j (a_ij)_xj
};

int pair_index(int i, int j, int d) {
    if (i > j) std::swap(i, j);
    // pairs (i<j) row-major
    return i * d - i * (i + 1) / 2 + (j - i - 1);
}

CoeffTables build_tables(const Grid& grid, const RegularizedSet& coeffs, const DensityField& v) {
    const int d = grid.dim;
    const long N = grid.total_cells();
    CoeffTables t;
    t.d = d;
    for (int i = 0; i < d && !t.has_cross; ++i)
        for (int j = i + 1; j < d && !t.has_cross; ++j)
            if (!coeffs.base().a(i, j).is_literal_zero()) t.has_cross = true;

    t.diag.resize(static_cast<std::size_t>(N) * d);
    t.vel.resize(static_cast<std::size_t>(N) * d);
    const int npairs = d * (d - 1) / 2;
    if (t.has_cross) t.cross.resize(static_cast<std::size_t>(N) * npairs);

    parallel_for(N, [&](long b, long e) {
        std::vector<double> x(d);
        for (long c = b; c < e; ++c) {
            grid.cell_center(c, x.data());
            double uc = v.values[c];
            try {
                for (int i = 0; i < d; ++i) {
                    t.diag[c * d + i] = coeffs.astar_u_entry(i, i, x, uc);
                    double ax = 0.0;
                    for (int j = 0; j < d; ++j) ax += coeffs.a_x_entry(i, j, x, uc);
                    t.vel[c * d + i] = coeffs.b_entry(i, x, uc) - ax;
                }
                if (t.has_cross)
                    for (int i = 0; i < d; ++i)
                        for (int j = i + 1; j < d; ++j)
                            t.cross[c * npairs + pair_index(i, j, d)] =
                                coeffs.astar_u_entry(i, j, x, uc);
            } catch (const EvalDomainError& err) {
                throw EvalDomainError(
                    "coefficient evaluation at cell " + std::to_string(c) + ": " + err.reason,
                    err.subexpr);
            }
        }
    });
    return t;
}

struct GhostEval {
    const Grid* grid;
    const RegularizedSet* coeffs;

    // mi may have one coordinate at -1 or n; v = 0 outside the domain
    double diag(const int* mi, int i) const {
        std::vector<double> x(grid->dim);
        for (int k = 0; k < grid->dim; ++k) x[k] = grid->center(k, mi[k]);
        return coeffs->astar_u_entry(i, i, x, 0.0);
    }
    double cross(const int* mi, int i, int j) const {
        std::vector<double> x(grid->dim);
        for (int k = 0; k < grid->dim; ++k) x[k] = grid->center(k, mi[k]);
        return coeffs->astar_u_entry(i, j, x, 0.0);
    }
    double vel(const int* mi, int i) const {
        std::vector<double> x(grid->dim);
        for (int k = 0; k < grid->dim; ++k) x[k] = grid->center(k, mi[k]);
        double ax = 0.0;
        for (int j = 0; j < grid->dim; ++j) ax += coeffs->a_x_entry(i, j, x, 0.0);
        return coeffs->b_entry(i, x, 0.0) - ax;
    }
};

inline bool in_domain(const int* mi, int d, int n) {
    for (int k = 0; k < d; ++k)
        if (mi[k] < 0 || mi[k] >= n) return false;
    return true;
}

}  // namespace

SparseOperator assemble(const Grid& grid, const RegularizedSet& coeffs, const DensityField& v,
                        double lambda, const AssemblyOptions& opts) {
    if (!(v.grid == grid)) throw ValidationError("assemble: frozen state lives on a different grid");
    if (lambda < 0.0) throw ValidationError("assemble: lambda must be >= 0");
    if (coeffs.dim() != grid.dim) throw ValidationError("assemble: coefficient dimension mismatch");

    const int d = grid.dim;
    const int n = grid.cells_per_axis;
    const long N = grid.total_cells();
    const double h = grid.spacing();
    const int npairs = d * (d - 1) / 2;

    CoeffTables tab = build_tables(grid, coeffs, v);
    GhostEval ghost{&grid, &coeffs};

    auto cell_diag = [&](const int* mi, int i) -> double {
        if (in_domain(mi, d, n)) return tab.diag[grid.flatten(mi) * d + i];
        return ghost.diag(mi, i);
    };
    auto cell_cross = [&](const int* mi, int i, int j) -> double {
        if (in_domain(mi, d, n)) return tab.cross[grid.flatten(mi) * npairs + pair_index(i, j, d)];
        return ghost.cross(mi, i, j);
    };
    auto cell_vel = [&](const int* mi, int i) -> double {
        if (in_domain(mi, d, n)) return tab.vel[grid.flatten(mi) * d + i];
        return ghost.vel(mi, i);
    };

    // stencil slot indexing over offsets in {-1,0,1}^d
    long n_slots = 1;
    for (int k = 0; k < d; ++k) n_slots *= 3;
    auto slot_of = [&](const int* off) {
        long s = 0;
        for (int k = d - 1; k >= 0; --k) s = s * 3 + (off[k] + 1);
        return s;
    };

    SparseOperator op;
    op.grid_ = grid;
    op.lambda_ = lambda;
    op.has_cross_ = tab.has_cross;
    op.row_ptr_.reserve(N + 1);
    op.row_ptr_.push_back(0);
    op.cols_.reserve(static_cast<std::size_t>(N) * (2 * d + 1));
    op.vals_.reserve(static_cast<std::size_t>(N) * (2 * d + 1));

    std::vector<double> stencil(n_slots);
    std::vector<int> mi(d), lo_mi(d), lo(d), hi(d), target(d), off(d);
    bool is_m_matrix = (d == 1 && !tab.has_cross);
    const long center_slot = (n_slots - 1) / 2;

    // flux coefficients for the face (lo, axis); entries accumulate into the
    // caller's stencil with `sign` = -lambda/h for the upper face and
    // +lambda/h for the lower face of the row cell
    auto add_face = [&](const int* row_mi, const int* face_lo, int axis, double sign) {
        for (int k = 0; k < d; ++k) {
            lo[k] = face_lo[k];
            hi[k] = face_lo[k];
        }
        hi[axis] += 1;

        auto put = [&](const int* cell, double coeff) {
            if (!in_domain(cell, d, n)) return;  // Dirichlet ghost value 0
            for (int k = 0; k < d; ++k) off[k] = cell[k] - row_mi[k];
            stencil[slot_of(off.data())] += sign * coeff;
        };

        // normal diffusive flux: A * (u_hi - u_lo)/h
        double A = 0.5 * (cell_diag(lo.data(), axis) + cell_diag(hi.data(), axis));
        put(hi.data(), A / h);
        put(lo.data(), -A / h);

        // cross terms: A_ij * average of the four corner-centered differences
        if (tab.has_cross) {
            for (int j = 0; j < d; ++j) {
                if (j == axis) continue;
                double Aij = 0.5 * (cell_cross(lo.data(), axis, j) + cell_cross(hi.data(), axis, j));
                if (Aij == 0.0) continue;
                for (int s = 0; s < 4; ++s) {
                    const int* base = (s < 2) ? lo.data() : hi.data();
                    int dj = (s % 2 == 0) ? 1 : -1;
                    for (int k = 0; k < d; ++k) target[k] = base[k];
                    target[j] += dj;
                    put(target.data(), dj * Aij / (4.0 * h));
                }
            }
        }

        // advective flux: -vel * u_upwind, vel = b - sum_j (a_ij)_xj at the face
        double w = 0.5 * (cell_vel(lo.data(), axis) + cell_vel(hi.data(), axis));
        if (opts.drift == DriftScheme::Upwind) {
            put(w >= 0.0 ? lo.data() : hi.data(), -w);
        } else {
            put(lo.data(), -0.5 * w);
            put(hi.data(), -0.5 * w);
        }
    };

    for (long c = 0; c < N; ++c) {
        grid.unflatten(c, mi.data());
        std::fill(stencil.begin(), stencil.end(), 0.0);

        for (int i = 0; i < d; ++i) {
            // upper face (mi, i)
            bool upper_boundary = (mi[i] == n - 1);
            if (!(opts.boundary == BoundaryKind::NoFlux && upper_boundary))
                add_face(mi.data(), mi.data(), i, -lambda / h);
            // lower face (mi - e_i, i)
            bool lower_boundary = (mi[i] == 0);
            if (!(opts.boundary == BoundaryKind::NoFlux && lower_boundary)) {
                lo_mi = mi;
                lo_mi[i] -= 1;
                add_face(mi.data(), lo_mi.data(), i, lambda / h);
            }
        }

        // identity part
        stencil[center_slot] += 1.0;

        // compress the stencil in ascending column order
        double diag_val = 0.0;
        bool row_m = true;
        for (long s = 0; s < n_slots; ++s) {
            double val = stencil[s];
            if (val == 0.0) continue;
            long sd = s;
            bool ok = true;
            for (int k = 0; k < d; ++k) {
                int o = static_cast<int>(sd % 3) - 1;
                sd /= 3;
                target[k] = mi[k] + o;
                if (target[k] < 0 || target[k] >= n) ok = false;
            }
            if (!ok) continue;
            long col = grid.flatten(target.data());
            op.cols_.push_back(col);
            op.vals_.push_back(val);
            if (col == c)
                diag_val = val;
            else if (val > 1e-12)
                row_m = false;
        }
        op.row_ptr_.push_back(static_cast<long>(op.cols_.size()));
        if (is_m_matrix && (!row_m || diag_val <= 0.0)) is_m_matrix = false;
    }

    op.m_matrix_ = is_m_matrix;
#ifndef NDEBUG
    if (d == 1 && !tab.has_cross && !is_m_matrix)
        log(LogLevel::Debug, "assemble: 1-D operator is not an M-matrix at this frozen state");
#endif
    return op;
}

// ---------------------------------------------------------------------------
// SparseOperator
// ---------------------------------------------------------------------------

void SparseOperator::apply(std::span<const double> x, std::span<double> y) const {
    const long N = size();
    for (long r = 0; r < N; ++r) {
        double acc = 0.0;
        for (long k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) acc += vals_[k] * x[cols_[k]];
        y[r] = acc;
    }
}

std::vector<double> SparseOperator::column_sums() const {
    std::vector<double> cs(size(), 0.0);
    for (long r = 0; r < size(); ++r)
        for (long k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) cs[cols_[k]] += vals_[k];
    return cs;
}

double SparseOperator::entry(long row, long col) const {
    for (long k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k)
        if (cols_[k] == col) return vals_[k];
    return 0.0;
}

// ---------------------------------------------------------------------------
// Linear solvers
// ---------------------------------------------------------------------------

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> solve_tridiagonal(const SparseOperator& op, std::span<const double> rhs) {
    const long N = op.size();
    std::vector<double> dl(N, 0.0), dg(N, 0.0), du(N, 0.0);
    for (long r = 0; r < N; ++r) {
        for (long k = op.row_ptr()[r]; k < op.row_ptr()[r + 1]; ++k) {
            long c = op.cols()[k];
            if (c == r - 1) dl[r] = op.values()[k];
            else if (c == r) dg[r] = op.values()[k];
            else if (c == r + 1) du[r] = op.values()[k];
        }
    }
    std::vector<double> cp(N), x(N);
    double denom = dg[0];
    if (std::fabs(denom) < 1e-300) throw BreakdownError("tridiagonal elimination hit a zero pivot");
    cp[0] = du[0] / denom;
    x[0] = rhs[0] / denom;
    for (long i = 1; i < N; ++i) {
        denom = dg[i] - dl[i] * cp[i - 1];
        if (std::fabs(denom) < 1e-300) throw BreakdownError("tridiagonal elimination hit a zero pivot");
        cp[i] = du[i] / denom;
        x[i] = (rhs[i] - dl[i] * x[i - 1]) / denom;
    }
    for (long i = N - 2; i >= 0; --i) x[i] -= cp[i] * x[i + 1];
    return x;
}

// preconditioned BiCGStab, diagonal (Jacobi) preconditioner
std::vector<double> bicgstab(const SparseOperator& op, std::span<const double> rhs, double tol,
                             int max_iter, std::span<const double> x0) {
    const long N = op.size();
    std::vector<double> prec(N);
    for (long r = 0; r < N; ++r) {
        double dgn = op.entry(r, r);
        prec[r] = std::fabs(dgn) > 1e-300 ? 1.0 / dgn : 1.0;
    }

    std::vector<double> x(N, 0.0);
    if (!x0.empty())
        for (long i = 0; i < N; ++i) x[i] = x0[i];

    const double bnorm = norm2(rhs);
    if (bnorm == 0.0) return std::vector<double>(N, 0.0);
    const double target = tol * bnorm;

    std::vector<double> r(N), rhat(N), p(N, 0.0), vv(N, 0.0), s(N), t(N), phat(N), shat(N);
    op.apply(x, r);
    for (long i = 0; i < N; ++i) r[i] = rhs[i] - r[i];
    rhat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    double resid = norm2(r);

    for (int it = 1; it <= max_iter && resid > target; ++it) {
        double rho1 = dot(rhat, r);
        if (std::fabs(rho1) < 1e-290 * bnorm)
            throw BreakdownError("BiCGStab breakdown: rho vanished");
        if (it == 1) {
            p = r;
        } else {
            double beta = (rho1 / rho) * (alpha / omega);
            for (long i = 0; i < N; ++i) p[i] = r[i] + beta * (p[i] - omega * vv[i]);
        }
        for (long i = 0; i < N; ++i) phat[i] = prec[i] * p[i];
        op.apply(phat, vv);
        double rv = dot(rhat, vv);
        if (std::fabs(rv) < 1e-290 * bnorm)
            throw BreakdownError("BiCGStab breakdown: r_hat orthogonal to v");
        alpha = rho1 / rv;
        for (long i = 0; i < N; ++i) s[i] = r[i] - alpha * vv[i];
        if (norm2(s) <= target) {
            for (long i = 0; i < N; ++i) x[i] += alpha * phat[i];
            op.apply(x, r);
            for (long i = 0; i < N; ++i) r[i] = rhs[i] - r[i];
            resid = norm2(r);
            rho = rho1;
            continue;
        }
        for (long i = 0; i < N; ++i) shat[i] = prec[i] * s[i];
        op.apply(shat, t);
        double tt = dot(t, t);
        if (tt == 0.0) throw BreakdownError("BiCGStab breakdown: t vanished");
        omega = dot(t, s) / tt;
        if (omega == 0.0) throw BreakdownError("BiCGStab breakdown: omega vanished");
        for (long i = 0; i < N; ++i) x[i] += alpha * phat[i] + omega * shat[i];
        for (long i = 0; i < N; ++i) r[i] = s[i] - omega * t[i];
        rho = rho1;
        resid = norm2(r);
    }

    // a-posteriori check against the true residual
    std::vector<double> check(N);
    op.apply(x, check);
    double true_res = 0.0;
    for (long i = 0; i < N; ++i) {
        double e = check[i] - rhs[i];
        true_res += e * e;
    }
    true_res = std::sqrt(true_res);
    if (true_res > target * (1.0 + 1e-9)) throw NonConvergence(max_iter, true_res / bnorm);
    return x;
}

}  // namespace

std::vector<double> solve_linear(const SparseOperator& op, std::span<const double> rhs, double tol,
                                 int max_iter, std::span<const double> x0) {
    if (op.size() != static_cast<long>(rhs.size()))
        throw ValidationError("solve_linear: size mismatch");
    for (double v : rhs)
        if (!std::isfinite(v)) throw ValidationError("solve_linear: rhs must be finite");

    if (op.grid().dim == 1) {
        auto x = solve_tridiagonal(op, rhs);
        // direct elimination; verify the contract anyway
        std::vector<double> check(x.size());
        op.apply(x, check);
        double rn = 0.0, bn = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double e = check[i] - rhs[i];
            rn += e * e;
            bn += rhs[i] * rhs[i];
        }
        if (bn > 0.0 && std::sqrt(rn) > std::max(tol, 1e-10) * std::sqrt(bn))
            throw NonConvergence(1, std::sqrt(rn / bn));
        return x;
    }
    try {
        return bicgstab(op, rhs, tol, max_iter, x0);
    } catch (const BreakdownError&) {
        // one retry from a fresh initial guess
        return bicgstab(op, rhs, tol, max_iter, {});
    }
}

}  // namespace fpmv
