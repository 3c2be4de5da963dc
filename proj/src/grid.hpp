// Uniform tensor grid on [-L,L]^d, cell-averaged density fields, the
// conservative finite-volume assembly of the linearized elliptic operator
// I + lambda*A_v, and the sparse linear solvers behind the resolvent.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "coeffs.hpp"

namespace fpmv {

enum class BoundaryKind { Dirichlet, NoFlux };
enum class DriftScheme { Upwind, Centered };

struct Grid {
    int dim = 1;
    double half_width = 1.0;
    int cells_per_axis = 8;

    Grid() = default;
    Grid(int d, double L, int n);

    double spacing() const { return 2.0 * half_width / cells_per_axis; }
    long total_cells() const;
    double cell_volume() const;
    double center(int /*axis*/, long k) const { return -half_width + (k + 0.5) * spacing(); }
    void cell_center(long flat, double* out) const;
    long flatten(const int* mi) const;
    void unflatten(long flat, int* mi) const;
    bool operator==(const Grid& o) const {
        return dim == o.dim && half_width == o.half_width && cells_per_axis == o.cells_per_axis;
    }
};

struct DensityField {
    Grid grid;
    std::vector<double> values;

    DensityField() = default;
    explicit DensityField(const Grid& g, double fill = 0.0)
        : grid(g), values(static_cast<std::size_t>(g.total_cells()), fill) {}

    double mass() const;
    double min_value() const;
};

double l1_norm(const DensityField& f);
double l1_dist(const DensityField& f, const DensityField& g);
/// Scales to the target mass; throws ValidationError when mass <= 0.
void normalize_mass(DensityField& f, double target = 1.0);

void write_density_csv(const std::string& path, const DensityField& f, bool timestamp);
DensityField read_density_csv(const std::string& path);

struct AssemblyOptions {
    BoundaryKind boundary = BoundaryKind::Dirichlet;
    DriftScheme drift = DriftScheme::Upwind;
};

/// Compact-stencil CSR matrix of the form I + lambda*K. The flux part K
/// telescopes: interior column sums of K vanish to rounding.
class SparseOperator {
public:
    long size() const { return static_cast<long>(row_ptr_.size()) - 1; }
    double lambda() const { return lambda_; }
    const Grid& grid() const { return grid_; }
    bool m_matrix() const { return m_matrix_; }
    bool has_cross_terms() const { return has_cross_; }

    void apply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> column_sums() const;
    double entry(long row, long col) const;

    std::span<const long> row_ptr() const { return row_ptr_; }
    std::span<const long> cols() const { return cols_; }
    std::span<const double> values() const { return vals_; }

private:
    friend SparseOperator assemble(const Grid&, const RegularizedSet&, const DensityField&, double,
                                   const AssemblyOptions&);
    Grid grid_;
    double lambda_ = 0.0;
    bool m_matrix_ = false;
    bool has_cross_ = false;
    std::vector<long> row_ptr_, cols_;
    std::vector<double> vals_;
};

/// Discretizes u - lambda * div G = f with face fluxes
///   G_i = sum_j (a*_ij)_u(x,v) D_j u + [sum_j (a_ij)_xj(x,v) - b_i(x,v)] u.
/// Normal diffusive fluxes average (a*)_u over the two adjacent cells and use
/// centered differences; cross terms use four-point corner averaging; the
/// advective part upwinds on the sign of the face-averaged velocity
/// b - sum_j (a_ij)_xj. Dirichlet boundaries take ghost values 0 (ghost
/// coefficients evaluate at v = 0); the no-flux variant zeroes boundary
/// fluxes instead (not the default).
SparseOperator assemble(const Grid& grid, const RegularizedSet& coeffs, const DensityField& v,
                        double lambda, const AssemblyOptions& opts = {});

/// Direct tridiagonal elimination for d = 1, BiCGStab with diagonal
/// preconditioning for d >= 2. Guarantees ||op*u - rhs||_2 <= tol*||rhs||_2;
/// throws NonConvergence or BreakdownError (after one restarted retry).
std::vector<double> solve_linear(const SparseOperator& op, std::span<const double> rhs, double tol,
                                 int max_iter, std::span<const double> x0 = {});

}  // namespace fpmv
