// Coefficient sets a_ij(x,u), b_i(x,u): hypothesis verification by
// low-discrepancy sampling, the admissible step bound lambda0, and the
// regularized variants (added viscosity, mollified coefficients) the
// solver pipeline consumes.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expr.hpp"

namespace fpmv {

enum class CoeffMode { Nondegenerate, DegenerateXIndependent };

struct CoefficientSet {
    int dim = 1;
    CoeffMode mode = CoeffMode::Nondegenerate;
    std::vector<Expr> a_upper;  // upper triangle, row-major: (i,j) with i <= j
    std::vector<Expr> b;        // size dim
    double gamma = 0.0;         // declared ellipticity (required > 0 when nondegenerate)
    std::optional<double> b_inf;
    std::optional<double> c_inf;

    static int tri_size(int d) { return d * (d + 1) / 2; }
    static int tri_index(int i, int j, int d);

    const Expr& a(int i, int j) const;
    bool x_independent() const;
    bool b_all_zero() const;

    /// Structural invariants; throws ValidationError.
    void validate() const;

    double a_value(int i, int j, std::span<const double> x, double u) const;
    double a_du(int i, int j, std::span<const double> x, double u) const;
    double a_dx(int i, int j, int k, std::span<const double> x, double u) const;
    double b_value(int i, std::span<const double> x, double u) const;
};

struct SampleBox {
    std::vector<double> x_lo, x_hi;
    double u_lo = 0.0, u_hi = 1.0;

    static SampleBox cube(int dim, double x_half_width, double u_lo, double u_hi);
};

struct HypothesisCheck {
    std::string name;
    bool pass = true;
    double value = 0.0;
    double bound = 0.0;
    std::vector<double> witness_x;  // empty when the check passed
    double witness_u = 0.0;
    std::string note;
};

struct HypothesisReport {
    bool all_pass = true;
    std::vector<HypothesisCheck> checks;
    double min_ellipticity = 0.0;
    double max_abs_b = 0.0;
    double max_abs_a_x = 0.0;
    double max_b_at_zero = 0.0;
    double symmetry_residual = 0.0;
    double est_b_inf = 0.0;  // observed sup inflated by 10%
    double est_c_inf = 0.0;
    SampleBox box;
    int samples = 0;
    std::uint64_t seed = 0;

    std::string to_text() const;  // flat key-value block
};

/// Coefficient set plus regularization state. With both epsilons zero the
/// evaluations reduce exactly to the base set.
class RegularizedSet {
public:
    explicit RegularizedSet(CoefficientSet base);

    const CoefficientSet& base() const { return base_; }
    int dim() const { return base_.dim; }
    double viscosity_eps() const { return viscosity_eps_; }
    double mollifier_eps() const { return mollifier_eps_; }
    int mollifier_nodes() const { return mollifier_nodes_; }
    double gamma_eff() const;

    // Solver-facing surface; all regularization applied.
    double astar_entry(int i, int j, std::span<const double> x, double u) const;
    double astar_u_entry(int i, int j, std::span<const double> x, double u) const;
    double a_x_entry(int i, int j, std::span<const double> x, double u) const;  // d a_ij / d x_j
    double b_entry(int i, std::span<const double> x, double u) const;

    // a*(x,u) = a_ij(x,u) u and its u-derivative, as row-major d x d matrices.
    std::vector<double> astar(std::span<const double> x, double u) const;
    std::vector<double> astar_u(std::span<const double> x, double u) const;

    friend RegularizedSet add_viscosity(const CoefficientSet&, double eps);
    friend RegularizedSet mollify(const CoefficientSet&, double eps, int nodes);
    friend RegularizedSet add_viscosity(RegularizedSet set, double eps);

private:
    struct QuadPoint {
        std::vector<double> y;  // x-shift directions, size dim
        double v = 0.0;         // u-shift
        double w = 0.0;         // weight including the mollifier density
    };
    void build_quadrature();
    double mollified_value(const Expr& e, std::span<const double> x, double u) const;
    double mollified_du(const Expr& e, std::span<const double> x, double u) const;
    double mollified_dx(const Expr& e, int k, std::span<const double> x, double u) const;

    CoefficientSet base_;
    double viscosity_eps_ = 0.0;
    double mollifier_eps_ = 0.0;
    int mollifier_nodes_ = 0;
    std::vector<QuadPoint> quad_;
};

RegularizedSet add_viscosity(const CoefficientSet& set, double eps);
RegularizedSet add_viscosity(RegularizedSet set, double eps);
RegularizedSet mollify(const CoefficientSet& set, double eps, int nodes);

HypothesisReport check_hypotheses(const RegularizedSet& set, const SampleBox& box, int samples,
                                  std::uint64_t seed = 0);

/// gamma_eff * (b_inf^2 + c_inf^2)^{-1}; +inf when b_inf = c_inf = 0.
/// Throws MissingBounds when bounds are neither declared nor derivable.
double lambda0(const RegularizedSet& set);

/// Returns a copy with undeclared b_inf/c_inf filled from the report's
/// inflated estimates; declared values win.
CoefficientSet with_resolved_bounds(CoefficientSet set, const HypothesisReport& report);

/// Radical-inverse Halton point in [0,1)^k; deterministic in (seed, index).
void halton_point(std::uint64_t index, int k, double* out);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace fpmv
