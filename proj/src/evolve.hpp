// Mild-solution time stepping (implicit Euler through the resolvent), the
// exponential-formula self-convergence check, the vanishing-viscosity path
// for degenerate coefficients, and the distributional residual check.
#pragma once

#include <string>
#include <vector>

#include "resolvent.hpp"

namespace fpmv {

struct StepDiagnostics {
    int step = 0;
    double time = 0.0;
    int outer_iterations = 0;
    int lambda_substeps = 0;
    double mass = 0.0;
    double min_value = 0.0;
    double l1_increment = 0.0;
    double dirichlet_leak = 0.0;
};

struct EvolutionTrace {
    Grid grid;
    double T = 0.0;
    int n_steps = 0;
    std::vector<double> times;            // n_steps + 1 entries
    std::vector<DensityField> snapshots;  // snapshot 0 is the initial state
    std::vector<StepDiagnostics> steps;   // n_steps entries

    double total_leak() const;
    double min_snapshot_value() const;
};

EvolutionTrace evolve(const DensityField& u0, double T, int n_steps, const RegularizedSet& coeffs,
                      const ResolventParams& params);

struct ConvergenceEntry {
    int n_coarse = 0, n_fine = 0;
    double l1_diff = 0.0;      // final snapshots at n_coarse vs n_fine
    double observed_order = 0.0;  // defined from the next pair; NaN on the last
};

struct ConvergenceReport {
    std::vector<ConvergenceEntry> entries;
    bool cauchy = false;  // differences strictly decreasing
};

/// n_list must have >= 3 entries, each dividing the next.
ConvergenceReport exponential_check(const DensityField& u0, double T, std::span<const int> n_list,
                                    const RegularizedSet& coeffs, const ResolventParams& params);

struct ViscosityReport {
    std::vector<double> eps_list;           // as supplied, decreasing
    std::vector<double> pairwise_l1;        // final-time distances of consecutive eps
    bool cauchy = false;
    double extrapolation_eps_small = 0.0;
    double extrapolation_eps_large = 0.0;
    double min_extrapolated = 0.0;
    std::string warning;  // NotCauchy note; empty when clean
};

/// Runs evolve with added viscosity for each epsilon (>= 3, decreasing) and
/// returns the Richardson extrapolation (linear in eps) of the two smallest.
std::pair<EvolutionTrace, ViscosityReport> vanishing_viscosity(
    const DensityField& u0, double T, int n_steps, const CoefficientSet& coeffs,
    std::span<const double> eps_list, const ResolventParams& params);

/// Space-time residual of the distributional form against test functions
/// phi(t, x) supplied in the expression DSL (variables t, x1..xd). Midpoint
/// rule in time, cell sums in space; first derivatives of phi are exact,
/// second derivatives are centered differences of the exact first partials.
std::vector<double> weak_residual(const EvolutionTrace& trace, const CoefficientSet& coeffs,
                                  std::span<const Expr> phis);

/// Products of bump functions in t and each axis, three scales.
std::vector<Expr> default_test_battery(int dim, double L, double T);

void write_trace(const std::string& dir, const EvolutionTrace& trace, bool timestamp);
void write_expcheck_csv(const std::string& path, std::span<const int> n_list,
                        const ConvergenceReport& report, bool timestamp);
void write_viscosity_csv(const std::string& path, const ViscosityReport& report, bool timestamp);

}  // namespace fpmv
