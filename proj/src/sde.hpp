// Particle simulation of the SDE with coefficients frozen through a computed
// density trace, empirical marginals, and the superposition comparison
// (L1, per-axis Wasserstein-1 and Kolmogorov-Smirnov).
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evolve.hpp"

namespace fpmv {

enum class AmplitudeConvention { MatchFpe, PaperLiteral };

struct ParticleEnsemble {
    long count = 0;
    int dim = 1;
    double time = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> positions;  // count x dim, row-major
    double escaped_fraction = 0.0;  // |x_k| > L on any axis
};

struct SimulateOptions {
    long n_particles = 10000;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    AmplitudeConvention convention = AmplitudeConvention::MatchFpe;
    int record_stride = 1;  // record every k-th trace time (final always kept)
};

/// Symmetric PSD square root: Sigma with Sigma*Sigma^T = 2a (MatchFpe) or
/// = a (PaperLiteral). Eigenvalues below -1e-12 raise NotPSD; small negative
/// ones clip to zero.
std::vector<double> diffusion_amplitude(std::span<const double> a, int d,
                                        AmplitudeConvention convention = AmplitudeConvention::MatchFpe);

/// Multilinear-in-x, linear-in-t interpolation of the trace; 0 outside the box.
double interpolate_density(const EvolutionTrace& trace, double t, std::span<const double> x);

/// Euler-Maruyama with coefficients evaluated at (X, u_hat(t, X)). Initial
/// positions sample snapshot 0 (inverse CDF in 1-D, cell-categorical with
/// in-cell jitter otherwise). dt is rounded down to divide the trace step.
std::vector<ParticleEnsemble> simulate(const EvolutionTrace& trace, const CoefficientSet& coeffs,
                                       const SimulateOptions& opts);

/// Same stepping from caller-supplied initial positions (time = trace start).
std::vector<ParticleEnsemble> simulate_from(std::vector<double> positions,
                                            const EvolutionTrace& trace,
                                            const CoefficientSet& coeffs,
                                            const SimulateOptions& opts);

/// Cell histogram normalized by N h^d; mass equals the in-box fraction.
DensityField estimate_marginal(const ParticleEnsemble& ens, const Grid& grid);

struct MarginalComparison {
    double time = 0.0;
    long n_particles = 0;
    double l1 = 0.0;
    std::vector<double> w1_axis;
    std::vector<double> ks_axis;
    bool nearest_time_used = false;
};

std::vector<MarginalComparison> superposition_check(const EvolutionTrace& trace,
                                                    std::span<const ParticleEnsemble> ensembles,
                                                    std::span<const double> times);

/// Exact W1 between the empirical measure of the samples and the piecewise
/// constant density (values, mass-normalized as given) on a 1-D grid.
double wasserstein1_1d(std::span<const double> samples, const Grid& axis_grid,
                       std::span<const double> density);

double kolmogorov_smirnov_1d(std::span<const double> samples, const Grid& axis_grid,
                             std::span<const double> density);

void write_ensemble_csv(const std::string& path, const ParticleEnsemble& ens, bool timestamp);
void write_comparison_csv(const std::string& path, std::span<const MarginalComparison> rows,
                          int dim, bool timestamp);

}  // namespace fpmv
