// Scenario configuration: a flat text format with dotted keys
// (`grid.L = 8.0`, `coeff.a.1.1 = "1+u^2"`), parsed and validated into the
// typed Scenario consumed by every command.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resolvent.hpp"
#include "sde.hpp"

namespace fpmv {

struct ConfigMap {
    struct Entry {
        std::string value;
        int line = 0;
        bool quoted = false;
        mutable bool used = false;
    };
    std::map<std::string, Entry> kv;

    static ConfigMap parse_text(const std::string& text);
    static ConfigMap parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);  // override support
};

struct Scenario {
    int dim = 1;
    double L = 1.0;
    int n = 8;
    BoundaryKind boundary = BoundaryKind::Dirichlet;
    DriftScheme drift = DriftScheme::Upwind;

    CoefficientSet coeffs;
    bool check_override = false;

    Expr u0_expr;
    double T = 1.0;
    int n_steps = 1;

    std::vector<double> viscosity_eps_list;
    double mollifier_eps = 0.0;
    int mollifier_nodes = 7;

    ResolventParams resolvent;
    double resolve_lambda = 0.0;  // defaults to T/n_steps

    struct {
        int samples = 4096;
        double u_min = 0.0;
        double u_max = 5.0;
    } check;

    struct {
        std::vector<double> lambdas{0.01, 0.1, 1.0};
        int trials = 50;
        std::uint64_t seed = 1234;
    } suite;

    struct {
        long N = 10000;
        double dt = 1e-3;
        std::uint64_t seed = 42;
        AmplitudeConvention convention = AmplitudeConvention::MatchFpe;
        int record_stride = 1;
    } sde;

    std::vector<int> expcheck_n_list{16, 32, 64, 128};
    std::vector<double> compare_times;  // empty = all recorded times
    int convergence_levels = 3;
    std::string out_dir = "out";

    Grid grid() const { return Grid(dim, L, n); }
    SampleBox check_box() const;
    /// Initial density evaluated on the grid and normalized to mass 1;
    /// negative values before normalization are a validation error.
    DensityField initial_density() const;
    DensityField initial_density(const Grid& g) const;
    /// Degenerate sets go through added viscosity (smallest epsilon of the
    /// list); nondegenerate sets are mollified when mollifier_eps > 0.
    RegularizedSet effective_coeffs() const;
};

/// Builds and fully validates; collects all failures into one
/// ValidationError listing field paths. Unknown keys are errors.
Scenario build_scenario(const ConfigMap& cfg);
Scenario load_scenario(const std::string& path);

}  // namespace fpmv
