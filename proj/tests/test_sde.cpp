#include <doctest.h>

#include <cmath>
#include <cstring>

#include "common.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "sde.hpp"

using namespace fpmv;

namespace {

CoefficientSet coeffs_1d(const char* a_src, const char* b_src,
                         CoeffMode mode = CoeffMode::Nondegenerate, double gamma = 1.0) {
    SymbolTable s{1, true, false};
    CoefficientSet cs;
    cs.dim = 1;
    cs.mode = mode;
    cs.gamma = gamma;
    cs.a_upper.push_back(Expr::parse(a_src, s));
    cs.b.push_back(Expr::parse(b_src, s));
    return cs;
}

DensityField gaussian_field(const Grid& g, double variance) {
    DensityField f(g);
    for (long c = 0; c < g.total_cells(); ++c) {
        double x = g.center(0, c);
        f.values[c] = std::exp(-x * x / (2.0 * variance));
    }
    normalize_mass(f);
    return f;
}

// a trace whose snapshots are all equal; good enough to freeze coefficients
// that do not depend on the density
EvolutionTrace constant_trace(const Grid& g, const DensityField& f, double T, int n_steps) {
    EvolutionTrace t;
    t.grid = g;
    t.T = T;
    t.n_steps = n_steps;
    for (int i = 0; i <= n_steps; ++i) {
        t.times.push_back(T * i / n_steps);
        t.snapshots.push_back(f);
    }
    return t;
}

}  // namespace

TEST_SUITE("sde") {

TEST_CASE("diffusion amplitude") {
    // a = I/2 -> sigma = I under the FPE-matching convention
    double half_i[] = {0.5, 0.0, 0.0, 0.5};
    auto s = diffusion_amplitude(half_i, 2);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[3] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(0.0));

    double diag28[] = {2.0, 0.0, 0.0, 8.0};
    auto s2 = diffusion_amplitude(diag28, 2);
    CHECK(s2[0] == doctest::Approx(2.0));
    CHECK(s2[3] == doctest::Approx(4.0));

    // literal convention: sigma*sigma^T = a
    auto s3 = diffusion_amplitude(diag28, 2, AmplitudeConvention::PaperLiteral);
    CHECK(s3[0] == doctest::Approx(std::sqrt(2.0)));

    // random SPD reconstruction: ||Sigma Sigma^T - 2a||_inf <= 1e-12
    std::uint64_t ctr = 0;
    for (int trial = 0; trial < 20; ++trial) {
        double m[9];
        for (int i = 0; i < 9; ++i) m[i] = rng::u01_open(rng::philox2x64(21, trial, ctr++).x) - 0.5;
        double a[9];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                a[i * 3 + j] = 0.0;
                for (int k = 0; k < 3; ++k) a[i * 3 + j] += m[i * 3 + k] * m[j * 3 + k];
            }
        auto sig = diffusion_amplitude({a, 9}, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double rec = 0.0;
                for (int k = 0; k < 3; ++k) rec += sig[i * 3 + k] * sig[j * 3 + k];
                CHECK(std::fabs(rec - 2.0 * a[i * 3 + j]) <= 1e-12);
            }
    }

    double indef[] = {0.0, 1.0, 1.0, 0.0};  // eigenvalues +-1
    CHECK_THROWS_AS(diffusion_amplitude(indef, 2), NotPSD);
}

TEST_CASE("deterministic flow: zero diffusion, unit drift") {
    Grid g(1, 10.0, 64);
    DensityField u0 = gaussian_field(g, 0.2);
    auto trace = constant_trace(g, u0, 1.0, 8);
    auto cs = coeffs_1d("0", "1", CoeffMode::DegenerateXIndependent, 0.0);
    SimulateOptions opts;
    opts.n_particles = 64;
    opts.dt = 1e-3;
    opts.seed = 5;
    auto ens = simulate(trace, cs, opts);
    REQUIRE(ens.size() == 9);
    for (long p = 0; p < 64; ++p)
        CHECK(ens.back().positions[p] - ens.front().positions[p] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant diffusion from a point source matches the Gaussian variance") {
    Grid g(1, 10.0, 64);
    DensityField u0 = gaussian_field(g, 0.2);
    auto trace = constant_trace(g, u0, 1.0, 10);
    auto cs = coeffs_1d("0.5", "0");
    SimulateOptions opts;
    opts.n_particles = 100000;
    opts.dt = 2e-3;
    opts.seed = 11;
    std::vector<double> zeros(opts.n_particles, 0.0);
    auto ens = simulate_from(std::move(zeros), trace, cs, opts);
    const auto& xs = ens.back().positions;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    // variance rate 2a = 1.0; CLT tolerance 3*sqrt(2/N)
    CHECK(std::fabs(var - 1.0) <= 3.0 * std::sqrt(2.0 / opts.n_particles));
    CHECK(std::fabs(mean) <= 3.0 / std::sqrt(static_cast<double>(opts.n_particles)));
}

TEST_CASE("same seed gives bit-identical trajectories") {
    Grid g(1, 6.0, 64);
    DensityField u0 = gaussian_field(g, 0.3);
    auto trace = constant_trace(g, u0, 0.5, 4);
    auto cs = coeffs_1d("1+u^2/(1+u^2)", "tanh(u)");
    SimulateOptions opts;
    opts.n_particles = 500;
    opts.dt = 5e-3;
    opts.seed = 123;
    auto a = simulate(trace, cs, opts);
    auto b = simulate(trace, cs, opts);
    CHECK(std::memcmp(a.back().positions.data(), b.back().positions.data(),
                      sizeof(double) * a.back().positions.size()) == 0);
    opts.seed = 124;
    auto c = simulate(trace, cs, opts);
    CHECK(std::memcmp(a.back().positions.data(), c.back().positions.data(),
                      sizeof(double) * a.back().positions.size()) != 0);
}

TEST_CASE("estimate_marginal: histogram normalization") {
    Grid g(1, 4.0, 8);  // h = 1
    ParticleEnsemble ens;
    ens.count = 10;
    ens.dim = 1;
    ens.positions.assign(10, -3.5);  // all in cell 0
    auto f = estimate_marginal(ens, g);
    CHECK(f.values[0] == doctest::Approx(1.0));
    for (int c = 1; c < 8; ++c) CHECK(f.values[c] == 0.0);
    CHECK(f.mass() == doctest::Approx(1.0));

    ens.positions[0] = 99.0;  // escapes
    auto f2 = estimate_marginal(ens, g);
    CHECK(f2.mass() == doctest::Approx(0.9));

    ParticleEnsemble empty;
    empty.count = 0;
    empty.dim = 1;
    CHECK_THROWS_AS(estimate_marginal(empty, g), ValidationError);
}

TEST_CASE("identical distributions compare to zero") {
    Grid g(1, 4.0, 8);  // h = 1
    DensityField f(g);
    for (int c = 0; c < 8; ++c) f.values[c] = (c + 1) / 36.0;  // mass 1
    ParticleEnsemble ens;
    ens.dim = 1;
    ens.count = 36;
    for (int c = 0; c < 8; ++c)
        for (int k = 0; k <= c; ++k) ens.positions.push_back(g.center(0, c));
    REQUIRE(static_cast<long>(ens.positions.size()) == ens.count);
    CHECK(l1_dist(estimate_marginal(ens, g), f) <= 1e-15);  // histogram accumulation rounding
}

TEST_CASE("uniform samples fill cells within binomial deviations") {
    Grid g(1, 2.0, 16);
    ParticleEnsemble ens;
    ens.dim = 1;
    ens.count = 1000000;
    ens.positions.resize(ens.count);
    for (long p = 0; p < ens.count; ++p)
        ens.positions[p] = -2.0 + 4.0 * rng::u01_open(rng::philox2x64(77, 0, p).x);
    auto f = estimate_marginal(ens, g);
    const double pcell = 1.0 / 16.0;
    const double sd = std::sqrt(pcell * (1 - pcell) / static_cast<double>(ens.count));
    for (int c = 0; c < 16; ++c) {
        double got_p = f.values[c] * g.cell_volume();
        CHECK(std::fabs(got_p - pcell) <= 5.0 * sd);
    }
}

TEST_CASE("W1 and KS: identical densities give zero, sampled ones stay near") {
    Grid g(1, 10.0, 200);
    DensityField f = gaussian_field(g, 1.25);

    // degenerate check: the density against its own quantile sampler
    auto trace = constant_trace(g, f, 1.0, 1);
    SimulateOptions opts;
    opts.n_particles = 100000;
    opts.dt = 1.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        opts.seed = seed;
        auto ens = simulate(trace, coeffs_1d("0", "0", CoeffMode::DegenerateXIndependent, 0.0),
                            opts);
        const auto& start = ens.front();
        std::vector<double> xs(start.positions.begin(), start.positions.end());
        double w1 = wasserstein1_1d(xs, g, f.values);
        CHECK(w1 <= 4.0 * g.half_width / std::sqrt(static_cast<double>(opts.n_particles)));
        double ks = kolmogorov_smirnov_1d(xs, g, f.values);
        CHECK(ks <= 0.02);
    }
}

TEST_CASE("superposition check on a frozen heat trace") {
    Grid g(1, 10.0, 200);
    DensityField u0 = gaussian_field(g, 0.25);
    auto cs = coeffs_1d("1", "0");

    // proper evolution for the trace
    RegularizedSet reg{cs};
    auto trace = evolve(u0, 0.5, 16, reg, ResolventParams{});

    SimulateOptions opts;
    opts.n_particles = 40000;
    opts.dt = 1e-3;
    opts.seed = 9;
    auto ens = simulate(trace, cs, opts);
    std::vector<double> times{0.0, trace.times.back()};
    auto rows = superposition_check(trace, ens, times);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].w1_axis[0] <= 0.02);
    CHECK(rows[1].w1_axis[0] <= 0.03);
    CHECK(rows[1].l1 <= 0.2);
    CHECK_FALSE(rows[1].nearest_time_used);

    std::vector<double> off{0.123456};
    auto near = superposition_check(trace, ens, off);
    CHECK(near[0].nearest_time_used);
}

TEST_CASE("W1 of a point mass against its own cell is h/4 exactly") {
    Grid g(1, 4.0, 8);  // h = 1, cell 4 spans [0,1], center 0.5
    std::vector<double> density(8, 0.0);
    density[4] = 1.0;  // unit mass in one cell
    std::vector<double> particles(100, 0.5);
    double w1 = wasserstein1_1d(particles, g, density);
    CHECK(w1 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("marginal W1 improves monotonically over three refinement levels") {
    // N x10, dt and h halved per level on a frozen heat trace
    auto cs = coeffs_1d("0.5", "0");
    RegularizedSet reg{cs};
    long Ns[] = {1000, 10000, 100000};
    double dts[] = {4e-3, 2e-3, 1e-3};
    int ns[] = {100, 200, 400};
    double prev = 1e9;
    for (int lvl = 0; lvl < 3; ++lvl) {
        Grid g(1, 8.0, ns[lvl]);
        DensityField u0 = gaussian_field(g, 0.25);
        auto trace = evolve(u0, 0.25, 8, reg, ResolventParams{});
        SimulateOptions opts;
        opts.n_particles = Ns[lvl];
        opts.dt = dts[lvl];
        opts.seed = 500 + lvl;
        opts.record_stride = 8;
        auto ens = simulate(trace, cs, opts);
        std::vector<double> times{0.25};
        double w1 = superposition_check(trace, ens, times)[0].w1_axis[0];
        CHECK(w1 < prev);
        prev = w1;
    }
}

TEST_CASE("escaped particles are reported and keep diffusing") {
    Grid g(1, 1.0, 8);  // tiny box
    DensityField u0 = gaussian_field(g, 0.1);
    auto trace = constant_trace(g, u0, 1.0, 4);
    auto cs = coeffs_1d("0.5", "0");
    SimulateOptions opts;
    opts.n_particles = 2000;
    opts.dt = 1e-2;
    opts.seed = 3;
    auto ens = simulate(trace, cs, opts);
    CHECK(ens.back().escaped_fraction > 0.2);
    for (double x : ens.back().positions) CHECK(std::isfinite(x));
}

TEST_CASE("2-D anisotropic diffusion: per-axis variance rates and marginals") {
    SymbolTable s{2, true, false};
    CoefficientSet cs;
    cs.dim = 2;
    cs.mode = CoeffMode::Nondegenerate;
    cs.gamma = 0.5;
    cs.a_upper.push_back(Expr::parse("0.5", s));
    cs.a_upper.push_back(Expr::parse("0", s));
    cs.a_upper.push_back(Expr::parse("2", s));
    cs.b.push_back(Expr::parse("0", s));
    cs.b.push_back(Expr::parse("0", s));

    Grid g(2, 8.0, 16);
    DensityField u0(g);
    std::vector<double> x(2);
    for (long c = 0; c < g.total_cells(); ++c) {
        g.cell_center(c, x.data());
        u0.values[c] = std::exp(-(x[0] * x[0] + x[1] * x[1]) / 0.4);
    }
    normalize_mass(u0);
    EvolutionTrace trace = constant_trace(g, u0, 0.5, 5);

    SimulateOptions opts;
    opts.n_particles = 40000;
    opts.dt = 0.02;
    opts.seed = 61;
    std::vector<double> zeros(2 * opts.n_particles, 0.0);
    auto ens = simulate_from(std::move(zeros), trace, cs, opts);
    const auto& xs = ens.back().positions;
    double var[2] = {0.0, 0.0};
    for (long p = 0; p < opts.n_particles; ++p) {
        var[0] += xs[p * 2] * xs[p * 2];
        var[1] += xs[p * 2 + 1] * xs[p * 2 + 1];
    }
    var[0] /= opts.n_particles;
    var[1] /= opts.n_particles;
    // variance rate per axis is 2 a_ii: 0.5 and 2.0 over T = 0.5
    CHECK(std::fabs(var[0] - 0.5) <= 3.0 * 0.5 * std::sqrt(2.0 / opts.n_particles));
    CHECK(std::fabs(var[1] - 2.0) <= 3.0 * 2.0 * std::sqrt(2.0 / opts.n_particles));

    // per-axis W1 against the initial snapshot for a cell-categorical sample
    auto sampled = simulate(trace, cs, opts);
    std::vector<double> times{0.0};
    auto rows = superposition_check(trace, sampled, times);
    REQUIRE(rows[0].w1_axis.size() == 2);
    CHECK(rows[0].w1_axis[0] <= 0.03);
    CHECK(rows[0].w1_axis[1] <= 0.03);
    CHECK(rows[0].ks_axis[0] <= 0.02);
}

TEST_CASE("dt must not exceed the trace step") {
    Grid g(1, 4.0, 16);
    DensityField u0 = gaussian_field(g, 0.2);
    auto trace = constant_trace(g, u0, 1.0, 10);  // step 0.1
    SimulateOptions opts;
    opts.n_particles = 10;
    opts.dt = 0.2;
    CHECK_THROWS_AS(simulate(trace, coeffs_1d("1", "0"), opts), ValidationError);
}

TEST_CASE("interpolation: linear in t, multilinear in x, zero outside") {
    Grid g(1, 2.0, 8);  // h = 0.5, centers -1.75 .. 1.75
    EvolutionTrace t;
    t.grid = g;
    t.T = 1.0;
    t.n_steps = 1;
    t.times = {0.0, 1.0};
    DensityField f0(g), f1(g);
    for (long c = 0; c < 8; ++c) {
        f0.values[c] = 1.0;
        f1.values[c] = 3.0;
    }
    t.snapshots = {f0, f1};
    std::vector<double> x{0.1};
    CHECK(interpolate_density(t, 0.0, x) == doctest::Approx(1.0));
    CHECK(interpolate_density(t, 0.5, x) == doctest::Approx(2.0));
    CHECK(interpolate_density(t, 1.0, x) == doctest::Approx(3.0));
    std::vector<double> outside{2.5};
    CHECK(interpolate_density(t, 0.5, outside) == 0.0);
    // tapers toward zero at the boundary: value at the last cell center is
    // the full cell value, halfway to the edge it has decayed
    std::vector<double> near_edge{1.75};
    CHECK(interpolate_density(t, 0.0, near_edge) == doctest::Approx(1.0));
}

}  // TEST_SUITE
