#include "coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "common.hpp"
#include "linalg.hpp"

namespace fpmv {

// ---------------------------------------------------------------------------
// CoefficientSet
// ---------------------------------------------------------------------------

int CoefficientSet::tri_index(int i, int j, int d) {
    if (i > j) std::swap(i, j);
    // row-major upper triangle of a d x d matrix
    return i * d - i * (i - 1) / 2 + (j - i);
}

const Expr& CoefficientSet::a(int i, int j) const { return a_upper[tri_index(i, j, dim)]; }

bool CoefficientSet::x_independent() const {
    for (const Expr& e : a_upper)
        if (e.references_x()) return false;
    for (const Expr& e : b)
        if (e.references_x()) return false;
    return true;
}

bool CoefficientSet::b_all_zero() const {
    for (const Expr& e : b)
        if (!e.is_literal_zero()) return false;
    return true;
}

void CoefficientSet::validate() const {
    std::vector<std::string> errs;
    if (dim < 1) errs.push_back("dim must be >= 1");
    if (static_cast<int>(a_upper.size()) != tri_size(dim))
        errs.push_back("diffusion matrix has wrong number of entries");
    if (static_cast<int>(b.size()) != dim) errs.push_back("drift vector has wrong number of entries");
    for (const Expr& e : a_upper)
        if (!e.valid()) errs.push_back("unparsed diffusion entry");
    for (const Expr& e : b)
        if (!e.valid()) errs.push_back("unparsed drift entry");
    if (mode == CoeffMode::Nondegenerate && gamma <= 0.0)
        errs.push_back("gamma must be > 0 in nondegenerate mode");
    if (mode == CoeffMode::DegenerateXIndependent && errs.empty() && !x_independent())
        errs.push_back("degenerate mode requires x-independent coefficients");
    if (!errs.empty()) {
        std::string msg = "invalid coefficient set:";
        for (const auto& e : errs) msg += " " + e + ";";
        throw ValidationError(msg);
    }
}

double CoefficientSet::a_value(int i, int j, std::span<const double> x, double u) const {
    return a(i, j).eval(x, u);
}

double CoefficientSet::a_du(int i, int j, std::span<const double> x, double u) const {
    return a(i, j).eval_with_partial(x, u, VarRef::u()).partial;
}

double CoefficientSet::a_dx(int i, int j, int k, std::span<const double> x, double u) const {
    const Expr& e = a(i, j);
    if (!e.references_x()) return 0.0;
    return e.eval_with_partial(x, u, VarRef::x(k)).partial;
}

double CoefficientSet::b_value(int i, std::span<const double> x, double u) const {
    return b[i].eval(x, u);
}

SampleBox SampleBox::cube(int dim, double x_half_width, double u_lo, double u_hi) {
    SampleBox box;
    box.x_lo.assign(dim, -x_half_width);
    box.x_hi.assign(dim, x_half_width);
    box.u_lo = u_lo;
    box.u_hi = u_hi;
    return box;
}

// ---------------------------------------------------------------------------
// Halton / Gauss-Legendre
// ---------------------------------------------------------------------------

static const int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

void halton_point(std::uint64_t index, int k, double* out) {
    for (int dim = 0; dim < k; ++dim) {
        const std::uint64_t base = kPrimes[dim % 12];
        double f = 1.0, r = 0.0;
        std::uint64_t i = index + 1;  // skip the all-zero point
        while (i > 0) {
            f /= static_cast<double>(base);
            r += f * static_cast<double>(i % base);
            i /= base;
        }
        out[dim] = r;
    }
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
}

// ---------------------------------------------------------------------------
// RegularizedSet
// ---------------------------------------------------------------------------

RegularizedSet::RegularizedSet(CoefficientSet base) : base_(std::move(base)) { base_.validate(); }

double RegularizedSet::gamma_eff() const {
    double g = base_.mode == CoeffMode::Nondegenerate ? base_.gamma : 0.0;
    return g + viscosity_eps_;
}

RegularizedSet add_viscosity(const CoefficientSet& set, double eps) {
    if (eps <= 0.0) throw ValidationError("viscosity epsilon must be > 0");
    RegularizedSet r(set);
    r.viscosity_eps_ = eps;
    return r;
}

RegularizedSet add_viscosity(RegularizedSet set, double eps) {
    if (eps <= 0.0) throw ValidationError("viscosity epsilon must be > 0");
    set.viscosity_eps_ += eps;
    return set;
}

RegularizedSet mollify(const CoefficientSet& set, double eps, int nodes) {
    if (eps <= 0.0) throw ValidationError("mollifier epsilon must be > 0");
    if (nodes < 3) throw ValidationError("mollifier quadrature needs at least 3 nodes per axis");
    if (set.mode != CoeffMode::Nondegenerate)
        throw ValidationError("mollification applies to nondegenerate coefficient sets");
    RegularizedSet r(set);
    r.mollifier_eps_ = eps;
    r.mollifier_nodes_ = nodes;
    r.build_quadrature();
    return r;
}

void RegularizedSet::build_quadrature() {
    const int q = base_.dim + 1;  // shifts in (x, u)
    std::vector<double> nodes, weights;
    gauss_legendre(mollifier_nodes_, nodes, weights);

    // tensor grid over [-1,1]^q, keeping points inside the unit ball where
    // the bump c*exp(-1/(1-|z|^2)) is positive, then normalizing to mass 1
    quad_.clear();
    std::vector<int> idx(q, 0);
    double total = 0.0;
    for (;;) {
        double norm2 = 0.0, w = 1.0;
        for (int k = 0; k < q; ++k) {
            norm2 += nodes[idx[k]] * nodes[idx[k]];
            w *= weights[idx[k]];
        }
        if (norm2 < 1.0) {
            double rho = std::exp(-1.0 / (1.0 - norm2));
            QuadPoint p;
            p.y.resize(base_.dim);
            for (int k = 0; k < base_.dim; ++k) p.y[k] = nodes[idx[k]];
            p.v = nodes[idx[q - 1]];
            p.w = w * rho;
            total += p.w;
            quad_.push_back(std::move(p));
        }
        int k = 0;
        while (k < q && ++idx[k] == mollifier_nodes_) idx[k++] = 0;
        if (k == q) break;
    }
    if (quad_.empty() || total <= 0.0)
        throw ValidationError("mollifier quadrature degenerated; increase nodes");
    for (auto& p : quad_) p.w /= total;
}

double RegularizedSet::mollified_value(const Expr& e, std::span<const double> x, double u) const {
    double acc = 0.0;
    std::vector<double> xs(x.begin(), x.end());
    for (const auto& p : quad_) {
        for (int k = 0; k < base_.dim; ++k) xs[k] = x[k] - mollifier_eps_ * p.y[k];
        acc += p.w * e.eval(xs, u - mollifier_eps_ * p.v);
    }
    return acc;
}

double RegularizedSet::mollified_du(const Expr& e, std::span<const double> x, double u) const {
    double acc = 0.0;
    std::vector<double> xs(x.begin(), x.end());
    for (const auto& p : quad_) {
        for (int k = 0; k < base_.dim; ++k) xs[k] = x[k] - mollifier_eps_ * p.y[k];
        acc += p.w * e.eval_with_partial(xs, u - mollifier_eps_ * p.v, VarRef::u()).partial;
    }
    return acc;
}

double RegularizedSet::mollified_dx(const Expr& e, int k, std::span<const double> x, double u) const {
    if (!e.references_x()) return 0.0;
    double acc = 0.0;
    std::vector<double> xs(x.begin(), x.end());
    for (const auto& p : quad_) {
        for (int m = 0; m < base_.dim; ++m) xs[m] = x[m] - mollifier_eps_ * p.y[m];
        acc += p.w * e.eval_with_partial(xs, u - mollifier_eps_ * p.v, VarRef::x(k)).partial;
    }
    return acc;
}

double RegularizedSet::astar_entry(int i, int j, std::span<const double> x, double u) const {
    double visc = (i == j) ? viscosity_eps_ * u : 0.0;
    if (mollifier_eps_ <= 0.0) return base_.a_value(i, j, x, u) * u + visc;
    // mollify a*(x,u) = a(x,u)u jointly in (x,u); the viscosity part is
    // linear in u and an even mollifier reproduces it exactly
    double acc = 0.0;
    std::vector<double> xs(x.begin(), x.end());
    const Expr& e = base_.a(i, j);
    for (const auto& p : quad_) {
        for (int k = 0; k < base_.dim; ++k) xs[k] = x[k] - mollifier_eps_ * p.y[k];
        double us = u - mollifier_eps_ * p.v;
        acc += p.w * e.eval(xs, us) * us;
    }
    return acc + visc;
}

double RegularizedSet::astar_u_entry(int i, int j, std::span<const double> x, double u) const {
    double visc = (i == j) ? viscosity_eps_ : 0.0;
    if (mollifier_eps_ <= 0.0) {
        auto r = base_.a(i, j).eval_with_partial(x, u, VarRef::u());
        return r.value + u * r.partial + visc;
    }
    double acc = 0.0;
    std::vector<double> xs(x.begin(), x.end());
    const Expr& e = base_.a(i, j);
    for (const auto& p : quad_) {
        for (int k = 0; k < base_.dim; ++k) xs[k] = x[k] - mollifier_eps_ * p.y[k];
        double us = u - mollifier_eps_ * p.v;
        auto r = e.eval_with_partial(xs, us, VarRef::u());
        acc += p.w * (r.value + us * r.partial);
    }
    return acc + visc;
}

double RegularizedSet::a_x_entry(int i, int j, std::span<const double> x, double u) const {
    const Expr& e = base_.a(i, j);
    if (!e.references_x()) return 0.0;
    if (mollifier_eps_ <= 0.0) return e.eval_with_partial(x, u, VarRef::x(j)).partial;
    return mollified_dx(e, j, x, u);
}

double RegularizedSet::b_entry(int i, std::span<const double> x, double u) const {
    const Expr& e = base_.b[i];
    if (mollifier_eps_ <= 0.0) return e.eval(x, u);
    return mollified_value(e, x, u);
}

std::vector<double> RegularizedSet::astar(std::span<const double> x, double u) const {
    const int d = base_.dim;
    std::vector<double> m(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) m[i * d + j] = m[j * d + i] = astar_entry(i, j, x, u);
    return m;
}

std::vector<double> RegularizedSet::astar_u(std::span<const double> x, double u) const {
    const int d = base_.dim;
    std::vector<double> m(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) m[i * d + j] = m[j * d + i] = astar_u_entry(i, j, x, u);
    return m;
}

// ---------------------------------------------------------------------------
// Hypothesis checking
// ---------------------------------------------------------------------------

HypothesisReport check_hypotheses(const RegularizedSet& set, const SampleBox& box, int samples,
                                  std::uint64_t seed) {
    const CoefficientSet& cs = set.base();
    const int d = cs.dim;
    if (samples < 1000) throw ValidationError("hypothesis check requires at least 1000 samples");
    if (static_cast<int>(box.x_lo.size()) != d || static_cast<int>(box.x_hi.size()) != d)
        throw ValidationError("sample box dimension mismatch");
    for (int k = 0; k < d; ++k)
        if (!(box.x_lo[k] < box.x_hi[k]) || !std::isfinite(box.x_lo[k]) || !std::isfinite(box.x_hi[k]))
            throw ValidationError("sample box must be finite and nonempty");
    if (!(box.u_lo < box.u_hi)) throw ValidationError("sample box must have u_lo < u_hi");

    HypothesisReport rep;
    rep.box = box;
    rep.samples = samples;
    rep.seed = seed;

    double min_eig = std::numeric_limits<double>::infinity();
    std::vector<double> min_eig_x(d);
    double min_eig_u = 0.0;
    double max_b = 0.0;
    std::vector<double> max_b_x(d);
    double max_b_u = 0.0;
    double max_ax = 0.0;
    std::vector<double> max_ax_x(d);
    double max_ax_u = 0.0;
    double max_b0 = 0.0;
    std::vector<double> max_b0_x(d);
    double sym_res = 0.0;

    std::vector<double> pt(d + 1);
    std::vector<double> x(d);
    std::vector<double> m(static_cast<std::size_t>(d) * d);
    // disjoint index blocks per seed keep reports seed-deterministic
    const std::uint64_t base = seed * 0x100000000ULL;
    for (int s = 0; s < samples; ++s) {
        halton_point(base + static_cast<std::uint64_t>(s), d + 1, pt.data());
        for (int k = 0; k < d; ++k) x[k] = box.x_lo[k] + pt[k] * (box.x_hi[k] - box.x_lo[k]);
        double u = box.u_lo + pt[d] * (box.u_hi - box.u_lo);

        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) m[i * d + j] = m[j * d + i] = set.astar_u_entry(i, j, x, u);
        double eig = min_eigenvalue_sym(m, d);
        if (eig < min_eig) {
            min_eig = eig;
            min_eig_x = x;
            min_eig_u = u;
        }

        for (int i = 0; i < d; ++i) {
            double bv = std::fabs(set.b_entry(i, x, u));
            if (bv > max_b) {
                max_b = bv;
                max_b_x = x;
                max_b_u = u;
            }
            double b0 = std::fabs(set.b_entry(i, x, 0.0));
            if (b0 > max_b0) {
                max_b0 = b0;
                max_b0_x = x;
            }
            for (int j = 0; j < d; ++j) {
                double axv = std::fabs(set.a_x_entry(i, j, x, u));
                if (axv > max_ax) {
                    max_ax = axv;
                    max_ax_x = x;
                    max_ax_u = u;
                }
            }
        }
    }

    rep.min_ellipticity = min_eig;
    rep.max_abs_b = max_b;
    rep.max_abs_a_x = max_ax;
    rep.max_b_at_zero = max_b0;
    rep.symmetry_residual = sym_res;  // one triangle stored: identically zero
    rep.est_b_inf = 1.1 * max_b;
    rep.est_c_inf = 1.1 * max_ax;

    const bool degenerate = cs.mode == CoeffMode::DegenerateXIndependent;
    const double gamma_bound = set.gamma_eff();

    {
        HypothesisCheck c;
        c.name = degenerate ? "H2'_ellipticity" : "H2_ellipticity";
        c.value = min_eig;
        c.bound = gamma_bound;
        c.pass = min_eig >= gamma_bound - 1e-12;
        if (!c.pass) {
            c.witness_x = min_eig_x;
            c.witness_u = min_eig_u;
        }
        rep.checks.push_back(std::move(c));
    }
    {
        HypothesisCheck c;
        c.name = "b_bound";
        c.value = max_b;
        if (cs.b_inf) {
            c.bound = *cs.b_inf;
            c.pass = max_b <= *cs.b_inf * (1.0 + 1e-12) + 1e-300;
            if (!c.pass) {
                c.witness_x = max_b_x;
                c.witness_u = max_b_u;
            }
        } else {
            c.bound = rep.est_b_inf;
            c.note = "estimated";
        }
        rep.checks.push_back(std::move(c));
    }
    {
        HypothesisCheck c;
        c.name = "a_x_bound";
        c.value = max_ax;
        if (cs.c_inf) {
            c.bound = *cs.c_inf;
            c.pass = max_ax <= *cs.c_inf * (1.0 + 1e-12) + 1e-300;
            if (!c.pass) {
                c.witness_x = max_ax_x;
                c.witness_u = max_ax_u;
            }
        } else {
            c.bound = rep.est_c_inf;
            c.note = "estimated";
        }
        rep.checks.push_back(std::move(c));
    }
    {
        HypothesisCheck c;
        c.name = degenerate ? "H3'_drift_vanishes_at_zero" : "H3_drift_vanishes_at_zero";
        c.value = max_b0;
        c.bound = 0.0;
        c.pass = max_b0 <= 1e-14;
        if (!c.pass) c.witness_x = max_b0_x;
        rep.checks.push_back(std::move(c));
    }
    {
        HypothesisCheck c;
        c.name = "symmetry";
        c.value = sym_res;
        c.bound = 1e-14;
        c.pass = true;
        rep.checks.push_back(std::move(c));
    }

    rep.all_pass = true;
    for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
    return rep;
}

std::string HypothesisReport::to_text() const {
    std::ostringstream os;
    os << "all_pass = " << (all_pass ? "true" : "false") << "\n";
    os << "samples = " << samples << "\n";
    os << "seed = " << seed << "\n";
    for (std::size_t k = 0; k < box.x_lo.size(); ++k)
        os << "box.x" << (k + 1) << " = [" << fmt17(box.x_lo[k]) << ", " << fmt17(box.x_hi[k]) << "]\n";
    os << "box.u = [" << fmt17(box.u_lo) << ", " << fmt17(box.u_hi) << "]\n";
    os << "min_ellipticity = " << fmt17(min_ellipticity) << "\n";
    os << "max_abs_b = " << fmt17(max_abs_b) << "\n";
    os << "max_abs_a_x = " << fmt17(max_abs_a_x) << "\n";
    os << "max_b_at_zero = " << fmt17(max_b_at_zero) << "\n";
    os << "symmetry_residual = " << fmt17(symmetry_residual) << "\n";
    os << "est_b_inf = " << fmt17(est_b_inf) << "\n";
    os << "est_c_inf = " << fmt17(est_c_inf) << "\n";
    for (const auto& c : checks) {
        os << c.name << " = " << (c.pass ? "pass" : "FAIL") << " (value " << fmt17(c.value)
           << ", bound " << fmt17(c.bound) << ")";
        if (!c.witness_x.empty()) {
            os << " witness x=(";
            for (std::size_t k = 0; k < c.witness_x.size(); ++k)
                os << (k ? "," : "") << fmt17(c.witness_x[k]);
            os << ") u=" << fmt17(c.witness_u);
        }
        if (!c.note.empty()) os << " [" << c.note << "]";
        os << "\n";
    }
    return os.str();
}

double lambda0(const RegularizedSet& set) {
    const CoefficientSet& cs = set.base();
    double b_inf, c_inf;
    if (cs.b_inf)
        b_inf = *cs.b_inf;
    else if (cs.b_all_zero())
        b_inf = 0.0;
    else
        throw MissingBounds("b_inf neither declared nor derivable; run a hypothesis check first");
    if (cs.c_inf)
        c_inf = *cs.c_inf;
    else if (cs.x_independent())
        c_inf = 0.0;
    else
        throw MissingBounds("c_inf neither declared nor derivable; run a hypothesis check first");

    if (b_inf == 0.0 && c_inf == 0.0) return std::numeric_limits<double>::infinity();
    return set.gamma_eff() / (b_inf * b_inf + c_inf * c_inf);
}

CoefficientSet with_resolved_bounds(CoefficientSet set, const HypothesisReport& report) {
    if (!set.b_inf) set.b_inf = set.b_all_zero() ? 0.0 : report.est_b_inf;
    if (!set.c_inf) set.c_inf = set.x_independent() ? 0.0 : report.est_c_inf;
    return set;
}

}  // namespace fpmv
