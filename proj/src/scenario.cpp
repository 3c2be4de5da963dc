#include "scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "common.hpp"

namespace fpmv {

// ---------------------------------------------------------------------------
// ConfigMap
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_') return false;
    return true;
}

// strips surrounding quotes (expressions) or a trailing comment (bare values)
std::string normalize_value(std::string value, bool& quoted) {
    quoted = false;
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        quoted = true;
        return value.substr(1, value.size() - 2);
    }
    std::size_t hash = value.find('#');
    if (hash != std::string::npos) value = trim(value.substr(0, hash));
    return value;
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigParseError("expected 'key = value'", line_no);
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (!valid_key(key)) throw ConfigParseError("malformed key '" + key + "'", line_no);
        bool quoted = false;
        value = normalize_value(std::move(value), quoted);
        if (value.empty()) throw ConfigParseError("empty value for '" + key + "'", line_no);
        if (cfg.kv.count(key)) throw ConfigParseError("duplicate key '" + key + "'", line_no);
        cfg.kv[key] = Entry{value, line_no, quoted, false};
    }
    return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

void ConfigMap::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ValidationError("malformed override key '" + key + "'");
    bool quoted = false;
    std::string v = normalize_value(trim(value), quoted);
    if (v.empty()) throw ValidationError("empty override value for '" + key + "'");
    kv[key] = Entry{v, 0, quoted, false};
}

// ---------------------------------------------------------------------------
// Typed getters with error aggregation
// ---------------------------------------------------------------------------

namespace {

class Getter {
public:
    explicit Getter(const ConfigMap& cfg) : cfg_(cfg) {}

    bool has(const std::string& key) const { return cfg_.kv.count(key) > 0; }

    const std::string* raw(const std::string& key) const {
        auto it = cfg_.kv.find(key);
        if (it == cfg_.kv.end()) return nullptr;
        it->second.used = true;
        return &it->second.value;
    }

    double number(const std::string& key, double def) {
        const std::string* v = raw(key);
        if (!v) return def;
        return parse_number(key, *v, def);
    }

    double required_number(const std::string& key) {
        const std::string* v = raw(key);
        if (!v) {
            fail(key, "is required");
            return 0.0;
        }
        return parse_number(key, *v, 0.0);
    }

    long integer(const std::string& key, long def) {
        double d = number(key, static_cast<double>(def));
        long l = static_cast<long>(d);
        if (static_cast<double>(l) != d) fail(key, "must be an integer");
        return l;
    }

    bool boolean(const std::string& key, bool def) {
        const std::string* v = raw(key);
        if (!v) return def;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        fail(key, "must be true or false");
        return def;
    }

    std::string text(const std::string& key, const std::string& def) {
        const std::string* v = raw(key);
        return v ? *v : def;
    }

    std::vector<double> number_list(const std::string& key, std::vector<double> def) {
        const std::string* v = raw(key);
        if (!v) return def;
        std::vector<double> out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            out.push_back(parse_number(key, item, 0.0));
        }
        if (out.empty()) fail(key, "must be a comma separated list of numbers");
        return out;
    }

    void fail(const std::string& key, const std::string& why) {
        errors_.push_back(key + " " + why);
    }

    void finish(const char* what) {
        for (const auto& [key, entry] : cfg_.kv)
            if (!entry.used) errors_.push_back("unknown key '" + key + "'");
        if (errors_.empty()) return;
        std::string msg = std::string("invalid ") + what + ":";
        for (const auto& e : errors_) msg += "\n  - " + e;
        throw ValidationError(msg);
    }

    std::vector<std::string>& errors() { return errors_; }

private:
    double parse_number(const std::string& key, const std::string& v, double def) {
        const char* b = v.c_str();
        char* e = nullptr;
        double d = std::strtod(b, &e);
        if (e == b || *e != '\0' || !std::isfinite(d)) {
            fail(key, "must be a number (got '" + v + "')");
            return def;
        }
        return d;
    }

    const ConfigMap& cfg_;
    std::vector<std::string> errors_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

SampleBox Scenario::check_box() const {
    SampleBox box = SampleBox::cube(dim, L, check.u_min, check.u_max);
    return box;
}

DensityField Scenario::initial_density() const { return initial_density(grid()); }

DensityField Scenario::initial_density(const Grid& g) const {
    DensityField f(g);
    std::vector<double> x(g.dim);
    for (long c = 0; c < g.total_cells(); ++c) {
        g.cell_center(c, x.data());
        double v;
        try {
            v = u0_expr.eval(x, 0.0);
        } catch (const EvalDomainError& e) {
            throw ValidationError(std::string("initial.density cannot be evaluated at cell ") +
                                  std::to_string(c) + ": " + e.what());
        }
        if (v < 0.0)
            throw ValidationError("initial.density is negative at cell " + std::to_string(c) +
                                  " (value " + fmt17(v) + ")");
        f.values[c] = v;
    }
    normalize_mass(f, 1.0);
    return f;
}

RegularizedSet Scenario::effective_coeffs() const {
    if (coeffs.mode == CoeffMode::DegenerateXIndependent) {
        double eps = viscosity_eps_list.back();
        return add_viscosity(coeffs, eps);
    }
    if (mollifier_eps > 0.0) return mollify(coeffs, mollifier_eps, mollifier_nodes);
    return RegularizedSet(coeffs);
}

Scenario build_scenario(const ConfigMap& cfg) {
    Getter get(cfg);
    Scenario sc;

    sc.dim = static_cast<int>(get.integer("dim", 1));
    if (sc.dim < 1 || sc.dim > 8) get.fail("dim", "must lie in [1, 8]");
    const int d = std::max(1, std::min(sc.dim, 8));

    sc.L = get.required_number("grid.L");
    sc.n = static_cast<int>(get.integer("grid.n", 0));
    if (!get.has("grid.n")) get.fail("grid.n", "is required");
    std::string bnd = get.text("grid.boundary", "dirichlet");
    if (bnd == "dirichlet") sc.boundary = BoundaryKind::Dirichlet;
    else if (bnd == "noflux") sc.boundary = BoundaryKind::NoFlux;
    else get.fail("grid.boundary", "must be dirichlet or noflux");
    std::string dsc = get.text("grid.drift_scheme", "upwind");
    if (dsc == "upwind") sc.drift = DriftScheme::Upwind;
    else if (dsc == "centered") sc.drift = DriftScheme::Centered;
    else get.fail("grid.drift_scheme", "must be upwind or centered");

    // coefficient set
    std::string mode = get.text("coeff.mode", "nondegenerate");
    if (mode == "nondegenerate") sc.coeffs.mode = CoeffMode::Nondegenerate;
    else if (mode == "degenerate_x_independent") sc.coeffs.mode = CoeffMode::DegenerateXIndependent;
    else get.fail("coeff.mode", "must be nondegenerate or degenerate_x_independent");

    sc.coeffs.dim = d;
    SymbolTable coeff_syms{d, true, false};
    auto parse_coeff = [&](const std::string& key, const std::string& fallback) -> Expr {
        std::string src = get.text(key, fallback);
        try {
            return Expr::parse(src, coeff_syms);
        } catch (const Error& e) {
            get.fail(key, std::string("does not parse: ") + e.what());
            return Expr::parse("0", coeff_syms);
        }
    };

    sc.coeffs.a_upper.clear();
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            std::string key = "coeff.a." + std::to_string(i + 1) + "." + std::to_string(j + 1);
            std::string mirror = "coeff.a." + std::to_string(j + 1) + "." + std::to_string(i + 1);
            Expr upper_e = parse_coeff(key, "0");
            if (i != j) {
                bool has_upper = get.has(key);
                bool has_mirror = get.has(mirror);
                if (has_upper != has_mirror) {
                    get.fail(has_upper ? mirror : key, "missing symmetry partner entry");
                } else if (has_mirror) {
                    Expr mirror_e = parse_coeff(mirror, "0");
                    if (!upper_e.structurally_equal(mirror_e))
                        get.fail(mirror, "must be structurally identical to " + key);
                }
            }
            sc.coeffs.a_upper.push_back(std::move(upper_e));
        }
    }
    sc.coeffs.b.clear();
    for (int i = 0; i < d; ++i)
        sc.coeffs.b.push_back(parse_coeff("coeff.b." + std::to_string(i + 1), "0"));

    if (sc.coeffs.mode == CoeffMode::Nondegenerate) {
        if (!get.has("coeff.gamma")) get.fail("coeff.gamma", "is required in nondegenerate mode");
        sc.coeffs.gamma = get.number("coeff.gamma", 0.0);
        if (get.has("coeff.gamma") && !(sc.coeffs.gamma > 0.0))
            get.fail("coeff.gamma", "must be > 0");
    } else {
        sc.coeffs.gamma = get.number("coeff.gamma", 0.0);
    }
    if (get.has("coeff.b_inf")) {
        sc.coeffs.b_inf = get.number("coeff.b_inf", 0.0);
        if (*sc.coeffs.b_inf < 0.0) get.fail("coeff.b_inf", "must be >= 0");
    }
    if (get.has("coeff.c_inf")) {
        sc.coeffs.c_inf = get.number("coeff.c_inf", 0.0);
        if (*sc.coeffs.c_inf < 0.0) get.fail("coeff.c_inf", "must be >= 0");
    }
    if (sc.coeffs.mode == CoeffMode::DegenerateXIndependent && !sc.coeffs.x_independent())
        get.fail("coeff.mode", "degenerate mode requires x-independent coefficients");

    // initial density (x only)
    {
        std::string src = get.text("initial.density", "");
        if (src.empty()) {
            get.fail("initial.density", "is required");
            sc.u0_expr = Expr::parse("1", SymbolTable{d, false, false});
        } else {
            try {
                sc.u0_expr = Expr::parse(src, SymbolTable{d, false, false});
            } catch (const Error& e) {
                get.fail("initial.density", std::string("does not parse: ") + e.what());
                sc.u0_expr = Expr::parse("1", SymbolTable{d, false, false});
            }
        }
    }

    sc.T = get.required_number("time.T");
    if (get.has("time.T") && !(sc.T > 0.0)) get.fail("time.T", "must be > 0");
    sc.n_steps = static_cast<int>(get.integer("time.n_steps", 0));
    if (!get.has("time.n_steps")) get.fail("time.n_steps", "is required");
    else if (sc.n_steps < 1) get.fail("time.n_steps", "must be >= 1");

    sc.check.samples = static_cast<int>(get.integer("check.samples", 4096));
    if (sc.check.samples < 1000) get.fail("check.samples", "must be >= 1000");
    sc.check.u_min = get.number("check.u_min", 0.0);
    sc.check.u_max = get.number("check.u_max", 5.0);
    if (!(sc.check.u_min < sc.check.u_max)) get.fail("check.u_max", "must exceed check.u_min");
    sc.check_override = get.boolean("check.override", false);

    sc.viscosity_eps_list = get.number_list("regularization.viscosity_eps", {0.04, 0.02, 0.01});
    for (std::size_t k = 0; k < sc.viscosity_eps_list.size(); ++k) {
        if (!(sc.viscosity_eps_list[k] > 0.0))
            get.fail("regularization.viscosity_eps", "entries must be > 0");
        else if (k > 0 && !(sc.viscosity_eps_list[k] < sc.viscosity_eps_list[k - 1]))
            get.fail("regularization.viscosity_eps", "entries must strictly decrease");
    }
    sc.mollifier_eps = get.number("regularization.mollifier_eps", 0.0);
    if (sc.mollifier_eps < 0.0) get.fail("regularization.mollifier_eps", "must be >= 0");
    sc.mollifier_nodes = static_cast<int>(get.integer("regularization.mollifier_nodes", 7));
    if (sc.mollifier_eps > 0.0 && sc.mollifier_nodes < 3)
        get.fail("regularization.mollifier_nodes", "must be >= 3");

    sc.resolvent.outer_tol_rel = get.number("resolvent.outer_tol_rel", 1e-10);
    sc.resolvent.outer_tol_abs = get.number("resolvent.outer_tol_abs", 1e-14);
    sc.resolvent.max_outer = static_cast<int>(get.integer("resolvent.max_outer", 200));
    sc.resolvent.theta = get.number("resolvent.theta", 1.0);
    if (!(sc.resolvent.theta > 0.0 && sc.resolvent.theta <= 1.0))
        get.fail("resolvent.theta", "must lie in (0, 1]");
    sc.resolvent.linear_tol = get.number("resolvent.linear_tol", 1e-12);
    sc.resolvent.linear_max_iter = static_cast<int>(get.integer("resolvent.linear_max_iter", 2000));
    double default_lambda = (sc.n_steps >= 1 && sc.T > 0.0) ? sc.T / sc.n_steps : 0.01;
    sc.resolve_lambda = get.number("resolvent.lambda", default_lambda);
    if (!(sc.resolve_lambda > 0.0)) get.fail("resolvent.lambda", "must be > 0");
    sc.resolvent.assembly.boundary = sc.boundary;
    sc.resolvent.assembly.drift = sc.drift;

    sc.suite.lambdas = get.number_list("suite.lambdas", {0.01, 0.1, 1.0});
    sc.suite.trials = static_cast<int>(get.integer("suite.trials", 50));
    if (sc.suite.trials < 10) get.fail("suite.trials", "must be >= 10");
    sc.suite.seed = static_cast<std::uint64_t>(get.integer("suite.seed", 1234));

    sc.sde.N = get.integer("sde.N", 10000);
    if (sc.sde.N < 1) get.fail("sde.N", "must be >= 1");
    sc.sde.dt = get.number("sde.dt", 1e-3);
    if (!(sc.sde.dt > 0.0)) get.fail("sde.dt", "must be > 0");
    sc.sde.seed = static_cast<std::uint64_t>(get.integer("sde.seed", 42));
    std::string conv = get.text("sde.amplitude_convention", "match_fpe");
    if (conv == "match_fpe") sc.sde.convention = AmplitudeConvention::MatchFpe;
    else if (conv == "paper_literal") sc.sde.convention = AmplitudeConvention::PaperLiteral;
    else get.fail("sde.amplitude_convention", "must be match_fpe or paper_literal");
    sc.sde.record_stride = static_cast<int>(get.integer("sde.record_stride", 1));
    if (sc.sde.record_stride < 1) get.fail("sde.record_stride", "must be >= 1");

    {
        std::vector<double> n_list_d = get.number_list("expcheck.n_list", {16, 32, 64, 128});
        sc.expcheck_n_list.clear();
        for (double v : n_list_d) {
            if (v < 1 || v != std::floor(v)) get.fail("expcheck.n_list", "entries must be positive integers");
            sc.expcheck_n_list.push_back(static_cast<int>(v));
        }
        for (std::size_t k = 0; k + 1 < sc.expcheck_n_list.size(); ++k)
            if (sc.expcheck_n_list[k + 1] % sc.expcheck_n_list[k] != 0 ||
                sc.expcheck_n_list[k + 1] <= sc.expcheck_n_list[k])
                get.fail("expcheck.n_list", "each entry must divide the next");
        if (sc.expcheck_n_list.size() < 3) get.fail("expcheck.n_list", "needs at least 3 entries");
    }
    sc.compare_times = get.number_list("compare.times", {});
    sc.convergence_levels = static_cast<int>(get.integer("convergence.levels", 3));
    if (sc.convergence_levels < 2) get.fail("convergence.levels", "must be >= 2");
    sc.out_dir = get.text("output.dir", "out");

    // grid validation via the constructor, folded into the aggregate
    if (get.errors().empty()) {
        try {
            (void)sc.grid();
        } catch (const Error& e) {
            get.fail("grid", e.what());
        }
        try {
            sc.coeffs.validate();
        } catch (const Error& e) {
            get.fail("coeff", e.what());
        }
    }

    get.finish("scenario");
    return sc;
}

Scenario load_scenario(const std::string& path) {
    return build_scenario(ConfigMap::parse_file(path));
}

}  // namespace fpmv
