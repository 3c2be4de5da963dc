#include "expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "common.hpp"

namespace fpmv {

namespace {

// value/derivative pair for forward-mode differentiation
struct Dual {
    double v = 0.0;
    double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }

struct FnEntry {
    const char* name;
    int arity;
};

// Keep in sync with Op ordering Sin..Max below.
constexpr FnEntry kFunctions[] = {
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"tanh", 1}, {"atan", 1},
    {"sqrt", 1}, {"abs", 1}, {"min", 2}, {"max", 2},
};

}  // namespace

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

class ExprParser {
public:
    ExprParser(std::string_view src, const SymbolTable& syms) : src_(src), syms_(syms) {}

    Expr run() {
        if (src_.find_first_not_of(" \t\r\n") == std::string_view::npos)
            throw SyntaxError("empty expression", 0, "expression");
        Expr e;
        e.dim_ = syms_.dim;
        e.source_ = std::string(src_);
        out_ = &e;
        std::int32_t root = parse_expression();
        skip_ws();
        if (pos_ != src_.size())
            throw SyntaxError("unexpected trailing input", pos_, "end of input");
        (void)root;  // root is the last node by construction
        return e;
    }

private:
    using Op = Expr::Op;
    using Node = Expr::Node;

    std::int32_t push(Node n) {
        out_->nodes_.push_back(n);
        return static_cast<std::int32_t>(out_->nodes_.size() - 1);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool peek_char(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    bool consume_char(char c) {
        if (peek_char(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect_char(char c, const char* what) {
        if (!consume_char(c)) throw SyntaxError("syntax error", pos_, what);
    }

    std::int32_t parse_expression() {
        std::int32_t lhs = parse_term();
        for (;;) {
            if (consume_char('+'))
                lhs = push({Op::Add, lhs, parse_term(), 0.0, 0});
            else if (consume_char('-'))
                lhs = push({Op::Sub, lhs, parse_term(), 0.0, 0});
            else
                return lhs;
        }
    }

    std::int32_t parse_term() {
        std::int32_t lhs = parse_factor();
        for (;;) {
            if (consume_char('*'))
                lhs = push({Op::Mul, lhs, parse_factor(), 0.0, 0});
            else if (consume_char('/'))
                lhs = push({Op::Div, lhs, parse_factor(), 0.0, 0});
            else
                return lhs;
        }
    }

    std::int32_t parse_factor() {
        if (consume_char('-')) return push({Op::Neg, parse_factor(), -1, 0.0, 0});
        return parse_power();
    }

    std::int32_t parse_power() {
        std::int32_t base = parse_atom();
        while (consume_char('^')) base = push({Op::Pow, base, -1, 0.0, parse_int_exponent()});
        return base;
    }

    std::int32_t parse_int_exponent() {
        skip_ws();
        bool paren = consume_char('(');
        skip_ws();
        bool neg = consume_char('-');
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ == start) throw SyntaxError("syntax error", pos_, "integer exponent");
        if (pos_ < src_.size() && (src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E'))
            throw SyntaxError("exponent must be an integer literal", pos_, "integer exponent");
        long val = 0;
        auto [p, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, val);
        if (ec != std::errc() || val > 1000000)
            throw SyntaxError("exponent out of range", start, "integer exponent");
        (void)p;
        if (paren) expect_char(')', "')'");
        return static_cast<std::int32_t>(neg ? -val : val);
    }

    std::int32_t parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError("unexpected end of input", pos_, "number, variable or '('");
        char c = src_[pos_];
        if (consume_char('(')) {
            std::int32_t e = parse_expression();
            expect_char(')', "')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        throw SyntaxError("syntax error", pos_, "number, variable or '('");
    }

    std::int32_t parse_number() {
        std::size_t start = pos_;
        double val = 0.0;
        auto [p, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), val);
        if (ec != std::errc()) throw SyntaxError("malformed number", start, "number");
        pos_ = static_cast<std::size_t>(p - src_.data());
        return push({Op::Lit, -1, -1, val, 0});
    }

    std::int32_t parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string_view name = src_.substr(start, pos_ - start);

        if (peek_char('(')) {
            for (std::size_t f = 0; f < std::size(kFunctions); ++f) {
                if (name != kFunctions[f].name) continue;
                expect_char('(', "'('");
                std::int32_t a = parse_expression();
                std::int32_t b = -1;
                if (kFunctions[f].arity == 2) {
                    expect_char(',', "','");
                    b = parse_expression();
                }
                expect_char(')', "')'");
                Op op = static_cast<Op>(static_cast<int>(Op::Sin) + static_cast<int>(f));
                return push({op, a, b, 0.0, 0});
            }
            throw UnknownIdentifier(std::string(name), start);
        }

        if (name == "u") {
            if (!syms_.allow_u) throw UnknownIdentifier("u", start);
            out_->refs_u_ = true;
            return push({Op::VarU, -1, -1, 0.0, 0});
        }
        if (name == "t") {
            if (!syms_.allow_t) throw UnknownIdentifier("t", start);
            out_->refs_t_ = true;
            return push({Op::VarT, -1, -1, 0.0, 0});
        }
        if (name.size() >= 2 && name[0] == 'x') {
            int axis = 0;
            auto [p, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), axis);
            if (ec == std::errc() && p == name.data() + name.size() && axis >= 1) {
                if (axis > syms_.dim) throw UnknownIdentifier(std::string(name), start);
                out_->refs_x_ = true;
                return push({Op::VarX, axis - 1, -1, 0.0, 0});
            }
        }
        throw UnknownIdentifier(std::string(name), start);
    }

    std::string_view src_;
    const SymbolTable& syms_;
    std::size_t pos_ = 0;
    Expr* out_ = nullptr;
};

Expr Expr::parse(std::string_view src, const SymbolTable& syms) {
    if (syms.dim < 1) throw ValidationError("symbol table dimension must be >= 1");
    return ExprParser(src, syms).run();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

inline double scalar_of(double x) { return x; }
inline double scalar_of(const Dual& x) { return x.v; }

template <class T>
T int_pow(T base, int n) {
    // binary exponentiation; n >= 0
    T acc{};
    if constexpr (std::is_same_v<T, double>) acc = 1.0;
    else acc = Dual{1.0, 0.0};
    T b = base;
    int e = n;
    while (e > 0) {
        if (e & 1) acc = acc * b;
        b = b * b;
        e >>= 1;
    }
    return acc;
}

}  // namespace

template <class T>
T Expr::eval_impl(std::span<const double> x, double u, double t, VarRef wrt, bool* kink) const {
    constexpr bool dual = std::is_same_v<T, Dual>;
    const std::size_t n = nodes_.size();
    T small_buf[96];
    std::vector<T> heap_buf;
    T* vals = small_buf;
    if (n > 96) {
        heap_buf.resize(n);
        vals = heap_buf.data();
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes_[i];
        T r{};
        switch (nd.op) {
            case Op::Lit:
                if constexpr (dual) r = {nd.lit, 0.0};
                else r = nd.lit;
                break;
            case Op::VarX: {
                double xv = nd.a < static_cast<std::int32_t>(x.size()) ? x[nd.a] : 0.0;
                if constexpr (dual)
                    r = {xv, (wrt.kind == VarRef::Kind::Axis && wrt.axis == nd.a) ? 1.0 : 0.0};
                else
                    r = xv;
                break;
            }
            case Op::VarU:
                if constexpr (dual) r = {u, wrt.kind == VarRef::Kind::U ? 1.0 : 0.0};
                else r = u;
                break;
            case Op::VarT:
                if constexpr (dual) r = {t, wrt.kind == VarRef::Kind::Time ? 1.0 : 0.0};
                else r = t;
                break;
            case Op::Add: r = vals[nd.a] + vals[nd.b]; break;
            case Op::Sub: r = vals[nd.a] - vals[nd.b]; break;
            case Op::Mul: r = vals[nd.a] * vals[nd.b]; break;
            case Op::Div: {
                T den = vals[nd.b];
                if (scalar_of(den) == 0.0)
                    throw EvalDomainError("division by zero", unparse_node(static_cast<std::int32_t>(i), 0, false));
                if constexpr (dual) {
                    double inv = 1.0 / den.v;
                    T num = vals[nd.a];
                    r = {num.v * inv, (num.d - num.v * inv * den.d) * inv};
                } else {
                    r = vals[nd.a] / den;
                }
                break;
            }
            case Op::Neg: r = -vals[nd.a]; break;
            case Op::Pow: {
                T base = vals[nd.a];
                int e = nd.ipow;
                if (e >= 0) {
                    r = int_pow(base, e);
                } else {
                    if (scalar_of(base) == 0.0)
                        throw EvalDomainError("zero raised to a negative power",
                                              unparse_node(static_cast<std::int32_t>(i), 0, false));
                    T p = int_pow(base, -e);
                    if constexpr (dual) {
                        double inv = 1.0 / p.v;
                        r = {inv, -p.d * inv * inv};
                    } else {
                        r = 1.0 / p;
                    }
                }
                break;
            }
            case Op::Sin:
                if constexpr (dual) r = {std::sin(vals[nd.a].v), std::cos(vals[nd.a].v) * vals[nd.a].d};
                else r = std::sin(vals[nd.a]);
                break;
            case Op::Cos:
                if constexpr (dual) r = {std::cos(vals[nd.a].v), -std::sin(vals[nd.a].v) * vals[nd.a].d};
                else r = std::cos(vals[nd.a]);
                break;
            case Op::Exp:
                if constexpr (dual) {
                    double ev = std::exp(vals[nd.a].v);
                    r = {ev, ev == 0.0 ? 0.0 : ev * vals[nd.a].d};
                } else {
                    r = std::exp(vals[nd.a]);
                }
                break;
            case Op::Tanh:
                if constexpr (dual) {
                    double th = std::tanh(vals[nd.a].v);
                    r = {th, (1.0 - th * th) * vals[nd.a].d};
                } else {
                    r = std::tanh(vals[nd.a]);
                }
                break;
            case Op::Atan:
                if constexpr (dual) {
                    double av = vals[nd.a].v;
                    r = {std::atan(av), vals[nd.a].d / (1.0 + av * av)};
                } else {
                    r = std::atan(vals[nd.a]);
                }
                break;
            case Op::Sqrt: {
                double av = scalar_of(vals[nd.a]);
                if (av < 0.0)
                    throw EvalDomainError("square root of a negative value",
                                          unparse_node(static_cast<std::int32_t>(i), 0, false));
                if constexpr (dual) {
                    double sv = std::sqrt(av);
                    double dd;
                    if (av == 0.0)
                        dd = vals[nd.a].d == 0.0 ? 0.0
                                                 : std::copysign(std::numeric_limits<double>::infinity(),
                                                                 vals[nd.a].d);
                    else
                        dd = vals[nd.a].d / (2.0 * sv);
                    r = {sv, dd};
                } else {
                    r = std::sqrt(av);
                }
                break;
            }
            case Op::Abs: {
                if constexpr (dual) {
                    const Dual& av = vals[nd.a];
                    if (av.v == 0.0 && kink) *kink = true;
                    r = {std::fabs(av.v), av.v >= 0.0 ? av.d : -av.d};  // abs'(0) := +1
                } else {
                    r = std::fabs(vals[nd.a]);
                }
                break;
            }
            case Op::Min: {
                if constexpr (dual) {
                    const Dual &av = vals[nd.a], &bv = vals[nd.b];
                    if (av.v == bv.v && kink) *kink = true;
                    r = av.v < bv.v ? av : bv;  // tie resolves to second argument
                } else {
                    r = std::min(vals[nd.a], vals[nd.b]);
                }
                break;
            }
            case Op::Max: {
                if constexpr (dual) {
                    const Dual &av = vals[nd.a], &bv = vals[nd.b];
                    if (av.v == bv.v && kink) *kink = true;
                    r = av.v >= bv.v ? av : bv;  // tie resolves to first argument
                } else {
                    r = std::max(vals[nd.a], vals[nd.b]);
                }
                break;
            }
        }
        vals[i] = r;
    }
    return vals[n - 1];
}

double Expr::eval(std::span<const double> x, double u, double t) const {
    return eval_impl<double>(x, u, t, VarRef::u(), nullptr);
}

EvalResult Expr::eval_with_partial(std::span<const double> x, double u, VarRef wrt, double t) const {
    bool kink = false;
    Dual d = eval_impl<Dual>(x, u, t, wrt, &kink);
    return {d.v, d.d, kink};
}

bool Expr::is_literal_zero() const {
    return nodes_.size() == 1 && nodes_[0].op == Op::Lit && nodes_[0].lit == 0.0;
}

// ---------------------------------------------------------------------------
// Unparse / structural equality
// ---------------------------------------------------------------------------

// precedence levels: + - = 1, * / = 2, unary- = 3, ^ = 4, atoms = 5.
// Right operands of binary ops print at prec+1 so associativity survives a
// reparse structurally, not just numerically.
std::string Expr::unparse_node(std::int32_t idx, int parent_prec, bool right_operand) const {
    const Node& nd = nodes_[idx];
    int prec = 5;
    std::string s;
    switch (nd.op) {
        case Op::Lit: s = fmt17(nd.lit); break;
        case Op::VarX: s = "x" + std::to_string(nd.a + 1); break;
        case Op::VarU: s = "u"; break;
        case Op::VarT: s = "t"; break;
        case Op::Add:
            prec = 1;
            s = unparse_node(nd.a, prec, false) + "+" + unparse_node(nd.b, prec + 1, true);
            break;
        case Op::Sub:
            prec = 1;
            s = unparse_node(nd.a, prec, false) + "-" + unparse_node(nd.b, prec + 1, true);
            break;
        case Op::Mul:
            prec = 2;
            s = unparse_node(nd.a, prec, false) + "*" + unparse_node(nd.b, prec + 1, true);
            break;
        case Op::Div:
            prec = 2;
            s = unparse_node(nd.a, prec, false) + "/" + unparse_node(nd.b, prec + 1, true);
            break;
        case Op::Neg:
            prec = 3;
            s = "-" + unparse_node(nd.a, prec, true);
            break;
        case Op::Pow:
            prec = 4;
            s = unparse_node(nd.a, prec + 1, false) + "^" +
                (nd.ipow < 0 ? "(" + std::to_string(nd.ipow) + ")" : std::to_string(nd.ipow));
            break;
        default: {
            int f = static_cast<int>(nd.op) - static_cast<int>(Op::Sin);
            s = std::string(kFunctions[f].name) + "(" + unparse_node(nd.a, 0, false);
            if (nd.b >= 0) s += "," + unparse_node(nd.b, 0, false);
            s += ")";
            break;
        }
    }
    (void)right_operand;
    if (prec < parent_prec) return "(" + s + ")";
    return s;
}

std::string Expr::unparse() const {
    if (nodes_.empty()) return "";
    return unparse_node(static_cast<std::int32_t>(nodes_.size() - 1), 0, false);
}

bool Expr::equal_nodes(std::int32_t i, const Expr& other, std::int32_t j) const {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[j];
    if (a.op != b.op) return false;
    switch (a.op) {
        case Op::Lit: return a.lit == b.lit;
        case Op::VarX: return a.a == b.a;
        case Op::VarU:
        case Op::VarT: return true;
        case Op::Pow: return a.ipow == b.ipow && equal_nodes(a.a, other, b.a);
        case Op::Neg: return equal_nodes(a.a, other, b.a);
        default:
            if ((a.b >= 0) != (b.b >= 0)) return false;
            if (!equal_nodes(a.a, other, b.a)) return false;
            return a.b < 0 || equal_nodes(a.b, other, b.b);
    }
}

bool Expr::structurally_equal(const Expr& other) const {
    if (nodes_.empty() || other.nodes_.empty()) return nodes_.empty() && other.nodes_.empty();
    return equal_nodes(static_cast<std::int32_t>(nodes_.size() - 1), other,
                       static_cast<std::int32_t>(other.nodes_.size() - 1));
}

}  // namespace fpmv
