// Expression DSL for coefficient and test functions.
//
// Grammar (standard precedence, ^ > unary- > * / > + -, binary ops
// left-associative):
//
//   expression := term (('+'|'-') term)*
//   term       := factor (('*'|'/') factor)*
//   factor     := '-' factor | power
//   power      := atom ('^' exponent)*
//   exponent   := ['-'] INT | '(' ['-'] INT ')'
//   atom       := NUMBER | variable | function '(' expression {',' expression} ')'
//                 | '(' expression ')'
//
// Variables: x1..xd, u, and (for test functions only) t. Functions: sin,
// cos, exp, tanh, atan, sqrt, abs, min, max. '^' takes integer literal
// exponents only; fractional powers are spelled exp(q*...) explicitly.
//
// Derivatives are forward-mode dual numbers, exact to rounding. abs/min/max
// report a kink flag when evaluated exactly at their kink; ties resolve via
// the identity min(a,b) = (a+b-|a-b|)/2 with abs'(0) := +1 (the right-hand
// derivative), so at a tie d(min) = db and d(max) = da.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fpmv {

struct VarRef {
    enum class Kind : std::uint8_t { Axis, U, Time };
    Kind kind = Kind::U;
    int axis = 0;  // 0-based, valid when kind == Axis

    static VarRef x(int axis0) { return {Kind::Axis, axis0}; }
    static VarRef u() { return {Kind::U, 0}; }
    static VarRef t() { return {Kind::Time, 0}; }
};

struct SymbolTable {
    int dim = 1;
    bool allow_u = true;
    bool allow_t = false;
};

struct EvalResult {
    double value = 0.0;
    double partial = 0.0;
    bool at_kink = false;
};

class Expr {
public:
    Expr() = default;

    static Expr parse(std::string_view src, const SymbolTable& syms);

    /// Plain evaluation; reentrant, bit-deterministic.
    double eval(std::span<const double> x, double u, double t = 0.0) const;

    /// Value plus one directional derivative with respect to `wrt`.
    EvalResult eval_with_partial(std::span<const double> x, double u, VarRef wrt, double t = 0.0) const;

    std::string unparse() const;
    bool structurally_equal(const Expr& other) const;

    bool valid() const { return !nodes_.empty(); }
    int dim() const { return dim_; }
    bool references_x() const { return refs_x_; }
    bool references_u() const { return refs_u_; }
    bool references_t() const { return refs_t_; }
    /// True when the whole expression is the literal 0 (used to skip work).
    bool is_literal_zero() const;
    const std::string& source() const { return source_; }

private:
    enum class Op : std::uint8_t {
        Lit, VarX, VarU, VarT,
        Add, Sub, Mul, Div, Pow, Neg,
        Sin, Cos, Exp, Tanh, Atan, Sqrt, Abs, Min, Max,
    };
    struct Node {
        Op op = Op::Lit;
        std::int32_t a = -1;   // first child (or axis index for VarX)
        std::int32_t b = -1;   // second child
        double lit = 0.0;      // literal value
        std::int32_t ipow = 0; // integer exponent for Pow
    };

    template <class T>
    T eval_impl(std::span<const double> x, double u, double t, VarRef wrt, bool* kink) const;
    std::string unparse_node(std::int32_t idx, int parent_prec, bool right_operand) const;
    bool equal_nodes(std::int32_t i, const Expr& other, std::int32_t j) const;

    friend class ExprParser;

    std::vector<Node> nodes_;  // children precede parents; root is the last node
    int dim_ = 0;
    bool refs_x_ = false, refs_u_ = false, refs_t_ = false;
    std::string source_;
};

}  // namespace fpmv
