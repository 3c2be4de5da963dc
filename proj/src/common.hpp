// Shared error types, logging and small utilities for libfpmv.
#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fpmv {

// Error categories map onto the process exit codes (validation -> 2,
// numeric -> 3) at the C boundary.
enum class ErrorKind { Validation, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(ErrorKind::Validation, msg) {}
};

struct ConfigParseError : ValidationError {
    ConfigParseError(const std::string& msg, int line_no)
        : ValidationError(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    int line;
};

struct SyntaxError : ValidationError {
    SyntaxError(const std::string& msg, std::size_t byte_offset, std::string expected_set)
        : ValidationError(msg + " at offset " + std::to_string(byte_offset) +
                          (expected_set.empty() ? "" : ", expected " + expected_set)),
          offset(byte_offset),
          expected(std::move(expected_set)) {}
    std::size_t offset;
    std::string expected;
};

struct UnknownIdentifier : ValidationError {
    UnknownIdentifier(const std::string& ident, std::size_t byte_offset)
        : ValidationError("unknown identifier '" + ident + "' at offset " + std::to_string(byte_offset)),
          name(ident),
          offset(byte_offset) {}
    std::string name;
    std::size_t offset;
};

struct MissingBounds : ValidationError {
    explicit MissingBounds(const std::string& msg) : ValidationError(msg) {}
};

struct EvalDomainError : Error {
    EvalDomainError(const std::string& what_failed, std::string subexpression)
        : Error(ErrorKind::Numeric, what_failed + " in subexpression '" + subexpression + "'"),
          reason(what_failed),
          subexpr(std::move(subexpression)) {}
    std::string reason;
    std::string subexpr;
};

struct NonConvergence : Error {
    NonConvergence(int iterations, double final_residual)
        : Error(ErrorKind::Numeric, "linear solver failed to converge in " + std::to_string(iterations) +
                                        " iterations, residual " + std::to_string(final_residual)),
          iters(iterations),
          residual(final_residual) {}
    int iters;
    double residual;
};

struct BreakdownError : Error {
    explicit BreakdownError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

struct FixedPointStall : Error {
    FixedPointStall(const std::string& msg, std::vector<double> increments)
        : Error(ErrorKind::Numeric, msg), increment_history(std::move(increments)) {}
    std::vector<double> increment_history;
};

struct IdentityStall : Error {
    IdentityStall(const std::string& msg, double factor)
        : Error(ErrorKind::Numeric, msg + " (contraction factor " + std::to_string(factor) + ")"),
          contraction_factor(factor) {}
    double contraction_factor;
};

struct NotPSD : Error {
    explicit NotPSD(double eig)
        : Error(ErrorKind::Numeric, "matrix has eigenvalue " + std::to_string(eig) + " below -1e-12"),
          min_eigenvalue(eig) {}
    double min_eigenvalue;
};

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level();
void log(LogLevel level, const std::string& msg);

// Worker cap for parallel regions; 0 means hardware concurrency.
void set_thread_cap(int n);
int thread_cap();

// Runs fn(begin, end) over [0, total) split into a fixed chunk grid so
// results are reproducible regardless of the worker count.
void parallel_for(long total, const std::function<void(long, long)>& fn);

// 17 significant digits, round-trips IEEE doubles exactly.
std::string fmt17(double v);

std::string iso_timestamp();

}  // namespace fpmv
