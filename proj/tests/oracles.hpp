// Test-only oracles, independent of the solver paths they check: dense LU
// with partial pivoting, central finite differences, closed-form reference
// densities, and simple quadrature.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// dense factorization solve (Gaussian elimination, partial pivoting)
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    if (a.size() != n * n) throw std::runtime_error("dense_solve: shape mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (std::fabs(a[piv * n + col]) < 1e-300) throw std::runtime_error("dense_solve: singular");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri * n + c] * x[c];
        x[ri] = acc / a[ri * n + ri];
    }
    return x;
}

inline double central_difference(const std::function<double(double)>& f, double x,
                                 double step = 1e-6) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

inline double gaussian_density(double x, double mean, double variance) {
    double z = x - mean;
    return std::exp(-z * z / (2.0 * variance)) / std::sqrt(2.0 * 3.14159265358979323846 * variance);
}

// source solution of u_t = (u^m)_xx in one dimension with unit mass,
// u(t,x) = t^(-alpha) (C - k xi^2)_+^(1/(m-1)), xi = x t^(-alpha), for m = 2:
// alpha = 1/3, k = 1/12, C = 3^(1/3)/4
inline double barenblatt_m2(double t, double x) {
    const double alpha = 1.0 / 3.0;
    const double k = 1.0 / 12.0;
    const double C = std::cbrt(3.0) / 4.0;
    double xi = x * std::pow(t, -alpha);
    double profile = C - k * xi * xi;
    if (profile <= 0.0) return 0.0;
    return std::pow(t, -alpha) * profile;
}

// composite Simpson on [a, b]
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2 != 0) ++n;
    double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
    return acc * h / 3.0;
}

}  // namespace oracle
