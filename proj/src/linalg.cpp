#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fpmv {

SymEig sym_eig(std::span<const double> a, int d) {
    SymEig out;
    out.eigenvalues.assign(d, 0.0);
    out.eigenvectors.assign(static_cast<std::size_t>(d) * d, 0.0);
    if (d == 1) {
        out.eigenvalues[0] = a[0];
        out.eigenvectors[0] = 1.0;
        return out;
    }

    std::vector<double> m(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m[i * d + j] = 0.5 * (a[i * d + j] + a[j * d + i]);
    std::vector<double>& v = out.eigenvectors;
    for (int i = 0; i < d; ++i) v[i * d + i] = 1.0;

    double scale = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) scale = std::max(scale, std::fabs(m[i * d + j]));
    if (scale == 0.0) return out;  // zero matrix

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += m[p * d + q] * m[p * d + q];
        if (std::sqrt(off) <= 1e-15 * scale * d) break;

        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = m[p * d + q];
                if (std::fabs(apq) <= 1e-300) continue;
                double theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < d; ++k) {
                    double mkp = m[k * d + p], mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < d; ++k) {
                    double mpk = m[p * d + k], mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < d; ++k) {
                    double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    for (int i = 0; i < d; ++i) out.eigenvalues[i] = m[i * d + i];

    // sort ascending, permuting eigenvector columns along
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return out.eigenvalues[x] < out.eigenvalues[y]; });
    std::vector<double> ev(d);
    std::vector<double> vecs(v.size());
    for (int k = 0; k < d; ++k) {
        ev[k] = out.eigenvalues[order[k]];
        for (int r = 0; r < d; ++r) vecs[r * d + k] = v[r * d + order[k]];
    }
    out.eigenvalues = std::move(ev);
    out.eigenvectors = std::move(vecs);
    return out;
}

double min_eigenvalue_sym(std::span<const double> a, int d) {
    if (d == 1) return a[0];
    return sym_eig(a, d).eigenvalues.front();
}

}  // namespace fpmv
