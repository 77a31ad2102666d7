#pragma once
// Classical two-sided Jacobi eigenvalue iteration for a dense symmetric
// matrix. Deliberately unrelated to the one-sided SVD in the library.
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline std::vector<double> jacobi_eigenvalues(Dense a, int max_sweeps = 100) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

// A^T A for a row-major dense matrix.
inline Dense gram(const Dense& z) {
    const std::size_t r = z.size(), c = z.empty() ? 0 : z[0].size();
    Dense g(c, std::vector<double>(c, 0.0));
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < r; ++k) g[i][j] += z[k][i] * z[k][j];
    return g;
}

} // namespace oracle
