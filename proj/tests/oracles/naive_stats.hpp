#pragma once
// Brute-force label-weighted pixel means and the Z entry formula, written
// from the definitions with explicit index arithmetic.
#include <vector>

namespace oracle {

// x[i][u][v][a], y[i]
using Images = std::vector<std::vector<std::vector<std::vector<double>>>>;

inline double naive_z(const Images& x, const std::vector<double>& y, std::size_t u, std::size_t v, std::size_t a) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += y[i] * x[i][u][v][a];
    return s / double(x.size());
}

// Z entry at (row, col) for a W0 x H0 x C0 input, filter m: decode both indices.
inline double naive_Z_entry(const Images& x, const std::vector<double>& y, std::size_t m, std::size_t row,
                            std::size_t col) {
    const std::size_t W0 = x[0].size(), H0 = x[0][0].size(), C0 = x[0][0][0].size();
    const std::size_t H1 = H0 - m + 1;
    (void)W0;
    const std::size_t u = row / H1, v = row % H1;
    if (col == C0 * m * m) {
        double s = 0.0;
        for (double yi : y) s += yi;
        return s / double(y.size());
    }
    const std::size_t a = col / (m * m), pq = col % (m * m), p = pq / m, q = pq % m;
    return naive_z(x, y, u + p, v + q, a);
}

} // namespace oracle
