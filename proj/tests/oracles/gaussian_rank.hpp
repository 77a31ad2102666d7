#pragma once
// Row-echelon rank with partial pivoting.
#include <cmath>
#include <vector>

namespace oracle {

inline std::size_t gaussian_rank(std::vector<std::vector<double>> a, double tol = 1e-9) {
    const std::size_t rows = a.size(), cols = rows ? a[0].size() : 0;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t piv = rank;
        for (std::size_t r = rank + 1; r < rows; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (std::abs(a[piv][c]) <= tol) continue;
        std::swap(a[piv], a[rank]);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            const double f = a[r][c] / a[rank][c];
            for (std::size_t k = c; k < cols; ++k) a[r][k] -= f * a[rank][k];
        }
        ++rank;
    }
    return rank;
}

} // namespace oracle
