#pragma once
// Central finite differences of a scalar function of a parameter vector.
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t k, double h) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

// One Richardson step on the central difference: (4 D(h) - D(2h)) / 3,
// error O(h^4).
inline double richardson_difference(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x, std::size_t k, double h) {
    return (4.0 * central_difference(f, x, k, h) - central_difference(f, x, k, 2.0 * h)) / 3.0;
}

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace oracle
