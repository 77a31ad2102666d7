#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace condlab {

// Dense 4-d tensor stored (n, w, h, c) with c innermost.
struct Tensor4 {
    std::size_t n = 0, w = 0, h = 0, c = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(std::size_t n_, std::size_t w_, std::size_t h_, std::size_t c_, double fill = 0.0)
        : n(n_), w(w_), h(h_), c(c_), data(n_ * w_ * h_ * c_, fill) {}

    std::size_t index(std::size_t i, std::size_t u, std::size_t v, std::size_t a) const {
        return ((i * w + u) * h + v) * c + a;
    }
    double& operator()(std::size_t i, std::size_t u, std::size_t v, std::size_t a) {
        return data[index(i, u, v, a)];
    }
    double operator()(std::size_t i, std::size_t u, std::size_t v, std::size_t a) const {
        return data[index(i, u, v, a)];
    }
    std::size_t sample_size() const { return w * h * c; }
    std::span<const double> sample(std::size_t i) const {
        return {data.data() + i * sample_size(), sample_size()};
    }
    std::span<double> sample(std::size_t i) {
        return {data.data() + i * sample_size(), sample_size()};
    }
};

// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

    std::vector<double> column(std::size_t j) const;
    Matrix transpose() const;
    double frobenius_norm() const;

    static Matrix identity(std::size_t n);
};

Matrix operator*(const Matrix& a, const Matrix& b);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Formats a double with 17 significant digits (lossless round trip).
std::string fmt_double(double x);

} // namespace condlab
