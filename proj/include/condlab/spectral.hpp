#pragma once

#include "condlab/datasets.hpp"
#include "condlab/tensor.hpp"

#include <filesystem>
#include <vector>

namespace condlab {

// z_{u,v,alpha} = (1/n) sum_i y_i x_{u,v,alpha}(i) and z = (1/n) sum_i y_i.
struct ZStats {
    Tensor4 z; // shape (1, W0, H0, C0)
    double z_scalar = 0.0;
};

ZStats z_stats(const ImageBatch& batch);

// (W1 H1) x (C0 m^2 + 1). Rows (u, v) u-major; columns alpha outer, then
// (p, q) p-major, then a final column filled with z_scalar.
Matrix build_Z(const ZStats& stats, std::size_t m);

// Thin SVD Z = U diag(lambda) V^T with k = min(rows, cols) columns in U and V.
// Singular values are sorted nonincreasing; for each k the largest-magnitude
// entry of v_k is positive.
struct SpectralDecomposition {
    Matrix Z;
    Matrix U; // rows x k
    Matrix V; // cols x k
    std::vector<double> lambda;
    std::size_t rank = 0;

    std::vector<double> u(std::size_t k) const { return U.column(k); }
    std::vector<double> v(std::size_t k) const { return V.column(k); }
};

inline constexpr double kRankTolerance = 1e-12;
inline constexpr double kDegenerateGapTolerance = 1e-10;

SpectralDecomposition svd(const Matrix& Z);

struct GapInfo {
    double gap = 0.0;   // lambda_1 - lambda_2
    double ratio = 0.0; // lambda_1 / lambda_2
    bool degenerate = false;
};

// Requires rank >= 2. `degenerate` is set when lambda_1 and lambda_2 tie
// within 1e-10 * lambda_1.
GapInfo spectral_gap(const SpectralDecomposition& dec);

struct DirectionAlignment {
    std::vector<double> per_channel; // |cos(block_alpha(v_1), 1)|
    double bias = 0.0;               // last coordinate of v_1
};

DirectionAlignment leading_direction_alignment(const SpectralDecomposition& dec, std::size_t c0, std::size_t m);

// [[0, Z^T], [Z, 0]]
Matrix build_A(const Matrix& Z);

// Columns k, lambda_k for the first `top_k` values; rows beyond the number of
// available singular values are written as zero with padded = 1.
void write_spectrum_csv(const SpectralDecomposition& dec, std::size_t top_k, const std::filesystem::path& path);
// One row per coordinate, one column per right singular vector v_1..v_r.
void write_vectors_csv(const SpectralDecomposition& dec, const std::filesystem::path& path);

} // namespace condlab
