#pragma once

#include "condlab/model.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace condlab {

using Kernel = std::vector<double>;

// One vectorized kernel per output channel of conv layer l, ordered
// (alpha, p, q); the bias is appended when include_bias is set.
std::vector<Kernel> layer_kernels(const CnnParams& params, std::size_t l, bool include_bias = false);

double cosine(std::span<const double> a, std::span<const double> b);

// D_ij = <w_i, w_j> / (|w_i| |w_j|). Throws NumericError naming the first zero kernel.
Matrix cosine_matrix(const std::vector<Kernel>& kernels);

double alignment_with_ones(std::span<const double> kernel);

struct TheoremRatios {
    double relative_change = 0.0;  // |theta_W(t) - theta_W(0)| / |theta_W(0)|
    double projection_ratio = 0.0; // |(<theta_W,beta(t), v1>)_beta| / |theta_W(t)|
};

// theta_W(t), theta_W(0): one vector per channel, each the length of v1.
TheoremRatios theorem_ratios(const std::vector<Kernel>& theta_t, const std::vector<Kernel>& theta_0,
                             std::span<const double> v1);

struct Clusters {
    std::size_t count = 0;
    std::vector<std::size_t> assignment; // cluster id per kernel, ids in first-seen order
};

inline constexpr double kDefaultClusterThreshold = 0.95;

// Connected components of the graph with an edge where |D_ij| >= threshold.
Clusters cluster_directions(const Matrix& D, double threshold = kDefaultClusterThreshold);

struct LayerReport {
    Matrix cosine;
    std::vector<double> amplitude;      // |w| per kernel
    std::vector<double> ones_alignment; // D(w, 1) per kernel
    Clusters clusters;
};

struct CondensationReport {
    long step = 0;
    double t = 0.0;
    std::vector<LayerReport> layers;
    // Layer-1 theory quantities; NaN when no v1 was supplied.
    double relative_change = 0.0;
    double projection_ratio = 0.0;
};

struct ReportOptions {
    bool include_bias = false;
    double cluster_threshold = kDefaultClusterThreshold;
};

// `theta_w0` and `v1` may be empty; then the theorem ratios are NaN.
CondensationReport condensation_report(const CnnParams& params, long step, double t,
                                       const std::vector<Kernel>& theta_w0, std::span<const double> v1,
                                       const ReportOptions& opts = {});

// Layer-1 theta_W per channel (kernel coordinates then bias) in raw units.
std::vector<Kernel> theta_w(const CnnParams& params);

// Permutation sorting kernels by decreasing signed cosine with `direction`.
std::vector<std::size_t> order_by_alignment(const std::vector<Kernel>& kernels, std::span<const double> direction);
Matrix permute(const Matrix& D, const std::vector<std::size_t>& order);

// Median of |D_ij| over i != j (0 for a 1x1 matrix).
double median_abs_offdiagonal(const Matrix& D);

void write_cosine_csv(const Matrix& D, const std::filesystem::path& path);
// 8-bit binary PGM; pixel = round((D + 1) / 2 * 255).
void write_heatmap_pgm(const Matrix& D, const std::filesystem::path& path);
unsigned char heatmap_pixel(double d);

} // namespace condlab
