#include "condlab/spectral.hpp"

#include "condlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace condlab {

ZStats z_stats(const ImageBatch& batch) {
    batch.validate();
    if (batch.label_kind != LabelKind::Scalar || batch.label_dim() != 1)
        throw Unsupported("z statistics need scalar labels");
    const Tensor4& x = batch.images;
    const std::size_t n = x.n;
    if (n == 0) throw DimensionError("z_stats: empty batch");

    ZStats s;
    s.z = Tensor4(1, x.w, x.h, x.c);
    const std::size_t len = x.sample_size();
    double ysum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = batch.labels(i, 0);
        ysum += y;
        const auto xi = x.sample(i);
        for (std::size_t k = 0; k < len; ++k) s.z.data[k] += y * xi[k];
    }
    for (double& v : s.z.data) v /= double(n);
    s.z_scalar = ysum / double(n);
    return s;
}

Matrix build_Z(const ZStats& stats, std::size_t m) {
    const Tensor4& z = stats.z;
    if (m == 0 || z.w < m || z.h < m)
        throw DimensionError("build_Z: filter size " + std::to_string(m) + " does not fit a " + std::to_string(z.w) +
                             "x" + std::to_string(z.h) + " input");
    const std::size_t W1 = z.w - m + 1, H1 = z.h - m + 1, C0 = z.c;
    Matrix Z(W1 * H1, C0 * m * m + 1);
    for (std::size_t u = 0; u < W1; ++u)
        for (std::size_t v = 0; v < H1; ++v) {
            const std::size_t row = u * H1 + v;
            for (std::size_t al = 0; al < C0; ++al)
                for (std::size_t p = 0; p < m; ++p)
                    for (std::size_t q = 0; q < m; ++q) Z(row, (al * m + p) * m + q) = z(0, u + p, v + q, al);
            Z(row, C0 * m * m) = stats.z_scalar;
        }
    return Z;
}

namespace {

// One-sided Jacobi on the columns of G (rows >= cols). On return the columns
// of G are mutually orthogonal and G = Z V.
void one_sided_jacobi(Matrix& G, Matrix& V) {
    const std::size_t rows = G.rows, cols = G.cols;
    V = Matrix::identity(cols);
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t j = 0; j + 1 < cols; ++j)
            for (std::size_t k = j + 1; k < cols; ++k) {
                double a = 0, b = 0, c = 0;
                for (std::size_t i = 0; i < rows; ++i) {
                    a += G(i, j) * G(i, j);
                    b += G(i, k) * G(i, k);
                    c += G(i, j) * G(i, k);
                }
                if (c == 0.0 || std::abs(c) <= 1e-15 * std::sqrt(a * b)) continue;
                rotated = true;
                const double zeta = (b - a) / (2.0 * c);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t), sn = cs * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double gj = G(i, j), gk = G(i, k);
                    G(i, j) = cs * gj - sn * gk;
                    G(i, k) = sn * gj + cs * gk;
                }
                for (std::size_t i = 0; i < cols; ++i) {
                    const double vj = V(i, j), vk = V(i, k);
                    V(i, j) = cs * vj - sn * vk;
                    V(i, k) = sn * vj + cs * vk;
                }
            }
        if (!rotated) return;
    }
}

// Replace column k of Q (k >= `filled`) by a unit vector orthogonal to
// columns 0..filled-1, trying standard basis vectors in turn.
void complete_column(Matrix& Q, std::size_t k, std::size_t filled) {
    const std::size_t n = Q.rows;
    double best_norm = -1.0;
    std::vector<double> best;
    for (std::size_t e = 0; e < n; ++e) {
        std::vector<double> x(n, 0.0);
        x[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t j = 0; j < filled; ++j) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += Q(i, j) * x[i];
                for (std::size_t i = 0; i < n; ++i) x[i] -= d * Q(i, j);
            }
        const double nx = norm2(x);
        if (nx > best_norm) {
            best_norm = nx;
            best = std::move(x);
        }
        if (nx > 0.5) break;
    }
    for (std::size_t i = 0; i < n; ++i) Q(i, k) = best[i] / best_norm;
}

} // namespace

SpectralDecomposition svd(const Matrix& Z) {
    for (double x : Z.data)
        if (!std::isfinite(x)) throw NumericError("svd: matrix has non-finite entries");
    if (Z.rows == 0 || Z.cols == 0) throw DimensionError("svd: empty matrix");

    const bool transposed = Z.rows < Z.cols;
    Matrix G = transposed ? Z.transpose() : Z;
    Matrix R;
    one_sided_jacobi(G, R);
    const std::size_t k = G.cols;

    std::vector<double> sv(k);
    for (std::size_t j = 0; j < k; ++j) sv[j] = norm2(G.column(j));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sv[a] > sv[b]; });

    // L: left factor of the working matrix (G.rows x k), R: right factor (k x k).
    Matrix L(G.rows, k), Rs(R.rows, k);
    std::vector<double> lambda(k);
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t s = order[j];
        lambda[j] = sv[s];
        for (std::size_t i = 0; i < R.rows; ++i) Rs(i, j) = R(i, s);
    }
    const double tol = kRankTolerance * lambda[0];
    std::size_t rank = 0;
    for (double l : lambda)
        if (l > tol && l > 0.0) ++rank;
    for (std::size_t j = 0; j < rank; ++j)
        for (std::size_t i = 0; i < G.rows; ++i) L(i, j) = G(i, order[j]) / lambda[j];
    for (std::size_t j = rank; j < k; ++j) {
        complete_column(L, j, j);
        lambda[j] = 0.0;
    }

    SpectralDecomposition dec;
    dec.Z = Z;
    dec.lambda = lambda;
    dec.rank = rank;
    dec.U = transposed ? Rs : L;
    dec.V = transposed ? L : Rs;

    for (std::size_t j = 0; j < k; ++j) {
        std::size_t imax = 0;
        for (std::size_t i = 1; i < dec.V.rows; ++i)
            if (std::abs(dec.V(i, j)) > std::abs(dec.V(imax, j))) imax = i;
        if (dec.V(imax, j) < 0) {
            for (std::size_t i = 0; i < dec.V.rows; ++i) dec.V(i, j) = -dec.V(i, j);
            for (std::size_t i = 0; i < dec.U.rows; ++i) dec.U(i, j) = -dec.U(i, j);
        }
    }
    return dec;
}

GapInfo spectral_gap(const SpectralDecomposition& dec) {
    if (dec.rank < 2)
        throw InvalidParameter("spectral gap needs rank >= 2 (rank is " + std::to_string(dec.rank) + ")");
    GapInfo g;
    g.gap = dec.lambda[0] - dec.lambda[1];
    g.ratio = dec.lambda[0] / dec.lambda[1];
    g.degenerate = std::abs(g.gap) <= kDegenerateGapTolerance * dec.lambda[0];
    return g;
}

DirectionAlignment leading_direction_alignment(const SpectralDecomposition& dec, std::size_t c0, std::size_t m) {
    if (dec.rank < 1) throw InvalidParameter("leading direction needs rank >= 1");
    if (dec.V.rows != c0 * m * m + 1) throw DimensionError("leading_direction_alignment: v_1 length mismatch");
    const std::vector<double> v1 = dec.v(0);
    DirectionAlignment out;
    const std::size_t mm = m * m;
    for (std::size_t al = 0; al < c0; ++al) {
        double s = 0.0, ss = 0.0;
        for (std::size_t j = 0; j < mm; ++j) {
            s += v1[al * mm + j];
            ss += v1[al * mm + j] * v1[al * mm + j];
        }
        out.per_channel.push_back(ss > 0 ? std::abs(s) / (std::sqrt(ss) * std::sqrt(double(mm))) : 0.0);
    }
    out.bias = v1.back();
    return out;
}

Matrix build_A(const Matrix& Z) {
    const std::size_t a = Z.cols, b = Z.rows;
    Matrix A(a + b, a + b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < a; ++j) {
            A(j, a + i) = Z(i, j);
            A(a + i, j) = Z(i, j);
        }
    return A;
}

void write_spectrum_csv(const SpectralDecomposition& dec, std::size_t top_k, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "k,lambda,padded\n";
    for (std::size_t k = 0; k < top_k; ++k) {
        const bool pad = k >= dec.rank;
        out << k + 1 << ',' << fmt_double(pad ? 0.0 : dec.lambda[k]) << ',' << (pad ? 1 : 0) << '\n';
    }
}

void write_vectors_csv(const SpectralDecomposition& dec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "coordinate";
    for (std::size_t k = 0; k < dec.rank; ++k) out << ",v" << k + 1;
    out << '\n';
    for (std::size_t i = 0; i < dec.V.rows; ++i) {
        out << i;
        for (std::size_t k = 0; k < dec.rank; ++k) out << ',' << fmt_double(dec.V(i, k));
        out << '\n';
    }
}

} // namespace condlab
