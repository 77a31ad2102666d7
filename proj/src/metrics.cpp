#include "condlab/metrics.hpp"

#include "condlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace condlab {

std::vector<Kernel> layer_kernels(const CnnParams& params, std::size_t l, bool include_bias) {
    const CnnConfig& cfg = params.config();
    if (l < 1 || l > cfg.layers()) throw InvalidParameter("layer_kernels: no conv layer " + std::to_string(l));
    const std::size_t m = cfg.m, cin = cfg.channels[l - 1], cout = cfg.channels[l];
    std::vector<Kernel> ks(cout);
    for (std::size_t be = 0; be < cout; ++be) {
        Kernel& k = ks[be];
        k.reserve(cin * m * m + 1);
        for (std::size_t al = 0; al < cin; ++al)
            for (std::size_t p = 0; p < m; ++p)
                for (std::size_t q = 0; q < m; ++q) k.push_back(params.w(l, p, q, al, be));
        if (include_bias) k.push_back(params.conv_b(l)[be]);
    }
    return ks;
}

std::vector<Kernel> theta_w(const CnnParams& params) { return layer_kernels(params, 1, true); }

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine similarity undefined for a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Matrix cosine_matrix(const std::vector<Kernel>& kernels) {
    const std::size_t M = kernels.size();
    std::vector<double> norms(M);
    for (std::size_t i = 0; i < M; ++i) {
        norms[i] = norm2(kernels[i]);
        if (norms[i] == 0.0) throw NumericError("kernel " + std::to_string(i) + " is zero; cosine similarity undefined");
        if (kernels[i].size() != kernels[0].size()) throw DimensionError("cosine_matrix: kernel length mismatch");
    }
    Matrix D(M, M);
    for (std::size_t i = 0; i < M; ++i) {
        D(i, i) = 1.0;
        for (std::size_t j = i + 1; j < M; ++j) {
            const double c = std::clamp(dot(kernels[i], kernels[j]) / (norms[i] * norms[j]), -1.0, 1.0);
            D(i, j) = D(j, i) = c;
        }
    }
    return D;
}

double alignment_with_ones(std::span<const double> kernel) {
    const double nk = norm2(kernel);
    if (nk == 0.0) throw NumericError("alignment with 1 undefined for a zero kernel");
    double s = 0.0;
    for (double x : kernel) s += x;
    return std::clamp(s / (nk * std::sqrt(double(kernel.size()))), -1.0, 1.0);
}

TheoremRatios theorem_ratios(const std::vector<Kernel>& theta_t, const std::vector<Kernel>& theta_0,
                             std::span<const double> v1) {
    if (theta_t.size() != theta_0.size()) throw DimensionError("theorem_ratios: channel count mismatch");
    double diff2 = 0.0, init2 = 0.0, now2 = 0.0, proj2 = 0.0;
    for (std::size_t be = 0; be < theta_t.size(); ++be) {
        const Kernel& a = theta_t[be];
        const Kernel& b = theta_0[be];
        if (a.size() != v1.size() || b.size() != v1.size())
            throw DimensionError("theorem_ratios: channel vector length differs from v1");
        for (std::size_t i = 0; i < a.size(); ++i) {
            diff2 += (a[i] - b[i]) * (a[i] - b[i]);
            init2 += b[i] * b[i];
            now2 += a[i] * a[i];
        }
        const double p = dot(a, v1);
        proj2 += p * p;
    }
    if (init2 == 0.0) throw NumericError("theorem_ratios: theta_W(0) is zero");
    TheoremRatios r;
    r.relative_change = std::sqrt(diff2 / init2);
    r.projection_ratio = now2 > 0.0 ? std::sqrt(proj2 / now2) : 0.0;
    return r;
}

Clusters cluster_directions(const Matrix& D, double threshold) {
    if (D.rows != D.cols) throw DimensionError("cluster_directions: D must be square");
    const std::size_t M = D.rows;
    std::vector<std::size_t> parent(M);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = i + 1; j < M; ++j)
            if (std::abs(D(i, j)) >= threshold) {
                const std::size_t a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
    Clusters c;
    c.assignment.assign(M, 0);
    std::vector<std::size_t> id(M, M);
    for (std::size_t i = 0; i < M; ++i) {
        const std::size_t r = find(i);
        if (id[r] == M) id[r] = c.count++;
        c.assignment[i] = id[r];
    }
    return c;
}

CondensationReport condensation_report(const CnnParams& params, long step, double t,
                                       const std::vector<Kernel>& theta_w0, std::span<const double> v1,
                                       const ReportOptions& opts) {
    CondensationReport rep;
    rep.step = step;
    rep.t = t;
    for (std::size_t l = 1; l <= params.config().layers(); ++l) {
        LayerReport lr;
        const std::vector<Kernel> ks = layer_kernels(params, l, opts.include_bias);
        lr.cosine = cosine_matrix(ks);
        for (const Kernel& k : ks) {
            lr.amplitude.push_back(norm2(k));
            lr.ones_alignment.push_back(alignment_with_ones(k));
        }
        lr.clusters = cluster_directions(lr.cosine, opts.cluster_threshold);
        rep.layers.push_back(std::move(lr));
    }
    if (!theta_w0.empty() && !v1.empty()) {
        const TheoremRatios tr = theorem_ratios(theta_w(params), theta_w0, v1);
        rep.relative_change = tr.relative_change;
        rep.projection_ratio = tr.projection_ratio;
    } else {
        rep.relative_change = rep.projection_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

std::vector<std::size_t> order_by_alignment(const std::vector<Kernel>& kernels, std::span<const double> direction) {
    std::vector<double> key(kernels.size());
    for (std::size_t i = 0; i < kernels.size(); ++i) key[i] = cosine(kernels[i], direction);
    std::vector<std::size_t> order(kernels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return order;
}

Matrix permute(const Matrix& D, const std::vector<std::size_t>& order) {
    if (order.size() != D.rows || D.rows != D.cols) throw DimensionError("permute: order does not match D");
    Matrix P(D.rows, D.cols);
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = 0; j < order.size(); ++j) P(i, j) = D(order[i], order[j]);
    return P;
}

double median_abs_offdiagonal(const Matrix& D) {
    std::vector<double> v;
    for (std::size_t i = 0; i < D.rows; ++i)
        for (std::size_t j = 0; j < D.cols; ++j)
            if (i != j) v.push_back(std::abs(D(i, j)));
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void write_cosine_csv(const Matrix& D, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < D.rows; ++i) {
        for (std::size_t j = 0; j < D.cols; ++j) out << (j ? "," : "") << fmt_double(D(i, j));
        out << '\n';
    }
}

unsigned char heatmap_pixel(double d) {
    const double v = std::round((std::clamp(d, -1.0, 1.0) + 1.0) / 2.0 * 255.0);
    return static_cast<unsigned char>(v);
}

void write_heatmap_pgm(const Matrix& D, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << D.cols << ' ' << D.rows << "\n255\n";
    for (double d : D.data) out.put(static_cast<char>(heatmap_pixel(d)));
}

} // namespace condlab
