#pragma once
// Gradient of the quadratic loss for a one-conv-layer network with a direct
// readout, written out term by term from the continuous-time GD equations:
//   dW/dt = -(1/n) sum_i e_i sum_uv a_uvb sigma'(x_uvb(i)) x_{u+p,v+q,alpha}(i)
//   db/dt = -(1/n) sum_i e_i sum_uv a_uvb sigma'(x_uvb(i))
//   da/dt = -(1/n) sum_i e_i sigma(x_uvb(i))
// The gradient is minus the right-hand side.
#include "naive_stats.hpp"

#include <functional>
#include <vector>

namespace oracle {

struct TwoLayerNet {
    std::size_t m = 0, M = 0;
    // W[p][q][alpha][beta], b[beta], a[u][v][beta]
    std::vector<std::vector<std::vector<std::vector<double>>>> W;
    std::vector<double> b;
    std::vector<std::vector<std::vector<double>>> a;
};

struct TwoLayerGrad {
    std::vector<std::vector<std::vector<std::vector<double>>>> W;
    std::vector<double> b;
    std::vector<std::vector<std::vector<double>>> a;
};

inline TwoLayerGrad two_layer_gradient(const TwoLayerNet& net, const Images& x, const std::vector<double>& y,
                                       const std::function<double(double)>& sigma,
                                       const std::function<double(double)>& dsigma) {
    const std::size_t n = x.size(), W0 = x[0].size(), H0 = x[0][0].size(), C0 = x[0][0][0].size();
    const std::size_t m = net.m, M = net.M, W1 = W0 - m + 1, H1 = H0 - m + 1;

    // pre[i][u][v][beta]
    Images pre(n, std::vector<std::vector<std::vector<double>>>(
                      W1, std::vector<std::vector<double>>(H1, std::vector<double>(M, 0.0))));
    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double f = 0.0;
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v)
                for (std::size_t be = 0; be < M; ++be) {
                    double s = net.b[be];
                    for (std::size_t p = 0; p < m; ++p)
                        for (std::size_t q = 0; q < m; ++q)
                            for (std::size_t al = 0; al < C0; ++al) s += x[i][u + p][v + q][al] * net.W[p][q][al][be];
                    pre[i][u][v][be] = s;
                    f += net.a[u][v][be] * sigma(s);
                }
        e[i] = f - y[i];
    }

    TwoLayerGrad g;
    g.W.assign(m, std::vector<std::vector<std::vector<double>>>(
                      m, std::vector<std::vector<double>>(C0, std::vector<double>(M, 0.0))));
    g.b.assign(M, 0.0);
    g.a.assign(W1, std::vector<std::vector<double>>(H1, std::vector<double>(M, 0.0)));
    for (std::size_t be = 0; be < M; ++be) {
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = 0; q < m; ++q)
                for (std::size_t al = 0; al < C0; ++al) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double inner = 0.0;
                        for (std::size_t u = 0; u < W1; ++u)
                            for (std::size_t v = 0; v < H1; ++v)
                                inner += net.a[u][v][be] * dsigma(pre[i][u][v][be]) * x[i][u + p][v + q][al];
                        s += e[i] * inner;
                    }
                    g.W[p][q][al][be] = s / double(n);
                }
        double sb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double inner = 0.0;
            for (std::size_t u = 0; u < W1; ++u)
                for (std::size_t v = 0; v < H1; ++v) inner += net.a[u][v][be] * dsigma(pre[i][u][v][be]);
            sb += e[i] * inner;
        }
        g.b[be] = sb / double(n);
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += e[i] * sigma(pre[i][u][v][be]);
                g.a[u][v][be] = s / double(n);
            }
    }
    return g;
}

} // namespace oracle
