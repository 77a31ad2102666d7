#include "condlab/linear_dynamics.hpp"

#include "condlab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace condlab {

void require_theory_config(const CnnConfig& cfg) {
    if (cfg.layers() != 1) throw Unsupported("linearized theory needs exactly one conv layer");
    if (cfg.head.kind != HeadSpec::Kind::Direct) throw Unsupported("linearized theory needs the direct readout head");
    if (!unit_slope_at_origin(cfg.act))
        throw Unsupported("linearized theory needs sigma(0) = 0 and sigma'(0) = 1 (got " + to_string(cfg.act) + ")");
}

std::vector<ChannelVector> channel_vectors(const CnnParams& params, double rescale) {
    const CnnConfig& cfg = params.config();
    require_theory_config(cfg);
    if (!(rescale > 0)) throw InvalidParameter("channel_vectors: rescale must be positive");
    const std::size_t m = cfg.m, C0 = cfg.channels[0], M = cfg.channels[1];
    const std::size_t W1 = cfg.width(1), H1 = cfg.height(1);
    std::vector<ChannelVector> out(M);
    for (std::size_t be = 0; be < M; ++be) {
        ChannelVector& c = out[be];
        c.w.reserve(C0 * m * m + 1);
        for (std::size_t al = 0; al < C0; ++al)
            for (std::size_t p = 0; p < m; ++p)
                for (std::size_t q = 0; q < m; ++q) c.w.push_back(params.w(1, p, q, al, be) / rescale);
        c.w.push_back(params.conv_b(1)[be] / rescale);
        c.a.reserve(W1 * H1);
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v) c.a.push_back(params.a(u, v, be) / rescale);
    }
    return out;
}

CnnParams params_from_channels(const CnnConfig& cfg, const std::vector<ChannelVector>& channels, double rescale) {
    require_theory_config(cfg);
    CnnParams p(cfg);
    const std::size_t m = cfg.m, C0 = cfg.channels[0], M = cfg.channels[1];
    const std::size_t W1 = cfg.width(1), H1 = cfg.height(1);
    if (channels.size() != M) throw DimensionError("params_from_channels: channel count mismatch");
    for (std::size_t be = 0; be < M; ++be) {
        const ChannelVector& c = channels[be];
        if (c.w.size() != C0 * m * m + 1 || c.a.size() != W1 * H1)
            throw DimensionError("params_from_channels: channel vector length mismatch");
        std::size_t k = 0;
        for (std::size_t al = 0; al < C0; ++al)
            for (std::size_t pp = 0; pp < m; ++pp)
                for (std::size_t q = 0; q < m; ++q) p.w(1, pp, q, al, be) = rescale * c.w[k++];
        p.conv_b(1)[be] = rescale * c.w[k];
        k = 0;
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v) p.a(u, v, be) = rescale * c.a[k++];
    }
    p.scale = rescale;
    return p;
}

namespace {

void check_lengths(const ChannelVector& th, const SpectralDecomposition& dec) {
    if (th.w.size() != dec.Z.cols || th.a.size() != dec.Z.rows)
        throw DimensionError("channel vector lengths (" + std::to_string(th.w.size()) + ", " +
                             std::to_string(th.a.size()) + ") do not match Z (" + std::to_string(dec.Z.rows) + "x" +
                             std::to_string(dec.Z.cols) + ")");
}

} // namespace

ModeConstants mode_constants(const ChannelVector& theta0, const SpectralDecomposition& dec) {
    check_lengths(theta0, dec);
    ModeConstants mc;
    for (std::size_t k = 0; k < dec.rank; ++k) {
        const double pw = dot(theta0.w, dec.v(k));
        const double pa = dot(theta0.a, dec.u(k));
        mc.c.push_back(0.5 * (pw + pa));
        mc.d.push_back(0.5 * (pw - pa));
    }
    return mc;
}

ChannelVector closed_form(const ChannelVector& theta0, const SpectralDecomposition& dec, double t) {
    if (!(t >= 0)) throw InvalidParameter("closed_form: t must be >= 0");
    const ModeConstants mc = mode_constants(theta0, dec);
    // Start from the frozen complement P_perp theta0, then add the evolving modes.
    ChannelVector out = theta0;
    for (std::size_t k = 0; k < dec.rank; ++k) {
        const std::vector<double> vk = dec.v(k), uk = dec.u(k);
        const double pw = mc.c[k] + mc.d[k], pa = mc.c[k] - mc.d[k];
        const double ep = std::exp(dec.lambda[k] * t), em = std::exp(-dec.lambda[k] * t);
        const double cw = mc.c[k] * ep + mc.d[k] * em;
        const double ca = mc.c[k] * ep - mc.d[k] * em;
        for (std::size_t i = 0; i < vk.size(); ++i) out.w[i] += (cw - pw) * vk[i];
        for (std::size_t i = 0; i < uk.size(); ++i) out.a[i] += (ca - pa) * uk[i];
    }
    return out;
}

ChannelVector integrate_linear(const SpectralDecomposition& dec, const ChannelVector& theta0, double t_end, double dt) {
    check_lengths(theta0, dec);
    if (!(dt > 0)) throw InvalidParameter("integrate_linear: dt must be positive");
    if (!(t_end >= 0)) throw InvalidParameter("integrate_linear: t_end must be >= 0");
    const Matrix& Z = dec.Z;
    const Matrix Zt = Z.transpose();
    auto rhs = [&](const ChannelVector& th) {
        return ChannelVector{Zt * std::span<const double>(th.a), Z * std::span<const double>(th.w)};
    };
    auto axpy = [](const ChannelVector& x, double h, const ChannelVector& k) {
        ChannelVector y = x;
        for (std::size_t i = 0; i < y.w.size(); ++i) y.w[i] += h * k.w[i];
        for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += h * k.a[i];
        return y;
    };

    ChannelVector th = theta0;
    const long steps = t_end == 0 ? 0 : long(std::ceil(t_end / dt - 1e-9));
    double t = 0.0;
    for (long s = 0; s < steps; ++s) {
        const double h = s + 1 == steps ? t_end - t : dt;
        const ChannelVector k1 = rhs(th);
        const ChannelVector k2 = rhs(axpy(th, h / 2, k1));
        const ChannelVector k3 = rhs(axpy(th, h / 2, k2));
        const ChannelVector k4 = rhs(axpy(th, h, k3));
        for (std::size_t i = 0; i < th.w.size(); ++i) th.w[i] += h / 6 * (k1.w[i] + 2 * k2.w[i] + 2 * k3.w[i] + k4.w[i]);
        for (std::size_t i = 0; i < th.a.size(); ++i) th.a[i] += h / 6 * (k1.a[i] + 2 * k2.a[i] + 2 * k3.a[i] + k4.a[i]);
        t += h;
    }
    return th;
}

std::vector<Residual> linearization_residual(const CnnParams& scaled, const ImageBatch& batch, double eps) {
    const CnnConfig& cfg = scaled.config();
    require_theory_config(cfg);
    if (batch.label_kind != LabelKind::Scalar || batch.label_dim() != 1)
        throw Unsupported("linearization residual needs scalar labels");
    if (!(eps >= 0)) throw InvalidParameter("linearization_residual: eps must be >= 0");
    batch.validate();

    const Activation act = cfg.act;
    const std::size_t n = batch.size(), m = cfg.m, C0 = cfg.channels[0], M = cfg.channels[1];
    const std::size_t W1 = cfg.width(1), H1 = cfg.height(1);
    const Tensor4& x = batch.images;

    // x^[1] in order-one units.
    Tensor4 pre(n, W1, H1, M);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v)
                for (std::size_t be = 0; be < M; ++be) {
                    double s = scaled.conv_b(1)[be];
                    for (std::size_t al = 0; al < C0; ++al)
                        for (std::size_t p = 0; p < m; ++p)
                            for (std::size_t q = 0; q < m; ++q) s += x(i, u + p, v + q, al) * scaled.w(1, p, q, al, be);
                    pre(i, u, v, be) = s;
                }

    auto sigma_over_eps = [&](double z) { return eps == 0.0 ? z : activation(act, eps * z) / eps; };
    auto sigma_prime = [&](double z) { return activation_deriv(act, eps * z); };

    // e_i = f(x_i) - y_i with f = sum eps a sigma(eps x^[1]) = eps^2 sum a sigma(eps x)/eps.
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) {
        double f = 0.0;
        for (std::size_t u = 0; u < W1; ++u)
            for (std::size_t v = 0; v < H1; ++v)
                for (std::size_t be = 0; be < M; ++be) f += scaled.a(u, v, be) * sigma_over_eps(pre(i, u, v, be));
        e[i] = eps * eps * f - batch.labels(i, 0);
    }

    const double inv_n = 1.0 / double(n);
    std::vector<Residual> out(M);
    for (std::size_t be = 0; be < M; ++be) {
        Residual& r = out[be];
        r.f.assign(C0 * m * m + 1, 0.0);
        r.g.assign(W1 * H1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double ei = e[i], yi = batch.labels(i, 0);
            for (std::size_t u = 0; u < W1; ++u)
                for (std::size_t v = 0; v < H1; ++v) {
                    const double z = pre(i, u, v, be);
                    const double a = scaled.a(u, v, be);
                    // coefficient of the input pixel in f_{p,q,alpha,beta}
                    const double coef = inv_n * a * (ei * sigma_prime(z) + yi);
                    for (std::size_t al = 0; al < C0; ++al)
                        for (std::size_t p = 0; p < m; ++p)
                            for (std::size_t q = 0; q < m; ++q) r.f[(al * m + p) * m + q] += coef * x(i, u + p, v + q, al);
                    r.f.back() += coef;
                    r.g[u * H1 + v] += inv_n * (ei * sigma_over_eps(z) + yi * z);
                }
        }
    }
    return out;
}

Energy neuron_energy(const std::vector<ChannelVector>& channels) {
    Energy en;
    for (const ChannelVector& c : channels) {
        const double nw = norm2(c.w), na = norm2(c.a);
        en.per_channel.push_back(std::sqrt(nw * nw + na * na));
        en.max = std::max(en.max, en.per_channel.back());
    }
    return en;
}

EffectiveTime detect_t_eff(const std::vector<double>& times, const std::vector<double>& e_max, double gamma,
                           std::size_t M, double eps) {
    if (times.size() != e_max.size() || times.empty())
        throw DimensionError("detect_t_eff: need matching, nonempty time and energy series");
    if (M == 0) throw InvalidParameter("detect_t_eff: M must be positive");
    EffectiveTime r;
    r.gamma = gamma;
    r.M = M;
    r.eps = eps;
    r.tau = (gamma - 1.0) / 4.0;
    r.tau_nonpositive = r.tau <= 0.0;
    r.threshold = std::pow(double(M), -r.tau);
    r.t = times;
    double phi = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        phi = std::max(phi, e_max[k]);
        r.phi.push_back(phi);
        r.certificate.push_back(double(M) * eps * eps * phi * phi * phi);
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (r.certificate[k] <= r.threshold) continue;
        if (k == 0) {
            r.t_eff = times[0];
        } else {
            const double c0 = r.certificate[k - 1], c1 = r.certificate[k];
            const double frac = (r.threshold - c0) / (c1 - c0);
            r.t_eff = times[k - 1] + frac * (times[k] - times[k - 1]);
        }
        return r;
    }
    r.censored = true;
    return r;
}

double t_eff_lower_bound(double lambda1, double gamma, std::size_t M, double eta0) {
    if (!(lambda1 > 0)) throw InvalidParameter("t_eff_lower_bound: lambda_1 must be positive");
    const double tau = (gamma - 1.0) / 4.0;
    return (std::log(0.25) + (tau - eta0) * std::log(double(M))) / lambda1;
}

} // namespace condlab
