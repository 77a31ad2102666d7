// Reference forward/backward passes written as direct transcriptions of the
// layer recursion and the z-variable backward recursion. Single-threaded and
// unoptimized; the OpenMP kernels in model.cpp are tested against these.
#include "condlab/errors.hpp"
#include "condlab/model.hpp"

namespace condlab {

ForwardTrace forward_serial(const CnnParams& params, const Tensor4& images) {
    const CnnConfig& cfg = params.config();
    const std::size_t L = cfg.layers(), n = images.n, m = cfg.m;
    if (images.w != cfg.input_w || images.h != cfg.input_h || images.c != cfg.channels[0])
        throw DimensionError("forward_serial: input shape mismatch");

    ForwardTrace tr;
    for (std::size_t l = 1; l <= L; ++l) {
        const std::size_t W = cfg.width(l), H = cfg.height(l), cin = cfg.channels[l - 1], cout = cfg.channels[l];
        Tensor4 pre(n, W, H, cout), post(n, W, H, cout);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t u = 0; u < W; ++u)
                for (std::size_t v = 0; v < H; ++v)
                    for (std::size_t be = 0; be < cout; ++be) {
                        double s = 0.0;
                        for (std::size_t al = 0; al < cin; ++al)
                            for (std::size_t p = 0; p < m; ++p)
                                for (std::size_t q = 0; q < m; ++q) {
                                    const double x = l == 1 ? images(i, u + p, v + q, al)
                                                            : tr.post[l - 2](i, u + p, v + q, al);
                                    s += x * params.w(l, p, q, al, be) * filter_op(long(p), long(q), m);
                                }
                        pre(i, u, v, be) = s + params.conv_b(l)[be];
                        post(i, u, v, be) = activation(cfg.act, pre(i, u, v, be));
                    }
        tr.pre.push_back(std::move(pre));
        tr.post.push_back(std::move(post));
    }

    const Tensor4& last = tr.post.back();
    tr.outputs = Matrix(n, cfg.output_dim());
    if (cfg.head.kind == HeadSpec::Kind::Direct) {
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.0;
            for (std::size_t be = 0; be < last.c; ++be)
                for (std::size_t u = 0; u < last.w; ++u)
                    for (std::size_t v = 0; v < last.h; ++v) f += params.a(u, v, be) * last(i, u, v, be);
            tr.outputs(i, 0) = f;
        }
    } else {
        const std::size_t width = cfg.head.width, d = cfg.head.out_dim, feat = last.sample_size();
        tr.hidden_pre = Matrix(n, width);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < width; ++k) {
                double s = params.fc1_b()[k];
                for (std::size_t j = 0; j < feat; ++j) s += params.fc1_w()[k * feat + j] * last.sample(i)[j];
                tr.hidden_pre(i, k) = s;
            }
            for (std::size_t o = 0; o < d; ++o) {
                double s = params.fc2_b()[o];
                for (std::size_t k = 0; k < width; ++k) {
                    const double h = tr.hidden_pre(i, k);
                    s += params.fc2_w()[o * width + k] * (h > 0 ? h : 0.0);
                }
                tr.outputs(i, o) = s;
            }
        }
    }
    return tr;
}

CnnParams backward_serial(const CnnParams& params, const Tensor4& images, const ForwardTrace& tr, const Matrix& dout) {
    const CnnConfig& cfg = params.config();
    const std::size_t L = cfg.layers(), n = images.n, m = cfg.m;
    if (dout.rows != n || dout.cols != cfg.output_dim()) throw DimensionError("backward_serial: dout shape mismatch");
    CnnParams grad(cfg);

    for (std::size_t i = 0; i < n; ++i) {
        const Tensor4& last = tr.post.back();
        const std::size_t WL = last.w, HL = last.h, CL = last.c, feat = last.sample_size();

        // z^[L]: derivative of sum_k dout(i,k) f_k(x_i) w.r.t. x^[L](i)
        std::vector<Tensor4> z(L + 1);
        z[L] = Tensor4(1, WL, HL, CL);
        if (cfg.head.kind == HeadSpec::Kind::Direct) {
            for (std::size_t u = 0; u < WL; ++u)
                for (std::size_t v = 0; v < HL; ++v)
                    for (std::size_t be = 0; be < CL; ++be) {
                        z[L](0, u, v, be) = dout(i, 0) * params.a(u, v, be) *
                                            activation_deriv(cfg.act, tr.pre[L - 1](i, u, v, be));
                        grad.a(u, v, be) += dout(i, 0) * last(i, u, v, be);
                    }
        } else {
            const std::size_t width = cfg.head.width, d = cfg.head.out_dim;
            std::vector<double> gh(width, 0.0);
            for (std::size_t k = 0; k < width; ++k) {
                const double h = tr.hidden_pre(i, k);
                for (std::size_t o = 0; o < d; ++o) {
                    grad.fc2_w()[o * width + k] += dout(i, o) * (h > 0 ? h : 0.0);
                    if (h > 0) gh[k] += dout(i, o) * params.fc2_w()[o * width + k];
                }
            }
            for (std::size_t o = 0; o < d; ++o) grad.fc2_b()[o] += dout(i, o);
            for (std::size_t k = 0; k < width; ++k) {
                grad.fc1_b()[k] += gh[k];
                for (std::size_t j = 0; j < feat; ++j) grad.fc1_w()[k * feat + j] += gh[k] * last.sample(i)[j];
            }
            for (std::size_t j = 0; j < feat; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < width; ++k) s += gh[k] * params.fc1_w()[k * feat + j];
                z[L].data[j] = s * activation_deriv(cfg.act, tr.pre[L - 1].sample(i)[j]);
            }
        }

        // z^[l]_{u,v,beta} = sum_{alpha,s,t} z^[l+1]_{s,t,alpha} W^[l+1]_{u-s,v-t,beta,alpha}
        //                    * sigma'(x^[l]_{u,v,beta}) * chi(u-s, v-t)
        for (std::size_t l = L - 1; l >= 1; --l) {
            const std::size_t W = cfg.width(l), H = cfg.height(l), C = cfg.channels[l];
            const std::size_t Wn = cfg.width(l + 1), Hn = cfg.height(l + 1), Cn = cfg.channels[l + 1];
            z[l] = Tensor4(1, W, H, C);
            for (std::size_t u = 0; u < W; ++u)
                for (std::size_t v = 0; v < H; ++v)
                    for (std::size_t be = 0; be < C; ++be) {
                        double s = 0.0;
                        for (std::size_t al = 0; al < Cn; ++al)
                            for (std::size_t ss = 0; ss < Wn; ++ss)
                                for (std::size_t t = 0; t < Hn; ++t) {
                                    const long dp = long(u) - long(ss), dq = long(v) - long(t);
                                    if (!filter_op(dp, dq, m)) continue;
                                    s += z[l + 1](0, ss, t, al) * params.w(l + 1, std::size_t(dp), std::size_t(dq), be, al);
                                }
                        z[l](0, u, v, be) = s * activation_deriv(cfg.act, tr.pre[l - 1](i, u, v, be));
                    }
            if (l == 1) break;
        }

        // dW^[l]_{p,q,alpha,beta} = sum_{u,v} z^[l]_{u,v,beta} * input_{u+p,v+q,alpha}
        for (std::size_t l = 1; l <= L; ++l) {
            const std::size_t W = cfg.width(l), H = cfg.height(l), cin = cfg.channels[l - 1], cout = cfg.channels[l];
            for (std::size_t p = 0; p < m; ++p)
                for (std::size_t q = 0; q < m; ++q)
                    for (std::size_t al = 0; al < cin; ++al)
                        for (std::size_t be = 0; be < cout; ++be) {
                            double s = 0.0;
                            for (std::size_t u = 0; u < W; ++u)
                                for (std::size_t v = 0; v < H; ++v) {
                                    const double x = l == 1 ? images(i, u + p, v + q, al)
                                                            : tr.post[l - 2](i, u + p, v + q, al);
                                    s += z[l](0, u, v, be) * x;
                                }
                            grad.w(l, p, q, al, be) += s;
                        }
            for (std::size_t be = 0; be < cout; ++be) {
                double s = 0.0;
                for (std::size_t u = 0; u < W; ++u)
                    for (std::size_t v = 0; v < H; ++v) s += z[l](0, u, v, be);
                grad.conv_b(l)[be] += s;
            }
        }
    }
    return grad;
}

} // namespace condlab
