#include "condlab/model.hpp"

#include "condlab/errors.hpp"
#include "condlab/rng.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace condlab {

void CnnConfig::validate() const {
    if (channels.size() < 2) throw InvalidParameter("config needs at least one conv layer (channels C0..CL)");
    if (m < 1) throw InvalidParameter("filter size m must be >= 1");
    for (std::size_t c : channels)
        if (c < 1) throw InvalidParameter("every channel count must be >= 1");
    const std::size_t shrink = layers() * (m - 1);
    if (input_w <= shrink || input_h <= shrink)
        throw DimensionError("valid convolution leaves no output: input " + std::to_string(input_w) + "x" +
                             std::to_string(input_h) + ", m=" + std::to_string(m) + ", L=" + std::to_string(layers()));
    if (head.kind == HeadSpec::Kind::Fc && (head.width < 1 || head.out_dim < 1))
        throw InvalidParameter("fc head needs width >= 1 and out_dim >= 1");
    if (init.kind == InitSpec::Kind::TheoryEps && !(init.gamma > 0) && init.epsilon < 0)
        throw InvalidParameter("theory init requires gamma > 0 or an explicit epsilon");
}

ParamLayout ParamLayout::from(const CnnConfig& cfg) {
    cfg.validate();
    ParamLayout lay;
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
        Block b{off, n};
        off += n;
        return b;
    };
    for (std::size_t l = 1; l <= cfg.layers(); ++l) {
        lay.conv_w.push_back(take(cfg.m * cfg.m * cfg.channels[l - 1] * cfg.channels[l]));
        lay.conv_b.push_back(take(cfg.channels[l]));
    }
    const std::size_t L = cfg.layers();
    const std::size_t feat = cfg.width(L) * cfg.height(L) * cfg.channels[L];
    if (cfg.head.kind == HeadSpec::Kind::Direct) {
        lay.readout = take(feat);
    } else {
        lay.fc1_w = take(cfg.head.width * feat);
        lay.fc1_b = take(cfg.head.width);
        lay.fc2_w = take(cfg.head.out_dim * cfg.head.width);
        lay.fc2_b = take(cfg.head.out_dim);
    }
    lay.total = off;
    return lay;
}

CnnParams::CnnParams(CnnConfig cfg) : cfg_(std::move(cfg)), layout_(ParamLayout::from(cfg_)), values_(layout_.total, 0.0) {}

double& CnnParams::w(std::size_t l, std::size_t p, std::size_t q, std::size_t a, std::size_t b) {
    const std::size_t cin = cfg_.channels[l - 1], cout = cfg_.channels[l];
    return conv_w(l)[((p * cfg_.m + q) * cin + a) * cout + b];
}

double CnnParams::w(std::size_t l, std::size_t p, std::size_t q, std::size_t a, std::size_t b) const {
    const std::size_t cin = cfg_.channels[l - 1], cout = cfg_.channels[l];
    return conv_w(l)[((p * cfg_.m + q) * cin + a) * cout + b];
}

double& CnnParams::a(std::size_t u, std::size_t v, std::size_t b) {
    const std::size_t L = cfg_.layers();
    return readout()[(u * cfg_.height(L) + v) * cfg_.channels[L] + b];
}

double CnnParams::a(std::size_t u, std::size_t v, std::size_t b) const {
    const std::size_t L = cfg_.layers();
    return readout()[(u * cfg_.height(L) + v) * cfg_.channels[L] + b];
}

bool CnnParams::all_finite() const {
    for (double x : values_)
        if (!std::isfinite(x)) return false;
    return true;
}

CnnParams CnnParams::scaled(double factor) const {
    CnnParams out = *this;
    for (double& x : out.values_) x *= factor;
    out.scale = scale * factor;
    return out;
}

int filter_op(long p, long q, std::size_t m) {
    const long mm = static_cast<long>(m);
    return (p >= 0 && q >= 0 && p <= mm - 1 && q <= mm - 1) ? 1 : 0;
}

double theory_epsilon(std::size_t M, double gamma) { return std::pow(static_cast<double>(M), -gamma / 2.0); }

double experiment_sigma(std::size_t c_in, std::size_t c_out, std::size_t m, double gamma) {
    const double fan = static_cast<double>((c_in + c_out) * m * m) / 2.0;
    return std::pow(fan, -gamma);
}

CnnParams init_params(const CnnConfig& cfg, std::uint64_t seed) {
    CnnParams params(cfg);
    Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto fill = [&](std::span<double> s, double sd) {
        for (double& x : s) x = sd * unit(rng);
    };

    const std::size_t L = cfg.layers();
    if (cfg.init.kind == InitSpec::Kind::TheoryEps) {
        const double eps =
            cfg.init.epsilon >= 0 ? cfg.init.epsilon : theory_epsilon(cfg.hidden_channels(), cfg.init.gamma);
        fill(params.values(), eps);
        params.scale = eps;
        return params;
    }

    for (std::size_t l = 1; l <= L; ++l) {
        const double sd = experiment_sigma(cfg.channels[l - 1], cfg.channels[l], cfg.m, cfg.init.gamma);
        if (!std::isfinite(sd) || sd == 0.0) throw InvalidParameter("experiment sigma overflowed or underflowed");
        fill(params.conv_w(l), sd);
        fill(params.conv_b(l), sd);
        if (l == 1) params.scale = sd;
    }
    if (cfg.head.kind == HeadSpec::Kind::Direct) {
        fill(params.readout(), cfg.init.sigma2);
    } else {
        fill(params.fc1_w(), cfg.init.sigma2);
        fill(params.fc1_b(), cfg.init.sigma2);
        fill(params.fc2_w(), cfg.init.sigma2);
        fill(params.fc2_b(), cfg.init.sigma2);
    }
    return params;
}

namespace {

void check_input(const CnnConfig& cfg, const Tensor4& images) {
    if (images.w != cfg.input_w || images.h != cfg.input_h || images.c != cfg.channels[0])
        throw DimensionError("input batch is " + std::to_string(images.w) + "x" + std::to_string(images.h) + "x" +
                             std::to_string(images.c) + ", model expects " + std::to_string(cfg.input_w) + "x" +
                             std::to_string(cfg.input_h) + "x" + std::to_string(cfg.channels[0]));
    if (images.n == 0) throw DimensionError("empty batch");
}

// out(i,u,v,:) = b + sum_{p,q,alpha} in(i,u+p,v+q,alpha) * W(p,q,alpha,:)
void conv_forward(const Tensor4& in, std::span<const double> W, std::span<const double> b, std::size_t m,
                  Tensor4& out) {
    const std::size_t cin = in.c, cout = out.c;
    const long n = static_cast<long>(in.n);
#pragma omp parallel for schedule(static)
    for (long il = 0; il < n; ++il) {
        const std::size_t i = static_cast<std::size_t>(il);
        for (std::size_t u = 0; u < out.w; ++u)
            for (std::size_t v = 0; v < out.h; ++v) {
                double* o = &out(i, u, v, 0);
                for (std::size_t be = 0; be < cout; ++be) o[be] = b[be];
                for (std::size_t p = 0; p < m; ++p)
                    for (std::size_t q = 0; q < m; ++q) {
                        const double* x = in.data.data() + in.index(i, u + p, v + q, 0);
                        for (std::size_t al = 0; al < cin; ++al) {
                            const double xv = x[al];
                            const double* wr = W.data() + ((p * m + q) * cin + al) * cout;
                            for (std::size_t be = 0; be < cout; ++be) o[be] += xv * wr[be];
                        }
                    }
            }
    }
}

// dW(p,q,alpha,:) = sum_{i,u,v} in(i,u+p,v+q,alpha) g(i,u,v,:), one row per task.
void conv_weight_grad(const Tensor4& in, const Tensor4& g, std::size_t m, std::span<double> dW, std::span<double> db) {
    const std::size_t cin = in.c, cout = g.c;
    const long rows = static_cast<long>(m * m * cin);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const std::size_t al = static_cast<std::size_t>(r) % cin;
        const std::size_t pq = static_cast<std::size_t>(r) / cin;
        const std::size_t p = pq / m, q = pq % m;
        double* d = dW.data() + static_cast<std::size_t>(r) * cout;
        for (std::size_t be = 0; be < cout; ++be) d[be] = 0.0;
        for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t u = 0; u < g.w; ++u)
                for (std::size_t v = 0; v < g.h; ++v) {
                    const double xv = in(i, u + p, v + q, al);
                    const double* gr = g.data.data() + g.index(i, u, v, 0);
                    for (std::size_t be = 0; be < cout; ++be) d[be] += xv * gr[be];
                }
    }
    for (std::size_t be = 0; be < cout; ++be) db[be] = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t u = 0; u < g.w; ++u)
            for (std::size_t v = 0; v < g.h; ++v) {
                const double* gr = g.data.data() + g.index(i, u, v, 0);
                for (std::size_t be = 0; be < cout; ++be) db[be] += gr[be];
            }
}

// gin(i,u+p,v+q,alpha) += <g(i,u,v,:), W(p,q,alpha,:)>
void conv_input_grad(const Tensor4& g, std::span<const double> W, std::size_t m, Tensor4& gin) {
    const std::size_t cin = gin.c, cout = g.c;
    std::fill(gin.data.begin(), gin.data.end(), 0.0);
    const long n = static_cast<long>(g.n);
#pragma omp parallel for schedule(static)
    for (long il = 0; il < n; ++il) {
        const std::size_t i = static_cast<std::size_t>(il);
        for (std::size_t u = 0; u < g.w; ++u)
            for (std::size_t v = 0; v < g.h; ++v) {
                const double* gr = g.data.data() + g.index(i, u, v, 0);
                for (std::size_t p = 0; p < m; ++p)
                    for (std::size_t q = 0; q < m; ++q) {
                        double* o = &gin(i, u + p, v + q, 0);
                        for (std::size_t al = 0; al < cin; ++al) {
                            const double* wr = W.data() + ((p * m + q) * cin + al) * cout;
                            double s = 0.0;
                            for (std::size_t be = 0; be < cout; ++be) s += gr[be] * wr[be];
                            o[al] += s;
                        }
                    }
            }
    }
}

void apply_activation(Activation act, const Tensor4& pre, Tensor4& post) {
    post = Tensor4(pre.n, pre.w, pre.h, pre.c);
    const long total = static_cast<long>(pre.data.size());
#pragma omp parallel for schedule(static)
    for (long k = 0; k < total; ++k) post.data[k] = activation(act, pre.data[k]);
}

void multiply_by_deriv(Activation act, const Tensor4& pre, Tensor4& g) {
    const long total = static_cast<long>(pre.data.size());
#pragma omp parallel for schedule(static)
    for (long k = 0; k < total; ++k) g.data[k] *= activation_deriv(act, pre.data[k]);
}

} // namespace

ForwardTrace forward(const CnnParams& params, const Tensor4& images) {
    const CnnConfig& cfg = params.config();
    check_input(cfg, images);
    const std::size_t L = cfg.layers(), n = images.n;

    ForwardTrace tr;
    tr.pre.reserve(L);
    tr.post.reserve(L);
    for (std::size_t l = 1; l <= L; ++l) {
        const Tensor4& in = l == 1 ? images : tr.post[l - 2];
        Tensor4 out(n, cfg.width(l), cfg.height(l), cfg.channels[l]);
        conv_forward(in, params.conv_w(l), params.conv_b(l), cfg.m, out);
        tr.pre.push_back(std::move(out));
        Tensor4 act;
        apply_activation(cfg.act, tr.pre.back(), act);
        tr.post.push_back(std::move(act));
    }

    const Tensor4& last = tr.post.back();
    const std::size_t feat = last.sample_size();
    tr.outputs = Matrix(n, cfg.output_dim());
    if (cfg.head.kind == HeadSpec::Kind::Direct) {
        const auto a = params.readout();
        const long nl = static_cast<long>(n);
#pragma omp parallel for schedule(static)
        for (long i = 0; i < nl; ++i) tr.outputs(i, 0) = dot(a, last.sample(i));
    } else {
        const std::size_t width = cfg.head.width, d = cfg.head.out_dim;
        tr.hidden_pre = Matrix(n, width);
        const auto W1 = params.fc1_w(), b1 = params.fc1_b(), W2 = params.fc2_w(), b2 = params.fc2_b();
        const long nl = static_cast<long>(n);
#pragma omp parallel for schedule(static)
        for (long il = 0; il < nl; ++il) {
            const std::size_t i = static_cast<std::size_t>(il);
            const auto s = last.sample(i);
            for (std::size_t k = 0; k < width; ++k)
                tr.hidden_pre(i, k) = b1[k] + dot(W1.subspan(k * feat, feat), s);
            for (std::size_t o = 0; o < d; ++o) {
                double acc = b2[o];
                for (std::size_t k = 0; k < width; ++k) {
                    const double h = tr.hidden_pre(i, k);
                    if (h > 0) acc += W2[o * width + k] * h;
                }
                tr.outputs(i, o) = acc;
            }
        }
    }
    return tr;
}

CnnParams backward(const CnnParams& params, const Tensor4& images, const ForwardTrace& tr, const Matrix& dout) {
    const CnnConfig& cfg = params.config();
    const std::size_t L = cfg.layers(), n = images.n;
    if (dout.rows != n || dout.cols != cfg.output_dim()) throw DimensionError("backward: dout shape mismatch");

    CnnParams grad(cfg);
    const Tensor4& last = tr.post.back();
    const std::size_t feat = last.sample_size();
    Tensor4 g(n, last.w, last.h, last.c); // dLoss/dx^[L]
    const long nl = static_cast<long>(n);

    if (cfg.head.kind == HeadSpec::Kind::Direct) {
        const auto a = params.readout();
        auto da = grad.readout();
        const long fl = static_cast<long>(feat);
#pragma omp parallel for schedule(static)
        for (long j = 0; j < fl; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += dout(i, 0) * last.sample(i)[j];
            da[j] = s;
        }
#pragma omp parallel for schedule(static)
        for (long i = 0; i < nl; ++i) {
            auto gi = g.sample(i);
            for (std::size_t j = 0; j < feat; ++j) gi[j] = dout(i, 0) * a[j];
        }
    } else {
        const std::size_t width = cfg.head.width, d = cfg.head.out_dim;
        const auto W1 = params.fc1_w(), W2 = params.fc2_w();
        auto dW1 = grad.fc1_w(), db1 = grad.fc1_b(), dW2 = grad.fc2_w(), db2 = grad.fc2_b();

        Matrix gh(n, width); // dLoss/d hidden_pre
#pragma omp parallel for schedule(static)
        for (long il = 0; il < nl; ++il) {
            const std::size_t i = static_cast<std::size_t>(il);
            for (std::size_t k = 0; k < width; ++k) {
                if (tr.hidden_pre(i, k) <= 0) continue;
                double s = 0.0;
                for (std::size_t o = 0; o < d; ++o) s += dout(i, o) * W2[o * width + k];
                gh(i, k) = s;
            }
        }
        for (std::size_t o = 0; o < d; ++o) {
            double sb = 0.0;
            for (std::size_t i = 0; i < n; ++i) sb += dout(i, o);
            db2[o] = sb;
            for (std::size_t k = 0; k < width; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double h = tr.hidden_pre(i, k);
                    if (h > 0) s += dout(i, o) * h;
                }
                dW2[o * width + k] = s;
            }
        }
        const long wl = static_cast<long>(width);
#pragma omp parallel for schedule(static)
        for (long kl = 0; kl < wl; ++kl) {
            const std::size_t k = static_cast<std::size_t>(kl);
            double* row = dW1.data() + k * feat;
            double sb = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double gk = gh(i, k);
                sb += gk;
                if (gk == 0.0) continue;
                const auto s = last.sample(i);
                for (std::size_t j = 0; j < feat; ++j) row[j] += gk * s[j];
            }
            db1[k] = sb;
        }
#pragma omp parallel for schedule(static)
        for (long il = 0; il < nl; ++il) {
            const std::size_t i = static_cast<std::size_t>(il);
            auto gi = g.sample(i);
            for (std::size_t k = 0; k < width; ++k) {
                const double gk = gh(i, k);
                if (gk == 0.0) continue;
                const auto wr = W1.subspan(k * feat, feat);
                for (std::size_t j = 0; j < feat; ++j) gi[j] += gk * wr[j];
            }
        }
    }
    multiply_by_deriv(cfg.act, tr.pre.back(), g);

    for (std::size_t l = L; l >= 1; --l) {
        const Tensor4& in = l == 1 ? images : tr.post[l - 2];
        conv_weight_grad(in, g, cfg.m, grad.conv_w(l), grad.conv_b(l));
        if (l == 1) break;
        Tensor4 gin(n, in.w, in.h, in.c);
        conv_input_grad(g, params.conv_w(l), cfg.m, gin);
        multiply_by_deriv(cfg.act, tr.pre[l - 2], gin);
        g = std::move(gin);
    }
    return grad;
}

namespace {

const char* head_name(HeadSpec::Kind k) { return k == HeadSpec::Kind::Direct ? "direct" : "fc"; }
const char* init_name(InitSpec::Kind k) { return k == InitSpec::Kind::TheoryEps ? "theory" : "experiment"; }

} // namespace

void write_checkpoint(const CnnParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const CnnConfig& c = params.config();
    out << "condlab-checkpoint 1\n";
    out << "input " << c.input_w << ' ' << c.input_h << '\n';
    out << "m " << c.m << '\n';
    out << "channels";
    for (std::size_t ch : c.channels) out << ' ' << ch;
    out << '\n';
    out << "activation " << to_string(c.act) << '\n';
    out << "head " << head_name(c.head.kind) << ' ' << c.head.width << ' ' << c.head.out_dim << '\n';
    out << "init " << init_name(c.init.kind) << ' ' << fmt_double(c.init.gamma) << ' ' << fmt_double(c.init.sigma2)
        << ' ' << fmt_double(c.init.epsilon) << '\n';
    out << "scale " << fmt_double(params.scale) << '\n';
    out << "values " << params.values().size() << '\n';
    for (double x : params.values()) out << fmt_double(x) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

CnnParams read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    auto expect = [&](const std::string& key) {
        std::string k;
        if (!(in >> k) || k != key) throw FormatError(path.string() + ": expected '" + key + "'");
    };
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "condlab-checkpoint" || version != 1) throw FormatError(path.string() + ": not a checkpoint");

    CnnConfig c;
    expect("input");
    in >> c.input_w >> c.input_h;
    expect("m");
    in >> c.m;
    expect("channels");
    std::string line;
    std::getline(in, line);
    {
        std::istringstream ss(line);
        std::size_t ch;
        while (ss >> ch) c.channels.push_back(ch);
    }
    std::string tok;
    expect("activation");
    in >> tok;
    c.act = activation_from_string(tok);
    expect("head");
    in >> tok >> c.head.width >> c.head.out_dim;
    c.head.kind = tok == "direct" ? HeadSpec::Kind::Direct : HeadSpec::Kind::Fc;
    expect("init");
    std::string g, s2, e;
    in >> tok >> g >> s2 >> e;
    c.init.kind = tok == "theory" ? InitSpec::Kind::TheoryEps : InitSpec::Kind::ExperimentSigma;
    c.init.gamma = std::stod(g);
    c.init.sigma2 = std::stod(s2);
    c.init.epsilon = std::stod(e);
    expect("scale");
    std::string sc;
    in >> sc;
    expect("values");
    std::size_t count = 0;
    in >> count;
    if (!in) throw FormatError(path.string() + ": malformed header");

    CnnParams p(c);
    p.scale = std::stod(sc);
    if (count != p.values().size()) throw FormatError(path.string() + ": value count does not match config");
    for (double& x : p.values()) {
        if (!(in >> tok)) throw TruncationError(path.string() + ": fewer values than declared");
        x = std::stod(tok);
    }
    return p;
}

} // namespace condlab
