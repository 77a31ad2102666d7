#include "condlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace condlab {

std::string to_string(LossKind k) {
    switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::MseSoftmax: return "mse_softmax";
    case LossKind::CrossEntropySoftmax: return "cross_entropy";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "mse_softmax") return LossKind::MseSoftmax;
    if (s == "cross_entropy") return LossKind::CrossEntropySoftmax;
    throw InvalidParameter("unknown loss '" + s + "'");
}

std::string to_string(OptimizerSpec::Kind k) { return k == OptimizerSpec::Kind::Gd ? "gd" : "adam"; }

namespace {

void check_shapes(const Matrix& outputs, const Matrix& labels) {
    if (outputs.rows != labels.rows || outputs.cols != labels.cols)
        throw DimensionError("outputs are " + std::to_string(outputs.rows) + "x" + std::to_string(outputs.cols) +
                             ", labels are " + std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
    if (outputs.rows == 0) throw DimensionError("empty batch");
}

std::vector<double> softmax(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += (p[k] = std::exp(z[k] - mx));
    for (double& x : p) x /= s;
    return p;
}

} // namespace

double loss(LossKind kind, const Matrix& outputs, const Matrix& labels) {
    check_shapes(outputs, labels);
    const std::size_t n = outputs.rows, d = outputs.cols;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = outputs.row(i);
        const auto y = labels.row(i);
        switch (kind) {
        case LossKind::Mse:
            for (std::size_t k = 0; k < d; ++k) total += (f[k] - y[k]) * (f[k] - y[k]);
            break;
        case LossKind::MseSoftmax: {
            const auto p = softmax(f);
            for (std::size_t k = 0; k < d; ++k) total += (p[k] - y[k]) * (p[k] - y[k]);
            break;
        }
        case LossKind::CrossEntropySoftmax: {
            const double mx = *std::max_element(f.begin(), f.end());
            double s = 0.0;
            for (double z : f) s += std::exp(z - mx);
            const double lse = mx + std::log(s);
            for (std::size_t k = 0; k < d; ++k) total -= y[k] * (f[k] - lse);
            break;
        }
        }
    }
    return kind == LossKind::CrossEntropySoftmax ? total / double(n) : total / (2.0 * double(n));
}

Matrix loss_gradient(LossKind kind, const Matrix& outputs, const Matrix& labels) {
    check_shapes(outputs, labels);
    const std::size_t n = outputs.rows, d = outputs.cols;
    const double inv_n = 1.0 / double(n);
    Matrix g(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = outputs.row(i);
        const auto y = labels.row(i);
        switch (kind) {
        case LossKind::Mse:
            for (std::size_t k = 0; k < d; ++k) g(i, k) = (f[k] - y[k]) * inv_n;
            break;
        case LossKind::MseSoftmax: {
            // dL/dz_j = (1/n) sum_k (p_k - y_k) p_k (delta_kj - p_j)
            const auto p = softmax(f);
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += (p[k] - y[k]) * p[k];
            for (std::size_t j = 0; j < d; ++j) g(i, j) = inv_n * p[j] * ((p[j] - y[j]) - s);
            break;
        }
        case LossKind::CrossEntropySoftmax: {
            const auto p = softmax(f);
            double ysum = 0.0;
            for (std::size_t k = 0; k < d; ++k) ysum += y[k];
            for (std::size_t j = 0; j < d; ++j) g(i, j) = inv_n * (ysum * p[j] - y[j]);
            break;
        }
        }
    }
    return g;
}

std::vector<double> residuals(const Matrix& outputs, const Matrix& labels) {
    check_shapes(outputs, labels);
    if (outputs.cols != 1) throw DimensionError("residuals need scalar outputs");
    std::vector<double> e(outputs.rows);
    for (std::size_t i = 0; i < outputs.rows; ++i) e[i] = outputs(i, 0) - labels(i, 0);
    return e;
}

LossAndGrad loss_and_grad(const CnnParams& params, const ImageBatch& batch, LossKind kind) {
    const ForwardTrace tr = forward(params, batch.images);
    const double l = loss(kind, tr.outputs, batch.labels);
    return {l, backward(params, batch.images, tr, loss_gradient(kind, tr.outputs, batch.labels))};
}

CnnParams grad(const CnnParams& params, const ImageBatch& batch, LossKind kind) {
    return loss_and_grad(params, batch, kind).grad;
}

CnnParams grad_serial(const CnnParams& params, const ImageBatch& batch, LossKind kind) {
    const ForwardTrace tr = forward_serial(params, batch.images);
    return backward_serial(params, batch.images, tr, loss_gradient(kind, tr.outputs, batch.labels));
}

CnnParams gd_step(const CnnParams& params, const CnnParams& g, double lr) {
    if (g.values().size() != params.values().size()) throw DimensionError("gd_step: gradient shape mismatch");
    CnnParams out = params;
    auto w = out.values();
    const auto gv = g.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * gv[k];
    return out;
}

AdamState AdamState::zeros_like(const CnnParams& p) {
    AdamState s;
    s.m = CnnParams(p.config());
    s.v = CnnParams(p.config());
    return s;
}

AdamResult adam_step(const CnnParams& params, const AdamState& state, const CnnParams& g, double lr,
                     const AdamHyper& h) {
    AdamResult r{params, state};
    r.state.t += 1;
    const double bc1 = 1.0 - std::pow(h.beta1, double(r.state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, double(r.state.t));
    auto w = r.params.values();
    auto m = r.state.m.values();
    auto v = r.state.v.values();
    const auto gv = g.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * gv[k];
        v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * gv[k] * gv[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= lr * mhat / (std::sqrt(vhat) + h.eps);
    }
    return r;
}

Trajectory train(const CnnConfig& config, const ImageBatch& batch, const OptimizerSpec& opt, LossKind kind,
                 std::uint64_t seed) {
    return train_from(init_params(config, seed), batch, opt, kind, seed);
}

Trajectory train_from(const CnnParams& init, const ImageBatch& batch, const OptimizerSpec& opt, LossKind kind,
                      std::uint64_t seed) {
    if (opt.steps < 1) throw InvalidParameter("train: steps must be >= 1");
    if (opt.record_stride < 1) throw InvalidParameter("train: record stride must be >= 1");
    if (!(opt.lr > 0)) throw InvalidParameter("train: learning rate must be positive");
    batch.validate();

    Trajectory traj;
    traj.config = init.config();
    traj.loss_kind = kind;
    traj.optimizer = opt;
    traj.seed = seed;

    CnnParams params = init;
    AdamState adam = AdamState::zeros_like(params);
    auto check = [&](double l, long step) {
        if (!std::isfinite(l) || std::abs(l) > kDivergenceLoss) {
            traj.snapshots.push_back({step, double(step) * opt.lr, params, l});
            throw DivergenceError("loss diverged at step " + std::to_string(step) + " (loss=" + fmt_double(l) + ")",
                                  std::move(traj));
        }
    };

    for (long step = 0; step <= opt.steps; ++step) {
        if (step == opt.steps) {
            const double l = loss(kind, forward(params, batch.images).outputs, batch.labels);
            traj.loss_history.push_back(l);
            check(l, step);
            traj.snapshots.push_back({step, double(step) * opt.lr, params, l});
            break;
        }
        LossAndGrad lg = loss_and_grad(params, batch, kind);
        traj.loss_history.push_back(lg.loss);
        check(lg.loss, step);
        if (step % opt.record_stride == 0) traj.snapshots.push_back({step, double(step) * opt.lr, params, lg.loss});
        if (opt.kind == OptimizerSpec::Kind::Gd) {
            params = gd_step(params, lg.grad, opt.lr);
        } else {
            AdamResult r = adam_step(params, adam, lg.grad, opt.lr, opt.adam);
            params = std::move(r.params);
            adam = std::move(r.state);
        }
    }
    return traj;
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "checkpoints");
    const std::string note = "# one epoch = one full-batch step; t = step * lr";
    {
        std::ofstream out(dir / "loss.csv");
        if (!out) throw IoError("cannot write " + (dir / "loss.csv").string());
        out << note << "\nstep,t,loss\n";
        for (std::size_t k = 0; k < traj.loss_history.size(); ++k)
            out << k << ',' << fmt_double(double(k) * traj.optimizer.lr) << ',' << fmt_double(traj.loss_history[k])
                << '\n';
    }
    {
        std::ofstream out(dir / "trajectory.csv");
        if (!out) throw IoError("cannot write " + (dir / "trajectory.csv").string());
        out << note << "\nstep,t,loss,checkpoint\n";
        for (const Snapshot& s : traj.snapshots) {
            char name[48];
            std::snprintf(name, sizeof name, "step_%09ld.ckpt", s.step);
            out << s.step << ',' << fmt_double(s.t) << ',' << fmt_double(s.loss) << ",checkpoints/" << name << '\n';
            write_checkpoint(s.params, dir / "checkpoints" / name);
        }
    }
}

} // namespace condlab
