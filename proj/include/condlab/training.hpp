#pragma once

#include "condlab/datasets.hpp"
#include "condlab/errors.hpp"
#include "condlab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace condlab {

enum class LossKind {
    Mse,                 // (1/2n) sum (f - y)^2
    MseSoftmax,          // (1/2n) sum (softmax(f) - y)^2
    CrossEntropySoftmax, // -(1/n) sum y . log softmax(f)
};

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

double loss(LossKind kind, const Matrix& outputs, const Matrix& labels);
// dLoss/dOutputs, same shape as outputs.
Matrix loss_gradient(LossKind kind, const Matrix& outputs, const Matrix& labels);
// e_i = f(x_i) - y_i for scalar outputs.
std::vector<double> residuals(const Matrix& outputs, const Matrix& labels);

struct LossAndGrad {
    double loss = 0.0;
    CnnParams grad;
};

LossAndGrad loss_and_grad(const CnnParams& params, const ImageBatch& batch, LossKind kind);
CnnParams grad(const CnnParams& params, const ImageBatch& batch, LossKind kind);
CnnParams grad_serial(const CnnParams& params, const ImageBatch& batch, LossKind kind);

CnnParams gd_step(const CnnParams& params, const CnnParams& grad, double lr);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    CnnParams m, v;
    long t = 0;

    static AdamState zeros_like(const CnnParams& p);
};

struct AdamResult {
    CnnParams params;
    AdamState state;
};

AdamResult adam_step(const CnnParams& params, const AdamState& state, const CnnParams& grad, double lr,
                     const AdamHyper& hyper = {});

struct OptimizerSpec {
    enum class Kind { Gd, Adam };
    Kind kind = Kind::Gd;
    double lr = 1e-3;
    long steps = 1;
    long record_stride = 1;
    AdamHyper adam;
};

std::string to_string(OptimizerSpec::Kind k);

struct Snapshot {
    long step = 0;
    double t = 0.0; // step * lr
    CnnParams params;
    double loss = 0.0;
};

struct Trajectory {
    CnnConfig config;
    LossKind loss_kind = LossKind::Mse;
    OptimizerSpec optimizer;
    std::uint64_t seed = 0;
    std::vector<Snapshot> snapshots;
    std::vector<double> loss_history; // loss at every step 0..steps
};

// Raised when |loss| > 1e12 or the loss is not finite. Carries the run up to
// and including the offending step.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, Trajectory partial)
        : NumericError(what), partial_(std::move(partial)) {}
    const Trajectory& partial() const { return partial_; }

private:
    Trajectory partial_;
};

inline constexpr double kDivergenceLoss = 1e12;

Trajectory train(const CnnConfig& config, const ImageBatch& batch, const OptimizerSpec& opt, LossKind kind,
                 std::uint64_t seed);
// Same as train() but from a given initial parameter set.
Trajectory train_from(const CnnParams& init, const ImageBatch& batch, const OptimizerSpec& opt, LossKind kind,
                      std::uint64_t seed = 0);

// loss.csv (every step), trajectory.csv (snapshots) and checkpoints/.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir);

} // namespace condlab
