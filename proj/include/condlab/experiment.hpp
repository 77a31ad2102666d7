#pragma once

#include "condlab/config.hpp"
#include "condlab/linear_dynamics.hpp"
#include "condlab/metrics.hpp"
#include "condlab/spectral.hpp"
#include "condlab/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace condlab {

// Line written at the top of every report CSV.
inline constexpr const char* kEpochNote = "# one epoch = one full-batch step; t = step * lr";

struct RunSeeds {
    std::uint64_t data = 0, init = 0;
};

RunSeeds run_seeds(std::uint64_t master);

// Loads or synthesizes the batch; file sources are subsampled to `n` when n > 0.
ImageBatch load_dataset(const DatasetSpec& spec, std::uint64_t seed);
// Full file contents without subsampling (synthetic sources are generated).
ImageBatch load_dataset_full(const DatasetSpec& spec, std::uint64_t seed);

// Copy of `model` with the input geometry taken from the batch.
CnnConfig fit_model_to(const CnnConfig& model, const ImageBatch& batch);

struct TrainSummary {
    Trajectory trajectory;
    std::vector<CondensationReport> reports;
    std::vector<double> v1; // layer-1 leading direction; empty for one-hot labels
};

TrainSummary run_train(const ExperimentConfig& cfg, std::uint64_t master_seed);
void write_train(const ExperimentConfig& cfg, const TrainSummary& s, const std::filesystem::path& dir);
TrainSummary cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SpectrumTrial {
    std::vector<double> lambda; // first top_k values, zero padded
    std::size_t rank = 0;
    std::optional<GapInfo> gap; // empty when rank < 2
    DirectionAlignment alignment;
};

struct SpectrumSummary {
    std::vector<SpectrumTrial> trials;
    std::vector<double> lambda_mean, lambda_std;
    std::vector<bool> padded; // k beyond the smallest rank seen
    std::vector<double> align_mean, align_std;
    SpectralDecomposition first; // decomposition of trial 0 (for the v dump)
};

SpectrumSummary run_spectrum(const ExperimentConfig& cfg, std::uint64_t master_seed);
void write_spectrum(const SpectrumSummary& s, const std::filesystem::path& dir);
SpectrumSummary cmd_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct LinearizeRow {
    long step = 0;
    double t = 0.0;
    double relative_change = 0.0, projection_ratio = 0.0;
    double deviation = 0.0;   // |theta_real - theta_lin| (order-one units, all channels)
    double linear_norm = 0.0; // |theta_lin|
    double e_max = 0.0;
    double certificate = 0.0; // M eps^2 phi^3
};

struct LinearizeSummary {
    double gamma = 0.0, eps = 0.0;
    std::size_t M = 0;
    std::uint64_t seed = 0;
    double lambda1 = 0.0;
    std::optional<GapInfo> gap;
    std::vector<LinearizeRow> rows;
    EffectiveTime t_eff;
    double t_lower_bound = 0.0;
    // Values at the last recorded t <= T_eff (the last row when censored).
    double final_projection_ratio = 0.0, final_relative_change = 0.0;
    std::vector<std::string> warnings;
};

LinearizeSummary run_linearize(const ExperimentConfig& cfg, std::uint64_t cell_seed);
void write_linearize(const LinearizeSummary& s, const std::filesystem::path& dir);
// Uses the seed of sweep cell 0 so a 1x1 sweep reproduces this run.
LinearizeSummary cmd_linearize(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SweepRow {
    double gamma = 0.0;
    std::size_t M = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double projection_ratio = 0.0, relative_change = 0.0;
    std::optional<double> t_eff;
};

std::uint64_t cell_seed(std::uint64_t master, std::size_t cell_index);
SweepRow sweep_row(const LinearizeSummary& s);
std::string sweep_header();
std::string format_sweep_row(const SweepRow& r);

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, int jobs);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir, int jobs);

} // namespace condlab
