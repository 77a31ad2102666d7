#pragma once

#include "condlab/datasets.hpp"
#include "condlab/model.hpp"
#include "condlab/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace condlab {

// Flat "key = value" text with dotted keys. '#' starts a comment. Every
// getter marks its key as used so leftovers can be reported as typos.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::optional<std::string>& fallback = std::nullopt);
    double get_double(const std::string& key, const std::optional<double>& fallback = std::nullopt);
    long get_long(const std::string& key, const std::optional<long>& fallback = std::nullopt);
    std::uint64_t get_u64(const std::string& key, const std::optional<std::uint64_t>& fallback = std::nullopt);
    bool get_bool(const std::string& key, const std::optional<bool>& fallback = std::nullopt);
    std::vector<double> get_doubles(const std::string& key, const std::optional<std::vector<double>>& fallback = std::nullopt);
    std::vector<std::size_t> get_sizes(const std::string& key,
                                       const std::optional<std::vector<std::size_t>>& fallback = std::nullopt);

    // Throws ConfigError listing keys that no getter asked for.
    void reject_unused() const;

    const std::string& origin() const { return origin_; }

private:
    const std::string* find(const std::string& key);
    [[noreturn]] void bad(const std::string& key, const std::string& why) const;

    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

struct DatasetSpec {
    std::string source = "synthetic"; // synthetic | idx | cifar10 | csv
    std::filesystem::path path, labels_path;
    std::size_t n = 0;                // 0 = keep everything the file has
    double offset = 0.0;
    LabelKind label_kind = LabelKind::Scalar;
    std::size_t classes = 10;
    // synthetic only
    std::size_t width = 8, height = 8, channels = 1;
    double bound = 2.0; // c in 1/c <= |x|, |y| <= c
    SignMode sign = SignMode::Symmetric;
};

struct AnalysisSpec {
    std::size_t trials = 1;
    std::size_t top_k = 15;
    bool include_bias = false;
    double cluster_threshold = 0.95;
    bool condense_report = true;
};

struct SweepSpec {
    std::vector<double> gammas;
    std::vector<std::size_t> channel_counts; // values of M
};

struct ExperimentConfig {
    DatasetSpec dataset;
    CnnConfig model;
    OptimizerSpec optimizer;
    LossKind loss = LossKind::Mse;
    AnalysisSpec analysis;
    SweepSpec sweep;
    std::filesystem::path out_dir = "runs";
    std::uint64_t seed = 0;
    std::string source_text; // the config as read, echoed into run directories
};

ExperimentConfig experiment_config_from(KeyValueConfig& kv);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

} // namespace condlab
