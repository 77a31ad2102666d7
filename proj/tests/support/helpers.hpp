#pragma once
// Small builders shared by the unit tests and the acceptance binary.
#include "condlab/datasets.hpp"
#include "condlab/model.hpp"
#include "condlab/rng.hpp"
#include "naive_stats.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testing_support {

inline condlab::CnnConfig make_config(std::size_t w, std::size_t h, std::size_t m, std::vector<std::size_t> channels,
                                      condlab::Activation act = condlab::Activation::Tanh) {
    condlab::CnnConfig c;
    c.input_w = w;
    c.input_h = h;
    c.m = m;
    c.channels = std::move(channels);
    c.act = act;
    return c;
}

inline condlab::CnnConfig with_fc(condlab::CnnConfig c, std::size_t width, std::size_t out_dim) {
    c.head.kind = condlab::HeadSpec::Kind::Fc;
    c.head.width = width;
    c.head.out_dim = out_dim;
    return c;
}

// Parameters drawn from N(0, sd^2) regardless of the init scheme.
inline condlab::CnnParams random_params(const condlab::CnnConfig& cfg, std::uint64_t seed, double sd = 0.5) {
    condlab::CnnParams p(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    for (double& x : p.values()) x = g(rng);
    return p;
}

inline oracle::Images to_nested(const condlab::Tensor4& t) {
    oracle::Images x(t.n, std::vector<std::vector<std::vector<double>>>(
                              t.w, std::vector<std::vector<double>>(t.h, std::vector<double>(t.c))));
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t u = 0; u < t.w; ++u)
            for (std::size_t v = 0; v < t.h; ++v)
                for (std::size_t a = 0; a < t.c; ++a) x[i][u][v][a] = t(i, u, v, a);
    return x;
}

inline std::vector<double> scalar_labels(const condlab::ImageBatch& b) {
    std::vector<double> y(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) y[i] = b.labels(i, 0);
    return y;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / ("condlab_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace testing_support
