#pragma once

#include "condlab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace condlab {

enum class LabelKind { Scalar, OneHot };

std::string to_string(LabelKind k);
LabelKind label_kind_from_string(const std::string& s);

// How pixels were brought into their current range. Real-data loaders
// divide bytes by 255 and add `offset`; synthetic data records scale 1.
struct Normalization {
    double scale = 1.0;
    double offset = 0.0;
};

struct BatchMeta {
    std::string source;
    Normalization norm;
};

// n samples of W0 x H0 x C0 pixels. labels is n x 1 for scalar labels,
// n x d for one-hot.
struct ImageBatch {
    Tensor4 images;
    Matrix labels;
    LabelKind label_kind = LabelKind::Scalar;
    BatchMeta meta;

    std::size_t size() const { return images.n; }
    std::size_t label_dim() const { return labels.cols; }

    // Throws DimensionError when shapes disagree.
    void validate() const;
};

struct LoadOptions {
    LabelKind label_kind = LabelKind::Scalar;
    std::size_t num_classes = 10;
    double pixel_offset = 0.0;
};

ImageBatch load_idx(const std::filesystem::path& image_path,
                    const std::filesystem::path& label_path,
                    const LoadOptions& opts = {});

ImageBatch load_cifar10(const std::filesystem::path& path, const LoadOptions& opts = {});

enum class SignMode {
    Symmetric, // magnitude in [1/c, c], sign uniform
    Positive,  // magnitude in [1/c, c], always positive
};

std::string to_string(SignMode s);
SignMode sign_mode_from_string(const std::string& s);

// Synthetic batch satisfying 1/c <= |x| <= c and 1/c <= |y| <= c.
ImageBatch synthesize(std::size_t n, std::size_t w0, std::size_t h0, std::size_t c0, double c,
                      std::uint64_t seed, SignMode sign = SignMode::Symmetric);

// Uniform sample without replacement; indices are kept in draw order.
ImageBatch subsample(const ImageBatch& batch, std::size_t n_sub, std::uint64_t seed);

// Same draw as subsample(), exposed for frequency checks.
std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t n_sub, std::uint64_t seed);

// Plain CSV batch format: "n,W0,H0,C0,label_kind" header, then one row per
// sample holding the label(s) followed by pixels in (u, v, alpha) order.
void write_batch_csv(const ImageBatch& batch, const std::filesystem::path& path);
ImageBatch read_batch_csv(const std::filesystem::path& path);

} // namespace condlab
