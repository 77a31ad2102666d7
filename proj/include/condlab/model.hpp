#pragma once

#include "condlab/activation.hpp"
#include "condlab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace condlab {

struct HeadSpec {
    enum class Kind { Direct, Fc };
    Kind kind = Kind::Direct;
    std::size_t width = 0;   // hidden ReLU units of the FC head
    std::size_t out_dim = 1; // d
};

struct InitSpec {
    enum class Kind { TheoryEps, ExperimentSigma };
    Kind kind = Kind::TheoryEps;
    double gamma = 2.0;
    double sigma2 = 1e-4; // linear-layer std in experiment mode
    double epsilon = -1.0; // theory mode: explicit epsilon; negative means M^{-gamma/2}
};

struct CnnConfig {
    std::size_t input_w = 0, input_h = 0;
    std::size_t m = 1;
    std::vector<std::size_t> channels; // C_0 .. C_L
    Activation act = Activation::Tanh;
    HeadSpec head;
    InitSpec init;

    std::size_t layers() const { return channels.empty() ? 0 : channels.size() - 1; }
    // Spatial size of layer l output (l = 0 is the input).
    std::size_t width(std::size_t l) const { return input_w - l * (m - 1); }
    std::size_t height(std::size_t l) const { return input_h - l * (m - 1); }
    std::size_t output_dim() const { return head.kind == HeadSpec::Kind::Direct ? 1 : head.out_dim; }
    // M := C_1
    std::size_t hidden_channels() const { return channels.at(1); }

    void validate() const;
};

// Offsets of each parameter group inside the flat CnnParams value vector.
// Conv weights are laid out (p, q, alpha, beta) with beta innermost; the
// readout is (u, v, beta); FC matrices are row-major (out, in).
struct ParamLayout {
    struct Block {
        std::size_t offset = 0, size = 0;
    };
    std::vector<Block> conv_w, conv_b;
    Block readout; // direct head
    Block fc1_w, fc1_b, fc2_w, fc2_b;
    std::size_t total = 0;

    static ParamLayout from(const CnnConfig& cfg);
};

// Value-semantic parameter set. Also used for gradients and Adam moments.
class CnnParams {
public:
    CnnParams() = default;
    explicit CnnParams(CnnConfig cfg);

    const CnnConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    // l is 1-based to match layer numbering.
    std::span<double> conv_w(std::size_t l) { return block(layout_.conv_w.at(l - 1)); }
    std::span<const double> conv_w(std::size_t l) const { return block(layout_.conv_w.at(l - 1)); }
    std::span<double> conv_b(std::size_t l) { return block(layout_.conv_b.at(l - 1)); }
    std::span<const double> conv_b(std::size_t l) const { return block(layout_.conv_b.at(l - 1)); }
    std::span<double> readout() { return block(layout_.readout); }
    std::span<const double> readout() const { return block(layout_.readout); }
    std::span<double> fc1_w() { return block(layout_.fc1_w); }
    std::span<const double> fc1_w() const { return block(layout_.fc1_w); }
    std::span<double> fc1_b() { return block(layout_.fc1_b); }
    std::span<const double> fc1_b() const { return block(layout_.fc1_b); }
    std::span<double> fc2_w() { return block(layout_.fc2_w); }
    std::span<const double> fc2_w() const { return block(layout_.fc2_w); }
    std::span<double> fc2_b() { return block(layout_.fc2_b); }
    std::span<const double> fc2_b() const { return block(layout_.fc2_b); }

    // W^[l]_{p,q,alpha,beta}
    double& w(std::size_t l, std::size_t p, std::size_t q, std::size_t a, std::size_t b);
    double w(std::size_t l, std::size_t p, std::size_t q, std::size_t a, std::size_t b) const;
    // a_{u,v,beta} of the direct readout
    double& a(std::size_t u, std::size_t v, std::size_t b);
    double a(std::size_t u, std::size_t v, std::size_t b) const;

    // Init scale actually used (epsilon in theory mode, layer-1 sigma otherwise).
    double scale = 0.0;

    bool all_finite() const;
    CnnParams scaled(double factor) const;

    friend bool operator==(const CnnParams& x, const CnnParams& y) { return x.values_ == y.values_; }

private:
    std::span<double> block(const ParamLayout::Block& b) { return {values_.data() + b.offset, b.size}; }
    std::span<const double> block(const ParamLayout::Block& b) const { return {values_.data() + b.offset, b.size}; }

    CnnConfig cfg_;
    ParamLayout layout_;
    std::vector<double> values_;
};

struct ForwardTrace {
    std::vector<Tensor4> pre;  // x^[l] for l = 1..L (index l-1)
    std::vector<Tensor4> post; // sigma(x^[l])
    Matrix hidden_pre;         // FC head pre-activations (n x width)
    Matrix outputs;            // f(x_i, theta), n x d
};

// chi(p, q) for an m x m filter
int filter_op(long p, long q, std::size_t m);

double theory_epsilon(std::size_t M, double gamma);
double experiment_sigma(std::size_t c_in, std::size_t c_out, std::size_t m, double gamma);

CnnParams init_params(const CnnConfig& cfg, std::uint64_t seed);

// OpenMP kernels; bitwise deterministic regardless of thread count.
ForwardTrace forward(const CnnParams& params, const Tensor4& images);
// Gradient of sum_i sum_k dout(i,k) * f_k(x_i) with respect to every parameter.
CnnParams backward(const CnnParams& params, const Tensor4& images, const ForwardTrace& trace, const Matrix& dout);

// Straight-loop reference versions kept for testing and benchmarking.
ForwardTrace forward_serial(const CnnParams& params, const Tensor4& images);
CnnParams backward_serial(const CnnParams& params, const Tensor4& images, const ForwardTrace& trace,
                          const Matrix& dout);

// Text checkpoint: config header plus one %.17g value per line in layout
// order (layer, p, q, alpha, beta for conv weights).
void write_checkpoint(const CnnParams& params, const std::filesystem::path& path);
CnnParams read_checkpoint(const std::filesystem::path& path);

} // namespace condlab
