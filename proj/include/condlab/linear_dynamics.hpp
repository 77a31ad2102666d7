#pragma once

#include "condlab/datasets.hpp"
#include "condlab/model.hpp"
#include "condlab/spectral.hpp"

#include <optional>
#include <vector>

namespace condlab {

// theta_beta = (theta_W, theta_a) for one first-layer output channel.
// theta_W: kernel coordinates (alpha outer, (p, q) p-major) then the bias;
// theta_a: readout a_{u,v,beta} u-major.
struct ChannelVector {
    std::vector<double> w;
    std::vector<double> a;
};

// Per-channel vectors of a one-conv-layer, direct-head network, divided by
// `rescale` (pass epsilon to get the order-one variables).
std::vector<ChannelVector> channel_vectors(const CnnParams& params, double rescale = 1.0);
// Inverse of channel_vectors(): writes rescale * theta into a parameter set.
CnnParams params_from_channels(const CnnConfig& cfg, const std::vector<ChannelVector>& channels,
                               double rescale = 1.0);

// c_k, d_k for the W side. The a side uses c_a = c, d_a = -d.
struct ModeConstants {
    std::vector<double> c, d;
};

ModeConstants mode_constants(const ChannelVector& theta0, const SpectralDecomposition& dec);

ChannelVector closed_form(const ChannelVector& theta0, const SpectralDecomposition& dec, double t);

// Classical RK4 on d theta/dt = A theta with step dt (the last step is shortened
// to land on t_end).
ChannelVector integrate_linear(const SpectralDecomposition& dec, const ChannelVector& theta0, double t_end, double dt);

struct Residual {
    std::vector<double> f; // length C0 m^2 + 1
    std::vector<double> g; // length W1 H1
};

// f_beta and g_beta for every channel, from order-one parameters `scaled`
// (theta / eps) and the scale eps. eps = 0 uses sigma(eps x)/eps -> x.
std::vector<Residual> linearization_residual(const CnnParams& scaled, const ImageBatch& batch, double eps);

struct Energy {
    std::vector<double> per_channel;
    double max = 0.0;
};

Energy neuron_energy(const std::vector<ChannelVector>& channels);

struct EffectiveTime {
    double gamma = 0.0, eps = 0.0, tau = 0.0;
    std::size_t M = 0;
    double threshold = 0.0;          // M^{-tau}
    std::vector<double> t, phi, certificate; // certificate = M eps^2 phi^3
    std::optional<double> t_eff;     // empty when horizon-censored
    bool censored = false;
    bool tau_nonpositive = false;    // gamma <= 1
};

// e_max[k] is E_max at times[k] in order-one units.
EffectiveTime detect_t_eff(const std::vector<double>& times, const std::vector<double>& e_max, double gamma,
                           std::size_t M, double eps);

inline constexpr double kDefaultEta0 = 0.05;

// (1/lambda_1) [log(1/4) + (tau - eta0) log M]
double t_eff_lower_bound(double lambda1, double gamma, std::size_t M, double eta0 = kDefaultEta0);

// Checks L = 1, a direct head and an activation with sigma(0) = 0, sigma'(0) = 1.
void require_theory_config(const CnnConfig& cfg);

} // namespace condlab
