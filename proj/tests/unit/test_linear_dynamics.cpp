#include "condlab/errors.hpp"
#include "condlab/linear_dynamics.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace condlab;
using testing_support::make_config;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Matrix z(r, c);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (double& x : z.data) x = g(rng);
    return z;
}

ChannelVector random_channel(std::size_t nw, std::size_t na, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    ChannelVector c;
    for (std::size_t k = 0; k < nw; ++k) c.w.push_back(g(rng));
    for (std::size_t k = 0; k < na; ++k) c.a.push_back(g(rng));
    return c;
}

double max_diff(const ChannelVector& x, const ChannelVector& y) {
    double d = 0.0;
    for (std::size_t k = 0; k < x.w.size(); ++k) d = std::max(d, std::abs(x.w[k] - y.w[k]));
    for (std::size_t k = 0; k < x.a.size(); ++k) d = std::max(d, std::abs(x.a[k] - y.a[k]));
    return d;
}

std::vector<double> residual_norms(const std::vector<Residual>& r, bool f_side) {
    std::vector<double> out;
    for (const Residual& x : r) out.push_back(norm2(f_side ? x.f : x.g));
    return out;
}

} // namespace

TEST(ChannelVectors, RoundTripThroughParams) {
    CnnConfig c = make_config(5, 4, 2, {2, 3});
    const CnnParams p = testing_support::random_params(c, 3);
    const auto ch = channel_vectors(p, 0.25);
    ASSERT_EQ(ch.size(), 3u);
    EXPECT_EQ(ch[0].w.size(), 2u * 4u + 1u);
    EXPECT_EQ(ch[0].a.size(), 4u * 3u);
    EXPECT_DOUBLE_EQ(ch[1].w[(1 * 2 + 1) * 2 + 0], p.w(1, 1, 0, 1, 1) / 0.25);
    EXPECT_DOUBLE_EQ(ch[2].w.back(), p.conv_b(1)[2] / 0.25);
    EXPECT_DOUBLE_EQ(ch[2].a[1 * 3 + 2], p.a(1, 2, 2) / 0.25);
    const CnnParams back = params_from_channels(c, ch, 0.25);
    for (std::size_t k = 0; k < p.values().size(); ++k) EXPECT_DOUBLE_EQ(back.values()[k], p.values()[k]);
}

TEST(ModeConstants, ZeroReadoutHalvesProjection) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 1));
    ChannelVector th = random_channel(5, 4, 2);
    std::fill(th.a.begin(), th.a.end(), 0.0);
    const ModeConstants mc = mode_constants(th, d);
    for (std::size_t k = 0; k < d.rank; ++k) {
        EXPECT_DOUBLE_EQ(mc.c[k], 0.5 * dot(th.w, d.v(k)));
        EXPECT_DOUBLE_EQ(mc.d[k], mc.c[k]);
    }
}

TEST(ModeConstants, UnitProjections) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 3));
    ChannelVector th{d.v(0), d.u(0)};
    const ModeConstants mc = mode_constants(th, d);
    EXPECT_NEAR(mc.c[0], 1.0, 1e-14);
    EXPECT_NEAR(mc.d[0], 0.0, 1e-14);
}

TEST(ModeConstants, SumAndDifferenceRecoverProjections) {
    const SpectralDecomposition d = svd(random_matrix(6, 4, 5));
    const ChannelVector th = random_channel(4, 6, 6);
    const ModeConstants mc = mode_constants(th, d);
    for (std::size_t k = 0; k < d.rank; ++k) {
        EXPECT_NEAR(mc.c[k] + mc.d[k], dot(th.w, d.v(k)), 1e-14);
        EXPECT_NEAR(mc.c[k] - mc.d[k], dot(th.a, d.u(k)), 1e-14);
    }
}

TEST(ClosedForm, InitialCondition) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 7));
    const ChannelVector th = random_channel(5, 4, 8);
    EXPECT_LT(max_diff(closed_form(th, d, 0.0), th), 1e-13);
    EXPECT_THROW(closed_form(th, d, -1.0), InvalidParameter);
}

TEST(ClosedForm, SingleModeGrowsExponentially) {
    // Z = u v^T with unit vectors: rank one, lambda_1 = 1
    const std::vector<double> u{0.6, 0.8, 0.0}, v{0.0, 1.0, 0.0, 0.0};
    Matrix Z(3, 4);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) Z(i, j) = u[i] * v[j];
    const SpectralDecomposition d = svd(Z);
    ASSERT_EQ(d.rank, 1u);
    const ChannelVector th{d.v(0), d.u(0)};
    for (double t : {0.5, 1.0, 2.0}) {
        const ChannelVector r = closed_form(th, d, t);
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(r.w[k], std::exp(t) * d.v(0)[k], 1e-13);
    }
}

TEST(ClosedForm, MatchesRk4) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 9));
    const ChannelVector th = random_channel(5, 4, 10);
    for (double t : {0.5, 1.0, 2.0}) EXPECT_LT(max_diff(closed_form(th, d, t), integrate_linear(d, th, t, 2e-4)), 1e-8);
}

TEST(Rk4, ZeroMatrixIsFrozen) {
    const SpectralDecomposition d = svd(Matrix(3, 4, 0.0));
    const ChannelVector th = random_channel(4, 3, 11);
    EXPECT_EQ(max_diff(integrate_linear(d, th, 2.0, 0.1), th), 0.0);
    EXPECT_EQ(max_diff(closed_form(th, d, 2.0), th), 0.0);
}

TEST(Rk4, FourthOrderConvergence) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 12));
    const ChannelVector th = random_channel(5, 4, 13);
    const ChannelVector exact = closed_form(th, d, 2.0);
    const double e1 = max_diff(integrate_linear(d, th, 2.0, 0.1), exact);
    const double e2 = max_diff(integrate_linear(d, th, 2.0, 0.05), exact);
    EXPECT_GT(e1 / e2, 12.0);
    EXPECT_LT(e1 / e2, 20.0);
}

TEST(Rk4, ZeroHorizonReturnsInit) {
    const SpectralDecomposition d = svd(random_matrix(4, 5, 14));
    const ChannelVector th = random_channel(5, 4, 15);
    EXPECT_EQ(max_diff(integrate_linear(d, th, 0.0, 0.1), th), 0.0);
}

TEST(Residual, VanishesAtZeroEps) {
    const CnnConfig c = make_config(5, 5, 3, {1, 4});
    const CnnParams scaled = testing_support::random_params(c, 16, 1.0);
    const ImageBatch b = synthesize(20, 5, 5, 1, 2.0, 17);
    for (const Residual& r : linearization_residual(scaled, b, 0.0)) {
        EXPECT_EQ(norm2(r.f), 0.0);
        EXPECT_EQ(norm2(r.g), 0.0);
    }
}

TEST(Residual, GScalesLinearlyInEps) {
    CnnConfig c = make_config(6, 6, 3, {1, 8}, Activation::ScaledSilu);
    const CnnParams scaled = testing_support::random_params(c, 18, 1.0);
    const ImageBatch b = synthesize(30, 6, 6, 1, 2.0, 19);
    const auto g1 = residual_norms(linearization_residual(scaled, b, 1e-4), false);
    const auto g2 = residual_norms(linearization_residual(scaled, b, 5e-5), false);
    for (std::size_t k = 0; k < g1.size(); ++k) {
        EXPECT_GE(g2[k] / g1[k], 0.4);
        EXPECT_LE(g2[k] / g1[k], 0.6);
    }
}

TEST(Residual, BoundedByEnergyEstimate) {
    // C from one calibration point, then held fixed over other scales and seeds.
    CnnConfig c = make_config(6, 6, 3, {1, 8});
    const ImageBatch b = synthesize(30, 6, 6, 1, 2.0, 20);
    auto ratio = [&](std::uint64_t seed, double eps) {
        const CnnParams scaled = testing_support::random_params(c, seed, 1.0);
        const double E = neuron_energy(channel_vectors(scaled)).max;
        const auto r = linearization_residual(scaled, b, eps);
        double worst = 0.0;
        for (const Residual& x : r) worst = std::max(worst, std::hypot(norm2(x.f), norm2(x.g)));
        return worst / ((8.0 * eps * eps * E * E + eps * E) * E);
    };
    const double C = 2.0 * ratio(1, 1e-2);
    for (std::uint64_t s = 2; s < 6; ++s)
        for (double eps : {1e-2, 1e-3, 1e-4}) EXPECT_LE(ratio(s, eps), C);
}

TEST(Residual, RejectsNonTheoryConfigs) {
    const ImageBatch b = synthesize(5, 6, 6, 1, 2.0, 21);
    EXPECT_THROW(linearization_residual(CnnParams(make_config(6, 6, 3, {1, 2, 2})), b, 0.1), Unsupported);
    EXPECT_THROW(linearization_residual(CnnParams(make_config(6, 6, 3, {1, 2}, Activation::Sigmoid)), b, 0.1),
                 Unsupported);
    EXPECT_THROW(require_theory_config(testing_support::with_fc(make_config(6, 6, 3, {1, 2}), 3, 1)), Unsupported);
}

TEST(Energy, ZeroParams) {
    const auto e = neuron_energy(channel_vectors(CnnParams(make_config(4, 4, 2, {1, 3}))));
    for (double x : e.per_channel) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(e.max, 0.0);
}

TEST(Energy, Pythagorean) {
    const Energy e = neuron_energy({ChannelVector{{3, 4, 0}, {0, 0}}});
    EXPECT_DOUBLE_EQ(e.max, 5.0);
}

TEST(Energy, MaxDominatesMean) {
    const CnnConfig c = make_config(5, 5, 3, {1, 16});
    const Energy e = neuron_energy(channel_vectors(init_params(c, 4), init_params(c, 4).scale));
    double mean = 0.0;
    for (double x : e.per_channel) mean += x / 16.0;
    EXPECT_GE(e.max, mean);
}

TEST(TEff, ThresholdArithmetic) {
    const EffectiveTime r = detect_t_eff({0.0}, {0.0}, 2.0, 100, 0.01);
    EXPECT_NEAR(r.threshold, 0.316228, 1e-6);
    EXPECT_DOUBLE_EQ(r.tau, 0.25);
}

TEST(TEff, FlatTrajectoryIsCensored) {
    const EffectiveTime r = detect_t_eff({0, 1, 2, 3}, {1, 1, 1, 1}, 2.0, 100, 0.01);
    EXPECT_TRUE(r.censored);
    EXPECT_FALSE(r.t_eff.has_value());
}

TEST(TEff, CrossingIsInterpolated) {
    // M eps^2 = 1: certificate = phi^3, threshold 100^-0.25
    const double th = std::pow(100.0, -0.25);
    const EffectiveTime r = detect_t_eff({0, 1}, {0.0, std::cbrt(2 * th)}, 2.0, 100, 0.1);
    ASSERT_TRUE(r.t_eff.has_value());
    EXPECT_NEAR(*r.t_eff, 0.5, 1e-12);
}

TEST(TEff, SmallGammaFlagged) {
    EXPECT_TRUE(detect_t_eff({0}, {1}, 0.5, 100, 0.1).tau_nonpositive);
}

TEST(TEff, LowerBoundFormula) {
    EXPECT_NEAR(t_eff_lower_bound(1.0, 2.0, 10000), std::log(0.25) + 0.2 * std::log(1e4), 1e-14);
    EXPECT_NEAR(t_eff_lower_bound(1.0, 2.0, 10000), 0.4558, 1e-4);
}
