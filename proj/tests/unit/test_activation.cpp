#include "condlab/activation.hpp"
#include "condlab/errors.hpp"

#include "finite_difference.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace condlab;

TEST(Activation, TanhUnitSlope) {
    EXPECT_EQ(activation(Activation::Tanh, 0.0), 0.0);
    EXPECT_EQ(activation_deriv(Activation::Tanh, 0.0), 1.0);
    EXPECT_EQ(multiplicity(Activation::Tanh), 1);
    EXPECT_TRUE(unit_slope_at_origin(Activation::Tanh));
}

TEST(Activation, XtanhHasMultiplicityTwo) {
    EXPECT_EQ(activation(Activation::Xtanh, 0.0), 0.0);
    EXPECT_EQ(activation_deriv(Activation::Xtanh, 0.0), 0.0);
    EXPECT_EQ(multiplicity(Activation::Xtanh), 2);
    EXPECT_FALSE(unit_slope_at_origin(Activation::Xtanh));
}

TEST(Activation, ScaledSiluHasUnitSlope) {
    EXPECT_TRUE(unit_slope_at_origin(Activation::ScaledSilu));
    EXPECT_FALSE(unit_slope_at_origin(Activation::Silu));
    EXPECT_FALSE(unit_slope_at_origin(Activation::Sigmoid));
    EXPECT_EQ(multiplicity(Activation::Sigmoid), 0);
}

TEST(Activation, DerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (Activation a : {Activation::Tanh, Activation::Sigmoid, Activation::Silu, Activation::ScaledSilu,
                         Activation::Xtanh}) {
        for (int k = 0; k < 100; ++k) {
            const double x = u(rng);
            auto f = [&](const std::vector<double>& v) { return activation(a, v[0]); };
            auto df = [&](const std::vector<double>& v) { return activation_deriv(a, v[0]); };
            EXPECT_LT(oracle::relative_error(activation_deriv(a, x), oracle::central_difference(f, {x}, 0, 1e-5), 1e-3),
                      1e-7);
            EXPECT_LT(oracle::relative_error(activation_second_deriv(a, x),
                                             oracle::central_difference(df, {x}, 0, 1e-5), 1e-3),
                      1e-6);
        }
    }
}

TEST(Activation, RoundTripNames) {
    for (Activation a : {Activation::Tanh, Activation::Relu, Activation::Sigmoid, Activation::Silu,
                         Activation::ScaledSilu, Activation::Xtanh})
        EXPECT_EQ(activation_from_string(to_string(a)), a);
    EXPECT_THROW(activation_from_string("gelu"), InvalidParameter);
}
