#pragma once

#include <string>

namespace condlab {

enum class Activation {
    Tanh,
    Relu,
    Sigmoid,
    Silu,       // x / (1 + e^{-x})
    ScaledSilu, // 2x / (1 + e^{-x}); unit slope at the origin
    Xtanh,      // x tanh(x)
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double activation(Activation kind, double x);
double activation_deriv(Activation kind, double x);
double activation_second_deriv(Activation kind, double x);

// Smallest r >= 1 with sigma^(s)(0) = 0 for s < r and sigma^(r)(0) != 0,
// checked up to r = 2. Returns 0 when sigma(0) != 0 or no such r <= 2 exists.
int multiplicity(Activation kind);

// sigma(0) = 0 and sigma'(0) = 1: the activations the linearized theory covers.
bool unit_slope_at_origin(Activation kind);

} // namespace condlab
