#include "condlab/activation.hpp"

#include "condlab/errors.hpp"

#include <cmath>

namespace condlab {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

std::string to_string(Activation a) {
    switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Silu: return "silu";
    case Activation::ScaledSilu: return "scaled_silu";
    case Activation::Xtanh: return "xtanh";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "silu") return Activation::Silu;
    if (s == "scaled_silu") return Activation::ScaledSilu;
    if (s == "xtanh") return Activation::Xtanh;
    throw InvalidParameter("unknown activation '" + s + "'");
}

double activation(Activation kind, double x) {
    switch (kind) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Silu: return x * sigmoid(x);
    case Activation::ScaledSilu: return 2.0 * x * sigmoid(x);
    case Activation::Xtanh: return x * std::tanh(x);
    }
    return 0.0;
}

double activation_deriv(Activation kind, double x) {
    switch (kind) {
    case Activation::Tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case Activation::Relu: return x > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
        const double s = sigmoid(x);
        return s * (1.0 - s);
    }
    case Activation::Silu: {
        const double s = sigmoid(x);
        return s + x * s * (1.0 - s);
    }
    case Activation::ScaledSilu: {
        const double s = sigmoid(x);
        return 2.0 * (s + x * s * (1.0 - s));
    }
    case Activation::Xtanh: {
        const double t = std::tanh(x);
        return t + x * (1.0 - t * t);
    }
    }
    return 0.0;
}

double activation_second_deriv(Activation kind, double x) {
    switch (kind) {
    case Activation::Tanh: {
        const double t = std::tanh(x);
        return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Relu: return 0.0;
    case Activation::Sigmoid: {
        const double s = sigmoid(x);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case Activation::Silu: {
        const double s = sigmoid(x);
        return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    }
    case Activation::ScaledSilu: {
        const double s = sigmoid(x);
        return 2.0 * s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    }
    case Activation::Xtanh: {
        const double t = std::tanh(x);
        const double sech2 = 1.0 - t * t;
        return 2.0 * sech2 - 2.0 * x * t * sech2;
    }
    }
    return 0.0;
}

int multiplicity(Activation kind) {
    if (activation(kind, 0.0) != 0.0) return 0;
    if (kind == Activation::Relu) return 0; // not differentiable at the origin
    if (activation_deriv(kind, 0.0) != 0.0) return 1;
    if (activation_second_deriv(kind, 0.0) != 0.0) return 2;
    return 0;
}

bool unit_slope_at_origin(Activation kind) {
    return kind != Activation::Relu && activation(kind, 0.0) == 0.0 && activation_deriv(kind, 0.0) == 1.0;
}

} // namespace condlab
