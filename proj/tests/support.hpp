#pragma once

// Shared helpers for the test suites: seeded random tensors and a central
// finite-difference gradient oracle.

#include <cmath>
#include <functional>
#include <random>

#include "lpsc/tensor.hpp"

namespace lpsc::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

/// Entries with |v| >= gap, random sign: keeps ReLU and max away from kinks.
inline Tensor random_away_from_zero(Shape shape, std::mt19937_64& rng, double gap = 0.05) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> mag(gap, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Central differences of a scalar function with respect to every entry of `at`.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& at, double step = 1e-5) {
    Tensor grad(at.shape());
    Tensor x = at;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double up = f(x);
        x[i] = orig - step;
        const double down = f(x);
        x[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace lpsc::testing
