// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0
//
// Central-finite-difference gradient checking. This is the reference the
// analytic backward passes are verified against; it only ever calls the
// forward paths.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "manet/rng.hpp"
#include "manet/tensor.hpp"

namespace manet::testing {

/// Scalar probe loss: a fixed random weighting of the output elements. Makes
/// every gradient component generically nonzero.
template <std::floating_point T>
std::vector<T> probe_weights(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<T> w(n);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return w;
}

template <std::floating_point T>
T weighted_sum(const Tensor<T>& out, const std::vector<T>& w) {
    T s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
}

/// d(loss)/d(x[i]) via central differences.
inline double fd_derivative(const std::function<double()>& loss, double& xi, double h = 1e-5) {
    const double orig = xi;
    xi = orig + h;
    const double up = loss();
    xi = orig - h;
    const double down = loss();
    xi = orig;
    return (up - down) / (2.0 * h);
}

/// Relative error with a floor that dominates only when both values are
/// numerically negligible.
inline double rel_error(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-2);
}

/// Checks analytic against central differences elementwise over `tensor`;
/// `loss` must re-run the forward path. Returns the max relative error.
inline double max_rel_error_fd(const std::function<double()>& loss, Tensor<double>& tensor,
                               const Tensor<double>& analytic, double h = 1e-5) {
    double worst = 0;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double fd = fd_derivative(loss, tensor[i], h);
        worst = std::max(worst, rel_error(analytic[i], fd));
    }
    return worst;
}

/// Same but probing only `n_samples` deterministic positions (big tensors).
inline double max_rel_error_fd_sampled(const std::function<double()>& loss, Tensor<double>& tensor,
                                       const Tensor<double>& analytic, std::size_t n_samples,
                                       std::uint64_t seed, double h = 1e-5) {
    Rng rng(seed);
    double worst = 0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t i = rng.uniform_index(tensor.size());
        const double fd = fd_derivative(loss, tensor[i], h);
        worst = std::max(worst, rel_error(analytic[i], fd));
    }
    return worst;
}

} // namespace manet::testing
