#pragma once

#include <cstdint>

#include "lowfp/tensor.hpp"

namespace lowfp {

double gelu(double h);

/// Zero-mean Gaussian weight matrix; each row draws its own sigma uniformly
/// from [sigma_lo, sigma_hi].
TensorD gaussian_weights(std::uint64_t seed, std::size_t rows, std::size_t cols, double sigma_lo = 0.5,
                         double sigma_hi = 2.0);

/// GeLU outputs of Gaussian pre-activations h ~ N(mean, stddev). The defaults
/// put 2.4% of the mass above zero and the rest in [-0.17, 0], the imbalance
/// seen at the input of an MLP down-projection.
TensorD gelu_activations(std::uint64_t seed, std::size_t rows, std::size_t cols, double mean = -1.98,
                         double stddev = 1.0);

}  // namespace lowfp
