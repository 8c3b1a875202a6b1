#include "lowfp/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace lowfp {

double gelu(double h) { return 0.5 * h * (1.0 + std::erf(h / std::numbers::sqrt2)); }

TensorD gaussian_weights(std::uint64_t seed, std::size_t rows, std::size_t cols, double sigma_lo,
                         double sigma_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sigma_dist(sigma_lo, sigma_hi);
    std::normal_distribution<double> normal(0.0, 1.0);
    TensorD w(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double sigma = sigma_dist(rng);
        for (double& v : w.row(r)) v = sigma * normal(rng);
    }
    return w;
}

TensorD gelu_activations(std::uint64_t seed, std::size_t rows, std::size_t cols, double mean, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(mean, stddev);
    TensorD x(rows, cols);
    for (double& v : x.values()) v = gelu(normal(rng));
    return x;
}

}  // namespace lowfp
