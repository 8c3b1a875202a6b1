#include "lowfp/hadamard.hpp"

#include <cmath>
#include <string>

#include "lowfp/error.hpp"
#include "lowfp/parallel.hpp"

namespace lowfp {

void HadamardConfig::validate() const {
    if (!is_power_of_two(group_size)) {
        throw InputError("Hadamard group size " + std::to_string(group_size) + " is not a power of two");
    }
    if (dim == 0 || dim % group_size != 0) {
        throw InputError("channel count " + std::to_string(dim) + " is not divisible by Hadamard group size " +
                         std::to_string(group_size));
    }
}

TensorD hadamard_matrix(std::size_t n) {
    if (!is_power_of_two(n)) throw InputError("Hadamard order " + std::to_string(n) + " is not a power of two");
    TensorD h(n, n);
    h(0, 0) = 1.0;
    for (std::size_t m = 1; m < n; m *= 2) {
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < m; ++c) {
                const double v = h(r, c);
                h(r, c + m) = v;
                h(r + m, c) = v;
                h(r + m, c + m) = -v;
            }
        }
    }
    return h;
}

template <typename T>
void fwht_inplace(std::span<T> v, bool normalized) {
    const std::size_t n = v.size();
    if (!is_power_of_two(n)) throw InputError("FWHT length " + std::to_string(n) + " is not a power of two");
    for (std::size_t h = 1; h < n; h *= 2) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            for (std::size_t j = i; j < i + h; ++j) {
                const T a = v[j];
                const T b = v[j + h];
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
    }
    if (normalized) {
        const T k = static_cast<T>(1.0 / std::sqrt(static_cast<double>(n)));
        for (T& x : v) x *= k;
    }
}

template <typename T>
Tensor<T> apply_ght(const Tensor<T>& x, const HadamardConfig& cfg) {
    cfg.validate();
    if (x.cols() != cfg.dim) {
        throw InputError("rotation expects " + std::to_string(cfg.dim) + " channels, tensor has " +
                         std::to_string(x.cols()));
    }
    Tensor<T> out = x;
    parallel_for(out.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            auto row = out.row(r);
            for (std::size_t g = 0; g < cfg.dim; g += cfg.group_size) {
                fwht_inplace(row.subspan(g, cfg.group_size), cfg.normalized);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> fuse_weight_rotation(const Tensor<T>& w, const HadamardConfig& cfg) {
    // Row o of W H_B is (H_B^T w_o^T)^T; Sylvester blocks are symmetric, so
    // this is the same per-row block transform as the activation side.
    return apply_ght(w, cfg);
}

RotationFlops ght_flops(std::size_t channels, std::size_t group_size) {
    HadamardConfig{channels, group_size, true}.validate();
    RotationFlops f;
    f.ht_flops = 2ull * channels * channels;
    f.ght_flops = 2ull * channels * group_size;
    f.ratio = static_cast<double>(f.ht_flops) / static_cast<double>(f.ght_flops);
    return f;
}

template void fwht_inplace(std::span<float>, bool);
template void fwht_inplace(std::span<double>, bool);
template TensorF apply_ght(const TensorF&, const HadamardConfig&);
template TensorD apply_ght(const TensorD&, const HadamardConfig&);
template TensorF fuse_weight_rotation(const TensorF&, const HadamardConfig&);
template TensorD fuse_weight_rotation(const TensorD&, const HadamardConfig&);

}  // namespace lowfp
