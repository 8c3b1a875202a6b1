#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "lowfp/tensor.hpp"

namespace lowfp {

/// Block-diagonal Hadamard rotation H_B = BlockDiag(H_b, ..., H_b) over a
/// `dim`-wide channel axis, with `dim / group_size` identical Sylvester blocks.
/// Blocks are scaled by 1/sqrt(group_size) when `normalized`, which makes H_B
/// orthonormal and symmetric (H_B^2 = I).
struct HadamardConfig {
    std::size_t dim = 0;
    std::size_t group_size = 128;
    bool normalized = true;

    /// Throws InputError unless group_size is a power of two dividing dim.
    void validate() const;
};

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Unnormalized Sylvester Hadamard matrix, entries +-1, H H^T = n I.
TensorD hadamard_matrix(std::size_t n);

/// In-place fast Walsh-Hadamard transform; equals hadamard_matrix(n) * v,
/// additionally scaled by 1/sqrt(n) when `normalized`.
template <typename T>
void fwht_inplace(std::span<T> v, bool normalized = false);

/// Rotates every row of a [T x C] activation: each contiguous group of
/// `group_size` channels is replaced by its block transform (X H_B).
template <typename T>
Tensor<T> apply_ght(const Tensor<T>& x, const HadamardConfig& cfg);

/// Offline weight fusion: returns W H_B for an [O x C] weight so that
/// apply_ght(X) * fuse_weight_rotation(W)^T == X W^T.
template <typename T>
Tensor<T> fuse_weight_rotation(const Tensor<T>& w, const HadamardConfig& cfg);

/// Per-token multiply-add cost of a dense C x C rotation versus the
/// block-diagonal one.
struct RotationFlops {
    std::uint64_t ht_flops = 0;
    std::uint64_t ght_flops = 0;
    double ratio = 0.0;
};

RotationFlops ght_flops(std::size_t channels, std::size_t group_size);

}  // namespace lowfp
