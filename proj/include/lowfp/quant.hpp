#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "lowfp/fpcodec.hpp"
#include "lowfp/tensor.hpp"

namespace lowfp {

enum class GranularityKind { per_tensor, per_channel, per_token, per_group };

/// How a tensor is split into quantization units, each with its own scale.
/// Tensors are viewed as [rows x cols] with cols the last (reduction) axis.
/// per_channel gives one scale per weight row, per_token one per activation
/// row, per_group one per contiguous `group_size` slice of each row.
struct Granularity {
    GranularityKind kind = GranularityKind::per_tensor;
    std::size_t group_size = 128;
    // Allow a short final group when cols % group_size != 0. The missing
    // elements behave as zero padding and never affect the unit's max.
    bool pad_partial_group = false;

    static Granularity tensor() { return {}; }
    static Granularity channel() { return {GranularityKind::per_channel}; }
    static Granularity token() { return {GranularityKind::per_token}; }
    static Granularity group(std::size_t size = 128, bool pad = false) {
        return {GranularityKind::per_group, size, pad};
    }

    friend bool operator==(const Granularity&, const Granularity&) = default;
};

std::string to_string(GranularityKind kind);
GranularityKind parse_granularity_kind(std::string_view name);

/// Partition of a tensor into contiguous quantization units.
class UnitLayout {
public:
    UnitLayout(const Shape& shape, const Granularity& g);

    std::size_t unit_count() const noexcept { return units_; }
    Shape scale_shape() const;
    /// Flat element range [first, second) of unit u.
    std::pair<std::size_t, std::size_t> range(std::size_t u) const noexcept;
    /// Unit holding element (row, col).
    std::size_t unit_of(std::size_t row, std::size_t col) const noexcept;
    /// Columns per unit along a row; `cols` for whole-row and whole-tensor units.
    std::size_t span() const noexcept { return span_; }
    GranularityKind kind() const noexcept { return kind_; }

private:
    GranularityKind kind_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t span_ = 0;
    std::size_t per_row_ = 1;
    std::size_t units_ = 0;
};

struct QuantizedTensor {
    Tensor<std::uint8_t> codes;
    TensorD scales;
    FpFormat format;
    Granularity granularity;

    const Shape& shape() const noexcept { return codes.shape(); }
};

/// Symmetric integer (RTN) quantization result; codes in [-(2^(b-1)-1), 2^(b-1)-1].
struct IntQuantizedTensor {
    Tensor<std::int8_t> codes;
    TensorD scales;
    int bits = 4;
    Granularity granularity;
};

/// Dual-format result: elements <= 0 live in the negative plane with their own
/// format and scale, elements > 0 in the positive plane.
struct DfqResult {
    Tensor<std::uint8_t> neg_codes;
    Tensor<std::uint8_t> pos_codes;
    TensorD s_neg;
    TensorD s_pos;
    FpFormat neg_format;
    FpFormat pos_format;
    Granularity granularity;

    const Shape& shape() const noexcept { return neg_codes.shape(); }
};

/// max|x| / MAX_fp, or 1 for an all-zero unit.
double compute_scale(std::span<const double> unit, const FpFormat& format);

QuantizedTensor quantize(const TensorD& x, const FpFormat& format, const Granularity& g);
TensorD dequantize(const QuantizedTensor& q);

IntQuantizedTensor rtn_int_quantize(const TensorD& x, int bits, const Granularity& g);
TensorD dequantize(const IntQuantizedTensor& q);

/// Size of the b-bit signed code space (16 for INT4). The symmetric RTN
/// quantizer uses all of it except the most negative code.
std::size_t int_code_levels(int bits);

DfqResult dfq_quantize(const TensorD& x, const FpFormat& neg_format, const FpFormat& pos_format,
                       const Granularity& g);
/// Same grid on both sides, separate scales.
DfqResult afpq_quantize(const TensorD& x, const FpFormat& format, const Granularity& g);
/// neg_value * s_neg + pos_value * s_pos per element.
TensorD dequantize(const DfqResult& q);

struct DfqFormatChoice {
    const FpFormat* neg_format = nullptr;
    const FpFormat* pos_format = nullptr;
    double mse = 0.0;
    // Summed MSE of every (neg, pos) candidate pair, row-major over
    // fp4_search_candidates() with neg as the outer index.
    std::array<double, 9> pair_mse{};
};

/// Exhaustive 3x3 search over {E1M2, E2M1, E3M0} for the (negative, positive)
/// pair minimizing the MSE summed over all calibration tensors. Earlier pairs
/// win exact ties.
DfqFormatChoice dfq_search_format(std::span<const TensorD> calib, const Granularity& g);

/// Mean squared error over all elements.
double quant_mse(const TensorD& x, const TensorD& x_dequant);

}  // namespace lowfp
