#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "lowfp/fpcodec.hpp"
#include "lowfp/quant.hpp"
#include "lowfp/tensor.hpp"

namespace lowfp::hw {

/// Table-driven quantizer stage. The scaled input x is doubled and rounded
/// half-to-even to an integer address; `code` is the entry for an exact hit.
/// At addresses that sit on the midpoint between two grid values the sign of
/// the rounding residual (2x - address) selects `below` or `above`; elsewhere
/// all three entries agree.
template <std::size_t N>
struct AddressLut {
    std::array<std::uint8_t, N> code{};
    std::array<std::uint8_t, N> below{};
    std::array<std::uint8_t, N> above{};

    std::uint8_t lookup(std::size_t address, double residual) const noexcept {
        if (residual < 0.0) return below[address];
        if (residual > 0.0) return above[address];
        return code[address];
    }
};

/// Signed E2M1 quantizer: address = round(2x) + 12 over [-12, 12] (25 live
/// entries); addresses 25..31 return the +MAX code.
using QuantLut = AddressLut<32>;

/// Dual-format quantizer tables. `neg` is addressed by round(2|x|) over the
/// E1M2 magnitudes 0..7 and stores negative E1M2 codes; `pos` is addressed by
/// round(2x) over the E2M1 magnitudes 0..12. Dead addresses saturate.
struct DfqLuts {
    AddressLut<16> neg;
    AddressLut<16> pos;
};

/// Product table for 4-bit x 4-bit codes, indexed by (a << 4) | b, storing an
/// 8-bit product code; `to_int` maps a product code to product * 4.
struct MulLut {
    FpFormat a_format = formats::e2m1();
    FpFormat b_format = formats::e2m1();
    FpFormat product_format = formats::e4m3();
    std::array<std::uint8_t, 256> product{};
    std::array<std::int32_t, 256> to_int{};

    std::int32_t multiply(std::uint8_t a, std::uint8_t b) const noexcept {
        return to_int[product[(static_cast<std::size_t>(a) << 4) | b]];
    }
};

struct LutTables {
    QuantLut quant;
    DfqLuts dfq;
    MulLut mul;      // E2M1 x E2M1 -> E4M3
    MulLut dfq_mul;  // E1M2 x E2M1 -> E3M4
};

/// Fixed-point shift of the integer accumulator: products are accumulated in
/// units of 1/4.
inline constexpr int kFixedPointShift = 2;
/// Largest |product * 4| over every supported product table (6 * 6 * 4).
inline constexpr std::int64_t kMaxProductUnits = 144;
/// Longest dot product whose INT32 accumulator cannot overflow.
inline constexpr std::size_t kMaxInt32DotLength =
    static_cast<std::size_t>(std::int64_t{2147483647} / kMaxProductUnits);

QuantLut build_quant_lut();
DfqLuts build_dfq_luts();
/// Throws PrecisionError if some product is not exactly representable in
/// `product_format` or is not a multiple of 1/4.
MulLut build_mul_lut(const FpFormat& a_format, const FpFormat& b_format, const FpFormat& product_format);
const LutTables& lut_tables();

/// E2M1 codes of x / scale through the quantizer LUT (bottom pass).
void lut_quantize(std::span<const double> x, double scale, const QuantLut& lut, std::span<std::uint8_t> codes);
/// Both passes: per-unit scale (top pass) then LUT lookup; E2M1 only.
QuantizedTensor lut_quantize(const TensorD& x, const Granularity& g, const LutTables& luts = lut_tables());

/// Dual-format LUT quantizer with E1M2 negative and E2M1 positive grids.
DfqResult dfq_lut_quantize(const TensorD& x, const Granularity& g, const LutTables& luts = lut_tables());

/// INT32 accumulator that throws InputError on overflow.
struct IntAccumulator {
    std::int32_t value = 0;
    void add(std::int32_t v);
};

/// Sum of product * 4 over the pairs, accumulated exactly in INT32.
std::int32_t emu_dot(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, const MulLut& lut);

/// acc * s_act * s_wt / 4.
double rescale(std::int32_t acc, double s_act, double s_wt) noexcept;

/// [T x C] activations times [O x C] weights^T through the LUT multiplier.
/// Each output sums, in ascending group order, the rescaled integer dot of
/// every scale group.
TensorD emu_gemm(const QuantizedTensor& x, const QuantizedTensor& w, const LutTables& luts = lut_tables());
/// Dual-format activation path: negative and positive planes accumulate
/// separately and are rescaled with their own scales.
TensorD emu_gemm(const DfqResult& x, const QuantizedTensor& w, const LutTables& luts = lut_tables());

}  // namespace lowfp::hw

namespace lowfp::hw {

struct SelfCheckReport {
    std::size_t mul_exact = 0;      // of 256 E2M1 x E2M1 pairs
    std::size_t dfq_mul_exact = 0;  // of 256 E1M2 x E2M1 pairs
    std::size_t quant_samples = 0;
    std::size_t quant_mismatches = 0;
    std::size_t dfq_samples = 0;
    std::size_t dfq_mismatches = 0;

    bool passed() const noexcept {
        return mul_exact == 256 && dfq_mul_exact == 256 && quant_mismatches == 0 && dfq_mismatches == 0;
    }
};

/// Exhaustive product-table check plus LUT-vs-reference quantizer parity on
/// `samples` random elements (Gaussian values, grid points and grid
/// midpoints) for each quantizer.
SelfCheckReport self_check(std::size_t samples, std::uint64_t seed, const LutTables& luts = lut_tables());

}  // namespace lowfp::hw
