#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lowfp {

/// Raw bit pattern of a sub-byte floating-point value: sign in bit
/// (exp_bits + man_bits), exponent above the mantissa, mantissa in the low bits.
struct FpCode {
    std::uint8_t bits = 0;
    friend bool operator==(FpCode, FpCode) = default;
};

/// Descriptor of an EjMk micro-float (1 sign bit, j exponent bits, k mantissa
/// bits, explicit bias) together with its precomputed value table.
///
/// Normal values (E > 0) decode to (-1)^S 2^(E-bias) (1 + M/2^k); subnormals
/// (E = 0) to (-1)^S 2^(1-bias) (M/2^k). Formats created with `nan_code` set
/// reserve the all-ones magnitude pattern as NaN (OCP E4M3); all other
/// formats have no Inf/NaN encodings.
class FpFormat {
public:
    FpFormat(int exp_bits, int man_bits, int bias, std::string name, bool nan_code = false);

    int exp_bits() const noexcept { return exp_bits_; }
    int man_bits() const noexcept { return man_bits_; }
    int bias() const noexcept { return bias_; }
    int total_bits() const noexcept { return 1 + exp_bits_ + man_bits_; }
    const std::string& name() const noexcept { return name_; }
    bool has_nan() const noexcept { return nan_code_; }

    std::uint8_t sign_mask() const noexcept { return static_cast<std::uint8_t>(1u << (exp_bits_ + man_bits_)); }
    std::uint8_t magnitude_mask() const noexcept { return static_cast<std::uint8_t>(sign_mask() - 1); }
    std::size_t code_count() const noexcept { return std::size_t{1} << total_bits(); }

    /// Value of a bit pattern; exact. Bits above total_bits() are ignored.
    double decode(FpCode code) const noexcept;

    /// Canonical code of a value that lies exactly on the grid. Zero always
    /// encodes to the all-zeros pattern. Throws PrecisionError off-grid.
    FpCode encode(double v) const;

    /// Largest finite grid value (MAX_fp).
    double max_value() const noexcept;

    /// Distinct decodable values in ascending order.
    std::vector<double> grid_values() const;

    /// Nearest grid value; saturates beyond +-max_value(). Ties go to the
    /// candidate whose magnitude code has an even LSB. Throws InputError for
    /// non-finite input.
    double round_to_grid(double x) const;

    /// Code of round_to_grid(x), canonical for zero.
    FpCode quantize_code(double x) const;

    friend bool operator==(const FpFormat& a, const FpFormat& b) noexcept {
        return a.exp_bits_ == b.exp_bits_ && a.man_bits_ == b.man_bits_ && a.bias_ == b.bias_ &&
               a.nan_code_ == b.nan_code_;
    }

private:
    struct Tables;

    // Index into the ascending magnitude table of the nearest magnitude.
    std::size_t nearest_magnitude(double mag) const noexcept;

    int exp_bits_;
    int man_bits_;
    int bias_;
    std::string name_;
    bool nan_code_;
    std::shared_ptr<const Tables> tables_;
};

/// Shipped formats: FP4 E1M2 (bias 0), E2M1 (bias 1), E3M0 (bias 3);
/// FP6 E2M3 (bias 1), E3M2 (bias 3); FP8 E4M3 (bias 7, OCP NaN) and
/// E3M4 (bias 3, all finite).
const FpFormat& fp_format(std::string_view name);
std::span<const std::string_view> fp_format_names();

namespace formats {
const FpFormat& e1m2();
const FpFormat& e2m1();
const FpFormat& e3m0();
const FpFormat& e2m3();
const FpFormat& e3m2();
const FpFormat& e4m3();
const FpFormat& e3m4();
}  // namespace formats

/// Candidate FP4 formats for the dual-format search, in enumeration order.
std::span<const FpFormat* const> fp4_search_candidates();

}  // namespace lowfp
