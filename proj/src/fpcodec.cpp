#include "lowfp/fpcodec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "lowfp/error.hpp"

namespace lowfp {

struct FpFormat::Tables {
    // Decoded value of every bit pattern (NaN for reserved codes).
    std::vector<double> value;
    // Finite magnitudes, indexed by magnitude code; strictly ascending.
    std::vector<double> magnitude;
};

FpFormat::FpFormat(int exp_bits, int man_bits, int bias, std::string name, bool nan_code)
    : exp_bits_(exp_bits), man_bits_(man_bits), bias_(bias), name_(std::move(name)), nan_code_(nan_code) {
    if (exp_bits < 0 || man_bits < 0 || 1 + exp_bits + man_bits > 8 || exp_bits + man_bits == 0) {
        throw ConfigError("unsupported micro-float layout E" + std::to_string(exp_bits) + "M" +
                          std::to_string(man_bits));
    }
    auto tables = std::make_shared<Tables>();
    const unsigned mag_codes = 1u << (exp_bits + man_bits);
    const double man_scale = std::ldexp(1.0, -man_bits);
    tables->value.resize(std::size_t{2} * mag_codes);
    for (unsigned mag = 0; mag < mag_codes; ++mag) {
        const unsigned e = mag >> man_bits;
        const unsigned m = mag & ((1u << man_bits) - 1);
        double v = e > 0 ? std::ldexp(1.0 + m * man_scale, static_cast<int>(e) - bias)
                         : std::ldexp(m * man_scale, 1 - bias);
        if (nan_code && mag == mag_codes - 1) {
            v = std::numeric_limits<double>::quiet_NaN();
        } else {
            tables->magnitude.push_back(v);
        }
        tables->value[mag] = v;
        tables->value[mag | mag_codes] = -v;
    }
    tables_ = std::move(tables);
}

double FpFormat::decode(FpCode code) const noexcept {
    const auto idx = static_cast<std::size_t>(code.bits) & (code_count() - 1);
    const double v = tables_->value[idx];
    return v == 0.0 ? 0.0 : v;  // both zero patterns decode to +0
}

double FpFormat::max_value() const noexcept { return tables_->magnitude.back(); }

std::vector<double> FpFormat::grid_values() const {
    const auto& mags = tables_->magnitude;
    std::vector<double> out;
    out.reserve(2 * mags.size() - 1);
    for (auto it = mags.rbegin(); it != mags.rend(); ++it) {
        if (*it != 0.0) out.push_back(-*it);
    }
    out.insert(out.end(), mags.begin(), mags.end());
    return out;
}

FpCode FpFormat::encode(double v) const {
    const auto& mags = tables_->magnitude;
    const double mag = std::fabs(v);
    auto it = std::lower_bound(mags.begin(), mags.end(), mag);
    if (std::isnan(v) || it == mags.end() || *it != mag) {
        std::ostringstream msg;
        msg << "value " << v << " is not on the " << name_ << " grid";
        throw PrecisionError(msg.str());
    }
    auto bits = static_cast<std::uint8_t>(it - mags.begin());
    if (bits != 0 && std::signbit(v)) bits |= sign_mask();
    return FpCode{bits};
}

std::size_t FpFormat::nearest_magnitude(double mag) const noexcept {
    const auto& mags = tables_->magnitude;
    if (mag >= mags.back()) return mags.size() - 1;
    // First magnitude strictly greater than mag; mags[0] == 0 <= mag.
    const auto hi = static_cast<std::size_t>(std::upper_bound(mags.begin(), mags.end(), mag) - mags.begin());
    const std::size_t lo = hi - 1;
    // Midpoint of two adjacent grid magnitudes is exact in double.
    const double mid = 0.5 * (mags[lo] + mags[hi]);
    if (mag < mid) return lo;
    if (mag > mid) return hi;
    return (lo & 1u) == 0 ? lo : hi;
}

double FpFormat::round_to_grid(double x) const {
    if (!std::isfinite(x)) throw InputError("round_to_grid: non-finite input");
    const double m = tables_->magnitude[nearest_magnitude(std::fabs(x))];
    return m == 0.0 ? 0.0 : std::copysign(m, x);
}

FpCode FpFormat::quantize_code(double x) const {
    if (!std::isfinite(x)) throw InputError("quantize_code: non-finite input");
    auto bits = static_cast<std::uint8_t>(nearest_magnitude(std::fabs(x)));
    if (bits != 0 && std::signbit(x)) bits |= sign_mask();
    return FpCode{bits};
}

namespace formats {
const FpFormat& e1m2() { static const FpFormat f(1, 2, 0, "E1M2"); return f; }
const FpFormat& e2m1() { static const FpFormat f(2, 1, 1, "E2M1"); return f; }
const FpFormat& e3m0() { static const FpFormat f(3, 0, 3, "E3M0"); return f; }
const FpFormat& e2m3() { static const FpFormat f(2, 3, 1, "E2M3"); return f; }
const FpFormat& e3m2() { static const FpFormat f(3, 2, 3, "E3M2"); return f; }
const FpFormat& e4m3() { static const FpFormat f(4, 3, 7, "E4M3", true); return f; }
const FpFormat& e3m4() { static const FpFormat f(3, 4, 3, "E3M4"); return f; }
}  // namespace formats

namespace {
constexpr std::array<std::string_view, 7> kFormatNames = {"E1M2", "E2M1", "E3M0", "E2M3",
                                                          "E3M2", "E4M3", "E3M4"};
}

std::span<const std::string_view> fp_format_names() { return kFormatNames; }

const FpFormat& fp_format(std::string_view name) {
    if (name == "E1M2") return formats::e1m2();
    if (name == "E2M1") return formats::e2m1();
    if (name == "E3M0") return formats::e3m0();
    if (name == "E2M3") return formats::e2m3();
    if (name == "E3M2") return formats::e3m2();
    if (name == "E4M3") return formats::e4m3();
    if (name == "E3M4") return formats::e3m4();
    throw ConfigError("unknown floating-point format '" + std::string(name) + "'", {"format"});
}

std::span<const FpFormat* const> fp4_search_candidates() {
    static const std::array<const FpFormat*, 3> candidates = {&formats::e1m2(), &formats::e2m1(),
                                                              &formats::e3m0()};
    return candidates;
}

}  // namespace lowfp
