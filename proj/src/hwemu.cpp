#include "lowfp/hwemu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "lowfp/error.hpp"
#include "lowfp/parallel.hpp"

namespace lowfp::hw {

namespace {

// Fills entries for doubled-integer addresses. `value_of(u)` maps a point on
// the doubled axis to the real value it represents. Grid decision thresholds
// on that axis are integers or half-integers, so the open half-intervals on
// either side of an address each hold a single grid choice; we sample them at
// +-0.25.
template <std::size_t N, typename ValueOf>
void fill_doubled(AddressLut<N>& lut, const FpFormat& f, std::size_t live, std::size_t offset,
                  std::uint8_t saturate, ValueOf value_of) {
    for (std::size_t a = 0; a < N; ++a) {
        if (a >= live) {
            lut.code[a] = lut.below[a] = lut.above[a] = saturate;
            continue;
        }
        const double u = static_cast<double>(a) - static_cast<double>(offset);
        lut.code[a] = f.quantize_code(value_of(u)).bits;
        lut.below[a] = f.quantize_code(value_of(u - 0.25)).bits;
        lut.above[a] = f.quantize_code(value_of(u + 0.25)).bits;
    }
}

struct Address {
    std::size_t index;
    double residual;
};

// round_half_even(u) clamped to [lo, hi], plus the residual u - round(u).
Address doubled_address(double u, double lo, double hi) {
    if (!std::isfinite(u)) throw InputError("LUT quantizer: non-finite input");
    const double clamped = std::clamp(u, lo - 1.0, hi + 1.0);
    const double r = std::nearbyint(clamped);
    const double residual = clamped - r;
    return {static_cast<std::size_t>(std::clamp(r, lo, hi) - lo), residual};
}

std::uint8_t lut_code(const QuantLut& lut, double xs) {
    const Address a = doubled_address(2.0 * xs, -12.0, 12.0);
    return lut.lookup(a.index, a.residual);
}

void check_fp4(const FpFormat& f, const FpFormat& expected, const char* what) {
    if (!(f == expected)) {
        throw ConfigError(std::string(what) + " must be " + expected.name() + ", got " + f.name(), {"format"});
    }
}

}  // namespace

QuantLut build_quant_lut() {
    QuantLut lut;
    const FpFormat& f = formats::e2m1();
    fill_doubled(lut, f, 25, 12, f.encode(f.max_value()).bits, [](double u) { return u / 2.0; });
    return lut;
}

DfqLuts build_dfq_luts() {
    DfqLuts luts;
    const FpFormat& neg = formats::e1m2();
    const FpFormat& pos = formats::e2m1();
    fill_doubled(luts.neg, neg, 8, 0, neg.encode(-neg.max_value()).bits, [](double u) { return -u / 2.0; });
    fill_doubled(luts.pos, pos, 13, 0, pos.encode(pos.max_value()).bits, [](double u) { return u / 2.0; });
    return luts;
}

MulLut build_mul_lut(const FpFormat& a_format, const FpFormat& b_format, const FpFormat& product_format) {
    if (a_format.total_bits() != 4 || b_format.total_bits() != 4 || product_format.total_bits() != 8) {
        throw ConfigError("product LUT needs 4-bit operands and an 8-bit product format", {"format"});
    }
    MulLut lut{a_format, b_format, product_format, {}, {}};
    for (unsigned code = 0; code < 256; ++code) {
        const double v = product_format.decode(FpCode{static_cast<std::uint8_t>(code)});
        const double units = std::ldexp(v, kFixedPointShift);
        // Codes that are not multiples of 1/4 are never produced by the table.
        lut.to_int[code] = std::isfinite(units) && units == std::trunc(units) ? static_cast<std::int32_t>(units) : 0;
    }
    for (unsigned a = 0; a < 16; ++a) {
        for (unsigned b = 0; b < 16; ++b) {
            const double p = a_format.decode(FpCode{static_cast<std::uint8_t>(a)}) *
                             b_format.decode(FpCode{static_cast<std::uint8_t>(b)});
            const FpCode code = product_format.encode(p);  // throws if p is off-grid
            const double units = std::ldexp(p, kFixedPointShift);
            if (units != std::trunc(units)) {
                throw PrecisionError("product " + std::to_string(p) + " is not a multiple of 1/4");
            }
            lut.product[(a << 4) | b] = code.bits;
        }
    }
    return lut;
}

const LutTables& lut_tables() {
    static const LutTables tables{build_quant_lut(), build_dfq_luts(),
                                  build_mul_lut(formats::e2m1(), formats::e2m1(), formats::e4m3()),
                                  build_mul_lut(formats::e1m2(), formats::e2m1(), formats::e3m4())};
    return tables;
}

void lut_quantize(std::span<const double> x, double scale, const QuantLut& lut, std::span<std::uint8_t> codes) {
    if (!(scale > 0.0)) throw InputError("lut_quantize: scale must be positive");
    if (codes.size() != x.size()) throw InputError("lut_quantize: output length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) codes[i] = lut_code(lut, x[i] / scale);
}

QuantizedTensor lut_quantize(const TensorD& x, const Granularity& g, const LutTables& luts) {
    const UnitLayout layout(x.shape(), g);
    const FpFormat& f = formats::e2m1();
    QuantizedTensor q{Tensor<std::uint8_t>(x.shape()), TensorD(layout.scale_shape()), f, g};
    parallel_for(layout.unit_count(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
            const auto [first, last] = layout.range(u);
            const std::span<const double> unit(x.data() + first, last - first);
            const double s = compute_scale(unit, f);
            q.scales[u] = s;
            lut_quantize(unit, s, luts.quant, std::span<std::uint8_t>(q.codes.data() + first, last - first));
        }
    });
    return q;
}

DfqResult dfq_lut_quantize(const TensorD& x, const Granularity& g, const LutTables& luts) {
    const FpFormat& neg = formats::e1m2();
    const FpFormat& pos = formats::e2m1();
    const UnitLayout layout(x.shape(), g);
    DfqResult r{Tensor<std::uint8_t>(x.shape()),
                Tensor<std::uint8_t>(x.shape()),
                TensorD(layout.scale_shape()),
                TensorD(layout.scale_shape()),
                neg,
                pos,
                g};
    parallel_for(layout.unit_count(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
            const auto [first, last] = layout.range(u);
            double neg_max = 0.0, pos_max = 0.0;
            for (std::size_t i = first; i < last; ++i) {
                const double v = x[i];
                if (!std::isfinite(v)) throw InputError("dfq_lut_quantize: non-finite input");
                if (v <= 0.0) {
                    neg_max = std::max(neg_max, -v);
                } else {
                    pos_max = std::max(pos_max, v);
                }
            }
            const double s_neg = neg_max == 0.0 ? 1.0 : neg_max / neg.max_value();
            const double s_pos = pos_max == 0.0 ? 1.0 : pos_max / pos.max_value();
            r.s_neg[u] = s_neg;
            r.s_pos[u] = s_pos;
            for (std::size_t i = first; i < last; ++i) {
                const double v = x[i];
                if (v <= 0.0) {
                    const Address a = doubled_address(-2.0 * (v / s_neg), 0.0, 15.0);
                    r.neg_codes[i] = luts.dfq.neg.lookup(a.index, a.residual);
                    r.pos_codes[i] = 0;
                } else {
                    const Address a = doubled_address(2.0 * (v / s_pos), 0.0, 15.0);
                    r.neg_codes[i] = 0;
                    r.pos_codes[i] = luts.dfq.pos.lookup(a.index, a.residual);
                }
            }
        }
    });
    return r;
}

void IntAccumulator::add(std::int32_t v) {
    std::int32_t out;
    if (__builtin_add_overflow(value, v, &out)) throw InputError("INT32 accumulator overflow");
    value = out;
}

std::int32_t emu_dot(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, const MulLut& lut) {
    if (a.size() != b.size()) {
        throw InputError("emu_dot: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    if (a.size() <= kMaxInt32DotLength) {
        std::int32_t acc = 0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += lut.multiply(a[i], b[i]);
        return acc;
    }
    IntAccumulator acc;
    for (std::size_t i = 0; i < a.size(); ++i) acc.add(lut.multiply(a[i], b[i]));
    return acc.value;
}

double rescale(std::int32_t acc, double s_act, double s_wt) noexcept {
    return std::ldexp(static_cast<double>(acc), -kFixedPointShift) * s_act * s_wt;
}

namespace {

// Column span of one scale group shared by both operands.
std::size_t shared_group(const Granularity& a, const Granularity& b, std::size_t cols) {
    const bool ga = a.kind == GranularityKind::per_group;
    const bool gb = b.kind == GranularityKind::per_group;
    if (ga && gb && a.group_size != b.group_size) {
        throw InputError("activation and weight group sizes differ (" + std::to_string(a.group_size) + " vs " +
                         std::to_string(b.group_size) + ")");
    }
    if (ga) return std::min(a.group_size, cols);
    if (gb) return std::min(b.group_size, cols);
    return cols;
}

void check_gemm_shapes(const Shape& x, const Shape& w) {
    if (x.size() != 2 || w.size() != 2 || x[1] != w[1]) {
        throw InputError("emu_gemm: incompatible shapes " + shape_to_string(x) + " and " + shape_to_string(w));
    }
}

}  // namespace

TensorD emu_gemm(const QuantizedTensor& x, const QuantizedTensor& w, const LutTables& luts) {
    check_fp4(x.format, formats::e2m1(), "activation format");
    check_fp4(w.format, formats::e2m1(), "weight format");
    check_gemm_shapes(x.shape(), w.shape());
    const std::size_t t_rows = x.shape()[0], o_rows = w.shape()[0], cols = x.shape()[1];
    const std::size_t group = shared_group(x.granularity, w.granularity, cols);
    const UnitLayout xl(x.shape(), x.granularity), wl(w.shape(), w.granularity);
    TensorD out(t_rows, o_rows);
    parallel_for(t_rows, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t o = 0; o < o_rows; ++o) {
                double sum = 0.0;
                for (std::size_t c0 = 0; c0 < cols; c0 += group) {
                    const std::size_t len = std::min(group, cols - c0);
                    const std::int32_t acc = emu_dot({x.codes.data() + t * cols + c0, len},
                                                     {w.codes.data() + o * cols + c0, len}, luts.mul);
                    sum += rescale(acc, x.scales[xl.unit_of(t, c0)], w.scales[wl.unit_of(o, c0)]);
                }
                out(t, o) = sum;
            }
        }
    });
    return out;
}

TensorD emu_gemm(const DfqResult& x, const QuantizedTensor& w, const LutTables& luts) {
    check_fp4(x.pos_format, formats::e2m1(), "positive-branch format");
    check_fp4(w.format, formats::e2m1(), "weight format");
    const MulLut* neg_lut = nullptr;
    if (x.neg_format == formats::e1m2()) {
        neg_lut = &luts.dfq_mul;
    } else if (x.neg_format == formats::e2m1()) {
        neg_lut = &luts.mul;
    } else {
        throw ConfigError("negative-branch format must be E1M2 or E2M1, got " + x.neg_format.name(), {"neg_format"});
    }
    check_gemm_shapes(x.shape(), w.shape());
    const std::size_t t_rows = x.shape()[0], o_rows = w.shape()[0], cols = x.shape()[1];
    const std::size_t group = shared_group(x.granularity, w.granularity, cols);
    const UnitLayout xl(x.shape(), x.granularity), wl(w.shape(), w.granularity);
    TensorD out(t_rows, o_rows);
    parallel_for(t_rows, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t o = 0; o < o_rows; ++o) {
                double sum = 0.0;
                for (std::size_t c0 = 0; c0 < cols; c0 += group) {
                    const std::size_t len = std::min(group, cols - c0);
                    const std::span<const std::uint8_t> wc(w.codes.data() + o * cols + c0, len);
                    const std::int32_t acc_neg = emu_dot({x.neg_codes.data() + t * cols + c0, len}, wc, *neg_lut);
                    const std::int32_t acc_pos = emu_dot({x.pos_codes.data() + t * cols + c0, len}, wc, luts.mul);
                    const std::size_t xu = xl.unit_of(t, c0);
                    const double sw = w.scales[wl.unit_of(o, c0)];
                    sum += rescale(acc_neg, x.s_neg[xu], sw) + rescale(acc_pos, x.s_pos[xu], sw);
                }
                out(t, o) = sum;
            }
        }
    });
    return out;
}

}  // namespace lowfp::hw

namespace lowfp::hw {

namespace {

std::size_t count_exact(const MulLut& lut) {
    std::size_t exact = 0;
    for (unsigned a = 0; a < 16; ++a) {
        for (unsigned b = 0; b < 16; ++b) {
            const double p = lut.a_format.decode(FpCode{static_cast<std::uint8_t>(a)}) *
                             lut.b_format.decode(FpCode{static_cast<std::uint8_t>(b)});
            const std::uint8_t code = lut.product[(a << 4) | b];
            if (lut.product_format.decode(FpCode{code}) == p &&
                static_cast<double>(lut.multiply(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b))) ==
                    4.0 * p) {
                ++exact;
            }
        }
    }
    return exact;
}

// Rows of 128 mixing Gaussian draws with values placed exactly on grid points
// and on grid midpoints (the tie cases). Row scales are powers of two and the
// leading columns pin the row maxima, so the scaled ties stay exact.
TensorD parity_inputs(std::size_t samples, std::mt19937_64& rng, const std::vector<double>& ties,
                      const std::vector<double>& pinned) {
    constexpr std::size_t cols = 128;
    const std::size_t rows = (samples + cols - 1) / cols;
    TensorD x(rows, cols);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
    std::uniform_int_distribution<int> mode(0, 3);
    std::uniform_int_distribution<int> exponent(-8, 8);
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = std::ldexp(1.0, exponent(rng));
        for (std::size_t c = 0; c < cols; ++c) {
            if (c < pinned.size()) {
                x(r, c) = s * pinned[c];
            } else if (mode(rng) == 0) {
                x(r, c) = s * ties[pick(rng)];
            } else {
                x(r, c) = s * 1.5 * normal(rng);
            }
        }
    }
    return x;
}

std::vector<double> grid_and_midpoints(const FpFormat& f) {
    const auto g = f.grid_values();
    std::vector<double> out(g.begin(), g.end());
    for (std::size_t i = 0; i + 1 < g.size(); ++i) out.push_back(0.5 * (g[i] + g[i + 1]));
    return out;
}

}  // namespace

SelfCheckReport self_check(std::size_t samples, std::uint64_t seed, const LutTables& luts) {
    SelfCheckReport rep;
    rep.mul_exact = count_exact(luts.mul);
    rep.dfq_mul_exact = count_exact(luts.dfq_mul);

    std::mt19937_64 rng(seed);
    const TensorD xq = parity_inputs(samples, rng, grid_and_midpoints(formats::e2m1()), {6.0});
    const Granularity row = Granularity::token();
    const QuantizedTensor ref = quantize(xq, formats::e2m1(), row);
    const QuantizedTensor lut = lut_quantize(xq, row, luts);
    rep.quant_samples = xq.size();
    for (std::size_t i = 0; i < xq.size(); ++i) rep.quant_mismatches += ref.codes[i] != lut.codes[i];

    auto ties = grid_and_midpoints(formats::e1m2());
    for (double v : grid_and_midpoints(formats::e2m1())) ties.push_back(v);
    const TensorD xd = parity_inputs(samples, rng, ties, {6.0, -3.5});
    const DfqResult dref = dfq_quantize(xd, formats::e1m2(), formats::e2m1(), row);
    const DfqResult dlut = dfq_lut_quantize(xd, row, luts);
    rep.dfq_samples = xd.size();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        rep.dfq_mismatches += dref.neg_codes[i] != dlut.neg_codes[i] || dref.pos_codes[i] != dlut.pos_codes[i];
    }
    return rep;
}

}  // namespace lowfp::hw
