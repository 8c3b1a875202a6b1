#include "lowfp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lowfp/error.hpp"
#include "lowfp/parallel.hpp"

namespace lowfp {

std::string to_string(GranularityKind kind) {
    switch (kind) {
        case GranularityKind::per_tensor: return "per_tensor";
        case GranularityKind::per_channel: return "per_channel";
        case GranularityKind::per_token: return "per_token";
        case GranularityKind::per_group: return "per_group";
    }
    return "unknown";
}

GranularityKind parse_granularity_kind(std::string_view name) {
    if (name == "per_tensor") return GranularityKind::per_tensor;
    if (name == "per_channel") return GranularityKind::per_channel;
    if (name == "per_token") return GranularityKind::per_token;
    if (name == "per_group") return GranularityKind::per_group;
    throw ConfigError("unknown granularity '" + std::string(name) + "'", {"granularity"});
}

UnitLayout::UnitLayout(const Shape& shape, const Granularity& g) : kind_(g.kind) {
    const std::size_t n = shape_numel(shape);
    if (n == 0) throw InputError("cannot quantize an empty tensor");
    cols_ = shape.empty() ? 1 : shape.back();
    rows_ = n / cols_;
    switch (g.kind) {
        case GranularityKind::per_tensor:
            span_ = cols_;
            per_row_ = 1;
            units_ = 1;
            break;
        case GranularityKind::per_channel:
        case GranularityKind::per_token:
            span_ = cols_;
            per_row_ = 1;
            units_ = rows_;
            break;
        case GranularityKind::per_group:
            if (g.group_size == 0) throw ConfigError("group_size must be positive", {"group_size"});
            if (cols_ % g.group_size != 0 && !g.pad_partial_group) {
                throw InputError("row length " + std::to_string(cols_) + " is not divisible by group size " +
                                 std::to_string(g.group_size));
            }
            span_ = g.group_size;
            per_row_ = (cols_ + span_ - 1) / span_;
            units_ = rows_ * per_row_;
            break;
    }
}

Shape UnitLayout::scale_shape() const {
    switch (kind_) {
        case GranularityKind::per_tensor: return {1};
        case GranularityKind::per_channel:
        case GranularityKind::per_token: return {rows_};
        case GranularityKind::per_group: return {rows_, per_row_};
    }
    return {};
}

std::pair<std::size_t, std::size_t> UnitLayout::range(std::size_t u) const noexcept {
    if (kind_ == GranularityKind::per_tensor) return {0, rows_ * cols_};
    const std::size_t row = u / per_row_;
    const std::size_t first = row * cols_ + (u % per_row_) * span_;
    const std::size_t last = std::min(first + span_, (row + 1) * cols_);
    return {first, last};
}

std::size_t UnitLayout::unit_of(std::size_t row, std::size_t col) const noexcept {
    if (kind_ == GranularityKind::per_tensor) return 0;
    return row * per_row_ + col / span_;
}

namespace {

void require_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw InputError("non-finite value in quantization input");
    }
}

double max_abs(std::span<const double> values) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::fabs(v));
    return m;
}

std::span<const double> unit_span(const TensorD& x, const UnitLayout& layout, std::size_t u) {
    const auto [first, last] = layout.range(u);
    return {x.data() + first, last - first};
}

}  // namespace

double compute_scale(std::span<const double> unit, const FpFormat& format) {
    require_finite(unit);
    const double m = max_abs(unit);
    return m == 0.0 ? 1.0 : m / format.max_value();
}

QuantizedTensor quantize(const TensorD& x, const FpFormat& format, const Granularity& g) {
    const UnitLayout layout(x.shape(), g);
    QuantizedTensor q{Tensor<std::uint8_t>(x.shape()), TensorD(layout.scale_shape()), format, g};
    parallel_for(layout.unit_count(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
            const auto unit = unit_span(x, layout, u);
            const double s = compute_scale(unit, format);
            q.scales[u] = s;
            const std::size_t first = layout.range(u).first;
            for (std::size_t i = 0; i < unit.size(); ++i) {
                q.codes[first + i] = format.quantize_code(unit[i] / s).bits;
            }
        }
    });
    return q;
}

TensorD dequantize(const QuantizedTensor& q) {
    const UnitLayout layout(q.shape(), q.granularity);
    TensorD out(q.shape());
    for (std::size_t u = 0; u < layout.unit_count(); ++u) {
        const auto [first, last] = layout.range(u);
        const double s = q.scales[u];
        for (std::size_t i = first; i < last; ++i) out[i] = q.format.decode(FpCode{q.codes[i]}) * s;
    }
    return out;
}

std::size_t int_code_levels(int bits) {
    if (bits < 2 || bits > 8) throw ConfigError("integer bit width must be in [2, 8]", {"bits"});
    return std::size_t{1} << bits;
}

IntQuantizedTensor rtn_int_quantize(const TensorD& x, int bits, const Granularity& g) {
    if (bits != 4 && bits != 6 && bits != 8) {
        throw ConfigError("RTN bit width must be 4, 6 or 8", {"bits"});
    }
    const UnitLayout layout(x.shape(), g);
    const double qmax = static_cast<double>((1 << (bits - 1)) - 1);
    IntQuantizedTensor q{Tensor<std::int8_t>(x.shape()), TensorD(layout.scale_shape()), bits, g};
    parallel_for(layout.unit_count(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
            const auto unit = unit_span(x, layout, u);
            require_finite(unit);
            const double m = max_abs(unit);
            const double s = m == 0.0 ? 1.0 : m / qmax;
            q.scales[u] = s;
            const std::size_t first = layout.range(u).first;
            for (std::size_t i = 0; i < unit.size(); ++i) {
                // nearbyint honours the default round-half-to-even mode.
                const double c = std::clamp(std::nearbyint(unit[i] / s), -qmax, qmax);
                q.codes[first + i] = static_cast<std::int8_t>(c);
            }
        }
    });
    return q;
}

TensorD dequantize(const IntQuantizedTensor& q) {
    const UnitLayout layout(q.codes.shape(), q.granularity);
    TensorD out(q.codes.shape());
    for (std::size_t u = 0; u < layout.unit_count(); ++u) {
        const auto [first, last] = layout.range(u);
        for (std::size_t i = first; i < last; ++i) out[i] = q.codes[i] * q.scales[u];
    }
    return out;
}

DfqResult dfq_quantize(const TensorD& x, const FpFormat& neg_format, const FpFormat& pos_format,
                       const Granularity& g) {
    const UnitLayout layout(x.shape(), g);
    DfqResult r{Tensor<std::uint8_t>(x.shape()),
                Tensor<std::uint8_t>(x.shape()),
                TensorD(layout.scale_shape()),
                TensorD(layout.scale_shape()),
                neg_format,
                pos_format,
                g};
    parallel_for(layout.unit_count(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t u = begin; u < end; ++u) {
            const auto unit = unit_span(x, layout, u);
            require_finite(unit);
            double neg_max = 0.0, pos_max = 0.0;
            for (double v : unit) {
                if (v <= 0.0) {
                    neg_max = std::max(neg_max, -v);
                } else {
                    pos_max = std::max(pos_max, v);
                }
            }
            const double s_neg = neg_max == 0.0 ? 1.0 : neg_max / neg_format.max_value();
            const double s_pos = pos_max == 0.0 ? 1.0 : pos_max / pos_format.max_value();
            r.s_neg[u] = s_neg;
            r.s_pos[u] = s_pos;
            const std::size_t first = layout.range(u).first;
            for (std::size_t i = 0; i < unit.size(); ++i) {
                const double v = unit[i];
                if (v <= 0.0) {
                    r.neg_codes[first + i] = neg_format.quantize_code(v / s_neg).bits;
                    r.pos_codes[first + i] = 0;
                } else {
                    r.neg_codes[first + i] = 0;
                    r.pos_codes[first + i] = pos_format.quantize_code(v / s_pos).bits;
                }
            }
        }
    });
    return r;
}

DfqResult afpq_quantize(const TensorD& x, const FpFormat& format, const Granularity& g) {
    return dfq_quantize(x, format, format, g);
}

TensorD dequantize(const DfqResult& q) {
    const UnitLayout layout(q.shape(), q.granularity);
    TensorD out(q.shape());
    for (std::size_t u = 0; u < layout.unit_count(); ++u) {
        const auto [first, last] = layout.range(u);
        for (std::size_t i = first; i < last; ++i) {
            out[i] = q.neg_format.decode(FpCode{q.neg_codes[i]}) * q.s_neg[u] +
                     q.pos_format.decode(FpCode{q.pos_codes[i]}) * q.s_pos[u];
        }
    }
    return out;
}

double quant_mse(const TensorD& x, const TensorD& x_dequant) {
    if (x.shape() != x_dequant.shape()) {
        throw InputError("quant_mse: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(x_dequant.shape()));
    }
    if (x.empty()) throw InputError("quant_mse: empty tensor");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_dequant[i];
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

DfqFormatChoice dfq_search_format(std::span<const TensorD> calib, const Granularity& g) {
    if (calib.empty()) throw InputError("dfq_search_format: empty calibration set");
    const auto candidates = fp4_search_candidates();
    DfqFormatChoice best;
    best.mse = std::numeric_limits<double>::infinity();
    std::size_t pair = 0;
    for (const FpFormat* neg : candidates) {
        for (const FpFormat* pos : candidates) {
            double total = 0.0;
            for (const TensorD& x : calib) total += quant_mse(x, dequantize(dfq_quantize(x, *neg, *pos, g)));
            best.pair_mse[pair++] = total;
            if (total < best.mse) {
                best.mse = total;
                best.neg_format = neg;
                best.pos_format = pos;
            }
        }
    }
    return best;
}

}  // namespace lowfp
