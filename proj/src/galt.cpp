#include "lowfp/galt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lowfp/error.hpp"

namespace lowfp {

void CalibrationSet::validate() const {
    if (per_step.empty()) throw InputError("calibration set has no steps");
    if (step_token_counts.size() != per_step.size()) {
        throw InputError("calibration set has " + std::to_string(per_step.size()) + " steps but " +
                         std::to_string(step_token_counts.size()) + " token counts");
    }
    for (std::size_t i = 0; i < per_step.size(); ++i) {
        if (i > 0 && step_token_counts[i] <= step_token_counts[i - 1]) {
            throw InputError("step token counts must strictly increase (step " + std::to_string(i) + ")");
        }
        const TensorD& x = per_step[i];
        if (x.shape().size() != 2 || x.cols() != channels || x.rows() != samples * step_token_counts[i]) {
            throw InputError("calibration step " + std::to_string(i) + " has shape " +
                             shape_to_string(x.shape()) + ", expected [" +
                             std::to_string(samples * step_token_counts[i]) + "," + std::to_string(channels) + "]");
        }
    }
}

std::vector<std::size_t> default_schedule() { return {1, 4, 9, 16, 25, 36, 64, 100, 169, 256}; }

CalibrationSet build_calibration(const std::vector<std::vector<TensorD>>& samples,
                                 std::span<const std::size_t> schedule) {
    if (samples.empty()) throw InputError("build_calibration: no samples");
    if (schedule.empty()) throw InputError("build_calibration: empty step schedule");
    CalibrationSet set;
    set.samples = samples.size();
    set.step_token_counts.assign(schedule.begin(), schedule.end());
    set.channels = samples.front().empty() ? 0 : samples.front().front().cols();
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s].size() != schedule.size()) {
            throw InputError("sample " + std::to_string(s) + " has " + std::to_string(samples[s].size()) +
                             " steps, schedule has " + std::to_string(schedule.size()));
        }
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            const TensorD& x = samples[s][i];
            if (x.shape().size() != 2 || x.rows() != schedule[i] || x.cols() != set.channels) {
                throw InputError("sample " + std::to_string(s) + " step " + std::to_string(i) + " has shape " +
                                 shape_to_string(x.shape()) + ", expected [" + std::to_string(schedule[i]) + "," +
                                 std::to_string(set.channels) + "]");
            }
        }
    }
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        std::vector<double> rows;
        rows.reserve(set.samples * schedule[i] * set.channels);
        for (const auto& sample : samples) {
            rows.insert(rows.end(), sample[i].values().begin(), sample[i].values().end());
        }
        set.per_step.emplace_back(Shape{set.samples * schedule[i], set.channels}, std::move(rows));
    }
    set.validate();
    return set;
}

SyntheticCalibration synth_calibration(std::uint64_t seed, std::size_t samples,
                                       std::span<const std::size_t> schedule, std::size_t channels,
                                       const OutlierSpec& outliers) {
    if (outliers.channels_per_step > channels) {
        throw InputError("more outlier channels per step than channels");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> magnitude(outliers.magnitude_lo, outliers.magnitude_hi);
    std::bernoulli_distribution coin(0.5);

    SyntheticCalibration out;
    std::vector<std::vector<TensorD>> per_sample(samples);
    std::vector<std::size_t> order(channels);
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<std::size_t> planted;
        std::vector<double> offset(channels, 0.0);
        for (std::size_t k = 0; k < outliers.channels_per_step; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, channels - 1);
            std::swap(order[k], order[pick(rng)]);
            const std::size_t c = order[k];
            planted.push_back(c);
            offset[c] = (coin(rng) ? 1.0 : -1.0) * magnitude(rng);
        }
        std::sort(planted.begin(), planted.end());
        out.outlier_channels.push_back(std::move(planted));
        for (std::size_t s = 0; s < samples; ++s) {
            TensorD x(schedule[i], channels);
            for (std::size_t t = 0; t < schedule[i]; ++t) {
                for (std::size_t c = 0; c < channels; ++c) x(t, c) = normal(rng) + offset[c];
            }
            per_sample[s].push_back(std::move(x));
        }
    }
    out.calib = build_calibration(per_sample, schedule);
    return out;
}

GaltProblem GaltProblem::make(CalibrationSet calib, TensorD weight, const FpFormat& format,
                              const Granularity& granularity) {
    GaltProblem p;
    const std::size_t block = granularity.kind == GranularityKind::per_group ? granularity.group_size : 128;
    p.hadamard = HadamardConfig{calib.channels, block, true};
    p.lambda.assign(calib.channels, 1.0);
    p.calib = std::move(calib);
    p.weight = std::move(weight);
    p.format = format;
    p.granularity = granularity;
    p.validate();
    return p;
}

void GaltProblem::validate() const {
    calib.validate();
    hadamard.validate();
    if (hadamard.dim != calib.channels) throw InputError("Hadamard width does not match calibration channels");
    if (weight.shape().size() != 2 || weight.cols() != calib.channels) {
        throw InputError("weight shape " + shape_to_string(weight.shape()) + " does not match " +
                         std::to_string(calib.channels) + " input channels");
    }
    if (granularity.kind == GranularityKind::per_group && granularity.group_size != hadamard.group_size) {
        throw ConfigError("quantization group size must equal the Hadamard block size", {"group_size"});
    }
    if (lambda.size() != calib.channels) throw InputError("lambda length does not match channel count");
    for (double l : lambda) {
        if (!(l > 0.0) || !std::isfinite(l)) throw InputError("lambda must be strictly positive and finite");
    }
}

TensorD scale_channels(const TensorD& x, std::span<const double> lambda) {
    if (x.cols() != lambda.size()) throw InputError("scale_channels: lambda length mismatch");
    TensorD out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] *= lambda[c];
    }
    return out;
}

TensorD fuse_lambda_weight(const TensorD& weight, std::span<const double> lambda, const HadamardConfig& cfg) {
    std::vector<double> inv(lambda.size());
    for (std::size_t c = 0; c < lambda.size(); ++c) {
        if (!(lambda[c] > 0.0)) throw InputError("fuse_lambda_weight: lambda must be strictly positive");
        inv[c] = 1.0 / lambda[c];
    }
    return fuse_weight_rotation(scale_channels(weight, inv), cfg);
}

namespace {

TensorD transpose(const TensorD& a) {
    TensorD t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    }
    return t;
}

struct Forward {
    TensorD reference;  // X W^T
    TensorD qa;         // Q(X diag(l) H_B)
    TensorD qb;         // Q(W diag(1/l) H_B)
    TensorD output;     // qa qb^T
    double loss = 0.0;
};

Forward forward(const GaltProblem& p, std::size_t step, std::span<const double> lambda) {
    if (step >= p.calib.steps()) throw InputError("step index out of range");
    for (double l : lambda) {
        if (!(l > 0.0)) throw InputError("lambda must be strictly positive");
    }
    const TensorD& x = p.calib.per_step[step];
    Forward f;
    f.reference = matmul_nt(x, p.weight);
    f.qa = dequantize(quantize(apply_ght(scale_channels(x, lambda), p.hadamard), p.format, p.granularity));
    f.qb = dequantize(quantize(fuse_lambda_weight(p.weight, lambda, p.hadamard), p.format, p.granularity));
    f.output = matmul_nt(f.qa, f.qb);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.output.size(); ++i) {
        const double d = f.reference[i] - f.output[i];
        sum += d * d;
    }
    f.loss = sum / static_cast<double>(f.output.size());
    return f;
}

}  // namespace

double galt_loss(const GaltProblem& problem, std::size_t step) {
    return forward(problem, step, problem.lambda).loss;
}

LossGrad galt_loss_grad(const GaltProblem& problem, std::size_t step) {
    const std::span<const double> lambda = problem.lambda;
    Forward f = forward(problem, step, lambda);
    const TensorD& x = problem.calib.per_step[step];
    const TensorD& w = problem.weight;

    // dL/dY for L = mean((R - Y)^2).
    TensorD g = std::move(f.reference);
    const double k = -2.0 / static_cast<double>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (g[i] - f.output[i]);

    // STE: gradients reach the pre-quantization factors unchanged. Pulling
    // them back through the (symmetric) rotation is the same block transform.
    const TensorD grad_a = apply_ght(matmul_nt(g, transpose(f.qb)), problem.hadamard);
    const TensorD grad_b = apply_ght(matmul_nt(transpose(g), transpose(f.qa)), problem.hadamard);

    const std::size_t channels = lambda.size();
    std::vector<double> act(channels, 0.0), wt(channels, 0.0);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t c = 0; c < channels; ++c) act[c] += x(t, c) * grad_a(t, c);
    }
    for (std::size_t o = 0; o < w.rows(); ++o) {
        for (std::size_t c = 0; c < channels; ++c) wt[c] += w(o, c) * grad_b(o, c);
    }
    LossGrad out{f.loss, std::vector<double>(channels)};
    for (std::size_t c = 0; c < channels; ++c) out.grad[c] = act[c] - wt[c] / (lambda[c] * lambda[c]);
    return out;
}

std::vector<double> galt_grad(const GaltProblem& problem, std::size_t step) {
    return galt_loss_grad(problem, step).grad;
}

double galt_total_loss(const GaltProblem& problem, std::span<const double> lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < problem.calib.steps(); ++i) total += forward(problem, i, lambda).loss;
    return total;
}

void adamw_step(OptimizerState& state, std::vector<double>& lambda, std::span<const double> grad) {
    if (grad.size() != lambda.size() || state.first_moment.size() != lambda.size()) {
        throw InputError("adamw_step: parameter, gradient and moment lengths differ");
    }
    const AdamWConfig& c = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        lambda[i] *= 1.0 - c.lr * c.weight_decay;
        m = c.beta1 * m + (1.0 - c.beta1) * grad[i];
        v = c.beta2 * v + (1.0 - c.beta2) * grad[i] * grad[i];
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        lambda[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        lambda[i] = std::max(lambda[i], c.lambda_floor);
    }
}

GaltResult optimize_galt(GaltProblem& problem, std::size_t epochs, const AdamWConfig& cfg) {
    problem.lambda.assign(problem.calib.channels, 1.0);
    problem.validate();
    GaltResult result;
    result.initial_loss = galt_total_loss(problem, problem.lambda);
    result.best_loss = result.initial_loss;
    result.best_lambda = problem.lambda;

    OptimizerState state(problem.lambda.size(), cfg);
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t step = 0; step < problem.calib.steps(); ++step) {
            const LossGrad lg = galt_loss_grad(problem, step);
            adamw_step(state, problem.lambda, lg.grad);
            epoch_loss += lg.loss;
        }
        result.epoch_losses.push_back(epoch_loss);
        if (epoch_loss < result.best_loss) {
            result.best_loss = epoch_loss;
            result.best_lambda = problem.lambda;
            result.best_epoch = epoch;
        }
    }
    problem.lambda = result.best_lambda;
    return result;
}

std::vector<GaltResult> optimize_galt_layers(std::span<GaltProblem> layers, std::size_t epochs,
                                             const AdamWConfig& cfg) {
    std::vector<GaltResult> out;
    out.reserve(layers.size());
    for (GaltProblem& layer : layers) out.push_back(optimize_galt(layer, epochs, cfg));
    return out;
}

LayerNormAffine fuse_lambda(const LayerNormAffine& affine, std::span<const double> lambda) {
    if (affine.alpha.size() != lambda.size() || affine.beta.size() != lambda.size()) {
        throw InputError("fuse_lambda: affine and lambda lengths differ");
    }
    LayerNormAffine fused{affine.alpha, affine.beta};
    for (std::size_t c = 0; c < lambda.size(); ++c) {
        fused.alpha[c] *= lambda[c];
        fused.beta[c] *= lambda[c];
    }
    return fused;
}

std::vector<double> apply_affine(std::span<const double> x, const LayerNormAffine& affine) {
    std::vector<double> y(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) y[c] = x[c] * (1.0 + affine.alpha[c]) + affine.beta[c];
    return y;
}

std::vector<double> apply_fused_affine(std::span<const double> x, std::span<const double> lambda,
                                       const LayerNormAffine& fused) {
    std::vector<double> y(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) y[c] = x[c] * (lambda[c] + fused.alpha[c]) + fused.beta[c];
    return y;
}

}  // namespace lowfp
