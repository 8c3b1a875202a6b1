#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lowfp/fpcodec.hpp"
#include "lowfp/hadamard.hpp"
#include "lowfp/quant.hpp"
#include "lowfp/tensor.hpp"

namespace lowfp {

/// Calibration activations of one linear layer over K generation steps.
/// Step i holds every sample's step-i activation stacked row-wise, so it is
/// [samples * T_i x C].
struct CalibrationSet {
    std::vector<TensorD> per_step;
    std::vector<std::size_t> step_token_counts;
    std::size_t channels = 0;
    std::size_t samples = 0;

    std::size_t steps() const noexcept { return per_step.size(); }
    /// Checks shapes and that token counts strictly increase.
    void validate() const;
};

/// Coarse-to-fine token counts used as the default ten-step schedule.
std::vector<std::size_t> default_schedule();

/// samples[s][i] is sample s's [T_i x C] activation at step i.
CalibrationSet build_calibration(const std::vector<std::vector<TensorD>>& samples,
                                 std::span<const std::size_t> schedule);

/// Outlier channels planted independently at every step.
struct OutlierSpec {
    std::size_t channels_per_step = 4;
    double magnitude_lo = 25.0;
    double magnitude_hi = 50.0;
};

struct SyntheticCalibration {
    CalibrationSet calib;
    // Planted channel indices per step, ascending.
    std::vector<std::vector<std::size_t>> outlier_channels;
};

/// N(0,1) activations with, at every step, a fresh set of outlier channels
/// carrying a fixed-sign offset of random magnitude.
SyntheticCalibration synth_calibration(std::uint64_t seed, std::size_t samples,
                                       std::span<const std::size_t> schedule, std::size_t channels,
                                       const OutlierSpec& outliers);

/// One layer's smoothing-factor optimization problem.
struct GaltProblem {
    CalibrationSet calib;
    TensorD weight;  // [O x C]
    HadamardConfig hadamard;
    std::vector<double> lambda;
    FpFormat format = formats::e2m1();
    Granularity granularity = Granularity::group(128);

    /// lambda = 1, rotation block size taken from a per-group granularity (128 otherwise).
    static GaltProblem make(CalibrationSet calib, TensorD weight, const FpFormat& format = formats::e2m1(),
                            const Granularity& granularity = Granularity::group(128));

    void validate() const;
};

/// Per-step quantized-output MSE:
///   mean((X W^T - Q(X diag(lambda) H_B) Q(W diag(1/lambda) H_B)^T)^2).
double galt_loss(const GaltProblem& problem, std::size_t step);

/// STE gradient of galt_loss with respect to lambda: the forward pass uses
/// the quantized factors, the backward pass treats both quantizers as identity.
std::vector<double> galt_grad(const GaltProblem& problem, std::size_t step);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

LossGrad galt_loss_grad(const GaltProblem& problem, std::size_t step);

/// Sum of galt_loss over all steps at the given lambda.
double galt_total_loss(const GaltProblem& problem, std::span<const double> lambda);

struct AdamWConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double lambda_floor = 1e-4;
};

struct OptimizerState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step_count = 0;
    AdamWConfig config;

    explicit OptimizerState(std::size_t n, AdamWConfig cfg = {})
        : first_moment(n, 0.0), second_moment(n, 0.0), config(cfg) {}
};

/// One decoupled-weight-decay Adam update followed by clamping lambda to
/// config.lambda_floor.
void adamw_step(OptimizerState& state, std::vector<double>& lambda, std::span<const double> grad);

struct GaltResult {
    std::vector<double> best_lambda;
    double initial_loss = 0.0;  // summed step loss at lambda = 1
    double best_loss = 0.0;     // best epoch loss, initial_loss if no epoch improved
    std::size_t best_epoch = 0; // 0 means the initial lambda
    // epoch_losses[e] = sum of the per-step losses seen while running epoch e+1.
    std::vector<double> epoch_losses;
};

/// Runs `epochs` passes over the steps in ascending order with one AdamW
/// update per step, keeping the lambda snapshot that ends the epoch with
/// the lowest accumulated loss.
GaltResult optimize_galt(GaltProblem& problem, std::size_t epochs = 50, const AdamWConfig& cfg = {});

/// Independent per-layer optimization, each with fresh optimizer state.
std::vector<GaltResult> optimize_galt_layers(std::span<GaltProblem> layers, std::size_t epochs = 50,
                                             const AdamWConfig& cfg = {});

/// Adaptive LayerNorm affine: y = x * (1 + alpha) + beta.
struct LayerNormAffine {
    std::vector<double> alpha;
    std::vector<double> beta;
};

/// Folded affine for y = x * (lambda + alpha_hat) + beta_hat, with
/// alpha_hat = alpha * lambda and beta_hat = beta * lambda.
LayerNormAffine fuse_lambda(const LayerNormAffine& affine, std::span<const double> lambda);

/// x * (1 + alpha) + beta, elementwise over a row.
std::vector<double> apply_affine(std::span<const double> x, const LayerNormAffine& affine);
/// x * (lambda + alpha_hat) + beta_hat, elementwise over a row.
std::vector<double> apply_fused_affine(std::span<const double> x, std::span<const double> lambda,
                                       const LayerNormAffine& fused);

/// W diag(1/lambda) H_B, the weight operand ready for one-time quantization.
TensorD fuse_lambda_weight(const TensorD& weight, std::span<const double> lambda, const HadamardConfig& cfg);

/// X diag(lambda).
TensorD scale_channels(const TensorD& x, std::span<const double> lambda);

}  // namespace lowfp
