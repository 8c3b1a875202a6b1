// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "cli_runner.hpp"
#include "galt_oracle.hpp"
#include "lowfp/fpcodec.hpp"
#include "lowfp/galt.hpp"
#include "lowfp/hadamard.hpp"
#include "lowfp/hwemu.hpp"
#include "lowfp/quant.hpp"
#include "lowfp/synth.hpp"
#include "oracle.hpp"

using namespace lowfp;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

template <typename T>
Tensor<T> normal_tensor(std::uint64_t seed, std::size_t rows, std::size_t cols, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    Tensor<T> t(rows, cols);
    for (T& v : t.values()) v = static_cast<T>(n(rng));
    return t;
}

double rel_norm(const std::vector<double>& got, const std::vector<double>& ref) { return oracle::rel_diff(got, ref); }

// 1. Codec goldens and exhaustive roundtrip.
void codec(Verdict& v) {
    std::vector<double> e1m2;
    for (int i = -7; i <= 7; ++i) e1m2.push_back(0.5 * i);
    const std::vector<double> e2m1{-6, -4, -3, -2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3, 4, 6};
    const std::vector<double> e3m0{-16, -8, -4, -2, -1, -0.5, -0.25, 0, 0.25, 0.5, 1, 2, 4, 8, 16};
    v.require(formats::e1m2().grid_values() == e1m2, "E1M2 grid");
    v.require(formats::e2m1().grid_values() == e2m1, "E2M1 grid");
    v.require(formats::e3m0().grid_values() == e3m0, "E3M0 grid");
    std::size_t codes = 0, bad = 0;
    for (auto name : fp_format_names()) {
        const FpFormat& f = fp_format(name);
        for (unsigned c = 0; c < f.code_count(); ++c) {
            const double x = f.decode(FpCode{static_cast<std::uint8_t>(c)});
            if (std::isnan(x)) continue;
            ++codes;
            const std::uint8_t canonical = x == 0.0 ? 0 : static_cast<std::uint8_t>(c);
            bad += f.encode(x).bits != canonical || f.decode(f.encode(x)) != x;
        }
    }
    v.require(bad == 0, "roundtrip");
    v.detail << "3 grids x 15 values match; " << codes - bad << "/" << codes << " codes roundtrip over "
             << fp_format_names().size() << " formats";
}

// 2. INT4 vs FP4 per-channel weight error.
void fp4_vs_int4(Verdict& v) {
    double sum = 0;
    std::size_t fp_wins = 0;
    for (std::uint64_t i = 0; i < 30; ++i) {
        const TensorD w = gaussian_weights(1000 + i, 256, 1024);
        const double fp = quant_mse(w, dequantize(quantize(w, formats::e2m1(), Granularity::channel())));
        const double in = quant_mse(w, dequantize(rtn_int_quantize(w, 4, Granularity::channel())));
        sum += in / fp;
        fp_wins += fp < in;
    }
    const double mean = sum / 30;
    v.require(mean >= 1.3, "mean ratio >= 1.3");
    v.detail << "mean MSE(INT4)/MSE(E2M1) = " << mean << " over 30 matrices (FP4 lower on " << fp_wins << "/30)";
}

// 3. DFQ vs AFPQ on GeLU-shaped activations.
void dfq_vs_afpq(Verdict& v) {
    std::vector<TensorD> acts;
    for (std::uint64_t i = 0; i < 30; ++i) acts.push_back(gelu_activations(2000 + i, 64, 1920));
    const Granularity g = Granularity::token();
    const DfqFormatChoice choice = dfq_search_format(acts, g);
    double sum = 0, min_ratio = INFINITY;
    std::size_t wins = 0;
    for (const TensorD& x : acts) {
        const double dfq = quant_mse(x, dequantize(dfq_quantize(x, *choice.neg_format, *choice.pos_format, g)));
        const double afpq = quant_mse(x, dequantize(afpq_quantize(x, formats::e2m1(), g)));
        sum += afpq / dfq;
        min_ratio = std::min(min_ratio, afpq / dfq);
        wins += dfq < afpq;
    }
    const double mean = sum / 30;
    v.require(mean >= 1.2, "mean ratio >= 1.2");
    v.require(wins >= 28, "DFQ wins >= 28/30");
    v.require(choice.neg_format->name() == "E1M2" && choice.pos_format->name() == "E2M1", "search result");
    v.detail << "search -> (" << choice.neg_format->name() << ", " << choice.pos_format->name()
             << "); mean MSE(AFPQ)/MSE(DFQ) = " << mean << " (min " << min_ratio << "); DFQ wins " << wins << "/30";
}

// 4. Rotation invariance, FWHT vs dense, FLOP ratio.
void ght(Verdict& v) {
    const HadamardConfig cfg{1920, 128, true};
    const TensorF x = normal_tensor<float>(41, 64, 1920);
    const TensorF w = normal_tensor<float>(42, 512, 1920);
    const TensorF ref = matmul_nt(x, w);
    const TensorF got = matmul_nt(apply_ght(x, cfg), fuse_weight_rotation(w, cfg));
    const double inv = rel_norm(std::vector<double>(got.values().begin(), got.values().end()),
                                std::vector<double>(ref.values().begin(), ref.values().end()));
    v.require(inv < 1e-5, "invariance residual < 1e-5");

    double worst = 0;
    std::mt19937_64 rng(43);
    std::normal_distribution<double> nd;
    for (std::size_t n = 2; n <= 1024; n *= 2) {
        std::vector<double> a(n), dense(n, 0.0);
        for (double& e : a) e = nd(rng);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) dense[i] += oracle::hadamard_entry(i, j) * a[j];
        }
        fwht_inplace<double>(a);
        worst = std::max(worst, rel_norm(a, dense));
    }
    v.require(worst < 1e-6, "FWHT vs dense < 1e-6");
    const RotationFlops fl = ght_flops(1920, 128);
    v.require(fl.ratio == 15.0, "FLOP ratio == 15");
    v.detail << "fp32 invariance residual " << inv << "; worst FWHT/dense deviation " << worst
             << " for n=2..1024; FLOP ratio " << fl.ratio;
}

// 5. GALT.
void galt(Verdict& v) {
    const std::size_t channels = 256;
    SyntheticCalibration synth = synth_calibration(51, 4, default_schedule(), channels, OutlierSpec{});
    const TensorD weight = gaussian_weights(52, 256, channels);
    GaltProblem problem = GaltProblem::make(synth.calib, weight, formats::e2m1(), Granularity::group(128));

    // (a) lambda = 1 against the dense rotate-then-quantize reference
    double worst_a = 0;
    for (std::size_t s = 0; s < problem.calib.steps(); ++s) {
        const TensorD& x = problem.calib.per_step[s];
        const oracle::GaltRef ref(x.values(), weight.values(), x.rows(), weight.rows(), channels);
        const double expect = ref.loss(std::vector<double>(channels, 1.0));
        worst_a = std::max(worst_a, std::fabs(galt_loss(problem, s) - expect) / expect);
    }
    v.require(worst_a < 1e-10, "(a) lambda=1 loss");

    // (b) straight-through gradient vs central differences on 100 coordinates
    GaltProblem fd = GaltProblem::make(synth.calib, gaussian_weights(53, 64, channels));
    std::mt19937_64 rng(54);
    std::uniform_real_distribution<double> logu(std::log(0.5), std::log(2.0));
    for (double& l : fd.lambda) l = std::exp(logu(rng));
    const std::size_t step = 3;
    const TensorD& xs = fd.calib.per_step[step];
    const oracle::GaltRef ref(xs.values(), fd.weight.values(), xs.rows(), fd.weight.rows(), channels);
    const auto sur = ref.surrogate(fd.lambda);
    const auto grad = galt_grad(fd, step);
    double gmax = 0;
    for (double gv : grad) gmax = std::max(gmax, std::fabs(gv));
    std::vector<std::size_t> coords(channels);
    for (std::size_t i = 0; i < channels; ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    double worst_b = 0;
    for (std::size_t k = 0; k < 100; ++k) {
        const std::size_t c = coords[k];
        auto lp = fd.lambda, lm = fd.lambda;
        const double h = 1e-3 * fd.lambda[c];
        lp[c] += h;
        lm[c] -= h;
        const double num = (sur(lp) - sur(lm)) / (2 * h);
        const double denom = std::max({std::fabs(num), std::fabs(grad[c]), 1e-6 * gmax});
        worst_b = std::max(worst_b, std::fabs(grad[c] - num) / denom);
    }
    v.require(worst_b < 5e-2, "(b) finite differences");

    // (c) 50 epochs
    const GaltResult res = optimize_galt(problem, 50, AdamWConfig{});
    const double final_loss = galt_total_loss(problem, res.best_lambda);
    const double reduction = res.initial_loss / final_loss;
    v.require(reduction >= 1.5, "(c) reduction >= 1.5");

    // (d) LayerNorm affine fusion with the learned lambda, and the weight side
    std::normal_distribution<double> nd;
    LayerNormAffine aff{std::vector<double>(channels), std::vector<double>(channels)};
    for (std::size_t c = 0; c < channels; ++c) {
        aff.alpha[c] = 0.1 * nd(rng);
        aff.beta[c] = 0.1 * nd(rng);
    }
    const LayerNormAffine fused = fuse_lambda(aff, res.best_lambda);
    double worst_d = 0;
    const TensorD& x9 = problem.calib.per_step.back();
    TensorD normed(x9.rows(), channels), smoothed(x9.rows(), channels);
    for (std::size_t r = 0; r < x9.rows(); ++r) {
        const auto plain = apply_affine(x9.row(r), aff);
        const auto f = apply_fused_affine(x9.row(r), res.best_lambda, fused);
        for (std::size_t c = 0; c < channels; ++c) {
            const double expect = plain[c] * res.best_lambda[c];
            worst_d = std::max(worst_d, std::fabs(f[c] - expect) / std::max(std::fabs(expect), 1e-300));
            normed(r, c) = plain[c];
            smoothed(r, c) = f[c];
        }
    }
    const TensorD end_to_end =
        matmul_nt(apply_ght(smoothed, problem.hadamard), fuse_lambda_weight(weight, res.best_lambda, problem.hadamard));
    const double weight_side = rel_norm(end_to_end.values(), matmul_nt(normed, weight).values());
    v.require(worst_d < 1e-7, "(d) affine fusion");
    v.require(weight_side < 1e-7, "(d) weight-side fusion");

    v.detail << "(a) rel dev " << worst_a << "; (b) max rel dev " << worst_b << " on 100 coords; (c) loss "
             << res.initial_loss << " -> " << final_loss << " = " << reduction << "x (best epoch " << res.best_epoch
             << "); (d) affine " << worst_d << ", weight path " << weight_side;
}

// 6. Hardware emulation.
void hwemu(Verdict& v) {
    const hw::SelfCheckReport rep = hw::self_check(1000000, 61);
    v.require(rep.mul_exact == 256 && rep.dfq_mul_exact == 256, "product tables");
    v.require(rep.quant_mismatches == 0 && rep.dfq_mismatches == 0, "quantizer parity");
    double worst = 0, worst_dfq = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const TensorD x = normal_tensor<double>(6000 + i, 64, 1920, 2.0);
        const TensorD act = gelu_activations(6100 + i, 64, 1920);
        const TensorD w = gaussian_weights(6200 + i, 512, 1920);
        const auto qx = quantize(x, formats::e2m1(), Granularity::group(128));
        const auto qw = quantize(w, formats::e2m1(), Granularity::group(128));
        const auto wd = dequantize(qw).values();
        const auto ref = oracle::matmul_nt(dequantize(qx).values(), wd, 64, 512, 1920);
        worst = std::max(worst, rel_norm(hw::emu_gemm(qx, qw).values(), ref));
        const auto qa = hw::dfq_lut_quantize(act, Granularity::group(128));
        const auto ref_dfq = oracle::matmul_nt(dequantize(qa).values(), wd, 64, 512, 1920);
        worst_dfq = std::max(worst_dfq, rel_norm(hw::emu_gemm(qa, qw).values(), ref_dfq));
    }
    v.require(worst < 1e-6 && worst_dfq < 1e-6, "emu_gemm vs oracle");
    v.detail << "products " << rep.mul_exact << "/256 and " << rep.dfq_mul_exact << "/256 exact; LUT quantizer "
             << rep.quant_samples - rep.quant_mismatches << "/" << rep.quant_samples << ", DFQ LUT "
             << rep.dfq_samples - rep.dfq_mismatches << "/" << rep.dfq_samples
             << " bit-identical; 20 GEMMs max rel dev " << worst << " (FP4), " << worst_dfq << " (DFQ)";
}

// 7. CLI determinism.
void determinism(Verdict& v) {
    const auto a = cli_runner::scratch("acc_a"), b = cli_runner::scratch("acc_b");
    const auto ra = cli_runner::run_pipeline(a), rb = cli_runner::run_pipeline(b);
    v.require(ra.ok, "run 1: " + ra.failure);
    v.require(rb.ok, "run 2: " + rb.failure);
    if (ra.ok && rb.ok) {
        v.require(ra.tensors == rb.tensors, "tensor bytes");
        v.require(ra.records == rb.records, "report metrics");
        v.require(ra.history == rb.history, "loss history");
        v.detail << cli_runner::pipeline().size() << " command runs, " << ra.tensors.size()
                 << " tensor files byte-identical across two runs";
    }
    cli_runner::fs::remove_all(a);
    cli_runner::fs::remove_all(b);
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<void(Verdict&)> run;
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {1, "codec golden and roundtrip", 1, codec},
        {2, "FP4 vs INT4 weight error", 10, fp4_vs_int4},
        {3, "DFQ vs AFPQ activation error", 30, dfq_vs_afpq},
        {4, "GHT invariance", 5, ght},
        {5, "GALT", 120, galt},
        {6, "hardware emulation exactness", 60, hwemu},
        {7, "CLI determinism", 30, determinism},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        Verdict v;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(v);
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs >= c.limit_s) v.require(false, "runtime");
        failures += !v.pass;
        std::printf("criterion %d %s: %s | %s | %.2f s (limit %.0f s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name,
                    v.detail.str().c_str(), secs, c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d/7 criteria passed\n", 7 - failures);
    return failures == 0 ? 0 : 1;
}
