#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lowfp/error.hpp"
#include "lowfp/fpcodec.hpp"
#include "lowfp/galt.hpp"
#include "lowfp/hadamard.hpp"
#include "lowfp/hwemu.hpp"
#include "lowfp/quant.hpp"
#include "lowfp/synth.hpp"
#include "lowfp/tensorio.hpp"

namespace lowfp::cli {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> parse_schedule(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(item, &used);
            if (used != item.size() || v == 0) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("schedule entries must be positive integers, got '" + item + "'", {"schedule"});
        }
    }
    if (out.empty()) throw ConfigError("schedule is empty", {"schedule"});
    return out;
}

std::string require_path(const json& cfg, const char* key) {
    std::string p = cfg.at(key).get<std::string>();
    if (p.empty()) throw ConfigError(std::string("missing required key '") + key + "'", {key});
    return p;
}

Granularity granularity_from(const json& cfg) {
    Granularity g;
    g.kind = parse_granularity_kind(cfg.at("granularity").get<std::string>());
    g.group_size = cfg.at("group").get<std::size_t>();
    if (cfg.contains("pad_partial")) g.pad_partial_group = cfg.at("pad_partial").get<bool>();
    if (g.group_size == 0) throw ConfigError("group must be positive", {"group"});
    return g;
}

std::string layer_name(const json& cfg, const std::string& input) {
    const std::string layer = cfg.at("layer").get<std::string>();
    return layer.empty() ? std::filesystem::path(input).stem().string() : layer;
}

void emit(Outcome& out, const std::string& path, const TensorFile& t) {
    write_tensor(path, t);
    out.outputs.push_back({{"path", path}, {"dtype", to_string(t.dtype)}, {"shape", t.shape()}});
}

std::string suffixed(const std::string& prefix, const std::string& suffix) { return prefix + suffix; }

double max_abs(const TensorD& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::fabs(v));
    return m;
}

Outcome run_synth(const json& cfg) {
    Outcome out;
    const std::string kind = cfg.at("kind").get<std::string>();
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    const auto rows = cfg.at("rows").get<std::size_t>();
    const auto cols = cfg.at("cols").get<std::size_t>();
    const std::string path = require_path(cfg, "out");
    if (kind == "gelu") {
        const TensorD x = gelu_activations(seed, rows, cols, cfg.at("mean").get<double>(), cfg.at("stddev").get<double>());
        std::size_t positive = 0;
        for (double v : x.values()) positive += v > 0.0;
        out.metrics["positive_fraction"] = static_cast<double>(positive) / static_cast<double>(x.size());
        emit(out, path, TensorFile::from(x));
    } else if (kind == "gaussian") {
        emit(out, path,
             TensorFile::from(gaussian_weights(seed, rows, cols, cfg.at("sigma_lo").get<double>(),
                                               cfg.at("sigma_hi").get<double>())));
    } else if (kind == "calibration") {
        const auto schedule = parse_schedule(cfg.at("schedule").get<std::string>());
        const OutlierSpec spec{cfg.at("outliers_per_step").get<std::size_t>(), cfg.at("outlier_lo").get<double>(),
                               cfg.at("outlier_hi").get<double>()};
        const SyntheticCalibration synth =
            synth_calibration(seed, cfg.at("samples").get<std::size_t>(), schedule, cols, spec);
        for (std::size_t i = 0; i < synth.calib.steps(); ++i) {
            emit(out, suffixed(path, ".step" + std::to_string(i) + ".fpqt"), TensorFile::from(synth.calib.per_step[i]));
        }
        out.metrics["outlier_channels"] = synth.outlier_channels;
    } else {
        throw ConfigError("synth kind must be gelu, gaussian or calibration", {"kind"});
    }
    return out;
}

Outcome run_quantize(const json& cfg) {
    Outcome out;
    const std::string input = require_path(cfg, "input");
    const TensorD x = read_tensor(input).as_f64();
    const Granularity g = granularity_from(cfg);
    const std::string method = cfg.at("method").get<std::string>();
    TensorD deq;
    TensorD scales;
    std::string format_name;
    if (method == "fp") {
        const FpFormat& f = fp_format(cfg.at("format").get<std::string>());
        const QuantizedTensor q = quantize(x, f, g);
        deq = dequantize(q);
        scales = q.scales;
        format_name = f.name();
        if (const auto p = cfg.at("out_codes").get<std::string>(); !p.empty()) {
            emit(out, p, TensorFile::from_codes(q.codes, f.total_bits() <= 4 ? 4 : 8));
        }
    } else if (method == "int") {
        const int bits = cfg.at("bits").get<int>();
        const IntQuantizedTensor q = rtn_int_quantize(x, bits, g);
        deq = dequantize(q);
        scales = q.scales;
        format_name = "INT" + std::to_string(bits);
        if (const auto p = cfg.at("out_codes").get<std::string>(); !p.empty()) {
            std::vector<std::uint8_t> raw(q.codes.size());
            std::transform(q.codes.values().begin(), q.codes.values().end(), raw.begin(),
                           [](std::int8_t c) { return static_cast<std::uint8_t>(c); });
            emit(out, p, TensorFile::from_codes(Tensor<std::uint8_t>(q.codes.shape(), std::move(raw)), 8));
        }
    } else {
        throw ConfigError("method must be fp or int", {"method"});
    }
    if (const auto p = cfg.at("out_scales").get<std::string>(); !p.empty()) emit(out, p, TensorFile::from(scales));
    if (const auto p = cfg.at("out_dequant").get<std::string>(); !p.empty()) emit(out, p, TensorFile::from(deq));
    out.metrics = {{"layer", layer_name(cfg, input)},
                   {"format", format_name},
                   {"granularity", to_string(g.kind)},
                   {"mse", quant_mse(x, deq)}};
    return out;
}

Outcome run_dfq(const json& cfg) {
    Outcome out;
    const std::string input = require_path(cfg, "input");
    const TensorD x = read_tensor(input).as_f64();
    const Granularity g = granularity_from(cfg);
    const std::string method = cfg.at("method").get<std::string>();
    const FpFormat& neg = fp_format(cfg.at("neg_format").get<std::string>());
    const FpFormat& pos = fp_format(cfg.at("pos_format").get<std::string>());
    DfqResult r = [&] {
        if (method == "dfq") return dfq_quantize(x, neg, pos, g);
        if (method == "afpq") return afpq_quantize(x, pos, g);
        if (method == "lut") return hw::dfq_lut_quantize(x, g);
        throw ConfigError("method must be dfq, afpq or lut", {"method"});
    }();
    const TensorD deq = dequantize(r);
    const double mse = quant_mse(x, deq);
    const double afpq = quant_mse(x, dequantize(afpq_quantize(x, pos, g)));
    if (const auto prefix = cfg.at("out_prefix").get<std::string>(); !prefix.empty()) {
        emit(out, prefix + ".neg_codes.fpqt", TensorFile::from_codes(r.neg_codes, 4));
        emit(out, prefix + ".pos_codes.fpqt", TensorFile::from_codes(r.pos_codes, 4));
        emit(out, prefix + ".s_neg.fpqt", TensorFile::from(r.s_neg));
        emit(out, prefix + ".s_pos.fpqt", TensorFile::from(r.s_pos));
        emit(out, prefix + ".dequant.fpqt", TensorFile::from(deq));
    }
    out.metrics = {{"layer", layer_name(cfg, input)},
                   {"neg_format", r.neg_format.name()},
                   {"pos_format", r.pos_format.name()},
                   {"granularity", to_string(g.kind)},
                   {"mse", mse},
                   {"afpq_mse", afpq},
                   {"afpq_over_mse", mse > 0.0 ? afpq / mse : 1.0}};
    return out;
}

Outcome run_search(const json& cfg) {
    Outcome out;
    const auto paths = split_list(cfg.at("inputs").get<std::string>());
    if (paths.empty()) throw ConfigError("inputs must list at least one tensor file", {"inputs"});
    std::vector<TensorD> calib;
    for (const auto& p : paths) calib.push_back(read_tensor(p).as_f64());
    const Granularity g = granularity_from(cfg);
    const DfqFormatChoice choice = dfq_search_format(calib, g);
    json pairs = json::array();
    const auto cands = fp4_search_candidates();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        for (std::size_t j = 0; j < cands.size(); ++j) {
            pairs.push_back({{"neg", cands[i]->name()}, {"pos", cands[j]->name()},
                             {"mse", choice.pair_mse[i * cands.size() + j]}});
        }
    }
    out.metrics = {{"neg_format", choice.neg_format->name()},
                   {"pos_format", choice.pos_format->name()},
                   {"mse", choice.mse},
                   {"granularity", to_string(g.kind)},
                   {"tensors", calib.size()},
                   {"pairs", pairs}};
    return out;
}

Outcome run_rotate(const json& cfg) {
    Outcome out;
    const std::string input = require_path(cfg, "input");
    const TensorFile in = read_tensor(input);
    HadamardConfig hc{in.shape().empty() ? 0 : in.shape().back(), cfg.at("group").get<std::size_t>(),
                      cfg.at("normalized").get<bool>()};
    const std::string path = require_path(cfg, "out");
    double before = 0.0, after = 0.0;
    if (in.dtype == DType::f32) {
        const TensorF& x = std::get<TensorF>(in.data);
        const TensorF y = apply_ght(x, hc);
        before = max_abs(tensor_cast<double>(x));
        after = max_abs(tensor_cast<double>(y));
        emit(out, path, TensorFile::from(y));
    } else {
        const TensorD x = in.as_f64();
        const TensorD y = apply_ght(x, hc);
        before = max_abs(x);
        after = max_abs(y);
        emit(out, path, TensorFile::from(y));
    }
    const RotationFlops fl = ght_flops(hc.dim, hc.group_size);
    out.metrics = {{"max_abs_before", before},
                   {"max_abs_after", after},
                   {"ht_flops_per_token", fl.ht_flops},
                   {"ght_flops_per_token", fl.ght_flops},
                   {"flop_ratio", fl.ratio}};
    return out;
}

Outcome run_galt(const json& cfg) {
    Outcome out;
    const auto paths = split_list(cfg.at("calib").get<std::string>());
    if (paths.empty()) throw ConfigError("calib must list one tensor file per step", {"calib"});
    const auto samples = cfg.at("samples").get<std::size_t>();
    if (samples == 0) throw ConfigError("samples must be positive", {"samples"});
    CalibrationSet calib;
    calib.samples = samples;
    for (const auto& p : paths) {
        TensorD x = read_tensor(p).as_f64();
        if (x.rows() % samples != 0) {
            throw InputError(p + ": row count " + std::to_string(x.rows()) + " is not a multiple of samples");
        }
        calib.step_token_counts.push_back(x.rows() / samples);
        calib.channels = x.cols();
        calib.per_step.push_back(std::move(x));
    }
    const TensorD w = read_tensor(require_path(cfg, "weight")).as_f64();
    const std::size_t group = cfg.at("group").get<std::size_t>();
    GaltProblem problem = GaltProblem::make(std::move(calib), w, fp_format(cfg.at("format").get<std::string>()),
                                            Granularity::group(group));
    AdamWConfig opt;
    opt.lr = cfg.at("lr").get<double>();
    const GaltResult res = optimize_galt(problem, cfg.at("epochs").get<std::size_t>(), opt);
    const double final_loss = galt_total_loss(problem, res.best_lambda);

    const std::string layer = cfg.at("layer").get<std::string>();
    emit(out, require_path(cfg, "out_lambda"),
         TensorFile::from(TensorD(Shape{res.best_lambda.size()}, res.best_lambda)));
    if (const auto p = cfg.at("history").get<std::string>(); !p.empty()) {
        std::string lines = json{{"layer", layer}, {"epoch", 0}, {"loss", res.initial_loss}}.dump() + "\n";
        for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
            lines += json{{"layer", layer}, {"epoch", e + 1}, {"loss", res.epoch_losses[e]}}.dump() + "\n";
        }
        write_text_atomic(p, lines);
        out.outputs.push_back({{"path", p}, {"kind", "loss_history"}});
    }
    out.metrics = {{"layer", layer},
                   {"initial_loss", res.initial_loss},
                   {"best_loss", res.best_loss},
                   {"best_epoch", res.best_epoch},
                   {"final_loss", final_loss},
                   {"reduction", final_loss > 0.0 ? res.initial_loss / final_loss : 1.0}};
    return out;
}

Outcome run_emu_check(const json& cfg) {
    Outcome out;
    const hw::SelfCheckReport rep =
        hw::self_check(cfg.at("samples").get<std::size_t>(), cfg.at("seed").get<std::uint64_t>());
    out.ok = rep.passed();
    out.metrics = {{"mul_lut_exact", std::to_string(rep.mul_exact) + "/256"},
                   {"dfq_mul_exact", std::to_string(rep.dfq_mul_exact) + "/256"},
                   {"quantizer_parity", rep.quant_mismatches == 0 && rep.dfq_mismatches == 0 ? "pass" : "fail"},
                   {"quantizer_samples", rep.quant_samples},
                   {"quantizer_mismatches", rep.quant_mismatches},
                   {"dfq_samples", rep.dfq_samples},
                   {"dfq_mismatches", rep.dfq_mismatches},
                   {"passed", rep.passed()}};
    return out;
}

Outcome run_report(const json& cfg) {
    Outcome out;
    const auto paths = split_list(cfg.at("inputs").get<std::string>());
    if (paths.empty()) throw ConfigError("inputs must list at least one report file", {"inputs"});
    std::map<std::string, std::size_t> per_command;
    json records = json::array();
    for (const auto& p : paths) {
        std::ifstream in(p);
        if (!in) throw InputError("cannot open report " + p);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::parse_error&) {
                throw InputError(p + ":" + std::to_string(lineno) + ": not a JSON record");
            }
            const std::string cmd = rec.value("command", "unknown");
            ++per_command[cmd];
            records.push_back({{"command", cmd}, {"metrics", rec.value("metrics", json::object())}});
        }
    }
    out.metrics = {{"records", records.size()}, {"per_command", per_command}, {"entries", records}};
    if (const auto p = cfg.at("out").get<std::string>(); !p.empty()) {
        write_text_atomic(p, out.metrics.dump(2) + "\n");
        out.outputs.push_back({{"path", p}, {"kind", "summary"}});
    }
    return out;
}

Command make(CLI::App& app, const char* name, const char* help, std::vector<Option> options,
             std::function<Outcome(const json&)> run) {
    Command c;
    c.app = app.add_subcommand(name, help);
    options.push_back({"report", "", "append the JSON report record to this file instead of stdout"});
    c.config = std::make_unique<RunConfig>(*c.app, std::move(options));
    c.run = std::move(run);
    return c;
}

}  // namespace

std::vector<Command> register_commands(CLI::App& app) {
    std::vector<Command> cmds;
    cmds.push_back(make(app, "synth", "Generate synthetic tensors (gelu, gaussian, calibration)",
                        {{"kind", "gelu", "gelu | gaussian | calibration"},
                         {"rows", 64u, "rows (gelu, gaussian)"},
                         {"cols", 1920u, "columns / channels"},
                         {"seed", 0u, "random seed"},
                         {"mean", -1.98, "gelu pre-activation mean"},
                         {"stddev", 1.0, "gelu pre-activation standard deviation"},
                         {"sigma_lo", 0.5, "gaussian per-row sigma lower bound"},
                         {"sigma_hi", 2.0, "gaussian per-row sigma upper bound"},
                         {"samples", 4u, "calibration samples per step"},
                         {"schedule", "1,4,9,16,25,36,64,100,169,256", "calibration token counts per step"},
                         {"outliers_per_step", 4u, "planted outlier channels per step"},
                         {"outlier_lo", 25.0, "outlier magnitude lower bound"},
                         {"outlier_hi", 50.0, "outlier magnitude upper bound"},
                         {"out", "", "output file (calibration: prefix for <out>.step<i>.fpqt)"}},
                        run_synth));
    cmds.push_back(make(app, "quantize", "Scaled FP (or RTN integer) quantization of one tensor",
                        {{"input", "", "input tensor file"},
                         {"format", "E2M1", "FP format name"},
                         {"method", "fp", "fp | int"},
                         {"bits", 4u, "integer bit width for method=int"},
                         {"granularity", "per_group", "per_tensor | per_channel | per_token | per_group"},
                         {"group", 128u, "group size for per_group"},
                         {"pad_partial", false, "allow a short final group"},
                         {"out_codes", "", "codes output file"},
                         {"out_scales", "", "scales output file"},
                         {"out_dequant", "", "dequantized output file"},
                         {"layer", "", "layer name for the report (default: input stem)"}},
                        run_quantize));
    cmds.push_back(make(app, "dfq", "Dual-format (or AFPQ / LUT) quantization of one activation tensor",
                        {{"input", "", "input tensor file"},
                         {"neg_format", "E1M2", "negative-branch format"},
                         {"pos_format", "E2M1", "positive-branch format (and AFPQ format)"},
                         {"method", "dfq", "dfq | afpq | lut"},
                         {"granularity", "per_token", "per_tensor | per_channel | per_token | per_group"},
                         {"group", 128u, "group size for per_group"},
                         {"pad_partial", false, "allow a short final group"},
                         {"out_prefix", "", "prefix for code, scale and dequant outputs"},
                         {"layer", "", "layer name for the report (default: input stem)"}},
                        run_dfq));
    cmds.push_back(make(app, "search", "Search the dual-format (negative, positive) FP4 pair",
                        {{"inputs", "", "comma-separated calibration tensor files"},
                         {"granularity", "per_token", "per_tensor | per_channel | per_token | per_group"},
                         {"group", 128u, "group size for per_group"}},
                        run_search));
    cmds.push_back(make(app, "rotate", "Group-wise Hadamard rotation of an activation or weight",
                        {{"input", "", "input tensor file"},
                         {"group", 128u, "Hadamard block size"},
                         {"normalized", true, "orthonormal blocks"},
                         {"out", "", "output tensor file"}},
                        run_rotate));
    cmds.push_back(make(app, "galt", "Optimize the per-channel smoothing vector of one layer",
                        {{"calib", "", "comma-separated per-step calibration files, coarse to fine"},
                         {"samples", 1u, "samples concatenated in each step file"},
                         {"weight", "", "[O x C] weight file"},
                         {"format", "E2M1", "quantization format"},
                         {"group", 128u, "quantization group and Hadamard block size"},
                         {"epochs", 50u, "optimization epochs"},
                         {"lr", 0.01, "AdamW learning rate"},
                         {"layer", "layer0", "layer name"},
                         {"out_lambda", "", "output file for the best smoothing vector"},
                         {"history", "", "JSONL loss history output"}},
                        run_galt));
    cmds.push_back(make(app, "emu-check", "Exhaustive LUT multiplier and quantizer parity checks",
                        {{"samples", 1000000u, "random elements per quantizer parity check"}, {"seed", 0u, "random seed"}},
                        run_emu_check));
    cmds.push_back(make(app, "report", "Aggregate JSONL report records",
                        {{"inputs", "", "comma-separated JSONL report files"}, {"out", "", "summary output file"}},
                        run_report));
    return cmds;
}

}  // namespace lowfp::cli
