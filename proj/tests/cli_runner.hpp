#pragma once
// Runs the lowfp executable (path injected by CMake as LOWFP_CLI) inside a
// scratch directory and compares what two identical runs leave behind.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "json.hpp"

namespace cli_runner {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Result {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs `lowfp <args>` with `dir` as working directory.
inline Result run(const fs::path& dir, const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + dir.string() + "' && " + env + (env.empty() ? "" : " ") + "'" LOWFP_CLI "' " +
                            args + " > .stdout 2> .stderr";
    const int status = std::system(cmd.c_str());
    Result r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / ".stdout");
    r.err = slurp(dir / ".stderr");
    fs::remove(dir / ".stdout");
    fs::remove(dir / ".stderr");
    return r;
}

inline fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lowfp_cli_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// Every .fpqt file under `dir` keyed by relative path.
inline std::map<std::string, std::string> tensor_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".fpqt") {
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
        }
    }
    return out;
}

/// Report record with the timing field removed.
inline json stable_record(const std::string& line) {
    json j = json::parse(line);
    j.erase("wall_time_s");
    return j;
}

/// One command of the determinism suite.
struct Step {
    std::string name;
    std::string args;
};

/// The pipeline covering every command. Inputs come from earlier steps.
inline std::vector<Step> pipeline() {
    return {
        {"synth-gelu", "synth --kind gelu --rows 32 --cols 512 --seed 11 --out act.fpqt"},
        {"synth-gaussian", "synth --kind gaussian --rows 48 --cols 512 --seed 12 --out w.fpqt"},
        {"synth-calibration",
         "synth --kind calibration --cols 256 --samples 2 --schedule 1,4,9,16 --seed 13 --out calib"},
        {"synth-weight", "synth --kind gaussian --rows 32 --cols 256 --seed 14 --out gw.fpqt"},
        {"quantize-fp",
         "quantize --input w.fpqt --format E2M1 --granularity per_group --group 128 --out-codes wq.codes.fpqt "
         "--out-scales wq.scales.fpqt --out-dequant wq.deq.fpqt"},
        {"quantize-int",
         "quantize --input w.fpqt --method int --bits 4 --granularity per_channel --out-codes wi.codes.fpqt "
         "--out-scales wi.scales.fpqt --out-dequant wi.deq.fpqt"},
        {"dfq", "dfq --input act.fpqt --out-prefix act_dfq"},
        {"dfq-lut", "dfq --input act.fpqt --method lut --out-prefix act_lut"},
        {"search", "search --inputs act.fpqt,act_dfq.dequant.fpqt"},
        {"rotate", "rotate --input act.fpqt --out act_rot.fpqt"},
        {"galt",
         "galt --calib calib.step0.fpqt,calib.step1.fpqt,calib.step2.fpqt,calib.step3.fpqt --samples 2 "
         "--weight gw.fpqt --epochs 5 --out-lambda lambda.fpqt --history history.jsonl"},
        {"emu-check", "emu-check --samples 20000 --seed 3"},
        {"report", "report --inputs runs.jsonl --out summary.json"},
    };
}

struct PipelineRun {
    bool ok = true;
    std::string failure;
    std::map<std::string, std::string> tensors;
    std::vector<json> records;
    std::string history;
};

/// Runs the pipeline in `dir`, appending every record to runs.jsonl except
/// the final `report` step, whose record is captured from stdout.
inline PipelineRun run_pipeline(const fs::path& dir) {
    PipelineRun out;
    for (const Step& s : pipeline()) {
        const bool is_report = s.name == "report";
        const Result r = run(dir, s.args + (is_report ? "" : " --report runs.jsonl"));
        if (r.exit_code != 0) {
            out.ok = false;
            out.failure = s.name + " exited " + std::to_string(r.exit_code) + ": " + r.err;
            return out;
        }
        if (is_report) out.records.push_back(stable_record(r.out));
    }
    std::ifstream in(dir / "runs.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        json rec = stable_record(line);
        out.records.push_back(rec);
    }
    out.tensors = tensor_files(dir);
    out.history = slurp(dir / "history.jsonl");
    return out;
}

}  // namespace cli_runner
