#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace lowfp::cli {

/// What a command hands back for its report record.
struct Outcome {
    json metrics = json::object();
    json outputs = json::array();
    bool ok = true;  // false turns into a nonzero exit after the report is written
};

struct Command {
    CLI::App* app = nullptr;
    std::unique_ptr<RunConfig> config;
    std::function<Outcome(const json&)> run;
};

std::vector<Command> register_commands(CLI::App& app);

}  // namespace lowfp::cli
