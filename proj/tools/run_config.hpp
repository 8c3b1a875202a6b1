#pragma once

#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace lowfp::cli {

using nlohmann::json;

/// One configurable key: exposed as `--key-with-dashes` on the command line
/// and as `key` in a JSON config file.
struct Option {
    std::string key;
    json fallback;
    std::string help;
};

/// Resolves a command's configuration. Precedence, lowest first: built-in
/// defaults, `--config` file, LOWFP_SEED (for commands with a `seed` key),
/// explicit command-line flags. Unknown or mistyped keys are collected and
/// reported together.
class RunConfig {
public:
    RunConfig(CLI::App& cmd, std::vector<Option> options);

    json resolve() const;

private:
    std::vector<Option> options_;
    std::vector<std::string> raw_;
    std::vector<CLI::Option*> flags_;
    std::string config_path_;
};

}  // namespace lowfp::cli
