#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

#include "commands.hpp"
#include "lowfp/error.hpp"
#include "lowfp/tensorio.hpp"

using lowfp::cli::json;

namespace {

void append_record(const std::string& path, const json& record) {
    std::string text;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    text += record.dump() + "\n";
    lowfp::write_text_atomic(path, text);
}

int fail(const lowfp::Error& e) {
    json err = {{"kind", e.kind()}, {"message", e.what()}};
    if (const auto* ce = dynamic_cast<const lowfp::ConfigError*>(&e)) err["keys"] = ce->keys();
    if (const auto* fe = dynamic_cast<const lowfp::FormatError*>(&e)) err["offset"] = fe->offset();
    std::cerr << json{{"error", err}}.dump() << "\n";
    return dynamic_cast<const lowfp::ConfigError*>(&e) ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lowfp: low-bit floating-point quantization toolkit"};
    app.require_subcommand(1);
    auto commands = lowfp::cli::register_commands(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    for (auto& cmd : commands) {
        if (!cmd.app->parsed()) continue;
        try {
            const json cfg = cmd.config->resolve();
            const auto start = std::chrono::steady_clock::now();
            const lowfp::cli::Outcome outcome = cmd.run(cfg);
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            const json record = {{"command", cmd.app->get_name()},
                                 {"config", cfg},
                                 {"metrics", outcome.metrics},
                                 {"outputs", outcome.outputs},
                                 {"ok", outcome.ok},
                                 {"wall_time_s", elapsed.count()}};
            const std::string report = cfg.at("report").get<std::string>();
            if (report.empty()) {
                std::cout << record.dump() << "\n";
            } else {
                append_record(report, record);
            }
            return outcome.ok ? 0 : 3;
        } catch (const lowfp::Error& e) {
            return fail(e);
        } catch (const std::exception& e) {
            std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
            return 1;
        }
    }
    return 1;
}
