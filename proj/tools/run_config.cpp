#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "lowfp/error.hpp"

namespace lowfp::cli {

namespace {

std::string flag_name(const std::string& key) {
    std::string s = key;
    for (char& c : s) {
        if (c == '_') c = '-';
    }
    return "--" + s;
}

// Coerces `value` to the JSON type of `like`; false if impossible.
bool coerce(const json& like, const json& value, json& out) {
    if (like.is_boolean()) {
        if (!value.is_boolean()) return false;
        out = value;
    } else if (like.is_number_unsigned() || like.is_number_integer()) {
        if (value.is_number_unsigned()) {
            out = value;
        } else if (value.is_number_integer() && value.get<long long>() >= 0) {
            out = value.get<unsigned long long>();
        } else {
            return false;
        }
    } else if (like.is_number()) {
        if (!value.is_number()) return false;
        out = value.get<double>();
    } else if (like.is_string()) {
        if (!value.is_string()) return false;
        out = value;
    } else {
        out = value;
    }
    return true;
}

json parse_flag(const json& like, const std::string& raw, bool& ok) {
    ok = true;
    try {
        if (like.is_string()) return raw;
        if (like.is_boolean()) {
            if (raw == "true" || raw == "1") return true;
            if (raw == "false" || raw == "0") return false;
            ok = false;
            return nullptr;
        }
        std::size_t used = 0;
        if (like.is_number_unsigned() || like.is_number_integer()) {
            if (!raw.empty() && raw[0] == '-') {
                ok = false;
                return nullptr;
            }
            const unsigned long long v = std::stoull(raw, &used);
            ok = used == raw.size();
            return v;
        }
        const double v = std::stod(raw, &used);
        ok = used == raw.size();
        return v;
    } catch (...) {
        ok = false;
        return nullptr;
    }
}

}  // namespace

RunConfig::RunConfig(CLI::App& cmd, std::vector<Option> options) : options_(std::move(options)) {
    raw_.resize(options_.size());
    cmd.add_option("--config", config_path_, "JSON file with configuration keys");
    for (std::size_t i = 0; i < options_.size(); ++i) {
        const Option& o = options_[i];
        flags_.push_back(cmd.add_option(flag_name(o.key), raw_[i], o.help + " (default: " + o.fallback.dump() + ")"));
    }
}

json RunConfig::resolve() const {
    json cfg = json::object();
    for (const Option& o : options_) cfg[o.key] = o.fallback;

    std::vector<std::string> bad;
    if (!config_path_.empty()) {
        std::ifstream in(config_path_);
        if (!in) throw ConfigError("cannot open config file " + config_path_, {"config"});
        json file;
        try {
            file = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config file is not valid JSON: " + std::string(e.what()), {"config"});
        }
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object", {"config"});
        for (const auto& [key, value] : file.items()) {
            json coerced;
            if (!cfg.contains(key) || !coerce(cfg[key], value, coerced)) {
                bad.push_back(key);
                continue;
            }
            cfg[key] = coerced;
        }
    }
    if (cfg.contains("seed")) {
        if (const char* env = std::getenv("LOWFP_SEED")) {
            bool ok = false;
            const json v = parse_flag(cfg["seed"], env, ok);
            if (!ok) {
                bad.push_back("LOWFP_SEED");
            } else {
                cfg["seed"] = v;
            }
        }
    }
    for (std::size_t i = 0; i < options_.size(); ++i) {
        if (flags_[i]->count() == 0) continue;
        bool ok = false;
        const json v = parse_flag(options_[i].fallback, raw_[i], ok);
        if (!ok) {
            bad.push_back(options_[i].key);
            continue;
        }
        cfg[options_[i].key] = v;
    }
    if (!bad.empty()) {
        std::string msg = "invalid configuration keys:";
        for (const auto& k : bad) msg += " " + k;
        throw ConfigError(msg, bad);
    }
    return cfg;
}

}  // namespace lowfp::cli
