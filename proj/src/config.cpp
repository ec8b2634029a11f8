#include "e2p/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "e2p/errors.hpp"

namespace e2p {

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "task", "seed", "out_dir", "force",
        // data locations
        "data.train", "data.dev", "data.test", "data.pretrain", "data.oracle", "data.items",
        // synthetic population
        "synth.users", "synth.records_per_user", "synth.clusters", "synth.sigma", "synth.dim",
        "synth.symbols", "synth.peak_mass", "synth.symbols_per_record", "synth.query",
        "synth.flavor", "synth.items_per_cluster", "synth.codebook_size", "synth.hint_fraction",
        // model architecture
        "lm.vocab_size", "lm.hidden_dim", "lm.n_layers", "lm.n_heads", "lm.max_seq_len",
        "lm.layer_norm_eps", "lm.seed",
        // training
        "train.lr", "train.batch", "train.epochs", "train.alpha", "train.beta1", "train.beta2",
        "train.eps", "train.weight_decay", "train.objective", "train.proj_dim",
        // evaluation
        "eval.baselines", "eval.k", "eval.temperature",
        // checkpoints
        "ckpt.lm", "ckpt.phi", "ckpt.codebook",
        // structure export
        "export.neighbors",
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void parse_into(const std::string& path, Config& cfg, bool allow_include) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.rfind("include ", 0) == 0) {
            if (!allow_include)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": nested include (only one level is allowed)");
            const std::string rel = trim(line.substr(8));
            const auto base = std::filesystem::path(path).parent_path();
            parse_into((base / rel).string(), cfg, false);
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

} // namespace

Config Config::from_file(const std::string& path) {
    Config cfg;
    parse_into(path, cfg, true);
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("unknown config key \"" + key + "\"");
    values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw ConfigError("config key \"" + key + "\": \"" + it->second + "\" is not a number");
    }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (...) {
        throw ConfigError("config key \"" + key + "\": \"" + it->second + "\" is not an integer");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw ConfigError("config key \"" + key + "\": \"" + it->second + "\" is not an integer");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key \"" + key + "\": expected true/false");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string Config::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void Config::write_resolved(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write resolved config to " + path);
    out << resolved_text();
}

} // namespace e2p
