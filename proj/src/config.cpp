#include "fsn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fsn/parallel.hpp"

namespace fsn {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        // paths
        "data_dir", "features_dir", "annotations", "manifest", "out", "model", "predictions", "tracks",
        "split",
        // model
        "num_classes", "feature_dim", "hidden_channels", "snippet_len", "clip_len", "head", "pooling",
        "weak_m",
        // optimizer / training
        "learning_rate", "momentum", "weight_decay", "batch_size", "iterations", "train_stride", "log_every",
        "rebalance",
        // evaluation / prediction
        "eval_iou", "nms_eval_iou", "pr_curves",
        // ablation
        "ablation",
        // gradient check
        "gradcheck_seeds", "gradcheck_tolerance", "gradcheck_corrupt",
        // synthetic data
        "synth_num_videos", "synth_frames", "synth_noise", "synth_context_ambiguity", "synth_density",
        "synth_min_len", "synth_max_len", "synth_min_gap", "synth_single_class", "synth_structured_background",
        "synth_train_fraction",
        // global
        "seed", "threads",
    };
    return keys;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path.string());
}

RunConfig RunConfig::from_string(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const std::exception& e) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    values_[key] = value;
}

void RunConfig::merge(const RunConfig& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw std::invalid_argument("missing required config key '" + key + "'");
    return it->second;
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    long long v = -1;
    try {
        v = std::stoll(it->second, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != it->second.size() || v < 0) {
        throw std::invalid_argument("config key '" + key + "' expects a non-negative integer, got '" + it->second + "'");
    }
    return static_cast<std::size_t>(v);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != it->second.size()) {
        throw std::invalid_argument("config key '" + key + "' expects a number, got '" + it->second + "'");
    }
    return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key, const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw std::invalid_argument("config key '" + key + "': bad list item '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("config key '" + key + "' is an empty list");
    return out;
}

std::size_t RunConfig::threads() const {
    const std::size_t n = get_size("threads", 0);
    return n > 0 ? n : default_threads();
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

}  // namespace fsn
