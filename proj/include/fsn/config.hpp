#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fsn {

// Flat key/value run configuration. Files hold "key = value" lines with '#'
// comments; later sources (command-line flags) override earlier ones.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_string(const std::string& text, const std::string& source = "<string>");

    void set(const std::string& key, const std::string& value);
    void merge(const RunConfig& overrides);

    bool has(const std::string& key) const { return values_.contains(key); }
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    std::uint64_t seed() const { return get_size("seed", 42); }
    std::size_t threads() const;

    // Sorted "key = value" lines.
    std::string echo() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Every key the commands understand; RunConfig::set rejects anything else.
const std::vector<std::string>& known_config_keys();

}  // namespace fsn
