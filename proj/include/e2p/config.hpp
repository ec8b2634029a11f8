#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace e2p {

// Flat key = value configuration with one level of `include <path>`.
// Unknown keys are rejected against a registry; the fully resolved map is
// persisted next to every command's outputs.
class Config {
  public:
    static const std::vector<std::string>& known_keys();

    static Config from_file(const std::string& path);
    Config() = default;

    void set(const std::string& key, const std::string& value); // validates the key
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    // sorted "key = value" lines
    std::string resolved_text() const;
    void write_resolved(const std::string& path) const;

  private:
    std::map<std::string, std::string> values_;
};

} // namespace e2p
