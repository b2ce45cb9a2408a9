#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xrf {

/// Flat `key=value` text configuration, insertion-ordered.
///
/// Lines are trimmed; empty lines and lines starting with '#' are ignored.
/// Later assignments to the same key override earlier ones.
class KeyValueConfig {
 public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value);
    /// Applies a single "key=value" override.
    void apply_override(const std::string& assignment);
    bool contains(const std::string& key) const;
    void erase(const std::string& key);

    std::optional<std::string> find(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Serialized form, one `key=value` per line in insertion order.
    std::string dump() const;
    void save(const std::filesystem::path& path) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace xrf
