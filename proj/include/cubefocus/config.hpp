#pragma once

// Flat "key = value" configuration files. '#' starts a comment. Every key
// must belong to the schema; typed getters report the offending key by name.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cubefocus {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::string get_choice(const std::string& key, const std::vector<std::string>& allowed) const;

  // Canonical text (sorted keys), used for checkpoints and manifests.
  std::string to_string() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

// Seed precedence: explicit value, then the config's "seed", then the
// CUBEFOCUS_SEED environment variable, then 0.
std::uint64_t resolve_seed(const Config& config, std::optional<std::uint64_t> override_seed = {});

}  // namespace cubefocus
