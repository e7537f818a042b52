#include "cubefocus/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cubefocus {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = {
      // synthetic data
      "height", "width", "frames", "glyph", "classes", "trajectory", "window", "noise",
      "distractors", "train_size", "val_size", "test_size",
      // architecture
      "cube_h", "cube_w", "cube_t", "max_cubes", "global_width", "local_width", "policy_hidden",
      // training
      "mode", "schedule", "policy", "epochs", "policy_epochs", "batch_size", "learning_rate",
      "policy_learning_rate", "momentum", "weight_decay",
      "seed"};
  return keys;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  values_[key] = value;
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (cfg.has(key)) throw ConfigError("duplicate config key '" + key + "'");
    cfg.set(key, value);
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::size_t Config::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string s = get_string(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + s + "'");
  }
  return v;
}

double Config::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
  }
}

std::string Config::get_choice(const std::string& key, const std::vector<std::string>& allowed) const {
  const std::string s = get_string(key);
  if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
    std::string options;
    for (const auto& a : allowed) options += (options.empty() ? "" : "|") + a;
    throw ConfigError("config key '" + key + "' must be one of " + options + ", got '" + s + "'");
  }
  return s;
}

std::string Config::to_string() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

std::uint64_t resolve_seed(const Config& config, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  if (config.has("seed")) return config.get_u64("seed");
  if (const char* env = std::getenv("CUBEFOCUS_SEED")) {
    std::uint64_t v = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("CUBEFOCUS_SEED must be a nonnegative integer, got '" + s + "'");
    }
    return v;
  }
  return 0;
}

}  // namespace cubefocus
