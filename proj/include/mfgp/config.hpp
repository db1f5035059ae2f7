#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "mission.hpp"

namespace mfgp {

/// Settings for the benchmark subcommand.
struct BenchConfig {
  std::size_t seeds = 30;
  std::uint64_t first_seed = 1;
  std::size_t bins = 3;
  std::size_t decay_samples = 100;
  int max_epochs = 0;  ///< epoch cap for detection-study missions; 0 keeps mission.max_epochs
};

struct RunConfig {
  MissionConfig mission;
  BenchConfig bench;
};

/// Configuration problem tied to a source location ("file:line: key: message").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw key/value pairs with the place each was defined.
class ConfigValues {
 public:
  struct Entry {
    std::string value;
    std::string source;  ///< file name, or "--set" for overrides
    std::size_t line = 0;

    std::string where() const { return line > 0 ? source + ":" + std::to_string(line) : source; }
  };

  /// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
  static ConfigValues parse(const std::string& text, const std::string& source) {
    ConfigValues out;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(source + ":" + std::to_string(line) + ": expected key=value, got '" + body + "'");
      }
      const std::string key = trim(body.substr(0, eq));
      const std::string value = trim(body.substr(eq + 1));
      if (!is_known_key(key)) throw ConfigError(source + ":" + std::to_string(line) + ": unknown key '" + key + "'");
      if (out.entries_.count(key)) {
        throw ConfigError(source + ":" + std::to_string(line) + ": " + key + ": duplicate key (first set at line " +
                          std::to_string(out.entries_.at(key).line) + ")");
      }
      out.entries_[key] = {value, source, line};
    }
    return out;
  }

  static ConfigValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  /// Applies "key=value"; key may be a full dotted path or an unambiguous last
  /// component (e.g. "delta" for mission.delta). Returns the resolved key.
  std::string apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + assignment + ": expected key=value");
    const std::string key = resolve_key(trim(assignment.substr(0, eq)));
    entries_[key] = {trim(assignment.substr(eq + 1)), "--set", 0};
    return key;
  }

  void set(const std::string& key, const std::string& value, const std::string& source = "--set") {
    entries_[key] = {value, source, 0};
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::optional<std::string> raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : convert<T>(key, it->second);
  }

  template <typename T>
  T require(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing key " + key);
    return convert<T>(key, it->second);
  }

  std::string where(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? std::string("(default)") : it->second.where();
  }

  static bool is_known_key(const std::string& key) {
    static const std::regex pattern(
        R"(grid\.(x_min|x_max|y_min|y_max|resolution)|)"
        R"(model\.(levels|(mu|v|l|s|z)_[1-9][0-9]*)|)"
        R"(mission\.(delta|threshold|epoch_cap|max_epochs|seed|mode|baseline|epoch_ratio|sample_time|terminate_fraction|decay_samples)|)"
        R"(planted\.(targets|amplitude|radius|separation|background|blur)|)"
        R"(planted\.target_[1-9][0-9]*\.(x|y|amplitude|radius)|)"
        R"(bench\.(seeds|first_seed|bins|decay_samples|max_epochs))");
    return std::regex_match(key, pattern);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::string resolve_key(const std::string& key) const {
    if (is_known_key(key)) return key;
    static const char* const sections[] = {"mission.", "grid.", "model.", "planted.", "bench."};
    std::vector<std::string> matches;
    for (const char* s : sections)
      if (is_known_key(s + key)) matches.push_back(s + key);
    if (matches.size() == 1) return matches.front();
    if (matches.empty()) throw ConfigError("--set " + key + ": unknown key");
    std::string names;
    for (const auto& m : matches) names += (names.empty() ? "" : ", ") + m;
    throw ConfigError("--set " + key + ": ambiguous key (matches " + names + ")");
  }

  template <typename T>
  static T convert(const std::string& key, const Entry& e) {
    if constexpr (std::is_same_v<T, std::string>) {
      return e.value;
    } else {
      T v{};
      const char* first = e.value.data();
      const char* last = first + e.value.size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || e.value.empty()) {
        const char* kind = std::is_floating_point_v<T> ? "a number" : "a non-negative integer";
        throw ConfigError(e.where() + ": " + key + ": expected " + kind + ", got '" + e.value + "'");
      }
      return v;
    }
  }

  std::map<std::string, Entry> entries_;
};

namespace detail {

inline std::string level_key(const char* name, Fidelity m) { return std::string("model.") + name + "_" + std::to_string(m); }

inline std::string number_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Builds a typed configuration; the first problem is reported with its source line.
inline RunConfig to_run_config(const ConfigValues& values) {
  RunConfig rc;
  auto& m = rc.mission;
  m.domain.x_min = values.get("grid.x_min", 0.0);
  m.domain.x_max = values.get("grid.x_max", 20.0);
  m.domain.y_min = values.get("grid.y_min", 0.0);
  m.domain.y_max = values.get("grid.y_max", 20.0);
  m.domain.resolution = values.get<std::size_t>("grid.resolution", 20);

  const int levels = values.require<int>("model.levels");
  if (levels < 1 || levels > 16) {
    throw ConfigError(values.where("model.levels") + ": model.levels: expected 1..16, got " + std::to_string(levels));
  }
  for (Fidelity lv = 1; lv <= levels; ++lv) {
    FidelityLevel fl;
    fl.mean = values.get(detail::level_key("mu", lv), 0.0);
    fl.amplitude = values.require<double>(detail::level_key("v", lv));
    fl.length_scale = values.require<double>(detail::level_key("l", lv));
    fl.noise_sd = values.require<double>(detail::level_key("s", lv));
    fl.altitude = values.require<double>(detail::level_key("z", lv));
    m.model.levels.push_back(fl);
  }
  for (const auto& [key, entry] : values.entries()) {
    static const std::regex level_pattern(R"(model\.(mu|v|l|s|z)_([0-9]+))");
    std::smatch sm;
    if (std::regex_match(key, sm, level_pattern) && std::stoi(sm[2]) > levels) {
      throw ConfigError(entry.where() + ": " + key + ": level exceeds model.levels = " + std::to_string(levels));
    }
  }

  m.delta = values.get("mission.delta", m.delta);
  m.threshold = values.get("mission.threshold", m.threshold);
  m.epoch_sample_cap = values.get("mission.epoch_cap", m.epoch_sample_cap);
  m.max_epochs = values.get("mission.max_epochs", m.max_epochs);
  m.seed = values.get("mission.seed", m.seed);
  m.epoch_ratio = values.get("mission.epoch_ratio", m.epoch_ratio);
  m.sample_time = values.get("mission.sample_time", m.sample_time);
  m.terminate_fraction = values.get("mission.terminate_fraction", m.terminate_fraction);
  m.decay_samples = values.get("mission.decay_samples", m.decay_samples);

  const auto mode = values.get<std::string>("mission.mode", "prior-draw");
  if (mode == "prior-draw") {
    m.mode = GroundTruthMode::prior_draw;
  } else if (mode == "planted") {
    m.mode = GroundTruthMode::planted;
  } else {
    throw ConfigError(values.where("mission.mode") + ": mission.mode: expected prior-draw or planted, got '" + mode + "'");
  }
  const auto baseline = values.get<std::string>("mission.baseline", "multi-fidelity");
  if (baseline == "multi-fidelity") {
    m.baseline = Baseline::multi_fidelity;
  } else if (baseline == "single-fidelity") {
    m.baseline = Baseline::single_fidelity;
  } else {
    throw ConfigError(values.where("mission.baseline") +
                      ": mission.baseline: expected multi-fidelity or single-fidelity, got '" + baseline + "'");
  }

  auto& p = m.planted;
  p.random_targets = values.get("planted.targets", p.random_targets);
  p.amplitude = values.get("planted.amplitude", p.amplitude);
  p.radius = values.get("planted.radius", p.radius);
  p.min_separation = values.get("planted.separation", p.min_separation);
  p.background = values.get("planted.background", p.background);
  p.blur_factor = values.get("planted.blur", p.blur_factor);
  for (int k = 1;; ++k) {
    const std::string base = "planted.target_" + std::to_string(k);
    if (!values.has(base + ".x") && !values.has(base + ".y")) break;
    PlantedTarget t;
    t.center = {values.require<double>(base + ".x"), values.require<double>(base + ".y")};
    t.amplitude = values.get(base + ".amplitude", p.amplitude);
    t.radius = values.get(base + ".radius", p.radius);
    p.targets.push_back(t);
  }

  rc.bench.seeds = values.get("bench.seeds", rc.bench.seeds);
  rc.bench.first_seed = values.get("bench.first_seed", rc.bench.first_seed);
  rc.bench.bins = values.get("bench.bins", rc.bench.bins);
  rc.bench.decay_samples = values.get("bench.decay_samples", rc.bench.decay_samples);
  rc.bench.max_epochs = values.get("bench.max_epochs", rc.bench.max_epochs);
  return rc;
}

/// Canonical key=value lines for a configuration; parsing them back yields an
/// identical RunConfig.
inline std::vector<std::pair<std::string, std::string>> normalized_entries(const RunConfig& rc) {
  using detail::number_text;
  std::vector<std::pair<std::string, std::string>> out;
  const auto& m = rc.mission;
  auto put = [&out](std::string k, std::string v) { out.emplace_back(std::move(k), std::move(v)); };
  put("grid.x_min", number_text(m.domain.x_min));
  put("grid.x_max", number_text(m.domain.x_max));
  put("grid.y_min", number_text(m.domain.y_min));
  put("grid.y_max", number_text(m.domain.y_max));
  put("grid.resolution", std::to_string(m.domain.resolution));
  put("model.levels", std::to_string(m.model.size()));
  for (Fidelity lv = 1; lv <= m.model.size(); ++lv) {
    const auto& l = m.model.level(lv);
    put(detail::level_key("mu", lv), number_text(l.mean));
    put(detail::level_key("v", lv), number_text(l.amplitude));
    put(detail::level_key("l", lv), number_text(l.length_scale));
    put(detail::level_key("s", lv), number_text(l.noise_sd));
    put(detail::level_key("z", lv), number_text(l.altitude));
  }
  put("mission.delta", number_text(m.delta));
  put("mission.threshold", number_text(m.threshold));
  put("mission.epoch_cap", std::to_string(m.epoch_sample_cap));
  put("mission.max_epochs", std::to_string(m.max_epochs));
  put("mission.seed", std::to_string(m.seed));
  put("mission.mode", to_string(m.mode));
  put("mission.baseline", to_string(m.baseline));
  put("mission.epoch_ratio", number_text(m.epoch_ratio));
  put("mission.sample_time", number_text(m.sample_time));
  put("mission.terminate_fraction", number_text(m.terminate_fraction));
  put("mission.decay_samples", std::to_string(m.decay_samples));
  const auto& p = m.planted;
  put("planted.targets", std::to_string(p.random_targets));
  put("planted.amplitude", number_text(p.amplitude));
  put("planted.radius", number_text(p.radius));
  put("planted.separation", number_text(p.min_separation));
  put("planted.background", number_text(p.background));
  put("planted.blur", number_text(p.blur_factor));
  for (std::size_t k = 0; k < p.targets.size(); ++k) {
    const std::string base = "planted.target_" + std::to_string(k + 1);
    put(base + ".x", number_text(p.targets[k].center.x()));
    put(base + ".y", number_text(p.targets[k].center.y()));
    put(base + ".amplitude", number_text(p.targets[k].amplitude));
    put(base + ".radius", number_text(p.targets[k].radius));
  }
  put("bench.seeds", std::to_string(rc.bench.seeds));
  put("bench.first_seed", std::to_string(rc.bench.first_seed));
  put("bench.bins", std::to_string(rc.bench.bins));
  put("bench.decay_samples", std::to_string(rc.bench.decay_samples));
  put("bench.max_epochs", std::to_string(rc.bench.max_epochs));
  return out;
}

inline std::string normalized_text(const RunConfig& rc) {
  std::string out;
  for (const auto& [k, v] : normalized_entries(rc)) out += k + "=" + v + "\n";
  return out;
}

}  // namespace mfgp
