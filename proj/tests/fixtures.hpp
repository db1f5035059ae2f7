#pragma once

#include <string>
#include <vector>

#include "mfgp/mfgp.hpp"

namespace fixture {

/// Model with levels given as parallel lists; altitudes step down from 10 m.
inline mfgp::FidelityModel model(std::vector<double> v, std::vector<double> l, std::vector<double> s,
                                 std::vector<double> mu = {}) {
  mfgp::FidelityModel m;
  for (std::size_t i = 0; i < v.size(); ++i) {
    m.levels.push_back({mu.empty() ? 0.0 : mu[i], v[i], l[i], s[i], 10.0 - 3.0 * static_cast<double>(i)});
  }
  return m;
}

inline mfgp::GridDomain grid(double side, std::size_t resolution) { return {0.0, side, 0.0, side, resolution}; }

inline std::string config_path(const std::string& name) { return std::string(MFGP_CONFIG_DIR) + "/" + name; }

inline mfgp::RunConfig load(const std::string& name, const std::vector<std::string>& overrides = {}) {
  auto values = mfgp::load_config_values(config_path(name));
  for (const auto& o : overrides) values.apply_override(o);
  return mfgp::to_run_config(values);
}

}  // namespace fixture
