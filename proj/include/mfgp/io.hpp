#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "classifier.hpp"
#include "config.hpp"
#include "field_model.hpp"
#include "inference.hpp"
#include "mission.hpp"
#include "planner.hpp"
#include "router.hpp"

namespace mfgp {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr int report_schema_version = 1;

/// Fixed 17-significant-digit rendering used by every text export.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Opens path for writing (creating parent directories) and hands the stream to fn.
inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  fn(out);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Row-major grid CSV with header "x,y,value".
inline void write_grid_csv(std::ostream& out, const GridDomain& domain, const Eigen::VectorXd& values) {
  out << "x,y,value\n";
  for (std::size_t c = 0; c < domain.size(); ++c) {
    const Location p = domain.cell(c);
    out << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(values[static_cast<Eigen::Index>(c)]) << '\n';
  }
}

namespace detail {

/// Writes a P2 image whose top row is the largest y; level(c) gives 0..255.
inline void write_pgm_levels(std::ostream& out, const GridDomain& domain, const std::function<int(CellIndex)>& level) {
  const std::size_t n = domain.resolution;
  out << "P2\n" << n << ' ' << n << "\n255\n";
  for (std::size_t r = n; r-- > 0;) {
    for (std::size_t col = 0; col < n; ++col) {
      if (col > 0) out << ' ';
      out << level(r * n + col);
    }
    out << '\n';
  }
}

}  // namespace detail

/// Grayscale PGM with values mapped linearly from [min, max] to [0, 255].
inline void write_grid_pgm(std::ostream& out, const GridDomain& domain, const Eigen::VectorXd& values) {
  const double lo = values.size() ? values.minCoeff() : 0.0;
  const double hi = values.size() ? values.maxCoeff() : 0.0;
  const double span = hi - lo;
  detail::write_pgm_levels(out, domain, [&](CellIndex c) {
    if (!(span > 0.0)) return 0;
    const double t = (values[static_cast<Eigen::Index>(c)] - lo) / span;
    return static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  });
}

/// Gray level per label in occupancy images.
inline int label_level(Label l) {
  switch (l) {
    case Label::target: return 255;
    case Label::empty: return 0;
    default: return 128;
  }
}

inline void write_occupancy_csv(std::ostream& out, const GridDomain& domain, const std::vector<CellReport>& cells) {
  out << "x,y,label,epoch,time\n";
  for (const auto& c : cells) {
    const Location p = domain.cell(c.cell);
    out << fmt(p.x()) << ',' << fmt(p.y()) << ',' << to_string(c.label) << ',' << c.epoch << ','
        << (c.classified() ? fmt(c.time) : std::string()) << '\n';
  }
}

inline void write_occupancy_pgm(std::ostream& out, const GridDomain& domain, const std::vector<CellReport>& cells) {
  detail::write_pgm_levels(out, domain, [&](CellIndex c) { return label_level(cells[c].label); });
}

inline void write_plan_csv(std::ostream& out, const GridDomain& domain, const std::vector<EpochPlan>& plans) {
  out << "epoch,order,x,y,fidelity,sigma_before\n";
  for (const auto& plan : plans) {
    for (std::size_t k = 0; k < plan.samples.size(); ++k) {
      const auto& s = plan.samples[k];
      const Location p = domain.cell(s.cell);
      out << plan.epoch << ',' << k << ',' << fmt(p.x()) << ',' << fmt(p.y()) << ',' << s.fidelity << ','
          << fmt(s.sigma_before) << '\n';
    }
  }
}

inline void write_tours_csv(std::ostream& out, const std::vector<Waypoint>& waypoints) {
  out << "epoch,order,x,y,z,time\n";
  for (const auto& w : waypoints) {
    out << w.epoch << ',' << w.order << ',' << fmt(w.position.x) << ',' << fmt(w.position.y) << ','
        << fmt(w.position.z) << ',' << fmt(w.time) << '\n';
  }
}

/// One line per sample: "sample n=.. x=.. y=.. m=.. value=.. sigma2_before=.. info_gain=..".
inline void write_diagnostics(std::ostream& out, const GridDomain& domain, const std::vector<SampleDiagnostic>& diags) {
  for (const auto& d : diags) {
    const Location p = domain.cell(d.cell);
    out << "sample n=" << d.index << " x=" << fmt(p.x()) << " y=" << fmt(p.y()) << " m=" << d.fidelity
        << " value=" << fmt(d.value) << " sigma2_before=" << fmt(d.variance_before) << " info_gain=" << fmt(d.info_gain)
        << '\n';
  }
}

inline void write_decay_csv(std::ostream& out, const DecayComparison& decay) {
  out << "series,n,max_variance\n";
  for (std::size_t n = 0; n < decay.multi_fidelity.size(); ++n)
    out << "multi-fidelity," << n << ',' << fmt(decay.multi_fidelity[n]) << '\n';
  for (std::size_t n = 0; n < decay.single_fidelity.size(); ++n)
    out << "single-fidelity," << n << ',' << fmt(decay.single_fidelity[n]) << '\n';
}

inline void write_detection_csv(std::ostream& out, const DetectionTimeTable& table) {
  out << "bin,gap_low,gap_high,cells,classified,censored,mean_time\n";
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    const auto& bin = table.bins[b];
    out << b << ',' << fmt(bin.gap_low) << ',' << fmt(bin.gap_high) << ',' << bin.cells << ',' << bin.classified << ','
        << bin.censored << ',' << (std::isnan(bin.mean_time) ? std::string() : fmt(bin.mean_time)) << '\n';
  }
}

namespace detail {

inline nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

/// Mission report document. Bulk grids are exported separately as CSV.
inline nlohmann::ordered_json report_json(const MissionReport& report, const RunConfig& config) {
  using nlohmann::ordered_json;
  const auto& domain = report.config.domain;
  ordered_json doc;
  doc["schema_version"] = report_schema_version;
  doc["tool_version"] = tool_version;

  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : normalized_entries(config)) cfg[k] = v;
  doc["config"] = cfg;

  doc["status"] = to_string(report.status);
  ordered_json summary;
  summary["epochs"] = report.epochs.size();
  summary["samples"] = report.samples();
  summary["clock"] = report.clock;
  summary["travelled"] = report.travelled;
  summary["classified_fraction"] = report.classified_fraction();
  std::size_t targets = 0, empties = 0;
  for (const auto& c : report.cells) {
    targets += c.label == Label::target;
    empties += c.label == Label::empty;
  }
  summary["targets"] = targets;
  summary["empties"] = empties;
  summary["scored_cells"] = report.scored();
  summary["misclassified"] = report.misclassified();
  doc["summary"] = summary;

  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["samples_before"] = e.samples_before;
    j["samples"] = e.samples;
    j["levels"] = e.levels;
    j["max_sigma_before"] = e.max_sigma_before;
    j["max_sigma_after"] = e.max_sigma_after;
    j["ratio"] = e.ratio();
    j["capped"] = e.capped;
    j["classified_fraction"] = e.classified_fraction;
    j["targets"] = e.targets;
    j["empties"] = e.empties;
    j["clock"] = e.clock;
    epochs.push_back(std::move(j));
  }
  doc["epochs"] = epochs;
  doc["fidelity_trace"] = report.fidelity_trace;

  ordered_json cells = ordered_json::array();
  for (const auto& c : report.cells) {
    const Location p = domain.cell(c.cell);
    ordered_json j;
    j["x"] = p.x();
    j["y"] = p.y();
    j["label"] = to_string(c.label);
    j["truth"] = c.truth;
    j["truth_target"] = c.truth_target;
    j["gap"] = c.gap;
    j["epoch"] = c.epoch;
    j["time"] = c.classified() ? detail::number_or_null(c.time) : ordered_json(nullptr);
    cells.push_back(std::move(j));
  }
  doc["cells"] = cells;

  if (report.decay) {
    doc["decay"]["multi_fidelity"] = report.decay->multi_fidelity;
    doc["decay"]["single_fidelity"] = report.decay->single_fidelity;
  }
  return doc;
}

/// Reproduction record written before any computation.
inline nlohmann::ordered_json manifest_json(const std::string& command, const std::string& config_path,
                                            const std::vector<std::string>& overrides, const std::string& out_dir,
                                            const RunConfig& config) {
  nlohmann::ordered_json doc;
  doc["tool"] = "mfgp_search";
  doc["tool_version"] = tool_version;
  doc["command"] = command;
  doc["config_path"] = config_path;
  doc["overrides"] = overrides;
  doc["output_dir"] = out_dir;
  doc["seed"] = config.mission.seed;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : normalized_entries(config)) cfg[k] = v;
  doc["config"] = cfg;
  return doc;
}

/// Reads a key=value config file, or the "config" block of a manifest written by
/// a previous run (detected by a leading '{').
inline ConfigValues load_config_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') return ConfigValues::parse(text, path);

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid manifest JSON: " + e.what());
  }
  if (!doc.contains("config") || !doc["config"].is_object()) throw ConfigError(path + ": manifest has no config block");
  std::string lines;
  for (const auto& [k, v] : doc["config"].items()) {
    if (!v.is_string()) throw ConfigError(path + ": manifest config value for " + k + " must be a string");
    lines += k + "=" + v.get<std::string>() + "\n";
  }
  return ConfigValues::parse(lines, path);
}

}  // namespace mfgp
