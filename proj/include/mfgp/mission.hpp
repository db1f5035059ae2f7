#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "classifier.hpp"
#include "field_model.hpp"
#include "inference.hpp"
#include "planner.hpp"
#include "router.hpp"
#include "types.hpp"

namespace mfgp {

enum class Baseline { multi_fidelity, single_fidelity };

inline const char* to_string(Baseline b) {
  return b == Baseline::single_fidelity ? "single-fidelity" : "multi-fidelity";
}

inline const char* to_string(GroundTruthMode m) { return m == GroundTruthMode::planted ? "planted" : "prior-draw"; }

struct MissionConfig {
  GridDomain domain;
  FidelityModel model;
  double delta = 0.1;
  double threshold = 0.5;
  std::size_t epoch_sample_cap = 200;
  int max_epochs = 30;
  std::uint64_t seed = 1;
  GroundTruthMode mode = GroundTruthMode::prior_draw;
  PlantedConfig planted;
  Baseline baseline = Baseline::multi_fidelity;
  double epoch_ratio = 0.75;
  double sample_time = 1.0;
  double terminate_fraction = 0.99;
  std::size_t decay_samples = 0;  ///< length of the decay comparison attached to reports; 0 disables

  /// Every violated constraint, phrased with its configuration key.
  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    try {
      domain.validate();
    } catch (const std::invalid_argument& e) {
      out.emplace_back(e.what());
    }
    if (domain.size() > GridDomain::max_joint_cells) {
      out.push_back("grid.resolution^2 must not exceed " + std::to_string(GridDomain::max_joint_cells));
    }
    for (auto& v : model_violations(model)) out.push_back(std::move(v));
    if (!(delta > 0.0 && delta < 0.5)) out.emplace_back("mission.delta must lie in (0, 1/2)");
    if (!std::isfinite(threshold)) out.emplace_back("mission.threshold must be finite");
    if (epoch_sample_cap == 0) out.emplace_back("mission.epoch_cap must be positive");
    if (max_epochs <= 0) out.emplace_back("mission.max_epochs must be positive");
    if (!(epoch_ratio > 0.0 && epoch_ratio <= 1.0)) out.emplace_back("mission.epoch_ratio must lie in (0, 1]");
    if (!(sample_time >= 0.0)) out.emplace_back("mission.sample_time must be non-negative");
    if (!(terminate_fraction > 0.0 && terminate_fraction <= 1.0))
      out.emplace_back("mission.terminate_fraction must lie in (0, 1]");
    if (mode == GroundTruthMode::planted) {
      if (!(planted.blur_factor >= 0.0)) out.emplace_back("planted.blur must be non-negative");
      if (!(planted.radius > 0.0)) out.emplace_back("planted.radius must be positive");
      const std::size_t total = planted.targets.size() + planted.random_targets;
      if (total > domain.size()) out.emplace_back("planted.targets exceeds the number of cells");
    }
    return out;
  }

  void validate() const {
    const auto v = violations();
    if (!v.empty()) throw std::invalid_argument(v.front());
  }
};

struct EpochRecord {
  int epoch = 0;
  std::size_t samples_before = 0;
  std::size_t samples = 0;
  std::vector<Fidelity> levels;
  double max_sigma_before = 0.0;
  double max_sigma_after = 0.0;  ///< realized, over the epoch's candidate cells
  bool capped = false;
  double classified_fraction = 0.0;
  std::size_t targets = 0;
  std::size_t empties = 0;
  double clock = 0.0;

  double ratio() const { return max_sigma_before > 0.0 ? max_sigma_after / max_sigma_before : 0.0; }
};

struct CellReport {
  CellIndex cell = 0;
  Label label = Label::uncertain;
  double truth = 0.0;         ///< f^M at the cell
  bool truth_target = false;  ///< truth >= threshold
  double gap = 0.0;           ///< |truth - threshold|
  int epoch = 0;
  double time = 0.0;

  bool classified() const { return label != Label::uncertain; }
  bool misclassified() const {
    return (label == Label::target && !truth_target) || (label == Label::empty && truth_target);
  }
};

/// Max posterior variance after n greedy samples, n = 0..N, for both sampling schemes.
struct DecayComparison {
  std::vector<double> multi_fidelity;
  std::vector<double> single_fidelity;
};

struct MissionReport {
  /// Cells this close to the threshold are left out of misclassification counts.
  static constexpr double boundary_margin = 1e-6;

  MissionConfig config;
  Termination status = Termination::proceed;
  std::vector<EpochRecord> epochs;
  std::vector<CellReport> cells;
  std::vector<Fidelity> fidelity_trace;
  std::optional<DecayComparison> decay;
  double clock = 0.0;
  double travelled = 0.0;

  // Bulk artifacts for exports.
  GroundTruth truth;
  SampleLog log;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::vector<EpochPlan> plans;
  std::vector<Waypoint> waypoints;

  std::size_t samples() const { return log.size(); }
  double classified_fraction() const { return epochs.empty() ? 0.0 : epochs.back().classified_fraction; }

  /// Classified cells away from the threshold, i.e. the population for error rates.
  std::size_t scored() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellReport& c) {
      return c.classified() && c.gap > boundary_margin;
    }));
  }

  std::size_t misclassified() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellReport& c) {
      return c.classified() && c.gap > boundary_margin && c.misclassified();
    }));
  }
};

namespace detail {

constexpr std::uint64_t measurement_stream = 0x9E3779B97F4A7C15ULL;

inline std::vector<double> greedy_decay(PosteriorField field, FidelityState state, std::size_t samples) {
  std::vector<double> out;
  out.reserve(samples + 1);
  double current = field.max_variance();
  out.push_back(current);
  for (std::size_t i = 0; i < samples; ++i) {
    state = update_fidelity(state, current, field.model());
    const auto cell = select_next_point(field);
    field.append_hypothetical(*cell, state.level);
    current = field.max_variance();
    out.push_back(current);
  }
  return out;
}

}  // namespace detail

/// Variance-only greedy sampling over the whole grid from the prior, with level
/// switching versus sampling the top level throughout.
inline DecayComparison compare_decay(const MissionConfig& config, std::size_t samples) {
  if (config.model.size() < 2) throw std::invalid_argument("decay comparison needs at least two fidelity levels");
  const PosteriorField prior = posterior(SampleLog{}, config.domain, config.model);
  return {detail::greedy_decay(prior, FidelityState{1}, samples),
          detail::greedy_decay(prior, FidelityState{config.model.size()}, samples)};
}

/// Full search loop: plan, route, fly, infer, classify, eliminate, until the
/// classified fraction reaches the target or the epoch cap is hit.
inline MissionReport run_mission(const MissionConfig& config) {
  config.validate();
  MissionReport report;
  report.config = config;
  const auto& domain = config.domain;
  const auto& model = config.model;

  report.truth = sample_ground_truth(domain, model, config.seed, config.mode, config.planted);
  Rng rng(config.seed ^ detail::measurement_stream);

  FidelityState state{config.baseline == Baseline::single_fidelity ? model.size() : 1};
  Point3 vehicle{domain.x_min, domain.y_min, model.level(state.level).altitude};
  Clock clock{config.sample_time};
  ClassificationMap map(domain.size());
  const ConfidenceParams params{config.delta, config.threshold};
  const PlanLimits limits{config.epoch_ratio, config.epoch_sample_cap};

  PosteriorField field = posterior(report.log, domain, model);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    try {
      const auto candidates = map.candidates();
      if (!map.any_candidate()) break;
      auto outcome = plan_epoch(field, state, candidates, limits, epoch);
      auto& plan = outcome.plan;
      state = plan.final_state;

      const auto tours = build_epoch_tours(plan, domain, model, vehicle);
      auto visited = execute_epoch(plan, tours, report.truth, model, vehicle, clock, rng, report.log);
      report.waypoints.insert(report.waypoints.end(), visited.begin(), visited.end());

      for (std::size_t i = plan.samples_before; i < report.log.size(); ++i) field.append_observation(report.log[i]);
      map = classify_epoch(std::move(map), field, params, epoch, clock.now);

      EpochRecord rec;
      rec.epoch = epoch;
      rec.samples_before = plan.samples_before;
      rec.samples = plan.samples.size();
      rec.levels = plan.levels();
      rec.max_sigma_before = plan.max_sigma_before;
      rec.max_sigma_after = std::sqrt(std::max(0.0, field.max_variance(candidates)));
      rec.capped = plan.capped;
      rec.classified_fraction = map.classified_fraction();
      rec.targets = map.count(Label::target);
      rec.empties = map.count(Label::empty);
      rec.clock = clock.now;
      report.epochs.push_back(rec);
      report.plans.push_back(std::move(plan));

      report.status = check_termination(map, epoch, config.max_epochs, config.terminate_fraction);
      if (report.status != Termination::proceed) break;
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("epoch " + std::to_string(epoch) + ": " + e.what(), e.jitter());
    }
  }
  if (report.status == Termination::proceed) report.status = Termination::done;

  report.mean = field.mean();
  report.variance = field.variance();
  report.clock = clock.now;
  report.travelled = clock.travelled;
  for (const auto& r : report.log) report.fidelity_trace.push_back(r.fidelity);
  const Eigen::VectorXd& f = report.truth.field();
  for (std::size_t c = 0; c < map.size(); ++c) {
    CellReport cr;
    cr.cell = c;
    cr.label = map[c].label;
    cr.truth = f[static_cast<Eigen::Index>(c)];
    cr.truth_target = cr.truth >= config.threshold;
    cr.gap = std::abs(cr.truth - config.threshold);
    cr.epoch = map[c].epoch;
    cr.time = map[c].time;
    report.cells.push_back(cr);
  }
  if (config.decay_samples > 0 && model.size() >= 2) report.decay = compare_decay(config, config.decay_samples);
  return report;
}

/// Worker count for multi-mission studies: MFGP_SEARCH_THREADS if set, else the
/// hardware concurrency.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MFGP_SEARCH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers; results are placed
/// by index, so the outcome does not depend on scheduling.
template <typename Result>
std::vector<Result> parallel_map(std::size_t count, const std::function<Result(std::size_t)>& fn,
                                 unsigned threads = worker_count()) {
  std::vector<std::optional<Result>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<Result> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::vector<MissionReport> run_missions(const MissionConfig& config, const std::vector<std::uint64_t>& seeds,
                                               unsigned threads = worker_count()) {
  return parallel_map<MissionReport>(
      seeds.size(),
      [&](std::size_t i) {
        MissionConfig c = config;
        c.seed = seeds[i];
        c.decay_samples = 0;
        return run_mission(c);
      },
      threads);
}

struct DetectionBin {
  double gap_low = 0.0;
  double gap_high = 0.0;
  std::size_t cells = 0;
  std::size_t classified = 0;
  std::size_t censored = 0;  ///< still uncertain when the mission stopped
  double mean_time = 0.0;    ///< over classified cells only; NaN if none
};

struct DetectionTimeTable {
  std::vector<DetectionBin> bins;
  std::size_t missions = 0;
};

/// Pools per-cell classification times over missions and averages them within
/// equal-count bins of the gap |f(x) - th|.
inline DetectionTimeTable detection_time_table(const std::vector<MissionReport>& reports, std::size_t bin_count) {
  if (bin_count == 0) throw std::invalid_argument("detection-time study needs at least one bin");
  struct Entry {
    double gap;
    bool classified;
    double time;
  };
  std::vector<Entry> pooled;
  for (const auto& r : reports)
    for (const auto& c : r.cells)
      if (c.gap > MissionReport::boundary_margin) pooled.push_back({c.gap, c.classified(), c.time});
  std::stable_sort(pooled.begin(), pooled.end(), [](const Entry& a, const Entry& b) { return a.gap < b.gap; });

  DetectionTimeTable table;
  table.missions = reports.size();
  const std::size_t n = pooled.size();
  for (std::size_t b = 0; b < bin_count; ++b) {
    const std::size_t lo = b * n / bin_count;
    const std::size_t hi = (b + 1) * n / bin_count;
    DetectionBin bin;
    if (lo < hi) {
      bin.gap_low = pooled[lo].gap;
      bin.gap_high = pooled[hi - 1].gap;
    }
    double total = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      ++bin.cells;
      if (pooled[i].classified) {
        ++bin.classified;
        total += pooled[i].time;
      } else {
        ++bin.censored;
      }
    }
    bin.mean_time = bin.classified > 0 ? total / static_cast<double>(bin.classified)
                                       : std::numeric_limits<double>::quiet_NaN();
    table.bins.push_back(bin);
  }
  return table;
}

/// Monte Carlo over seeds of the per-cell detection time, binned by gap.
inline DetectionTimeTable detection_time_study(const MissionConfig& config, const std::vector<std::uint64_t>& seeds,
                                               std::size_t bin_count = 3, unsigned threads = worker_count()) {
  if (config.mode != GroundTruthMode::prior_draw) {
    throw std::invalid_argument("detection-time study requires prior-draw ground truth");
  }
  return detection_time_table(run_missions(config, seeds, threads), bin_count);
}

}  // namespace mfgp
