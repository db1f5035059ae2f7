#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "inference.hpp"
#include "types.hpp"

namespace mfgp {

enum class Label : std::uint8_t { uncertain, empty, target };

inline const char* to_string(Label l) {
  switch (l) {
    case Label::empty: return "empty";
    case Label::target: return "target";
    default: return "uncertain";
  }
}

/// Width multiplier c(eps) = sqrt(2 ln(1 / (2 eps))) of the Bayesian interval.
inline double confidence_multiplier(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw std::invalid_argument("confidence level must lie in (0, 1/2)");
  return std::sqrt(2.0 * std::log(1.0 / (2.0 * epsilon)));
}

struct ConfidenceBounds {
  double lower = 0.0;
  double upper = 0.0;
};

inline ConfidenceBounds confidence_interval(double mean, double sigma, double epsilon) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
  const double half = confidence_multiplier(epsilon) * sigma;
  return {mean - half, mean + half};
}

struct ConfidenceParams {
  double delta = 0.1;      ///< misclassification tolerance, in (0, 1/2)
  double threshold = 0.5;  ///< detection threshold th

  /// Per-epoch level delta / 2^j; summed over j >= 1 it equals delta.
  double epsilon(int epoch) const {
    if (epoch < 1) throw std::invalid_argument("epochs are numbered from 1");
    return std::ldexp(delta, -epoch);
  }
};

struct CellStatus {
  Label label = Label::uncertain;
  int epoch = 0;         ///< epoch of classification, 0 while uncertain
  double time = 0.0;     ///< mission clock at classification
  double lower = 0.0;    ///< bounds at the last evaluation
  double upper = 0.0;
};

/// Tri-state occupancy map. Labels other than uncertain never change.
class ClassificationMap {
 public:
  ClassificationMap() = default;
  explicit ClassificationMap(std::size_t cells) : cells_(cells) {}

  std::size_t size() const { return cells_.size(); }
  const CellStatus& operator[](std::size_t i) const { return cells_[i]; }
  const std::vector<CellStatus>& cells() const { return cells_; }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const auto& c : cells_) n += c.label == l;
    return n;
  }

  double classified_fraction() const {
    if (cells_.empty()) return 1.0;
    return static_cast<double>(size() - count(Label::uncertain)) / static_cast<double>(size());
  }

  /// Cells still open to sampling: everything except the eliminated (empty) set.
  std::vector<bool> candidates() const {
    std::vector<bool> out(cells_.size());
    for (std::size_t i = 0; i < cells_.size(); ++i) out[i] = cells_[i].label != Label::empty;
    return out;
  }

  bool any_candidate() const {
    for (const auto& c : cells_)
      if (c.label != Label::empty) return true;
    return false;
  }

 private:
  friend ClassificationMap classify_epoch(ClassificationMap, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                          const ConfidenceParams&, int, double);
  std::vector<CellStatus> cells_;
};

/// End-of-epoch rule at eps = delta / 2^j: L >= th labels target, U < th labels
/// empty (and eliminates the cell), anything else stays uncertain.
inline ClassificationMap classify_epoch(ClassificationMap map, const Eigen::VectorXd& mean,
                                        const Eigen::VectorXd& variance, const ConfidenceParams& params, int epoch,
                                        double time) {
  if (static_cast<std::size_t>(mean.size()) != map.size() || variance.size() != mean.size()) {
    throw std::invalid_argument("classify_epoch: grid size mismatch");
  }
  const double eps = params.epsilon(epoch);
  for (std::size_t i = 0; i < map.size(); ++i) {
    auto& c = map.cells_[i];
    if (c.label != Label::uncertain) continue;
    const auto idx = static_cast<Eigen::Index>(i);
    const auto b = confidence_interval(mean[idx], std::sqrt(std::max(0.0, variance[idx])), eps);
    c.lower = b.lower;
    c.upper = b.upper;
    if (b.lower >= params.threshold) {
      c.label = Label::target;
    } else if (b.upper < params.threshold) {
      c.label = Label::empty;
    } else {
      continue;
    }
    c.epoch = epoch;
    c.time = time;
  }
  return map;
}

inline ClassificationMap classify_epoch(ClassificationMap map, const PosteriorField& field,
                                        const ConfidenceParams& params, int epoch, double time) {
  return classify_epoch(std::move(map), field.mean(), field.variance(), params, epoch, time);
}

enum class Termination { proceed, done, epoch_cap };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::done: return "done";
    case Termination::epoch_cap: return "epoch_cap";
    default: return "continue";
  }
}

/// done once the classified fraction reaches `fraction`; epoch_cap when
/// `epochs_completed` hits `max_epochs` first.
inline Termination check_termination(const ClassificationMap& map, int epochs_completed = 0,
                                      int max_epochs = std::numeric_limits<int>::max(), double fraction = 0.99) {
  if (map.classified_fraction() >= fraction || !map.any_candidate()) return Termination::done;
  if (epochs_completed >= max_epochs) return Termination::epoch_cap;
  return Termination::proceed;
}

}  // namespace mfgp
