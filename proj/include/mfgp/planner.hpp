#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "field_model.hpp"
#include "inference.hpp"
#include "types.hpp"

namespace mfgp {

/// Current sensing level. Only ever moves up.
struct FidelityState {
  Fidelity level = 1;

  friend bool operator==(const FidelityState&, const FidelityState&) = default;
};

/// Accessible-uncertainty level below which sampling moves from m to m + 1:
/// (l_{m+1}^2 / l_m^2) v_{m+1}^2. Undefined (infinite) at the top level.
inline double switch_threshold(const FidelityModel& model, Fidelity m) {
  if (m >= model.size()) return -std::numeric_limits<double>::infinity();
  const auto& cur = model.level(m);
  const auto& next = model.level(m + 1);
  return (next.length_scale * next.length_scale) / (cur.length_scale * cur.length_scale) * next.amplitude *
         next.amplitude;
}

/// Largest posterior variance minus the part that level m cannot reach.
inline double accessible_uncertainty(double max_variance, const FidelityModel& model, Fidelity m) {
  return max_variance - model.inaccessible_variance(m);
}

/// Advances the level while the accessible uncertainty is at or below the switch
/// threshold; several levels may be skipped in one call.
inline FidelityState update_fidelity(FidelityState state, double max_variance, const FidelityModel& model) {
  while (state.level < model.size() &&
         accessible_uncertainty(max_variance, model, state.level) <= switch_threshold(model, state.level)) {
    ++state.level;
  }
  return state;
}

inline FidelityState update_fidelity(FidelityState state, const PosteriorField& field,
                                     const std::vector<bool>& candidates = {}) {
  return update_fidelity(state, field.max_variance(candidates), field.model());
}

/// Most uncertain candidate cell, lowest index on ties. nullopt when no cell is a
/// candidate (planning is complete).
inline std::optional<CellIndex> select_next_point(const Eigen::VectorXd& variance,
                                                  const std::vector<bool>& candidates = {}) {
  std::optional<CellIndex> best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < variance.size(); ++c) {
    if (!candidates.empty() && !candidates[static_cast<std::size_t>(c)]) continue;
    if (!best || variance[c] > best_value) {
      best = static_cast<CellIndex>(c);
      best_value = variance[c];
    }
  }
  return best;
}

inline std::optional<CellIndex> select_next_point(const PosteriorField& field,
                                                  const std::vector<bool>& candidates = {}) {
  return select_next_point(field.variance(), candidates);
}

struct PlanLimits {
  double ratio = 0.75;            ///< target max-sigma reduction per epoch
  std::size_t sample_cap = 200;   ///< per-epoch sample budget
};

struct PlannedSample {
  CellIndex cell = 0;
  Fidelity fidelity = 1;
  double sigma_before = 0.0;  ///< predicted posterior std dev at the cell when chosen
};

struct EpochPlan {
  int epoch = 1;
  std::size_t samples_before = 0;
  std::vector<PlannedSample> samples;
  double max_sigma_before = 0.0;
  double max_sigma_after = 0.0;
  bool capped = false;  ///< sample cap reached before the ratio was met
  FidelityState final_state;

  double ratio() const { return max_sigma_before > 0.0 ? max_sigma_after / max_sigma_before : 0.0; }

  /// Distinct levels in the plan, ascending.
  std::vector<Fidelity> levels() const {
    std::vector<Fidelity> out;
    for (const auto& s : samples)
      if (out.empty() || out.back() != s.fidelity) out.push_back(s.fidelity);
    return out;
  }

  std::vector<CellIndex> cells_at(Fidelity m) const {
    std::vector<CellIndex> out;
    for (const auto& s : samples)
      if (s.fidelity == m) out.push_back(s.cell);
    return out;
  }
};

struct PlanOutcome {
  EpochPlan plan;
  PosteriorField predicted;  ///< variance after the whole plan; mean untouched
};

/// Greedy epoch plan: pick the most uncertain candidate, tag it with the current
/// level, simulate its variance effect, re-check the level, until the predicted
/// max sigma over the candidates falls to limits.ratio of its starting value or
/// the sample cap is reached.
inline PlanOutcome plan_epoch(PosteriorField field, FidelityState state, const std::vector<bool>& candidates,
                              const PlanLimits& limits, int epoch = 1) {
  if (!candidates.empty() && std::find(candidates.begin(), candidates.end(), true) == candidates.end()) {
    throw std::invalid_argument("plan_epoch needs at least one candidate cell");
  }
  if (limits.sample_cap == 0) throw std::invalid_argument("plan_epoch sample cap must be positive");
  const auto& model = field.model();

  EpochPlan plan;
  plan.epoch = epoch;
  plan.samples_before = field.size();
  const double start = field.max_variance(candidates);
  plan.max_sigma_before = std::sqrt(std::max(0.0, start));
  state = update_fidelity(state, start, model);

  double current = start;
  for (;;) {
    const auto cell = select_next_point(field, candidates);
    const double sigma = std::sqrt(std::max(0.0, field.variance()[static_cast<Eigen::Index>(*cell)]));
    plan.samples.push_back({*cell, state.level, sigma});
    field.append_hypothetical(*cell, state.level);
    current = field.max_variance(candidates);
    state = update_fidelity(state, current, model);
    if (std::sqrt(std::max(0.0, current)) <= limits.ratio * plan.max_sigma_before) break;
    if (plan.samples.size() >= limits.sample_cap) {
      plan.capped = true;
      break;
    }
  }
  plan.max_sigma_after = std::sqrt(std::max(0.0, current));
  plan.final_state = state;
  return {std::move(plan), std::move(field)};
}

}  // namespace mfgp
