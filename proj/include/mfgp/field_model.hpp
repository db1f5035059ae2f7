#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "types.hpp"

namespace mfgp {

// ---------------------------------------------------------------------------
// Search domain
// ---------------------------------------------------------------------------

/// Rectangular floor area discretized into resolution x resolution cells.
/// Cells are indexed row-major starting from (x_min, y_min).
struct GridDomain {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  std::size_t resolution = 1;

  /// Upper bound on the number of cells for which exact joint draws are attempted.
  static constexpr std::size_t max_joint_cells = 10000;

  std::size_t size() const { return resolution * resolution; }
  double cell_width() const { return (x_max - x_min) / static_cast<double>(resolution); }
  double cell_height() const { return (y_max - y_min) / static_cast<double>(resolution); }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }

  std::size_t row_of(CellIndex i) const { return i / resolution; }
  std::size_t col_of(CellIndex i) const { return i % resolution; }

  Location cell(CellIndex i) const {
    return {x_min + (static_cast<double>(col_of(i)) + 0.5) * cell_width(),
            y_min + (static_cast<double>(row_of(i)) + 0.5) * cell_height()};
  }

  /// Cell containing x; points outside the domain are clamped onto the border cells.
  CellIndex cell_of(const Location& x) const {
    auto clamp_index = [this](double t) {
      const auto max_index = static_cast<long>(resolution) - 1;
      return static_cast<std::size_t>(std::clamp(static_cast<long>(std::floor(t)), 0L, max_index));
    };
    const std::size_t col = clamp_index((x.x() - x_min) / cell_width());
    const std::size_t row = clamp_index((x.y() - y_min) / cell_height());
    return row * resolution + col;
  }

  bool contains(const Location& x) const {
    return x.x() >= x_min && x.x() <= x_max && x.y() >= y_min && x.y() <= y_max;
  }

  void validate() const {
    if (!(x_max > x_min)) throw std::invalid_argument("grid: x_max must exceed x_min");
    if (!(y_max > y_min)) throw std::invalid_argument("grid: y_max must exceed y_min");
    if (resolution == 0) throw std::invalid_argument("grid: resolution must be positive");
  }
};

// ---------------------------------------------------------------------------
// Multi-fidelity prior
// ---------------------------------------------------------------------------

/// Hyperparameters of one bias layer h^m and of sensing at its altitude.
struct FidelityLevel {
  double mean = 0.0;          ///< prior mean of the bias term
  double amplitude = 1.0;     ///< kernel amplitude v_m (score units)
  double length_scale = 1.0;  ///< kernel length scale l_m (meters)
  double noise_sd = 0.1;      ///< observation noise s_m (score units)
  double altitude = 1.0;      ///< sensing altitude z_m (meters)
};

/// Autoregressive stack f^m = f^{m-1} + h^m with independent squared-exponential
/// bias layers. levels[0] is fidelity 1.
struct FidelityModel {
  std::vector<FidelityLevel> levels;

  int size() const { return static_cast<int>(levels.size()); }

  const FidelityLevel& level(Fidelity m) const {
    if (m < 1 || m > size()) {
      throw std::invalid_argument("fidelity index " + std::to_string(m) + " outside [1, " +
                                  std::to_string(size()) + "]");
    }
    return levels[static_cast<std::size_t>(m - 1)];
  }

  /// Sum of bias means up to and including level m.
  double mean_through(Fidelity m) const {
    double total = 0.0;
    for (Fidelity i = 1; i <= m; ++i) total += level(i).mean;
    return total;
  }

  /// Prior variance of f^m at any point: sum of v_i^2 for i <= m.
  double variance_through(Fidelity m) const {
    double total = 0.0;
    for (Fidelity i = 1; i <= m; ++i) total += level(i).amplitude * level(i).amplitude;
    return total;
  }

  double prior_mean() const { return mean_through(size()); }
  double prior_variance() const { return variance_through(size()); }

  /// Variance of f contributed by levels above m, unreachable when sampling f^m.
  double inaccessible_variance(Fidelity m) const {
    double total = 0.0;
    for (Fidelity i = m + 1; i <= size(); ++i) total += level(i).amplitude * level(i).amplitude;
    return total;
  }
};

/// Lists every violated ordering/positivity constraint; empty when the model is admissible.
inline std::vector<std::string> model_violations(const FidelityModel& model) {
  std::vector<std::string> out;
  if (model.levels.empty()) {
    out.emplace_back("model.levels must be at least 1");
    return out;
  }
  auto fmt = [](const char* name, Fidelity a, double va, Fidelity b, double vb) {
    std::ostringstream os;
    os << "model." << name << '_' << b << " = " << vb << " must be below model." << name << '_' << a << " = " << va
       << " (strictly decreasing in fidelity)";
    return os.str();
  };
  for (Fidelity m = 1; m <= model.size(); ++m) {
    const auto& lv = model.level(m);
    if (!(lv.amplitude > 0.0))
      out.push_back("model.v_" + std::to_string(m) + " must be positive");
    if (!(lv.length_scale > 0.0))
      out.push_back("model.l_" + std::to_string(m) + " must be positive");
    if (!(lv.noise_sd > 0.0))
      out.push_back("model.s_" + std::to_string(m) + " must be positive");
    if (!(lv.altitude > 0.0))
      out.push_back("model.z_" + std::to_string(m) + " must be positive");
    if (!std::isfinite(lv.mean)) out.push_back("model.mu_" + std::to_string(m) + " must be finite");
    if (m > 1) {
      const auto& prev = model.level(m - 1);
      if (!(prev.amplitude > lv.amplitude)) out.push_back(fmt("v", m - 1, prev.amplitude, m, lv.amplitude));
      if (!(prev.length_scale > lv.length_scale))
        out.push_back(fmt("l", m - 1, prev.length_scale, m, lv.length_scale));
      if (!(prev.altitude > lv.altitude)) out.push_back(fmt("z", m - 1, prev.altitude, m, lv.altitude));
    }
  }
  return out;
}

inline void validate_model(const FidelityModel& model) {
  const auto problems = model_violations(model);
  if (!problems.empty()) throw std::invalid_argument(problems.front());
}

/// Squared-exponential kernel of bias layer m.
inline double kernel_eval(Fidelity m, const Location& x, const Location& xp, const FidelityModel& model) {
  const auto& lv = model.level(m);
  const double r2 = (x - xp).squaredNorm();
  return lv.amplitude * lv.amplitude * std::exp(-r2 / (2.0 * lv.length_scale * lv.length_scale));
}

/// Covariance of f^m(x) with f^{m'}(x') for m = min(m, m'): sum of the first m kernels.
inline double stacked_kernel(Fidelity m, const Location& x, const Location& xp, const FidelityModel& model) {
  double total = 0.0;
  for (Fidelity i = 1; i <= m; ++i) total += kernel_eval(i, x, xp, model);
  return total;
}

struct PriorMoments {
  double mean = 0.0;
  double covariance = 0.0;
};

/// Prior mean and covariance of the top-fidelity score f = f^M.
inline PriorMoments prior_moments(const Location& x, const Location& xp, const FidelityModel& model) {
  return {model.prior_mean(), stacked_kernel(model.size(), x, xp, model)};
}

// ---------------------------------------------------------------------------
// Synthetic ground truth
// ---------------------------------------------------------------------------

enum class GroundTruthMode { prior_draw, planted };

struct PlantedTarget {
  Location center = Location::Zero();
  double amplitude = 1.0;
  double radius = 1.0;
};

/// Radial-bump scene. Explicit targets are used as given; random_targets more are
/// placed at distinct cell centers drawn from the seed.
struct PlantedConfig {
  std::vector<PlantedTarget> targets;
  std::size_t random_targets = 0;
  double amplitude = 1.0;
  double radius = 1.0;
  double min_separation = 3.0;  ///< in units of radius, for random placement
  double background = 0.0;
  double blur_factor = 0.5;  ///< blur std dev of f^m is blur_factor * l_m for m < M
};

/// Per-fidelity score layers over the grid. layers[m-1] holds f^m, bias[m-1] holds h^m.
struct GroundTruth {
  GridDomain domain;
  std::vector<Eigen::VectorXd> layers;
  std::vector<Eigen::VectorXd> bias;
  std::vector<PlantedTarget> planted;

  int levels() const { return static_cast<int>(layers.size()); }
  const Eigen::VectorXd& field() const { return layers.back(); }
  const Eigen::VectorXd& layer(Fidelity m) const { return layers.at(static_cast<std::size_t>(m - 1)); }

  std::vector<bool> target_mask(double threshold) const {
    std::vector<bool> mask(static_cast<std::size_t>(field().size()));
    for (Eigen::Index i = 0; i < field().size(); ++i) mask[static_cast<std::size_t>(i)] = field()[i] >= threshold;
    return mask;
  }

  /// Cells that contain a planted bump center.
  std::vector<CellIndex> planted_cells() const {
    std::vector<CellIndex> out;
    for (const auto& t : planted) out.push_back(domain.cell_of(t.center));
    return out;
  }
};

namespace detail {

inline Eigen::MatrixXd level_gram(const GridDomain& domain, const FidelityModel& model, Fidelity m) {
  const auto n = static_cast<Eigen::Index>(domain.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Location xi = domain.cell(static_cast<CellIndex>(i));
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double k = kernel_eval(m, xi, domain.cell(static_cast<CellIndex>(j)), model);
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }
  return gram;
}

/// f^m = f^{m-1} + h^m is stored with h^m recomputed from the rounded layers so that
/// the difference of stored layers reproduces the stored bias exactly.
inline void finalize_bias(GroundTruth& truth) {
  truth.bias.resize(truth.layers.size());
  for (std::size_t m = 0; m < truth.layers.size(); ++m) {
    truth.bias[m] = m == 0 ? truth.layers[0] : Eigen::VectorXd(truth.layers[m] - truth.layers[m - 1]);
  }
}

inline Eigen::VectorXd gaussian_blur(const GridDomain& domain, const Eigen::VectorXd& field, double sd) {
  if (!(sd > 0.0)) return field;
  const auto n = static_cast<Eigen::Index>(domain.size());
  Eigen::VectorXd out(n);
  const double inv = 1.0 / (2.0 * sd * sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Location xi = domain.cell(static_cast<CellIndex>(i));
    double acc = 0.0;
    double wsum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = std::exp(-(xi - domain.cell(static_cast<CellIndex>(j))).squaredNorm() * inv);
      acc += w * field[j];
      wsum += w;
    }
    out[i] = acc / wsum;
  }
  return out;
}

inline std::vector<PlantedTarget> place_targets(const GridDomain& domain, const PlantedConfig& cfg, Rng& rng) {
  std::vector<PlantedTarget> targets = cfg.targets;
  std::uniform_int_distribution<std::size_t> pick(0, domain.size() - 1);
  const double min_dist = cfg.min_separation * cfg.radius;
  std::size_t placed = 0;
  for (int attempt = 0; placed < cfg.random_targets; ++attempt) {
    const Location c = domain.cell(pick(rng));
    const bool crowded = attempt < 10000 && std::any_of(targets.begin(), targets.end(), [&](const auto& t) {
                           return (t.center - c).norm() < min_dist;
                         });
    if (crowded) continue;
    targets.push_back({c, cfg.amplitude, cfg.radius});
    ++placed;
  }
  return targets;
}

}  // namespace detail

/// Exact joint draws of the prior stack over the grid. The per-level Cholesky
/// factors are computed once so that many seeds can be drawn cheaply.
class GroundTruthSampler {
 public:
  /// Relative diagonal jitter applied before each factorization.
  static constexpr double jitter_scale = 1e-10;

  GroundTruthSampler(GridDomain domain, FidelityModel model)
      : domain_(std::move(domain)), model_(std::move(model)) {
    domain_.validate();
    if (model_.levels.empty()) throw std::invalid_argument("model must have at least one level");
    if (domain_.size() > GridDomain::max_joint_cells) {
      throw std::invalid_argument("grid has " + std::to_string(domain_.size()) +
                                  " cells; exact prior draws are limited to " +
                                  std::to_string(GridDomain::max_joint_cells));
    }
    for (Fidelity m = 1; m <= model_.size(); ++m) {
      Eigen::MatrixXd gram = detail::level_gram(domain_, model_, m);
      const double jitter = jitter_scale * gram.diagonal().maxCoeff();
      gram.diagonal().array() += jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(gram);
      if (llt.info() != Eigen::Success) {
        throw NumericalFailure("prior covariance of level " + std::to_string(m) +
                                   " is not positive definite after jitter",
                               jitter);
      }
      factors_.emplace_back(llt.matrixL());
    }
  }

  const GridDomain& domain() const { return domain_; }
  const FidelityModel& model() const { return model_; }

  GroundTruth draw(Rng& rng) const {
    GroundTruth truth;
    truth.domain = domain_;
    const auto n = static_cast<Eigen::Index>(domain_.size());
    std::normal_distribution<double> normal;
    Eigen::VectorXd accumulated = Eigen::VectorXd::Zero(n);
    for (Fidelity m = 1; m <= model_.size(); ++m) {
      Eigen::VectorXd z(n);
      for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
      const auto& L = factors_[static_cast<std::size_t>(m - 1)];
      Eigen::VectorXd h = L.triangularView<Eigen::Lower>() * z;
      h.array() += model_.level(m).mean;
      accumulated += h;
      truth.layers.push_back(accumulated);
    }
    detail::finalize_bias(truth);
    return truth;
  }

 private:
  GridDomain domain_;
  FidelityModel model_;
  std::vector<Eigen::MatrixXd> factors_;
};

inline GroundTruth planted_ground_truth(const GridDomain& domain, const FidelityModel& model,
                                        const PlantedConfig& cfg, Rng& rng) {
  domain.validate();
  GroundTruth truth;
  truth.domain = domain;
  truth.planted = detail::place_targets(domain, cfg, rng);
  const auto n = static_cast<Eigen::Index>(domain.size());
  Eigen::VectorXd top = Eigen::VectorXd::Constant(n, cfg.background);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Location x = domain.cell(static_cast<CellIndex>(i));
    for (const auto& t : truth.planted) {
      top[i] += t.amplitude * std::exp(-(x - t.center).squaredNorm() / (2.0 * t.radius * t.radius));
    }
  }
  truth.layers.resize(static_cast<std::size_t>(model.size()));
  truth.layers.back() = top;
  for (Fidelity m = 1; m < model.size(); ++m) {
    truth.layers[static_cast<std::size_t>(m - 1)] =
        detail::gaussian_blur(domain, top, cfg.blur_factor * model.level(m).length_scale);
  }
  detail::finalize_bias(truth);
  return truth;
}

/// Deterministic synthetic scene for a given seed.
inline GroundTruth sample_ground_truth(const GridDomain& domain, const FidelityModel& model, std::uint64_t seed,
                                       GroundTruthMode mode, const PlantedConfig& planted = {}) {
  Rng rng(seed);
  if (mode == GroundTruthMode::planted) return planted_ground_truth(domain, model, planted, rng);
  return GroundTruthSampler(domain, model).draw(rng);
}

/// Noisy score y = f^m(x) + eps, eps ~ N(0, s_m^2), taken at a cell center.
inline double measure(const GroundTruth& truth, const FidelityModel& model, CellIndex cell, Fidelity m, Rng& rng) {
  const double clean = truth.layer(m)[static_cast<Eigen::Index>(cell)];
  std::normal_distribution<double> normal;
  return clean + model.level(m).noise_sd * normal(rng);
}

}  // namespace mfgp
