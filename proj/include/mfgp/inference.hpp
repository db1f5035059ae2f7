#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cholesky.hpp"
#include "field_model.hpp"
#include "types.hpp"

namespace mfgp {

struct SampleRecord {
  CellIndex cell = 0;
  Fidelity fidelity = 1;
  double value = 0.0;
};

/// Ordered location-score-fidelity tuples. Fidelity is non-decreasing in log order,
/// so the log order is also the block order of the joint covariance.
class SampleLog {
 public:
  SampleLog() = default;

  void append(const SampleRecord& r) {
    if (!records_.empty() && r.fidelity < records_.back().fidelity) {
      throw std::invalid_argument("sample log fidelity must be non-decreasing (got " + std::to_string(r.fidelity) +
                                  " after " + std::to_string(records_.back().fidelity) + ")");
    }
    records_.push_back(r);
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<SampleRecord>& records() const { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  /// Positions of records taken at fidelity m (the set P_n^m).
  std::vector<std::size_t> indices_at(Fidelity m) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].fidelity == m) out.push_back(i);
    return out;
  }

 private:
  std::vector<SampleRecord> records_;
};

namespace detail {

inline void check_record(const SampleRecord& r, const GridDomain& domain, const FidelityModel& model) {
  if (r.cell >= domain.size()) throw std::invalid_argument("sample cell " + std::to_string(r.cell) + " outside grid");
  (void)model.level(r.fidelity);
}

/// Cov(y_a, y_b) without the noise term.
inline double record_covariance(const SampleRecord& a, const SampleRecord& b, const GridDomain& domain,
                                const FidelityModel& model) {
  return stacked_kernel(std::min(a.fidelity, b.fidelity), domain.cell(a.cell), domain.cell(b.cell), model);
}

inline double noise_variance(const FidelityModel& model, Fidelity m) {
  const double s = model.level(m).noise_sd;
  return s * s;
}

}  // namespace detail

/// Cov(y_j, f(x)) for every record j: the first m_j kernels evaluated at (x_j, x).
inline Eigen::VectorXd cross_covariance(const Location& x, const SampleLog& log, const GridDomain& domain,
                                        const FidelityModel& model) {
  Eigen::VectorXd k(static_cast<Eigen::Index>(log.size()));
  for (std::size_t j = 0; j < log.size(); ++j) {
    k[static_cast<Eigen::Index>(j)] = stacked_kernel(log[j].fidelity, domain.cell(log[j].cell), x, model);
  }
  return k;
}

/// Prior second-order structure of the observation vector.
struct JointCovariance {
  Eigen::MatrixXd kernel;      ///< K, without noise
  Eigen::VectorXd noise;       ///< diagonal of Theta
  Eigen::VectorXd prior_mean;  ///< nu
  Eigen::VectorXd values;      ///< y

  Eigen::MatrixXd total() const {
    Eigen::MatrixXd a = kernel;
    a.diagonal() += noise;
    return a;
  }
};

inline JointCovariance joint_covariance(const SampleLog& log, const GridDomain& domain, const FidelityModel& model) {
  const auto n = static_cast<Eigen::Index>(log.size());
  JointCovariance jc{Eigen::MatrixXd(n, n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ri = log[static_cast<std::size_t>(i)];
    detail::check_record(ri, domain, model);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double k = detail::record_covariance(ri, log[static_cast<std::size_t>(j)], domain, model);
      jc.kernel(i, j) = k;
      jc.kernel(j, i) = k;
    }
    jc.noise[i] = detail::noise_variance(model, ri.fidelity);
    jc.prior_mean[i] = model.mean_through(ri.fidelity);
    jc.values[i] = ri.value;
  }
  return jc;
}

/// Posterior mean and variance of f over every grid cell, plus the factorization
/// needed to add further (hypothetical) samples cheaply.
///
/// The mean reflects only the records that carried observed values; records added
/// through append_sample_variance_only change the variance alone.
class PosteriorField {
 public:
  /// Negative variances down to this are rounding and are clamped to zero.
  static constexpr double negative_variance_tolerance = 1e-8;

  const GridDomain& domain() const { return domain_; }
  const FidelityModel& model() const { return model_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& variance() const { return variance_; }
  const std::vector<SampleRecord>& records() const { return records_; }
  std::size_t observed() const { return observed_; }
  std::size_t size() const { return records_.size(); }

  /// Largest variance over cells with mask[c] set, or over all cells when mask is empty.
  double max_variance(const std::vector<bool>& mask = {}) const {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < variance_.size(); ++c) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(c)]) continue;
      best = std::max(best, variance_[c]);
    }
    return best;
  }

  /// Adds a sample at (cell, m) whose value is not yet known. Bordered Cholesky
  /// update; falls back to a full refactorization if the new pivot breaks down.
  void append_hypothetical(CellIndex cell, Fidelity m) { append_record({cell, m, 0.0}, false); }

  /// Adds a measured sample, updating mean and variance. Only valid while no
  /// hypothetical samples are pending.
  void append_observation(const SampleRecord& rec) {
    if (observed_ != records_.size()) {
      throw std::logic_error("append_observation after hypothetical samples");
    }
    append_record(rec, true);
  }

 private:
  void append_record(const SampleRecord& rec, bool observed) {
    detail::check_record(rec, domain_, model_);
    const auto n = static_cast<Eigen::Index>(records_.size());
    Eigen::VectorXd cross(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      cross[j] = detail::record_covariance(records_[static_cast<std::size_t>(j)], rec, domain_, model_);
    }
    const double diag = model_.variance_through(rec.fidelity) + detail::noise_variance(model_, rec.fidelity);
    const auto b = factor_.border(cross, diag);
    records_.push_back(rec);
    if (observed) ++observed_;
    if (!factor_.append(b, diag)) {
      refactor();
      return;
    }
    const Eigen::VectorXd to_cells = cell_covariance(rec);
    reserve_rows(n + 1, n);
    Eigen::VectorXd row = to_cells;
    if (n > 0) row.noalias() -= projected_.topRows(n).transpose() * b.row;
    row /= factor_.pivot(n);
    projected_.row(n) = row.transpose();
    variance_ -= row.cwiseAbs2();
    clamp_variance();
    if (observed) {
      const double residual = rec.value - model_.mean_through(rec.fidelity);
      const double w = (residual - b.row.dot(weights_)) / factor_.pivot(n);
      weights_.conservativeResize(n + 1);
      weights_[n] = w;
      mean_ += w * row;
    }
  }

  // Rebuilds factor, projections, variance and mean from records_; the first
  // observed_ records carry values.
  void refactor() {
    const auto n = static_cast<Eigen::Index>(records_.size());
    const auto cells = static_cast<Eigen::Index>(domain_.size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& ri = records_[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double k = detail::record_covariance(ri, records_[static_cast<std::size_t>(j)], domain_, model_);
        a(i, j) = k;
        a(j, i) = k;
      }
      a(i, i) += detail::noise_variance(model_, ri.fidelity);
    }
    factor_.factorize(a);

    Eigen::MatrixXd kx(n, cells);
    for (Eigen::Index i = 0; i < n; ++i) kx.row(i) = cell_covariance(records_[static_cast<std::size_t>(i)]).transpose();
    if (n > 0) factor_.lower().solveInPlace(kx);

    projected_.resize(0, cells);
    reserve_rows(n, 0);
    projected_.topRows(n) = kx;

    variance_ = Eigen::VectorXd::Constant(cells, model_.prior_variance());
    for (Eigen::Index c = 0; c < cells; ++c) variance_[c] -= kx.col(c).squaredNorm();
    clamp_variance();

    const auto nobs = static_cast<Eigen::Index>(observed_);
    Eigen::VectorXd residual(nobs);
    for (Eigen::Index i = 0; i < nobs; ++i) {
      const auto& r = records_[static_cast<std::size_t>(i)];
      residual[i] = r.value - model_.mean_through(r.fidelity);
    }
    if (nobs > 0) factor_.lower(nobs).solveInPlace(residual);
    mean_ = Eigen::VectorXd::Constant(cells, model_.prior_mean());
    if (nobs > 0) mean_.noalias() += kx.topRows(nobs).transpose() * residual;
    weights_ = residual;
  }

  friend PosteriorField posterior(const SampleLog&, const GridDomain&, const FidelityModel&);

  Eigen::VectorXd cell_covariance(const SampleRecord& r) const {
    const auto cells = static_cast<Eigen::Index>(domain_.size());
    const Location xr = domain_.cell(r.cell);
    Eigen::VectorXd k(cells);
    for (Eigen::Index c = 0; c < cells; ++c) k[c] = stacked_kernel(r.fidelity, xr, domain_.cell(static_cast<CellIndex>(c)), model_);
    return k;
  }

  // Grows storage to hold `rows` rows, preserving the first `keep`.
  void reserve_rows(Eigen::Index rows, Eigen::Index keep) {
    if (rows <= projected_.rows()) return;
    Eigen::Index cap = std::max<Eigen::Index>(16, projected_.rows());
    while (cap < rows) cap *= 2;
    RowMatrix grown(cap, static_cast<Eigen::Index>(domain_.size()));
    grown.topRows(keep) = projected_.topRows(keep);
    projected_ = std::move(grown);
  }

  void clamp_variance() {
    for (Eigen::Index c = 0; c < variance_.size(); ++c) {
      if (variance_[c] >= 0.0) continue;
      if (variance_[c] < -negative_variance_tolerance) {
        throw NumericalFailure("posterior variance " + std::to_string(variance_[c]) + " below tolerance", 0.0);
      }
      variance_[c] = 0.0;
    }
  }

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  GridDomain domain_;
  FidelityModel model_;
  std::vector<SampleRecord> records_;
  std::size_t observed_ = 0;
  GrowingCholesky factor_;
  RowMatrix projected_;  // row j: L^{-1} applied to the record/cell cross-covariances
  Eigen::VectorXd weights_;  // L^{-1} (y - nu) over the observed records
  Eigen::VectorXd mean_;
  Eigen::VectorXd variance_;
};

/// Exact posterior of f given the log: one factorization of K + Theta and
/// triangular solves against the cross-covariances of every cell.
inline PosteriorField posterior(const SampleLog& log, const GridDomain& domain, const FidelityModel& model) {
  domain.validate();
  if (model.levels.empty()) throw std::invalid_argument("model must have at least one level");
  PosteriorField field;
  field.domain_ = domain;
  field.model_ = model;
  for (const auto& r : log) detail::check_record(r, domain, model);
  field.records_ = log.records();
  field.observed_ = log.size();
  field.refactor();
  return field;
}

/// Snapshot with one more (value-free) sample; the variance grid equals that of a
/// full recomputation with the extended log.
inline PosteriorField append_sample_variance_only(PosteriorField state, CellIndex cell, Fidelity m) {
  state.append_hypothetical(cell, m);
  return state;
}

/// Greedy (chain-rule) information gain of the log, in nats: the sum over records
/// of 1/2 log(1 + var_{i-1} / s_{m_i}^2), where var_{i-1} is the posterior variance,
/// given the earlier records, of the latent level f^{m_i}(x_i) actually observed.
inline double greedy_info_gain(const SampleLog& log, const GridDomain& domain, const FidelityModel& model) {
  GrowingCholesky factor;
  double total = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& ri = log[i];
    detail::check_record(ri, domain, model);
    Eigen::VectorXd cross(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < i; ++j) cross[static_cast<Eigen::Index>(j)] = detail::record_covariance(log[j], ri, domain, model);
    const double s2 = detail::noise_variance(model, ri.fidelity);
    const double latent = model.variance_through(ri.fidelity);
    const auto b = factor.border(cross, latent + s2);
    const double prior_before = std::max(0.0, b.pivot_squared - s2);
    total += 0.5 * std::log1p(prior_before / s2);
    if (!factor.append(b, latent + s2)) {
      throw NumericalFailure("sample covariance breakdown at record " + std::to_string(i), 0.0);
    }
  }
  return total;
}

/// Log marginal likelihood of the observed values under the current hyperparameters.
inline double log_marginal_likelihood(const SampleLog& log, const GridDomain& domain, const FidelityModel& model) {
  const JointCovariance jc = joint_covariance(log, domain, model);
  GrowingCholesky factor;
  factor.factorize(jc.total());
  const Eigen::VectorXd w = factor.solve_lower(jc.values - jc.prior_mean);
  const auto n = static_cast<double>(log.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * factor.log_determinant() - 0.5 * w.squaredNorm();
}

/// Per-record diagnostics in log order.
struct SampleDiagnostic {
  std::size_t index = 0;       ///< 1-based position in the log
  CellIndex cell = 0;
  Fidelity fidelity = 1;
  double value = 0.0;
  double variance_before = 0.0;  ///< posterior variance of f at the cell before this record
  double info_gain = 0.0;        ///< chain-rule increment contributed by this record
};

inline std::vector<SampleDiagnostic> sample_diagnostics(const SampleLog& log, const GridDomain& domain,
                                                        const FidelityModel& model) {
  std::vector<SampleDiagnostic> out;
  out.reserve(log.size());
  GrowingCholesky factor;
  const Fidelity top = model.size();
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& ri = log[i];
    detail::check_record(ri, domain, model);
    const auto n = static_cast<Eigen::Index>(i);
    Eigen::VectorXd cross(n);
    Eigen::VectorXd to_field(n);
    const Location xi = domain.cell(ri.cell);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& rj = log[static_cast<std::size_t>(j)];
      cross[j] = detail::record_covariance(rj, ri, domain, model);
      to_field[j] = stacked_kernel(std::min(rj.fidelity, top), domain.cell(rj.cell), xi, model);
    }
    const double s2 = detail::noise_variance(model, ri.fidelity);
    const double diag = model.variance_through(ri.fidelity) + s2;
    const auto b = factor.border(cross, diag);
    SampleDiagnostic d;
    d.index = i + 1;
    d.cell = ri.cell;
    d.fidelity = ri.fidelity;
    d.value = ri.value;
    d.variance_before = std::max(0.0, model.prior_variance() - factor.solve_lower(to_field).squaredNorm());
    d.info_gain = 0.5 * std::log1p(std::max(0.0, b.pivot_squared - s2) / s2);
    out.push_back(d);
    if (!factor.append(b, diag)) {
      throw NumericalFailure("sample covariance breakdown at record " + std::to_string(i), 0.0);
    }
  }
  return out;
}

}  // namespace mfgp
