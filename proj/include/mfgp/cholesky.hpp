#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "types.hpp"

namespace mfgp {

/// Lower Cholesky factor of a symmetric positive-definite matrix that can grow by
/// one row/column at a time (bordering). Storage is over-allocated so appends are
/// amortized O(n^2).
class GrowingCholesky {
 public:
  /// A pivot d^2 <= pivot_floor * diag is treated as a breakdown.
  static constexpr double pivot_floor = 1e-12;

  GrowingCholesky() = default;

  Eigen::Index size() const { return size_; }

  /// Leading k x k block of the factor (the factor of the first k rows).
  auto lower(Eigen::Index k) const { return storage_.topLeftCorner(k, k).triangularView<Eigen::Lower>(); }

  auto lower() const { return lower(size_); }

  double pivot(Eigen::Index i) const { return storage_(i, i); }

  /// Full factorization of a. Throws NumericalFailure when a is not numerically
  /// positive definite.
  void factorize(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    reserve(n);
    size_ = 0;
    if (n == 0) return;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    bool ok = llt.info() == Eigen::Success;
    const Eigen::MatrixXd& packed = llt.matrixLLT();
    for (Eigen::Index i = 0; ok && i < n; ++i) {
      ok = packed(i, i) * packed(i, i) > pivot_floor * a(i, i);
    }
    if (!ok) {
      throw NumericalFailure("covariance of " + std::to_string(n) + " samples is not positive definite", 0.0);
    }
    storage_.topLeftCorner(n, n).triangularView<Eigen::Lower>() = packed.triangularView<Eigen::Lower>();
    size_ = n;
  }

  /// Solves L x = b for the current factor.
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = b;
    if (size_ > 0) lower().solveInPlace(x);
    return x;
  }

  /// Squared pivot that appending (cross, diag) would produce, together with the
  /// new factor row; no state changes.
  struct Border {
    Eigen::VectorXd row;
    double pivot_squared = 0.0;
  };

  Border border(const Eigen::VectorXd& cross, double diag) const {
    Border b{solve_lower(cross), 0.0};
    b.pivot_squared = diag - b.row.squaredNorm();
    return b;
  }

  /// Appends a row given the covariance with existing rows and the new diagonal.
  /// Returns false (factor unchanged) on breakdown.
  bool append(const Border& b, double diag) {
    if (!(b.pivot_squared > pivot_floor * diag)) return false;
    reserve(size_ + 1);
    storage_.row(size_).head(size_) = b.row.transpose();
    storage_(size_, size_) = std::sqrt(b.pivot_squared);
    ++size_;
    return true;
  }

  bool append(const Eigen::VectorXd& cross, double diag) { return append(border(cross, diag), diag); }

  double log_determinant() const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < size_; ++i) acc += std::log(storage_(i, i));
    return 2.0 * acc;
  }

 private:
  void reserve(Eigen::Index n) {
    if (n <= storage_.rows()) return;
    Eigen::Index cap = std::max<Eigen::Index>(16, storage_.rows());
    while (cap < n) cap *= 2;
    Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(cap, cap);
    grown.topLeftCorner(size_, size_) = storage_.topLeftCorner(size_, size_);
    storage_ = std::move(grown);
  }

  Eigen::MatrixXd storage_;
  Eigen::Index size_ = 0;
};

}  // namespace mfgp
