#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mfgp {

/// Planar location on the search floor, in meters.
using Location = Eigen::Vector2d;

/// Row-major index of a grid cell.
using CellIndex = std::size_t;

/// Fidelity levels are 1-based: 1 is the highest altitude (coarsest), M the lowest.
using Fidelity = int;

/// Explicit random state. Every stochastic routine takes one by reference.
using Rng = std::mt19937_64;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// A covariance matrix could not be factorized even after the stated jitter.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double jitter)
      : std::runtime_error(what), jitter_(jitter) {}

  double jitter() const noexcept { return jitter_; }

 private:
  double jitter_;
};

}  // namespace mfgp
