#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "field_model.hpp"
#include "inference.hpp"
#include "planner.hpp"
#include "types.hpp"

namespace mfgp {

/// Open path from a fixed start through every point once.
struct Tour {
  Point3 start;
  std::vector<Point3> waypoints;
  std::vector<std::size_t> order;  ///< order[k] = index into the input points of the k-th waypoint
  double length = 0.0;
};

namespace detail {

inline double path_length(const Point3& start, const std::vector<Point3>& pts, const std::vector<std::size_t>& order) {
  double total = 0.0;
  const Point3* prev = &start;
  for (const auto i : order) {
    total += distance(*prev, pts[i]);
    prev = &pts[i];
  }
  return total;
}

inline std::vector<std::size_t> nearest_neighbor_order(const Point3& start, const std::vector<Point3>& pts) {
  std::vector<std::size_t> order;
  std::vector<bool> used(pts.size(), false);
  Point3 cur = start;
  for (std::size_t step = 0; step < pts.size(); ++step) {
    std::size_t best = pts.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (used[i]) continue;
      const double d = distance(cur, pts[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    used[best] = true;
    order.push_back(best);
    cur = pts[best];
  }
  return order;
}

/// First-improvement 2-opt on an open path with a fixed start. Reversing
/// positions [i, k] replaces edges (i-1, i) and (k, k+1); the latter is absent
/// when k is the last position.
inline void two_opt(const Point3& start, const std::vector<Point3>& pts, std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  if (n < 2) return;
  auto at = [&](std::size_t pos) -> const Point3& { return pos == 0 ? start : pts[order[pos - 1]]; };
  // Positions are 1-based along the path; position 0 is the start.
  constexpr double min_gain = 1e-12;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 1; i < n && !improved; ++i) {
      for (std::size_t k = i + 1; k <= n && !improved; ++k) {
        const double removed = distance(at(i - 1), at(i)) + (k < n ? distance(at(k), at(k + 1)) : 0.0);
        const double added = distance(at(i - 1), at(k)) + (k < n ? distance(at(i), at(k + 1)) : 0.0);
        if (added < removed - min_gain) {
          std::reverse(order.begin() + static_cast<std::ptrdiff_t>(i - 1), order.begin() + static_cast<std::ptrdiff_t>(k));
          improved = true;
        }
      }
    }
  }
}

/// Moves one segment of up to three waypoints (either direction) to the first
/// position that shortens the path. Returns false when no move helps.
inline bool relocate_segment(const Point3& start, const std::vector<Point3>& pts, std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  auto at = [&](std::size_t pos) -> const Point3& { return pos == 0 ? start : pts[order[pos - 1]]; };
  auto edge = [&](std::size_t a, std::size_t b) { return b > n ? 0.0 : distance(at(a), at(b)); };
  constexpr double min_gain = 1e-12;
  for (std::size_t len = 1; len <= 3 && len < n; ++len) {
    for (std::size_t i = 1; i + len - 1 <= n; ++i) {
      const std::size_t j = i + len - 1;
      const double cut = edge(i - 1, i) + edge(j, j + 1) - edge(i - 1, j + 1);
      for (std::size_t p = 0; p <= n; ++p) {
        if (p + 1 >= i && p <= j) continue;
        const double open = edge(p, p + 1);
        const double forward = distance(at(p), at(i)) + edge(j, p + 1) - open;
        const double backward = distance(at(p), at(j)) + edge(i, p + 1) - open;
        const bool reversed = backward < forward;
        if (std::min(forward, backward) >= cut - min_gain) continue;
        std::vector<std::size_t> segment(order.begin() + static_cast<std::ptrdiff_t>(i - 1),
                                         order.begin() + static_cast<std::ptrdiff_t>(j));
        if (reversed) std::reverse(segment.begin(), segment.end());
        std::vector<std::size_t> next;
        next.reserve(n);
        for (std::size_t q = 0; q <= n; ++q) {
          if (q >= 1 && (q < i || q > j)) next.push_back(order[q - 1]);
          if (q == p) next.insert(next.end(), segment.begin(), segment.end());
        }
        order = std::move(next);
        return true;
      }
    }
  }
  return false;
}


}  // namespace detail

/// Nearest-neighbor tour from start, improved by 2-opt until no swap helps.
/// Segment relocation runs between 2-opt passes; the result is 2-opt optimal.
inline Tour build_tour(std::span<const Location> points, double altitude, const Point3& start,
                       bool improve = true) {
  if (points.empty()) throw std::invalid_argument("build_tour needs at least one point");
  std::vector<Point3> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.push_back({p.x(), p.y(), altitude});
  Tour tour;
  tour.start = start;
  tour.order = detail::nearest_neighbor_order(start, pts);
  if (improve) {
    do {
      detail::two_opt(start, pts, tour.order);
    } while (detail::relocate_segment(start, pts, tour.order));
  }
  for (const auto i : tour.order) tour.waypoints.push_back(pts[i]);
  tour.length = detail::path_length(start, pts, tour.order);
  return tour;
}

/// Mission time at unit speed: travel distance plus a fixed time per sample.
struct Clock {
  double sample_time = 1.0;
  double now = 0.0;
  double travelled = 0.0;
  std::size_t samples = 0;

  void travel(double d) {
    travelled += d;
    now += d;
  }
  void sample() {
    ++samples;
    now += sample_time;
  }
};

/// One tour per level present in a plan, lowest level first.
struct FidelityTour {
  Fidelity fidelity = 1;
  std::vector<CellIndex> cells;  ///< plan cells in input order
  Tour tour;
};

/// Tours for an epoch starting at the vehicle position. Each group starts
/// directly above/below the previous endpoint after a vertical move to z_m.
inline std::vector<FidelityTour> build_epoch_tours(const EpochPlan& plan, const GridDomain& domain,
                                                   const FidelityModel& model, Point3 vehicle) {
  std::vector<FidelityTour> tours;
  for (const Fidelity m : plan.levels()) {
    FidelityTour ft;
    ft.fidelity = m;
    ft.cells = plan.cells_at(m);
    std::vector<Location> pts;
    for (const auto c : ft.cells) pts.push_back(domain.cell(c));
    const double z = model.level(m).altitude;
    vehicle.z = z;
    ft.tour = build_tour(pts, z, vehicle);
    vehicle = ft.tour.waypoints.back();
    tours.push_back(std::move(ft));
  }
  return tours;
}

/// A visited sampling point with the clock reading after its measurement.
struct Waypoint {
  int epoch = 0;
  std::size_t order = 0;
  Fidelity fidelity = 1;
  CellIndex cell = 0;
  Point3 position;
  double time = 0.0;
};

/// Flies the tours in order, measuring once per waypoint. Altitude changes are
/// charged as vertical travel at the current (x, y).
inline std::vector<Waypoint> execute_epoch(const EpochPlan& plan, const std::vector<FidelityTour>& tours,
                                           const GroundTruth& truth, const FidelityModel& model, Point3& vehicle,
                                           Clock& clock, Rng& rng, SampleLog& log) {
  std::size_t planned = 0;
  for (const auto& ft : tours) planned += ft.cells.size();
  if (planned != plan.samples.size()) throw std::invalid_argument("tours do not cover the epoch plan");

  std::vector<Waypoint> visited;
  for (const auto& ft : tours) {
    const double z = model.level(ft.fidelity).altitude;
    if (vehicle.z != z) {
      clock.travel(std::abs(vehicle.z - z));
      vehicle.z = z;
    }
    for (std::size_t k = 0; k < ft.tour.order.size(); ++k) {
      const Point3 next = ft.tour.waypoints[k];
      clock.travel(distance(vehicle, next));
      vehicle = next;
      const CellIndex cell = ft.cells[ft.tour.order[k]];
      log.append({cell, ft.fidelity, measure(truth, model, cell, ft.fidelity, rng)});
      clock.sample();
      visited.push_back({plan.epoch, visited.size(), ft.fidelity, cell, vehicle, clock.now});
    }
  }
  return visited;
}

}  // namespace mfgp
