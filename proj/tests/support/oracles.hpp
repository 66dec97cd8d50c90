#pragma once

// Independent brute-force references shared by unit and acceptance tests.
// Nothing here calls into the library's geometry or metric kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "proxytr/geometry.hpp"
#include "proxytr/random.hpp"
#include "proxytr/tensor.hpp"

namespace oracle {

using proxytr::Point3;

inline double sq(Point3 a, Point3 b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline std::vector<Point3> random_points(proxytr::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  return pts;
}

inline double min_sq(Point3 p, const std::vector<Point3>& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : set) best = std::min(best, sq(p, q));
  return best;
}

inline double mean_min(const std::vector<Point3>& from, const std::vector<Point3>& to, bool squared) {
  double total = 0.0;
  for (const auto& p : from) {
    const double d = min_sq(p, to);
    total += squared ? d : std::sqrt(d);
  }
  return total / static_cast<double>(from.size());
}

inline double cd_l2(const std::vector<Point3>& p, const std::vector<Point3>& g) {
  return mean_min(p, g, true) + mean_min(g, p, true);
}

inline double cd_l1(const std::vector<Point3>& p, const std::vector<Point3>& g) {
  return (mean_min(p, g, false) + mean_min(g, p, false)) / 2.0;
}

inline double fscore(const std::vector<Point3>& p, const std::vector<Point3>& g, double d) {
  auto frac = [d](const std::vector<Point3>& a, const std::vector<Point3>& b) {
    std::size_t hit = 0;
    for (const auto& x : a) {
      if (std::sqrt(min_sq(x, b)) < d) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(a.size());
  };
  const double precision = frac(p, g), recall = frac(g, p);
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline double fidelity(const std::vector<Point3>& input, const std::vector<Point3>& output) {
  return mean_min(input, output, false);
}

/// k nearest by (squared distance, index) over a full sort.
inline std::vector<std::size_t> knn_row(const std::vector<Point3>& ref, Point3 q, std::size_t k) {
  std::vector<std::size_t> order(ref.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = sq(ref[a], q), db = sq(ref[b], q);
    return da != db ? da < db : a < b;
  });
  order.resize(k);
  return order;
}

/// Checks every pick of an fps sequence against the max-min definition over
/// unchosen points with lowest-index tie breaking.
inline bool satisfies_fps(const std::vector<Point3>& pts, const std::vector<std::size_t>& picks, std::size_t start) {
  if (picks.empty() || picks[0] != start) return false;
  std::vector<std::size_t> chosen{start};
  for (std::size_t s = 1; s < picks.size(); ++s) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto c : chosen) d = std::min(d, sq(pts[i], pts[c]));
      if (d > best) {
        best = d;
        arg = i;
      }
    }
    if (picks[s] != arg) return false;
    chosen.push_back(arg);
  }
  return true;
}

/// Largest relative error between analytic gradients of `params` and central
/// differences of `loss`. The denominator is floored at `floor`.
inline double max_gradient_error(const std::function<proxytr::Tensor<double>()>& loss,
                                 std::vector<proxytr::Tensor<double>> params, double h = 1e-6,
                                 double floor = 1e-3) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& p : params) {
    const proxytr::NDArray<double> analytic = p.grad();
    auto& value = p.mutable_value();
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss().item();
      value[i] = saved - h;
      const double down = loss().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
