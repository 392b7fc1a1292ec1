#pragma once

// Test-only generators and independent reference implementations. Nothing
// here calls into the code paths it is used to check.

#include "efflex/distance.hpp"
#include "efflex/evaluation.hpp"
#include "efflex/numerics.hpp"
#include "efflex/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <vector>

namespace efflex::testing {

inline std::vector<Point> random_points(Rng& rng, std::size_t len, double extent = 100.0) {
  std::vector<Point> pts(len);
  for (auto& p : pts) p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
  return pts;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// Symmetric, zero diagonal, distinct positive off-diagonal entries.
inline DistanceMatrix random_distance_matrix(Rng& rng, std::size_t n, DistanceKind kind = DistanceKind::DTW) {
  DistanceMatrix dm(kind, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dm.set(i, j, rng.uniform(1.0, 1000.0));
  return dm;
}

inline double pdist(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// DTW by plain recursion over every warping path (exponential time).
inline double dtw_oracle(const std::vector<Point>& a, const std::vector<Point>& b) {
  std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> double {
    const double c = pdist(a[i], b[j]);
    if (i == 0 && j == 0) return c;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, rec(i - 1, j));
    if (j > 0) best = std::min(best, rec(i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, rec(i - 1, j - 1));
    return c + best;
  };
  return rec(a.size() - 1, b.size() - 1);
}

/// Discrete Frechet by enumerating every monotone coupling from (0,0) to the
/// end and taking the minimum over couplings of the maximum matched gap.
inline double frechet_oracle(const std::vector<Point>& a, const std::vector<Point>& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double worst) {
    worst = std::max(worst, pdist(a[i], b[j]));
    if (worst >= best) return;
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = worst;
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, worst);
    if (j + 1 < b.size()) walk(i, j + 1, worst);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, worst);
  };
  walk(0, 0, 0.0);
  return best;
}

inline double hausdorff_oracle(const std::vector<Point>& a, const std::vector<Point>& b) {
  double h = 0.0;
  for (const auto& p : a) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& q : b) m = std::min(m, pdist(p, q));
    h = std::max(h, m);
  }
  for (const auto& q : b) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : a) m = std::min(m, pdist(p, q));
    h = std::max(h, m);
  }
  return h;
}

/// Brute-force retrieval metrics: full sort of every candidate list, set
/// intersections via std::set.
struct ReferenceMetrics {
  double hr10 = 0, hr50 = 0, r10_50 = 0;
};

inline std::vector<std::size_t> ref_order(std::size_t n, std::size_t q, const std::function<double(std::size_t)>& key) {
  std::vector<std::size_t> ids;
  for (std::size_t j = 0; j < n; ++j)
    if (j != q) ids.push_back(j);
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
  return ids;
}

inline ReferenceMetrics reference_evaluate(const Matrix& em, const DistanceMatrix& gt) {
  const std::size_t n = gt.n();
  ReferenceMetrics out;
  for (std::size_t q = 0; q < n; ++q) {
    auto cos = [&](std::size_t j) {
      double dot = 0, nq = 0, nj = 0;
      for (std::size_t t = 0; t < em.cols(); ++t) {
        dot += em(q, t) * em(j, t);
        nq += em(q, t) * em(q, t);
        nj += em(j, t) * em(j, t);
      }
      return (nq == 0 || nj == 0) ? 0.0 : dot / (std::sqrt(nq) * std::sqrt(nj));
    };
    const auto pred = ref_order(n, q, [&](std::size_t j) { return -cos(j); });
    const auto truth = ref_order(n, q, [&](std::size_t j) { return gt(q, j); });
    auto inter = [&](std::size_t kp, std::size_t kt) {
      std::set<std::size_t> a(pred.begin(), pred.begin() + static_cast<long>(kp));
      std::size_t c = 0;
      for (std::size_t i = 0; i < kt; ++i) c += a.count(truth[i]);
      return static_cast<double>(c);
    };
    out.hr10 += inter(10, 10) / 10.0;
    out.hr50 += inter(50, 50) / 50.0;
    out.r10_50 += inter(50, 10) / 10.0;
  }
  out.hr10 /= static_cast<double>(n);
  out.hr50 /= static_cast<double>(n);
  out.r10_50 /= static_cast<double>(n);
  return out;
}

/// Central-difference gradient of f with respect to every entry of m.
inline Matrix finite_difference(Matrix& m, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double orig = m.data()[i];
    m.data()[i] = orig + h;
    const double up = f();
    m.data()[i] = orig - h;
    const double down = f();
    m.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

} // namespace efflex::testing
