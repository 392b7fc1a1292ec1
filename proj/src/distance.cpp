#include "efflex/distance.hpp"

#include "efflex/binary_io.hpp"
#include "efflex/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace efflex {

namespace {

inline double point_distance(const Point& p, const Point& q) {
  return std::hypot(p.x - q.x, p.y - q.y);
}

void require_non_empty(std::span<const Point> a, std::span<const Point> b, const char* what) {
  if (a.empty() || b.empty()) throw DomainError(std::string(what) + " of an empty trajectory");
}

// Directed Hausdorff: max over x in a of min over y in b.
double directed_hausdorff(std::span<const Point> a, std::span<const Point> b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, point_distance(p, q));
    worst = std::max(worst, best);
  }
  return worst;
}

} // namespace

std::string_view to_string(DistanceKind kind) {
  switch (kind) {
  case DistanceKind::DTW: return "dtw";
  case DistanceKind::Frechet: return "frechet";
  case DistanceKind::Hausdorff: return "hausdorff";
  case DistanceKind::Euclidean: return "euclidean";
  }
  return "unknown";
}

std::optional<DistanceKind> parse_distance_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto k : {DistanceKind::DTW, DistanceKind::Frechet, DistanceKind::Hausdorff,
                 DistanceKind::Euclidean})
    if (to_string(k) == lower) return k;
  return std::nullopt;
}

// Rolling two-row DP, rows indexed by the longer sequence so the row buffer
// has min(|a|, |b|) cells.
double dtw(std::span<const Point> a, std::span<const Point> b) {
  require_non_empty(a, b, "dtw");
  if (b.size() > a.size()) std::swap(a, b);
  const std::size_t m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double cost = point_distance(a[i], b[j]);
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      cur[j] = cost + best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double discrete_frechet(std::span<const Point> a, std::span<const Point> b) {
  require_non_empty(a, b, "discrete_frechet");
  if (b.size() > a.size()) std::swap(a, b);
  const std::size_t m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double cost = point_distance(a[i], b[j]);
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else {
        best = inf;
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
        if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
      }
      cur[j] = std::max(cost, best);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double hausdorff(std::span<const Point> a, std::span<const Point> b) {
  require_non_empty(a, b, "hausdorff");
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

std::vector<Point> resample_arc_length(std::span<const Point> pts, std::size_t count) {
  if (count < 2) throw DomainError("resample length must be >= 2");
  if (pts.empty()) throw DomainError("resample of an empty trajectory");
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + point_distance(pts[i - 1], pts[i]);
  const double total = cum.back();
  if (!(total > 0.0)) throw DomainError("resample of a zero-length trajectory");

  std::vector<Point> out;
  out.reserve(count);
  std::size_t seg = 0;
  for (std::size_t j = 0; j < count; ++j) {
    if (j + 1 == count) {
      out.push_back(pts.back());
      break;
    }
    const double s = total * static_cast<double>(j) / static_cast<double>(count - 1);
    while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back({pts[seg].x + t * (pts[seg + 1].x - pts[seg].x),
                   pts[seg].y + t * (pts[seg + 1].y - pts[seg].y)});
  }
  return out;
}

double euclidean_aligned(std::span<const Point> a, std::span<const Point> b, std::size_t resample_len) {
  const auto ra = resample_arc_length(a, resample_len);
  const auto rb = resample_arc_length(b, resample_len);
  double sum = 0.0;
  for (std::size_t i = 0; i < resample_len; ++i) {
    const double dx = ra[i].x - rb[i].x;
    const double dy = ra[i].y - rb[i].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum / static_cast<double>(resample_len));
}

double distance(DistanceKind kind, std::span<const Point> a, std::span<const Point> b,
                std::size_t resample_len) {
  switch (kind) {
  case DistanceKind::DTW: return dtw(a, b);
  case DistanceKind::Frechet: return discrete_frechet(a, b);
  case DistanceKind::Hausdorff: return hausdorff(a, b);
  case DistanceKind::Euclidean: return euclidean_aligned(a, b, resample_len);
  }
  throw DomainError("unknown distance kind");
}

DistanceMatrix DistanceMatrix::scaled(double c) const {
  DistanceMatrix out = *this;
  for (double& v : out.values_) v *= c;
  return out;
}

DistanceMatrix pairwise_matrix(const Dataset& ds, DistanceKind kind, const PairwiseOptions& opts) {
  const std::size_t n = ds.size();
  if (n < 2) throw DomainError("pairwise_matrix needs at least 2 trajectories");
  DistanceMatrix dm(kind, n);
  const std::size_t workers = std::clamp<std::size_t>(opts.workers, 1, n);

  struct Failure {
    std::size_t i, j;
    std::string what;
  };
  std::mutex mu;
  std::optional<Failure> failure;

  // Row i goes to worker i % workers. Every cell (i, j), i < j, is written
  // exactly once, so no synchronization is needed on the matrix itself.
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      for (std::size_t j = i + 1; j < n; ++j) {
        try {
          dm.set(i, j, distance(kind, ds.trajectories[i].points, ds.trajectories[j].points,
                                opts.resample_len));
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          if (!failure || std::pair(i, j) < std::pair(failure->i, failure->j))
            failure = Failure{i, j, e.what()};
          return;
        }
      }
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  if (failure)
    throw DomainError(std::string(to_string(kind)) + " failed for pair (" + std::to_string(failure->i) +
                      ", " + std::to_string(failure->j) + "): " + failure->what);
  return dm;
}

void save_distance_matrix(const DistanceMatrix& dm, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("EFLXDM1");
  w.u8(static_cast<std::uint8_t>(dm.kind()));
  w.u32(static_cast<std::uint32_t>(dm.n()));
  for (std::size_t i = 0; i < dm.n(); ++i)
    for (std::size_t j = i + 1; j < dm.n(); ++j) w.f64(dm(i, j));
  w.finish();
}

DistanceMatrix load_distance_matrix(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("EFLXDM1");
  const auto tag = r.u8();
  if (tag > static_cast<std::uint8_t>(DistanceKind::Euclidean))
    throw FormatError("unknown distance kind tag in " + path.string());
  const std::size_t n = r.u32();
  r.need(n * (n > 0 ? n - 1 : 0) / 2 * 8);
  DistanceMatrix dm(static_cast<DistanceKind>(tag), n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = r.f64();
      if (!std::isfinite(v) || v < 0.0) throw FormatError("invalid distance value in " + path.string());
      dm.set(i, j, v);
    }
  r.expect_end();
  return dm;
}

} // namespace efflex
