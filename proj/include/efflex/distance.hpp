#pragma once

#include "efflex/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace efflex {

enum class DistanceKind : std::uint8_t { DTW = 0, Frechet = 1, Hausdorff = 2, Euclidean = 3 };

std::string_view to_string(DistanceKind kind);
/// Accepts "dtw", "frechet", "hausdorff", "euclidean" (case-insensitive).
std::optional<DistanceKind> parse_distance_kind(std::string_view name);

inline constexpr std::size_t kDefaultResampleLen = 64;

// Exact kernels over planar points. Empty input throws DomainError.
double dtw(std::span<const Point> a, std::span<const Point> b);
double discrete_frechet(std::span<const Point> a, std::span<const Point> b);
double hausdorff(std::span<const Point> a, std::span<const Point> b);

/// Resamples a polyline to `count` points evenly spaced by arc length.
/// Throws DomainError for zero total length or count < 2.
std::vector<Point> resample_arc_length(std::span<const Point> pts, std::size_t count);

/// RMS gap between both trajectories after arc-length resampling.
double euclidean_aligned(std::span<const Point> a, std::span<const Point> b,
                         std::size_t resample_len = kDefaultResampleLen);

double distance(DistanceKind kind, std::span<const Point> a, std::span<const Point> b,
                std::size_t resample_len = kDefaultResampleLen);

inline double dtw(const Trajectory& a, const Trajectory& b) { return dtw(a.points, b.points); }
inline double discrete_frechet(const Trajectory& a, const Trajectory& b) {
  return discrete_frechet(a.points, b.points);
}
inline double hausdorff(const Trajectory& a, const Trajectory& b) {
  return hausdorff(a.points, b.points);
}
inline double euclidean_aligned(const Trajectory& a, const Trajectory& b,
                                std::size_t resample_len = kDefaultResampleLen) {
  return euclidean_aligned(a.points, b.points, resample_len);
}

/// Symmetric n x n matrix with zero diagonal.
class DistanceMatrix {
public:
  DistanceMatrix() = default;
  DistanceMatrix(DistanceKind kind, std::size_t n)
      : kind_(kind), n_(n), values_(n * n, 0.0) {}

  DistanceKind kind() const { return kind_; }
  std::size_t n() const { return n_; }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  /// Writes both (i, j) and (j, i).
  void set(std::size_t i, std::size_t j, double v) {
    values_[i * n_ + j] = v;
    values_[j * n_ + i] = v;
  }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_, n_}; }
  std::span<const double> values() const { return values_; }

  /// Multiplies every entry by c (c > 0).
  DistanceMatrix scaled(double c) const;

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

private:
  DistanceKind kind_ = DistanceKind::DTW;
  std::size_t n_ = 0;
  std::vector<double> values_;
};

struct PairwiseOptions {
  std::size_t workers = 1;
  std::size_t resample_len = kDefaultResampleLen;
};

/// Fills the upper triangle with `workers` threads and mirrors it. The result
/// does not depend on the worker count. Kernel failures are rethrown as
/// DomainError naming the offending pair.
DistanceMatrix pairwise_matrix(const Dataset& ds, DistanceKind kind, const PairwiseOptions& opts = {});

/// "EFLXDM1", u8 kind, u32 n, strict upper triangle row-major as f64.
void save_distance_matrix(const DistanceMatrix& dm, const std::filesystem::path& path);
DistanceMatrix load_distance_matrix(const std::filesystem::path& path);

} // namespace efflex
