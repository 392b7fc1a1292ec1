#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace efflex {

/// WGS-84 fix as read from a source file.
struct RawPoint {
  double lon = 0.0;
  double lat = 0.0;
  std::optional<double> timestamp; // seconds since epoch
};

/// Planar point in meters, east/north of the dataset anchor.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

struct Trajectory {
  std::uint32_t id = 0;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  LonLat anchor;
  double grid_size_m = 50.0;
  std::string provenance;
  /// Rows/files dropped during parsing. Not persisted.
  std::size_t skipped = 0;

  std::size_t size() const { return trajectories.size(); }
};

inline bool operator==(const Dataset& a, const Dataset& b) {
  return a.trajectories == b.trajectories && a.anchor == b.anchor &&
         a.grid_size_m == b.grid_size_m && a.provenance == b.provenance;
}

// Equirectangular local projection. Meters per degree of latitude, and of
// longitude at the equator.
inline constexpr double kMetersPerDegLat = 110540.0;
inline constexpr double kMetersPerDegLon = 111320.0;

bool valid_wgs84(double lon, double lat);

std::vector<Point> project_to_meters(const std::vector<RawPoint>& raw, LonLat anchor);
LonLat unproject(Point p, LonLat anchor);

/// Center of the bounding box of all points, used as projection origin.
LonLat bounding_box_center(const std::vector<std::vector<RawPoint>>& tracks);

/// Porto taxi CSV: header row, POLYLINE column holding "[[lon,lat],...]".
/// Malformed or empty polylines are skipped and counted in Dataset::skipped.
Dataset parse_porto_csv(const std::filesystem::path& path,
                        std::optional<std::size_t> limit = std::nullopt);

/// Geolife tree: every *.plt file below root is one trajectory, in sorted
/// path order. Records with out-of-range coordinates are dropped.
Dataset parse_geolife_plt(const std::filesystem::path& root,
                          std::optional<std::size_t> limit = std::nullopt);

struct SyntheticSpec {
  std::size_t n_clusters = 4;
  std::size_t per_cluster = 50;
  std::size_t points_per_traj = 60;
  double noise_m = 25.0;
  std::uint64_t seed = 7;
};

/// Clustered trajectories: every member of cluster c is a noisy copy of a
/// shared random template path. Trajectory id = c * per_cluster + member.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct PreprocessOptions {
  std::size_t min_points = 50;
  double grid_size_m = 50.0;
  bool grid_snap = false;
};

/// Drops trajectories shorter than min_points, optionally snaps points to
/// grid-cell centers (collapsing consecutive repeats, keeping at least two
/// points), then renumbers ids densely.
Dataset preprocess(const Dataset& ds, const PreprocessOptions& opts = {});

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace efflex
