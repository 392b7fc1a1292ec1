#include "efflex/trajectory.hpp"

#include "efflex/binary_io.hpp"
#include "efflex/errors.hpp"
#include "efflex/numerics.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace efflex {

namespace fs = std::filesystem;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Splits one CSV record, honoring double-quoted fields with "" escapes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::optional<std::vector<RawPoint>> parse_polyline(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!j.is_array() || j.empty()) return std::nullopt;
  std::vector<RawPoint> pts;
  pts.reserve(j.size());
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
      return std::nullopt;
    RawPoint p{pair[0].get<double>(), pair[1].get<double>(), std::nullopt};
    if (!valid_wgs84(p.lon, p.lat)) return std::nullopt;
    pts.push_back(p);
  }
  return pts;
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

Dataset assemble(const std::vector<std::vector<RawPoint>>& tracks, std::string provenance,
                 std::size_t skipped) {
  Dataset ds;
  ds.provenance = std::move(provenance);
  ds.skipped = skipped;
  ds.anchor = bounding_box_center(tracks);
  ds.trajectories.reserve(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i)
    ds.trajectories.push_back(
        Trajectory{static_cast<std::uint32_t>(i), project_to_meters(tracks[i], ds.anchor)});
  return ds;
}

} // namespace

bool valid_wgs84(double lon, double lat) {
  return std::isfinite(lon) && std::isfinite(lat) && lon >= -180.0 && lon <= 180.0 &&
         lat >= -90.0 && lat <= 90.0;
}

std::vector<Point> project_to_meters(const std::vector<RawPoint>& raw, LonLat anchor) {
  if (!valid_wgs84(anchor.lon, anchor.lat)) throw DomainError("projection anchor out of range");
  const double kx = std::cos(anchor.lat * kDegToRad) * kMetersPerDegLon;
  std::vector<Point> out;
  out.reserve(raw.size());
  for (const auto& p : raw)
    out.push_back({(p.lon - anchor.lon) * kx, (p.lat - anchor.lat) * kMetersPerDegLat});
  return out;
}

LonLat unproject(Point p, LonLat anchor) {
  const double kx = std::cos(anchor.lat * kDegToRad) * kMetersPerDegLon;
  return {anchor.lon + p.x / kx, anchor.lat + p.y / kMetersPerDegLat};
}

LonLat bounding_box_center(const std::vector<std::vector<RawPoint>>& tracks) {
  double lo_lon = std::numeric_limits<double>::infinity(), hi_lon = -lo_lon;
  double lo_lat = lo_lon, hi_lat = -lo_lon;
  for (const auto& t : tracks)
    for (const auto& p : t) {
      lo_lon = std::min(lo_lon, p.lon);
      hi_lon = std::max(hi_lon, p.lon);
      lo_lat = std::min(lo_lat, p.lat);
      hi_lat = std::max(hi_lat, p.lat);
    }
  if (!std::isfinite(lo_lon)) return {};
  return {0.5 * (lo_lon + hi_lon), 0.5 * (lo_lat + hi_lat)};
}

Dataset parse_porto_csv(const fs::path& path, std::optional<std::size_t> limit) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read Porto CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("Porto CSV has no header: " + path.string());
  const auto header = split_csv(line);
  const auto col = std::find(header.begin(), header.end(), "POLYLINE");
  if (col == header.end()) throw FormatError("Porto CSV lacks a POLYLINE column");
  const auto poly_idx = static_cast<std::size_t>(col - header.begin());

  std::vector<std::vector<RawPoint>> tracks;
  std::size_t skipped = 0;
  while (std::getline(in, line)) {
    if (limit && tracks.size() >= *limit) break;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv(line);
    std::optional<std::vector<RawPoint>> pts;
    if (poly_idx < fields.size()) pts = parse_polyline(fields[poly_idx]);
    if (!pts) {
      ++skipped;
      continue;
    }
    tracks.push_back(std::move(*pts));
  }
  if (tracks.empty()) throw EmptyDatasetError("no valid trajectories in " + path.string());
  return assemble(tracks, "porto:" + path.filename().string(), skipped);
}

Dataset parse_geolife_plt(const fs::path& root, std::optional<std::size_t> limit) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("Geolife root is not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".plt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::vector<RawPoint>> tracks;
  std::size_t skipped = 0;
  for (const auto& file : files) {
    if (limit && tracks.size() >= *limit) break;
    std::ifstream in(file);
    if (!in) throw IoError("cannot read PLT file: " + file.string());
    std::string line;
    for (int i = 0; i < 6 && std::getline(in, line); ++i) {
    }
    std::vector<RawPoint> pts;
    while (std::getline(in, line)) {
      std::vector<std::string_view> parts;
      std::string_view rest(line);
      while (true) {
        const auto comma = rest.find(',');
        parts.push_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      double lat = 0, lon = 0;
      if (parts.size() < 2 || !parse_double(parts[0], lat) || !parse_double(parts[1], lon)) continue;
      if (!valid_wgs84(lon, lat)) continue;
      RawPoint p{lon, lat, std::nullopt};
      double days = 0;
      // Field 5 counts days since 1899-12-30; 25569 days separate it from 1970-01-01.
      if (parts.size() > 4 && parse_double(parts[4], days)) p.timestamp = (days - 25569.0) * 86400.0;
      pts.push_back(p);
    }
    if (pts.empty()) {
      ++skipped;
      continue;
    }
    tracks.push_back(std::move(pts));
  }
  if (tracks.empty()) throw EmptyDatasetError("no valid PLT trajectories under " + root.string());
  return assemble(tracks, "geolife:" + root.filename().string(), skipped);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_clusters < 1 || spec.per_cluster < 1 || spec.points_per_traj < 1)
    throw DomainError("synthetic dataset counts must be >= 1");
  Rng rng(spec.seed);
  Dataset ds;
  ds.anchor = {-8.45, 41.13};
  ds.provenance = "synthetic:clusters=" + std::to_string(spec.n_clusters) +
                  ",per=" + std::to_string(spec.per_cluster) +
                  ",len=" + std::to_string(spec.points_per_traj) +
                  ",seed=" + std::to_string(spec.seed);

  // Templates: smooth random walks with ~100 m steps inside a 10 km box.
  constexpr double kBox = 5000.0;
  constexpr double kStep = 100.0;
  std::vector<std::vector<Point>> templates(spec.n_clusters);
  for (auto& tpl : templates) {
    Point p{rng.uniform(-kBox, kBox), rng.uniform(-kBox, kBox)};
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    tpl.reserve(spec.points_per_traj);
    for (std::size_t i = 0; i < spec.points_per_traj; ++i) {
      tpl.push_back(p);
      heading += 0.3 * rng.normal();
      p.x += kStep * std::cos(heading);
      p.y += kStep * std::sin(heading);
    }
  }

  // Member noise: a rigid offset plus a linear drift along the path (both
  // scaled by noise_m), and small per-point jitter.
  std::uint32_t id = 0;
  const double last = static_cast<double>(std::max<std::size_t>(spec.points_per_traj - 1, 1));
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (std::size_t m = 0; m < spec.per_cluster; ++m) {
      const double ox = spec.noise_m * rng.normal(), oy = spec.noise_m * rng.normal();
      const double dx = spec.noise_m * rng.normal(), dy = spec.noise_m * rng.normal();
      Trajectory t{id++, {}};
      t.points.reserve(spec.points_per_traj);
      for (std::size_t i = 0; i < spec.points_per_traj; ++i) {
        const double s = static_cast<double>(i) / last - 0.5;
        const auto& p = templates[c][i];
        t.points.push_back({p.x + ox + s * dx + 0.3 * spec.noise_m * rng.normal(),
                            p.y + oy + s * dy + 0.3 * spec.noise_m * rng.normal()});
      }
      ds.trajectories.push_back(std::move(t));
    }
  }
  return ds;
}

Dataset preprocess(const Dataset& ds, const PreprocessOptions& opts) {
  if (ds.trajectories.empty()) throw EmptyDatasetError("preprocess on empty dataset");
  if (opts.grid_snap && !(opts.grid_size_m > 0.0)) throw DomainError("grid_size_m must be positive");
  Dataset out;
  out.anchor = ds.anchor;
  out.grid_size_m = opts.grid_size_m;
  out.provenance = ds.provenance;
  out.skipped = ds.skipped;
  const std::size_t floor_len = std::max<std::size_t>(opts.min_points, 2);
  for (const auto& t : ds.trajectories) {
    if (t.size() < floor_len) continue;
    Trajectory kept{static_cast<std::uint32_t>(out.trajectories.size()), {}};
    if (!opts.grid_snap) {
      kept.points = t.points;
    } else {
      const double g = opts.grid_size_m;
      for (const auto& p : t.points) {
        const Point c{(std::floor(p.x / g) + 0.5) * g, (std::floor(p.y / g) + 0.5) * g};
        if (kept.points.empty() || !(kept.points.back() == c)) kept.points.push_back(c);
      }
      if (kept.points.size() < 2) kept.points.push_back(kept.points.back());
    }
    out.trajectories.push_back(std::move(kept));
  }
  if (out.trajectories.empty()) throw EmptyDatasetError("all trajectories removed by preprocessing");
  return out;
}

void save_dataset(const Dataset& ds, const fs::path& path) {
  io::Writer w(path);
  w.magic("EFLXDS1");
  w.f64(ds.anchor.lon);
  w.f64(ds.anchor.lat);
  w.f64(ds.grid_size_m);
  w.string(ds.provenance);
  w.u32(static_cast<std::uint32_t>(ds.trajectories.size()));
  for (const auto& t : ds.trajectories) {
    w.u32(t.id);
    w.u32(static_cast<std::uint32_t>(t.points.size()));
    for (const auto& p : t.points) {
      w.f64(p.x);
      w.f64(p.y);
    }
  }
  w.finish();
}

Dataset load_dataset(const fs::path& path) {
  io::Reader r(path);
  r.expect_magic("EFLXDS1");
  Dataset ds;
  ds.anchor.lon = r.f64();
  ds.anchor.lat = r.f64();
  ds.grid_size_m = r.f64();
  ds.provenance = r.string();
  const auto count = r.u32();
  ds.trajectories.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Trajectory t;
    t.id = r.u32();
    if (t.id != i) throw FormatError("non-dense trajectory id in " + path.string());
    const auto n = r.u32();
    r.need(std::size_t{n} * 16);
    t.points.resize(n);
    for (auto& p : t.points) {
      p.x = r.f64();
      p.y = r.f64();
    }
    ds.trajectories.push_back(std::move(t));
  }
  r.expect_end();
  return ds;
}

} // namespace efflex
