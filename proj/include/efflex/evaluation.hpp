#pragma once

#include "efflex/distance.hpp"
#include "efflex/numerics.hpp"
#include "efflex/trajectory.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace efflex {

/// Candidates for one query, best first: descending score, ascending id on
/// ties. The query itself is never a candidate.
struct Ranking {
  struct Entry {
    std::uint32_t id;
    double score;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::uint32_t query = 0;
  std::vector<Entry> entries;

  std::vector<std::uint32_t> ids(std::size_t top) const;
  friend bool operator==(const Ranking&, const Ranking&) = default;
};

/// Score = cosine similarity of embedding rows (0 when either row is zero).
Ranking rank_by_embedding(const Matrix& em, std::size_t query, std::size_t top);
/// Score = -distance, so smaller distances rank first.
Ranking rank_by_distance(const DistanceMatrix& dm, std::size_t query, std::size_t top);

/// |top-k(pred) & top-k(truth)| / k.
double hitting_ratio(const Ranking& pred, const Ranking& truth, std::size_t k);
/// |top-50(pred) & top-10(truth)| / 10.
double recall_10_50(const Ranking& pred, const Ranking& truth);

struct QueryMetrics {
  std::uint32_t query = 0;
  double hr10 = 0.0;
  double hr50 = 0.0;
  double r10_50 = 0.0;
};

struct EvalReport {
  double hr10 = 0.0;
  double hr50 = 0.0;
  double r10_50 = 0.0;
  std::size_t n = 0;
  DistanceKind distance = DistanceKind::DTW;
  std::string config_hash;
  std::vector<QueryMetrics> per_query;
};

/// Averages HR@10, HR@50 and R10@50 over every trajectory as a query.
/// Requires n >= 51.
EvalReport evaluate(const Matrix& em, const DistanceMatrix& gt_dm, std::string config_hash = {});

nlohmann::json to_json(const EvalReport& report);

struct QueryResult {
  Ranking pred;
  Ranking truth;
};

QueryResult topk_query(const Matrix& em, const DistanceMatrix& gt_dm, std::size_t query,
                       std::size_t k = 3);

/// FeatureCollection with the query and both rankings as LineStrings in
/// WGS-84, tagged with role and rank.
nlohmann::json query_geojson(const Dataset& ds, const QueryResult& result);
/// Side-by-side text table of predicted vs ground-truth ranks.
std::string query_table(const QueryResult& result);

} // namespace efflex
