#include "efflex/evaluation.hpp"

#include "efflex/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace efflex {

namespace {

void sort_and_trim(Ranking& r, std::size_t top) {
  auto better = [](const Ranking::Entry& a, const Ranking::Entry& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  if (top < r.entries.size()) {
    std::partial_sort(r.entries.begin(), r.entries.begin() + static_cast<std::ptrdiff_t>(top),
                      r.entries.end(), better);
    r.entries.resize(top);
  } else {
    std::sort(r.entries.begin(), r.entries.end(), better);
  }
}

void check_query(std::size_t n, std::size_t query, std::size_t top) {
  if (query >= n) throw DomainError("query id " + std::to_string(query) + " out of range");
  if (top > n - 1) throw DomainError("top exceeds the number of candidates");
}

std::size_t overlap(const Ranking& a, std::size_t ka, const Ranking& b, std::size_t kb) {
  const auto ia = a.ids(ka);
  std::unordered_set<std::uint32_t> sa(ia.begin(), ia.end());
  std::size_t hits = 0;
  for (auto id : b.ids(kb)) hits += sa.count(id);
  return hits;
}

std::vector<double> row_norms(const Matrix& em) {
  std::vector<double> norms(em.rows());
  for (std::size_t i = 0; i < em.rows(); ++i) {
    double s = 0.0;
    for (double v : em.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
  }
  return norms;
}

Ranking rank_with_norms(const Matrix& em, const std::vector<double>& norms, std::size_t query,
                        std::size_t top) {
  Ranking r;
  r.query = static_cast<std::uint32_t>(query);
  r.entries.reserve(em.rows() - 1);
  const auto q = em.row(query);
  for (std::size_t j = 0; j < em.rows(); ++j) {
    if (j == query) continue;
    double score = 0.0;
    if (norms[query] > 0.0 && norms[j] > 0.0) {
      const auto c = em.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < q.size(); ++t) dot += q[t] * c[t];
      score = dot / (norms[query] * norms[j]);
    }
    r.entries.push_back({static_cast<std::uint32_t>(j), score});
  }
  sort_and_trim(r, top);
  return r;
}

} // namespace

std::vector<std::uint32_t> Ranking::ids(std::size_t top) const {
  if (top > entries.size()) throw DomainError("ranking has fewer than " + std::to_string(top) + " entries");
  std::vector<std::uint32_t> out;
  out.reserve(top);
  for (std::size_t i = 0; i < top; ++i) out.push_back(entries[i].id);
  return out;
}

Ranking rank_by_embedding(const Matrix& em, std::size_t query, std::size_t top) {
  check_query(em.rows(), query, top);
  return rank_with_norms(em, row_norms(em), query, top);
}

Ranking rank_by_distance(const DistanceMatrix& dm, std::size_t query, std::size_t top) {
  check_query(dm.n(), query, top);
  Ranking r;
  r.query = static_cast<std::uint32_t>(query);
  r.entries.reserve(dm.n() - 1);
  for (std::size_t j = 0; j < dm.n(); ++j)
    if (j != query) r.entries.push_back({static_cast<std::uint32_t>(j), -dm(query, j)});
  sort_and_trim(r, top);
  return r;
}

double hitting_ratio(const Ranking& pred, const Ranking& truth, std::size_t k) {
  if (k == 0) throw DomainError("hitting_ratio needs k >= 1");
  return static_cast<double>(overlap(truth, k, pred, k)) / static_cast<double>(k);
}

double recall_10_50(const Ranking& pred, const Ranking& truth) {
  return static_cast<double>(overlap(truth, 10, pred, 50)) / 10.0;
}

EvalReport evaluate(const Matrix& em, const DistanceMatrix& gt_dm, std::string config_hash) {
  const std::size_t n = gt_dm.n();
  if (em.rows() != n) throw DomainError("evaluate: embedding rows do not match ground truth");
  if (n < 51) throw DomainError("evaluate needs n >= 51 so every query has 50 candidates");
  EvalReport rep;
  rep.n = n;
  rep.distance = gt_dm.kind();
  rep.config_hash = std::move(config_hash);
  rep.per_query.reserve(n);
  const auto norms = row_norms(em);
  for (std::size_t q = 0; q < n; ++q) {
    const auto pred = rank_with_norms(em, norms, q, 50);
    const auto truth = rank_by_distance(gt_dm, q, 50);
    rep.per_query.push_back({static_cast<std::uint32_t>(q), hitting_ratio(pred, truth, 10),
                             hitting_ratio(pred, truth, 50), recall_10_50(pred, truth)});
  }
  for (const auto& m : rep.per_query) {
    rep.hr10 += m.hr10;
    rep.hr50 += m.hr50;
    rep.r10_50 += m.r10_50;
  }
  rep.hr10 /= static_cast<double>(n);
  rep.hr50 /= static_cast<double>(n);
  rep.r10_50 /= static_cast<double>(n);
  return rep;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : report.per_query)
    per.push_back({{"query", m.query}, {"hr10", m.hr10}, {"hr50", m.hr50}, {"r10_50", m.r10_50}});
  return {{"hr10", report.hr10},
          {"hr50", report.hr50},
          {"r10_50", report.r10_50},
          {"n", report.n},
          {"distance", std::string(to_string(report.distance))},
          {"config_hash", report.config_hash},
          {"averaging", "all_queries"},
          {"per_query", std::move(per)}};
}

QueryResult topk_query(const Matrix& em, const DistanceMatrix& gt_dm, std::size_t query, std::size_t k) {
  if (em.rows() != gt_dm.n()) throw DomainError("topk_query: embedding rows do not match ground truth");
  return {rank_by_embedding(em, query, k), rank_by_distance(gt_dm, query, k)};
}

nlohmann::json query_geojson(const Dataset& ds, const QueryResult& result) {
  auto line = [&](std::uint32_t id) {
    if (id >= ds.size()) throw DomainError("trajectory id out of range for dataset");
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : ds.trajectories[id].points) {
      const auto ll = unproject(p, ds.anchor);
      coords.push_back({ll.lon, ll.lat});
    }
    return nlohmann::json{{"type", "LineString"}, {"coordinates", std::move(coords)}};
  };
  nlohmann::json features = nlohmann::json::array();
  features.push_back({{"type", "Feature"},
                      {"geometry", line(result.pred.query)},
                      {"properties", {{"role", "query"}, {"id", result.pred.query}, {"rank", 0}}}});
  auto add = [&](const Ranking& r, const char* role) {
    for (std::size_t i = 0; i < r.entries.size(); ++i)
      features.push_back({{"type", "Feature"},
                          {"geometry", line(r.entries[i].id)},
                          {"properties",
                           {{"role", role},
                            {"id", r.entries[i].id},
                            {"rank", i + 1},
                            {"score", r.entries[i].score}}}});
  };
  add(result.pred, "predicted");
  add(result.truth, "ground_truth");
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

std::string query_table(const QueryResult& result) {
  std::string out = "query " + std::to_string(result.pred.query) + "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %-10s %-12s %-10s %-12s\n", "rank", "pred_id", "cosine",
                "truth_id", "distance");
  out += buf;
  const std::size_t rows = std::max(result.pred.entries.size(), result.truth.entries.size());
  for (std::size_t i = 0; i < rows; ++i) {
    std::string p_id = "-", p_s = "-", t_id = "-", t_d = "-";
    if (i < result.pred.entries.size()) {
      p_id = std::to_string(result.pred.entries[i].id);
      std::snprintf(buf, sizeof buf, "%.6f", result.pred.entries[i].score);
      p_s = buf;
    }
    if (i < result.truth.entries.size()) {
      t_id = std::to_string(result.truth.entries[i].id);
      std::snprintf(buf, sizeof buf, "%.3f", -result.truth.entries[i].score);
      t_d = buf;
    }
    std::snprintf(buf, sizeof buf, "%-6zu %-10s %-12s %-10s %-12s\n", i + 1, p_id.c_str(), p_s.c_str(),
                  t_id.c_str(), t_d.c_str());
    out += buf;
  }
  return out;
}

} // namespace efflex
