#include "efflex/graph.hpp"

#include "efflex/binary_io.hpp"
#include "efflex/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace efflex {

namespace {

constexpr double kMinTemperature = 1e-12;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace

std::string_view to_string(KernelSign sign) {
  return sign == KernelSign::negated ? "negated" : "as_written";
}

std::optional<KernelSign> parse_kernel_sign(std::string_view name) {
  if (name == "negated") return KernelSign::negated;
  if (name == "as_written") return KernelSign::as_written;
  return std::nullopt;
}

void ScaleList::validate(std::size_t n) const {
  if (ks.empty()) throw DomainError("scale list is empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw DomainError("scale k must be >= 1");
    if (ks[i] >= n)
      throw DomainError("scale k=" + std::to_string(ks[i]) + " must be < n=" + std::to_string(n));
    if (i > 0 && ks[i] <= ks[i - 1]) throw DomainError("scales must be strictly increasing");
  }
}

Matrix SparseAdjacency::to_dense() const {
  Matrix m(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (const auto& e : row(i)) m(i, e.col) = e.weight;
  return m;
}

std::optional<std::size_t> MultiScaleAdjacency::find_scale(std::size_t k) const {
  for (std::size_t i = 0; i < scales.ks.size(); ++i)
    if (scales.ks[i] == k) return i;
  return std::nullopt;
}

std::vector<std::uint32_t> knn_neighbors(const DistanceMatrix& dm, std::size_t i, std::size_t k) {
  const std::size_t n = dm.n();
  if (i >= n) throw DomainError("knn_neighbors: node id out of range");
  if (k >= n || k == 0) throw DomainError("knn_neighbors: k must be in [1, n)");
  std::vector<std::uint32_t> ids;
  ids.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) ids.push_back(static_cast<std::uint32_t>(j));
  const auto row = dm.row(i);
  auto closer = [&](std::uint32_t a, std::uint32_t b) {
    return row[a] != row[b] ? row[a] < row[b] : a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), closer);
  ids.resize(k);
  return ids;
}

SparseAdjacency build_adjacency(const DistanceMatrix& dm, std::size_t k, KernelSign sign) {
  const std::size_t n = dm.n();
  if (k >= n || k == 0) throw DomainError("build_adjacency: k must be in [1, n)");
  for (double v : dm.values())
    if (!std::isfinite(v)) throw DomainError("build_adjacency: non-finite distance");

  SparseAdjacency adj(n, k);
  const double sgn = sign == KernelSign::negated ? -1.0 : 1.0;
  std::vector<double> dist(k), logits(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nbrs = knn_neighbors(dm, i, k);
    for (std::size_t t = 0; t < k; ++t) dist[t] = dm(i, nbrs[t]);
    const double tau = std::max(median(dist), kMinTemperature);
    for (std::size_t t = 0; t < k; ++t) logits[t] = sgn * dist[t] / tau;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& l : logits) sum += (l = std::exp(l - mx));
    auto out = adj.row(i);
    for (std::size_t t = 0; t < k; ++t) out[t] = {nbrs[t], logits[t] / sum};
  }
  return adj;
}

MultiScaleAdjacency build_multiscale(const DistanceMatrix& dm, const ScaleList& scales, KernelSign sign) {
  scales.validate(dm.n());
  MultiScaleAdjacency msa{scales, {}};
  msa.mats.reserve(scales.ks.size());
  for (auto k : scales.ks) msa.mats.push_back(build_adjacency(dm, k, sign));
  return msa;
}

void save_adjacency(const SparseAdjacency& adj, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("EFLXAJ1");
  w.u32(static_cast<std::uint32_t>(adj.n()));
  w.u32(static_cast<std::uint32_t>(adj.k()));
  for (std::size_t i = 0; i < adj.n(); ++i)
    for (const auto& e : adj.row(i)) {
      w.u32(e.col);
      w.f64(e.weight);
    }
  w.finish();
}

SparseAdjacency load_adjacency(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("EFLXAJ1");
  const std::size_t n = r.u32();
  const std::size_t k = r.u32();
  r.need(n * k * 12);
  SparseAdjacency adj(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (auto& e : adj.row(i)) {
      e.col = r.u32();
      e.weight = r.f64();
      if (e.col >= n) throw FormatError("adjacency column out of range in " + path.string());
    }
  r.expect_end();
  return adj;
}

} // namespace efflex
