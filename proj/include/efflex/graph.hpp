#pragma once

#include "efflex/distance.hpp"
#include "efflex/numerics.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace efflex {

/// Exponent sign of the neighbor softmax. `negated` weights near neighbors
/// higher; `as_written` uses exp(+d / tau) literally.
enum class KernelSign { negated, as_written };

std::string_view to_string(KernelSign sign);
std::optional<KernelSign> parse_kernel_sign(std::string_view name);

/// Strictly increasing neighbor counts, e.g. {10, 20, 50}.
struct ScaleList {
  std::vector<std::size_t> ks{10, 20, 50};

  /// Throws DomainError unless ks is non-empty, strictly increasing, and
  /// every k is in [1, n).
  void validate(std::size_t n) const;
};

/// Row-wise KNN graph: row i holds exactly k (column, weight) entries, never
/// i itself, with weights summing to 1.
class SparseAdjacency {
public:
  struct Edge {
    std::uint32_t col;
    double weight;

    friend bool operator==(const Edge&, const Edge&) = default;
  };

  SparseAdjacency() = default;
  SparseAdjacency(std::size_t n, std::size_t k) : n_(n), k_(k), edges_(n * k) {}

  std::size_t n() const { return n_; }
  std::size_t k() const { return k_; }
  std::span<Edge> row(std::size_t i) { return {edges_.data() + i * k_, k_}; }
  std::span<const Edge> row(std::size_t i) const { return {edges_.data() + i * k_, k_}; }

  Matrix to_dense() const;

  friend bool operator==(const SparseAdjacency&, const SparseAdjacency&) = default;

private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<Edge> edges_;
};

struct MultiScaleAdjacency {
  ScaleList scales;
  std::vector<SparseAdjacency> mats;

  std::size_t n() const { return mats.empty() ? 0 : mats.front().n(); }
  /// Index of the scale with neighbor count k, if present.
  std::optional<std::size_t> find_scale(std::size_t k) const;
};

/// The k ids other than i with smallest distance, ordered by (distance, id).
std::vector<std::uint32_t> knn_neighbors(const DistanceMatrix& dm, std::size_t i, std::size_t k);

/// Softmax over each row's KNN set with a per-row temperature
/// tau_i = max(median neighbor distance, 1e-12).
SparseAdjacency build_adjacency(const DistanceMatrix& dm, std::size_t k,
                                KernelSign sign = KernelSign::negated);

MultiScaleAdjacency build_multiscale(const DistanceMatrix& dm, const ScaleList& scales,
                                     KernelSign sign = KernelSign::negated);

/// "EFLXAJ1", u32 n, u32 k, then per row k x (u32 id, f64 weight).
void save_adjacency(const SparseAdjacency& adj, const std::filesystem::path& path);
SparseAdjacency load_adjacency(const std::filesystem::path& path);

} // namespace efflex
