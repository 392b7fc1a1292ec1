#pragma once

#include "efflex/distance.hpp"
#include "efflex/graph.hpp"
#include "efflex/hash.hpp"
#include "efflex/numerics.hpp"
#include "efflex/tape.hpp"
#include "efflex/trajectory.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace efflex {

enum class LossKind { cosine, l1, mse };
enum class FusionMode { attention, addition, single_scale };
/// How ground-truth distances become a similarity target for the gram matrix.
enum class GtTransform { softmax_sim, raw_neg };

std::string_view to_string(LossKind k);
std::string_view to_string(FusionMode m);
std::string_view to_string(GtTransform t);
std::optional<LossKind> parse_loss_kind(std::string_view s);
std::optional<FusionMode> parse_fusion_mode(std::string_view s);
std::optional<GtTransform> parse_gt_transform(std::string_view s);

inline constexpr double kLeakySlope = 0.01;

/// Two linear stages with a LeakyReLU between them, mapping the per-scale
/// descriptor vector (1 x m) to m attention logits.
struct FusionParams {
  ParamTensor w1; // m x hidden
  ParamTensor b1; // 1 x hidden
  ParamTensor w2; // hidden x m
  ParamTensor b2; // 1 x m

  static FusionParams init(std::size_t scales, std::size_t hidden, Rng& rng);
  /// Zero weights with b2 = log(w), so the attention output is exactly w.
  static FusionParams frozen(std::span<const double> weights, std::size_t hidden = 16);

  std::size_t scales() const { return b2.value.cols(); }
  std::vector<ParamTensor*> tensors() { return {&w1, &b1, &w2, &b2}; }
};

/// Dense fused graph plus the scale weights that produced it.
struct FusedAdjacency {
  Matrix values;
  std::vector<double> scale_weights;
};

struct GcnParams {
  std::vector<ParamTensor> weights; // layer l: d_{l-1} x d_l
  std::vector<ParamTensor> biases;  // layer l: 1 x d_l

  /// dims = {d_0, d_1, ..., d_L}; Xavier weights, zero biases.
  static GcnParams init(std::span<const std::size_t> dims, Rng& rng);

  std::size_t layers() const { return weights.size(); }
  std::vector<ParamTensor*> tensors();
};

/// Mean edge weight of each scale's adjacency, as a 1 x m row.
Matrix scale_descriptors(const MultiScaleAdjacency& msa);
/// Union of edge supports across scales (1 where any scale has an edge).
Matrix support_mask(const MultiScaleAdjacency& msa);
std::vector<Matrix> dense_scales(const MultiScaleAdjacency& msa);

std::vector<double> attention_weights(const MultiScaleAdjacency& msa, const FusionParams& fp);

/// softmax-weighted sum of the scales, min-max normalized over the union
/// support.
FusedAdjacency fuse(const MultiScaleAdjacency& msa, const FusionParams& fp);
/// Unweighted sum of the scales, min-max normalized over the union support.
FusedAdjacency fuse_addition(const MultiScaleAdjacency& msa);

/// Row-normalized (S' + I).
Matrix node_features(const Matrix& fused);

/// H_0 = fv; H_l = act(S' H_{l-1} W_l + b_l), LeakyReLU between layers and
/// identity on the last.
Matrix gcn_forward(const Matrix& fused, const Matrix& fv, const GcnParams& gp);

/// softmax_sim: row softmax of -d / tau_i, tau_i = median off-diagonal
/// distance of row i (floored at 1e-12). raw_neg: -d.
Matrix similarity_target(const DistanceMatrix& gt, GtTransform transform);

double loss_against_target(const Matrix& em, const Matrix& target, LossKind kind);
double loss(const Matrix& em, const DistanceMatrix& gt, LossKind kind,
            GtTransform transform = GtTransform::softmax_sim);

struct TrainConfig {
  std::size_t embedding_dim = 128;
  std::size_t hidden_dim = 256;
  std::size_t gcn_layers = 2;
  std::size_t fusion_hidden = 16;
  std::size_t epochs = 50;
  LrSchedule schedule;
  AdamWConfig adamw;
  std::uint64_t seed = 7;
  DistanceKind gt_kind = DistanceKind::DTW;
  LossKind loss_kind = LossKind::cosine;
  FusionMode fusion_mode = FusionMode::attention;
  std::size_t single_scale_k = 20;
  GtTransform gt_transform = GtTransform::softmax_sim;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  /// One "epoch,loss,lr" line per epoch, values printed round-trip exact.
  std::string to_text() const;
  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

/// Fusion + GCN parameters and the differentiable forward pass over them.
class EmbeddingModel {
public:
  EmbeddingModel(const MultiScaleAdjacency& msa, const TrainConfig& cfg);

  FusionParams& fusion() { return fusion_; }
  GcnParams& gcn() { return gcn_; }
  const FusionParams& fusion() const { return fusion_; }
  const GcnParams& gcn() const { return gcn_; }

  /// Parameters updated by the optimizer (fusion only in attention mode).
  std::vector<ParamTensor*> trainable();

  /// Loss against `target`. With `with_grad`, zeroes and then fills the
  /// gradients of trainable().
  double objective(const Matrix& target, bool with_grad);
  Matrix embed();
  std::vector<double> scale_weights() const;

private:
  struct Forward {
    Tape::Var fused;
    Tape::Var embeddings;
  };
  Forward record(Tape& tape, bool params_as_constants);

  TrainConfig cfg_;
  std::size_t single_index_ = 0;
  std::vector<Matrix> scales_;
  Matrix mask_;
  Matrix descriptors_;
  FusionParams fusion_;
  GcnParams gcn_;
};

struct TrainResult {
  Matrix embeddings;
  TrainingLog log;
  std::vector<double> scale_weights;
};

/// Full-batch training: fuse -> node features -> GCN -> loss -> AdamW at
/// lr_at(epoch). Throws NumericError on a non-finite loss.
TrainResult train(const Dataset& ds, const DistanceMatrix& dm_gt, const MultiScaleAdjacency& msa,
                  const TrainConfig& cfg);

/// Graph -> embedding backends. Only the GCN path ships.
class GraphEmbedder {
public:
  virtual ~GraphEmbedder() = default;
  virtual TrainResult embed(const DistanceMatrix& dm_gt, const MultiScaleAdjacency& msa,
                            const TrainConfig& cfg) = 0;
};

class GcnEmbedder final : public GraphEmbedder {
public:
  TrainResult embed(const DistanceMatrix& dm_gt, const MultiScaleAdjacency& msa,
                    const TrainConfig& cfg) override;
};

struct EmbeddingFile {
  Matrix embeddings;
  std::uint64_t seed = 0;
  Digest config_hash{};

  friend bool operator==(const EmbeddingFile&, const EmbeddingFile&) = default;
};

/// "EFLXEM1", u32 n, u32 d, u64 seed, 32-byte config hash, row-major f64.
void save_embeddings(const EmbeddingFile& file, const std::filesystem::path& path);
EmbeddingFile load_embeddings(const std::filesystem::path& path);
/// Warning text when the stored hash differs from `expected`.
std::optional<std::string> verify_config_hash(const EmbeddingFile& file, const Digest& expected);

} // namespace efflex
