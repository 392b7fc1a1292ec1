#include "efflex/embedder.hpp"

#include "efflex/binary_io.hpp"
#include "efflex/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace efflex {

std::string_view to_string(LossKind k) {
  switch (k) {
  case LossKind::cosine: return "cosine";
  case LossKind::l1: return "l1";
  case LossKind::mse: return "mse";
  }
  return "unknown";
}

std::string_view to_string(FusionMode m) {
  switch (m) {
  case FusionMode::attention: return "attention";
  case FusionMode::addition: return "addition";
  case FusionMode::single_scale: return "single_scale";
  }
  return "unknown";
}

std::string_view to_string(GtTransform t) {
  return t == GtTransform::softmax_sim ? "softmax_sim" : "raw_neg";
}

std::optional<LossKind> parse_loss_kind(std::string_view s) {
  for (auto k : {LossKind::cosine, LossKind::l1, LossKind::mse})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<FusionMode> parse_fusion_mode(std::string_view s) {
  for (auto m : {FusionMode::attention, FusionMode::addition, FusionMode::single_scale})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::optional<GtTransform> parse_gt_transform(std::string_view s) {
  for (auto t : {GtTransform::softmax_sim, GtTransform::raw_neg})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

FusionParams FusionParams::init(std::size_t scales, std::size_t hidden, Rng& rng) {
  FusionParams fp;
  fp.w1 = ParamTensor("fusion.w1", xavier_init(scales, hidden, rng));
  fp.b1 = ParamTensor("fusion.b1", Matrix(1, hidden));
  fp.w2 = ParamTensor("fusion.w2", xavier_init(hidden, scales, rng));
  fp.b2 = ParamTensor("fusion.b2", Matrix(1, scales));
  return fp;
}

FusionParams FusionParams::frozen(std::span<const double> weights, std::size_t hidden) {
  const std::size_t m = weights.size();
  FusionParams fp;
  fp.w1 = ParamTensor("fusion.w1", Matrix(m, hidden));
  fp.b1 = ParamTensor("fusion.b1", Matrix(1, hidden));
  fp.w2 = ParamTensor("fusion.w2", Matrix(hidden, m));
  Matrix logits(1, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(weights[i] > 0.0)) throw DomainError("frozen fusion weights must be positive");
    logits(0, i) = std::log(weights[i]);
  }
  fp.b2 = ParamTensor("fusion.b2", std::move(logits));
  return fp;
}

GcnParams GcnParams::init(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw DomainError("GCN needs at least one layer");
  GcnParams gp;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    gp.weights.emplace_back("gcn.w" + std::to_string(l), xavier_init(dims[l - 1], dims[l], rng));
    gp.biases.emplace_back("gcn.b" + std::to_string(l), Matrix(1, dims[l]));
  }
  return gp;
}

std::vector<ParamTensor*> GcnParams::tensors() {
  std::vector<ParamTensor*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

Matrix scale_descriptors(const MultiScaleAdjacency& msa) {
  Matrix d(1, msa.mats.size());
  for (std::size_t m = 0; m < msa.mats.size(); ++m) {
    const auto& s = msa.mats[m];
    double sum = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i)
      for (const auto& e : s.row(i)) sum += e.weight;
    d(0, m) = sum / static_cast<double>(s.n() * s.k());
  }
  return d;
}

Matrix support_mask(const MultiScaleAdjacency& msa) {
  const std::size_t n = msa.n();
  Matrix mask(n, n);
  for (const auto& s : msa.mats)
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& e : s.row(i)) mask(i, e.col) = 1.0;
  return mask;
}

std::vector<Matrix> dense_scales(const MultiScaleAdjacency& msa) {
  std::vector<Matrix> out;
  out.reserve(msa.mats.size());
  for (const auto& s : msa.mats) out.push_back(s.to_dense());
  return out;
}

namespace {

void check_scales(const MultiScaleAdjacency& msa) {
  if (msa.mats.empty()) throw DomainError("no adjacency scales to fuse");
  for (const auto& s : msa.mats)
    if (s.n() != msa.n()) throw DomainError("adjacency scales differ in node count");
}

struct FusionVars {
  Tape::Var w1, b1, w2, b2;
};

// LT -> LeakyReLU -> LT -> softmax over scales.
Tape::Var record_attention(Tape& t, const Matrix& descriptors, const FusionVars& v) {
  auto h = t.leaky_relu(t.add_row(t.matmul(t.constant(descriptors), v.w1), v.b1), kLeakySlope);
  return t.softmax_rows(t.add_row(t.matmul(h, v.w2), v.b2));
}

Tape::Var record_gcn(Tape& t, Tape::Var fused, Tape::Var fv, std::span<const Tape::Var> w,
                     std::span<const Tape::Var> b) {
  Tape::Var h = fv;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = t.add_row(t.matmul(fused, t.matmul(h, w[l])), b[l]);
    if (l + 1 < w.size()) h = t.leaky_relu(h, kLeakySlope);
  }
  return h;
}

Tape::Var record_loss(Tape& t, Tape::Var em, const Matrix& target, LossKind kind) {
  auto gram = t.matmul_nt(em, em);
  auto tgt = t.constant(target);
  switch (kind) {
  case LossKind::cosine: return t.affine(t.cosine_flat(tgt, gram), -1.0, 1.0);
  case LossKind::l1: return t.mean_abs_diff(gram, tgt);
  case LossKind::mse: return t.mean_sq_diff(gram, tgt);
  }
  throw DomainError("unknown loss kind");
}

FusionVars constant_vars(Tape& t, const FusionParams& fp) {
  return {t.constant(fp.w1.value), t.constant(fp.b1.value), t.constant(fp.w2.value),
          t.constant(fp.b2.value)};
}

} // namespace

std::vector<double> attention_weights(const MultiScaleAdjacency& msa, const FusionParams& fp) {
  check_scales(msa);
  if (fp.scales() != msa.mats.size()) throw DomainError("fusion params do not match scale count");
  Tape t;
  auto w = record_attention(t, scale_descriptors(msa), constant_vars(t, fp));
  auto row = t.value(w).row(0);
  return {row.begin(), row.end()};
}

FusedAdjacency fuse(const MultiScaleAdjacency& msa, const FusionParams& fp) {
  check_scales(msa);
  if (fp.scales() != msa.mats.size()) throw DomainError("fusion params do not match scale count");
  Tape t;
  auto w = record_attention(t, scale_descriptors(msa), constant_vars(t, fp));
  const auto mats = dense_scales(msa);
  auto fused = t.minmax_masked(t.weighted_sum(w, mats), support_mask(msa));
  auto row = t.value(w).row(0);
  return {t.value(fused), {row.begin(), row.end()}};
}

FusedAdjacency fuse_addition(const MultiScaleAdjacency& msa) {
  check_scales(msa);
  Tape t;
  const auto mats = dense_scales(msa);
  auto ones = t.constant(Matrix(1, mats.size(), 1.0));
  auto fused = t.minmax_masked(t.weighted_sum(ones, mats), support_mask(msa));
  return {t.value(fused), std::vector<double>(mats.size(), 1.0)};
}

Matrix node_features(const Matrix& fused) {
  Tape t;
  return t.value(t.add_identity_row_normalize(t.constant(fused)));
}

Matrix gcn_forward(const Matrix& fused, const Matrix& fv, const GcnParams& gp) {
  if (fused.rows() != fused.cols() || fv.rows() != fused.rows())
    throw DomainError("gcn_forward: adjacency/feature shape mismatch");
  Tape t;
  std::vector<Tape::Var> w, b;
  for (std::size_t l = 0; l < gp.layers(); ++l) {
    w.push_back(t.constant(gp.weights[l].value));
    b.push_back(t.constant(gp.biases[l].value));
  }
  return t.value(record_gcn(t, t.constant(fused), t.constant(fv), w, b));
}

Matrix similarity_target(const DistanceMatrix& gt, GtTransform transform) {
  const std::size_t n = gt.n();
  Matrix out(n, n);
  if (transform == GtTransform::raw_neg) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = -gt(i, j);
    return out;
  }
  std::vector<double> off;
  off.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    off.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) off.push_back(gt(i, j));
    double tau = 1e-12;
    if (!off.empty()) {
      std::sort(off.begin(), off.end());
      const std::size_t mid = off.size() / 2;
      const double med = off.size() % 2 ? off[mid] : 0.5 * (off[mid - 1] + off[mid]);
      tau = std::max(med, 1e-12);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = -gt(i, j) / tau;
  }
  return softmax_rows(out);
}

double loss_against_target(const Matrix& em, const Matrix& target, LossKind kind) {
  if (target.rows() != em.rows() || target.cols() != em.rows())
    throw DomainError("loss: target does not match embedding rows");
  Tape t;
  return t.value(record_loss(t, t.constant(em), target, kind))(0, 0);
}

double loss(const Matrix& em, const DistanceMatrix& gt, LossKind kind, GtTransform transform) {
  if (gt.n() != em.rows()) throw DomainError("loss: ground truth size does not match embeddings");
  return loss_against_target(em, similarity_target(gt, transform), kind);
}

void TrainConfig::validate() const {
  if (embedding_dim < 1) throw DomainError("embedding_dim must be >= 1");
  if (hidden_dim < 1) throw DomainError("hidden_dim must be >= 1");
  if (gcn_layers < 1) throw DomainError("gcn_layers must be >= 1");
  if (fusion_hidden < 1) throw DomainError("fusion_hidden must be >= 1");
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  schedule.validate();
}

std::string TrainingLog::to_text() const {
  std::string out;
  char buf[96];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.loss, r.lr);
    out += buf;
  }
  return out;
}

EmbeddingModel::EmbeddingModel(const MultiScaleAdjacency& msa, const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  check_scales(msa);
  scales_ = dense_scales(msa);
  descriptors_ = scale_descriptors(msa);
  if (cfg_.fusion_mode == FusionMode::single_scale) {
    auto idx = msa.find_scale(cfg_.single_scale_k);
    if (!idx)
      throw DomainError("single_scale k=" + std::to_string(cfg_.single_scale_k) +
                        " is not among the built scales");
    single_index_ = *idx;
    Matrix mask(msa.n(), msa.n());
    for (std::size_t i = 0; i < msa.n(); ++i)
      for (const auto& e : msa.mats[single_index_].row(i)) mask(i, e.col) = 1.0;
    mask_ = std::move(mask);
  } else {
    mask_ = support_mask(msa);
  }

  Rng rng(cfg_.seed);
  fusion_ = FusionParams::init(scales_.size(), cfg_.fusion_hidden, rng);
  std::vector<std::size_t> dims{msa.n()};
  for (std::size_t l = 1; l < cfg_.gcn_layers; ++l) dims.push_back(cfg_.hidden_dim);
  dims.push_back(cfg_.embedding_dim);
  gcn_ = GcnParams::init(dims, rng);
}

std::vector<ParamTensor*> EmbeddingModel::trainable() {
  std::vector<ParamTensor*> out;
  if (cfg_.fusion_mode == FusionMode::attention) out = fusion_.tensors();
  for (auto* p : gcn_.tensors()) out.push_back(p);
  return out;
}

EmbeddingModel::Forward EmbeddingModel::record(Tape& t, bool params_as_constants) {
  auto var = [&](ParamTensor& p) { return params_as_constants ? t.constant(p.value) : t.parameter(p); };
  Tape::Var fused;
  switch (cfg_.fusion_mode) {
  case FusionMode::attention: {
    FusionVars v{var(fusion_.w1), var(fusion_.b1), var(fusion_.w2), var(fusion_.b2)};
    fused = t.minmax_masked(t.weighted_sum(record_attention(t, descriptors_, v), scales_), mask_);
    break;
  }
  case FusionMode::addition:
    fused = t.minmax_masked(t.weighted_sum(t.constant(Matrix(1, scales_.size(), 1.0)), scales_), mask_);
    break;
  case FusionMode::single_scale:
    fused = t.minmax_masked(t.constant(scales_[single_index_]), mask_);
    break;
  }
  auto fv = t.add_identity_row_normalize(fused);
  std::vector<Tape::Var> w, b;
  for (std::size_t l = 0; l < gcn_.layers(); ++l) {
    w.push_back(var(gcn_.weights[l]));
    b.push_back(var(gcn_.biases[l]));
  }
  return {fused, record_gcn(t, fused, fv, w, b)};
}

double EmbeddingModel::objective(const Matrix& target, bool with_grad) {
  const std::size_t n = scales_.front().rows();
  if (target.rows() != n || target.cols() != n) throw DomainError("objective: target shape mismatch");
  Tape t;
  auto fwd = record(t, !with_grad);
  auto out = record_loss(t, fwd.embeddings, target, cfg_.loss_kind);
  if (with_grad) {
    for (auto* p : trainable()) p->zero_grad();
    t.backward(out);
  }
  return t.value(out)(0, 0);
}

Matrix EmbeddingModel::embed() {
  Tape t;
  return t.value(record(t, true).embeddings);
}

std::vector<double> EmbeddingModel::scale_weights() const {
  switch (cfg_.fusion_mode) {
  case FusionMode::attention: {
    Tape t;
    auto w = record_attention(t, descriptors_, constant_vars(t, fusion_));
    auto row = t.value(w).row(0);
    return {row.begin(), row.end()};
  }
  case FusionMode::addition: return std::vector<double>(scales_.size(), 1.0 / static_cast<double>(scales_.size()));
  case FusionMode::single_scale: {
    std::vector<double> w(scales_.size(), 0.0);
    w[single_index_] = 1.0;
    return w;
  }
  }
  return {};
}

namespace {

std::string param_norms(EmbeddingModel& model) {
  std::string s;
  char buf[128];
  for (auto* p : model.fusion().tensors()) {
    std::snprintf(buf, sizeof buf, "%s%s=%.6g", s.empty() ? "" : ", ", p->name.c_str(),
                  frobenius_norm(p->value));
    s += buf;
  }
  for (auto* p : model.gcn().tensors()) {
    std::snprintf(buf, sizeof buf, ", %s=%.6g", p->name.c_str(), frobenius_norm(p->value));
    s += buf;
  }
  return s;
}

} // namespace

TrainResult train(const Dataset& ds, const DistanceMatrix& dm_gt, const MultiScaleAdjacency& msa,
                  const TrainConfig& cfg) {
  if (ds.size() != dm_gt.n()) throw DomainError("train: dataset and ground-truth sizes differ");
  GcnEmbedder embedder;
  return embedder.embed(dm_gt, msa, cfg);
}

TrainResult GcnEmbedder::embed(const DistanceMatrix& dm_gt, const MultiScaleAdjacency& msa,
                               const TrainConfig& cfg) {
  if (dm_gt.n() != msa.n()) throw DomainError("train: ground-truth and graph sizes differ");
  if (dm_gt.kind() != cfg.gt_kind)
    throw DomainError("train: ground-truth matrix kind does not match gt_kind");
  EmbeddingModel model(msa, cfg);
  const Matrix target = similarity_target(dm_gt, cfg.gt_transform);
  AdamWState opt(cfg.adamw);
  auto params = model.trainable();

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg.schedule, epoch);
    const double value = model.objective(target, true);
    if (!std::isfinite(value))
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " (" +
                         param_norms(model) + ")");
    result.log.epochs.push_back({epoch, value, lr});
    opt.step(params, lr);
  }
  result.embeddings = model.embed();
  if (!result.embeddings.all_finite())
    throw NumericError("non-finite embeddings after training (" + param_norms(model) + ")");
  result.scale_weights = model.scale_weights();
  return result;
}

void save_embeddings(const EmbeddingFile& file, const std::filesystem::path& path) {
  io::Writer w(path);
  w.magic("EFLXEM1");
  w.u32(static_cast<std::uint32_t>(file.embeddings.rows()));
  w.u32(static_cast<std::uint32_t>(file.embeddings.cols()));
  w.u64(file.seed);
  w.bytes(file.config_hash.data(), file.config_hash.size());
  for (double v : file.embeddings.data()) w.f64(v);
  w.finish();
}

EmbeddingFile load_embeddings(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("EFLXEM1");
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  EmbeddingFile f;
  f.seed = r.u64();
  r.bytes(f.config_hash.data(), f.config_hash.size());
  r.need(n * d * 8);
  f.embeddings = Matrix(n, d);
  for (double& v : f.embeddings.data()) v = r.f64();
  r.expect_end();
  return f;
}

std::optional<std::string> verify_config_hash(const EmbeddingFile& file, const Digest& expected) {
  if (file.config_hash == expected) return std::nullopt;
  return "embedding config hash " + to_hex(file.config_hash) + " does not match current config " +
         to_hex(expected);
}

} // namespace efflex
