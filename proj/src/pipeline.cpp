#include "efflex/pipeline.hpp"

#include "efflex/errors.hpp"
#include "efflex/evaluation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace efflex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) merge_checked(slot, it.value(), key);
    else slot = it.value();
  }
}

template <class T>
T get(const json& doc, const char* section, const char* key) {
  const json& v = section ? doc.at(section).at(key) : doc.at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + (section ? std::string(section) + "." : "") + key +
                      "' has the wrong type");
  }
}

std::size_t get_count(const json& doc, const char* section, const char* key) {
  const json& v = section ? doc.at(section).at(key) : doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config key '") + (section ? std::string(section) + "." : "") + key +
                      "' must be a non-negative integer");
  return v.get<std::size_t>();
}

DistanceKind get_kind(const std::string& name) {
  auto k = parse_distance_kind(name);
  if (!k) throw ConfigError("unknown distance kind '" + name + "'");
  return *k;
}

class DirLock {
public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".efflex.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw IoError("output directory is locked by another command: " + path_.string());
  }
  ~DirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

private:
  fs::path path_;
  int fd_ = -1;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void validate_scales(const PipelineConfig& cfg, std::size_t n) { cfg.scales.validate(n); }

void validate_eval(std::size_t n) {
  if (n <= 50)
    throw ConfigError("top-50 evaluation needs more than 50 trajectories (have " + std::to_string(n) + ")");
}

DistanceMatrix load_matrix(const PipelineConfig& cfg, DistanceKind kind, std::size_t n) {
  auto dm = load_distance_matrix(paths::distances(cfg, kind));
  if (dm.kind() != kind) throw FormatError("distance matrix file holds the wrong kind");
  if (dm.n() != n) throw FormatError("distance matrix size does not match the dataset");
  return dm;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string metrics_table(const EvalReport& r) {
  char buf[160];
  std::string s;
  std::snprintf(buf, sizeof buf, "%-10s %-6s %-8s %-8s %-8s\n", "distance", "n", "HR@10", "HR@50", "R10@50");
  s += buf;
  std::snprintf(buf, sizeof buf, "%-10s %-6zu %-8.4f %-8.4f %-8.4f\n",
                std::string(to_string(r.distance)).c_str(), r.n, r.hr10, r.hr50, r.r10_50);
  s += buf;
  return s;
}

} // namespace

json PipelineConfig::default_document() {
  return json{
      {"source",
       {{"type", "synthetic"},
        {"path", ""},
        {"limit", nullptr},
        {"n_clusters", 4},
        {"per_cluster", 50},
        {"points_per_traj", 60},
        {"noise_m", 25.0}}},
      {"preprocess", {{"min_points", 50}, {"grid_size_m", 50.0}, {"grid_snap", false}}},
      {"distances", json::array({"dtw"})},
      {"resample_len", kDefaultResampleLen},
      {"graph_kind", nullptr},
      {"scales", json::array({10, 20, 50})},
      {"kernel_sign", "negated"},
      {"train",
       {{"embedding_dim", 128},
        {"hidden_dim", 256},
        {"gcn_layers", 2},
        {"fusion_hidden", 16},
        {"epochs", 50},
        {"base_lr", 0.001},
        {"gamma", 0.1},
        {"step_epochs", 5},
        {"weight_decay", 0.01},
        {"loss", "cosine"},
        {"fusion", "attention"},
        {"single_scale_k", 20},
        {"gt_kind", "dtw"},
        {"gt_transform", "softmax_sim"}}},
      {"query", {{"id", 0}, {"k", 3}}},
      {"sweep", {{"dimensions", json::array({16, 32, 64, 128, 256})}}},
      {"output_dir", "efflex_out"},
      {"seed", 7},
      {"workers", 1},
  };
}

PipelineConfig PipelineConfig::from_json(const json& user) {
  json doc = default_document();
  merge_checked(doc, user, "");

  PipelineConfig c;
  const auto type = get<std::string>(doc, "source", "type");
  if (type == "synthetic") c.source = SourceType::synthetic;
  else if (type == "porto") c.source = SourceType::porto;
  else if (type == "geolife") c.source = SourceType::geolife;
  else throw ConfigError("unknown source.type '" + type + "'");
  c.source_path = get<std::string>(doc, "source", "path");
  if (!doc["source"]["limit"].is_null()) c.limit = get_count(doc, "source", "limit");
  if (c.source != SourceType::synthetic && c.source_path.empty())
    throw ConfigError("source.path is required for " + type + " sources");

  c.seed = get<std::uint64_t>(doc, nullptr, "seed");
  c.synthetic.n_clusters = get_count(doc, "source", "n_clusters");
  c.synthetic.per_cluster = get_count(doc, "source", "per_cluster");
  c.synthetic.points_per_traj = get_count(doc, "source", "points_per_traj");
  c.synthetic.noise_m = get<double>(doc, "source", "noise_m");
  c.synthetic.seed = c.seed;
  if (c.synthetic.n_clusters < 1 || c.synthetic.per_cluster < 1 || c.synthetic.points_per_traj < 1)
    throw ConfigError("synthetic counts must be >= 1");
  if (!(c.synthetic.noise_m >= 0.0)) throw ConfigError("source.noise_m must be >= 0");

  c.preprocess.min_points = get_count(doc, "preprocess", "min_points");
  c.preprocess.grid_size_m = get<double>(doc, "preprocess", "grid_size_m");
  c.preprocess.grid_snap = get<bool>(doc, "preprocess", "grid_snap");
  if (!(c.preprocess.grid_size_m > 0.0)) throw ConfigError("preprocess.grid_size_m must be positive");

  c.distances.clear();
  if (!doc["distances"].is_array() || doc["distances"].empty())
    throw ConfigError("distances must be a non-empty array");
  for (const auto& d : doc["distances"]) {
    if (!d.is_string()) throw ConfigError("distances entries must be strings");
    c.distances.push_back(get_kind(d.get<std::string>()));
  }
  c.resample_len = get_count(doc, nullptr, "resample_len");
  if (c.resample_len < 2) throw ConfigError("resample_len must be >= 2");

  c.scales.ks.clear();
  if (!doc["scales"].is_array() || doc["scales"].empty()) throw ConfigError("scales must be a non-empty array");
  for (const auto& k : doc["scales"]) {
    if (!k.is_number_integer() || k.get<long long>() < 1) throw ConfigError("scales entries must be integers >= 1");
    c.scales.ks.push_back(k.get<std::size_t>());
  }
  for (std::size_t i = 1; i < c.scales.ks.size(); ++i)
    if (c.scales.ks[i] <= c.scales.ks[i - 1]) throw ConfigError("scales must be strictly increasing");

  auto sign = parse_kernel_sign(get<std::string>(doc, nullptr, "kernel_sign"));
  if (!sign) throw ConfigError("kernel_sign must be 'negated' or 'as_written'");
  c.kernel_sign = *sign;

  TrainConfig& t = c.train;
  t.embedding_dim = get_count(doc, "train", "embedding_dim");
  t.hidden_dim = get_count(doc, "train", "hidden_dim");
  t.gcn_layers = get_count(doc, "train", "gcn_layers");
  t.fusion_hidden = get_count(doc, "train", "fusion_hidden");
  t.epochs = get_count(doc, "train", "epochs");
  t.schedule.base_lr = get<double>(doc, "train", "base_lr");
  t.schedule.gamma = get<double>(doc, "train", "gamma");
  t.schedule.step_epochs = get_count(doc, "train", "step_epochs");
  t.adamw.weight_decay = get<double>(doc, "train", "weight_decay");
  auto loss = parse_loss_kind(get<std::string>(doc, "train", "loss"));
  if (!loss) throw ConfigError("train.loss must be cosine, l1 or mse");
  t.loss_kind = *loss;
  auto fusion = parse_fusion_mode(get<std::string>(doc, "train", "fusion"));
  if (!fusion) throw ConfigError("train.fusion must be attention, addition or single_scale");
  t.fusion_mode = *fusion;
  t.single_scale_k = get_count(doc, "train", "single_scale_k");
  t.gt_kind = get_kind(get<std::string>(doc, "train", "gt_kind"));
  auto gtt = parse_gt_transform(get<std::string>(doc, "train", "gt_transform"));
  if (!gtt) throw ConfigError("train.gt_transform must be softmax_sim or raw_neg");
  t.gt_transform = *gtt;
  t.seed = c.seed;
  try {
    t.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (t.fusion_mode == FusionMode::single_scale &&
      std::find(c.scales.ks.begin(), c.scales.ks.end(), t.single_scale_k) == c.scales.ks.end())
    throw ConfigError("train.single_scale_k must be one of scales");

  c.graph_kind = doc["graph_kind"].is_null() ? t.gt_kind : get_kind(get<std::string>(doc, nullptr, "graph_kind"));
  c.query_id = get_count(doc, "query", "id");
  c.query_k = get_count(doc, "query", "k");
  if (c.query_k < 1) throw ConfigError("query.k must be >= 1");
  c.sweep_dimensions.clear();
  for (const auto& d : doc["sweep"]["dimensions"]) {
    if (!d.is_number_integer() || d.get<long long>() < 1) throw ConfigError("sweep.dimensions entries must be >= 1");
    c.sweep_dimensions.push_back(d.get<std::size_t>());
  }
  c.output_dir = get<std::string>(doc, nullptr, "output_dir");
  c.workers = get_count(doc, nullptr, "workers");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  c.doc = std::move(doc);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config: " + path.string());
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
  }
  for (const auto& o : overrides) apply_override(user, o);
  return from_json(user);
}

void PipelineConfig::apply_override(json& user, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &user;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("bad override key: " + key);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void PipelineConfig::validate_for(std::size_t n) const {
  validate_scales(*this, n);
  validate_eval(n);
}

Digest PipelineConfig::config_hash() const {
  json h = doc;
  h.erase("output_dir");
  h.erase("workers");
  h.erase("query");
  h.erase("sweep");
  return sha256(h.dump());
}

std::size_t PipelineConfig::effective_workers() const {
  std::size_t w = workers;
  if (const char* env = std::getenv("EFFLEX_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) w = std::min(w, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(w, 1);
}

std::vector<DistanceKind> PipelineConfig::required_kinds() const {
  std::vector<DistanceKind> out{train.gt_kind};
  auto add = [&](DistanceKind k) {
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  };
  add(graph_kind);
  for (auto k : distances) add(k);
  return out;
}

namespace paths {
fs::path dataset(const PipelineConfig& c) { return c.output_dir / "dataset.eflxds"; }
fs::path distances(const PipelineConfig& c, DistanceKind k) {
  return c.output_dir / ("dist_" + std::string(to_string(k)) + ".eflxdm");
}
fs::path adjacency(const PipelineConfig& c, DistanceKind k, std::size_t scale) {
  return c.output_dir / ("adj_" + std::string(to_string(k)) + "_k" + std::to_string(scale) + ".eflxaj");
}
fs::path embeddings(const PipelineConfig& c) { return c.output_dir / "embeddings.eflxem"; }
fs::path training_log(const PipelineConfig& c) { return c.output_dir / "training_log.csv"; }
fs::path report(const PipelineConfig& c) { return c.output_dir / "report.json"; }
fs::path query_geojson(const PipelineConfig& c, std::size_t id) {
  return c.output_dir / ("query_" + std::to_string(id) + ".geojson");
}
fs::path query_text(const PipelineConfig& c, std::size_t id) {
  return c.output_dir / ("query_" + std::to_string(id) + ".txt");
}
fs::path sweep_csv(const PipelineConfig& c, std::string_view axis) {
  return c.output_dir / ("sweep_" + std::string(axis) + ".csv");
}
} // namespace paths

Dataset load_source(const PipelineConfig& cfg) {
  switch (cfg.source) {
  case SourceType::synthetic: return generate_synthetic(cfg.synthetic);
  case SourceType::porto: return parse_porto_csv(cfg.source_path, cfg.limit);
  case SourceType::geolife: return parse_geolife_plt(cfg.source_path, cfg.limit);
  }
  throw ConfigError("unknown source type");
}

void cmd_ingest(const PipelineConfig& cfg, std::ostream& out) {
  Dataset raw = load_source(cfg);
  if (cfg.source == SourceType::synthetic && cfg.limit && *cfg.limit < raw.size())
    raw.trajectories.resize(*cfg.limit);
  Dataset ds = preprocess(raw, cfg.preprocess);
  save_dataset(ds, paths::dataset(cfg));

  std::size_t lo = ds.trajectories.front().size(), hi = lo, total = 0;
  for (const auto& t : ds.trajectories) {
    lo = std::min(lo, t.size());
    hi = std::max(hi, t.size());
    total += t.size();
  }
  out << "dataset: " << ds.provenance << "\n"
      << "trajectories: " << ds.size() << " (parse-skipped " << raw.skipped << ", filtered "
      << raw.size() - ds.size() << ")\n"
      << "points per trajectory: min " << lo << ", mean "
      << fmt("%.1f", static_cast<double>(total) / static_cast<double>(ds.size())) << ", max " << hi << "\n"
      << "wrote " << paths::dataset(cfg).string() << "\n";
}

void cmd_distances(const PipelineConfig& cfg, std::ostream& out) {
  const Dataset ds = load_dataset(paths::dataset(cfg));
  PairwiseOptions opts{cfg.effective_workers(), cfg.resample_len};
  for (auto kind : cfg.required_kinds()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dm = pairwise_matrix(ds, kind, opts);
    save_distance_matrix(dm, paths::distances(cfg, kind));
    out << to_string(kind) << ": n=" << dm.n() << " workers=" << opts.workers << " "
        << fmt("%.3f", seconds_since(t0)) << "s -> " << paths::distances(cfg, kind).string() << "\n";
  }
}

void cmd_train(const PipelineConfig& cfg, std::ostream& out) {
  const Dataset ds = load_dataset(paths::dataset(cfg));
  validate_scales(cfg, ds.size());
  const auto gt = load_matrix(cfg, cfg.train.gt_kind, ds.size());
  const auto graph_dm = cfg.graph_kind == cfg.train.gt_kind ? gt : load_matrix(cfg, cfg.graph_kind, ds.size());

  const auto msa = build_multiscale(graph_dm, cfg.scales, cfg.kernel_sign);
  for (std::size_t i = 0; i < msa.mats.size(); ++i)
    save_adjacency(msa.mats[i], paths::adjacency(cfg, cfg.graph_kind, cfg.scales.ks[i]));

  const auto t0 = std::chrono::steady_clock::now();
  const auto res = train(ds, gt, msa, cfg.train);
  save_embeddings({res.embeddings, cfg.seed, cfg.config_hash()}, paths::embeddings(cfg));
  write_text(paths::training_log(cfg), res.log.to_text());

  out << "trained " << res.log.epochs.size() << " epochs in " << fmt("%.2f", seconds_since(t0))
      << "s, loss " << fmt("%.6g", res.log.epochs.front().loss) << " -> "
      << fmt("%.6g", res.log.epochs.back().loss) << "\nscale weights:";
  for (std::size_t i = 0; i < res.scale_weights.size(); ++i)
    out << " k" << cfg.scales.ks[i] << "=" << fmt("%.4f", res.scale_weights[i]);
  out << "\nwrote " << paths::embeddings(cfg).string() << "\n";
}

void cmd_evaluate(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto file = load_embeddings(paths::embeddings(cfg));
  const std::size_t n = file.embeddings.rows();
  validate_eval(n);
  if (auto warning = verify_config_hash(file, cfg.config_hash())) err << "warning: " << *warning << "\n";
  const auto gt = load_matrix(cfg, cfg.train.gt_kind, n);
  const auto report = evaluate(file.embeddings, gt, to_hex(file.config_hash));
  write_text(paths::report(cfg), to_json(report).dump(2) + "\n");
  out << metrics_table(report);
}

void cmd_query(const PipelineConfig& cfg, std::size_t query_id, std::size_t k, std::ostream& out) {
  const Dataset ds = load_dataset(paths::dataset(cfg));
  const auto file = load_embeddings(paths::embeddings(cfg));
  if (file.embeddings.rows() != ds.size()) throw FormatError("embeddings do not match the dataset");
  if (query_id >= ds.size())
    throw DomainError("query id " + std::to_string(query_id) + " out of range (n=" + std::to_string(ds.size()) + ")");
  if (k < 1 || k >= ds.size()) throw DomainError("k must be in [1, n)");
  const auto gt = load_matrix(cfg, cfg.train.gt_kind, ds.size());
  const auto result = topk_query(file.embeddings, gt, query_id, k);
  write_text(paths::query_geojson(cfg, query_id), query_geojson(ds, result).dump(2) + "\n");
  const auto table = query_table(result);
  write_text(paths::query_text(cfg, query_id), table);
  out << table;
}

void cmd_sweep(const PipelineConfig& cfg, std::string_view axis, std::ostream& out, std::ostream& err) {
  struct Run {
    std::string label;
    TrainConfig train;
  };
  std::vector<Run> runs;
  if (axis == "dimension") {
    for (auto d : cfg.sweep_dimensions) {
      TrainConfig t = cfg.train;
      t.embedding_dim = d;
      runs.push_back({std::to_string(d), t});
    }
  } else if (axis == "scale") {
    for (auto k : cfg.scales.ks) {
      TrainConfig t = cfg.train;
      t.fusion_mode = FusionMode::single_scale;
      t.single_scale_k = k;
      runs.push_back({std::to_string(k), t});
    }
    TrainConfig t = cfg.train;
    t.fusion_mode = FusionMode::attention;
    runs.push_back({"multi", t});
  } else if (axis == "loss") {
    for (auto l : {LossKind::cosine, LossKind::l1, LossKind::mse}) {
      TrainConfig t = cfg.train;
      t.loss_kind = l;
      runs.push_back({std::string(to_string(l)), t});
    }
  } else if (axis == "fusion") {
    for (auto f : {FusionMode::attention, FusionMode::addition}) {
      TrainConfig t = cfg.train;
      t.fusion_mode = f;
      runs.push_back({std::string(to_string(f)), t});
    }
  } else {
    throw ConfigError("unknown sweep axis '" + std::string(axis) + "' (dimension, scale, loss, fusion)");
  }

  const Dataset ds = load_dataset(paths::dataset(cfg));
  cfg.validate_for(ds.size());
  const auto gt = load_matrix(cfg, cfg.train.gt_kind, ds.size());
  const auto graph_dm = cfg.graph_kind == cfg.train.gt_kind ? gt : load_matrix(cfg, cfg.graph_kind, ds.size());
  const auto msa = build_multiscale(graph_dm, cfg.scales, cfg.kernel_sign);

  std::string csv = "axis,value,hr10,hr50,r10_50,wall_s,status\n";
  for (const auto& run : runs) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string row = std::string(axis) + "," + run.label + ",";
    try {
      const auto res = train(ds, gt, msa, run.train);
      const auto rep = evaluate(res.embeddings, gt);
      row += fmt("%.6f", rep.hr10) + "," + fmt("%.6f", rep.hr50) + "," + fmt("%.6f", rep.r10_50) + "," +
             fmt("%.3f", seconds_since(t0)) + ",ok";
    } catch (const std::exception& e) {
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      row += ",,," + fmt("%.3f", seconds_since(t0)) + ",failed: " + msg;
      err << "sweep run " << run.label << " failed: " << e.what() << "\n";
    }
    out << row << "\n";
    csv += row + "\n";
  }
  write_text(paths::sweep_csv(cfg, axis), csv);
}

int run_command(std::string_view name, const PipelineConfig& cfg, const CommandArgs& args, std::ostream& out,
                std::ostream& err) {
  try {
    DirLock lock(cfg.output_dir);
    if (name == "ingest") cmd_ingest(cfg, out);
    else if (name == "distances") cmd_distances(cfg, out);
    else if (name == "train") cmd_train(cfg, out);
    else if (name == "evaluate") cmd_evaluate(cfg, out, err);
    else if (name == "query") cmd_query(cfg, args.query_id.value_or(cfg.query_id), args.k.value_or(cfg.query_k), out);
    else if (name == "sweep") cmd_sweep(cfg, args.axis, out, err);
    else throw ConfigError("unknown command '" + std::string(name) + "'");
    return kExitOk;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

} // namespace efflex
