#pragma once

// Config-driven stage commands behind the `efflex` binary. Each stage reads
// and writes artifact files under the configured output directory.

#include "efflex/distance.hpp"
#include "efflex/embedder.hpp"
#include "efflex/graph.hpp"
#include "efflex/hash.hpp"
#include "efflex/trajectory.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace efflex {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class SourceType { synthetic, porto, geolife };

struct PipelineConfig {
  SourceType source = SourceType::synthetic;
  std::filesystem::path source_path;
  std::optional<std::size_t> limit;
  SyntheticSpec synthetic;
  PreprocessOptions preprocess;
  std::vector<DistanceKind> distances{DistanceKind::DTW};
  std::size_t resample_len = kDefaultResampleLen;
  DistanceKind graph_kind = DistanceKind::DTW;
  ScaleList scales;
  KernelSign kernel_sign = KernelSign::negated;
  TrainConfig train;
  std::size_t query_id = 0;
  std::size_t query_k = 3;
  std::vector<std::size_t> sweep_dimensions{16, 32, 64, 128, 256};
  std::filesystem::path output_dir = "efflex_out";
  std::uint64_t seed = 7;
  std::size_t workers = 1;

  /// Canonical JSON document (defaults merged with user values).
  nlohmann::json doc;

  /// Full default document; every accepted key appears here.
  static nlohmann::json default_document();
  /// Merges `user` over the defaults, rejecting unknown keys and bad values.
  static PipelineConfig from_json(const nlohmann::json& user);
  static PipelineConfig load(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

  /// Applies "dotted.key=value" to a user document; value is parsed as JSON
  /// when possible, otherwise taken as a string.
  static void apply_override(nlohmann::json& user, const std::string& assignment);

  /// Rejects scales with k >= n and top-50 evaluation with n <= 50.
  void validate_for(std::size_t n) const;

  /// SHA-256 of the result-affecting part of the config.
  Digest config_hash() const;
  /// Worker count after the EFFLEX_THREADS cap.
  std::size_t effective_workers() const;
  /// The ground-truth kind followed by graph_kind and `distances`, deduplicated.
  std::vector<DistanceKind> required_kinds() const;
};

namespace paths {
std::filesystem::path dataset(const PipelineConfig& c);
std::filesystem::path distances(const PipelineConfig& c, DistanceKind k);
std::filesystem::path adjacency(const PipelineConfig& c, DistanceKind k, std::size_t scale);
std::filesystem::path embeddings(const PipelineConfig& c);
std::filesystem::path training_log(const PipelineConfig& c);
std::filesystem::path report(const PipelineConfig& c);
std::filesystem::path query_geojson(const PipelineConfig& c, std::size_t id);
std::filesystem::path query_text(const PipelineConfig& c, std::size_t id);
std::filesystem::path sweep_csv(const PipelineConfig& c, std::string_view axis);
} // namespace paths

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumeric = 3 };

struct CommandArgs {
  std::optional<std::size_t> query_id;
  std::optional<std::size_t> k;
  std::string axis = "dimension";
};

/// Builds the dataset described by the config (before preprocessing).
Dataset load_source(const PipelineConfig& cfg);

// Stage commands. They throw on failure; run_command maps exceptions to
// exit codes.
void cmd_ingest(const PipelineConfig& cfg, std::ostream& out);
void cmd_distances(const PipelineConfig& cfg, std::ostream& out);
void cmd_train(const PipelineConfig& cfg, std::ostream& out);
void cmd_evaluate(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_query(const PipelineConfig& cfg, std::size_t query_id, std::size_t k, std::ostream& out);
void cmd_sweep(const PipelineConfig& cfg, std::string_view axis, std::ostream& out, std::ostream& err);

/// Runs one named command under the output-directory lock and returns the
/// process exit code. Errors are written to `err`.
int run_command(std::string_view name, const PipelineConfig& cfg, const CommandArgs& args,
                std::ostream& out, std::ostream& err);

} // namespace efflex
