#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nirom/autoencoder.hpp"
#include "nirom/error.hpp"
#include "nirom/metrics.hpp"
#include "nirom/node.hpp"
#include "nirom/pod.hpp"
#include "nirom/rbf.hpp"
#include "nirom/synthgen.hpp"

namespace nirom {

inline constexpr int kPipelineSchemaVersion = 1;

/// Error raised by a pipeline stage; `stage` is one of load, scale, reduce,
/// propagate, predict, reconstruct, evaluate, persist.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, ErrorCode code, const std::string& message)
      : Error(code, stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct TimeWindow {
  double start = 0.0;
  double end = 0.0;
  double dt = 0.0;

  Vector grid() const;
  bool operator==(const TimeWindow&) const = default;
};

struct ScalingConfig {
  bool enabled = false;
  Interval target = kUnitInterval;
  Granularity granularity = Granularity::per_field;
};

struct ReducerConfig {
  enum class Kind { none, pod, ae };
  Kind kind = Kind::pod;
  // pod
  Truncation truncation = Truncation::energy(0.01);
  bool per_field = true;
  bool center = false;
  // ae: one network per field, each with `latent_dim` codes
  Index latent_dim = 3;
  nlohmann::json ae_spec = nlohmann::json::object();  // AESpec fields except dimensions
  AETrainConfig ae_train;
};

struct PropagatorConfig {
  enum class Kind { node, rbf, dmd };
  Kind kind = Kind::node;
  // node
  NodeArchitecture architecture;
  SolverSpec solver = SolverSpec::rk4();
  std::optional<SolverSpec> predict_solver;
  NodeTrainConfig node_train;
  bool latent_scaling = false;
  // rbf
  RBFConfig rbf;
  // dmd
  Index rank = 8;
};

struct PipelineConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::optional<GeneratorSpec> generator;
  std::filesystem::path data_file;
  ScalingConfig scaling;
  ReducerConfig reducer;
  PropagatorConfig propagator;
  std::optional<TimeWindow> train;    // unset: the whole data set
  std::optional<TimeWindow> predict;  // unset: the training window
  std::filesystem::path output;
  nlohmann::json source;  // the document this was parsed from
};

/// Relative paths in the document are resolved against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct RunReport {
  nlohmann::json summary;
  nlohmann::json timings;
  std::optional<ErrorSeries> errors;
  std::filesystem::path output;
};

/// Runs every stage, writing artifacts under config.output. On failure a
/// FAILED marker is written there and a PipelineError is thrown.
RunReport run_pipeline(const PipelineConfig& config);

/// Runs the configs on up to `workers` threads (0: NIROM_THREADS or the
/// hardware concurrency) and returns the merged error CSV.
std::string compare_pipelines(const std::vector<PipelineConfig>& configs, unsigned workers = 0);

/// Worker cap from NIROM_THREADS, else the hardware concurrency (at least 1).
unsigned default_workers();

}  // namespace nirom
