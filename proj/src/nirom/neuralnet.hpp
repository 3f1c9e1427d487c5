#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nirom/linalg.hpp"

namespace nirom {

enum class Activation { linear, relu, elu, tanh, sigmoid };
enum class Mode { train, infer };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

struct LayerSpec {
  Index in = 0;
  Index out = 0;
  Activation activation = Activation::linear;
  bool batchnorm = false;
  bool bias = true;
};

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-3;

struct LayerCache {
  Matrix input;   // in x B
  Matrix xhat;    // normalized pre-activation (BatchNorm layers only)
  Vector inv_std; // BatchNorm only
  Matrix act_in;  // activation argument
  Matrix output;  // out x B
};

/// Per-batch intermediates from forward(), consumed by backward(). Tied to
/// the parameter version it was produced with.
struct ForwardCache {
  std::vector<LayerCache> layers;
  Mode mode = Mode::infer;
  std::uint64_t version = 0;
};

struct Gradients {
  Vector params;  // same layout as MLPNet::parameters()
  Matrix input;   // d loss / d input, in x B
};

/// Fully connected network: each layer is Dense, then optional BatchNorm, then
/// an activation. All trainables live in one flat vector (the layout is W
/// column-major, b, then gamma and beta per layer).
class MLPNet {
 public:
  MLPNet() = default;
  MLPNet(std::vector<LayerSpec> layers, std::uint64_t seed);

  Index input_dim() const { return specs_.empty() ? 0 : specs_.front().in; }
  Index output_dim() const { return specs_.empty() ? 0 : specs_.back().out; }
  Index parameter_count() const { return params_.size(); }
  const std::vector<LayerSpec>& layers() const { return specs_; }

  const Vector& parameters() const { return params_; }
  void set_parameters(const Vector& params);
  /// Mutable view; call touch() after writing through it.
  Vector& mutable_parameters() { return params_; }
  void touch();
  std::uint64_t version() const { return version_; }

  Eigen::Map<Matrix> weight(size_t layer);
  Eigen::Map<const Matrix> weight(size_t layer) const;
  Eigen::Map<Vector> bias(size_t layer);
  Eigen::Map<const Vector> bias(size_t layer) const;

  const Vector& running_mean(size_t layer) const { return running_mean_[layer]; }
  const Vector& running_var(size_t layer) const { return running_var_[layer]; }

  /// Train mode normalizes with batch statistics and updates running stats.
  Matrix forward(const Matrix& x, Mode mode, ForwardCache* cache = nullptr);
  /// Inference-mode forward; never mutates the net.
  Matrix infer(const Matrix& x) const;
  Matrix infer(const Matrix& x, ForwardCache* cache) const;

  Gradients backward(const ForwardCache& cache, const Matrix& d_output) const;

  nlohmann::json architecture() const;
  static MLPNet from_architecture(const nlohmann::json& arch);

  Vector state_vector() const;  // running statistics, flattened
  void set_state_vector(const Vector& state);

 private:
  struct Offsets {
    Index weight = 0, bias = -1, gamma = -1, beta = -1;
  };

  Matrix run(const Matrix& x, Mode mode, ForwardCache* cache, bool update_stats);

  std::vector<LayerSpec> specs_;
  std::vector<Offsets> offsets_;
  Vector params_;
  std::vector<Vector> running_mean_;
  std::vector<Vector> running_var_;
  std::uint64_t version_ = 0;
};

// ---------------------------------------------------------------------------
// Optimizers and learning-rate schedules

enum class Algorithm { adam, rmsprop };

struct Schedule {
  enum class Kind { constant, staircase, plateau };
  Kind kind = Kind::constant;
  Index interval = 5000;  // staircase
  double rate = 0.5;      // staircase
  Index patience = 200;   // plateau
  double factor = 0.5;    // plateau
  double min_delta = 1e-8;

  static Schedule constant() { return {}; }
  static Schedule staircase(Index interval, double rate) { return {Kind::staircase, interval, rate}; }
  static Schedule plateau(Index patience, double factor) {
    Schedule s;
    s.kind = Kind::plateau;
    s.patience = patience;
    s.factor = factor;
    return s;
  }
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::adam;
  double lr = 1e-3;
  double momentum = 0.9;  // Adam beta1, or RMSProp velocity momentum
  double beta2 = 0.999;
  double rho = 0.9;       // RMSProp accumulator decay
  double epsilon = 1e-7;
  Schedule schedule;
};

void validate(const OptimizerConfig& cfg);
OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig defaults = {});
nlohmann::json to_json(const OptimizerConfig& cfg);

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Index parameter_count);

  /// Learning rate in effect for `epoch`.
  double learning_rate(Index epoch) const;
  void step(MLPNet& net, const Vector& gradient, Index epoch);
  void step(Vector& params, const Vector& gradient, Index epoch);
  /// Feeds the plateau schedule; no-op for the others.
  void report_loss(double loss);

  const OptimizerConfig& config() const { return cfg_; }
  Index steps() const { return steps_; }

 private:
  OptimizerConfig cfg_;
  Vector first_;   // Adam m / RMSProp velocity
  Vector second_;  // Adam v / RMSProp mean square
  Index steps_ = 0;
  double plateau_lr_;
  double best_loss_;
  Index wait_ = 0;
};

struct LossRecord {
  Index epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

std::string history_csv(const std::vector<LossRecord>& history);

double mse(const Matrix& prediction, const Matrix& target);
/// Gradient of mse() with respect to `prediction`.
Matrix mse_gradient(const Matrix& prediction, const Matrix& target);

// ---------------------------------------------------------------------------
// Checkpoints: "NIROMNET", u32 version, u64 header length, JSON header, then
// u64 count + float64 LE parameters and u64 count + float64 LE running stats,
// concatenated over the stored nets.

struct Checkpoint {
  nlohmann::json meta;
  std::vector<MLPNet> nets;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<const MLPNet*>& nets,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nirom
