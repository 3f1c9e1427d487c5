#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nirom/latent.hpp"
#include "nirom/neuralnet.hpp"
#include "nirom/ode.hpp"

namespace nirom {

/// Affine map from physical time onto model time: (t - origin) / span.
struct TimeMap {
  double origin = 0.0;
  double span = 1.0;

  double forward(double t) const { return (t - origin) / span; }
  double inverse(double s) const { return origin + s * span; }
  Vector forward(const Vector& t) const { return (t.array() - origin) / span; }
  Vector inverse(const Vector& s) const { return (s.array() * span + origin).matrix(); }
};

std::pair<Vector, TimeMap> normalize_times(const Vector& times);

/// Optional per-component map of the latent onto [-1, 1].
struct LatentScale {
  bool enabled = false;
  Vector center;
  Vector half_range;

  Matrix forward(const Matrix& z) const;
  Matrix inverse(const Matrix& z) const;
};

struct NodeArchitecture {
  std::vector<Index> hidden{512};
  Activation activation = Activation::elu;
  Index augment = 0;
  bool time_input = false;
  bool bias = true;
};

NodeArchitecture node_architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NodeArchitecture& arch);

struct NODEModel {
  MLPNet net;  // right-hand side on the (latent + augmented) state
  Index latent_dim = 0;
  Index augment = 0;
  bool time_input = false;
  SolverSpec solver = SolverSpec::rk4();
  TimeMap time_map;
  LatentScale scale;

  Index state_dim() const { return latent_dim + augment; }
};

NODEModel build_node(const NodeArchitecture& arch, Index latent_dim, const SolverSpec& solver, std::uint64_t seed);
void validate(const NODEModel& model);

/// Fits the time map (and the latent scale when `scale_latent`) to physical
/// training data and returns the data in model coordinates.
LatentTrajectory fit_normalization(NODEModel& model, const LatentTrajectory& physical, bool scale_latent);
LatentTrajectory to_model_space(const NODEModel& model, const LatentTrajectory& physical);
LatentTrajectory to_physical_space(const NODEModel& model, const LatentTrajectory& model_space);

/// Full (latent + augmented) state at every query time; column 0 is the
/// initial state at times[0].
Matrix solve_state(const NODEModel& model, const Vector& z0, const Vector& times, const SolverSpec& solver,
                   SolveStats* stats = nullptr);
/// Latent part of solve_state() with the model's own solver.
LatentTrajectory ode_solve(const NODEModel& model, const Vector& z0, const Vector& times);

/// Mean square error over all training times and latent components, with the
/// trajectory started from the first training column. Model coordinates.
double trajectory_loss(const NODEModel& model, const LatentTrajectory& data);

enum class GradientMode { discrete, adjoint };
GradientMode parse_gradient_mode(const std::string& name);
const char* gradient_mode_name(GradientMode mode);

struct LossGradient {
  double loss = 0.0;
  Vector params;
};

/// Discrete mode backpropagates through the stored rk4 stages and needs an
/// rk4 solver; adjoint mode integrates the adjoint system backward with the
/// model's solver.
LossGradient gradient(const NODEModel& model, const LatentTrajectory& data, GradientMode mode);

struct NodeTrainConfig {
  Index epochs = 2000;
  OptimizerConfig optimizer{Algorithm::rmsprop, 1e-3, 0.9, 0.999, 0.9, 1e-7, Schedule::staircase(5000, 0.5)};
  GradientMode mode = GradientMode::discrete;
};

NodeTrainConfig node_train_config_from_json(const nlohmann::json& j);

struct NodeTrainResult {
  std::vector<LossRecord> history;
  double final_loss = 0.0;
  bool diverged = false;
  std::string message;
};

/// Full-trajectory gradient step per epoch on model-coordinate data.
NodeTrainResult train_node(NODEModel& model, const LatentTrajectory& data, const NodeTrainConfig& cfg);

/// `z0` is the physical latent state at physical time `t_start`; the result
/// holds physical latent values at `times`.
LatentTrajectory predict(const NODEModel& model, const Vector& z0, double t_start, const Vector& times);
LatentTrajectory predict(const NODEModel& model, const Vector& z0, double t_start, const Vector& times,
                         const SolverSpec& solver);

void save_node(const NODEModel& model, const std::filesystem::path& path);
NODEModel load_node(const std::filesystem::path& path);

}  // namespace nirom
