#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "nirom/latent.hpp"

namespace nirom {

enum class Kernel { gaussian, multiquadric, inverse_multiquadric };

Kernel parse_kernel(const std::string& name);
const char* kernel_name(Kernel k);
double kernel_value(Kernel k, double r, double c);

struct RBFConfig {
  Kernel kernel = Kernel::gaussian;
  double shape = 0.01;
  std::optional<double> lambda;  // unset: 1e-10 * trace(Phi) / centers
};

RBFConfig rbf_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RBFConfig& cfg);

/// Interpolant of the one-step increment z^{k+1} - z^k as a function of z^k.
struct RBFModel {
  Matrix centers;  // m x (M-1)
  Matrix weights;  // m x (M-1)
  Kernel kernel = Kernel::gaussian;
  double shape = 0.01;
  double lambda = 0.0;
  double dt = 1.0;       // training step
  double t_origin = 0.0;  // time of the first center

  Index dim() const { return centers.rows(); }
};

RBFModel fit_rbf(const LatentTrajectory& latent, const RBFConfig& cfg = {});
Vector evaluate(const RBFModel& model, const Vector& z);
/// Explicit stepping z <- z + evaluate(z)/substeps. Returns the initial state
/// plus substeps * steps further states at dt/substeps spacing from t_start.
LatentTrajectory predict(const RBFModel& model, const Vector& z0, double t_start, Index steps, Index substeps = 1);

void save_rbf(const RBFModel& model, const std::filesystem::path& path);
RBFModel load_rbf(const std::filesystem::path& path);

}  // namespace nirom
