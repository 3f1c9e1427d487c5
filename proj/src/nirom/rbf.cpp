#include "nirom/rbf.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "nirom/error.hpp"

namespace nirom {

namespace {

Matrix kernel_matrix(const Matrix& centers, Kernel k, double c) {
  const Index n = centers.cols();
  Matrix phi(n, n);
  for (Index j = 0; j < n; ++j) {
    phi(j, j) = kernel_value(k, 0.0, c);
    for (Index i = j + 1; i < n; ++i) {
      const double v = kernel_value(k, (centers.col(i) - centers.col(j)).norm(), c);
      phi(i, j) = v;
      phi(j, i) = v;
    }
  }
  return phi;
}

void check_uniform(const Vector& times) {
  const double dt = times[1] - times[0];
  for (Index k = 1; k < times.size(); ++k)
    require(std::abs((times[k] - times[k - 1]) - dt) <= 1e-6 * std::abs(dt), ErrorCode::invalid_argument,
            "rbf: training times must be uniformly spaced");
}

}  // namespace

Kernel parse_kernel(const std::string& name) {
  if (name == "gaussian") return Kernel::gaussian;
  if (name == "multiquadric") return Kernel::multiquadric;
  if (name == "inverse_multiquadric") return Kernel::inverse_multiquadric;
  fail(ErrorCode::config, "unknown kernel '" + name + "'");
}

const char* kernel_name(Kernel k) {
  switch (k) {
    case Kernel::gaussian: return "gaussian";
    case Kernel::multiquadric: return "multiquadric";
    case Kernel::inverse_multiquadric: return "inverse_multiquadric";
  }
  return "?";
}

double kernel_value(Kernel k, double r, double c) {
  const double s = (c * r) * (c * r);
  switch (k) {
    case Kernel::gaussian: return std::exp(-s);
    case Kernel::multiquadric: return std::sqrt(1.0 + s);
    case Kernel::inverse_multiquadric: return 1.0 / std::sqrt(1.0 + s);
  }
  return 0.0;
}

RBFConfig rbf_config_from_json(const nlohmann::json& j) {
  try {
    RBFConfig cfg;
    if (j.contains("kernel")) cfg.kernel = parse_kernel(j.at("kernel"));
    cfg.shape = j.value("shape", cfg.shape);
    if (j.contains("lambda") && !j.at("lambda").is_null()) cfg.lambda = j.at("lambda").get<double>();
    require(cfg.shape > 0.0, ErrorCode::config, "rbf: shape factor must be positive");
    require(!cfg.lambda || *cfg.lambda >= 0.0, ErrorCode::config, "rbf: regularization must be non-negative");
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("rbf config: ") + e.what());
  }
}

nlohmann::json to_json(const RBFConfig& cfg) {
  nlohmann::json j{{"kernel", kernel_name(cfg.kernel)}, {"shape", cfg.shape}};
  j["lambda"] = cfg.lambda ? nlohmann::json(*cfg.lambda) : nlohmann::json(nullptr);
  return j;
}

RBFModel fit_rbf(const LatentTrajectory& latent, const RBFConfig& cfg) {
  validate(latent);
  require(latent.size() >= 3, ErrorCode::invalid_argument, "rbf: need at least three training states");
  require(cfg.shape > 0.0 && std::isfinite(cfg.shape), ErrorCode::invalid_argument, "rbf: shape factor must be positive");
  check_uniform(latent.times);

  const Index count = latent.size() - 1;
  RBFModel model;
  model.kernel = cfg.kernel;
  model.shape = cfg.shape;
  model.dt = latent.times[1] - latent.times[0];
  model.t_origin = latent.times[0];
  model.centers = latent.z.leftCols(count);
  const Matrix increments = latent.z.rightCols(count) - model.centers;

  Matrix phi = kernel_matrix(model.centers, cfg.kernel, cfg.shape);
  model.lambda = cfg.lambda ? *cfg.lambda : 1e-10 * phi.trace() / static_cast<double>(count);
  require(model.lambda >= 0.0, ErrorCode::invalid_argument, "rbf: regularization must be non-negative");
  phi.diagonal().array() += model.lambda;
  const Matrix rhs = increments.transpose();

  Matrix w;
  Eigen::LLT<Matrix> llt(phi);
  if (llt.info() == Eigen::Success) {
    w = llt.solve(rhs);
  } else {
    Eigen::LDLT<Matrix> ldlt(phi);
    const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
    if (rcond > 1e-14) {
      w = ldlt.solve(rhs);
    } else if (model.lambda == 0.0) {
      fail(ErrorCode::singular, "rbf: interpolation matrix is singular (reciprocal condition " +
                                    std::to_string(rcond) + "); use lambda > 0 or distinct centers");
    } else {
      w = Eigen::CompleteOrthogonalDecomposition<Matrix>(phi).solve(rhs);
    }
  }
  require(w.allFinite(), ErrorCode::non_finite, "rbf: weight solve produced non-finite values");
  model.weights = w.transpose();
  return model;
}

Vector evaluate(const RBFModel& model, const Vector& z) {
  require(z.size() == model.dim(), ErrorCode::dimension_mismatch, "rbf: state has the wrong dimension");
  Vector out = Vector::Zero(model.dim());
  for (Index k = 0; k < model.centers.cols(); ++k)
    out += kernel_value(model.kernel, (z - model.centers.col(k)).norm(), model.shape) * model.weights.col(k);
  return out;
}

LatentTrajectory predict(const RBFModel& model, const Vector& z0, double t_start, Index steps, Index substeps) {
  require(z0.size() == model.dim(), ErrorCode::dimension_mismatch, "rbf: initial state has the wrong dimension");
  require(steps >= 0 && substeps >= 1, ErrorCode::invalid_argument, "rbf: bad step counts");
  const Index total = steps * substeps;
  const double scale = 1.0 / static_cast<double>(substeps);
  const double h = model.dt * scale;
  LatentTrajectory out;
  out.z.resize(model.dim(), total + 1);
  out.times.resize(total + 1);
  out.z.col(0) = z0;
  out.times[0] = t_start;
  Vector z = z0;
  for (Index k = 1; k <= total; ++k) {
    z += scale * evaluate(model, z);
    require(z.allFinite(), ErrorCode::non_finite, "rbf: prediction blew up at step " + std::to_string(k));
    out.z.col(k) = z;
    out.times[k] = t_start + static_cast<double>(k) * h;
  }
  return out;
}

void save_rbf(const RBFModel& model, const std::filesystem::path& path) {
  const Index m = model.dim();
  const Index count = model.centers.cols();
  Matrix data(2 * m, count);
  data.topRows(m) = model.centers;
  data.bottomRows(m) = model.weights;
  Vector times(count);
  for (Index k = 0; k < count; ++k) times[k] = model.t_origin + static_cast<double>(k) * model.dt;
  const std::vector<FieldSegment> fields{{"centers", 0, static_cast<std::uint64_t>(m)},
                                         {"weights", static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(m)}};
  nlohmann::json meta{{"kind", "rbf"},
                      {"kernel", kernel_name(model.kernel)},
                      {"shape", model.shape},
                      {"lambda", model.lambda},
                      {"dt", model.dt},
                      {"t_origin", model.t_origin}};
  save(SnapshotSet(data, times, fields), path, meta);
}

RBFModel load_rbf(const std::filesystem::path& path) {
  const SnapshotSet set = load(path);
  const nlohmann::json manifest = load_manifest(path);
  const nlohmann::json meta = manifest.value("meta", nlohmann::json::object());
  require(meta.value("kind", "") == "rbf", ErrorCode::corrupt_header, "'" + path.string() + "' is not an RBF model");
  require(set.rows() % 2 == 0, ErrorCode::corrupt_header, "rbf: odd row count");
  RBFModel model;
  const Index m = set.rows() / 2;
  model.centers = set.data().topRows(m);
  model.weights = set.data().bottomRows(m);
  try {
    model.kernel = parse_kernel(meta.at("kernel"));
    model.shape = meta.at("shape").get<double>();
    model.lambda = meta.at("lambda").get<double>();
    model.dt = meta.at("dt").get<double>();
    model.t_origin = meta.at("t_origin").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("rbf metadata: ") + e.what());
  }
  return model;
}

}  // namespace nirom
