#include "nirom/node.hpp"

#include <array>
#include <cmath>

#include "nirom/error.hpp"
#include "nirom/random.hpp"

namespace nirom {

namespace {

Vector to_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Single-sample evaluation of the dynamics net, optionally keeping the
/// forward cache for a vector-Jacobian product afterwards.
class Dynamics {
 public:
  explicit Dynamics(const NODEModel& model)
      : model_(model), n_(model.state_dim()), input_(model.net.input_dim(), 1) {}

  void eval(double t, const Vector& y, Vector& dydt, ForwardCache* cache = nullptr) {
    input_.col(0).head(n_) = y;
    if (model_.time_input) input_(n_, 0) = t;
    dydt = model_.net.infer(input_, cache).col(0);
  }

  /// Accumulates (d f / d params)^T v into `params` and returns (d f / d y)^T v.
  /// `d_time`, when given, receives (d f / d t)^T v.
  Vector vjp(const ForwardCache& cache, const Vector& v, Vector& params, double* d_time = nullptr) const {
    const Gradients g = model_.net.backward(cache, v);
    params += g.params;
    if (d_time) *d_time = model_.time_input ? g.input(n_, 0) : 0.0;
    return g.input.col(0).head(n_);
  }

 private:
  const NODEModel& model_;
  Index n_;
  Matrix input_;
};

Vector initial_state(const NODEModel& model, const Vector& z0) {
  require(z0.size() == model.latent_dim, ErrorCode::dimension_mismatch, "node: initial state has the wrong size");
  Vector y = Vector::Zero(model.state_dim());
  y.head(model.latent_dim) = z0;
  return y;
}

void check_data(const NODEModel& model, const LatentTrajectory& data) {
  validate(data);
  require(data.dim() == model.latent_dim, ErrorCode::dimension_mismatch,
          "node: latent dimension of the data does not match the model");
  require(data.size() >= 2, ErrorCode::invalid_argument, "node: need at least two training times");
}

double count_of(const LatentTrajectory& data) { return static_cast<double>(data.size() * data.dim()); }

LossGradient discrete_gradient(const NODEModel& model, const LatentTrajectory& data) {
  require(model.solver.method == SolverSpec::Method::rk4, ErrorCode::incompatible,
          "node: discrete gradients need the rk4 solver");
  const Vector& times = data.times;
  const Index samples = times.size();
  const Index n = model.state_dim();
  const Index m = model.latent_dim;
  const double h = model.solver.h > 0.0 ? model.solver.h : min_spacing(times);
  const double t0 = times[0];

  std::vector<Index> obs(static_cast<size_t>(samples));
  for (Index k = 0; k < samples; ++k) obs[static_cast<size_t>(k)] = whole_steps(t0, times[k], h);
  const Index total = obs.back();

  Dynamics f(model);
  std::vector<Vector> y(static_cast<size_t>(total + 1));
  std::vector<std::array<ForwardCache, 4>> caches(static_cast<size_t>(total));
  y[0] = initial_state(model, data.z.col(0));
  Vector k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (Index s = 0; s < total; ++s) {
    const double t = t0 + static_cast<double>(s) * h;
    auto& c = caches[static_cast<size_t>(s)];
    const Vector& ys = y[static_cast<size_t>(s)];
    f.eval(t, ys, k1, &c[0]);
    tmp = ys + 0.5 * h * k1;
    f.eval(t + 0.5 * h, tmp, k2, &c[1]);
    tmp = ys + 0.5 * h * k2;
    f.eval(t + 0.5 * h, tmp, k3, &c[2]);
    tmp = ys + h * k3;
    f.eval(t + h, tmp, k4, &c[3]);
    y[static_cast<size_t>(s + 1)] = ys + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    require(y[static_cast<size_t>(s + 1)].allFinite(), ErrorCode::non_finite, "node: non-finite state");
  }

  const double count = count_of(data);
  LossGradient out;
  out.params = Vector::Zero(model.net.parameter_count());
  Matrix residual(m, samples);
  for (Index k = 0; k < samples; ++k)
    residual.col(k) = y[static_cast<size_t>(obs[static_cast<size_t>(k)])].head(m) - data.z.col(k);
  out.loss = residual.squaredNorm() / count;

  Vector ybar = Vector::Zero(n);
  Index k = samples - 1;
  for (Index s = total;; --s) {
    while (k >= 0 && obs[static_cast<size_t>(k)] == s) {
      ybar.head(m) += (2.0 / count) * residual.col(k);
      --k;
    }
    if (s == 0) break;
    const auto& c = caches[static_cast<size_t>(s - 1)];
    // y' = y + h/6 (k1 + 2 k2 + 2 k3 + k4), with k_i evaluated on the stage states.
    Vector kbar1 = (h / 6.0) * ybar;
    Vector kbar2 = (h / 3.0) * ybar;
    Vector kbar3 = (h / 3.0) * ybar;
    const Vector kbar4 = (h / 6.0) * ybar;
    Vector stage = f.vjp(c[3], kbar4, out.params);
    ybar += stage;
    kbar3 += h * stage;
    stage = f.vjp(c[2], kbar3, out.params);
    ybar += stage;
    kbar2 += 0.5 * h * stage;
    stage = f.vjp(c[1], kbar2, out.params);
    ybar += stage;
    kbar1 += 0.5 * h * stage;
    ybar += f.vjp(c[0], kbar1, out.params);
  }
  return out;
}

LossGradient adjoint_gradient(const NODEModel& model, const LatentTrajectory& data) {
  const Vector& times = data.times;
  const Index samples = times.size();
  const Index n = model.state_dim();
  const Index m = model.latent_dim;
  const Index p = model.net.parameter_count();

  SolverSpec solver = model.solver;
  if (solver.method == SolverSpec::Method::rk4 && solver.h <= 0.0) solver.h = min_spacing(times);
  const Matrix forward = solve_state(model, data.z.col(0), times, solver);
  const double count = count_of(data);
  const Matrix residual = forward.topRows(m) - data.z;
  LossGradient out;
  out.loss = residual.squaredNorm() / count;

  Dynamics f(model);
  ForwardCache cache;
  Vector scratch(n);
  const OdeRhs augmented = [&](double t, const Vector& s, Vector& ds) {
    f.eval(t, s.head(n), scratch, &cache);
    Vector dparams = Vector::Zero(p);
    double dt = 0.0;
    const Vector dy = f.vjp(cache, s.segment(n, n), dparams, &dt);
    ds.head(n) = scratch;
    ds.segment(n, n) = -dy;
    ds.segment(2 * n, p) = -dparams;
    ds[2 * n + p] = -dt;
  };

  Vector state = Vector::Zero(2 * n + p + 1);
  state.segment(n, m) = (2.0 / count) * residual.col(samples - 1);
  for (Index k = samples - 1; k > 0; --k) {
    state.head(n) = forward.col(k);
    const Vector span{{times[k], times[k - 1]}};
    state = solve_ode(augmented, state, span, solver).col(1);
    state.segment(n, m) += (2.0 / count) * residual.col(k - 1);
  }
  out.params = state.segment(2 * n, p);
  return out;
}

}  // namespace

std::pair<Vector, TimeMap> normalize_times(const Vector& times) {
  require(times.size() >= 2, ErrorCode::invalid_argument, "node: need at least two times to normalize");
  for (Index k = 1; k < times.size(); ++k)
    require(times[k] > times[k - 1], ErrorCode::non_monotone_times, "node: times must be strictly increasing");
  TimeMap map{times[0], times[times.size() - 1] - times[0]};
  return {map.forward(times), map};
}

Matrix LatentScale::forward(const Matrix& z) const {
  if (!enabled) return z;
  return ((z.colwise() - center).array().colwise() / half_range.array()).matrix();
}

Matrix LatentScale::inverse(const Matrix& z) const {
  if (!enabled) return z;
  return ((z.array().colwise() * half_range.array()).matrix().colwise() + center);
}

NodeArchitecture node_architecture_from_json(const nlohmann::json& j) {
  try {
    NodeArchitecture a;
    if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<Index>>();
    if (j.contains("activation")) a.activation = parse_activation(j.at("activation"));
    a.time_input = j.value("time_input", a.time_input);
    a.bias = j.value("bias", a.bias);
    if (j.contains("augment")) {
      const auto& aug = j.at("augment");
      if (aug.is_boolean()) {
        a.augment = aug.get<bool>() ? 5 : 0;
      } else {
        a.augment = aug.get<Index>();
      }
    }
    require(a.augment >= 0, ErrorCode::config, "node: augmentation width must be non-negative");
    for (Index w : a.hidden) require(w > 0, ErrorCode::config, "node: hidden widths must be positive");
    return a;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("node architecture: ") + e.what());
  }
}

nlohmann::json to_json(const NodeArchitecture& a) {
  return {{"hidden", a.hidden},
          {"activation", activation_name(a.activation)},
          {"augment", a.augment},
          {"time_input", a.time_input},
          {"bias", a.bias}};
}

NODEModel build_node(const NodeArchitecture& arch, Index latent_dim, const SolverSpec& solver, std::uint64_t seed) {
  require(latent_dim > 0, ErrorCode::invalid_argument, "node: latent dimension must be positive");
  require(arch.augment >= 0, ErrorCode::invalid_argument, "node: augmentation width must be non-negative");
  validate(solver);
  NODEModel model;
  model.latent_dim = latent_dim;
  model.augment = arch.augment;
  model.time_input = arch.time_input;
  model.solver = solver;
  const Index n = model.state_dim();
  std::vector<LayerSpec> layers;
  Index prev = n + (arch.time_input ? 1 : 0);
  for (Index w : arch.hidden) {
    layers.push_back({prev, w, arch.activation, false, arch.bias});
    prev = w;
  }
  layers.push_back({prev, n, Activation::linear, false, arch.bias});
  model.net = MLPNet(std::move(layers), derive_seed(seed, 2));
  return model;
}

void validate(const NODEModel& model) {
  const Index n = model.state_dim();
  require(model.latent_dim > 0 && model.augment >= 0, ErrorCode::invalid_argument, "node: bad dimensions");
  require(model.net.input_dim() == n + (model.time_input ? 1 : 0) && model.net.output_dim() == n,
          ErrorCode::dimension_mismatch, "node: dynamics net dimensions do not match the state");
  for (const auto& layer : model.net.layers())
    require(!layer.batchnorm, ErrorCode::invalid_argument, "node: batch normalization is not supported");
  validate(model.solver);
  require(model.time_map.span > 0.0, ErrorCode::invalid_argument, "node: time span must be positive");
}

LatentTrajectory fit_normalization(NODEModel& model, const LatentTrajectory& physical, bool scale_latent) {
  validate(physical);
  model.time_map = normalize_times(physical.times).second;
  model.scale = LatentScale{};
  if (scale_latent) {
    const Vector lo = physical.z.rowwise().minCoeff();
    const Vector hi = physical.z.rowwise().maxCoeff();
    model.scale.enabled = true;
    model.scale.center = 0.5 * (lo + hi);
    model.scale.half_range = 0.5 * (hi - lo);
    for (Index i = 0; i < model.scale.half_range.size(); ++i)
      if (!(model.scale.half_range[i] > 0.0)) model.scale.half_range[i] = 1.0;
  }
  return to_model_space(model, physical);
}

LatentTrajectory to_model_space(const NODEModel& model, const LatentTrajectory& physical) {
  LatentTrajectory out = physical;
  out.z = model.scale.forward(physical.z);
  out.times = model.time_map.forward(physical.times);
  out.normalization = TimeNormalization::unit_interval;
  return out;
}

LatentTrajectory to_physical_space(const NODEModel& model, const LatentTrajectory& model_space) {
  LatentTrajectory out = model_space;
  out.z = model.scale.inverse(model_space.z);
  out.times = model.time_map.inverse(model_space.times);
  out.normalization = TimeNormalization::none;
  return out;
}

Matrix solve_state(const NODEModel& model, const Vector& z0, const Vector& times, const SolverSpec& solver,
                   SolveStats* stats) {
  Dynamics f(model);
  const OdeRhs rhs = [&](double t, const Vector& y, Vector& dydt) { f.eval(t, y, dydt); };
  return solve_ode(rhs, initial_state(model, z0), times, solver, stats);
}

LatentTrajectory ode_solve(const NODEModel& model, const Vector& z0, const Vector& times) {
  LatentTrajectory out;
  out.z = solve_state(model, z0, times, model.solver).topRows(model.latent_dim);
  out.times = times;
  return out;
}

double trajectory_loss(const NODEModel& model, const LatentTrajectory& data) {
  check_data(model, data);
  const Matrix y = solve_state(model, data.z.col(0), data.times, model.solver);
  return (y.topRows(model.latent_dim) - data.z).squaredNorm() / count_of(data);
}

GradientMode parse_gradient_mode(const std::string& name) {
  if (name == "discrete") return GradientMode::discrete;
  if (name == "adjoint") return GradientMode::adjoint;
  fail(ErrorCode::config, "unknown gradient mode '" + name + "'");
}

const char* gradient_mode_name(GradientMode mode) {
  return mode == GradientMode::discrete ? "discrete" : "adjoint";
}

LossGradient gradient(const NODEModel& model, const LatentTrajectory& data, GradientMode mode) {
  check_data(model, data);
  for (Index k = 1; k < data.size(); ++k)
    require(data.times[k] > data.times[k - 1], ErrorCode::non_monotone_times,
            "node: training times must be strictly increasing");
  return mode == GradientMode::discrete ? discrete_gradient(model, data) : adjoint_gradient(model, data);
}

NodeTrainConfig node_train_config_from_json(const nlohmann::json& j) {
  NodeTrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    if (j.contains("optimizer")) cfg.optimizer = optimizer_from_json(j.at("optimizer"), cfg.optimizer);
    if (j.contains("grad_mode")) cfg.mode = parse_gradient_mode(j.at("grad_mode"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("node training: ") + e.what());
  }
  require(cfg.epochs >= 0, ErrorCode::config, "node training: negative epoch count");
  return cfg;
}

NodeTrainResult train_node(NODEModel& model, const LatentTrajectory& data, const NodeTrainConfig& cfg) {
  validate(model);
  check_data(model, data);
  require(cfg.epochs >= 0, ErrorCode::invalid_argument, "node: negative epoch count");
  if (cfg.mode == GradientMode::discrete)
    require(model.solver.method == SolverSpec::Method::rk4, ErrorCode::incompatible,
            "node: discrete gradients need the rk4 solver");

  NodeTrainResult result;
  Optimizer opt(cfg.optimizer, model.net.parameter_count());
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = opt.learning_rate(epoch);
    LossGradient lg;
    try {
      lg = gradient(model, data, cfg.mode);
    } catch (const Error& e) {
      const auto code = e.code();
      if (code != ErrorCode::non_finite && code != ErrorCode::step_underflow && code != ErrorCode::max_steps) throw;
      result.diverged = true;
      result.message = e.what();
      break;
    }
    if (!std::isfinite(lg.loss) || !lg.params.allFinite()) {
      result.diverged = true;
      result.message = "node: non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    result.history.push_back({epoch, lg.loss, lr});
    opt.step(model.net, lg.params, epoch);
    opt.report_loss(lg.loss);
  }
  if (!result.diverged) {
    try {
      result.final_loss = trajectory_loss(model, data);
    } catch (const Error& e) {
      result.diverged = true;
      result.message = e.what();
    }
    if (!std::isfinite(result.final_loss)) result.diverged = true;
  }
  return result;
}

LatentTrajectory predict(const NODEModel& model, const Vector& z0, double t_start, const Vector& times) {
  return predict(model, z0, t_start, times, model.solver);
}

LatentTrajectory predict(const NODEModel& model, const Vector& z0, double t_start, const Vector& times,
                         const SolverSpec& solver) {
  validate(model);
  require(times.size() >= 1, ErrorCode::invalid_argument, "node: no prediction times");
  require(times[0] >= t_start, ErrorCode::out_of_range, "node: prediction times start before the initial state");
  const Vector model_times = model.time_map.forward(times);
  const double s0 = model.time_map.forward(t_start);
  const bool prepend = times[0] != t_start;
  Vector grid(model_times.size() + (prepend ? 1 : 0));
  if (prepend) {
    grid[0] = s0;
    grid.tail(model_times.size()) = model_times;
  } else {
    grid = model_times;
  }
  const Vector z0_model = model.scale.forward(z0);
  const Matrix y = solve_state(model, z0_model, grid, solver);
  LatentTrajectory out;
  out.z = model.scale.inverse(y.block(0, prepend ? 1 : 0, model.latent_dim, times.size()));
  out.times = times;
  return out;
}

void save_node(const NODEModel& model, const std::filesystem::path& path) {
  validate(model);
  nlohmann::json scale{{"enabled", model.scale.enabled}};
  if (model.scale.enabled) {
    scale["center"] = to_std(model.scale.center);
    scale["half_range"] = to_std(model.scale.half_range);
  }
  nlohmann::json meta{{"kind", "node"},
                      {"latent_dim", model.latent_dim},
                      {"augment", model.augment},
                      {"time_input", model.time_input},
                      {"solver", to_json(model.solver)},
                      {"time_map", {{"origin", model.time_map.origin}, {"span", model.time_map.span}}},
                      {"latent_scale", scale}};
  save_checkpoint(path, {&model.net}, meta);
}

NODEModel load_node(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  require(ck.meta.value("kind", "") == "node" && ck.nets.size() == 1, ErrorCode::corrupt_header,
          "'" + path.string() + "' is not a neural ODE checkpoint");
  NODEModel model;
  try {
    const auto& meta = ck.meta;
    model.latent_dim = meta.at("latent_dim").get<Index>();
    model.augment = meta.at("augment").get<Index>();
    model.time_input = meta.at("time_input").get<bool>();
    model.solver = solver_from_json(meta.at("solver"));
    model.time_map.origin = meta.at("time_map").at("origin").get<double>();
    model.time_map.span = meta.at("time_map").at("span").get<double>();
    const auto& scale = meta.at("latent_scale");
    model.scale.enabled = scale.at("enabled").get<bool>();
    if (model.scale.enabled) {
      model.scale.center = to_vector(scale.at("center"));
      model.scale.half_range = to_vector(scale.at("half_range"));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("node checkpoint: ") + e.what());
  }
  model.net = std::move(ck.nets[0]);
  validate(model);
  return model;
}

}  // namespace nirom
