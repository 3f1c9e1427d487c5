#include "nirom/neuralnet.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "nirom/error.hpp"
#include "nirom/random.hpp"

namespace nirom {

namespace {

std::atomic<std::uint64_t> g_version{1};

std::uint64_t next_version() { return g_version.fetch_add(1, std::memory_order_relaxed); }

void activate(Activation a, const Matrix& x, Matrix& y) {
  switch (a) {
    case Activation::linear: y = x; break;
    case Activation::relu: y = x.cwiseMax(0.0); break;
    case Activation::elu: y = x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }); break;
    case Activation::tanh: y = x.array().tanh().matrix(); break;
    case Activation::sigmoid:
      y = x.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
  }
}

// d(act)/d(arg) elementwise-multiplied into g.
void activation_backward(Activation a, const Matrix& arg, const Matrix& out, Matrix& g) {
  switch (a) {
    case Activation::linear: break;
    case Activation::relu: g.array() *= (arg.array() > 0.0).cast<double>(); break;
    case Activation::elu:
      g.array() *= arg.binaryExpr(out, [](double v, double o) { return v > 0.0 ? 1.0 : o + 1.0; }).array();
      break;
    case Activation::tanh: g.array() *= 1.0 - out.array().square(); break;
    case Activation::sigmoid: g.array() *= out.array() * (1.0 - out.array()); break;
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "linear" || name == "identity") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  fail(ErrorCode::invalid_argument, "unknown activation '" + name + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "linear";
}

MLPNet::MLPNet(std::vector<LayerSpec> layers, std::uint64_t seed) : specs_(std::move(layers)) {
  require(!specs_.empty(), ErrorCode::invalid_argument, "mlp: no layers");
  Index count = 0;
  for (size_t l = 0; l < specs_.size(); ++l) {
    const auto& s = specs_[l];
    require(s.in > 0 && s.out > 0, ErrorCode::invalid_argument, "mlp: layer dimensions must be positive");
    if (l > 0)
      require(specs_[l - 1].out == s.in, ErrorCode::dimension_mismatch, "mlp: consecutive layer dims differ");
    Offsets o;
    o.weight = count;
    count += s.in * s.out;
    if (s.bias) {
      o.bias = count;
      count += s.out;
    }
    if (s.batchnorm) {
      o.gamma = count;
      count += s.out;
      o.beta = count;
      count += s.out;
    }
    offsets_.push_back(o);
    running_mean_.push_back(s.batchnorm ? Vector::Zero(s.out) : Vector());
    running_var_.push_back(s.batchnorm ? Vector::Ones(s.out) : Vector());
  }
  params_ = Vector::Zero(count);

  // Glorot-uniform weights, zero bias, unit gamma.
  Rng rng(seed);
  for (size_t l = 0; l < specs_.size(); ++l) {
    const auto& s = specs_[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (Index i = 0; i < s.in * s.out; ++i) params_[offsets_[l].weight + i] = rng.uniform(-limit, limit);
    if (s.batchnorm) params_.segment(offsets_[l].gamma, s.out).setOnes();
  }
  version_ = next_version();
}

void MLPNet::set_parameters(const Vector& params) {
  require(params.size() == params_.size(), ErrorCode::dimension_mismatch, "mlp: parameter count mismatch");
  require(params.allFinite(), ErrorCode::non_finite, "mlp: non-finite parameters");
  params_ = params;
  touch();
}

void MLPNet::touch() { version_ = next_version(); }

Eigen::Map<Matrix> MLPNet::weight(size_t l) {
  return {params_.data() + offsets_[l].weight, specs_[l].out, specs_[l].in};
}
Eigen::Map<const Matrix> MLPNet::weight(size_t l) const {
  return {params_.data() + offsets_[l].weight, specs_[l].out, specs_[l].in};
}
Eigen::Map<Vector> MLPNet::bias(size_t l) {
  require(specs_[l].bias, ErrorCode::invalid_argument, "mlp: layer has no bias");
  return {params_.data() + offsets_[l].bias, specs_[l].out};
}
Eigen::Map<const Vector> MLPNet::bias(size_t l) const {
  require(specs_[l].bias, ErrorCode::invalid_argument, "mlp: layer has no bias");
  return {params_.data() + offsets_[l].bias, specs_[l].out};
}

Matrix MLPNet::forward(const Matrix& x, Mode mode, ForwardCache* cache) {
  return run(x, mode, cache, mode == Mode::train);
}

Matrix MLPNet::infer(const Matrix& x) const { return infer(x, nullptr); }

Matrix MLPNet::infer(const Matrix& x, ForwardCache* cache) const {
  return const_cast<MLPNet*>(this)->run(x, Mode::infer, cache, false);
}

Matrix MLPNet::run(const Matrix& x, Mode mode, ForwardCache* cache, bool update_stats) {
  require(!specs_.empty(), ErrorCode::invalid_argument, "mlp: empty network");
  require(x.rows() == input_dim(), ErrorCode::dimension_mismatch,
          "mlp: input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(input_dim()));
  if (cache) {
    cache->layers.resize(specs_.size());
    cache->mode = mode;
    cache->version = version_;
  }
  const Index batch = x.cols();
  Matrix h = x;
  for (size_t l = 0; l < specs_.size(); ++l) {
    const auto& s = specs_[l];
    const Offsets& o = offsets_[l];
    Eigen::Map<const Matrix> w(params_.data() + o.weight, s.out, s.in);
    Matrix pre = w * h;
    if (s.bias) pre.colwise() += Eigen::Map<const Vector>(params_.data() + o.bias, s.out);

    Matrix xhat;
    Vector inv_std;
    if (s.batchnorm) {
      Vector mean, var;
      if (mode == Mode::train) {
        require(batch > 0, ErrorCode::invalid_argument, "mlp: empty batch");
        mean = pre.rowwise().mean();
        var = (pre.colwise() - mean).array().square().rowwise().mean().matrix();
        if (update_stats) {
          running_mean_[l] = kBatchNormMomentum * running_mean_[l] + (1.0 - kBatchNormMomentum) * mean;
          running_var_[l] = kBatchNormMomentum * running_var_[l] + (1.0 - kBatchNormMomentum) * var;
        }
      } else {
        mean = running_mean_[l];
        var = running_var_[l];
      }
      inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
      xhat = (pre.colwise() - mean).array().colwise() * inv_std.array();
      Eigen::Map<const Vector> gamma(params_.data() + o.gamma, s.out);
      Eigen::Map<const Vector> beta(params_.data() + o.beta, s.out);
      pre = (xhat.array().colwise() * gamma.array()).matrix();
      pre.colwise() += beta;
    }
    Matrix out;
    activate(s.activation, pre, out);
    if (cache) {
      auto& c = cache->layers[l];
      c.input = std::move(h);
      c.xhat = std::move(xhat);
      c.inv_std = std::move(inv_std);
      c.act_in = std::move(pre);
      c.output = out;
    }
    h = std::move(out);
  }
  require(h.allFinite(), ErrorCode::non_finite, "mlp: non-finite output");
  return h;
}

Gradients MLPNet::backward(const ForwardCache& cache, const Matrix& d_output) const {
  require(cache.version == version_ && cache.layers.size() == specs_.size(), ErrorCode::stale_cache,
          "mlp: forward cache is stale");
  const Index batch = cache.layers.front().input.cols();
  require(d_output.rows() == output_dim() && d_output.cols() == batch, ErrorCode::dimension_mismatch,
          "mlp: output gradient has the wrong shape");
  Gradients g;
  g.params = Vector::Zero(params_.size());
  Matrix delta = d_output;
  for (size_t li = specs_.size(); li-- > 0;) {
    const auto& s = specs_[li];
    const Offsets& o = offsets_[li];
    const auto& c = cache.layers[li];
    activation_backward(s.activation, c.act_in, c.output, delta);
    if (s.batchnorm) {
      Eigen::Map<const Vector> gamma(params_.data() + o.gamma, s.out);
      g.params.segment(o.gamma, s.out) = (delta.array() * c.xhat.array()).rowwise().sum().matrix();
      g.params.segment(o.beta, s.out) = delta.rowwise().sum();
      Matrix dxhat = (delta.array().colwise() * gamma.array()).matrix();
      if (cache.mode == Mode::train) {
        const double b = static_cast<double>(batch);
        const Vector sum_d = dxhat.rowwise().sum();
        const Vector sum_dx = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix();
        Matrix tmp = b * dxhat;
        tmp.colwise() -= sum_d;
        tmp -= (c.xhat.array().colwise() * sum_dx.array()).matrix();
        delta = (tmp.array().colwise() * (c.inv_std.array() / b)).matrix();
      } else {
        delta = (dxhat.array().colwise() * c.inv_std.array()).matrix();
      }
    }
    Eigen::Map<const Matrix> w(params_.data() + o.weight, s.out, s.in);
    Eigen::Map<Matrix>(g.params.data() + o.weight, s.out, s.in).noalias() = delta * c.input.transpose();
    if (s.bias) g.params.segment(o.bias, s.out) = delta.rowwise().sum();
    delta = w.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

nlohmann::json MLPNet::architecture() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : specs_)
    layers.push_back({{"in", s.in},
                      {"out", s.out},
                      {"activation", activation_name(s.activation)},
                      {"batchnorm", s.batchnorm},
                      {"bias", s.bias}});
  return {{"layers", layers}, {"parameter_count", params_.size()}};
}

MLPNet MLPNet::from_architecture(const nlohmann::json& arch) {
  try {
    std::vector<LayerSpec> specs;
    for (const auto& l : arch.at("layers"))
      specs.push_back({l.at("in").get<Index>(), l.at("out").get<Index>(),
                       parse_activation(l.at("activation").get<std::string>()), l.value("batchnorm", false),
                       l.value("bias", true)});
    return MLPNet(std::move(specs), 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("mlp architecture: ") + e.what());
  }
}

Vector MLPNet::state_vector() const {
  Index n = 0;
  for (size_t l = 0; l < specs_.size(); ++l) n += running_mean_[l].size() + running_var_[l].size();
  Vector out(n);
  Index pos = 0;
  for (size_t l = 0; l < specs_.size(); ++l) {
    out.segment(pos, running_mean_[l].size()) = running_mean_[l];
    pos += running_mean_[l].size();
    out.segment(pos, running_var_[l].size()) = running_var_[l];
    pos += running_var_[l].size();
  }
  return out;
}

void MLPNet::set_state_vector(const Vector& state) {
  require(state.size() == state_vector().size(), ErrorCode::dimension_mismatch, "mlp: state size mismatch");
  Index pos = 0;
  for (size_t l = 0; l < specs_.size(); ++l) {
    running_mean_[l] = state.segment(pos, running_mean_[l].size());
    pos += running_mean_[l].size();
    running_var_[l] = state.segment(pos, running_var_[l].size());
    pos += running_var_[l].size();
  }
}

// ---------------------------------------------------------------------------

void validate(const OptimizerConfig& cfg) {
  require(cfg.lr > 0.0 && std::isfinite(cfg.lr), ErrorCode::invalid_argument, "optimizer: lr must be positive");
  require(cfg.epsilon > 0.0, ErrorCode::invalid_argument, "optimizer: epsilon must be positive");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, ErrorCode::invalid_argument,
          "optimizer: momentum must lie in [0, 1)");
  require(cfg.beta2 > 0.0 && cfg.beta2 < 1.0 && cfg.rho > 0.0 && cfg.rho < 1.0, ErrorCode::invalid_argument,
          "optimizer: decay rates must lie in (0, 1)");
  const auto& s = cfg.schedule;
  if (s.kind == Schedule::Kind::staircase)
    require(s.interval > 0 && s.rate > 0.0, ErrorCode::invalid_argument, "staircase: bad interval or rate");
  if (s.kind == Schedule::Kind::plateau)
    require(s.patience > 0 && s.factor > 0.0 && s.factor < 1.0, ErrorCode::invalid_argument,
            "plateau: factor must lie in (0, 1)");
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig cfg) {
  try {
    if (j.contains("algorithm")) {
      const std::string a = j.at("algorithm");
      if (a == "adam") {
        cfg.algorithm = Algorithm::adam;
      } else if (a == "rmsprop") {
        cfg.algorithm = Algorithm::rmsprop;
      } else {
        fail(ErrorCode::config, "unknown optimizer '" + a + "'");
      }
    }
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      const std::string type = s.at("type");
      if (type == "constant") {
        cfg.schedule = Schedule::constant();
      } else if (type == "staircase") {
        cfg.schedule = Schedule::staircase(s.value("interval", Index{5000}), s.value("rate", 0.5));
      } else if (type == "plateau") {
        cfg.schedule = Schedule::plateau(s.value("patience", Index{200}), s.value("factor", 0.5));
        cfg.schedule.min_delta = s.value("min_delta", 1e-8);
      } else {
        fail(ErrorCode::config, "unknown schedule '" + type + "'");
      }
    }
    validate(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("optimizer: ") + e.what());
  }
}

nlohmann::json to_json(const OptimizerConfig& cfg) {
  nlohmann::json s;
  switch (cfg.schedule.kind) {
    case Schedule::Kind::constant: s = {{"type", "constant"}}; break;
    case Schedule::Kind::staircase:
      s = {{"type", "staircase"}, {"interval", cfg.schedule.interval}, {"rate", cfg.schedule.rate}};
      break;
    case Schedule::Kind::plateau:
      s = {{"type", "plateau"},
           {"patience", cfg.schedule.patience},
           {"factor", cfg.schedule.factor},
           {"min_delta", cfg.schedule.min_delta}};
      break;
  }
  return {{"algorithm", cfg.algorithm == Algorithm::adam ? "adam" : "rmsprop"},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"beta2", cfg.beta2},
          {"rho", cfg.rho},
          {"epsilon", cfg.epsilon},
          {"schedule", s}};
}

Optimizer::Optimizer(OptimizerConfig cfg, Index parameter_count)
    : cfg_(cfg),
      first_(Vector::Zero(parameter_count)),
      second_(Vector::Zero(parameter_count)),
      plateau_lr_(cfg.lr),
      best_loss_(std::numeric_limits<double>::infinity()) {
  validate(cfg_);
}

double Optimizer::learning_rate(Index epoch) const {
  switch (cfg_.schedule.kind) {
    case Schedule::Kind::constant: return cfg_.lr;
    case Schedule::Kind::staircase:
      return cfg_.lr * std::pow(cfg_.schedule.rate, static_cast<double>(epoch / cfg_.schedule.interval));
    case Schedule::Kind::plateau: return plateau_lr_;
  }
  return cfg_.lr;
}

void Optimizer::report_loss(double loss) {
  if (cfg_.schedule.kind != Schedule::Kind::plateau) return;
  if (loss < best_loss_ - cfg_.schedule.min_delta) {
    best_loss_ = loss;
    wait_ = 0;
    return;
  }
  if (++wait_ >= cfg_.schedule.patience) {
    plateau_lr_ *= cfg_.schedule.factor;
    wait_ = 0;
  }
}

void Optimizer::step(MLPNet& net, const Vector& gradient, Index epoch) {
  step(net.mutable_parameters(), gradient, epoch);
  net.touch();
}

void Optimizer::step(Vector& params, const Vector& gradient, Index epoch) {
  require(gradient.size() == params.size() && gradient.size() == first_.size(), ErrorCode::dimension_mismatch,
          "optimizer: gradient length does not match parameter count");
  require(gradient.allFinite(), ErrorCode::non_finite, "optimizer: non-finite gradient");
  const double lr = learning_rate(epoch);
  require(lr > 0.0, ErrorCode::invalid_argument, "optimizer: learning rate underflow");
  ++steps_;
  if (cfg_.algorithm == Algorithm::adam) {
    const double b1 = cfg_.momentum;
    const double b2 = cfg_.beta2;
    first_ = b1 * first_ + (1.0 - b1) * gradient;
    second_ = b2 * second_ + (1.0 - b2) * gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    params.array() -= lr * (first_.array() / c1) / ((second_.array() / c2).sqrt() + cfg_.epsilon);
  } else {
    second_ = cfg_.rho * second_ + (1.0 - cfg_.rho) * gradient.cwiseAbs2();
    first_ = cfg_.momentum * first_ + (lr * gradient.array() / (second_.array() + cfg_.epsilon).sqrt()).matrix();
    params -= first_;
  }
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,lr\n";
  for (const auto& r : history) out << r.epoch << ',' << r.loss << ',' << r.lr << '\n';
  return out.str();
}

double mse(const Matrix& prediction, const Matrix& target) {
  require(prediction.rows() == target.rows() && prediction.cols() == target.cols(), ErrorCode::dimension_mismatch,
          "mse: shape mismatch");
  require(prediction.size() > 0, ErrorCode::empty_set, "mse: empty input");
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Matrix mse_gradient(const Matrix& prediction, const Matrix& target) {
  return (2.0 / static_cast<double>(prediction.size())) * (prediction - target);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kNetMagic[8] = {'N', 'I', 'R', 'O', 'M', 'N', 'E', 'T'};
constexpr std::uint32_t kNetVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorCode::corrupt_header, "checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<const MLPNet*>& nets,
                     const nlohmann::json& meta) {
  nlohmann::json header{{"format", "nirom-net"}, {"version", kNetVersion}, {"meta", meta}};
  header["nets"] = nlohmann::json::array();
  Index param_count = 0, state_count = 0;
  for (const MLPNet* net : nets) {
    header["nets"].push_back(net->architecture());
    param_count += net->parameter_count();
    state_count += net->state_vector().size();
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(kNetMagic, sizeof(kNetMagic));
  put<std::uint32_t>(out, kNetVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(param_count));
  for (const MLPNet* net : nets)
    out.write(reinterpret_cast<const char*>(net->parameters().data()),
              static_cast<std::streamsize>(net->parameter_count() * 8));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(state_count));
  for (const MLPNet* net : nets) {
    const Vector st = net->state_vector();
    out.write(reinterpret_cast<const char*>(st.data()), static_cast<std::streamsize>(st.size() * 8));
  }
  require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path.string() + "'");
  char magic[8];
  in.read(magic, 8);
  require(static_cast<bool>(in) && std::memcmp(magic, kNetMagic, 8) == 0, ErrorCode::corrupt_header,
          "not a network checkpoint");
  require(get<std::uint32_t>(in) == kNetVersion, ErrorCode::corrupt_header, "unsupported checkpoint version");
  const auto header_len = get<std::uint64_t>(in);
  require(header_len < (1u << 30), ErrorCode::corrupt_header, "checkpoint header too large");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<bool>(in), ErrorCode::corrupt_header, "checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  Index expected_params = 0, expected_state = 0;
  for (const auto& arch : header.at("nets")) {
    ck.nets.push_back(MLPNet::from_architecture(arch));
    expected_params += ck.nets.back().parameter_count();
    expected_state += ck.nets.back().state_vector().size();
  }
  require(get<std::uint64_t>(in) == static_cast<std::uint64_t>(expected_params), ErrorCode::dimension_mismatch,
          "checkpoint parameter count mismatch");
  for (auto& net : ck.nets) {
    Vector p(net.parameter_count());
    in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * 8));
    require(static_cast<bool>(in), ErrorCode::corrupt_header, "checkpoint truncated");
    net.set_parameters(p);
  }
  require(get<std::uint64_t>(in) == static_cast<std::uint64_t>(expected_state), ErrorCode::dimension_mismatch,
          "checkpoint state count mismatch");
  for (auto& net : ck.nets) {
    Vector st(net.state_vector().size());
    in.read(reinterpret_cast<char*>(st.data()), static_cast<std::streamsize>(st.size() * 8));
    require(static_cast<bool>(in), ErrorCode::corrupt_header, "checkpoint truncated");
    net.set_state_vector(st);
  }
  return ck;
}

}  // namespace nirom
