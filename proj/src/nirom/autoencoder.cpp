#include "nirom/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nirom/error.hpp"
#include "nirom/random.hpp"

namespace nirom {

namespace {

constexpr int kDefaultHiddenLayers = 4;

std::vector<LayerSpec> stack(Index in, const std::vector<Index>& hidden, Index out, Activation hidden_act,
                             Activation out_act, bool batchnorm, bool bias) {
  std::vector<LayerSpec> layers;
  Index prev = in;
  for (Index w : hidden) {
    layers.push_back({prev, w, hidden_act, batchnorm, bias});
    prev = w;
  }
  layers.push_back({prev, out, out_act, false, bias});
  return layers;
}

void check_range(const AESpec& spec, const Matrix& x) {
  const auto interval = required_interval(spec);
  if (!interval) return;
  const double slack = 1e-12 * std::max(1.0, interval->hi - interval->lo);
  require(x.minCoeff() >= interval->lo - slack && x.maxCoeff() <= interval->hi + slack, ErrorCode::out_of_range,
          std::string("autoencoder: data outside the ") + activation_name(spec.decoder_output) +
              " output range; scale it first");
}

}  // namespace

void validate(const AESpec& spec) {
  require(spec.input_dim > 0 && spec.latent_dim > 0, ErrorCode::invalid_argument,
          "autoencoder: dimensions must be positive");
  require(spec.latent_dim < spec.input_dim, ErrorCode::invalid_argument,
          "autoencoder: latent dimension must be smaller than the input dimension");
  for (Index w : encoder_widths(spec))
    require(w > 0, ErrorCode::invalid_argument, "autoencoder: hidden widths must be positive");
  for (Index w : decoder_widths(spec))
    require(w > 0, ErrorCode::invalid_argument, "autoencoder: hidden widths must be positive");
}

std::vector<Index> encoder_widths(const AESpec& spec) {
  if (spec.encoder_hidden) return *spec.encoder_hidden;
  std::vector<Index> widths;
  const double n = static_cast<double>(spec.input_dim);
  const double ratio = static_cast<double>(spec.latent_dim) / n;
  for (int k = 1; k <= kDefaultHiddenLayers; ++k) {
    const double w = n * std::pow(ratio, static_cast<double>(k) / (kDefaultHiddenLayers + 1));
    widths.push_back(std::clamp<Index>(static_cast<Index>(std::llround(w)), spec.latent_dim, spec.input_dim));
  }
  return widths;
}

std::vector<Index> decoder_widths(const AESpec& spec) {
  if (spec.decoder_hidden) return *spec.decoder_hidden;
  auto w = encoder_widths(spec);
  std::reverse(w.begin(), w.end());
  return w;
}

std::optional<Interval> required_interval(const AESpec& spec) {
  if (spec.decoder_output == Activation::sigmoid) return kUnitInterval;
  if (spec.decoder_output == Activation::tanh) return kSymmetricInterval;
  return std::nullopt;
}

AESpec ae_spec_from_json(const nlohmann::json& j) {
  try {
    AESpec s;
    s.field = j.value("field", s.field);
    s.input_dim = j.value("input_dim", Index{0});
    s.latent_dim = j.at("latent_dim").get<Index>();
    if (j.contains("encoder_hidden")) s.encoder_hidden = j.at("encoder_hidden").get<std::vector<Index>>();
    if (j.contains("decoder_hidden")) s.decoder_hidden = j.at("decoder_hidden").get<std::vector<Index>>();
    if (j.contains("hidden_activation")) s.hidden_activation = parse_activation(j.at("hidden_activation"));
    if (j.contains("encoder_output")) s.encoder_output = parse_activation(j.at("encoder_output"));
    if (j.contains("decoder_output")) s.decoder_output = parse_activation(j.at("decoder_output"));
    s.batchnorm = j.value("batchnorm", s.batchnorm);
    s.bias = j.value("bias", s.bias);
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("autoencoder spec: ") + e.what());
  }
}

nlohmann::json to_json(const AESpec& s) {
  nlohmann::json j{{"field", s.field},
                   {"input_dim", s.input_dim},
                   {"latent_dim", s.latent_dim},
                   {"encoder_hidden", encoder_widths(s)},
                   {"decoder_hidden", decoder_widths(s)},
                   {"hidden_activation", activation_name(s.hidden_activation)},
                   {"encoder_output", activation_name(s.encoder_output)},
                   {"decoder_output", activation_name(s.decoder_output)},
                   {"batchnorm", s.batchnorm},
                   {"bias", s.bias}};
  return j;
}

AETrainConfig ae_train_config_from_json(const nlohmann::json& j) {
  AETrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.full_batch_limit = j.value("full_batch_limit", cfg.full_batch_limit);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("optimizer")) cfg.optimizer = optimizer_from_json(j.at("optimizer"), cfg.optimizer);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("autoencoder training: ") + e.what());
  }
  require(cfg.epochs >= 0 && cfg.batch_size > 0, ErrorCode::config, "autoencoder training: bad epochs/batch size");
  return cfg;
}

AEModel build(const AESpec& spec, std::uint64_t seed) {
  validate(spec);
  AEModel model;
  model.spec = spec;
  model.encoder = MLPNet(stack(spec.input_dim, encoder_widths(spec), spec.latent_dim, spec.hidden_activation,
                               spec.encoder_output, spec.batchnorm, spec.bias),
                         derive_seed(seed, 0));
  model.decoder = MLPNet(stack(spec.latent_dim, decoder_widths(spec), spec.input_dim, spec.hidden_activation,
                               spec.decoder_output, spec.batchnorm, spec.bias),
                         derive_seed(seed, 1));
  return model;
}

AETrainResult train(AEModel& model, const SnapshotSet& data, const AETrainConfig& cfg) {
  require(data.rows() == model.spec.input_dim, ErrorCode::dimension_mismatch,
          "autoencoder: data rows do not match input dimension");
  require(cfg.epochs >= 0, ErrorCode::invalid_argument, "autoencoder: negative epoch count");
  const Matrix& x = data.data();
  check_range(model.spec, x);

  AETrainResult result;
  Optimizer enc_opt(cfg.optimizer, model.encoder.parameter_count());
  Optimizer dec_opt(cfg.optimizer, model.decoder.parameter_count());
  const Index samples = x.cols();
  const bool full_batch = samples <= cfg.full_batch_limit;
  std::vector<Index> order(static_cast<size_t>(samples));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(cfg.seed);

  ForwardCache enc_cache, dec_cache;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = enc_opt.learning_rate(epoch);
    double epoch_loss = 0.0;
    auto run_batch = [&](const Matrix& batch) {
      const Matrix z = model.encoder.forward(batch, Mode::train, &enc_cache);
      const Matrix out = model.decoder.forward(z, Mode::train, &dec_cache);
      const double loss = mse(out, batch);
      if (!std::isfinite(loss)) fail(ErrorCode::diverged, "autoencoder: non-finite loss");
      const Gradients gd = model.decoder.backward(dec_cache, mse_gradient(out, batch));
      const Gradients ge = model.encoder.backward(enc_cache, gd.input);
      enc_opt.step(model.encoder, ge.params, epoch);
      dec_opt.step(model.decoder, gd.params, epoch);
      return loss;
    };
    try {
      if (full_batch) {
        epoch_loss = run_batch(x);
      } else {
        for (Index i = samples - 1; i > 0; --i)
          std::swap(order[static_cast<size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
        Index batches = 0;
        for (Index start = 0; start < samples; start += cfg.batch_size) {
          const Index count = std::min(cfg.batch_size, samples - start);
          Matrix batch(x.rows(), count);
          for (Index c = 0; c < count; ++c) batch.col(c) = x.col(order[static_cast<size_t>(start + c)]);
          epoch_loss += run_batch(batch);
          ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::diverged && e.code() != ErrorCode::non_finite) throw;
      result.diverged = true;
      result.message = e.what();
      break;
    }
    result.history.push_back({epoch, epoch_loss, lr});
    enc_opt.report_loss(epoch_loss);
    dec_opt.report_loss(epoch_loss);
  }
  model.history.insert(model.history.end(), result.history.begin(), result.history.end());
  if (!result.diverged) result.final_loss = reconstruction_mse(model, data);
  return result;
}

LatentTrajectory encode(const AEModel& model, const SnapshotSet& data) {
  require(data.rows() == model.spec.input_dim, ErrorCode::dimension_mismatch,
          "autoencoder: data rows do not match input dimension");
  LatentTrajectory out;
  out.z = model.encoder.infer(data.data());
  out.times = data.times();
  out.segments = {{model.spec.field, 0, static_cast<std::uint64_t>(model.spec.latent_dim)}};
  return out;
}

SnapshotSet decode(const AEModel& model, const LatentTrajectory& latent) {
  require(latent.dim() == model.spec.latent_dim, ErrorCode::dimension_mismatch,
          "autoencoder: latent rows do not match latent dimension");
  return SnapshotSet(model.decoder.infer(latent.z), latent.times,
                     {{model.spec.field, 0, static_cast<std::uint64_t>(model.spec.input_dim)}});
}

double reconstruction_mse(const AEModel& model, const SnapshotSet& data) {
  return mse(decode(model, encode(model, data)).data(), data.data());
}

void save_autoencoder(const AEModel& model, const std::filesystem::path& path) {
  nlohmann::json meta{{"kind", "autoencoder"}, {"spec", to_json(model.spec)}};
  save_checkpoint(path, {&model.encoder, &model.decoder}, meta);
}

AEModel load_autoencoder(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  require(ck.meta.value("kind", "") == "autoencoder" && ck.nets.size() == 2, ErrorCode::corrupt_header,
          "'" + path.string() + "' is not an autoencoder checkpoint");
  AEModel model;
  model.spec = ae_spec_from_json(ck.meta.at("spec"));
  model.encoder = std::move(ck.nets[0]);
  model.decoder = std::move(ck.nets[1]);
  require(model.encoder.input_dim() == model.spec.input_dim && model.decoder.output_dim() == model.spec.input_dim &&
              model.encoder.output_dim() == model.spec.latent_dim,
          ErrorCode::corrupt_header, "autoencoder checkpoint dimensions disagree with its spec");
  return model;
}

}  // namespace nirom
