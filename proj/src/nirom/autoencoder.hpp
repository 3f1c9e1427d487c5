#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nirom/latent.hpp"
#include "nirom/neuralnet.hpp"
#include "nirom/snapstore.hpp"

namespace nirom {

struct AESpec {
  std::string field = "u";
  Index input_dim = 0;
  Index latent_dim = 0;
  // Unset means four hidden layers with widths geometrically interpolated
  // between input_dim and latent_dim. An empty vector means no hidden layers.
  std::optional<std::vector<Index>> encoder_hidden;
  std::optional<std::vector<Index>> decoder_hidden;  // unset: mirror of the encoder
  Activation hidden_activation = Activation::relu;
  Activation encoder_output = Activation::linear;
  Activation decoder_output = Activation::sigmoid;
  bool batchnorm = false;
  bool bias = true;
};

void validate(const AESpec& spec);
std::vector<Index> encoder_widths(const AESpec& spec);
std::vector<Index> decoder_widths(const AESpec& spec);
/// Interval the training data must lie in, dictated by the decoder output.
std::optional<Interval> required_interval(const AESpec& spec);

AESpec ae_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AESpec& spec);

struct AEModel {
  AESpec spec;
  MLPNet encoder;
  MLPNet decoder;
  std::vector<LossRecord> history;
};

struct AETrainConfig {
  Index epochs = 1000;
  OptimizerConfig optimizer{Algorithm::adam, 1e-3, 0.9, 0.999, 0.9, 1e-7, Schedule::plateau(200, 0.5)};
  Index full_batch_limit = 4096;
  Index batch_size = 64;
  std::uint64_t seed = 0;  // mini-batch shuffling
};

AETrainConfig ae_train_config_from_json(const nlohmann::json& j);

struct AETrainResult {
  std::vector<LossRecord> history;
  double final_loss = 0.0;  // inference-mode MSE after the last update
  bool diverged = false;
  std::string message;
};

AEModel build(const AESpec& spec, std::uint64_t seed);
/// Rows of `data` are this model's field; columns are samples.
AETrainResult train(AEModel& model, const SnapshotSet& data, const AETrainConfig& cfg);

LatentTrajectory encode(const AEModel& model, const SnapshotSet& data);
SnapshotSet decode(const AEModel& model, const LatentTrajectory& latent);
double reconstruction_mse(const AEModel& model, const SnapshotSet& data);

void save_autoencoder(const AEModel& model, const std::filesystem::path& path);
AEModel load_autoencoder(const std::filesystem::path& path);

}  // namespace nirom
