#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nirom/snapstore.hpp"

namespace nirom {

enum class TimeNormalization { none, unit_interval, unit_step };

/// m x M latent coefficients with their time stamps. `segments` records which
/// rows came from which physical field (per-field reducers).
struct LatentTrajectory {
  Matrix z;
  Vector times;
  TimeNormalization normalization = TimeNormalization::none;
  std::vector<FieldSegment> segments;

  Index dim() const { return z.rows(); }
  Index size() const { return z.cols(); }
};

void validate(const LatentTrajectory& latent);

SnapshotSet to_snapshots(const LatentTrajectory& latent);
LatentTrajectory from_snapshots(const SnapshotSet& set);

void save_latent(const LatentTrajectory& latent, const std::filesystem::path& path);
LatentTrajectory load_latent(const std::filesystem::path& path);

}  // namespace nirom
