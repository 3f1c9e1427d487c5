#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nirom/snapstore.hpp"

namespace nirom {

/// Exact DMD model. Time is measured in training steps from `t_origin`.
struct DMDModel {
  Index rank = 0;
  CMatrix modes;               // N x r
  CVector eigenvalues;         // discrete, per training step
  CVector exponents;           // principal log of the eigenvalues
  CVector amplitudes;          // least-squares fit of the first snapshot
  Matrix reduced_operator;     // r x r, in the leading left singular basis
  Vector sigma;                // singular values of the shifted-out data
  double t_origin = 0.0;
  double dt = 1.0;
  std::vector<FieldSegment> layout;
  std::string mesh_id;
};

DMDModel fit_dmd(const SnapshotSet& set, Index rank);

/// Reconstruction at physical times (fractional steps allowed).
SnapshotSet predict(const DMDModel& model, const Vector& times);

/// CSV with columns re_lambda, im_lambda, abs_lambda, re_omega, im_omega, abs_b.
std::string spectrum_csv(const DMDModel& model);

void save_dmd(const DMDModel& model, const std::filesystem::path& path);
DMDModel load_dmd(const std::filesystem::path& path);

}  // namespace nirom
