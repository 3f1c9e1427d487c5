#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nirom/latent.hpp"
#include "nirom/snapstore.hpp"

namespace nirom {

/// Mode-count rule: keep the smallest prefix holding a (1 - tau) share of the
/// energy, or a fixed number of modes.
struct Truncation {
  enum class Kind { energy, fixed };
  Kind kind = Kind::energy;
  double tau = 0.01;
  Index modes = 0;

  static Truncation energy(double tau) { return {Kind::energy, tau, 0}; }
  static Truncation fixed(Index m) { return {Kind::fixed, 0.0, m}; }
};

/// One independently truncated block of a basis. A global basis has a single
/// block covering every row; a per-field basis has one per field and the
/// full theta is block diagonal.
struct ModeBlock {
  std::string field;
  Index row_offset = 0;
  Index row_count = 0;
  Index col_offset = 0;
  Index modes = 0;
  Vector sigma;  // full spectrum of the block, descending
};

struct PODBasis {
  Matrix theta;  // N x m, orthonormal columns
  std::vector<ModeBlock> blocks;
  std::vector<FieldSegment> layout;
  std::optional<Vector> mean;
  Truncation truncation;

  Index m() const { return theta.cols(); }
  Index n() const { return theta.rows(); }
  /// Spectrum of the first block (the whole matrix for a global basis).
  const Vector& sigma() const { return blocks.front().sigma; }
  /// Latent segments: one per block, named after its field.
  std::vector<FieldSegment> latent_segments() const;
};

/// Thin SVD of a block by the method of snapshots: eigendecomposition of the
/// smaller Gram matrix with cyclic Jacobi.
struct ThinSvd {
  Matrix u;      // rows x rank, orthonormal
  Vector sigma;  // min(rows, cols), descending
  Matrix v;      // cols x rank (right vectors for the kept columns)
};
ThinSvd snapshot_svd(const Matrix& s, Index rank);

/// Number of modes a criterion keeps for a spectrum (after dropping the
/// numerical null space, sigma_i^2 < 1e-14 sigma_1^2).
Index select_modes(const Vector& sigma, const Truncation& criterion);

PODBasis compute_basis(const SnapshotSet& set, const Truncation& criterion, bool center = false,
                       bool per_field = false);
LatentTrajectory project(const PODBasis& basis, const SnapshotSet& set);
SnapshotSet reconstruct(const PODBasis& basis, const LatentTrajectory& latent);

void save_basis(const PODBasis& basis, const std::filesystem::path& path);
PODBasis load_basis(const std::filesystem::path& path);

}  // namespace nirom
