#include "nirom/pod.hpp"

#include <algorithm>
#include <cmath>

#include "nirom/error.hpp"

namespace nirom {

namespace {

constexpr double kNullSpaceRatio = 1e-14;

struct BlockResult {
  Matrix theta;
  Vector sigma;
};

BlockResult compute_block(const Matrix& s, const Truncation& criterion) {
  require(s.cwiseAbs().maxCoeff() > 0.0, ErrorCode::degenerate, "pod: snapshot block is all zero");
  const Index full = std::min(s.rows(), s.cols());
  if (criterion.kind == Truncation::Kind::fixed)
    require(criterion.modes >= 1 && criterion.modes <= full, ErrorCode::out_of_range,
            "pod: mode count " + std::to_string(criterion.modes) + " outside [1, " +
                std::to_string(full) + "]");
  ThinSvd svd = snapshot_svd(s, full);
  const Index m = select_modes(svd.sigma, criterion);
  BlockResult out;
  out.theta = svd.u.leftCols(m);
  out.sigma = svd.sigma;
  return out;
}

}  // namespace

std::vector<FieldSegment> PODBasis::latent_segments() const {
  std::vector<FieldSegment> segs;
  for (const auto& b : blocks)
    segs.push_back({b.field, static_cast<std::uint64_t>(b.col_offset), static_cast<std::uint64_t>(b.modes)});
  return segs;
}

ThinSvd snapshot_svd(const Matrix& s, Index rank) {
  const Index full = std::min(s.rows(), s.cols());
  require(rank >= 0 && rank <= full, ErrorCode::out_of_range, "svd: rank out of range");
  ThinSvd out;
  out.sigma.resize(full);
  if (s.rows() >= s.cols()) {
    // Method of snapshots: (S^T S) v = sigma^2 v, u = S v / sigma.
    Matrix gram = s.transpose() * s;
    const SymmetricEigen eig = symmetric_eigen_jacobi(gram);
    for (Index i = 0; i < full; ++i) out.sigma[i] = std::sqrt(std::max(eig.values[i], 0.0));
    Index usable = 0;
    while (usable < rank && out.sigma[usable] > 0.0 &&
           out.sigma[usable] * out.sigma[usable] >= kNullSpaceRatio * out.sigma[0] * out.sigma[0])
      ++usable;
    out.v = eig.vectors.leftCols(usable);
    out.u = s * out.v;
    for (Index j = 0; j < usable; ++j) out.u.col(j) /= out.sigma[j];
  } else {
    Matrix gram = s * s.transpose();
    const SymmetricEigen eig = symmetric_eigen_jacobi(gram);
    for (Index i = 0; i < full; ++i) out.sigma[i] = std::sqrt(std::max(eig.values[i], 0.0));
    Index usable = 0;
    while (usable < rank && out.sigma[usable] > 0.0 &&
           out.sigma[usable] * out.sigma[usable] >= kNullSpaceRatio * out.sigma[0] * out.sigma[0])
      ++usable;
    out.u = eig.vectors.leftCols(usable);
    out.v = s.transpose() * out.u;
    for (Index j = 0; j < usable; ++j) out.v.col(j) /= out.sigma[j];
  }
  if (out.u.cols() > 0) {
    orthonormalize_columns(out.u);
    // Keep u and v paired under the sign convention.
    for (Index j = 0; j < out.u.cols(); ++j) {
      Index imax = 0;
      out.u.col(j).cwiseAbs().maxCoeff(&imax);
      if (out.u(imax, j) < 0.0) {
        out.u.col(j) = -out.u.col(j);
        out.v.col(j) = -out.v.col(j);
      }
    }
  }
  return out;
}

Index select_modes(const Vector& sigma, const Truncation& criterion) {
  const Index full = sigma.size();
  Index significant = 0;
  while (significant < full && sigma[significant] > 0.0 &&
         sigma[significant] * sigma[significant] >= kNullSpaceRatio * sigma[0] * sigma[0])
    ++significant;
  if (criterion.kind == Truncation::Kind::fixed) return std::min(criterion.modes, significant);

  require(criterion.tau >= 0.0 && criterion.tau < 1.0, ErrorCode::invalid_argument,
          "pod: energy tolerance must lie in [0, 1)");
  const double total = sigma.squaredNorm();
  const double needed = (1.0 - criterion.tau) * total;
  double running = 0.0;
  Index m = 0;
  while (m < significant) {
    running += sigma[m] * sigma[m];
    ++m;
    if (running >= needed) break;
  }
  return std::max<Index>(m, 1);
}

PODBasis compute_basis(const SnapshotSet& set, const Truncation& criterion, bool center, bool per_field) {
  require(set.cols() >= 2, ErrorCode::invalid_argument, "pod: need at least two snapshots");
  PODBasis basis;
  basis.layout = set.fields();
  basis.truncation = criterion;
  Matrix s = set.data();
  if (center) {
    basis.mean = s.rowwise().mean();
    s.colwise() -= *basis.mean;
  }

  std::vector<FieldSegment> segments =
      per_field ? set.fields() : std::vector<FieldSegment>{{"all", 0, static_cast<std::uint64_t>(set.rows())}};
  if (!per_field && set.fields().size() == 1) segments.front().name = set.fields().front().name;

  std::vector<BlockResult> results;
  Index total_modes = 0;
  for (const auto& seg : segments) {
    results.push_back(compute_block(s.middleRows(static_cast<Index>(seg.offset), static_cast<Index>(seg.length)),
                                    criterion));
    total_modes += results.back().theta.cols();
  }

  basis.theta = Matrix::Zero(set.rows(), total_modes);
  Index col = 0;
  for (size_t b = 0; b < segments.size(); ++b) {
    ModeBlock block;
    block.field = segments[b].name;
    block.row_offset = static_cast<Index>(segments[b].offset);
    block.row_count = static_cast<Index>(segments[b].length);
    block.col_offset = col;
    block.modes = results[b].theta.cols();
    block.sigma = results[b].sigma;
    basis.theta.block(block.row_offset, col, block.row_count, block.modes) = results[b].theta;
    col += block.modes;
    basis.blocks.push_back(std::move(block));
  }
  return basis;
}

LatentTrajectory project(const PODBasis& basis, const SnapshotSet& set) {
  require(set.rows() == basis.n(), ErrorCode::dimension_mismatch,
          "pod: snapshot rows do not match basis rows");
  LatentTrajectory out;
  out.times = set.times();
  out.segments = basis.latent_segments();
  out.z.resize(basis.m(), set.cols());
  for (const auto& b : basis.blocks) {
    Matrix rows = set.data().middleRows(b.row_offset, b.row_count);
    if (basis.mean) rows.colwise() -= basis.mean->segment(b.row_offset, b.row_count);
    out.z.middleRows(b.col_offset, b.modes).noalias() =
        basis.theta.block(b.row_offset, b.col_offset, b.row_count, b.modes).transpose() * rows;
  }
  return out;
}

SnapshotSet reconstruct(const PODBasis& basis, const LatentTrajectory& latent) {
  require(latent.dim() == basis.m(), ErrorCode::dimension_mismatch,
          "pod: latent dimension does not match basis");
  Matrix out(basis.n(), latent.size());
  for (const auto& b : basis.blocks) {
    out.middleRows(b.row_offset, b.row_count).noalias() =
        basis.theta.block(b.row_offset, b.col_offset, b.row_count, b.modes) * latent.z.middleRows(b.col_offset, b.modes);
  }
  if (basis.mean) out.colwise() += *basis.mean;
  return SnapshotSet(std::move(out), latent.times, basis.layout);
}

void save_basis(const PODBasis& basis, const std::filesystem::path& path) {
  require(basis.m() > 0, ErrorCode::empty_set, "pod: empty basis");
  nlohmann::json meta;
  meta["kind"] = "basis";
  meta["truncation"] = basis.truncation.kind == Truncation::Kind::energy
                           ? nlohmann::json{{"type", "energy"}, {"tau", basis.truncation.tau}}
                           : nlohmann::json{{"type", "fixed"}, {"modes", basis.truncation.modes}};
  meta["blocks"] = nlohmann::json::array();
  for (const auto& b : basis.blocks) {
    meta["blocks"].push_back({{"field", b.field},
                              {"row_offset", b.row_offset},
                              {"row_count", b.row_count},
                              {"col_offset", b.col_offset},
                              {"modes", b.modes},
                              {"sigma", std::vector<double>(b.sigma.data(), b.sigma.data() + b.sigma.size())}});
  }
  if (basis.mean) meta["mean"] = std::vector<double>(basis.mean->data(), basis.mean->data() + basis.mean->size());
  Vector index(basis.m());
  for (Index j = 0; j < basis.m(); ++j) index[j] = static_cast<double>(j);
  save(SnapshotSet(basis.theta, index, basis.layout), path, meta);
}

PODBasis load_basis(const std::filesystem::path& path) {
  const SnapshotSet set = load(path);
  const auto manifest = load_manifest(path);
  require(manifest.is_object() && manifest.contains("meta") && manifest["meta"].value("kind", "") == "basis",
          ErrorCode::corrupt_header, "'" + path.string() + "' is not a basis container");
  const auto& meta = manifest["meta"];
  try {
    PODBasis basis;
    basis.theta = set.data();
    basis.layout = set.fields();
    const auto& tr = meta.at("truncation");
    basis.truncation = tr.at("type") == "energy" ? Truncation::energy(tr.at("tau").get<double>())
                                                  : Truncation::fixed(tr.at("modes").get<Index>());
    for (const auto& jb : meta.at("blocks")) {
      ModeBlock b;
      b.field = jb.at("field");
      b.row_offset = jb.at("row_offset");
      b.row_count = jb.at("row_count");
      b.col_offset = jb.at("col_offset");
      b.modes = jb.at("modes");
      const auto sig = jb.at("sigma").get<std::vector<double>>();
      b.sigma = Eigen::Map<const Vector>(sig.data(), static_cast<Index>(sig.size()));
      require(b.row_offset + b.row_count <= basis.n() && b.col_offset + b.modes <= basis.m(),
              ErrorCode::corrupt_header, "basis block out of range");
      basis.blocks.push_back(std::move(b));
    }
    if (meta.contains("mean")) {
      const auto mean = meta.at("mean").get<std::vector<double>>();
      require(static_cast<Index>(mean.size()) == basis.n(), ErrorCode::corrupt_header, "basis mean length");
      basis.mean = Eigen::Map<const Vector>(mean.data(), basis.n());
    }
    require(!basis.blocks.empty(), ErrorCode::corrupt_header, "basis has no blocks");
    return basis;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("basis manifest: ") + e.what());
  }
}

}  // namespace nirom
