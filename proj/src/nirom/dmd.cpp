#include "nirom/dmd.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/QR>

#include "nirom/error.hpp"
#include "nirom/pod.hpp"

namespace nirom {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kImagTolerance = 1e-8;

void check_uniform(const Vector& times) {
  const double dt = times[1] - times[0];
  for (Index k = 1; k < times.size(); ++k)
    require(std::abs((times[k] - times[k - 1]) - dt) <= 1e-6 * std::abs(dt), ErrorCode::invalid_argument,
            "dmd: snapshot times must be uniformly spaced");
}

nlohmann::json complex_list(const CVector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back({v[i].real(), v[i].imag()});
  return out;
}

CVector complex_vector(const nlohmann::json& j) {
  CVector v(static_cast<Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = {j[i].at(0).get<double>(), j[i].at(1).get<double>()};
  return v;
}

}  // namespace

DMDModel fit_dmd(const SnapshotSet& set, Index rank) {
  const Index n = set.rows();
  const Index samples = set.cols();
  require(samples >= 2, ErrorCode::invalid_argument, "dmd: need at least two snapshots");
  require(rank >= 1 && rank <= std::min(n, samples - 1), ErrorCode::out_of_range,
          "dmd: rank must lie in [1, min(rows, snapshots - 1)]");
  check_uniform(set.times());

  const Matrix& data = set.data();
  const Matrix x1 = data.leftCols(samples - 1);
  const Matrix x2 = data.rightCols(samples - 1);

  const ThinSvd svd = snapshot_svd(x1, rank);
  require(svd.sigma[0] > 0.0, ErrorCode::degenerate, "dmd: snapshot data is identically zero");
  if (svd.u.cols() < rank || svd.sigma[rank - 1] < kRankTolerance * svd.sigma[0]) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "dmd: data has numerical rank %lld, below the requested rank %lld",
                  static_cast<long long>(svd.u.cols()), static_cast<long long>(rank));
    fail(ErrorCode::degenerate, msg);
  }
  const Matrix& u = svd.u;

  // A_r = U^T X2 (U^T X1)^+, which equals U^T X2 V Sigma^-1 for exact singular
  // vectors; the pseudo-inverse keeps it consistent with the computed basis.
  const Matrix projected = u.transpose() * x1;  // r x (M-1)
  const Eigen::HouseholderQR<Matrix> qr(projected.transpose());
  const Matrix q = qr.householderQ() * Matrix::Identity(samples - 1, rank);
  const Matrix r = qr.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
  // pinv(projected) = Q R^{-T}
  const Matrix pinv = q * r.transpose().triangularView<Eigen::Lower>().solve(Matrix::Identity(rank, rank));
  const Matrix shifted = x2 * pinv;  // N x r
  DMDModel model;
  model.rank = rank;
  model.reduced_operator = u.transpose() * shifted;
  model.sigma = svd.sigma;
  model.t_origin = set.times()[0];
  model.dt = set.times()[1] - set.times()[0];
  model.layout = set.fields();
  model.mesh_id = set.mesh_id();

  const std::vector<Complex> lambda = real_eigenvalues(model.reduced_operator);
  model.eigenvalues.resize(rank);
  model.exponents.resize(rank);
  CMatrix w(rank, rank);
  for (Index j = 0; j < rank; ++j) {
    const Complex l = lambda[static_cast<size_t>(j)];
    model.eigenvalues[j] = l;
    require(std::abs(l) > 0.0, ErrorCode::degenerate, "dmd: zero eigenvalue has no continuous exponent");
    model.exponents[j] = std::log(l);
    if (l.imag() < 0.0 && j > 0 && lambda[static_cast<size_t>(j - 1)] == std::conj(l)) {
      w.col(j) = w.col(j - 1).conjugate();
    } else {
      w.col(j) = eigenvector_for(model.reduced_operator, l);
    }
  }
  model.modes = shifted.cast<Complex>() * w;

  const CVector x0 = data.col(0).cast<Complex>();
  model.amplitudes = model.modes.colPivHouseholderQr().solve(x0);
  require(model.amplitudes.allFinite(), ErrorCode::non_finite, "dmd: amplitude fit failed");
  return model;
}

SnapshotSet predict(const DMDModel& model, const Vector& times) {
  require(times.size() >= 1, ErrorCode::invalid_argument, "dmd: no prediction times");
  const Index n = model.modes.rows();
  CMatrix dynamics(model.rank, times.size());
  for (Index k = 0; k < times.size(); ++k) {
    const double steps = (times[k] - model.t_origin) / model.dt;
    for (Index j = 0; j < model.rank; ++j)
      dynamics(j, k) = model.amplitudes[j] * std::exp(model.exponents[j] * steps);
  }
  const CMatrix x = model.modes * dynamics;
  require(x.allFinite(), ErrorCode::non_finite, "dmd: prediction overflowed (eigenvalues outside the unit circle)");
  const Matrix re = x.real();
  const double max_real = re.size() ? re.cwiseAbs().maxCoeff() : 0.0;
  const double max_imag = x.size() ? x.imag().cwiseAbs().maxCoeff() : 0.0;
  require(max_imag <= kImagTolerance * max_real || max_imag <= std::numeric_limits<double>::min(),
          ErrorCode::internal, "dmd: reconstruction has a non-negligible imaginary part");
  std::vector<FieldSegment> layout = model.layout;
  if (layout.empty()) layout = {{"u", 0, static_cast<std::uint64_t>(n)}};
  return SnapshotSet(re, times, layout, model.mesh_id);
}

std::string spectrum_csv(const DMDModel& model) {
  std::ostringstream out;
  out << "re_lambda,im_lambda,abs_lambda,re_omega,im_omega,abs_b\n";
  char line[256];
  for (Index j = 0; j < model.rank; ++j) {
    const Complex l = model.eigenvalues[j];
    const Complex w = model.exponents[j] / model.dt;
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", l.real(), l.imag(), std::abs(l),
                  w.real(), w.imag(), std::abs(model.amplitudes[j]));
    out << line;
  }
  return out.str();
}

void save_dmd(const DMDModel& model, const std::filesystem::path& path) {
  const Index n = model.modes.rows();
  Matrix data(n, 2 * model.rank);
  data.leftCols(model.rank) = model.modes.real();
  data.rightCols(model.rank) = model.modes.imag();
  Vector index = Vector::LinSpaced(2 * model.rank, 0.0, static_cast<double>(2 * model.rank - 1));
  nlohmann::json meta{{"kind", "dmd"},
                      {"rank", model.rank},
                      {"eigenvalues", complex_list(model.eigenvalues)},
                      {"amplitudes", complex_list(model.amplitudes)},
                      {"t_origin", model.t_origin},
                      {"dt", model.dt},
                      {"sigma", std::vector<double>(model.sigma.data(), model.sigma.data() + model.sigma.size())}};
  nlohmann::json op = nlohmann::json::array();
  for (Index i = 0; i < model.rank; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < model.rank; ++j) row.push_back(model.reduced_operator(i, j));
    op.push_back(row);
  }
  meta["reduced_operator"] = op;
  std::vector<FieldSegment> layout = model.layout;
  if (layout.empty()) layout = {{"u", 0, static_cast<std::uint64_t>(n)}};
  save(SnapshotSet(data, index, layout, model.mesh_id), path, meta);
}

DMDModel load_dmd(const std::filesystem::path& path) {
  const SnapshotSet set = load(path);
  const nlohmann::json meta = load_manifest(path).value("meta", nlohmann::json::object());
  require(meta.value("kind", "") == "dmd", ErrorCode::corrupt_header, "'" + path.string() + "' is not a DMD model");
  DMDModel model;
  try {
    model.rank = meta.at("rank").get<Index>();
    require(set.cols() == 2 * model.rank, ErrorCode::corrupt_header, "dmd: mode count disagrees with rank");
    model.modes = set.data().leftCols(model.rank).cast<Complex>();
    model.modes.imag() = set.data().rightCols(model.rank);
    model.eigenvalues = complex_vector(meta.at("eigenvalues"));
    model.amplitudes = complex_vector(meta.at("amplitudes"));
    model.t_origin = meta.at("t_origin").get<double>();
    model.dt = meta.at("dt").get<double>();
    const auto sigma = meta.at("sigma").get<std::vector<double>>();
    model.sigma = Eigen::Map<const Vector>(sigma.data(), static_cast<Index>(sigma.size()));
    const auto& op = meta.at("reduced_operator");
    model.reduced_operator.resize(model.rank, model.rank);
    for (Index i = 0; i < model.rank; ++i)
      for (Index j = 0; j < model.rank; ++j)
        model.reduced_operator(i, j) = op.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)).get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("dmd metadata: ") + e.what());
  }
  require(model.eigenvalues.size() == model.rank && model.amplitudes.size() == model.rank, ErrorCode::corrupt_header,
          "dmd: spectrum length disagrees with rank");
  model.exponents.resize(model.eigenvalues.size());
  for (Index j = 0; j < model.eigenvalues.size(); ++j) model.exponents[j] = std::log(model.eigenvalues[j]);
  model.layout = set.fields();
  model.mesh_id = set.mesh_id();
  return model;
}

}  // namespace nirom
