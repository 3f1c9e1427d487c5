#include "nirom/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "nirom/error.hpp"

namespace nirom {

namespace {

void check_shapes(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::dimension_mismatch,
          "metrics: truth and prediction shapes differ");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

bool ErrorSeries::finite() const {
  return times.allFinite() && field_rmse.allFinite() && field_rel.allFinite() && rmse.allFinite() &&
         rel.allFinite();
}

Vector spatial_rmse(const Matrix& truth, const Matrix& prediction) {
  check_shapes(truth, prediction);
  require(truth.rows() > 0, ErrorCode::empty_set, "metrics: no rows");
  return ((truth - prediction).colwise().squaredNorm() / static_cast<double>(truth.rows())).cwiseSqrt().transpose();
}

double relative_error(const Vector& truth, const Vector& prediction) {
  require(truth.size() == prediction.size(), ErrorCode::dimension_mismatch, "metrics: length mismatch");
  const double denom = truth.norm();
  require(denom > 0.0, ErrorCode::degenerate, "metrics: relative error against a zero-norm truth");
  return (truth - prediction).norm() / denom;
}

ErrorSeries error_series(const SnapshotSet& truth, const SnapshotSet& prediction) {
  check_shapes(truth.data(), prediction.data());
  const Index samples = truth.cols();
  for (Index k = 0; k < samples; ++k)
    require(std::abs(truth.times()[k] - prediction.times()[k]) <= 1e-9 * std::max(1.0, std::abs(truth.times()[k])),
            ErrorCode::dimension_mismatch, "metrics: truth and prediction times differ");
  require(truth.fields().size() == prediction.fields().size(), ErrorCode::dimension_mismatch,
          "metrics: field layouts differ");

  ErrorSeries out;
  out.times = truth.times();
  const auto& fields = truth.fields();
  out.field_rmse.resize(static_cast<Index>(fields.size()), samples);
  out.field_rel.resize(static_cast<Index>(fields.size()), samples);
  for (size_t f = 0; f < fields.size(); ++f) {
    const auto& seg = fields[f];
    require(seg.offset == prediction.fields()[f].offset && seg.length == prediction.fields()[f].length,
            ErrorCode::dimension_mismatch, "metrics: field layouts differ");
    out.fields.push_back(seg.name);
    const Matrix t = truth.data().middleRows(static_cast<Index>(seg.offset), static_cast<Index>(seg.length));
    const Matrix p = prediction.data().middleRows(static_cast<Index>(seg.offset), static_cast<Index>(seg.length));
    out.field_rmse.row(static_cast<Index>(f)) = spatial_rmse(t, p).transpose();
    for (Index k = 0; k < samples; ++k) out.field_rel(static_cast<Index>(f), k) = relative_error(t.col(k), p.col(k));
  }
  out.rmse = spatial_rmse(truth.data(), prediction.data());
  out.rel.resize(samples);
  for (Index k = 0; k < samples; ++k) out.rel[k] = relative_error(truth.data().col(k), prediction.data().col(k));
  return out;
}

std::string error_csv(const ErrorSeries& s) {
  std::ostringstream out;
  out << "time,field,rmse,rel_err\n";
  for (Index k = 0; k < s.size(); ++k) {
    for (size_t f = 0; f < s.fields.size(); ++f)
      out << fmt(s.times[k]) << ',' << s.fields[f] << ',' << fmt(s.field_rmse(static_cast<Index>(f), k)) << ','
          << fmt(s.field_rel(static_cast<Index>(f), k)) << '\n';
    out << fmt(s.times[k]) << ",all," << fmt(s.rmse[k]) << ',' << fmt(s.rel[k]) << '\n';
  }
  return out.str();
}

std::string comparison_csv(const std::vector<std::string>& labels, const std::vector<ErrorSeries>& series) {
  require(labels.size() == series.size() && !series.empty(), ErrorCode::invalid_argument,
          "metrics: need one label per series");
  const ErrorSeries& first = series.front();
  for (const auto& s : series) {
    require(s.size() == first.size() && s.fields == first.fields, ErrorCode::dimension_mismatch,
            "metrics: series cover different times or fields");
    for (Index k = 0; k < s.size(); ++k)
      require(std::abs(s.times[k] - first.times[k]) <= 1e-9 * std::max(1.0, std::abs(first.times[k])),
              ErrorCode::dimension_mismatch, "metrics: series cover different times");
  }
  std::ostringstream out;
  out << "time,field";
  for (const auto& l : labels) out << ',' << l << "_rmse," << l << "_rel_err";
  out << '\n';
  for (Index k = 0; k < first.size(); ++k) {
    for (size_t f = 0; f <= first.fields.size(); ++f) {
      const bool agg = f == first.fields.size();
      out << fmt(first.times[k]) << ',' << (agg ? std::string("all") : first.fields[f]);
      for (const auto& s : series) {
        const double r = agg ? s.rmse[k] : s.field_rmse(static_cast<Index>(f), k);
        const double e = agg ? s.rel[k] : s.field_rel(static_cast<Index>(f), k);
        out << ',' << fmt(r) << ',' << fmt(e);
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace nirom
