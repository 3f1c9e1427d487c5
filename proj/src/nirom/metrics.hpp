#pragma once

#include <string>
#include <vector>

#include "nirom/neuralnet.hpp"  // mse()
#include "nirom/snapstore.hpp"

namespace nirom {

/// Per-time errors, per field and aggregated over all rows.
struct ErrorSeries {
  Vector times;
  std::vector<std::string> fields;
  Matrix field_rmse;     // fields x times
  Matrix field_rel;      // fields x times
  Vector rmse;           // aggregate
  Vector rel;            // aggregate

  Index size() const { return times.size(); }
  bool finite() const;
};

/// Spatial RMSE and relative L2 error at every snapshot.
ErrorSeries error_series(const SnapshotSet& truth, const SnapshotSet& prediction);

/// sqrt(mean over rows of squared error), one value per column.
Vector spatial_rmse(const Matrix& truth, const Matrix& prediction);
/// ||truth - prediction|| / ||truth|| for one snapshot column.
double relative_error(const Vector& truth, const Vector& prediction);

/// Long format: time,field,rmse,rel_err with the aggregate under field "all".
std::string error_csv(const ErrorSeries& series);

/// Wide format for several labelled series over the same times:
/// time,field,<label>_rmse,<label>_rel_err,...
std::string comparison_csv(const std::vector<std::string>& labels, const std::vector<ErrorSeries>& series);

}  // namespace nirom
