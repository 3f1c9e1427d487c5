#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nirom/linalg.hpp"

namespace nirom {

/// A named block of consecutive rows in a snapshot matrix, e.g. the pressure
/// degrees of freedom of every node.
struct FieldSegment {
  std::string name;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  bool operator==(const FieldSegment&) const = default;
};

/// N x M matrix of full-field states (one column per time sample) together
/// with the sample times and the packing of physical fields into rows.
///
/// The constructor validates every invariant; a SnapshotSet that exists is
/// always consistent. Empty `fields` means one field named "u" spanning all
/// rows.
class SnapshotSet {
 public:
  SnapshotSet() = default;
  SnapshotSet(Matrix data, Vector times, std::vector<FieldSegment> fields = {},
              std::string mesh_id = {});

  const Matrix& data() const { return data_; }
  const Vector& times() const { return times_; }
  const std::vector<FieldSegment>& fields() const { return fields_; }
  const std::string& mesh_id() const { return mesh_id_; }

  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }

  const FieldSegment& field(const std::string& name) const;
  /// Rows belonging to one field, as a fresh set with a single field.
  SnapshotSet field_block(const FieldSegment& segment) const;
  /// Columns [first, first + count).
  SnapshotSet column_range(Index first, Index count) const;

  bool operator==(const SnapshotSet& other) const;

 private:
  Matrix data_;
  Vector times_;
  std::vector<FieldSegment> fields_;
  std::string mesh_id_;
};

/// Checks the field layout against a row count; throws on overlap or gaps.
void validate_fields(const std::vector<FieldSegment>& fields, Index rows);

/// Splits `rows` into consecutive segments named `names`, as evenly as
/// possible (earlier fields absorb the remainder).
std::vector<FieldSegment> split_fields(const std::vector<std::string>& names, Index rows);

// Container I/O. The binary file is authoritative; a sidecar JSON manifest
// (same stem, ".json") duplicates sizes and carries `meta` and the mesh id.
SnapshotSet load(const std::filesystem::path& path);
void save(const SnapshotSet& set, const std::filesystem::path& path);
void save(const SnapshotSet& set, const std::filesystem::path& path, const nlohmann::json& meta);
/// Sidecar manifest for a container, or null if there is none.
nlohmann::json load_manifest(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& path);
/// Exact byte count of the container for the given layout.
std::uint64_t container_size(std::uint64_t n, std::uint64_t m,
                             const std::vector<FieldSegment>& fields);

// ---------------------------------------------------------------------------
// Min-max scaling

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

inline constexpr Interval kUnitInterval{0.0, 1.0};
inline constexpr Interval kSymmetricInterval{-1.0, 1.0};

enum class Granularity { per_row, per_field };
enum class Direction { forward, inverse };

struct ScalingParams {
  Interval target;
  Granularity granularity = Granularity::per_field;
  std::vector<FieldSegment> layout;
  // Per-row source range (per-field ranges are broadcast to their rows).
  Vector row_min;
  Vector row_max;
  std::vector<Index> degenerate_rows;
};

ScalingParams fit_scaling(const SnapshotSet& set, Interval target,
                          Granularity granularity = Granularity::per_field);
SnapshotSet apply_scaling(const SnapshotSet& set, const ScalingParams& params, Direction direction);

nlohmann::json to_json(const ScalingParams& params);
ScalingParams scaling_from_json(const nlohmann::json& j);
Interval parse_interval(const std::string& text);

}  // namespace nirom
