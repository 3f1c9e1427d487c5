#include "nirom/snapstore.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nirom/error.hpp"

namespace nirom {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'S', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return value;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    value = byteswap_if_big(value);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void put_doubles(const double* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      put_bytes(reinterpret_cast<const char*>(data), n * sizeof(double));
    } else {
      for (std::size_t i = 0; i < n; ++i) put(data[i]);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buffer) : buf_(buffer) {}
  std::size_t remaining() const { return buf_.size() - pos_; }
  template <typename T>
  T get(const char* what) {
    if (remaining() < sizeof(T)) fail(ErrorCode::corrupt_header, std::string("truncated header: ") + what);
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(value);
  }
  std::string get_string(std::size_t n) {
    if (remaining() < n) fail(ErrorCode::corrupt_header, "truncated field name");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void get_doubles(double* out, std::size_t n) {
    std::memcpy(out, buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < n; ++i) out[i] = byteswap_if_big(out[i]);
    }
  }

 private:
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

std::vector<FieldSegment> default_fields(Index rows) {
  if (rows == 0) return {};
  return {FieldSegment{"u", 0, static_cast<std::uint64_t>(rows)}};
}

}  // namespace

void validate_fields(const std::vector<FieldSegment>& fields, Index rows) {
  std::vector<FieldSegment> sorted = fields;
  std::sort(sorted.begin(), sorted.end(),
            [](const FieldSegment& a, const FieldSegment& b) { return a.offset < b.offset; });
  std::uint64_t expected = 0;
  for (const auto& f : sorted) {
    require(f.length > 0, ErrorCode::dimension_mismatch, "field '" + f.name + "' is empty");
    require(f.offset == expected, ErrorCode::dimension_mismatch,
            "field '" + f.name + "' overlaps or leaves a gap");
    expected += f.length;
  }
  require(expected == static_cast<std::uint64_t>(rows), ErrorCode::dimension_mismatch,
          "field lengths do not sum to the row count");
  for (std::size_t i = 0; i < sorted.size(); ++i)
    for (std::size_t j = i + 1; j < sorted.size(); ++j)
      require(sorted[i].name != sorted[j].name, ErrorCode::dimension_mismatch,
              "duplicate field name '" + sorted[i].name + "'");
}

std::vector<FieldSegment> split_fields(const std::vector<std::string>& names, Index rows) {
  require(!names.empty(), ErrorCode::invalid_argument, "split_fields: no names");
  const auto count = static_cast<Index>(names.size());
  require(rows >= count, ErrorCode::invalid_argument, "split_fields: fewer rows than fields");
  std::vector<FieldSegment> out;
  std::uint64_t offset = 0;
  for (Index i = 0; i < count; ++i) {
    const auto len = static_cast<std::uint64_t>(rows / count + (i < rows % count ? 1 : 0));
    out.push_back({names[static_cast<size_t>(i)], offset, len});
    offset += len;
  }
  return out;
}

SnapshotSet::SnapshotSet(Matrix data, Vector times, std::vector<FieldSegment> fields,
                         std::string mesh_id)
    : data_(std::move(data)), times_(std::move(times)), fields_(std::move(fields)),
      mesh_id_(std::move(mesh_id)) {
  require(data_.cols() > 0, ErrorCode::empty_set, "empty snapshot set");
  require(times_.size() == data_.cols(), ErrorCode::dimension_mismatch,
          "time count does not match column count");
  if (fields_.empty()) fields_ = default_fields(data_.rows());
  validate_fields(fields_, data_.rows());
  for (Index k = 0; k < times_.size(); ++k)
    require(std::isfinite(times_[k]), ErrorCode::non_finite, "non-finite time stamp");
  for (Index k = 1; k < times_.size(); ++k)
    require(times_[k] > times_[k - 1], ErrorCode::non_monotone_times,
            "times are not strictly increasing");
  require(data_.allFinite(), ErrorCode::non_finite, "non-finite snapshot entry");
}

const FieldSegment& SnapshotSet::field(const std::string& name) const {
  for (const auto& f : fields_)
    if (f.name == name) return f;
  fail(ErrorCode::invalid_argument, "no field named '" + name + "'");
}

SnapshotSet SnapshotSet::field_block(const FieldSegment& segment) const {
  const auto off = static_cast<Index>(segment.offset);
  const auto len = static_cast<Index>(segment.length);
  require(off + len <= rows(), ErrorCode::dimension_mismatch, "field segment out of range");
  return SnapshotSet(data_.middleRows(off, len), times_, {{segment.name, 0, segment.length}},
                     mesh_id_);
}

SnapshotSet SnapshotSet::column_range(Index first, Index count) const {
  require(first >= 0 && count > 0 && first + count <= cols(), ErrorCode::out_of_range,
          "column range out of bounds");
  return SnapshotSet(data_.middleCols(first, count), times_.segment(first, count), fields_,
                     mesh_id_);
}

bool SnapshotSet::operator==(const SnapshotSet& other) const {
  if (data_.rows() != other.data_.rows() || data_.cols() != other.data_.cols()) return false;
  const auto bytes = static_cast<std::size_t>(data_.size()) * sizeof(double);
  return fields_ == other.fields_ && mesh_id_ == other.mesh_id_ &&
         std::memcmp(times_.data(), other.times_.data(),
                     static_cast<std::size_t>(times_.size()) * sizeof(double)) == 0 &&
         std::memcmp(data_.data(), other.data_.data(), bytes) == 0;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

std::uint64_t container_size(std::uint64_t n, std::uint64_t m,
                             const std::vector<FieldSegment>& fields) {
  std::uint64_t size = 4 + 4 + 8 + 8 + 8;
  for (const auto& f : fields) size += 4 + f.name.size() + 8 + 8;
  return size + m * 8 + n * m * 8;
}

void save(const SnapshotSet& set, const std::filesystem::path& path) {
  save(set, path, nlohmann::json::object());
}

void save(const SnapshotSet& set, const std::filesystem::path& path, const nlohmann::json& meta) {
  require(set.cols() > 0, ErrorCode::empty_set, "empty snapshot set");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    Writer w(out);
    w.put_bytes(kMagic.data(), kMagic.size());
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(set.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(set.cols()));
    w.put<std::uint64_t>(set.fields().size());
    for (const auto& f : set.fields()) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(f.name.size()));
      w.put_bytes(f.name.data(), f.name.size());
      w.put<std::uint64_t>(f.offset);
      w.put<std::uint64_t>(f.length);
    }
    w.put_doubles(set.times().data(), static_cast<std::size_t>(set.times().size()));
    w.put_doubles(set.data().data(), static_cast<std::size_t>(set.data().size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path.string() + "'");
  }

  nlohmann::json manifest;
  manifest["format"] = "NSNP";
  manifest["version"] = kVersion;
  manifest["rows"] = set.rows();
  manifest["cols"] = set.cols();
  manifest["mesh_id"] = set.mesh_id();
  manifest["fields"] = nlohmann::json::array();
  for (const auto& f : set.fields())
    manifest["fields"].push_back({{"name", f.name}, {"offset", f.offset}, {"length", f.length}});
  manifest["meta"] = meta;
  std::ofstream side(manifest_path(path), std::ios::trunc);
  require(static_cast<bool>(side), ErrorCode::io, "cannot write manifest for '" + path.string() + "'");
  side << manifest.dump(2) << '\n';
}

nlohmann::json load_manifest(const std::filesystem::path& path) {
  std::ifstream in(manifest_path(path));
  if (!in) return nullptr;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, std::string("unreadable manifest: ") + e.what());
  }
}

SnapshotSet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<char> buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(buffer);
  std::array<char, 4> magic{};
  for (auto& c : magic) c = r.get<char>("magic");
  require(magic == kMagic, ErrorCode::corrupt_header, "bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kVersion, ErrorCode::corrupt_header,
          "unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint64_t>("rows");
  const auto m = r.get<std::uint64_t>("cols");
  const auto f = r.get<std::uint64_t>("field count");
  require(f <= r.remaining(), ErrorCode::corrupt_header, "field count exceeds file size");
  std::vector<FieldSegment> fields;
  for (std::uint64_t i = 0; i < f; ++i) {
    const auto len = r.get<std::uint32_t>("field name length");
    FieldSegment seg;
    seg.name = r.get_string(len);
    seg.offset = r.get<std::uint64_t>("field offset");
    seg.length = r.get<std::uint64_t>("field length");
    fields.push_back(std::move(seg));
  }
  require(m > 0, ErrorCode::empty_set, "empty snapshot set");
  // Guard the multiplication before trusting it.
  const std::uint64_t limit = r.remaining() / 8;
  require(m <= limit && (n == 0 || n <= (limit - m) / m), ErrorCode::dimension_mismatch,
          "declared sizes exceed payload");
  const std::uint64_t expected = (m + n * m) * 8;
  require(r.remaining() == expected, ErrorCode::dimension_mismatch,
          "payload length does not match declared sizes");

  Vector times(static_cast<Index>(m));
  r.get_doubles(times.data(), m);
  Matrix data(static_cast<Index>(n), static_cast<Index>(m));
  r.get_doubles(data.data(), n * m);

  std::string mesh_id;
  const auto manifest = load_manifest(path);
  if (manifest.is_object() && manifest.contains("mesh_id") && manifest["mesh_id"].is_string())
    mesh_id = manifest["mesh_id"].get<std::string>();
  if (fields.empty() && n > 0) fail(ErrorCode::corrupt_header, "no field records");
  return SnapshotSet(std::move(data), std::move(times), std::move(fields), std::move(mesh_id));
}

// ---------------------------------------------------------------------------

Interval parse_interval(const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ' ') s += c;
  if (s == "[0,1]" || s == "unit") return kUnitInterval;
  if (s == "[-1,1]" || s == "symmetric") return kSymmetricInterval;
  fail(ErrorCode::invalid_argument, "unknown scaling interval '" + text + "'");
}

ScalingParams fit_scaling(const SnapshotSet& set, Interval target, Granularity granularity) {
  require(target.hi > target.lo, ErrorCode::invalid_argument, "empty target interval");
  ScalingParams p;
  p.target = target;
  p.granularity = granularity;
  p.layout = set.fields();
  const Matrix& x = set.data();
  p.row_min = x.rowwise().minCoeff();
  p.row_max = x.rowwise().maxCoeff();
  if (granularity == Granularity::per_field) {
    for (const auto& f : set.fields()) {
      const auto off = static_cast<Index>(f.offset);
      const auto len = static_cast<Index>(f.length);
      const double lo = p.row_min.segment(off, len).minCoeff();
      const double hi = p.row_max.segment(off, len).maxCoeff();
      p.row_min.segment(off, len).setConstant(lo);
      p.row_max.segment(off, len).setConstant(hi);
    }
  }
  for (Index i = 0; i < x.rows(); ++i)
    if (p.row_max[i] == p.row_min[i]) p.degenerate_rows.push_back(i);
  return p;
}

SnapshotSet apply_scaling(const SnapshotSet& set, const ScalingParams& params, Direction direction) {
  require(set.rows() == params.row_min.size() && set.fields() == params.layout,
          ErrorCode::dimension_mismatch, "scaling layout does not match snapshot layout");
  const double lo = params.target.lo;
  const double width = params.target.hi - params.target.lo;
  const double mid = 0.5 * (params.target.lo + params.target.hi);
  Matrix out(set.rows(), set.cols());
  for (Index i = 0; i < set.rows(); ++i) {
    const double mn = params.row_min[i];
    const double range = params.row_max[i] - mn;
    for (Index k = 0; k < set.cols(); ++k) {
      const double v = set.data()(i, k);
      if (range == 0.0) {
        out(i, k) = direction == Direction::forward ? mid : mn;
      } else if (direction == Direction::forward) {
        out(i, k) = lo + (v - mn) / range * width;
      } else {
        out(i, k) = mn + (v - lo) / width * range;
      }
    }
  }
  return SnapshotSet(std::move(out), set.times(), set.fields(), set.mesh_id());
}

nlohmann::json to_json(const ScalingParams& p) {
  nlohmann::json j;
  j["target"] = {p.target.lo, p.target.hi};
  j["granularity"] = p.granularity == Granularity::per_row ? "per-row" : "per-field";
  j["fields"] = nlohmann::json::array();
  for (const auto& f : p.layout)
    j["fields"].push_back({{"name", f.name}, {"offset", f.offset}, {"length", f.length}});
  j["row_min"] = std::vector<double>(p.row_min.data(), p.row_min.data() + p.row_min.size());
  j["row_max"] = std::vector<double>(p.row_max.data(), p.row_max.data() + p.row_max.size());
  j["degenerate_rows"] = p.degenerate_rows;
  return j;
}

ScalingParams scaling_from_json(const nlohmann::json& j) {
  try {
    ScalingParams p;
    p.target = {j.at("target").at(0).get<double>(), j.at("target").at(1).get<double>()};
    p.granularity = j.at("granularity") == "per-row" ? Granularity::per_row : Granularity::per_field;
    for (const auto& f : j.at("fields"))
      p.layout.push_back({f.at("name"), f.at("offset"), f.at("length")});
    const auto mn = j.at("row_min").get<std::vector<double>>();
    const auto mx = j.at("row_max").get<std::vector<double>>();
    require(mn.size() == mx.size(), ErrorCode::corrupt_header, "scaling: row range size mismatch");
    p.row_min = Eigen::Map<const Vector>(mn.data(), static_cast<Index>(mn.size()));
    p.row_max = Eigen::Map<const Vector>(mx.data(), static_cast<Index>(mx.size()));
    p.degenerate_rows = j.at("degenerate_rows").get<std::vector<Index>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("scaling: ") + e.what());
  }
}

}  // namespace nirom
