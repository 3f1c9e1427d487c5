#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "nirom/error.hpp"
#include "nirom/snapstore.hpp"

using namespace nirom;
using testing::Gen;
using testing::TempDir;

namespace {

// Raw container writer, independent of the library's encoder.
struct RawWriter {
  std::string bytes;
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes += s;
  }
  void write(const std::filesystem::path& p) const {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
};

RawWriter raw_set(std::uint64_t n, const std::vector<double>& times, const std::vector<double>& data) {
  RawWriter w;
  w.bytes = "NSNP";
  w.put<std::uint32_t>(1);
  w.put<std::uint64_t>(n);
  w.put<std::uint64_t>(times.size());
  w.put<std::uint64_t>(1);
  w.str("u");
  w.put<std::uint64_t>(0);
  w.put<std::uint64_t>(n);
  for (double t : times) w.put(t);
  for (double v : data) w.put(v);
  return w;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ok;
}

SnapshotSet random_set(Gen& g, Index n, Index m) {
  Vector t(m);
  double acc = g.uniform(-5, 5);
  for (Index k = 0; k < m; ++k) {
    acc += g.uniform(1e-3, 1.0);
    t[k] = acc;
  }
  return SnapshotSet(g.matrix(n, m, -1e3, 1e3), t);
}

}  // namespace

TEST_CASE("save then load is bit identical") {
  TempDir dir;
  Gen g(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.range(1, 40), m = g.range(1, 30);
    auto set = random_set(g, n, m);
    std::vector<FieldSegment> fields;
    if (n >= 3) {
      fields = split_fields({"p", "vx", "vy"}, n);
      set = SnapshotSet(set.data(), set.times(), fields, "mesh-" + std::to_string(trial));
    }
    const auto path = dir / "s.nsnp";
    save(set, path);
    const auto back = load(path);
    CHECK(back == set);
    CHECK(std::memcmp(back.data().data(), set.data().data(), sizeof(double) * n * m) == 0);
    CHECK(back.mesh_id() == set.mesh_id());
    CHECK(std::filesystem::file_size(path) == container_size(n, m, back.fields()));
    CHECK(std::filesystem::exists(manifest_path(path)));
  }
}

TEST_CASE("byte layout matches an independently written container") {
  TempDir dir;
  Matrix d(2, 2);
  d << 1, 2, 3, 4;
  Vector t(2);
  t << 0.5, 1.5;
  save(SnapshotSet(d, t), dir / "a.nsnp");
  const auto expected = raw_set(2, {0.5, 1.5}, {1, 3, 2, 4});
  CHECK(testing::slurp(dir / "a.nsnp") == expected.bytes);
}

TEST_CASE("single column size arithmetic") {
  TempDir dir;
  const Index n = 6311;
  SnapshotSet set(Matrix::Constant(n, 1, 2.0), Vector::Constant(1, 0.0));
  save(set, dir / "one.nsnp");
  // magic + version + N + M + F + record("u") + time + payload
  const std::uint64_t header = 4 + 4 + 8 + 8 + 8 + (4 + 1 + 8 + 8);
  CHECK(std::filesystem::file_size(dir / "one.nsnp") == header + 8 + n * 8);
  CHECK(container_size(n, 3, {{"u", 0, 6311}}) == header + 3 * 8 + n * 3 * 8);
}

TEST_CASE("load errors carry distinct codes") {
  TempDir dir;
  const auto p = dir / "bad.nsnp";

  auto good = raw_set(2, {0.0, 1.0}, {1, 2, 3, 4});
  good.write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::ok);

  auto magic = good;
  magic.bytes[0] = 'X';
  magic.write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::corrupt_header);

  auto version = good;
  version.bytes[4] = 9;
  version.write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::corrupt_header);

  auto truncated = good;
  truncated.bytes.resize(truncated.bytes.size() - 8);
  truncated.write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::dimension_mismatch);

  auto extra = good;
  extra.put(1.0);
  extra.write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::dimension_mismatch);

  raw_set(2, {1.0, 1.0}, {1, 2, 3, 4}).write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::non_monotone_times);

  raw_set(2, {0.0, 1.0}, {1, std::numeric_limits<double>::quiet_NaN(), 3, 4}).write(p);
  CHECK(code_of([&] { load(p); }) == ErrorCode::non_finite);

  raw_set(2, {}, {}).write(p);
  try {
    load(p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_set);
    CHECK(std::string(e.what()).find("empty snapshot set") != std::string::npos);
  }

  CHECK(code_of([&] { load(dir / "missing.nsnp"); }) == ErrorCode::io);
}

TEST_CASE("constructor enforces invariants") {
  Vector t(3);
  t << 0, 1, 1;
  CHECK(code_of([&] { SnapshotSet(Matrix::Zero(2, 3), t); }) == ErrorCode::non_monotone_times);
  t << 0, 1, 2;
  CHECK(code_of([&] { SnapshotSet(Matrix::Zero(2, 2), t); }) == ErrorCode::dimension_mismatch);
  CHECK(code_of([&] { SnapshotSet(Matrix::Zero(4, 3), t, {{"a", 0, 2}, {"b", 1, 3}}); }) != ErrorCode::ok);
  CHECK(code_of([&] { SnapshotSet(Matrix::Zero(4, 3), t, {{"a", 0, 2}}); }) != ErrorCode::ok);
}

TEST_CASE("per-row scaling, hand cases") {
  Matrix d(3, 4);
  d << 2, 3, 4, 2.5,   // [2,4]
      -3, 1, 0, -1,     // [-3,1]
      7, 7, 7, 7;       // constant
  SnapshotSet set(d, testing::uniform_times(4));

  auto unit = fit_scaling(set, kUnitInterval, Granularity::per_row);
  auto fwd = apply_scaling(set, unit, Direction::forward);
  CHECK(fwd.data()(0, 1) == doctest::Approx((3.0 - 2.0) / 2.0));
  CHECK(fwd.data()(0, 3) == doctest::Approx(0.25));
  CHECK(fwd.data()(2, 0) == 0.5);
  REQUIRE(unit.degenerate_rows.size() == 1);
  CHECK(unit.degenerate_rows[0] == 2);

  auto sym = fit_scaling(set, kSymmetricInterval, Granularity::per_row);
  auto s = apply_scaling(set, sym, Direction::forward);
  // brute-force oracle: two-pass min/max, then affine evaluation
  for (Index i = 0; i < 2; ++i) {
    double lo = d(i, 0), hi = d(i, 0);
    for (Index k = 1; k < 4; ++k) lo = std::min(lo, d(i, k));
    for (Index k = 1; k < 4; ++k) hi = std::max(hi, d(i, k));
    for (Index k = 0; k < 4; ++k) CHECK(s.data()(i, k) == doctest::Approx(-1.0 + 2.0 * (d(i, k) - lo) / (hi - lo)));
  }
  CHECK(s.data()(1, 2) == doctest::Approx((0.0 + 1.0) / 2.0));
  CHECK(s.data()(2, 3) == 0.0);

  auto back = apply_scaling(fwd, unit, Direction::inverse);
  CHECK(back.data()(2, 1) == 7.0);
}

TEST_CASE("per-field scaling shares one map per field") {
  Matrix d(4, 2);
  d << 0, 1, 2, 3, 10, 20, 30, 40;
  SnapshotSet set(d, testing::uniform_times(2), {{"a", 0, 2}, {"b", 2, 2}});
  auto params = fit_scaling(set, kUnitInterval);
  auto f = apply_scaling(set, params, Direction::forward);
  CHECK(f.data()(0, 0) == 0.0);
  CHECK(f.data()(1, 1) == 1.0);
  CHECK(f.data()(2, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(f.data()(3, 1) == 1.0);
}

TEST_CASE("scaling properties on random sets") {
  Gen g(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.range(1, 12), m = g.range(2, 25);
    auto set = random_set(g, n, m);
    const Interval target = trial % 2 ? kUnitInterval : kSymmetricInterval;
    auto params = fit_scaling(set, target, Granularity::per_row);
    auto f = apply_scaling(set, params, Direction::forward);
    auto b = apply_scaling(f, params, Direction::inverse);
    for (Index i = 0; i < n; ++i) {
      CHECK(f.data().row(i).minCoeff() == target.lo);
      CHECK(f.data().row(i).maxCoeff() == target.hi);
      for (Index k = 0; k < m; ++k) {
        const double rel = std::abs(b.data()(i, k) - set.data()(i, k)) / std::max(1.0, set.data().row(i).cwiseAbs().maxCoeff());
        CHECK(rel < 1e-12);
        for (Index l = 0; l < m; ++l)
          if (set.data()(i, k) < set.data()(i, l)) CHECK(f.data()(i, k) < f.data()(i, l));
      }
    }
  }
}

TEST_CASE("scaling params round-trip through json and reject other layouts") {
  Gen g(3);
  auto set = random_set(g, 6, 5);
  set = SnapshotSet(set.data(), set.times(), split_fields({"p", "q"}, 6));
  auto params = fit_scaling(set, kSymmetricInterval);
  auto again = scaling_from_json(to_json(params));
  CHECK(apply_scaling(set, again, Direction::forward) == apply_scaling(set, params, Direction::forward));

  SnapshotSet other(Matrix::Zero(5, 2), testing::uniform_times(2));
  CHECK(code_of([&] { apply_scaling(other, params, Direction::forward); }) == ErrorCode::dimension_mismatch);
  CHECK(parse_interval("[-1,1]") == kSymmetricInterval);
  CHECK(parse_interval("[0, 1]") == kUnitInterval);
}

TEST_CASE("slicing") {
  Gen g(5);
  auto set = random_set(g, 6, 8);
  set = SnapshotSet(set.data(), set.times(), split_fields({"p", "vx", "vy"}, 6));
  auto vx = set.field_block(set.field("vx"));
  CHECK(vx.rows() == 2);
  CHECK(vx.data() == set.data().middleRows(2, 2));
  auto window = set.column_range(2, 3);
  CHECK(window.times()[0] == set.times()[2]);
  CHECK(window.cols() == 3);
  CHECK(code_of([&] { set.field("w"); }) != ErrorCode::ok);
}
