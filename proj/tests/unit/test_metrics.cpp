#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "nirom/error.hpp"
#include "nirom/metrics.hpp"

using namespace nirom;
using testing::Gen;

namespace {

SnapshotSet as_set(const Matrix& m, std::vector<FieldSegment> fields = {}) {
  return SnapshotSet(m, testing::uniform_times(m.cols()), std::move(fields));
}

}  // namespace

TEST_CASE("hand cases") {
  Matrix t = Matrix::Zero(3, 1), p(3, 1);
  p << 1, 2, 2;
  CHECK(spatial_rmse(t, p)[0] == doctest::Approx(std::sqrt(3.0)));
  CHECK(spatial_rmse(Matrix::Zero(4, 2), Matrix::Constant(4, 2, -0.5))[1] == 0.5);
  Gen g(1);
  Vector v = g.matrix(6, 1);
  CHECK(relative_error(v, 1.1 * v) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(relative_error(v, v) == 0.0);
  CHECK_THROWS_AS(relative_error(Vector::Zero(3), v.head(3)), Error);
  Matrix d(2, 2);
  d << 1, -1, 2, 0;
  CHECK(mse(d, Matrix::Zero(2, 2)) == 1.5);
}

TEST_CASE("series per field and aggregate") {
  Matrix truth = Matrix::Ones(4, 3), pred = Matrix::Ones(4, 3);
  pred(0, 1) = 3;  // field a, time 1
  auto s = error_series(as_set(truth, {{"a", 0, 2}, {"b", 2, 2}}), as_set(pred, {{"a", 0, 2}, {"b", 2, 2}}));
  REQUIRE(s.fields == std::vector<std::string>{"a", "b"});
  CHECK(s.field_rmse(0, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.field_rmse(1, 1) == 0.0);
  CHECK(s.rmse[1] == doctest::Approx(1.0));
  CHECK(s.rmse[0] == 0.0);
  CHECK(s.rel[1] == doctest::Approx(1.0));
  CHECK(s.finite());

  const std::string csv = error_csv(s);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,field,rmse,rel_err");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3 * 3);
  CHECK(csv.find(",all,") != std::string::npos);
}

TEST_CASE("properties on random data") {
  Gen g(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.range(2, 10), m = g.range(1, 6);
    Matrix truth = g.matrix(n, m), pred = g.matrix(n, m), a = g.matrix(n, m), b = g.matrix(n, m);
    // row permutation invariance
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    perm.setIdentity();
    for (Index i = n - 1; i > 0; --i) std::swap(perm.indices()[i], perm.indices()[g.range(0, i)]);
    CHECK((spatial_rmse(perm * truth, perm * pred) - spatial_rmse(truth, pred)).norm() < 1e-14);
    for (Index k = 0; k < m; ++k) {
      CHECK(relative_error(perm * truth.col(k), perm * pred.col(k)) ==
            doctest::Approx(relative_error(truth.col(k), pred.col(k))));
      const double ab = relative_error(truth.col(k), truth.col(k) + a.col(k) + b.col(k));
      CHECK(ab <= relative_error(truth.col(k), truth.col(k) + a.col(k)) +
                      relative_error(truth.col(k), truth.col(k) + b.col(k)) + 1e-14);
    }
    CHECK(mse(truth, pred) == mse(pred, truth));
    CHECK(error_series(as_set(truth), as_set(truth)).rmse.norm() == 0.0);
  }
}

TEST_CASE("mismatched inputs are rejected") {
  Gen g(3);
  CHECK_THROWS_AS(error_series(as_set(g.matrix(3, 2)), as_set(g.matrix(4, 2))), Error);
  SnapshotSet shifted(g.matrix(3, 2), testing::uniform_times(2, 1.0));
  CHECK_THROWS_AS(error_series(as_set(g.matrix(3, 2)), shifted), Error);
}

TEST_CASE("comparison csv is wide") {
  Gen g(4);
  Matrix t = g.matrix(3, 4);
  auto s1 = error_series(as_set(t), as_set(t));
  auto s2 = error_series(as_set(t), as_set(t + g.matrix(3, 4)));
  const std::string csv = comparison_csv({"pod", "ae"}, {s1, s2});
  CHECK(csv.rfind("time,field,pod_rmse,pod_rel_err,ae_rmse,ae_rel_err\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 2);
}
