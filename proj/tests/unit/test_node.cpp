#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "nirom/error.hpp"
#include "nirom/node.hpp"

using namespace nirom;
using testing::Gen;
using testing::TempDir;

namespace {

NodeArchitecture linear_arch(bool bias = false) {
  NodeArchitecture a;
  a.hidden = {};
  a.activation = Activation::linear;
  a.bias = bias;
  return a;
}

NodeArchitecture tiny_arch(Index width = 1) {
  NodeArchitecture a;
  a.hidden = {width};
  a.activation = Activation::tanh;
  return a;
}

LatentTrajectory trajectory(Matrix z, Vector t) {
  LatentTrajectory l;
  l.z = std::move(z);
  l.times = std::move(t);
  return l;
}

// Exact samples of dz/dt = A z from z0 on the grid t.
LatentTrajectory linear_data(const Matrix& a, const Vector& z0, const Vector& t) {
  Eigen::EigenSolver<Matrix> es(a);
  Matrix z(a.rows(), t.size());
  for (Index k = 0; k < t.size(); ++k) {
    CMatrix e = es.eigenvectors() * (es.eigenvalues() * t[k]).array().exp().matrix().asDiagonal() *
                es.eigenvectors().inverse();
    z.col(k) = (e * z0.cast<Complex>()).real();
  }
  return trajectory(z, t);
}

double fd_check(const NODEModel& model, const LatentTrajectory& data) {
  const auto g = gradient(model, data, GradientMode::discrete);
  const double eps = 1e-6;
  double worst = 0;
  for (Index i = 0; i < g.params.size(); ++i) {
    NODEModel plus = model, minus = model;
    Vector p = model.net.parameters();
    p[i] += eps;
    plus.net.set_parameters(p);
    p[i] -= 2 * eps;
    minus.net.set_parameters(p);
    const double fd = (trajectory_loss(plus, data) - trajectory_loss(minus, data)) / (2 * eps);
    if (std::abs(fd) > 1e-8 || std::abs(g.params[i]) > 1e-8)
      worst = std::max(worst, std::abs(fd - g.params[i]) / std::max(std::abs(fd), std::abs(g.params[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("time normalization") {
  Vector t(3);
  t << 2.5, 3.75, 5.0;
  auto [s, map] = normalize_times(t);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(s[2] == 1.0);
  CHECK(map.forward(6.0) == doctest::Approx(1.4));
  CHECK(map.inverse(0.5) == doctest::Approx(3.75));
  auto [u, id] = normalize_times(testing::uniform_times(5, 0.0, 0.25));
  CHECK(u == testing::uniform_times(5, 0.0, 0.25));
  CHECK(id.origin == 0.0);
  CHECK(id.span == 1.0);
}

TEST_CASE("zero dynamics keep the state constant") {
  auto model = build_node(tiny_arch(4), 2, SolverSpec::rk4(), 1);
  model.net.set_parameters(Vector::Zero(model.net.parameter_count()));
  Vector z0(2);
  z0 << 0.3, -0.7;
  auto traj = ode_solve(model, z0, testing::uniform_times(6, 0, 0.2));
  for (Index k = 0; k < 6; ++k) CHECK(traj.z.col(k) == z0);

  // constant data is fit exactly; hand case with a known mismatch
  Matrix z(1, 2);
  z << 1, 3;
  auto m1 = build_node(tiny_arch(), 1, SolverSpec::rk4(), 2);
  m1.net.set_parameters(Vector::Zero(m1.net.parameter_count()));
  CHECK(trajectory_loss(m1, trajectory(Matrix::Ones(1, 4), testing::uniform_times(4, 0, 0.25))) == 0.0);
  CHECK(trajectory_loss(m1, trajectory(z, testing::uniform_times(2))) == doctest::Approx(2.0));
}

TEST_CASE("linear net encoding decay and rotation") {
  auto model = build_node(linear_arch(), 1, SolverSpec::dopri5(1e-6, 1e-8), 3);
  model.net.weight(0)(0, 0) = -1.0;
  model.net.touch();
  Vector t(2);
  t << 0, 1;
  auto y = ode_solve(model, Vector::Ones(1), t);
  CHECK(std::abs(y.z(0, 1) - std::exp(-1.0)) < 1e-6);

  auto rot = build_node(linear_arch(), 2, SolverSpec::rk4(0.01), 4);
  rot.net.weight(0) << 0, -1, 1, 0;
  rot.net.touch();
  Vector z0(2);
  z0 << 1, 0;
  auto r = ode_solve(rot, z0, testing::uniform_times(11, 0, 1.0));
  for (Index k = 0; k < 11; ++k) CHECK(r.z.col(k).squaredNorm() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("self-generated data has zero loss and zero gradient") {
  auto model = build_node(tiny_arch(3), 2, SolverSpec::rk4(), 5);
  Vector z0(2);
  z0 << 0.5, -0.2;
  auto data = ode_solve(model, z0, testing::uniform_times(9, 0, 0.125));
  CHECK(trajectory_loss(model, data) < 1e-12);
  CHECK(gradient(model, data, GradientMode::discrete).params.norm() < 1e-12);
  auto adj = model;
  adj.solver = SolverSpec::dopri5(1e-8, 1e-8);
  auto exact = ode_solve(adj, z0, data.times);
  CHECK(gradient(adj, exact, GradientMode::adjoint).params.norm() < 1e-10);
}

TEST_CASE("discrete gradient matches finite differences") {
  Gen g(6);
  auto model = build_node(tiny_arch(1), 1, SolverSpec::rk4(), 7);
  auto data = trajectory(g.matrix(1, 8), testing::uniform_times(8, 0, 1.0 / 7));
  CHECK(fd_check(model, data) < 1e-6);

  NodeArchitecture wide = tiny_arch(5);
  wide.activation = Activation::elu;
  wide.augment = 2;
  auto m2 = build_node(wide, 2, SolverSpec::rk4(0.0625), 8);
  auto d2 = trajectory(g.matrix(2, 5), testing::uniform_times(5, 0, 0.25));
  CHECK(fd_check(m2, d2) < 1e-6);
}

TEST_CASE("adjoint agrees with discrete") {
  Gen g(9);
  for (Index width : {1, 4}) {
    auto fine = build_node(tiny_arch(width), 1 + width / 4, SolverSpec::rk4(0.001), 10 + width);
    const Index m = fine.latent_dim;
    auto data = trajectory(g.matrix(m, 6), testing::uniform_times(6, 0, 0.2));
    auto disc = gradient(fine, data, GradientMode::discrete);
    auto adj_model = fine;
    adj_model.solver = SolverSpec::dopri5(1e-8, 1e-8);
    auto adj = gradient(adj_model, data, GradientMode::adjoint);
    CHECK((adj.params - disc.params).norm() < 1e-4 * disc.params.norm());
    CHECK(adj.loss == doctest::Approx(disc.loss).epsilon(1e-6));
  }
}

TEST_CASE("augmented state starts at zero") {
  NodeArchitecture a = tiny_arch(4);
  a.augment = 3;
  auto model = build_node(a, 2, SolverSpec::rk4(), 12);
  CHECK(model.state_dim() == 5);
  Vector z0(2);
  z0 << 0.25, 0.75;
  Matrix y = solve_state(model, z0, testing::uniform_times(4, 0, 0.25), model.solver);
  CHECK(y.rows() == 5);
  CHECK(y(0, 0) == 0.25);
  CHECK(y(1, 0) == 0.75);
  CHECK(y.block(2, 0, 3, 1).norm() == 0.0);
  CHECK(node_architecture_from_json({{"augment", true}}).augment == 5);
}

TEST_CASE("learns a linear operator") {
  Matrix a(2, 2);
  a << -0.5, -2.0, 2.0, -0.5;
  Vector z0(2);
  z0 << 1.0, 0.0;
  auto data = linear_data(a, z0, testing::uniform_times(41, 0, 0.025));
  auto model = build_node(linear_arch(), 2, SolverSpec::rk4(), 13);
  NodeTrainConfig cfg;
  cfg.epochs = 10000;
  cfg.optimizer = OptimizerConfig{};
  cfg.optimizer.lr = 1e-2;
  auto r = train_node(model, data, cfg);
  CHECK_FALSE(r.diverged);
  CHECK((model.net.weight(0) - a).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("zero epochs and determinism") {
  Gen g(14);
  auto data = trajectory(g.matrix(2, 6), testing::uniform_times(6, 0, 0.2));
  auto model = build_node(tiny_arch(8), 2, SolverSpec::rk4(), 15);
  const Vector before = model.net.parameters();
  NodeTrainConfig cfg;
  cfg.epochs = 0;
  auto r = train_node(model, data, cfg);
  CHECK(r.history.empty());
  CHECK(model.net.parameters() == before);

  cfg.epochs = 25;
  auto m1 = build_node(tiny_arch(8), 2, SolverSpec::rk4(), 15), m2 = m1;
  auto r1 = train_node(m1, data, cfg), r2 = train_node(m2, data, cfg);
  REQUIRE(r1.history.size() == 25);
  for (size_t i = 0; i < r1.history.size(); ++i) CHECK(r1.history[i].loss == r2.history[i].loss);
  CHECK(std::memcmp(m1.net.parameters().data(), m2.net.parameters().data(),
                    sizeof(double) * m1.net.parameter_count()) == 0);
}

TEST_CASE("discrete training requires rk4") {
  Gen g(16);
  auto model = build_node(tiny_arch(), 1, SolverSpec::dopri5(), 17);
  NodeTrainConfig cfg;
  cfg.epochs = 1;
  try {
    train_node(model, trajectory(g.matrix(1, 3), testing::uniform_times(3)), cfg);
    FAIL("expected incompatible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::incompatible);
  }
}

TEST_CASE("prediction in physical coordinates") {
  Vector t = testing::uniform_times(11, 2.5, 0.25);
  Matrix z(2, 11);
  for (Index k = 0; k < 11; ++k) z.col(k) << std::sin(t[k]) * 3 + 1, std::cos(t[k]);
  auto model = build_node(tiny_arch(6), 2, SolverSpec::rk4(), 18);
  auto data = fit_normalization(model, trajectory(z, t), true);
  CHECK(data.times[10] == 1.0);
  CHECK(data.z.cwiseAbs().maxCoeff() == doctest::Approx(1.0));

  // at training times the prediction is the internal solution
  auto internal = ode_solve(model, data.z.col(0), data.times);
  auto pred = predict(model, z.col(0), 2.5, t);
  CHECK((pred.z - model.scale.inverse(internal.z)).norm() < 1e-12);
  CHECK(pred.times == t);

  // 4x finer output grid with 20% extrapolation
  Vector fine = testing::uniform_times(49, 2.5, 0.0625);
  auto p2 = predict(model, z.col(0), 2.5, fine);
  CHECK(p2.size() == 49);
  CHECK((p2.z.col(40) - pred.z.col(10)).norm() < 1e-6);

  Vector late = fine.tail(5);
  auto p3 = predict(model, z.col(0), 2.5, late);
  CHECK((p3.z.col(4) - p2.z.col(48)).norm() < 1e-12);
  CHECK_THROWS_AS(predict(model, z.col(0), 3.0, t), Error);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  Vector t = testing::uniform_times(5, 1.0, 0.5);
  Gen g(19);
  NodeArchitecture a = tiny_arch(6);
  a.augment = 2;
  auto model = build_node(a, 3, SolverSpec::rk4(0.125), 20);
  fit_normalization(model, trajectory(g.matrix(3, 5), t), true);
  save_node(model, dir / "n.ckpt");
  auto back = load_node(dir / "n.ckpt");
  CHECK(back.net.parameters() == model.net.parameters());
  CHECK(back.augment == 2);
  CHECK(back.solver.h == 0.125);
  CHECK(back.time_map.origin == 1.0);
  CHECK(back.scale.center == model.scale.center);
  Vector z0 = g.matrix(3, 1);
  CHECK(predict(back, z0, 1.0, t).z == predict(model, z0, 1.0, t).z);
}
