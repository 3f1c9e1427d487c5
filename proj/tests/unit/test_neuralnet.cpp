#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "nirom/error.hpp"
#include "nirom/neuralnet.hpp"

using namespace nirom;
using testing::Gen;
using testing::TempDir;

namespace {

double act(Activation a, double x) {
  switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return x > 0 ? x : 0;
    case Activation::elu: return x > 0 ? x : std::exp(x) - 1;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1 / (1 + std::exp(-x));
  }
  return 0;
}

double loss_of(MLPNet net, const Matrix& x, const Matrix& y, Mode mode) {
  return mse(net.forward(x, mode), y);
}

// Max relative error of analytic parameter and input gradients against
// central differences.
double fd_error(MLPNet& net, const Matrix& x, const Matrix& y, Mode mode) {
  ForwardCache cache;
  Matrix out = net.forward(x, mode, &cache);
  Gradients g = net.backward(cache, mse_gradient(out, y));
  const double eps = 1e-5;
  double worst = 0;
  const Vector p0 = net.parameters();
  for (Index i = 0; i < p0.size(); ++i) {
    MLPNet plus = net, minus = net;
    Vector p = p0;
    p[i] += eps;
    plus.set_parameters(p);
    p[i] -= 2 * eps;
    minus.set_parameters(p);
    const double fd = (loss_of(plus, x, y, mode) - loss_of(minus, x, y, mode)) / (2 * eps);
    if (std::abs(g.params[i]) > 1e-8 || std::abs(fd) > 1e-8)
      worst = std::max(worst, std::abs(fd - g.params[i]) / std::max(std::abs(fd), std::abs(g.params[i])));
  }
  for (Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    const double fd = (loss_of(net, xp, y, mode) - loss_of(net, xm, y, mode)) / (2 * eps);
    const double an = g.input.data()[i];
    if (std::abs(an) > 1e-8 || std::abs(fd) > 1e-8)
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
  }
  return worst;
}

}  // namespace

TEST_CASE("identity linear layer") {
  MLPNet net({{3, 3, Activation::linear}}, 1);
  net.weight(0) = Matrix::Identity(3, 3);
  net.bias(0).setZero();
  net.touch();
  Gen g(1);
  Matrix x = g.matrix(3, 5);
  CHECK(net.infer(x) == x);
}

TEST_CASE("tanh of zero") {
  MLPNet net({{1, 1, Activation::tanh}}, 1);
  net.weight(0)(0, 0) = 1;
  net.bias(0)(0) = 0;
  net.touch();
  CHECK(net.infer(Matrix::Zero(1, 1))(0, 0) == 0.0);
}

TEST_CASE("forward matches a hand-rolled evaluation") {
  Gen g(2);
  for (auto a : {Activation::relu, Activation::elu, Activation::tanh, Activation::sigmoid}) {
    MLPNet net({{4, 6, a}, {6, 2, Activation::linear}}, 7);
    Matrix x = g.matrix(4, 9);
    Matrix h = net.weight(0) * x;
    h.colwise() += Vector(net.bias(0));
    for (Index i = 0; i < h.size(); ++i) h.data()[i] = act(a, h.data()[i]);
    Matrix out = net.weight(1) * h;
    out.colwise() += Vector(net.bias(1));
    CHECK((net.infer(x) - out).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("single linear neuron gradient by hand") {
  MLPNet net({{2, 1, Activation::linear}}, 3);
  net.weight(0) << 0.5, -1.0;
  net.bias(0) << 0.25;
  net.touch();
  Matrix x(2, 1);
  x << 2, 3;
  Matrix y(1, 1);
  y << 1;
  ForwardCache cache;
  Matrix out = net.forward(x, Mode::infer, &cache);
  auto g = net.backward(cache, mse_gradient(out, y));
  const double r = 0.5 * 2 - 3 + 0.25 - 1;  // Wx + b - y
  CHECK(g.params[0] == doctest::Approx(2 * r * 2));
  CHECK(g.params[1] == doctest::Approx(2 * r * 3));
  CHECK(g.params[2] == doctest::Approx(2 * r));
}

TEST_CASE("zero output gradient gives zero parameter gradient") {
  Gen g(4);
  MLPNet net({{3, 5, Activation::tanh}, {5, 2, Activation::linear}}, 9);
  ForwardCache cache;
  net.forward(g.matrix(3, 4), Mode::infer, &cache);
  auto grad = net.backward(cache, Matrix::Zero(2, 4));
  CHECK(grad.params.norm() == 0.0);
}

TEST_CASE("finite-difference agreement for every activation and batchnorm") {
  Gen g(5);
  for (auto a : {Activation::linear, Activation::relu, Activation::elu, Activation::tanh, Activation::sigmoid}) {
    for (bool bn : {false, true}) {
      CAPTURE(activation_name(a));
      CAPTURE(bn);
      MLPNet net({{3, 5, a, bn}, {5, 4, a, bn}, {4, 2, Activation::linear}}, 11);
      Matrix x = g.matrix(3, 7);
      Matrix y = g.matrix(2, 7);
      const Mode mode = bn ? Mode::train : Mode::infer;
      CHECK(fd_error(net, x, y, mode) < 1e-5);
    }
  }
  MLPNet nobias({{3, 4, Activation::elu, false, false}, {4, 3, Activation::sigmoid, false, false}}, 12);
  CHECK(nobias.parameter_count() == 12 + 12);
  CHECK(fd_error(nobias, g.matrix(3, 5), g.matrix(3, 5), Mode::infer) < 1e-5);
}

TEST_CASE("batchnorm train mode normalizes and updates running stats") {
  Gen g(6);
  MLPNet net({{2, 3, Activation::linear, true}}, 13);
  Matrix x = g.matrix(2, 50, -3, 5);
  Matrix out = net.forward(x, Mode::train);
  // gamma = 1, beta = 0 at init
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(out.row(i).mean()) < 1e-12);
  CHECK((net.running_mean(0).array() != 0.0).any());
  const Vector before = net.running_mean(0);
  net.infer(x);
  CHECK(net.running_mean(0) == before);
}

TEST_CASE("same seed gives identical initialization; glorot bounds") {
  MLPNet a({{10, 20, Activation::tanh}}, 42), b({{10, 20, Activation::tanh}}, 42), c({{10, 20, Activation::tanh}}, 43);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
  const double limit = std::sqrt(6.0 / 30.0);
  CHECK(a.weight(0).cwiseAbs().maxCoeff() <= limit);
  CHECK(Vector(a.bias(0)).norm() == 0.0);
}

TEST_CASE("adam first step by hand") {
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  Optimizer opt(cfg, 2);
  Vector p(2), g(2);
  p << 1, 1;
  g << 0.5, -2;
  opt.step(p, g, 0);
  // bias-corrected m/sqrt(v) = sign(g) on the first step
  CHECK(p[0] == doctest::Approx(1 - 0.1 * 0.5 / (0.5 + 1e-7)));
  CHECK(p[1] == doctest::Approx(1 + 0.1 * 2 / (2 + 1e-7)));
}

TEST_CASE("rmsprop with momentum, two steps by hand") {
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::rmsprop;
  cfg.lr = 0.01;
  Optimizer opt(cfg, 1);
  Vector p = Vector::Constant(1, 2.0), g = Vector::Constant(1, 3.0);
  opt.step(p, g, 0);
  double v = 0.1 * 9, u = 0.01 * 3 / std::sqrt(v + 1e-7), w = 2 - u;
  CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
  opt.step(p, g, 1);
  v = 0.9 * v + 0.1 * 9;
  u = 0.9 * u + 0.01 * 3 / std::sqrt(v + 1e-7);
  CHECK(p[0] == doctest::Approx(w - u).epsilon(1e-14));
}

TEST_CASE("schedules") {
  OptimizerConfig stair;
  stair.schedule = Schedule::staircase(5000, 0.5);
  Optimizer s(stair, 1);
  CHECK(s.learning_rate(0) == 1e-3);
  CHECK(s.learning_rate(4999) == 1e-3);
  CHECK(s.learning_rate(10000) == doctest::Approx(2.5e-4));

  OptimizerConfig plat;
  plat.schedule = Schedule::plateau(200, 0.5);
  Optimizer improving(plat, 1);
  for (int e = 0; e < 1000; ++e) improving.report_loss(1.0 - 1e-3 * e);
  CHECK(improving.learning_rate(1000) == 1e-3);

  Optimizer flat(plat, 1);
  flat.report_loss(1.0);
  for (int e = 1; e <= 600; ++e) {
    flat.report_loss(1.0);
    if (e == 199) CHECK(flat.learning_rate(e) == 1e-3);
    if (e == 200) CHECK(flat.learning_rate(e) == 5e-4);
  }
  CHECK(flat.learning_rate(600) == doctest::Approx(1.25e-4));
}

TEST_CASE("one small step descends a quadratic") {
  Gen g(8);
  MLPNet net({{3, 2, Activation::linear}}, 5);
  Matrix x = g.matrix(3, 10), y = g.matrix(2, 10);
  for (auto alg : {Algorithm::adam, Algorithm::rmsprop}) {
    MLPNet n = net;
    OptimizerConfig cfg;
    cfg.algorithm = alg;
    cfg.lr = 1e-6;
    Optimizer opt(cfg, n.parameter_count());
    ForwardCache cache;
    Matrix out = n.forward(x, Mode::infer, &cache);
    const double before = mse(out, y);
    opt.step(n, n.backward(cache, mse_gradient(out, y)).params, 0);
    CHECK(mse(n.infer(x), y) < before);
  }
}

TEST_CASE("optimizer rejects non-finite gradients and bad configs") {
  Optimizer opt(OptimizerConfig{}, 1);
  Vector p = Vector::Zero(1), g = Vector::Constant(1, std::nan(""));
  CHECK_THROWS_AS(opt.step(p, g, 0), Error);
  OptimizerConfig bad;
  bad.lr = -1;
  CHECK_THROWS_AS(validate(bad), Error);
  bad.lr = 1e-3;
  bad.schedule = Schedule::plateau(10, 1.5);
  CHECK_THROWS_AS(validate(bad), Error);
  auto j = to_json(OptimizerConfig{Algorithm::rmsprop, 1e-3, 0.9, 0.999, 0.9, 1e-7, Schedule::staircase(5000, 0.5)});
  auto back = optimizer_from_json(j);
  CHECK(back.algorithm == Algorithm::rmsprop);
  CHECK(back.schedule.kind == Schedule::Kind::staircase);
}

TEST_CASE("checkpoint round trip is exact") {
  TempDir dir;
  Gen g(9);
  MLPNet a({{4, 6, Activation::elu, true}, {6, 2, Activation::sigmoid}}, 3);
  a.forward(g.matrix(4, 8), Mode::train);
  MLPNet b({{2, 3, Activation::tanh, false, false}}, 4);
  save_checkpoint(dir / "c.ckpt", {&a, &b}, {{"kind", "test"}});
  auto ck = load_checkpoint(dir / "c.ckpt");
  REQUIRE(ck.nets.size() == 2);
  CHECK(ck.meta["kind"] == "test");
  CHECK(ck.nets[0].parameters() == a.parameters());
  CHECK(ck.nets[0].state_vector() == a.state_vector());
  CHECK(ck.nets[1].parameters() == b.parameters());
  Matrix x = g.matrix(4, 3);
  CHECK(ck.nets[0].infer(x) == a.infer(x));

  std::string bytes = testing::slurp(dir / "c.ckpt");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
}

TEST_CASE("history csv and mse") {
  CHECK(history_csv({{0, 0.5, 1e-3}}) == "epoch,loss,lr\n0,0.5,0.001\n");
  Matrix a(2, 2), b = Matrix::Zero(2, 2);
  a << 1, -1, 2, 0;
  CHECK(mse(a, b) == 1.5);
  CHECK(mse(b, a) == mse(a, b));
}
