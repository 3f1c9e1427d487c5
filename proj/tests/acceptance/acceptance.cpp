// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   acceptance [--configs DIR] [--out DIR] [criterion...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nirom/autoencoder.hpp"
#include "nirom/dmd.hpp"
#include "nirom/node.hpp"
#include "nirom/pipeline.hpp"
#include "nirom/pod.hpp"
#include "nirom/rbf.hpp"
#include "nirom/synthgen.hpp"

namespace fs = std::filesystem;
using namespace nirom;
using nlohmann::json;

namespace {

// xorshift64* stream for case generation, independent of the library RNG.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed * 0x9E3779B97F4A7C15ull + 1) {}
  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1Dull;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53; }
  Index range(Index lo, Index hi) { return lo + static_cast<Index>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  Matrix matrix(Index r, Index c, double lo = -1, double hi = 1) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }

 private:
  std::uint64_t s_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Vector grid(Index m, double t0, double dt) {
  Vector t(m);
  for (Index k = 0; k < m; ++k) t[k] = t0 + static_cast<double>(k) * dt;
  return t;
}

// ---------------------------------------------------------------------------

Outcome pod_energy() {
  Gen g(101);
  double worst_energy = 0, worst_trunc = 0, worst_sigma = 0;
  for (int c = 0; c < 50; ++c) {
    const Index n = g.range(2, 200), m = g.range(2, 50);
    const Matrix s = g.matrix(n, m);
    const SnapshotSet set(s, grid(m, 0, 1));
    const Index full = std::min(n, m);
    const auto basis = compute_basis(set, Truncation::fixed(full));
    Eigen::JacobiSVD<Matrix> svd(s);
    const Vector& sv = svd.singularValues();
    worst_sigma = std::max(worst_sigma, (basis.sigma() - sv).cwiseAbs().maxCoeff() / sv[0]);
    worst_energy = std::max(worst_energy, std::abs(s.squaredNorm() - basis.sigma().squaredNorm()) / s.squaredNorm());
    const Index keep = g.range(1, full - 1 > 0 ? full - 1 : 1);
    const auto trunc = compute_basis(set, Truncation::fixed(keep));
    const double err2 = (reconstruct(trunc, project(trunc, set)).data() - s).squaredNorm();
    const double oracle = sv.tail(full - keep).squaredNorm();
    worst_trunc = std::max(worst_trunc, oracle > 0 ? std::abs(err2 - oracle) / oracle : err2);
  }
  return {worst_energy <= 1e-10 && worst_trunc <= 1e-8 && worst_sigma <= 1e-8,
          "50 cases, energy rel " + fmt("%.1e", worst_energy) + ", truncation rel " + fmt("%.1e", worst_trunc) +
              ", sigma vs SVD " + fmt("%.1e", worst_sigma)};
}

// Eigenvalues with moduli and angles kept apart so the spectrum is well conditioned.
std::vector<Complex> spectrum(Gen& g, Index dim) {
  std::vector<Complex> out;
  std::vector<Complex> all;
  auto separated = [&](Complex z) {
    for (const auto& e : all)
      if (std::abs(e - z) < 0.08) return false;
    return true;
  };
  Index used = 0;
  while (used < dim) {
    const bool pair = dim - used >= 2 && g.uniform(0, 1) < 0.6;
    const Complex z = pair ? std::polar(g.uniform(0.9, 1.0), g.uniform(0.15, 1.2)) : Complex(g.uniform(0.6, 0.99), 0);
    if (!separated(z) || (pair && !separated(std::conj(z)))) continue;
    out.push_back(z);
    all.push_back(z);
    if (pair) all.push_back(std::conj(z));
    used += pair ? 2 : 1;
  }
  return out;
}

Outcome dmd_exactness() {
  Gen g(202);
  double worst_eig = 0, worst_pred = 0;
  int cases = 0;
  for (Index dim = 1; dim <= 6; ++dim) {
    for (int rep = 0; rep < 3; ++rep) {
      GeneratorSpec spec;
      spec.kind = GeneratorKind::linear_system;
      spec.eigenvalues = spectrum(g, dim);
      spec.n = g.range(50, 200);
      spec.m = 60;
      spec.dt = 0.1;
      spec.seed = static_cast<std::uint64_t>(dim * 10 + rep);
      const auto data = generate(spec);
      const auto model = fit_dmd(data.set, dim);
      for (const auto& l : data.truth.eigenvalues) {
        double best = 1e300;
        for (Index i = 0; i < model.rank; ++i) best = std::min(best, std::abs(model.eigenvalues[i] - l));
        worst_eig = std::max(worst_eig, best);
      }
      const Matrix p = predict(model, data.set.times()).data();
      worst_pred = std::max(worst_pred, (p - data.set.data()).norm() / data.set.data().norm());
      ++cases;
    }
  }
  return {worst_eig <= 1e-8 && worst_pred < 1e-6, std::to_string(cases) + " systems (dims 1-6), eigenvalue error " +
                                                      fmt("%.1e", worst_eig) + ", prediction rel " +
                                                      fmt("%.1e", worst_pred)};
}

Outcome rbf_exactness() {
  Gen g(303);
  double worst = 0;
  for (int c = 0; c < 20; ++c) {
    const Index m = g.range(1, 5), samples = g.range(4, 25);
    LatentTrajectory l;
    l.z = g.matrix(m, samples);
    l.times = grid(samples, 0, 0.5);
    RBFConfig cfg;
    cfg.kernel = Kernel::gaussian;
    cfg.shape = 2.0;
    cfg.lambda = 0.0;
    const auto model = fit_rbf(l, cfg);
    for (Index k = 0; k + 1 < samples; ++k) {
      const Vector inc = l.z.col(k + 1) - l.z.col(k);
      worst = std::max(worst, (evaluate(model, l.z.col(k)) - inc).norm() / inc.norm());
    }
  }
  return {worst <= 1e-8, "20 cases, worst relative increment error " + fmt("%.1e", worst)};
}

double mlp_fd(MLPNet& net, const Matrix& x, const Matrix& y, Mode mode) {
  ForwardCache cache;
  const Matrix out = net.forward(x, mode, &cache);
  const Gradients g = net.backward(cache, mse_gradient(out, y));
  auto loss = [&](MLPNet n, const Matrix& in) { return mse(n.forward(in, mode), y); };
  const double eps = 1e-5;
  double worst = 0;
  auto track = [&](double fd, double an) {
    if (std::abs(fd) > 1e-8 || std::abs(an) > 1e-8)
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
  };
  const Vector p0 = net.parameters();
  for (Index i = 0; i < p0.size(); ++i) {
    MLPNet a = net, b = net;
    Vector p = p0;
    p[i] += eps;
    a.set_parameters(p);
    p[i] -= 2 * eps;
    b.set_parameters(p);
    track((loss(a, x) - loss(b, x)) / (2 * eps), g.params[i]);
  }
  for (Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    track((loss(net, xp) - loss(net, xm)) / (2 * eps), g.input.data()[i]);
  }
  return worst;
}

Outcome gradients() {
  Gen g(404);
  double mlp = 0;
  for (auto a : {Activation::linear, Activation::relu, Activation::elu, Activation::tanh, Activation::sigmoid})
    for (bool bn : {false, true}) {
      MLPNet net({{3, 5, a, bn}, {5, 4, a, bn}, {4, 2, Activation::linear}}, 17);
      mlp = std::max(mlp, mlp_fd(net, g.matrix(3, 7), g.matrix(2, 7), bn ? Mode::train : Mode::infer));
    }

  NodeArchitecture tiny;
  tiny.hidden = {1};
  tiny.activation = Activation::tanh;
  auto model = build_node(tiny, 1, SolverSpec::rk4(), 5);
  LatentTrajectory data;
  data.z = g.matrix(1, 8);
  data.times = grid(8, 0, 1.0 / 7);
  const auto disc = gradient(model, data, GradientMode::discrete);
  double node_fd = 0;
  const double eps = 1e-6;
  for (Index i = 0; i < disc.params.size(); ++i) {
    NODEModel a = model, b = model;
    Vector p = model.net.parameters();
    p[i] += eps;
    a.net.set_parameters(p);
    p[i] -= 2 * eps;
    b.net.set_parameters(p);
    const double fd = (trajectory_loss(a, data) - trajectory_loss(b, data)) / (2 * eps);
    node_fd = std::max(node_fd, std::abs(fd - disc.params[i]) / std::max(std::abs(fd), std::abs(disc.params[i])));
  }

  NODEModel fine = model;
  fine.solver = SolverSpec::rk4(1.0 / 7000);
  const auto reference = gradient(fine, data, GradientMode::discrete);
  NODEModel adj = model;
  adj.solver = SolverSpec::dopri5(1e-8, 1e-8);
  const auto adjoint = gradient(adj, data, GradientMode::adjoint);
  const double cross = (adjoint.params - reference.params).norm() / reference.params.norm();

  return {mlp < 1e-5 && node_fd < 1e-6 && cross < 1e-4,
          "MLP fd " + fmt("%.1e", mlp) + " (5 activations, with and without batchnorm), NODE fd " +
              fmt("%.1e", node_fd) + ", adjoint vs discrete " + fmt("%.1e", cross)};
}

Outcome solver_orders() {
  const OdeRhs decay = [](double, const Vector& y, Vector& dy) { dy = -y; };
  Vector t(2);
  t << 0, 1;
  auto error = [&](const SolverSpec& s) {
    return std::abs(solve_ode(decay, Vector::Ones(1), t, s)(0, 1) - std::exp(-1.0));
  };
  double h = 0.1, min_order = 1e9;
  double prev = error(SolverSpec::rk4(h));
  for (int i = 0; i < 4; ++i) {
    h /= 2;
    const double e = error(SolverSpec::rk4(h));
    min_order = std::min(min_order, std::log2(prev / e));
    prev = e;
  }
  SolveStats stats;
  const double rel = std::abs(solve_ode(decay, Vector::Ones(1), t, SolverSpec::dopri5(1e-6, 1e-8), &stats)(0, 1) -
                              std::exp(-1.0)) /
                     std::exp(-1.0);
  return {min_order >= 3.9 && rel <= 1e-6 && stats.max_accepted_error <= 1.0,
          "rk4 min observed order " + fmt("%.3f", min_order) + ", dopri5 rel error " + fmt("%.1e", rel) + " in " +
              std::to_string(stats.accepted) + " steps"};
}

Outcome linear_ae() {
  Gen g(606);
  const Index n = 10, m = 20;
  Matrix u = g.matrix(n, n), v = g.matrix(m, n);
  orthonormalize_columns(u);
  orthonormalize_columns(v);
  Vector s(n);
  for (Index i = 0; i < n; ++i) s[i] = i < 2 ? 3.0 - 0.5 * static_cast<double>(i) : 0.05 / static_cast<double>(i);
  const SnapshotSet data(u * s.asDiagonal() * v.transpose(), grid(m, 0, 1));

  const auto basis = compute_basis(data, Truncation::fixed(2));
  const double pod = mse(reconstruct(basis, project(basis, data)).data(), data.data());

  AESpec spec;
  spec.input_dim = n;
  spec.latent_dim = 2;
  spec.encoder_hidden = std::vector<Index>{};
  spec.decoder_hidden = std::vector<Index>{};
  spec.decoder_output = Activation::linear;
  spec.bias = false;
  auto model = build(spec, 8);
  AETrainConfig cfg;
  cfg.epochs = 10000;
  cfg.optimizer.lr = 1e-2;
  const auto r = train(model, data, cfg);
  const double ratio = r.final_loss / pod;
  return {!r.diverged && ratio <= 1.05, "AE mse " + fmt("%.4e", r.final_loss) + ", POD mse " + fmt("%.4e", pod) +
                                             ", ratio " + fmt("%.4f", ratio)};
}

// Criterion 7 and 9 share the pipeline runs.
struct ProtocolRun {
  std::vector<RunReport> reports;
  std::string error;
};

const char* kProtocolConfigs[] = {"wake_pod_node.json", "wake_ae_node.json", "wake_dmd3.json", "wake_dmd7.json"};

ProtocolRun run_protocol(const fs::path& configs, const fs::path& out) {
  ProtocolRun run;
  try {
    for (const char* name : kProtocolConfigs) {
      PipelineConfig cfg = load_pipeline_config(configs / name);
      cfg.output = out / cfg.name;
      run.reports.push_back(run_pipeline(cfg));
    }
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome protocol(const ProtocolRun& run, double seconds) {
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  bool ok = seconds < 1800;
  std::ostringstream d;
  for (const auto& r : run.reports) {
    const json& s = r.summary;
    const json& e = s["errors"];
    const json& p = s["prediction"];
    const bool finite = e.value("evaluated", false) && e.value("finite", false) && r.errors && r.errors->finite();
    const bool full = p["count"] == 1499 && p["extrapolated_count"].get<int>() > 0;
    ok = ok && finite && full;
    d << s["name"].get<std::string>() << ": max rmse " << fmt("%.3g", e.value("max_rmse", NAN));
    if (s["propagator"]["type"] == "node") {
      const double reduction = s["propagator"]["loss_reduction"];
      const int epochs = s["propagator"]["epochs"];
      ok = ok && reduction >= 10.0 && epochs <= 2000;
      d << ", loss reduced " << fmt("%.0f", reduction) << "x in " << epochs << " epochs";
    }
    d << "; ";
  }
  d << "1499 prediction times incl. 250 extrapolated, " << fmt("%.0f", seconds) << " s";
  return {ok, d.str()};
}

Outcome advection() {
  GeneratorSpec spec;
  spec.kind = GeneratorKind::traveling_wave;
  spec.n = 64;
  spec.m = 64;
  spec.dt = 1.0 / 64;
  spec.width = 0.08;
  const SnapshotSet data = generate(spec).set;
  const double norm = data.data().norm();

  const auto basis = compute_basis(data, Truncation::fixed(4));
  const double pod = (reconstruct(basis, project(basis, data)).data() - data.data()).norm() / norm;
  Eigen::JacobiSVD<Matrix> svd(data.data());
  const Vector& sv = svd.singularValues();
  const double oracle = std::sqrt(sv.tail(sv.size() - 4).squaredNorm()) / norm;

  AESpec a;
  a.input_dim = 64;
  a.latent_dim = 4;
  a.encoder_hidden = std::vector<Index>{32, 16};
  a.hidden_activation = Activation::elu;
  a.decoder_output = Activation::sigmoid;
  auto model = build(a, 7);
  AETrainConfig cfg;
  cfg.epochs = 2000;
  const auto r = train(model, data, cfg);
  const double ae = (decode(model, encode(model, data)).data() - data.data()).norm() / norm;
  return {pod > 0.1 && std::abs(pod - oracle) <= 1e-8 * oracle && !r.diverged && ae <= 0.5 * pod,
          "POD(4) rel error " + fmt("%.4f", pod) + " (SVD oracle " + fmt("%.4f", oracle) + "), AE(4) rel error " +
              fmt("%.4f", ae) + ", ratio " + fmt("%.3f", ae / pod)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const ProtocolRun& first, const ProtocolRun& second) {
  if (!first.error.empty() || !second.error.empty()) return {false, "pipeline failed: " + first.error + second.error};
  int compared = 0;
  std::string mismatch;
  for (size_t i = 0; i < first.reports.size(); ++i) {
    const fs::path a = first.reports[i].output, b = second.reports[i].output;
    for (const auto& entry : fs::directory_iterator(a)) {
      const std::string name = entry.path().filename().string();
      if (name == "timings.json") continue;
      const bool checkpoint = name == "summary.json" || entry.path().extension() == ".ckpt" ||
                              entry.path().extension() == ".nsnp" || entry.path().extension() == ".csv";
      if (!checkpoint) continue;
      ++compared;
      if (!fs::exists(b / name) || slurp(a / name) != slurp(b / name)) mismatch += (a.filename() / name).string() + " ";
    }
  }
  return {mismatch.empty() && compared > 0,
          mismatch.empty() ? std::to_string(compared) + " artifacts byte-identical (summaries, checkpoints, predictions)"
                           : "differs: " + mismatch};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path configs = "configs";
  fs::path out = fs::temp_directory_path() / "nirom_acceptance";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--configs" && i + 1 < argc) {
      configs = argv[++i];
    } else if (arg == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      only.push_back(std::atoi(argv[i]));
    }
  }
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  struct Criterion {
    int id;
    const char* title;
    double budget;  // seconds
    std::function<Outcome()> run;
  };
  ProtocolRun first, second;
  double protocol_seconds = 0;
  const std::vector<Criterion> criteria = {
      {1, "POD energy identity and optimality", 10, pod_energy},
      {2, "DMD exactness on linear systems", 10, dmd_exactness},
      {3, "RBF interpolation exactness", 5, rbf_exactness},
      {4, "gradient suite", 60, gradients},
      {5, "solver orders", 5, solver_orders},
      {6, "linear autoencoder matches POD", 60, linear_ae},
      {7, "end-to-end wake protocol", 1800,
       [&] {
         const auto t0 = std::chrono::steady_clock::now();
         first = run_protocol(configs, out / "run1");
         protocol_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
         return protocol(first, protocol_seconds);
       }},
      {8, "advection stress, AE vs POD", 600, advection},
      {9, "determinism of the protocol run", 1800,
       [&] {
         if (first.reports.empty() && first.error.empty()) first = run_protocol(configs, out / "run1");
         second = run_protocol(configs, out / "run2");
         return determinism(first, second);
       }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget) {
      o.pass = false;
      o.detail += " (over the " + fmt("%.0f", c.budget) + " s budget)";
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
