#include "nirom/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nirom/error.hpp"

namespace nirom {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// Continuous extension: y(t + theta h) = y + h sum_j k_j (P_j1 theta + ... + P_j4 theta^4).
constexpr std::array<std::array<double, 4>, 7> kDense{{
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0},
}};

double rms_scaled(const Vector& v, const Vector& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

void check_times(const Vector& times) {
  require(times.size() >= 1, ErrorCode::invalid_argument, "ode: no query times");
  require(times.allFinite(), ErrorCode::non_finite, "ode: non-finite query time");
  if (times.size() < 2) return;
  const double dir = times[1] > times[0] ? 1.0 : -1.0;
  for (Index k = 1; k < times.size(); ++k)
    require((times[k] - times[k - 1]) * dir > 0.0, ErrorCode::non_monotone_times,
            "ode: query times must be strictly monotone");
}

Matrix solve_rk4(const OdeRhs& f, const Vector& y0, const Vector& times, double h, SolveStats& stats) {
  const Index n = y0.size();
  Matrix out(n, times.size());
  out.col(0) = y0;
  if (times.size() == 1) return out;
  if (h <= 0.0) h = min_spacing(times);
  const double t0 = times[0];
  const double dir = times[1] > t0 ? 1.0 : -1.0;
  const double hs = dir * h;

  Vector y = y0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  Index step = 0;
  for (Index q = 1; q < times.size(); ++q) {
    const Index target = whole_steps(t0, times[q], h);
    for (; step < target; ++step) {
      const double t = t0 + static_cast<double>(step) * hs;
      f(t, y, k1);
      tmp = y + 0.5 * hs * k1;
      f(t + 0.5 * hs, tmp, k2);
      tmp = y + 0.5 * hs * k2;
      f(t + 0.5 * hs, tmp, k3);
      tmp = y + hs * k3;
      f(t + hs, tmp, k4);
      y += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      stats.evaluations += 4;
      ++stats.accepted;
      require(y.allFinite(), ErrorCode::non_finite, "ode: non-finite state");
    }
    out.col(q) = y;
  }
  return out;
}

double initial_step(const OdeRhs& f, double t0, const Vector& y0, const Vector& f0, double dir,
                    const SolverSpec& spec, SolveStats& stats) {
  Vector scale = spec.atol + spec.rtol * y0.array().abs();
  const double d0 = rms_scaled(y0, scale);
  const double d1 = rms_scaled(f0, scale);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Vector y1 = y0 + dir * h0 * f0;
  Vector f1(y0.size());
  f(t0 + dir * h0, y1, f1);
  ++stats.evaluations;
  const double d2 = rms_scaled(f1 - f0, scale) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

Matrix solve_dopri5(const OdeRhs& f, const Vector& y0, const Vector& times, const SolverSpec& spec,
                    SolveStats& stats) {
  const Index n = y0.size();
  Matrix out(n, times.size());
  out.col(0) = y0;
  if (times.size() == 1) return out;
  const double t_end = times[times.size() - 1];
  const double dir = t_end > times[0] ? 1.0 : -1.0;

  constexpr double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
  constexpr double facc1 = 1.0 / 0.2, facc2 = 1.0 / 10.0;

  double t = times[0];
  Vector y = y0;
  Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n), scale(n);
  f(t, y, k1);
  ++stats.evaluations;
  double h = spec.h_init > 0.0 ? spec.h_init : initial_step(f, t, y, k1, dir, spec, stats);
  h = std::min(h, std::abs(t_end - t));
  double facold = 1e-4;
  bool last_rejected = false;
  Index next_query = 1;
  Index attempts = 0;

  while (next_query < times.size()) {
    if (++attempts > spec.max_steps) fail(ErrorCode::max_steps, "ode: maximum number of steps exceeded");
    if (h < spec.h_min) fail(ErrorCode::step_underflow, "ode: step size underflow");
    const double remaining = std::abs(t_end - t);
    bool final_step = false;
    if (h >= remaining) {
      h = remaining;
      final_step = true;
    }
    const double hs = dir * h;

    ytmp = y + hs * a21 * k1;
    f(t + c2 * hs, ytmp, k2);
    ytmp = y + hs * (a31 * k1 + a32 * k2);
    f(t + c3 * hs, ytmp, k3);
    ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * hs, ytmp, k4);
    ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * hs, ytmp, k5);
    ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = final_step ? t_end : t + hs;
    f(t_new, ytmp, k6);
    ynew = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t_new, ynew, k7);
    stats.evaluations += 6;

    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    scale = spec.atol + spec.rtol * y.array().abs().max(ynew.array().abs());
    const double err_norm = rms_scaled(err, scale);
    if (!std::isfinite(err_norm) || !ynew.allFinite()) {
      // Treat as a failed step and shrink hard.
      ++stats.rejected;
      h *= 0.1;
      last_rejected = true;
      continue;
    }

    const double fac11 = std::pow(err_norm, expo1);
    if (err_norm <= 1.0) {
      // Emit every query time inside (t, t_new].
      while (next_query < times.size() && (times[next_query] - t_new) * dir <= 0.0) {
        const double tq = times[next_query];
        if (tq == t_new) {
          out.col(next_query) = ynew;
        } else {
          const double theta = (tq - t) / hs;
          Vector acc = Vector::Zero(n);
          const std::array<const Vector*, 7> ks{&k1, &k2, &k3, &k4, &k5, &k6, &k7};
          for (size_t j = 0; j < 7; ++j) {
            const auto& p = kDense[j];
            const double w = theta * (p[0] + theta * (p[1] + theta * (p[2] + theta * p[3])));
            if (w != 0.0) acc += w * *ks[j];
          }
          out.col(next_query) = y + hs * acc;
        }
        ++next_query;
      }
      ++stats.accepted;
      stats.max_accepted_error = std::max(stats.max_accepted_error, err_norm);
      facold = std::max(err_norm, 1e-4);
      double fac = fac11 / std::pow(facold, beta);
      fac = std::max(facc2, std::min(facc1, fac / safe));
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      last_rejected = false;
      t = t_new;
      y = ynew;
      k1 = k7;
      h = h_new;
    } else {
      ++stats.rejected;
      h /= std::min(facc1, fac11 / safe);
      last_rejected = true;
    }
  }
  return out;
}

}  // namespace

void validate(const SolverSpec& spec) {
  require(spec.h >= 0.0 && std::isfinite(spec.h), ErrorCode::invalid_argument, "solver: h must be non-negative");
  if (spec.method == SolverSpec::Method::dopri5) {
    require(spec.rtol > 0.0 && spec.atol > 0.0, ErrorCode::invalid_argument, "solver: tolerances must be positive");
    require(spec.h_min > 0.0 && spec.h_init >= 0.0, ErrorCode::invalid_argument, "solver: bad step bounds");
    require(spec.max_steps > 0, ErrorCode::invalid_argument, "solver: max_steps must be positive");
  }
}

SolverSpec solver_from_json(const nlohmann::json& j) {
  try {
    SolverSpec s;
    const std::string method = j.value("method", std::string("rk4"));
    if (method == "rk4") {
      s.method = SolverSpec::Method::rk4;
    } else if (method == "dopri5") {
      s.method = SolverSpec::Method::dopri5;
    } else {
      fail(ErrorCode::config, "unknown solver '" + method + "'");
    }
    s.h = j.value("h", s.h);
    s.rtol = j.value("rtol", s.rtol);
    s.atol = j.value("atol", s.atol);
    s.h_init = j.value("h_init", s.h_init);
    s.h_min = j.value("h_min", s.h_min);
    s.max_steps = j.value("max_steps", s.max_steps);
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("solver: ") + e.what());
  }
}

nlohmann::json to_json(const SolverSpec& s) {
  if (s.method == SolverSpec::Method::rk4) return {{"method", "rk4"}, {"h", s.h}};
  return {{"method", "dopri5"}, {"rtol", s.rtol},   {"atol", s.atol},
          {"h_init", s.h_init}, {"h_min", s.h_min}, {"max_steps", s.max_steps}};
}

double min_spacing(const Vector& times) {
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 1; k < times.size(); ++k) best = std::min(best, std::abs(times[k] - times[k - 1]));
  require(std::isfinite(best) && best > 0.0, ErrorCode::invalid_argument, "ode: need two distinct times");
  return best;
}

Index whole_steps(double from, double to, double h) {
  const double ratio = std::abs(to - from) / h;
  const double rounded = std::round(ratio);
  require(std::abs(ratio - rounded) <= 1e-6 * std::max(1.0, rounded), ErrorCode::incompatible,
          "ode: rk4 step does not divide the query grid");
  return static_cast<Index>(rounded);
}

Matrix solve_ode(const OdeRhs& rhs, const Vector& y0, const Vector& times, const SolverSpec& spec,
                 SolveStats* stats) {
  validate(spec);
  check_times(times);
  require(y0.allFinite(), ErrorCode::non_finite, "ode: non-finite initial state");
  SolveStats local;
  SolveStats& s = stats ? *stats : local;
  if (spec.method == SolverSpec::Method::rk4) return solve_rk4(rhs, y0, times, spec.h, s);
  return solve_dopri5(rhs, y0, times, spec, s);
}

}  // namespace nirom
