#pragma once

#include <functional>

#include <json.hpp>

#include "nirom/linalg.hpp"

namespace nirom {

/// dy/dt = f(t, y), written into `dydt` (already sized).
using OdeRhs = std::function<void(double t, const Vector& y, Vector& dydt)>;

struct SolverSpec {
  enum class Method { rk4, dopri5 };
  Method method = Method::rk4;
  double h = 0.0;  // rk4 step; 0 means "the spacing of the query grid"
  double rtol = 1e-6;
  double atol = 1e-8;
  double h_init = 0.0;  // dopri5 first step; 0 selects one automatically
  double h_min = 1e-10;
  Index max_steps = 100000;

  static SolverSpec rk4(double h = 0.0) { return {Method::rk4, h}; }
  static SolverSpec dopri5(double rtol = 1e-6, double atol = 1e-8) {
    SolverSpec s;
    s.method = Method::dopri5;
    s.rtol = rtol;
    s.atol = atol;
    return s;
  }
};

void validate(const SolverSpec& spec);
SolverSpec solver_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SolverSpec& spec);

struct SolveStats {
  Index accepted = 0;
  Index rejected = 0;
  Index evaluations = 0;
  double max_accepted_error = 0.0;  // dopri5 scaled error norm, <= 1 when accepted
};

/// Smallest positive spacing of a monotone time grid.
double min_spacing(const Vector& times);

/// Number of whole steps of size |h| between two times; throws if the gap is
/// not a multiple of h.
Index whole_steps(double from, double to, double h);

/// Integrates from times[0] (where y = y0) through every entry of `times`,
/// which must be strictly monotone in either direction. Column k of the
/// result is the state at times[k].
Matrix solve_ode(const OdeRhs& rhs, const Vector& y0, const Vector& times, const SolverSpec& spec,
                 SolveStats* stats = nullptr);

}  // namespace nirom
