#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nirom/snapstore.hpp"

namespace nirom {

enum class GeneratorKind { linear_system, traveling_wave, periodic_wake };

struct WakeMode {
  double frequency = 1.0;  // Hz
  double amplitude = 1.0;
};

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::periodic_wake;
  Index n = 300;
  Index m = 313;
  double dt = 0.008;
  double t0 = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> fields;  // empty: a single field "u"

  // linear_system: discrete-time eigenvalues; a complex entry stands for the
  // conjugate pair and contributes a 2x2 rotation-scaling block.
  std::vector<Complex> eigenvalues;
  std::vector<double> z0;  // empty: all ones
  bool lift = true;        // false requires n == latent dimension

  // traveling_wave on the periodic unit interval.
  double speed = 1.0;  // domain lengths per second
  double width = 0.05;
  double center = 0.25;

  // periodic_wake
  std::vector<WakeMode> modes;
  double steady = 1.0;
};

/// Known structure behind a generated set, usable as a test oracle.
struct GroundTruth {
  Matrix latent_operator;            // linear_system: A
  std::vector<Complex> eigenvalues;  // linear_system: full spectrum of A
  double spectral_radius = 0.0;
  Matrix lift;                       // linear_system: N x d orthonormal
  Vector z0;
  // periodic_wake: row i of mode j is amplitude(i,j) * sin(2 pi f_j t + phase(i,j))
  Matrix amplitude;
  Matrix phase;
  Vector offset;
};

struct Generated {
  SnapshotSet set;
  GroundTruth truth;
};

void validate(const GeneratorSpec& spec);
Generated generate(const GeneratorSpec& spec);
/// Same spatial structure as `spec`, sampled at arbitrary times. The random
/// draws depend only on the seed and N, never on the time grid.
Generated generate_at(const GeneratorSpec& spec, const Vector& times);

GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorSpec& spec);
nlohmann::json to_json(const GroundTruth& truth, GeneratorKind kind);

}  // namespace nirom
