#include "nirom/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nirom/error.hpp"
#include "nirom/random.hpp"

namespace nirom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Index latent_dim(const std::vector<Complex>& eig) {
  Index d = 0;
  for (const auto& l : eig) d += l.imag() == 0.0 ? 1 : 2;
  return d;
}

std::vector<WakeMode> default_wake_modes() {
  return {{1.2, 1.0}, {2.4, 0.35}, {3.6, 0.1}};
}

std::vector<FieldSegment> layout_for(const GeneratorSpec& spec) {
  if (spec.fields.empty()) return {{"u", 0, static_cast<std::uint64_t>(spec.n)}};
  return split_fields(spec.fields, spec.n);
}

Generated linear_system(const GeneratorSpec& spec, const Vector& times) {
  const Index d = latent_dim(spec.eigenvalues);
  Matrix a = Matrix::Zero(d, d);
  GroundTruth truth;
  Index pos = 0;
  for (const auto& l : spec.eigenvalues) {
    if (l.imag() == 0.0) {
      a(pos, pos) = l.real();
      truth.eigenvalues.push_back(l);
      ++pos;
    } else {
      a(pos, pos) = l.real();
      a(pos, pos + 1) = -std::abs(l.imag());
      a(pos + 1, pos) = std::abs(l.imag());
      a(pos + 1, pos + 1) = l.real();
      truth.eigenvalues.emplace_back(l.real(), std::abs(l.imag()));
      truth.eigenvalues.emplace_back(l.real(), -std::abs(l.imag()));
      pos += 2;
    }
  }
  for (const auto& l : truth.eigenvalues) truth.spectral_radius = std::max(truth.spectral_radius, std::abs(l));

  Rng rng(spec.seed);
  Matrix q;
  if (spec.lift) {
    q.resize(spec.n, d);
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < spec.n; ++i) q(i, j) = rng.normal();
    orthonormalize_columns(q);
    fix_column_signs(q);
  } else {
    q = Matrix::Identity(d, d);
  }
  Vector z0 = Vector::Ones(d);
  if (!spec.z0.empty()) z0 = Eigen::Map<const Vector>(spec.z0.data(), d);

  Matrix data(spec.n, times.size());
  Vector z = z0;
  Index step = 0;
  for (Index k = 0; k < times.size(); ++k) {
    const double raw = (times[k] - spec.t0) / spec.dt;
    const auto target = static_cast<Index>(std::llround(raw));
    require(std::abs(raw - static_cast<double>(target)) <= 1e-9 * std::max(1.0, std::abs(raw)) && target >= step,
            ErrorCode::invalid_argument, "linear_system: sample times must be increasing multiples of dt");
    for (; step < target; ++step) z = a * z;
    data.col(k) = q * z;
  }
  truth.latent_operator = a;
  truth.lift = q;
  truth.z0 = z0;
  return {SnapshotSet(std::move(data), times, layout_for(spec)), std::move(truth)};
}

Generated traveling_wave(const GeneratorSpec& spec, const Vector& times) {
  Matrix data(spec.n, times.size());
  const double inv = 1.0 / (2.0 * spec.width * spec.width);
  for (Index k = 0; k < times.size(); ++k) {
    const double position = spec.center + spec.speed * (times[k] - spec.t0);
    for (Index i = 0; i < spec.n; ++i) {
      double dist = static_cast<double>(i) / static_cast<double>(spec.n) - position;
      dist -= std::round(dist);
      data(i, k) = std::exp(-dist * dist * inv);
    }
  }
  return {SnapshotSet(std::move(data), times, layout_for(spec)), GroundTruth{}};
}

Generated periodic_wake(const GeneratorSpec& spec, const Vector& times) {
  const auto modes = spec.modes.empty() ? default_wake_modes() : spec.modes;
  const auto layout = layout_for(spec);
  const auto k_modes = static_cast<Index>(modes.size());
  GroundTruth truth;
  truth.amplitude.resize(spec.n, k_modes);
  truth.phase.resize(spec.n, k_modes);
  truth.offset.resize(spec.n);

  Rng rng(spec.seed);
  for (const auto& field : layout) {
    const double field_gain = rng.uniform(0.5, 1.5);
    const double offset_phase = rng.uniform(0.0, kTwoPi);
    std::vector<double> shape_phase, carrier_phase, wavenumber;
    for (Index j = 0; j < k_modes; ++j) {
      shape_phase.push_back(rng.uniform(0.0, kTwoPi));
      carrier_phase.push_back(rng.uniform(0.0, kTwoPi));
      wavenumber.push_back(static_cast<double>(j + 1) * rng.uniform(1.5, 2.5));
    }
    const auto len = static_cast<Index>(field.length);
    for (Index r = 0; r < len; ++r) {
      const Index i = static_cast<Index>(field.offset) + r;
      const double s = (static_cast<double>(r) + 0.5) / static_cast<double>(len);
      truth.offset[i] = spec.steady * (1.0 + 0.5 * std::cos(kTwoPi * s + offset_phase));
      for (Index j = 0; j < k_modes; ++j) {
        const auto& mode = modes[static_cast<size_t>(j)];
        truth.amplitude(i, j) = field_gain * mode.amplitude *
                                (0.6 + 0.4 * std::sin(kTwoPi * static_cast<double>(j + 1) * s +
                                                      shape_phase[static_cast<size_t>(j)]));
        truth.phase(i, j) = kTwoPi * wavenumber[static_cast<size_t>(j)] * s +
                            carrier_phase[static_cast<size_t>(j)];
      }
    }
  }

  Matrix data(spec.n, times.size());
  for (Index k = 0; k < times.size(); ++k) {
    for (Index i = 0; i < spec.n; ++i) {
      double v = truth.offset[i];
      for (Index j = 0; j < k_modes; ++j)
        v += truth.amplitude(i, j) *
             std::sin(kTwoPi * modes[static_cast<size_t>(j)].frequency * times[k] + truth.phase(i, j));
      data(i, k) = v;
    }
  }
  return {SnapshotSet(std::move(data), times, layout), std::move(truth)};
}

}  // namespace

void validate(const GeneratorSpec& spec) {
  require(spec.n >= 1, ErrorCode::invalid_argument, "generator: N must be at least 1");
  require(spec.m >= 2, ErrorCode::invalid_argument, "generator: M must be at least 2");
  require(spec.dt > 0.0 && std::isfinite(spec.dt), ErrorCode::invalid_argument, "generator: dt must be positive");
  require(spec.fields.empty() || static_cast<Index>(spec.fields.size()) <= spec.n,
          ErrorCode::invalid_argument, "generator: more fields than rows");
  switch (spec.kind) {
    case GeneratorKind::linear_system: {
      require(!spec.eigenvalues.empty(), ErrorCode::invalid_argument, "linear_system: no eigenvalues");
      const Index d = latent_dim(spec.eigenvalues);
      require(spec.lift ? spec.n >= d : spec.n == d, ErrorCode::invalid_argument,
              "linear_system: N incompatible with latent dimension");
      require(spec.z0.empty() || static_cast<Index>(spec.z0.size()) == d, ErrorCode::invalid_argument,
              "linear_system: z0 length must equal latent dimension");
      break;
    }
    case GeneratorKind::traveling_wave:
      require(spec.width > 0.0, ErrorCode::invalid_argument, "traveling_wave: width must be positive");
      break;
    case GeneratorKind::periodic_wake:
      require(spec.modes.size() <= 8, ErrorCode::invalid_argument, "periodic_wake: at most 8 modes");
      break;
  }
}

Generated generate(const GeneratorSpec& spec) {
  validate(spec);
  Vector times(spec.m);
  for (Index k = 0; k < spec.m; ++k) times[k] = spec.t0 + static_cast<double>(k) * spec.dt;
  return generate_at(spec, times);
}

Generated generate_at(const GeneratorSpec& spec, const Vector& times) {
  validate(spec);
  require(times.size() > 0, ErrorCode::empty_set, "empty snapshot set");
  switch (spec.kind) {
    case GeneratorKind::linear_system: return linear_system(spec, times);
    case GeneratorKind::traveling_wave: return traveling_wave(spec, times);
    case GeneratorKind::periodic_wake: return periodic_wake(spec, times);
  }
  fail(ErrorCode::internal, "unknown generator kind");
}

namespace {

Complex parse_eigenvalue(const nlohmann::json& e) {
  if (e.is_number()) return {e.get<double>(), 0.0};
  if (e.is_array() && e.size() == 2) return {e[0].get<double>(), e[1].get<double>()};
  if (e.is_object() && e.contains("abs")) return std::polar(e.at("abs").get<double>(), e.value("arg", 0.0));
  fail(ErrorCode::config, "eigenvalue must be a number, [re, im], or {abs, arg}");
}

const char* kind_name(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::linear_system: return "linear_system";
    case GeneratorKind::traveling_wave: return "traveling_wave";
    case GeneratorKind::periodic_wake: return "periodic_wake";
  }
  return "?";
}

}  // namespace

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  try {
    GeneratorSpec s;
    const std::string kind = j.at("kind");
    if (kind == "linear_system") {
      s.kind = GeneratorKind::linear_system;
    } else if (kind == "traveling_wave") {
      s.kind = GeneratorKind::traveling_wave;
    } else if (kind == "periodic_wake") {
      s.kind = GeneratorKind::periodic_wake;
    } else {
      fail(ErrorCode::config, "unknown generator kind '" + kind + "'");
    }
    s.n = j.value("n", s.n);
    s.m = j.value("m", s.m);
    s.dt = j.value("dt", s.dt);
    s.t0 = j.value("t0", s.t0);
    s.seed = j.value("seed", s.seed);
    if (j.contains("fields")) s.fields = j.at("fields").get<std::vector<std::string>>();
    if (j.contains("eigenvalues"))
      for (const auto& e : j.at("eigenvalues")) s.eigenvalues.push_back(parse_eigenvalue(e));
    if (j.contains("z0")) s.z0 = j.at("z0").get<std::vector<double>>();
    s.lift = j.value("lift", s.lift);
    s.speed = j.value("speed", s.speed);
    s.width = j.value("width", s.width);
    s.center = j.value("center", s.center);
    s.steady = j.value("steady", s.steady);
    if (j.contains("modes"))
      for (const auto& m : j.at("modes"))
        s.modes.push_back({m.at("frequency").get<double>(), m.value("amplitude", 1.0)});
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("generator spec: ") + e.what());
  }
}

nlohmann::json to_json(const GeneratorSpec& s) {
  nlohmann::json j{{"kind", kind_name(s.kind)}, {"n", s.n}, {"m", s.m}, {"dt", s.dt},
                   {"t0", s.t0}, {"seed", s.seed}};
  if (!s.fields.empty()) j["fields"] = s.fields;
  switch (s.kind) {
    case GeneratorKind::linear_system:
      j["eigenvalues"] = nlohmann::json::array();
      for (const auto& e : s.eigenvalues) j["eigenvalues"].push_back({e.real(), e.imag()});
      if (!s.z0.empty()) j["z0"] = s.z0;
      j["lift"] = s.lift;
      break;
    case GeneratorKind::traveling_wave:
      j["speed"] = s.speed;
      j["width"] = s.width;
      j["center"] = s.center;
      break;
    case GeneratorKind::periodic_wake:
      j["steady"] = s.steady;
      j["modes"] = nlohmann::json::array();
      for (const auto& m : s.modes) j["modes"].push_back({{"frequency", m.frequency}, {"amplitude", m.amplitude}});
      break;
  }
  return j;
}

nlohmann::json to_json(const GroundTruth& t, GeneratorKind kind) {
  nlohmann::json j{{"kind", kind_name(kind)}};
  if (kind == GeneratorKind::linear_system) {
    j["eigenvalues"] = nlohmann::json::array();
    for (const auto& e : t.eigenvalues) j["eigenvalues"].push_back({e.real(), e.imag()});
    j["spectral_radius"] = t.spectral_radius;
    j["latent_dim"] = t.latent_operator.rows();
  }
  return j;
}

}  // namespace nirom
