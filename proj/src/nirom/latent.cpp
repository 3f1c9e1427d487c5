#include "nirom/latent.hpp"

#include <cmath>

#include "nirom/error.hpp"

namespace nirom {

namespace {

const char* normalization_name(TimeNormalization n) {
  switch (n) {
    case TimeNormalization::none: return "none";
    case TimeNormalization::unit_interval: return "unit_interval";
    case TimeNormalization::unit_step: return "unit_step";
  }
  return "none";
}

TimeNormalization parse_normalization(const std::string& s) {
  if (s == "unit_interval") return TimeNormalization::unit_interval;
  if (s == "unit_step") return TimeNormalization::unit_step;
  return TimeNormalization::none;
}

}  // namespace

void validate(const LatentTrajectory& latent) {
  require(latent.z.cols() == latent.times.size(), ErrorCode::dimension_mismatch,
          "latent: time count does not match column count");
  require(latent.z.cols() > 0, ErrorCode::empty_set, "latent: empty trajectory");
  for (Index k = 1; k < latent.times.size(); ++k)
    require(latent.times[k] > latent.times[k - 1], ErrorCode::non_monotone_times,
            "latent: times are not strictly increasing");
  require(latent.z.allFinite() && latent.times.allFinite(), ErrorCode::non_finite,
          "latent: non-finite entry");
}

SnapshotSet to_snapshots(const LatentTrajectory& latent) {
  return SnapshotSet(latent.z, latent.times, latent.segments);
}

LatentTrajectory from_snapshots(const SnapshotSet& set) {
  LatentTrajectory out{set.data(), set.times(), TimeNormalization::none, set.fields()};
  return out;
}

void save_latent(const LatentTrajectory& latent, const std::filesystem::path& path) {
  validate(latent);
  save(to_snapshots(latent), path,
       {{"kind", "latent"}, {"normalization", normalization_name(latent.normalization)}});
}

LatentTrajectory load_latent(const std::filesystem::path& path) {
  auto out = from_snapshots(load(path));
  const auto manifest = load_manifest(path);
  if (manifest.is_object() && manifest.contains("meta") && manifest["meta"].contains("normalization"))
    out.normalization = parse_normalization(manifest["meta"]["normalization"].get<std::string>());
  return out;
}

}  // namespace nirom
