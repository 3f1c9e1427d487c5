#include "nirom/nirom.h"

#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "nirom/autoencoder.hpp"
#include "nirom/dmd.hpp"
#include "nirom/error.hpp"
#include "nirom/metrics.hpp"
#include "nirom/node.hpp"
#include "nirom/pipeline.hpp"
#include "nirom/pod.hpp"
#include "nirom/rbf.hpp"
#include "nirom/synthgen.hpp"

struct nirom_snapshots {
  nirom::SnapshotSet set;
};
struct nirom_pod {
  nirom::PODBasis basis;
};
struct nirom_ae {
  nirom::AEModel model;
};
struct nirom_node {
  nirom::NODEModel model;
};
struct nirom_rbf {
  nirom::RBFModel model;
};
struct nirom_dmd {
  nirom::DMDModel model;
};

namespace {

using nlohmann::json;
using nirom::ErrorCode;

thread_local std::string g_last_error;
thread_local std::string g_last_stage;

nirom_status record(ErrorCode code, const std::string& message, const std::string& stage = {}) {
  g_last_error = message;
  g_last_stage = stage;
  return static_cast<nirom_status>(code);
}

template <class F>
nirom_status guarded(F&& body) {
  try {
    g_last_error.clear();
    g_last_stage.clear();
    body();
    return NIROM_OK;
  } catch (const nirom::PipelineError& e) {
    return record(e.code(), e.what(), e.stage());
  } catch (const nirom::Error& e) {
    return record(e.code(), e.what());
  } catch (const json::exception& e) {
    return record(ErrorCode::config, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return record(ErrorCode::internal, "out of memory");
  } catch (const std::exception& e) {
    return record(ErrorCode::internal, e.what());
  } catch (...) {
    return record(ErrorCode::internal, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  nirom::require(p != nullptr, ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out) *out = copy_string(s);
}

json parse(const char* text, json fallback = json::object()) {
  if (!text || !*text) return fallback;
  return json::parse(text);
}

template <class F>
auto config_stage(F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const nirom::Error& e) {
    throw nirom::PipelineError("load", e.code(), e.what());
  } catch (const json::exception& e) {
    throw nirom::PipelineError("load", ErrorCode::config, std::string("invalid JSON: ") + e.what());
  }
}

nirom::Vector vec(const double* p, size_t n) {
  nirom::Vector v(static_cast<nirom::Index>(n));
  for (size_t i = 0; i < n; ++i) v[static_cast<nirom::Index>(i)] = p[i];
  return v;
}

nirom_snapshots* wrap(nirom::SnapshotSet set) { return new nirom_snapshots{std::move(set)}; }

}  // namespace

extern "C" {

const char* nirom_version(void) { return "0.1.0"; }

const char* nirom_status_name(nirom_status status) {
  return nirom::error_code_name(static_cast<ErrorCode>(status));
}

const char* nirom_last_error(void) { return g_last_error.c_str(); }
const char* nirom_last_error_stage(void) { return g_last_stage.c_str(); }
void nirom_string_free(char* text) { std::free(text); }

nirom_status nirom_artifact_kind(const char* path, char** kind) {
  return guarded([&] {
    need(path, "path");
    need(kind, "kind");
    std::ifstream in(path, std::ios::binary);
    nirom::require(static_cast<bool>(in), ErrorCode::io, std::string("cannot open '") + path + "'");
    char magic[8] = {};
    in.read(magic, 8);
    if (in.gcount() == 8 && std::memcmp(magic, "NIROMNET", 8) == 0) {
      const auto ck = nirom::load_checkpoint(path);
      *kind = copy_string(ck.meta.value("kind", std::string("network")));
      return;
    }
    nirom::require(in.gcount() >= 4 && std::memcmp(magic, "NSNP", 4) == 0, ErrorCode::corrupt_header,
                   std::string("'") + path + "' is not a recognised artifact");
    const json manifest = nirom::load_manifest(path);
    std::string k = "snapshots";
    if (manifest.is_object() && manifest.contains("meta") && manifest["meta"].is_object())
      k = manifest["meta"].value("kind", k);
    *kind = copy_string(k);
  });
}

// ---- snapshots

nirom_status nirom_snapshots_create(const double* data, size_t rows, size_t cols, const double* times,
                                    const char* fields_json, nirom_snapshots** out) {
  return guarded([&] {
    need(out, "out");
    need(times, "times");
    nirom::require(rows > 0 && cols > 0, ErrorCode::empty_set, "snapshot set must be non-empty");
    need(data, "data");
    nirom::Matrix m = Eigen::Map<const nirom::Matrix>(data, static_cast<nirom::Index>(rows),
                                                       static_cast<nirom::Index>(cols));
    std::vector<nirom::FieldSegment> fields;
    for (const auto& f : parse(fields_json, json::array()))
      fields.push_back({f.at("name").get<std::string>(), f.at("offset").get<std::uint64_t>(),
                        f.at("length").get<std::uint64_t>()});
    *out = wrap(nirom::SnapshotSet(std::move(m), vec(times, cols), fields));
  });
}

nirom_status nirom_snapshots_load(const char* path, nirom_snapshots** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(nirom::load(path));
  });
}

nirom_status nirom_snapshots_save(const nirom_snapshots* set, const char* path) {
  return guarded([&] {
    need(set, "set");
    need(path, "path");
    nirom::save(set->set, path);
  });
}

nirom_status nirom_snapshots_generate(const char* spec_json, nirom_snapshots** out, char** truth_json) {
  return guarded([&] {
    need(out, "out");
    const auto spec = nirom::generator_spec_from_json(parse(spec_json));
    auto gen = nirom::generate(spec);
    if (truth_json) *truth_json = copy_string(nirom::to_json(gen.truth, spec.kind).dump());
    *out = wrap(std::move(gen.set));
  });
}

nirom_status nirom_snapshots_generate_at(const char* spec_json, const double* times, size_t count,
                                         nirom_snapshots** out) {
  return guarded([&] {
    need(out, "out");
    need(times, "times");
    const auto spec = nirom::generator_spec_from_json(parse(spec_json));
    *out = wrap(nirom::generate_at(spec, vec(times, count)).set);
  });
}

size_t nirom_snapshots_rows(const nirom_snapshots* set) { return set ? static_cast<size_t>(set->set.rows()) : 0; }
size_t nirom_snapshots_cols(const nirom_snapshots* set) { return set ? static_cast<size_t>(set->set.cols()) : 0; }

nirom_status nirom_snapshots_copy_data(const nirom_snapshots* set, double* out, size_t capacity) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    const auto& d = set->set.data();
    nirom::require(capacity >= static_cast<size_t>(d.size()), ErrorCode::out_of_range, "buffer too small");
    std::memcpy(out, d.data(), sizeof(double) * static_cast<size_t>(d.size()));
  });
}

nirom_status nirom_snapshots_copy_times(const nirom_snapshots* set, double* out, size_t capacity) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    const auto& t = set->set.times();
    nirom::require(capacity >= static_cast<size_t>(t.size()), ErrorCode::out_of_range, "buffer too small");
    std::memcpy(out, t.data(), sizeof(double) * static_cast<size_t>(t.size()));
  });
}

nirom_status nirom_snapshots_info(const nirom_snapshots* set, char** out) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    json fields = json::array();
    for (const auto& f : set->set.fields())
      fields.push_back({{"name", f.name}, {"offset", f.offset}, {"length", f.length}});
    const json info{{"rows", set->set.rows()},
                    {"cols", set->set.cols()},
                    {"fields", fields},
                    {"mesh_id", set->set.mesh_id()}};
    *out = copy_string(info.dump());
  });
}

nirom_status nirom_snapshots_window(const nirom_snapshots* set, double start, double end, nirom_snapshots** out) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    const auto& t = set->set.times();
    nirom::Index first = -1, count = 0;
    for (nirom::Index k = 0; k < t.size(); ++k) {
      if (t[k] < start || t[k] > end) continue;
      if (first < 0) first = k;
      ++count;
    }
    nirom::require(count > 0, ErrorCode::empty_set, "no snapshots inside the window");
    *out = wrap(set->set.column_range(first, count));
  });
}

nirom_status nirom_snapshots_field(const nirom_snapshots* set, const char* name, nirom_snapshots** out) {
  return guarded([&] {
    need(set, "set");
    need(name, "name");
    need(out, "out");
    *out = wrap(set->set.field_block(set->set.field(name)));
  });
}

nirom_status nirom_snapshots_scale(const nirom_snapshots* set, const char* interval, int per_row,
                                   nirom_snapshots** out, char** params_json) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    const auto target = nirom::parse_interval(interval ? interval : "[0,1]");
    const auto params = nirom::fit_scaling(set->set, target,
                                           per_row ? nirom::Granularity::per_row : nirom::Granularity::per_field);
    auto scaled = nirom::apply_scaling(set->set, params, nirom::Direction::forward);
    give(params_json, nirom::to_json(params).dump());
    *out = wrap(std::move(scaled));
  });
}

nirom_status nirom_snapshots_unscale(const nirom_snapshots* set, const char* params_json, nirom_snapshots** out) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    need(params_json, "params_json");
    const auto params = nirom::scaling_from_json(json::parse(params_json));
    *out = wrap(nirom::apply_scaling(set->set, params, nirom::Direction::inverse));
  });
}

void nirom_snapshots_free(nirom_snapshots* set) { delete set; }

// ---- POD

nirom_status nirom_pod_compute(const nirom_snapshots* set, const char* options_json, nirom_pod** out) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    const json opt = parse(options_json);
    const auto criterion = opt.contains("modes") ? nirom::Truncation::fixed(opt.at("modes").get<nirom::Index>())
                                                 : nirom::Truncation::energy(opt.value("energy", 0.01));
    *out = new nirom_pod{nirom::compute_basis(set->set, criterion, opt.value("center", false),
                                              opt.value("per_field", false))};
  });
}

nirom_status nirom_pod_load(const char* path, nirom_pod** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new nirom_pod{nirom::load_basis(path)};
  });
}

nirom_status nirom_pod_save(const nirom_pod* pod, const char* path) {
  return guarded([&] {
    need(pod, "pod");
    need(path, "path");
    nirom::save_basis(pod->basis, path);
  });
}

size_t nirom_pod_modes(const nirom_pod* pod) { return pod ? static_cast<size_t>(pod->basis.m()) : 0; }

nirom_status nirom_pod_sigma(const nirom_pod* pod, double* out, size_t capacity, size_t* count) {
  return guarded([&] {
    need(pod, "pod");
    const auto& s = pod->basis.sigma();
    if (count) *count = static_cast<size_t>(s.size());
    if (!out) return;
    const size_t n = std::min(capacity, static_cast<size_t>(s.size()));
    std::memcpy(out, s.data(), sizeof(double) * n);
  });
}

nirom_status nirom_pod_project(const nirom_pod* pod, const nirom_snapshots* set, nirom_snapshots** latent) {
  return guarded([&] {
    need(pod, "pod");
    need(set, "set");
    need(latent, "latent");
    *latent = wrap(nirom::to_snapshots(nirom::project(pod->basis, set->set)));
  });
}

nirom_status nirom_pod_reconstruct(const nirom_pod* pod, const nirom_snapshots* latent, nirom_snapshots** out) {
  return guarded([&] {
    need(pod, "pod");
    need(latent, "latent");
    need(out, "out");
    *out = wrap(nirom::reconstruct(pod->basis, nirom::from_snapshots(latent->set)));
  });
}

void nirom_pod_free(nirom_pod* pod) { delete pod; }

// ---- autoencoder

nirom_status nirom_ae_create(const char* spec_json, uint64_t seed, nirom_ae** out) {
  return guarded([&] {
    need(out, "out");
    *out = new nirom_ae{nirom::build(nirom::ae_spec_from_json(parse(spec_json)), seed)};
  });
}

nirom_status nirom_ae_train(nirom_ae* ae, const nirom_snapshots* data, const char* train_json, char** history_csv,
                            double* final_loss) {
  return guarded([&] {
    need(ae, "ae");
    need(data, "data");
    const auto cfg = nirom::ae_train_config_from_json(parse(train_json));
    const auto result = nirom::train(ae->model, data->set, cfg);
    give(history_csv, nirom::history_csv(result.history));
    if (final_loss) *final_loss = result.final_loss;
    if (result.diverged) nirom::fail(ErrorCode::diverged, "autoencoder training diverged: " + result.message);
  });
}

nirom_status nirom_ae_encode(const nirom_ae* ae, const nirom_snapshots* data, nirom_snapshots** latent) {
  return guarded([&] {
    need(ae, "ae");
    need(data, "data");
    need(latent, "latent");
    *latent = wrap(nirom::to_snapshots(nirom::encode(ae->model, data->set)));
  });
}

nirom_status nirom_ae_decode(const nirom_ae* ae, const nirom_snapshots* latent, nirom_snapshots** out) {
  return guarded([&] {
    need(ae, "ae");
    need(latent, "latent");
    need(out, "out");
    *out = wrap(nirom::decode(ae->model, nirom::from_snapshots(latent->set)));
  });
}

nirom_status nirom_ae_load(const char* path, nirom_ae** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new nirom_ae{nirom::load_autoencoder(path)};
  });
}

nirom_status nirom_ae_save(const nirom_ae* ae, const char* path) {
  return guarded([&] {
    need(ae, "ae");
    need(path, "path");
    nirom::save_autoencoder(ae->model, path);
  });
}

void nirom_ae_free(nirom_ae* ae) { delete ae; }

// ---- neural ODE

nirom_status nirom_node_create(const char* architecture_json, size_t latent_dim, const char* solver_json,
                               uint64_t seed, nirom_node** out) {
  return guarded([&] {
    need(out, "out");
    const auto arch = nirom::node_architecture_from_json(parse(architecture_json));
    const auto solver = nirom::solver_from_json(parse(solver_json));
    *out = new nirom_node{nirom::build_node(arch, static_cast<nirom::Index>(latent_dim), solver, seed)};
  });
}

nirom_status nirom_node_train(nirom_node* node, const nirom_snapshots* latent, const char* train_json,
                              char** history_csv, double* final_loss) {
  return guarded([&] {
    need(node, "node");
    need(latent, "latent");
    const json cfg_json = parse(train_json);
    const auto cfg = nirom::node_train_config_from_json(cfg_json);
    const auto data =
        nirom::fit_normalization(node->model, nirom::from_snapshots(latent->set), cfg_json.value("latent_scaling", false));
    const auto result = nirom::train_node(node->model, data, cfg);
    give(history_csv, nirom::history_csv(result.history));
    if (final_loss) *final_loss = result.final_loss;
    if (result.diverged) nirom::fail(ErrorCode::diverged, "neural ODE training diverged: " + result.message);
  });
}

nirom_status nirom_node_predict(const nirom_node* node, const double* z0, size_t dim, double t_start,
                                const double* times, size_t count, const char* solver_json, nirom_snapshots** out) {
  return guarded([&] {
    need(node, "node");
    need(z0, "z0");
    need(times, "times");
    need(out, "out");
    const auto solver = solver_json ? nirom::solver_from_json(json::parse(solver_json)) : node->model.solver;
    const auto traj = nirom::predict(node->model, vec(z0, dim), t_start, vec(times, count), solver);
    *out = wrap(nirom::to_snapshots(traj));
  });
}

nirom_status nirom_node_load(const char* path, nirom_node** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new nirom_node{nirom::load_node(path)};
  });
}

nirom_status nirom_node_save(const nirom_node* node, const char* path) {
  return guarded([&] {
    need(node, "node");
    need(path, "path");
    nirom::save_node(node->model, path);
  });
}

void nirom_node_free(nirom_node* node) { delete node; }

// ---- RBF

nirom_status nirom_rbf_fit(const nirom_snapshots* latent, const char* config_json, nirom_rbf** out) {
  return guarded([&] {
    need(latent, "latent");
    need(out, "out");
    const auto cfg = nirom::rbf_config_from_json(parse(config_json));
    *out = new nirom_rbf{nirom::fit_rbf(nirom::from_snapshots(latent->set), cfg)};
  });
}

nirom_status nirom_rbf_predict(const nirom_rbf* rbf, const double* z0, size_t dim, double t_start, size_t steps,
                               size_t substeps, nirom_snapshots** out) {
  return guarded([&] {
    need(rbf, "rbf");
    need(z0, "z0");
    need(out, "out");
    const auto traj = nirom::predict(rbf->model, vec(z0, dim), t_start, static_cast<nirom::Index>(steps),
                                     static_cast<nirom::Index>(substeps));
    *out = wrap(nirom::to_snapshots(traj));
  });
}

double nirom_rbf_step(const nirom_rbf* rbf) { return rbf ? rbf->model.dt : 0.0; }

nirom_status nirom_rbf_load(const char* path, nirom_rbf** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new nirom_rbf{nirom::load_rbf(path)};
  });
}

nirom_status nirom_rbf_save(const nirom_rbf* rbf, const char* path) {
  return guarded([&] {
    need(rbf, "rbf");
    need(path, "path");
    nirom::save_rbf(rbf->model, path);
  });
}

void nirom_rbf_free(nirom_rbf* rbf) { delete rbf; }

// ---- DMD

nirom_status nirom_dmd_fit(const nirom_snapshots* set, size_t rank, nirom_dmd** out) {
  return guarded([&] {
    need(set, "set");
    need(out, "out");
    *out = new nirom_dmd{nirom::fit_dmd(set->set, static_cast<nirom::Index>(rank))};
  });
}

nirom_status nirom_dmd_predict(const nirom_dmd* dmd, const double* times, size_t count, nirom_snapshots** out) {
  return guarded([&] {
    need(dmd, "dmd");
    need(times, "times");
    need(out, "out");
    *out = wrap(nirom::predict(dmd->model, vec(times, count)));
  });
}

nirom_status nirom_dmd_spectrum_csv(const nirom_dmd* dmd, char** csv) {
  return guarded([&] {
    need(dmd, "dmd");
    need(csv, "csv");
    *csv = copy_string(nirom::spectrum_csv(dmd->model));
  });
}

nirom_status nirom_dmd_load(const char* path, nirom_dmd** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new nirom_dmd{nirom::load_dmd(path)};
  });
}

nirom_status nirom_dmd_save(const nirom_dmd* dmd, const char* path) {
  return guarded([&] {
    need(dmd, "dmd");
    need(path, "path");
    nirom::save_dmd(dmd->model, path);
  });
}

void nirom_dmd_free(nirom_dmd* dmd) { delete dmd; }

// ---- metrics

nirom_status nirom_evaluate(const nirom_snapshots* truth, const nirom_snapshots* prediction, char** csv,
                            double* mse) {
  return guarded([&] {
    need(truth, "truth");
    need(prediction, "prediction");
    const auto series = nirom::error_series(truth->set, prediction->set);
    if (mse) *mse = nirom::mse(prediction->set.data(), truth->set.data());
    give(csv, nirom::error_csv(series));
  });
}

// ---- pipeline

nirom_status nirom_run_file(const char* config_path, char** summary_json) {
  return guarded([&] {
    need(config_path, "config_path");
    const auto cfg = config_stage([&] { return nirom::load_pipeline_config(config_path); });
    const auto report = nirom::run_pipeline(cfg);
    give(summary_json, report.summary.dump(2));
  });
}

nirom_status nirom_run_json(const char* config_json, const char* base_dir, char** summary_json) {
  return guarded([&] {
    need(config_json, "config_json");
    const auto cfg = config_stage(
        [&] { return nirom::pipeline_config_from_json(parse(config_json), base_dir ? base_dir : ""); });
    const auto report = nirom::run_pipeline(cfg);
    give(summary_json, report.summary.dump(2));
  });
}

nirom_status nirom_compare_files(const char* const* config_paths, size_t count, unsigned workers, char** csv) {
  return guarded([&] {
    need(config_paths, "config_paths");
    need(csv, "csv");
    std::vector<nirom::PipelineConfig> configs;
    for (size_t i = 0; i < count; ++i) {
      need(config_paths[i], "config path");
      configs.push_back(config_stage([&] { return nirom::load_pipeline_config(config_paths[i]); }));
    }
    *csv = copy_string(nirom::compare_pipelines(configs, workers));
  });
}

}  // extern "C"
