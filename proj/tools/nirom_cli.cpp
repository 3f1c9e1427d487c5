// Command-line front end over the nirom C API.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nirom/nirom.h"

namespace {

using nlohmann::json;

/// Failure of one CLI step, reported as "nirom <command> [stage] code: message".
struct CliFailure {
  std::string stage;
  nirom_status status;
  std::string message;
};

void check(nirom_status status, const std::string& stage) {
  if (status == NIROM_OK) return;
  std::string where = nirom_last_error_stage();
  throw CliFailure{where.empty() ? stage : where, status, nirom_last_error()};
}

[[noreturn]] void usage_error(const std::string& stage, const std::string& message) {
  throw CliFailure{stage, NIROM_E_INVALID_ARGUMENT, message};
}

std::string read_file(const std::string& path, const std::string& stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{stage, NIROM_E_IO, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text, const std::string& stage) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw CliFailure{stage, NIROM_E_IO, "cannot write '" + path + "'"};
}

json parse_json(const std::string& text, const std::string& stage) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CliFailure{stage, NIROM_E_CONFIG, std::string("invalid JSON: ") + e.what()};
  }
}

/// Owned C string from the library.
struct CString {
  char* p = nullptr;
  ~CString() { nirom_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
};

using Snapshots = Handle<nirom_snapshots, nirom_snapshots_free>;
using Pod = Handle<nirom_pod, nirom_pod_free>;
using Ae = Handle<nirom_ae, nirom_ae_free>;
using Node = Handle<nirom_node, nirom_node_free>;
using Rbf = Handle<nirom_rbf, nirom_rbf_free>;
using Dmd = Handle<nirom_dmd, nirom_dmd_free>;

std::vector<double> times_of(const nirom_snapshots* set) {
  std::vector<double> t(nirom_snapshots_cols(set));
  check(nirom_snapshots_copy_times(set, t.data(), t.size()), "load");
  return t;
}

std::vector<double> column_at(const nirom_snapshots* set, double t_start, const std::string& stage) {
  const size_t rows = nirom_snapshots_rows(set);
  const size_t cols = nirom_snapshots_cols(set);
  std::vector<double> data(rows * cols);
  check(nirom_snapshots_copy_data(set, data.data(), data.size()), stage);
  const auto times = times_of(set);
  const double tol = cols > 1 ? 1e-6 * std::abs(times[1] - times[0]) : 1e-12;
  for (size_t k = 0; k < cols; ++k)
    if (std::abs(times[k] - t_start) <= tol) return {data.begin() + static_cast<long>(k * rows),
                                                     data.begin() + static_cast<long>((k + 1) * rows)};
  usage_error(stage, "no snapshot at the requested start time");
}

std::vector<double> grid(double start, double end, double dt) {
  if (!(dt > 0.0) || !(end >= start)) usage_error("predict", "need t_end >= t_start and dt > 0");
  const double steps = (end - start) / dt;
  const long n = std::lround(steps);
  if (std::abs(steps - static_cast<double>(n)) > 1e-6 * std::max(1.0, steps))
    usage_error("predict", "window length is not a whole number of steps");
  std::vector<double> g(static_cast<size_t>(n + 1));
  for (long k = 0; k <= n; ++k) g[static_cast<size_t>(k)] = start + static_cast<double>(k) * dt;
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-intrusive reduced-order modelling toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nirom_version());
  std::string command;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic snapshot set");
  std::string gen_config, gen_kind = "periodic_wake", gen_out, gen_truth, gen_fields;
  long gen_n = 300, gen_m = 313;
  double gen_dt = 0.008, gen_t0 = 0.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "Generator spec JSON file (overrides the flags)");
  gen->add_option("--kind", gen_kind, "linear_system | traveling_wave | periodic_wake");
  gen->add_option("-n,--rows", gen_n, "Spatial dimension");
  gen->add_option("-m,--snapshots", gen_m, "Number of snapshots");
  gen->add_option("--dt", gen_dt, "Time step");
  gen->add_option("--t0", gen_t0, "First snapshot time");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--fields", gen_fields, "Comma-separated field names");
  gen->add_option("-o,--output", gen_out, "Output container")->required();
  gen->add_option("--truth", gen_truth, "Write generator ground truth JSON here");

  // pod
  auto* pod = app.add_subcommand("pod", "Compute a POD basis");
  std::string pod_in, pod_out, pod_latent, pod_scale, pod_scaling_out;
  double pod_energy = 0.01;
  long pod_modes = 0;
  bool pod_per_field = false, pod_center = false;
  pod->add_option("-i,--input", pod_in, "Snapshot container")->required();
  pod->add_option("-o,--output", pod_out, "Basis container")->required();
  pod->add_option("--energy", pod_energy, "Discarded energy fraction tau");
  pod->add_option("--modes", pod_modes, "Fixed number of modes (overrides --energy)");
  pod->add_flag("--per-field", pod_per_field, "Independent basis per field");
  pod->add_flag("--center", pod_center, "Subtract the temporal mean first");
  pod->add_option("--scale", pod_scale, "Min-max scale first, e.g. [0,1]");
  pod->add_option("--scaling-out", pod_scaling_out, "Write scaling parameters JSON here");
  pod->add_option("--latent", pod_latent, "Write projected coefficients here");

  // ae-train
  auto* ae = app.add_subcommand("ae-train", "Train an autoencoder on one field");
  std::string ae_in, ae_field, ae_config, ae_out, ae_history, ae_latent, ae_scaling_out;
  long ae_dim = 2;
  std::uint64_t ae_seed = 0;
  bool ae_no_scale = false;
  ae->add_option("-i,--input", ae_in, "Snapshot container")->required();
  ae->add_option("--field", ae_field, "Field to train on (default: the only field)");
  ae->add_option("--latent-dim", ae_dim, "Latent width");
  ae->add_option("--config", ae_config, "JSON with optional \"network\" and \"train\" objects");
  ae->add_option("--seed", ae_seed, "Random seed");
  ae->add_flag("--no-scale", ae_no_scale, "Data is already in the decoder output range");
  ae->add_option("--scaling-out", ae_scaling_out, "Write scaling parameters JSON here");
  ae->add_option("-o,--output", ae_out, "Checkpoint path")->required();
  ae->add_option("--history", ae_history, "Loss history CSV");
  ae->add_option("--latent", ae_latent, "Write encoded coefficients here");

  // node-train
  auto* nt = app.add_subcommand("node-train", "Train a neural ODE on a latent trajectory");
  std::string nt_in, nt_config, nt_out, nt_history;
  std::uint64_t nt_seed = 0;
  nt->add_option("-i,--input", nt_in, "Latent container")->required();
  nt->add_option("--config", nt_config, "JSON with \"architecture\", \"solver\" and \"train\"");
  nt->add_option("--seed", nt_seed, "Random seed");
  nt->add_option("-o,--output", nt_out, "Checkpoint path")->required();
  nt->add_option("--history", nt_history, "Loss history CSV");

  // rbf-fit
  auto* rf = app.add_subcommand("rbf-fit", "Fit an RBF increment model");
  std::string rf_in, rf_out, rf_kernel = "gaussian";
  double rf_shape = 0.01, rf_lambda = -1.0;
  rf->add_option("-i,--input", rf_in, "Latent container")->required();
  rf->add_option("--kernel", rf_kernel, "gaussian | multiquadric | inverse_multiquadric");
  rf->add_option("--shape-c", rf_shape, "Shape factor c");
  rf->add_option("--lambda", rf_lambda, "Regularization (default: relative to the kernel trace)");
  rf->add_option("-o,--output", rf_out, "Model container")->required();

  // dmd-fit
  auto* df = app.add_subcommand("dmd-fit", "Fit a rank-r DMD model");
  std::string df_in, df_out, df_spectrum;
  long df_rank = 8;
  df->add_option("-i,--input", df_in, "Snapshot or latent container")->required();
  df->add_option("-r,--rank", df_rank, "Truncation rank");
  df->add_option("-o,--output", df_out, "Model container")->required();
  df->add_option("--spectrum", df_spectrum, "Eigen-spectrum CSV");

  // predict
  auto* pr = app.add_subcommand("predict", "Forecast with a trained propagator");
  std::string pr_model, pr_initial, pr_out, pr_basis, pr_unscale, pr_solver;
  double pr_start = NAN, pr_end = NAN, pr_dt = NAN;
  pr->add_option("--model", pr_model, "node checkpoint, rbf or dmd container")->required();
  pr->add_option("--initial", pr_initial, "Latent container holding the initial state (node, rbf)");
  pr->add_option("--t-start", pr_start, "Start time (default: first initial-state time)");
  pr->add_option("--t-end", pr_end, "End time")->required();
  pr->add_option("--dt", pr_dt, "Output step")->required();
  pr->add_option("--solver", pr_solver, "Solver JSON for node prediction");
  pr->add_option("--basis", pr_basis, "Reconstruct through this POD basis");
  pr->add_option("--unscale", pr_unscale, "Undo scaling with these parameters");
  pr->add_option("-o,--output", pr_out, "Prediction container")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Score a prediction against truth");
  std::string ev_truth, ev_pred, ev_out;
  ev->add_option("--truth", ev_truth, "Truth container")->required();
  ev->add_option("--pred", ev_pred, "Prediction container")->required();
  ev->add_option("-o,--output", ev_out, "Error CSV (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "Run a pipeline config");
  std::string run_config;
  run->add_option("config", run_config, "Pipeline config JSON")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "Run several configs and merge their errors");
  std::vector<std::string> cmp_configs;
  std::string cmp_out;
  unsigned cmp_workers = 0;
  cmp->add_option("configs", cmp_configs, "Pipeline config JSON files")->required();
  cmp->add_option("-o,--output", cmp_out, "Merged CSV (default: stdout)");
  cmp->add_option("--workers", cmp_workers, "Worker threads (default: NIROM_THREADS or all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* sub : app.get_subcommands()) command = sub->get_name();

  try {
    if (*gen) {
      json spec;
      if (!gen_config.empty()) {
        spec = parse_json(read_file(gen_config, "load"), "load");
      } else {
        spec = {{"kind", gen_kind}, {"n", gen_n}, {"m", gen_m}, {"dt", gen_dt}, {"t0", gen_t0}, {"seed", gen_seed}};
        if (!gen_fields.empty()) {
          std::vector<std::string> names;
          std::stringstream ss(gen_fields);
          for (std::string f; std::getline(ss, f, ',');) names.push_back(f);
          spec["fields"] = names;
        }
      }
      Snapshots set;
      CString truth;
      check(nirom_snapshots_generate(spec.dump().c_str(), &set.p, gen_truth.empty() ? nullptr : &truth.p), "generate");
      check(nirom_snapshots_save(set.p, gen_out.c_str()), "persist");
      if (!gen_truth.empty()) write_file(gen_truth, parse_json(truth.str(), "persist").dump(2) + "\n", "persist");
    } else if (*pod) {
      Snapshots data;
      check(nirom_snapshots_load(pod_in.c_str(), &data.p), "load");
      const nirom_snapshots* source = data.p;
      Snapshots scaled;
      if (!pod_scale.empty()) {
        CString params;
        check(nirom_snapshots_scale(data.p, pod_scale.c_str(), 0, &scaled.p, &params.p), "scale");
        source = scaled.p;
        if (!pod_scaling_out.empty()) write_file(pod_scaling_out, params.str(), "persist");
      }
      json opt{{"per_field", pod_per_field}, {"center", pod_center}};
      if (pod_modes > 0) {
        opt["modes"] = pod_modes;
      } else {
        opt["energy"] = pod_energy;
      }
      Pod basis;
      check(nirom_pod_compute(source, opt.dump().c_str(), &basis.p), "reduce");
      check(nirom_pod_save(basis.p, pod_out.c_str()), "persist");
      if (!pod_latent.empty()) {
        Snapshots latent;
        check(nirom_pod_project(basis.p, source, &latent.p), "reduce");
        check(nirom_snapshots_save(latent.p, pod_latent.c_str()), "persist");
      }
      std::printf("modes: %zu\n", nirom_pod_modes(basis.p));
    } else if (*ae) {
      Snapshots data;
      check(nirom_snapshots_load(ae_in.c_str(), &data.p), "load");
      Snapshots block;
      const nirom_snapshots* source = data.p;
      if (!ae_field.empty()) {
        check(nirom_snapshots_field(data.p, ae_field.c_str(), &block.p), "load");
        source = block.p;
      }
      json cfg = ae_config.empty() ? json::object() : parse_json(read_file(ae_config, "load"), "load");
      json spec = cfg.value("network", json::object());
      CString info;
      check(nirom_snapshots_info(source, &info.p), "load");
      const json meta = parse_json(info.str(), "load");
      spec["field"] = meta["fields"][0]["name"];
      spec["input_dim"] = meta["rows"];
      spec["latent_dim"] = ae_dim;
      Snapshots scaled;
      if (!ae_no_scale) {
        const std::string out_act = spec.value("decoder_output", std::string("sigmoid"));
        if (out_act == "sigmoid" || out_act == "tanh") {
          CString params;
          check(nirom_snapshots_scale(source, out_act == "sigmoid" ? "[0,1]" : "[-1,1]", 0, &scaled.p, &params.p),
                "scale");
          source = scaled.p;
          if (!ae_scaling_out.empty()) write_file(ae_scaling_out, params.str(), "persist");
        }
      }
      Ae model;
      check(nirom_ae_create(spec.dump().c_str(), ae_seed, &model.p), "reduce");
      CString history;
      double final_loss = 0.0;
      const nirom_status st =
          nirom_ae_train(model.p, source, cfg.value("train", json::object()).dump().c_str(), &history.p, &final_loss);
      if (!ae_history.empty() && history.p) write_file(ae_history, history.str(), "persist");
      check(st, "reduce");
      check(nirom_ae_save(model.p, ae_out.c_str()), "persist");
      if (!ae_latent.empty()) {
        Snapshots latent;
        check(nirom_ae_encode(model.p, source, &latent.p), "reduce");
        check(nirom_snapshots_save(latent.p, ae_latent.c_str()), "persist");
      }
      std::printf("final_loss: %.17g\n", final_loss);
    } else if (*nt) {
      Snapshots latent;
      check(nirom_snapshots_load(nt_in.c_str(), &latent.p), "load");
      json cfg = nt_config.empty() ? json::object() : parse_json(read_file(nt_config, "load"), "load");
      Node model;
      check(nirom_node_create(cfg.value("architecture", json::object()).dump().c_str(),
                              nirom_snapshots_rows(latent.p), cfg.value("solver", json::object()).dump().c_str(),
                              nt_seed, &model.p),
            "propagate");
      json train = cfg.value("train", json::object());
      train["latent_scaling"] = cfg.value("latent_scaling", false);
      CString history;
      double final_loss = 0.0;
      const nirom_status st = nirom_node_train(model.p, latent.p, train.dump().c_str(), &history.p, &final_loss);
      if (!nt_history.empty() && history.p) write_file(nt_history, history.str(), "persist");
      check(st, "propagate");
      check(nirom_node_save(model.p, nt_out.c_str()), "persist");
      std::printf("final_loss: %.17g\n", final_loss);
    } else if (*rf) {
      Snapshots latent;
      check(nirom_snapshots_load(rf_in.c_str(), &latent.p), "load");
      json cfg{{"kernel", rf_kernel}, {"shape", rf_shape}};
      if (rf_lambda >= 0.0) cfg["lambda"] = rf_lambda;
      Rbf model;
      check(nirom_rbf_fit(latent.p, cfg.dump().c_str(), &model.p), "propagate");
      check(nirom_rbf_save(model.p, rf_out.c_str()), "persist");
    } else if (*df) {
      if (df_rank <= 0) usage_error("propagate", "rank must be positive");
      Snapshots data;
      check(nirom_snapshots_load(df_in.c_str(), &data.p), "load");
      Dmd model;
      check(nirom_dmd_fit(data.p, static_cast<size_t>(df_rank), &model.p), "propagate");
      check(nirom_dmd_save(model.p, df_out.c_str()), "persist");
      if (!df_spectrum.empty()) {
        CString csv;
        check(nirom_dmd_spectrum_csv(model.p, &csv.p), "persist");
        write_file(df_spectrum, csv.str(), "persist");
      }
    } else if (*pr) {
      CString kind;
      check(nirom_artifact_kind(pr_model.c_str(), &kind.p), "load");
      const std::string k = kind.str();
      Snapshots latent_pred;
      if (k == "dmd") {
        Dmd model;
        check(nirom_dmd_load(pr_model.c_str(), &model.p), "load");
        if (std::isnan(pr_start)) usage_error("predict", "--t-start is required for dmd models");
        const auto times = grid(pr_start, pr_end, pr_dt);
        check(nirom_dmd_predict(model.p, times.data(), times.size(), &latent_pred.p), "predict");
      } else if (k == "node" || k == "rbf") {
        if (pr_initial.empty()) usage_error("predict", "--initial is required for node and rbf models");
        Snapshots initial;
        check(nirom_snapshots_load(pr_initial.c_str(), &initial.p), "load");
        if (std::isnan(pr_start)) pr_start = times_of(initial.p).front();
        const auto z0 = column_at(initial.p, pr_start, "predict");
        const auto times = grid(pr_start, pr_end, pr_dt);
        if (k == "node") {
          Node model;
          check(nirom_node_load(pr_model.c_str(), &model.p), "load");
          check(nirom_node_predict(model.p, z0.data(), z0.size(), pr_start, times.data(), times.size(),
                                   pr_solver.empty() ? nullptr : pr_solver.c_str(), &latent_pred.p),
                "predict");
        } else {
          Rbf model;
          check(nirom_rbf_load(pr_model.c_str(), &model.p), "load");
          const double ratio = nirom_rbf_step(model.p) / pr_dt;
          const long substeps = std::lround(ratio);
          if (substeps < 1 || std::abs(ratio - static_cast<double>(substeps)) > 1e-6 * ratio)
            usage_error("predict", "--dt must divide the rbf training step");
          const size_t total = times.size() - 1;
          if (total % static_cast<size_t>(substeps) != 0)
            usage_error("predict", "window must span whole training steps");
          check(nirom_rbf_predict(model.p, z0.data(), z0.size(), pr_start, total / static_cast<size_t>(substeps),
                                  static_cast<size_t>(substeps), &latent_pred.p),
                "predict");
        }
      } else {
        usage_error("load", "'" + pr_model + "' is a " + k + ", not a propagator");
      }
      const nirom_snapshots* result = latent_pred.p;
      Snapshots full, unscaled;
      if (!pr_basis.empty()) {
        Pod basis;
        check(nirom_pod_load(pr_basis.c_str(), &basis.p), "load");
        check(nirom_pod_reconstruct(basis.p, result, &full.p), "reconstruct");
        result = full.p;
      }
      if (!pr_unscale.empty()) {
        check(nirom_snapshots_unscale(result, read_file(pr_unscale, "load").c_str(), &unscaled.p), "reconstruct");
        result = unscaled.p;
      }
      check(nirom_snapshots_save(result, pr_out.c_str()), "persist");
    } else if (*ev) {
      Snapshots truth, pred;
      check(nirom_snapshots_load(ev_truth.c_str(), &truth.p), "load");
      check(nirom_snapshots_load(ev_pred.c_str(), &pred.p), "load");
      CString csv;
      double mse = 0.0;
      check(nirom_evaluate(truth.p, pred.p, &csv.p, &mse), "evaluate");
      if (ev_out.empty()) {
        std::fputs(csv.p, stdout);
      } else {
        write_file(ev_out, csv.str(), "persist");
        std::printf("mse: %.17g\n", mse);
      }
    } else if (*run) {
      CString summary;
      check(nirom_run_file(run_config.c_str(), &summary.p), "run");
      std::printf("%s\n", summary.p);
    } else if (*cmp) {
      std::vector<const char*> paths;
      for (const auto& c : cmp_configs) paths.push_back(c.c_str());
      CString csv;
      check(nirom_compare_files(paths.data(), paths.size(), cmp_workers, &csv.p), "compare");
      if (cmp_out.empty()) {
        std::fputs(csv.p, stdout);
      } else {
        write_file(cmp_out, csv.str(), "persist");
      }
    }
  } catch (const CliFailure& f) {
    std::fprintf(stderr, "nirom %s [%s] %s: %s\n", command.c_str(), f.stage.c_str(), nirom_status_name(f.status),
                 f.message.c_str());
    return static_cast<int>(f.status);
  }
  return 0;
}
