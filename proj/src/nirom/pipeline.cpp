#include "nirom/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "nirom/dmd.hpp"
#include "nirom/random.hpp"

namespace nirom {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTimeTolerance = 1e-6;  // fraction of a time step

template <class F>
auto in_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, e.code(), e.what());
  } catch (const json::exception& e) {
    throw PipelineError(stage, ErrorCode::config, e.what());
  } catch (const std::bad_alloc&) {
    throw PipelineError(stage, ErrorCode::internal, "out of memory");
  } catch (const std::exception& e) {
    throw PipelineError(stage, ErrorCode::io, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

TimeWindow window_from_json(const json& j) {
  TimeWindow w{j.at("start").get<double>(), j.at("end").get<double>(), j.value("dt", 0.0)};
  require(std::isfinite(w.start) && std::isfinite(w.end) && w.end > w.start, ErrorCode::config,
          "window end must be after its start");
  require(w.dt >= 0.0 && std::isfinite(w.dt), ErrorCode::config, "window dt must be non-negative");
  return w;
}

json window_json(const TimeWindow& w) { return {{"start", w.start}, {"end", w.end}, {"dt", w.dt}}; }

Truncation truncation_from_json(const json& j) {
  if (j.contains("modes")) return Truncation::fixed(j.at("modes").get<Index>());
  return Truncation::energy(j.value("energy", 0.01));
}

bool same_time(double a, double b, double dt) { return std::abs(a - b) <= kTimeTolerance * dt; }

/// Columns of `set` whose times fall inside the window (and on its grid when
/// the window has a step).
SnapshotSet select_window(const SnapshotSet& set, const TimeWindow& w) {
  const Vector& t = set.times();
  const double tol = kTimeTolerance * (w.dt > 0.0 ? w.dt : (t.size() > 1 ? t[1] - t[0] : 1.0));
  Index first = -1, count = 0;
  for (Index k = 0; k < t.size(); ++k) {
    if (t[k] < w.start - tol || t[k] > w.end + tol) continue;
    if (first < 0) first = k;
    ++count;
  }
  require(count >= 2, ErrorCode::empty_set, "training window holds fewer than two snapshots");
  SnapshotSet out = set.column_range(first, count);
  require(same_time(out.times()[0], w.start, tol / kTimeTolerance) &&
              same_time(out.times()[count - 1], w.end, tol / kTimeTolerance),
          ErrorCode::out_of_range, "training window does not start and end on snapshot times");
  if (w.dt > 0.0)
    for (Index k = 1; k < count; ++k)
      require(same_time(out.times()[k] - out.times()[k - 1], w.dt, w.dt), ErrorCode::out_of_range,
              "snapshot spacing does not match the training window step");
  return out;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

struct ReducedModel {
  ScalingParams scaling;
  bool scaled = false;
  std::optional<PODBasis> basis;
  std::vector<AEModel> autoencoders;
  std::vector<FieldSegment> layout;
};

SnapshotSet reconstruct_full(const ReducerConfig& cfg, const ReducedModel& reduced, const LatentTrajectory& latent,
                             const std::string& mesh_id) {
  switch (cfg.kind) {
    case ReducerConfig::Kind::none:
      return SnapshotSet(latent.z, latent.times, reduced.layout, mesh_id);
    case ReducerConfig::Kind::pod: {
      const SnapshotSet s = reconstruct(*reduced.basis, latent);
      return SnapshotSet(s.data(), s.times(), reduced.layout, mesh_id);
    }
    case ReducerConfig::Kind::ae: {
      Index rows = 0;
      for (const auto& seg : reduced.layout) rows += static_cast<Index>(seg.length);
      Matrix out(rows, latent.size());
      Index code = 0;
      for (size_t f = 0; f < reduced.layout.size(); ++f) {
        const AEModel& ae = reduced.autoencoders[f];
        LatentTrajectory part{latent.z.middleRows(code, ae.spec.latent_dim), latent.times, TimeNormalization::none,
                              {}};
        const SnapshotSet decoded = decode(ae, part);
        out.middleRows(static_cast<Index>(reduced.layout[f].offset), static_cast<Index>(reduced.layout[f].length)) =
            decoded.data();
        code += ae.spec.latent_dim;
      }
      return SnapshotSet(out, latent.times, reduced.layout, mesh_id);
    }
  }
  fail(ErrorCode::internal, "unknown reducer");
}

const char* reducer_name(ReducerConfig::Kind k) {
  switch (k) {
    case ReducerConfig::Kind::none: return "none";
    case ReducerConfig::Kind::pod: return "pod";
    case ReducerConfig::Kind::ae: return "ae";
  }
  return "?";
}

const char* propagator_name(PropagatorConfig::Kind k) {
  switch (k) {
    case PropagatorConfig::Kind::node: return "node";
    case PropagatorConfig::Kind::rbf: return "rbf";
    case PropagatorConfig::Kind::dmd: return "dmd";
  }
  return "?";
}

RunReport run_stages(const PipelineConfig& cfg) {
  RunReport report;
  report.output = cfg.output;
  json& summary = report.summary;
  json& timings = report.timings;
  json artifacts = json::array();
  const fs::path& out = cfg.output;

  json config_echo = cfg.source;
  if (config_echo.is_object()) config_echo.erase("output");
  summary["schema_version"] = kPipelineSchemaVersion;
  summary["name"] = cfg.name;
  summary["seed"] = cfg.seed;
  summary["config"] = config_echo;

  // load
  Timer timer;
  SnapshotSet full, train;
  in_stage("load", [&] {
    if (cfg.generator) {
      full = generate(*cfg.generator).set;
    } else {
      full = load(cfg.data_file);
    }
    train = cfg.train ? select_window(full, *cfg.train) : full;
  });
  const double train_dt = train.times()[1] - train.times()[0];
  const TimeWindow train_window{train.times()[0], train.times()[train.cols() - 1], train_dt};
  summary["data"] = {{"rows", full.rows()},
                     {"train_snapshots", train.cols()},
                     {"train_window", window_json(train_window)},
                     {"fields", json::array()}};
  for (const auto& f : full.fields()) summary["data"]["fields"].push_back(f.name);
  timings["load"] = timer.seconds();

  // scale
  timer = Timer();
  ReducedModel reduced;
  reduced.layout = train.fields();
  SnapshotSet scaled = train;
  in_stage("scale", [&] {
    if (cfg.scaling.enabled) {
      reduced.scaling = fit_scaling(train, cfg.scaling.target, cfg.scaling.granularity);
      reduced.scaled = true;
      scaled = apply_scaling(train, reduced.scaling, Direction::forward);
      write_text(out / "scaling.json", to_json(reduced.scaling).dump(2) + "\n");
      artifacts.push_back("scaling.json");
    }
  });
  timings["scale"] = timer.seconds();

  // reduce
  timer = Timer();
  LatentTrajectory latent;
  json reducer_summary{{"type", reducer_name(cfg.reducer.kind)}};
  in_stage("reduce", [&] {
    switch (cfg.reducer.kind) {
      case ReducerConfig::Kind::none:
        latent = from_snapshots(scaled);
        break;
      case ReducerConfig::Kind::pod: {
        reduced.basis = compute_basis(scaled, cfg.reducer.truncation, cfg.reducer.center, cfg.reducer.per_field);
        save_basis(*reduced.basis, out / "basis.nsnp");
        artifacts.push_back("basis.nsnp");
        latent = project(*reduced.basis, scaled);
        json blocks = json::array();
        for (const auto& b : reduced.basis->blocks) {
          const double total = b.sigma.squaredNorm();
          const double kept = b.sigma.head(b.modes).squaredNorm();
          blocks.push_back({{"field", b.field}, {"modes", b.modes}, {"energy", total > 0.0 ? kept / total : 0.0}});
        }
        reducer_summary["blocks"] = blocks;
        break;
      }
      case ReducerConfig::Kind::ae: {
        const auto& fields = scaled.fields();
        latent.z.resize(cfg.reducer.latent_dim * static_cast<Index>(fields.size()), scaled.cols());
        latent.times = scaled.times();
        json nets = json::array();
        for (size_t f = 0; f < fields.size(); ++f) {
          const auto& seg = fields[f];
          json spec_json = cfg.reducer.ae_spec;
          spec_json["field"] = seg.name;
          spec_json["input_dim"] = seg.length;
          spec_json["latent_dim"] = cfg.reducer.latent_dim;
          const AESpec spec = ae_spec_from_json(spec_json);
          AEModel ae = build(spec, derive_seed(cfg.seed, 10 + f));
          AETrainConfig tc = cfg.reducer.ae_train;
          tc.seed = derive_seed(cfg.seed, 20 + f);
          const SnapshotSet block = scaled.field_block(seg);
          const AETrainResult result = nirom::train(ae, block, tc);
          write_text(out / ("history_ae_" + seg.name + ".csv"), history_csv(result.history));
          artifacts.push_back("history_ae_" + seg.name + ".csv");
          if (result.diverged) fail(ErrorCode::diverged, "autoencoder '" + seg.name + "': " + result.message);
          save_autoencoder(ae, out / ("ae_" + seg.name + ".ckpt"));
          artifacts.push_back("ae_" + seg.name + ".ckpt");
          const Index offset = static_cast<Index>(f) * cfg.reducer.latent_dim;
          latent.z.middleRows(offset, cfg.reducer.latent_dim) = encode(ae, block).z;
          latent.segments.push_back({seg.name, static_cast<std::uint64_t>(offset),
                                     static_cast<std::uint64_t>(cfg.reducer.latent_dim)});
          nets.push_back({{"field", seg.name},
                          {"epochs", result.history.size()},
                          {"initial_loss", result.history.empty() ? 0.0 : result.history.front().loss},
                          {"final_loss", result.final_loss}});
          reduced.autoencoders.push_back(std::move(ae));
        }
        reducer_summary["networks"] = nets;
        break;
      }
    }
    require(latent.z.allFinite(), ErrorCode::non_finite, "latent coordinates are not finite");
    if (cfg.reducer.kind != ReducerConfig::Kind::none) {
      save_latent(latent, out / "latent.nsnp");
      artifacts.push_back("latent.nsnp");
    }
  });
  reducer_summary["latent_dim"] = latent.dim();
  summary["reducer"] = reducer_summary;
  timings["reduce"] = timer.seconds();

  // propagate
  timer = Timer();
  json prop_summary{{"type", propagator_name(cfg.propagator.kind)}};
  std::optional<NODEModel> node;
  std::optional<RBFModel> rbf;
  std::optional<DMDModel> dmd;
  in_stage("propagate", [&] {
    switch (cfg.propagator.kind) {
      case PropagatorConfig::Kind::node: {
        NODEModel model =
            build_node(cfg.propagator.architecture, latent.dim(), cfg.propagator.solver, derive_seed(cfg.seed, 100));
        const LatentTrajectory data = fit_normalization(model, latent, cfg.propagator.latent_scaling);
        const NodeTrainResult result = train_node(model, data, cfg.propagator.node_train);
        write_text(out / "history_node.csv", history_csv(result.history));
        artifacts.push_back("history_node.csv");
        if (result.diverged) fail(ErrorCode::diverged, "neural ODE training diverged: " + result.message);
        save_node(model, out / "node.ckpt");
        artifacts.push_back("node.ckpt");
        const double initial = result.history.empty() ? result.final_loss : result.history.front().loss;
        prop_summary["epochs"] = result.history.size();
        prop_summary["initial_loss"] = initial;
        prop_summary["final_loss"] = result.final_loss;
        prop_summary["loss_reduction"] = result.final_loss > 0.0 ? initial / result.final_loss : 0.0;
        node = std::move(model);
        break;
      }
      case PropagatorConfig::Kind::rbf: {
        rbf = fit_rbf(latent, cfg.propagator.rbf);
        save_rbf(*rbf, out / "rbf.nsnp");
        artifacts.push_back("rbf.nsnp");
        prop_summary["kernel"] = kernel_name(rbf->kernel);
        prop_summary["shape"] = rbf->shape;
        prop_summary["lambda"] = rbf->lambda;
        break;
      }
      case PropagatorConfig::Kind::dmd: {
        dmd = fit_dmd(to_snapshots(latent), cfg.propagator.rank);
        save_dmd(*dmd, out / "dmd.nsnp");
        write_text(out / "spectrum.csv", spectrum_csv(*dmd));
        artifacts.push_back("dmd.nsnp");
        artifacts.push_back("spectrum.csv");
        prop_summary["rank"] = dmd->rank;
        prop_summary["spectral_radius"] = dmd->eigenvalues.cwiseAbs().maxCoeff();
        break;
      }
    }
  });
  summary["propagator"] = prop_summary;
  timings["propagate"] = timer.seconds();

  // predict
  timer = Timer();
  const TimeWindow predict_window = cfg.predict.value_or(TimeWindow{train_window.start, train_window.end, train_dt});
  Vector grid;
  LatentTrajectory predicted;
  in_stage("predict", [&] {
    TimeWindow w = predict_window;
    if (w.dt <= 0.0) w.dt = train_dt;
    grid = w.grid();
    Index start_col = -1;
    for (Index k = 0; k < latent.size(); ++k)
      if (same_time(latent.times[k], grid[0], train_dt)) start_col = k;
    require(start_col >= 0, ErrorCode::out_of_range, "prediction must start at a training snapshot time");
    const Vector z0 = latent.z.col(start_col);
    switch (cfg.propagator.kind) {
      case PropagatorConfig::Kind::node:
        predicted = predict(*node, z0, latent.times[start_col], grid,
                            cfg.propagator.predict_solver.value_or(cfg.propagator.solver));
        break;
      case PropagatorConfig::Kind::rbf: {
        const double ratio = train_dt / w.dt;
        const Index substeps = static_cast<Index>(std::llround(ratio));
        require(substeps >= 1 && std::abs(ratio - static_cast<double>(substeps)) <= 1e-6 * ratio,
                ErrorCode::incompatible, "rbf prediction step must divide the training step");
        const Index total = grid.size() - 1;
        require(total % substeps == 0, ErrorCode::incompatible,
                "rbf prediction window must span whole training steps");
        predicted = predict(*rbf, z0, grid[0], total / substeps, substeps);
        predicted.times = grid;
        prop_summary["substeps"] = substeps;
        break;
      }
      case PropagatorConfig::Kind::dmd:
        predicted = from_snapshots(predict(*dmd, grid));
        break;
    }
    predicted.segments = latent.segments;
    require(predicted.z.allFinite(), ErrorCode::non_finite, "latent prediction is not finite");
    if (cfg.reducer.kind != ReducerConfig::Kind::none) {
      save_latent(predicted, out / "latent_prediction.nsnp");
      artifacts.push_back("latent_prediction.nsnp");
    }
  });
  summary["propagator"] = prop_summary;
  Index first_extrapolated = -1, extrapolated = 0;
  for (Index k = 0; k < grid.size(); ++k) {
    if (grid[k] > train_window.end + kTimeTolerance * train_dt || grid[k] < train_window.start - kTimeTolerance * train_dt) {
      if (first_extrapolated < 0) first_extrapolated = k;
      ++extrapolated;
    }
  }
  summary["prediction"] = {{"count", grid.size()},
                           {"window", window_json({grid[0], grid[grid.size() - 1],
                                                   grid.size() > 1 ? grid[1] - grid[0] : 0.0})},
                           {"extrapolated_count", extrapolated},
                           {"first_extrapolated_index", first_extrapolated}};
  timings["predict"] = timer.seconds();

  // reconstruct
  timer = Timer();
  SnapshotSet prediction;
  in_stage("reconstruct", [&] {
    prediction = reconstruct_full(cfg.reducer, reduced, predicted, full.mesh_id());
    if (reduced.scaled) prediction = apply_scaling(prediction, reduced.scaling, Direction::inverse);
    save(prediction, out / "prediction.nsnp", {{"kind", "prediction"}, {"name", cfg.name}});
    artifacts.push_back("prediction.nsnp");
  });
  timings["reconstruct"] = timer.seconds();

  // evaluate
  timer = Timer();
  in_stage("evaluate", [&] {
    std::optional<SnapshotSet> truth;
    if (cfg.generator) {
      truth = generate_at(*cfg.generator, grid).set;
    } else {
      Matrix cols(full.rows(), grid.size());
      bool complete = true;
      Index cursor = 0;
      for (Index k = 0; k < grid.size() && complete; ++k) {
        while (cursor < full.cols() && full.times()[cursor] < grid[k] - kTimeTolerance * train_dt) ++cursor;
        if (cursor < full.cols() && same_time(full.times()[cursor], grid[k], train_dt)) {
          cols.col(k) = full.data().col(cursor);
        } else {
          complete = false;
        }
      }
      if (complete) truth = SnapshotSet(cols, grid, full.fields(), full.mesh_id());
    }
    json errors{{"evaluated", truth.has_value()}};
    if (truth) {
      const SnapshotSet aligned(prediction.data(), truth->times(), prediction.fields(), prediction.mesh_id());
      report.errors = error_series(*truth, aligned);
      const ErrorSeries& s = *report.errors;
      write_text(out / "errors.csv", error_csv(s));
      artifacts.push_back("errors.csv");
      errors["finite"] = s.finite();
      errors["max_rmse"] = s.rmse.maxCoeff();
      errors["mean_rmse"] = s.rmse.mean();
      errors["final_rmse"] = s.rmse[s.size() - 1];
      errors["max_rel_err"] = s.rel.maxCoeff();
      errors["final_rel_err"] = s.rel[s.size() - 1];
      errors["mse"] = mse(truth->data(), aligned.data());
      if (first_extrapolated >= 0) {
        errors["train_window_max_rmse"] = s.rmse.head(first_extrapolated).maxCoeff();
        errors["extrapolation_max_rmse"] = s.rmse.tail(extrapolated).maxCoeff();
      }
    }
    summary["errors"] = errors;
  });
  timings["evaluate"] = timer.seconds();

  // persist
  timer = Timer();
  in_stage("persist", [&] {
    artifacts.push_back("summary.json");
    summary["artifacts"] = artifacts;
    write_text(out / "summary.json", summary.dump(2) + "\n");
    timings["persist"] = timer.seconds();
    write_text(out / "timings.json", timings.dump(2) + "\n");
  });
  return report;
}

}  // namespace

Vector TimeWindow::grid() const {
  require(dt > 0.0, ErrorCode::config, "window step must be positive");
  const double steps = (end - start) / dt;
  const Index n = static_cast<Index>(std::llround(steps));
  require(n >= 1 && std::abs(steps - static_cast<double>(n)) <= kTimeTolerance * std::max(1.0, steps),
          ErrorCode::config, "window length is not a whole number of steps");
  Vector g(n + 1);
  for (Index k = 0; k <= n; ++k) g[k] = start + static_cast<double>(k) * dt;
  return g;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  try {
    PipelineConfig cfg;
    cfg.source = j;
    const int version = j.value("schema_version", kPipelineSchemaVersion);
    require(version == kPipelineSchemaVersion, ErrorCode::config,
            "unsupported config schema_version " + std::to_string(version));
    cfg.name = j.value("name", cfg.name);
    cfg.seed = j.value("seed", cfg.seed);

    const json& data = j.at("data");
    if (data.contains("generator")) {
      cfg.generator = generator_spec_from_json(data.at("generator"));
    } else {
      fs::path file = data.at("file").get<std::string>();
      cfg.data_file = file.is_absolute() ? file : base_dir / file;
    }

    const json reducer = j.value("reducer", json{{"type", "pod"}});
    const std::string rtype = reducer.value("type", std::string("pod"));
    if (rtype == "pod") {
      cfg.reducer.kind = ReducerConfig::Kind::pod;
      cfg.reducer.truncation = truncation_from_json(reducer);
      cfg.reducer.per_field = reducer.value("per_field", cfg.reducer.per_field);
      cfg.reducer.center = reducer.value("center", cfg.reducer.center);
    } else if (rtype == "ae") {
      cfg.reducer.kind = ReducerConfig::Kind::ae;
      cfg.reducer.latent_dim = reducer.value("latent_dim", cfg.reducer.latent_dim);
      cfg.reducer.ae_spec = reducer.value("network", json::object());
      cfg.reducer.ae_train = ae_train_config_from_json(reducer.value("train", json::object()));
    } else if (rtype == "none") {
      cfg.reducer.kind = ReducerConfig::Kind::none;
    } else {
      fail(ErrorCode::config, "unknown reducer '" + rtype + "'");
    }

    if (j.contains("scaling") && !j.at("scaling").is_null() && j.at("scaling") != false) {
      const json& s = j.at("scaling");
      cfg.scaling.enabled = true;
      if (s.is_object()) {
        cfg.scaling.target = parse_interval(s.value("interval", std::string("[0,1]")));
        const std::string g = s.value("granularity", std::string("per_field"));
        require(g == "per_field" || g == "per_row", ErrorCode::config, "unknown scaling granularity '" + g + "'");
        cfg.scaling.granularity = g == "per_row" ? Granularity::per_row : Granularity::per_field;
      }
    } else if (!j.contains("scaling") && cfg.reducer.kind == ReducerConfig::Kind::ae) {
      json spec = cfg.reducer.ae_spec;
      spec["input_dim"] = 2;
      spec["latent_dim"] = 1;
      if (auto interval = required_interval(ae_spec_from_json(spec))) {
        cfg.scaling.enabled = true;
        cfg.scaling.target = *interval;
      }
    }

    const json prop = j.value("propagator", json{{"type", "node"}});
    const std::string ptype = prop.value("type", std::string("node"));
    if (ptype == "node") {
      cfg.propagator.kind = PropagatorConfig::Kind::node;
      if (prop.contains("architecture"))
        cfg.propagator.architecture = node_architecture_from_json(prop.at("architecture"));
      if (prop.contains("solver")) cfg.propagator.solver = solver_from_json(prop.at("solver"));
      if (prop.contains("predict_solver")) cfg.propagator.predict_solver = solver_from_json(prop.at("predict_solver"));
      cfg.propagator.node_train = node_train_config_from_json(prop.value("train", json::object()));
      cfg.propagator.latent_scaling = prop.value("latent_scaling", cfg.propagator.latent_scaling);
    } else if (ptype == "rbf") {
      cfg.propagator.kind = PropagatorConfig::Kind::rbf;
      cfg.propagator.rbf = rbf_config_from_json(prop);
    } else if (ptype == "dmd") {
      cfg.propagator.kind = PropagatorConfig::Kind::dmd;
      cfg.propagator.rank = prop.value("rank", cfg.propagator.rank);
    } else {
      fail(ErrorCode::config, "unknown propagator '" + ptype + "'");
    }

    if (j.contains("windows")) {
      const json& w = j.at("windows");
      if (w.contains("train")) cfg.train = window_from_json(w.at("train"));
      if (w.contains("predict")) cfg.predict = window_from_json(w.at("predict"));
    }
    const fs::path output = j.value("output", std::string("out/") + cfg.name);
    cfg.output = output.is_absolute() ? output : base_dir / output;
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("pipeline config: ") + e.what());
  }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::config, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

RunReport run_pipeline(const PipelineConfig& config) {
  in_stage("persist", [&] {
    fs::create_directories(config.output);
    fs::remove(config.output / "FAILED");
  });
  try {
    return run_stages(config);
  } catch (const PipelineError& e) {
    std::ofstream marker(config.output / "FAILED", std::ios::trunc);
    marker << e.stage() << " [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    throw;
  }
}

unsigned default_workers() {
  if (const char* env = std::getenv("NIROM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string compare_pipelines(const std::vector<PipelineConfig>& configs, unsigned workers) {
  require(!configs.empty(), ErrorCode::invalid_argument, "compare: no configs");
  const auto& first = configs.front();
  for (const auto& c : configs) {
    require(c.source.value("data", json()) == first.source.value("data", json()) && c.data_file == first.data_file,
            ErrorCode::incompatible, "compare: configs use different data");
    require(c.train == first.train && c.predict == first.predict, ErrorCode::incompatible,
            "compare: configs use different time windows");
  }
  if (workers == 0) workers = default_workers();
  workers = std::min<unsigned>(workers, static_cast<unsigned>(configs.size()));

  std::vector<std::optional<RunReport>> reports(configs.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < configs.size(); i = next++) {
      try {
        reports[i] = run_pipeline(configs[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<std::string> labels;
  std::vector<ErrorSeries> series;
  for (size_t i = 0; i < configs.size(); ++i) {
    require(reports[i]->errors.has_value(), ErrorCode::incompatible,
            "compare: '" + configs[i].name + "' has no ground truth to score against");
    std::string label = configs[i].name;
    for (const auto& l : labels)
      if (l == label) label += "_" + std::to_string(i);
    labels.push_back(label);
    series.push_back(*reports[i]->errors);
  }
  return comparison_csv(labels, series);
}

}  // namespace nirom
