#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gridnet/checkpoint.hpp"
#include "gridnet/cifar10.hpp"
#include "gridnet/config.hpp"
#include "gridnet/data.hpp"
#include "gridnet/decomp.hpp"
#include "gridnet/models.hpp"
#include "gridnet/strategies.hpp"

namespace gridnet {

// Reports are split so reruns stay reproducible: <base>.metrics.json holds
// only seed-determined values (byte-identical for identical deterministic
// runs), <base>.manifest.json holds wall-clock and machine-dependent info.
// Filenames are content-addressed as <confighash>-p<precision>-s<seed>; a
// rerun whose metrics differ gets a fresh -rN suffix instead of overwriting.

struct TableRow {
  std::string dataset, arch, grid, strategy;
  double val_acc = 0, train_acc = 0, wall_s = 0;
  std::uint64_t seed = 0;
};

struct TableResult {
  std::vector<TableRow> rows;
  std::string csv_path, json_path;
};

// Merges every *.metrics.json under report_dir into table.csv/table.json in
// out_dir, keyed by (dataset, arch, grid, strategy, seed). Identical
// duplicate keys collapse to one row; conflicting values are a merge error.
TableResult emit_table(const std::string& report_dir, const std::string& out_dir);

namespace detail {

std::string reserve_run_basename(const std::string& out_dir, const std::string& base,
                                 const std::string& metrics_bytes, bool* already_present);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace detail

template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> load_dataset(const ExperimentConfig& cfg) {
  std::pair<Dataset<Scalar>, Dataset<Scalar>> data;
  if (cfg.dataset.kind == "cifar10") {
    std::string root = cfg.dataset.path;
    if (root.empty()) {
      const char* env = std::getenv("GRIDNET_DATA");
      if (env) root = env;
    }
    data = load_cifar10<Scalar>(root);
  } else {
    SynthSpec spec = cfg.dataset.synth;
    if (!cfg.dataset.synth_seed_set) spec.seed = cfg.train.seed;
    data = cfg.dataset.kind == "synth2d" ? synth2d<Scalar>(spec) : synth3d<Scalar>(spec);
  }
  if (cfg.dataset.normalize) normalize(data.first, data.second);
  return data;
}

template <typename Scalar>
struct ExperimentRun {
  std::vector<Metrics> rows;
  std::string metrics_path, manifest_path;
};

namespace detail {

inline nlohmann::json phase_json(const PhaseMetrics& ph) {
  return {{"name", ph.name},
          {"epochs", ph.epochs},
          {"samples_seen", ph.samples_seen},
          {"loss_curve", ph.loss_curve}};
}

inline nlohmann::json metrics_row_json(const Metrics& m) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : m.phases) phases.push_back(phase_json(ph));
  return {{"strategy", m.strategy},
          {"val_acc", m.val_accuracy},
          {"train_acc", m.train_accuracy},
          {"samples_seen", m.samples_seen},
          {"comm_events", m.comm_events},
          {"phases", phases}};
}

}  // namespace detail

// Executes every requested strategy on one dataset/architecture/grid triple.
// Locals are trained once and shared by cnn-dnn, avg-prob and maj-vot, as in
// the two-phase pipeline. Partial results are flushed with a failure marker
// if a strategy dies mid-run.
template <typename Scalar>
ExperimentRun<Scalar> run_experiment_impl(const ExperimentConfig& cfg) {
  const auto [train_set, val_set] = load_dataset<Scalar>(cfg);
  const int num_classes = train_set.num_classes;
  const Index channels = train_set.images.at(0).extent(0);
  Shape extents(train_set.images[0].shape().begin() + 1, train_set.images[0].shape().end());
  const GridDecomposition grid = make_grid(extents, parse_grid_counts(cfg.model.grid));

  ArchOptions opts;
  opts.base_width = cfg.model.base_width;
  opts.dense_width = cfg.model.dense_width;
  opts.adaptive_pools = cfg.model.adaptive_pools;

  const TrainConfig& tc = cfg.train;
  Shape image_shape{channels};
  image_shape.insert(image_shape.end(), extents.begin(), extents.end());

  // shared two-phase components
  std::vector<Network<Scalar>> locals;
  Network<Scalar> dnn;
  LocalTrainResult locals_result;
  bool locals_trained = false, dnn_trained = false;

  const auto ensure_locals = [&] {
    if (locals_trained) return;
    locals = build_local_cnns<Scalar>(cfg.model.family, grid, num_classes, channels, opts,
                                      tc.seed, cfg.model.local_scale);
    locals_result = train_local_cnns(locals, train_set, grid, tc);
    locals_trained = true;
  };
  const auto locals_phase = [&] {
    PhaseMetrics ph;
    ph.name = "locals";
    ph.epochs = tc.epochs;
    ph.wall_s = locals_result.wall_s;
    for (const auto& m : locals_result.per_local) ph.samples_seen += m.samples_seen;
    if (!locals_result.per_local.empty()) ph.loss_curve = locals_result.per_local[0].loss_curve;
    return ph;
  };

  ExperimentRun<Scalar> run;
  std::vector<std::pair<std::string, Network<Scalar>>> checkpoints;
  nlohmann::json failed;

  const auto eval_metrics = [&](Metrics& m, const Predictor<Scalar>& p) {
    m.train_accuracy = evaluate_accuracy(p, train_set);
    m.val_accuracy = evaluate_accuracy(p, val_set);
  };

  try {
    for (const std::string& strategy : cfg.strategies) {
      Metrics m;
      m.strategy = strategy;
      if (strategy == "global") {
        Network<Scalar> net =
            build_architecture<Scalar>(cfg.model.family, image_shape, num_classes, opts);
        net.init_params(derive_seed(tc.seed, 0x61));
        PhaseMetrics ph = train_network(net, train_set.images, train_set.labels, tc, tc.seed,
                                        "global");
        m.wall_s = ph.wall_s;
        m.samples_seen = ph.samples_seen;
        m.phases = {std::move(ph)};
        eval_metrics(m, network_predictor(net));
        checkpoints.emplace_back(strategy, std::move(net));
      } else if (strategy == "cnn-dnn") {
        ensure_locals();
        if (!dnn_trained) {
          dnn = build_aggregator_dnn<Scalar>(grid.n_subimages, num_classes,
                                             tc.seed + static_cast<std::uint64_t>(grid.n_subimages));
          PhaseMetrics agg = train_aggregator(dnn, locals, train_set, grid, tc);
          dnn_trained = true;
          m.phases = {locals_phase(), std::move(agg)};
        } else {
          m.phases = {locals_phase()};
        }
        m.comm_events = locals_result.comm_events;
        for (const auto& ph : m.phases) {
          m.wall_s += ph.wall_s;
          m.samples_seen += ph.samples_seen;
        }
        eval_metrics(m, cnn_dnn_predictor(locals, dnn, grid));
        for (std::size_t i = 0; i < locals.size(); ++i) {
          checkpoints.emplace_back("local" + std::to_string(i), locals[i]);
        }
        checkpoints.emplace_back("dnn", dnn);
      } else if (strategy == "avg-prob" || strategy == "maj-vot") {
        ensure_locals();
        m.comm_events = locals_result.comm_events;
        m.phases = {locals_phase()};
        m.wall_s = locals_result.wall_s;
        m.samples_seen = m.phases[0].samples_seen;
        eval_metrics(m, strategy == "avg-prob" ? average_predictor(locals, grid)
                                               : majority_predictor(locals, grid));
      } else if (strategy == "coherent") {
        Network<Scalar> net = build_coherent<Scalar>(cfg.model.family, grid, num_classes,
                                                     channels, opts, tc.seed);
        PhaseMetrics ph = train_coherent(net, train_set, tc);
        m.wall_s = ph.wall_s;
        m.samples_seen = ph.samples_seen;
        m.phases = {std::move(ph)};
        eval_metrics(m, network_predictor(net));
        checkpoints.emplace_back(strategy, std::move(net));
      } else if (strategy == "transfer") {
        TransferResult<Scalar> tr = transfer_pipeline<Scalar>(
            cfg.model.family, grid, num_classes, channels, opts, train_set, tc);
        m = std::move(tr.metrics);
        m.strategy = strategy;
        eval_metrics(m, network_predictor(tr.model));
        checkpoints.emplace_back(strategy, std::move(tr.model));
      }
      run.rows.push_back(std::move(m));
    }
  } catch (const std::exception& e) {
    failed = {{"strategy", run.rows.size() < cfg.strategies.size()
                               ? cfg.strategies[run.rows.size()]
                               : "?"},
              {"error", e.what()}};
  }

  // assemble metrics json (seed-determined content only)
  nlohmann::json metrics;
  metrics["config_hash"] = config_hash_hex(cfg);
  metrics["seed"] = cfg.train.seed;
  metrics["precision"] = cfg.precision;
  metrics["deterministic"] = cfg.train.deterministic;
  metrics["dataset"] = dataset_label(cfg);
  metrics["arch"] = cfg.model.family;
  metrics["grid"] = cfg.model.grid;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : run.rows) rows.push_back(detail::metrics_row_json(m));
  metrics["rows"] = rows;
  if (!failed.is_null()) metrics["failed"] = failed;
  const std::string metrics_bytes = metrics.dump(2) + "\n";

  std::filesystem::create_directories(cfg.out_dir);
  const std::string base = config_hash_hex(cfg) + "-p" + std::to_string(cfg.precision) + "-s" +
                           std::to_string(cfg.train.seed);
  bool already = false;
  const std::string name =
      detail::reserve_run_basename(cfg.out_dir, base, metrics_bytes, &already);
  run.metrics_path = cfg.out_dir + "/" + name + ".metrics.json";
  run.manifest_path = cfg.out_dir + "/" + name + ".manifest.json";

  if (!already) {
    detail::write_file(run.metrics_path, metrics_bytes);
    nlohmann::json wall, comm;
    double total = 0;
    for (const auto& m : run.rows) {
      wall[m.strategy] = m.wall_s;
      comm[m.strategy] = m.comm_events;
      total += m.wall_s;
      for (const auto& ph : m.phases) wall[m.strategy + "/" + ph.name] = ph.wall_s;
    }
    wall["total"] = total;
    nlohmann::json manifest = {{"config_hash", config_hash_hex(cfg)},
                               {"seed", cfg.train.seed},
                               {"precision", cfg.precision},
                               {"workers", cfg.train.workers},
                               {"deterministic", cfg.train.deterministic},
                               {"wall_s", wall},
                               {"comm_events", comm}};
    detail::write_file(run.manifest_path, manifest.dump(2) + "\n");
    for (const auto& [tag, net] : checkpoints) {
      save_checkpoint(net, cfg.out_dir + "/" + name + "-" + tag + ".gdn");
    }
  }

  if (!failed.is_null()) {
    throw PipelineError("experiment failed at strategy '" +
                        failed["strategy"].get<std::string>() +
                        "': " + failed["error"].get<std::string>() +
                        " (partial results in " + run.metrics_path + ")");
  }
  return run;
}

inline void run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.precision == 32) {
    run_experiment_impl<float>(cfg);
  } else {
    run_experiment_impl<double>(cfg);
  }
}

}  // namespace gridnet
