#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "gridnet/gridnet.hpp"
#include "gridnet/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

int print_checks(const std::vector<gridnet::selfcheck::CheckResult>& results) {
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %s — %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  return all ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridnet — domain-decomposed CNN-DNN training"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "train and evaluate the strategies of a config file");
  std::string config_path;
  run->add_option("config", config_path, "experiment config file")->required();
  std::uint64_t seed = 0;
  int workers = 0, precision = 0;
  bool deterministic = false, non_deterministic = false;
  std::string out_dir;
  auto* seed_opt = run->add_option("--seed", seed, "override run seed");
  auto* workers_opt = run->add_option("--workers", workers, "override worker count");
  run->add_flag("--deterministic", deterministic, "force deterministic mode");
  run->add_flag("--no-deterministic", non_deterministic, "disable deterministic mode");
  auto* prec_opt = run->add_option("--precision", precision, "32 or 64 bit floats");
  auto* out_opt = run->add_option("--out", out_dir, "override output directory");

  // table
  auto* table = app.add_subcommand("table", "merge report files into table.csv/table.json");
  std::string report_dir, table_out;
  table->add_option("dir", report_dir, "directory of *.metrics.json reports")->required();
  auto* table_out_opt = table->add_option("--out", table_out, "output directory");

  // check / gradcheck
  auto* check = app.add_subcommand("check", "run the invariant and oracle suite");
  auto* gradcheck = app.add_subcommand("gradcheck", "run finite-difference gradient suites");
  int gc_seeds = 20;
  gradcheck->add_option("--seeds", gc_seeds, "random seeds per layer suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      gridnet::ExperimentConfig cfg;
      try {
        cfg = gridnet::load_config(config_path);
        if (seed_opt->count()) cfg.train.seed = seed;
        if (workers_opt->count()) cfg.train.workers = workers;
        if (deterministic) cfg.train.deterministic = true;
        if (non_deterministic) cfg.train.deterministic = false;
        if (prec_opt->count()) cfg.precision = precision;
        if (out_opt->count()) cfg.out_dir = out_dir;
        gridnet::validate_config(cfg);
      } catch (const gridnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
      }
      gridnet::run_experiment(cfg);
      std::cout << "run complete; reports in " << cfg.out_dir << "\n";
      return kExitOk;
    }
    if (table->parsed()) {
      const gridnet::TableResult result =
          gridnet::emit_table(report_dir, table_out_opt->count() ? table_out : report_dir);
      std::cout << "wrote " << result.rows.size() << " rows to " << result.csv_path << " and "
                << result.json_path << "\n";
      return kExitOk;
    }
    if (check->parsed()) {
      return print_checks(gridnet::selfcheck::run_oracle_checks());
    }
    if (gradcheck->parsed()) {
      return print_checks(gridnet::selfcheck::run_gradient_checks(gc_seeds));
    }
  } catch (const gridnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
