#include "gridnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gridnet/checkpoint.hpp"
#include "gridnet/decomp.hpp"

namespace gridnet {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  cfg.raw_text = text;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "model" && section != "train" &&
          section != "run") {
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' outside any section");
    }

    if (section == "dataset") {
      if (key == "kind") cfg.dataset.kind = value;
      else if (key == "path") cfg.dataset.path = value;
      else if (key == "extents") cfg.dataset.synth.extents = parse_grid_counts(value);
      else if (key == "classes") cfg.dataset.synth.num_classes = static_cast<int>(to_int(qual, value));
      else if (key == "channels") cfg.dataset.synth.channels = static_cast<int>(to_int(qual, value));
      else if (key == "noise_std") cfg.dataset.synth.noise_std = to_double(qual, value);
      else if (key == "jitter") cfg.dataset.synth.jitter = static_cast<int>(to_int(qual, value));
      else if (key == "train_per_class") cfg.dataset.synth.train_per_class = static_cast<int>(to_int(qual, value));
      else if (key == "val_per_class") cfg.dataset.synth.val_per_class = static_cast<int>(to_int(qual, value));
      else if (key == "patterns") {
        for (const auto& p : split_list(value)) {
          cfg.dataset.synth.patterns.push_back(static_cast<std::uint32_t>(to_int(qual, p)));
        }
      } else if (key == "intensities") {
        for (const auto& p : split_list(value)) {
          cfg.dataset.synth.intensities.push_back(to_double(qual, p));
        }
      } else if (key == "seed") {
        cfg.dataset.synth.seed = static_cast<std::uint64_t>(to_int(qual, value));
        cfg.dataset.synth_seed_set = true;
      } else if (key == "normalize") cfg.dataset.normalize = to_bool(qual, value);
      else throw ConfigError("config: unknown key " + qual);
    } else if (section == "model") {
      if (key == "arch") cfg.model.family = value;
      else if (key == "base_width") cfg.model.base_width = to_int(qual, value);
      else if (key == "dense_width") cfg.model.dense_width = to_int(qual, value);
      else if (key == "grid") cfg.model.grid = value;
      else if (key == "local_scale") cfg.model.local_scale = to_double(qual, value);
      else if (key == "adaptive_pools") cfg.model.adaptive_pools = to_bool(qual, value);
      else throw ConfigError("config: unknown key " + qual);
    } else if (section == "train") {
      if (key == "epochs") cfg.train.epochs = static_cast<int>(to_int(qual, value));
      else if (key == "batch") cfg.train.batch_size = static_cast<int>(to_int(qual, value));
      else if (key == "lr") cfg.train.adam.lr = to_double(qual, value);
      else if (key == "beta1") cfg.train.adam.beta1 = to_double(qual, value);
      else if (key == "beta2") cfg.train.adam.beta2 = to_double(qual, value);
      else if (key == "epsilon") cfg.train.adam.epsilon = to_double(qual, value);
      else if (key == "pretrain_epochs") cfg.train.pretrain_epochs = static_cast<int>(to_int(qual, value));
      else throw ConfigError("config: unknown key " + qual);
    } else {  // run
      if (key == "strategies") cfg.strategies = split_list(value);
      else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(qual, value));
      else if (key == "workers") cfg.train.workers = static_cast<int>(to_int(qual, value));
      else if (key == "deterministic") cfg.train.deterministic = to_bool(qual, value);
      else if (key == "precision") cfg.precision = static_cast<int>(to_int(qual, value));
      else if (key == "out") cfg.out_dir = value;
      else throw ConfigError("config: unknown key " + qual);
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind != "cifar10" && d.kind != "synth2d" && d.kind != "synth3d") {
    throw ConfigError("dataset.kind: expected cifar10, synth2d or synth3d, got '" + d.kind + "'");
  }
  Shape extents;
  if (d.kind == "cifar10") {
    std::string root = d.path;
    if (root.empty()) {
      const char* env = std::getenv("GRIDNET_DATA");
      if (env) root = env;
    }
    if (root.empty()) {
      throw ConfigError("dataset.path: cifar10 needs a directory (or set GRIDNET_DATA)");
    }
    extents = {32, 32};
  } else {
    const int sdims = d.kind == "synth2d" ? 2 : 3;
    if (d.synth.extents.empty()) {
      throw ConfigError("dataset.extents: required for " + d.kind);
    }
    detail::validate_synth(d.synth, sdims);
    detail::resolve_patterns(d.synth, sdims == 2 ? 4 : 8);
    extents = d.synth.extents;
  }

  if (cfg.model.family != "vgg9" && cfg.model.family != "resnet20") {
    throw ConfigError("model.arch: expected vgg9 or resnet20, got '" + cfg.model.family + "'");
  }
  if (cfg.model.base_width < 1) throw ConfigError("model.base_width: must be >= 1");
  if (cfg.model.dense_width < 1) throw ConfigError("model.dense_width: must be >= 1");
  if (cfg.model.local_scale < 0 || cfg.model.local_scale > 1) {
    throw ConfigError("model.local_scale: must lie in (0,1], or 0 for the 1/sqrt(N) default");
  }
  Shape counts;
  try {
    counts = parse_grid_counts(cfg.model.grid);
  } catch (const Error& e) {
    throw ConfigError("model.grid: " + std::string(e.what()));
  }
  if (counts.size() != extents.size()) {
    throw ConfigError("model.grid: grid '" + cfg.model.grid + "' has " +
                      std::to_string(counts.size()) + " axes but the dataset has " +
                      std::to_string(extents.size()));
  }
  try {
    make_grid(extents, counts);
  } catch (const Error& e) {
    throw ConfigError("model.grid: " + std::string(e.what()));
  }

  if (cfg.train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch: must be >= 1");
  if (cfg.train.adam.lr <= 0) throw ConfigError("train.lr: must be > 0");
  if (cfg.train.pretrain_epochs < 0) throw ConfigError("train.pretrain_epochs: must be >= 0");
  if (cfg.train.workers < 1) throw ConfigError("run.workers: must be >= 1");
  if (cfg.precision != 32 && cfg.precision != 64) {
    throw ConfigError("run.precision: expected 32 or 64, got " + std::to_string(cfg.precision));
  }
  if (cfg.strategies.empty()) throw ConfigError("run.strategies: at least one strategy required");
  for (const auto& s : cfg.strategies) {
    const auto& known = known_strategies();
    if (std::find(known.begin(), known.end(), s) == known.end()) {
      throw ConfigError("run.strategies: unknown strategy '" + s + "'");
    }
  }
  if (cfg.out_dir.empty()) throw ConfigError("run.out: must not be empty");
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  const std::uint64_t h = fnv1a64(cfg.raw_text.data(), cfg.raw_text.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dataset_label(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "cifar10") return "cifar10";
  return cfg.dataset.kind + "-" + grid_string(cfg.dataset.synth.extents) + "-k" +
         std::to_string(cfg.dataset.synth.num_classes);
}

}  // namespace gridnet
