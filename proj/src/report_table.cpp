#include "gridnet/report.hpp"

#include <algorithm>
#include <cstdio>

namespace gridnet {

namespace detail {

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("report: cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("report: cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string reserve_run_basename(const std::string& out_dir, const std::string& base,
                                 const std::string& metrics_bytes, bool* already_present) {
  *already_present = false;
  std::string candidate = base;
  for (int attempt = 2;; ++attempt) {
    const std::string path = out_dir + "/" + candidate + ".metrics.json";
    if (!std::filesystem::exists(path)) return candidate;
    if (read_file(path) == metrics_bytes) {
      *already_present = true;  // identical rerun; keep prior files untouched
      return candidate;
    }
    candidate = base + "-r" + std::to_string(attempt);
  }
}

}  // namespace detail

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TableResult emit_table(const std::string& report_dir, const std::string& out_dir) {
  std::vector<std::string> metric_files;
  if (!std::filesystem::is_directory(report_dir)) {
    throw FormatError("table: " + report_dir + " is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(report_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 && name.substr(name.size() - 13) == ".metrics.json") {
      metric_files.push_back(entry.path().string());
    }
  }
  if (metric_files.empty()) {
    throw FormatError("table: no *.metrics.json report files under " + report_dir);
  }
  std::sort(metric_files.begin(), metric_files.end());

  using Key = std::tuple<std::string, std::string, std::string, std::string, std::uint64_t>;
  std::map<Key, TableRow> merged;

  for (const std::string& path : metric_files) {
    nlohmann::json metrics;
    try {
      metrics = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("table: cannot parse " + path + ": " + e.what());
    }
    // wall-clock lives in the side manifest; absent manifests leave 0
    nlohmann::json wall;
    const std::string manifest_path =
        path.substr(0, path.size() - 13) + ".manifest.json";
    if (std::filesystem::exists(manifest_path)) {
      try {
        wall = nlohmann::json::parse(detail::read_file(manifest_path))["wall_s"];
      } catch (const nlohmann::json::exception&) {
      }
    }
    for (const auto& row : metrics.at("rows")) {
      TableRow r;
      r.dataset = metrics.at("dataset").get<std::string>();
      r.arch = metrics.at("arch").get<std::string>();
      r.grid = metrics.at("grid").get<std::string>();
      r.strategy = row.at("strategy").get<std::string>();
      r.seed = metrics.at("seed").get<std::uint64_t>();
      r.val_acc = row.at("val_acc").get<double>();
      r.train_acc = row.at("train_acc").get<double>();
      if (wall.contains(r.strategy)) r.wall_s = wall[r.strategy].get<double>();

      const Key key{r.dataset, r.arch, r.grid, r.strategy, r.seed};
      const auto it = merged.find(key);
      if (it == merged.end()) {
        merged.emplace(key, r);
      } else if (it->second.val_acc != r.val_acc || it->second.train_acc != r.train_acc) {
        throw FormatError("table: conflicting duplicate key " + r.dataset + "/" + r.arch + "/" +
                          r.grid + "/" + r.strategy + "/seed" + std::to_string(r.seed) +
                          " across report files");
      }
    }
  }

  TableResult result;
  for (const auto& [key, row] : merged) result.rows.push_back(row);

  std::filesystem::create_directories(out_dir);
  result.csv_path = out_dir + "/table.csv";
  result.json_path = out_dir + "/table.json";

  std::string csv = "dataset,arch,grid,strategy,val_acc,train_acc,wall_s,seed\n";
  nlohmann::json json_rows = nlohmann::json::array();
  for (const TableRow& r : result.rows) {
    csv += r.dataset + "," + r.arch + "," + r.grid + "," + r.strategy + "," +
           fmt_double(r.val_acc) + "," + fmt_double(r.train_acc) + "," + fmt_double(r.wall_s) +
           "," + std::to_string(r.seed) + "\n";
    json_rows.push_back({{"dataset", r.dataset},
                         {"arch", r.arch},
                         {"grid", r.grid},
                         {"strategy", r.strategy},
                         {"val_acc", r.val_acc},
                         {"train_acc", r.train_acc},
                         {"wall_s", r.wall_s},
                         {"seed", r.seed}});
  }
  detail::write_file(result.csv_path, csv);
  detail::write_file(result.json_path, json_rows.dump(2) + "\n");
  return result;
}

}  // namespace gridnet
