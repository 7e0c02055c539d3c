#include "fedala/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"
#include "fedala/version.hpp"
#include <nlohmann/json.hpp>

namespace fedala {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

Stat stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

std::string version_string() { return kVersionString; }

Dataset load_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.data.source == DataSource::kCsv) return load_csv(cfg.data.csv_path);
  const auto& s = cfg.data.synthetic;
  return gen_synthetic(s.num_classes, s.input_dim, s.samples_per_class, s.class_sep, seed);
}

ModelArch make_arch(const ExperimentConfig& cfg, const Dataset& data) {
  ModelArch arch;
  arch.kind = cfg.model_kind;
  arch.input_dim = data.input_dim;
  arch.num_classes = data.num_classes;
  arch.hidden_dim = cfg.model_kind == ArchKind::kMlp1Hidden ? cfg.hidden_dim : 0;
  arch.validate();
  return arch;
}

std::vector<ClientSplit> build_client_splits(const ExperimentConfig& cfg, const Dataset& data,
                                             std::uint64_t seed) {
  PartitionConfig pc;
  pc.scheme = cfg.data.scheme;
  pc.dirichlet_beta = cfg.data.dirichlet_beta;
  pc.classes_per_client = cfg.data.classes_per_client;
  pc.num_clients = cfg.fl.num_clients;
  pc.seed = seed;
  std::vector<Dataset> parts = partition(data, pc);
  std::vector<ClientSplit> splits;
  splits.reserve(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i)
    splits.push_back(split_client(parts[i], cfg.data.test_fraction,
                                  derive_seed(seed, {tag(Stream::kSplit), static_cast<std::uint64_t>(i)})));
  return splits;
}

ExperimentReport run_repeat(const ExperimentConfig& cfg, int repeat) {
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(repeat);
  const Dataset data = load_dataset(cfg, seed);
  const ModelArch arch = make_arch(cfg, data);
  FlConfig fl = cfg.fl;
  fl.seed = seed;
  ExperimentOptions opts;
  opts.run_name = cfg.run_name;
  opts.repeat = repeat;
  opts.record_wall_time = cfg.record_wall_time;
  return run_experiment(fl, arch, build_client_splits(cfg, data, seed), opts);
}

Stat mean_std(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string report_to_json(const RunReport& r) {
  json j;
  j["run_name"] = r.run_name;
  j["strategy"] = r.strategy;
  j["version"] = r.version;
  j["config"] = r.config_json.empty() ? json(nullptr) : json::parse(r.config_json);
  json results = json::array();
  for (const auto& x : r.results)
    results.push_back({{"repeat", x.repeat},
                       {"seed", x.seed},
                       {"avg_best_local_accuracy", x.avg_best_local_accuracy},
                       {"best_global_accuracy", x.best_global_accuracy},
                       {"total_comm_params", x.total_comm_params},
                       {"wall_ms", x.wall_ms},
                       {"final_objective_init", x.final_objective_init},
                       {"final_objective_trained", x.final_objective_trained}});
  j["results"] = results;
  j["summary"] = {{"avg_best_local_accuracy", stat_json(r.avg_best_local_accuracy)},
                  {"best_global_accuracy", stat_json(r.best_global_accuracy)},
                  {"total_comm_params", r.total_comm_params},
                  {"total_wall_ms", r.total_wall_ms}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunReport r;
    r.run_name = j.at("run_name").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.version = j.at("version").get<std::string>();
    if (!j.at("config").is_null()) r.config_json = j.at("config").dump(2);
    for (const auto& x : j.at("results")) {
      RepeatResult rr;
      rr.repeat = x.at("repeat").get<int>();
      rr.seed = x.at("seed").get<std::uint64_t>();
      rr.avg_best_local_accuracy = x.at("avg_best_local_accuracy").get<double>();
      rr.best_global_accuracy = x.at("best_global_accuracy").get<double>();
      rr.total_comm_params = x.at("total_comm_params").get<std::int64_t>();
      rr.wall_ms = x.at("wall_ms").get<std::int64_t>();
      rr.final_objective_init = x.at("final_objective_init").get<double>();
      rr.final_objective_trained = x.at("final_objective_trained").get<double>();
      r.results.push_back(rr);
    }
    const json& s = j.at("summary");
    r.avg_best_local_accuracy = stat_from(s.at("avg_best_local_accuracy"));
    r.best_global_accuracy = stat_from(s.at("best_global_accuracy"));
    r.total_comm_params = s.at("total_comm_params").get<std::int64_t>();
    r.total_wall_ms = s.at("total_wall_ms").get<std::int64_t>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
}

std::size_t threads_from_env() {
  const char* v = std::getenv("FEDALA_SIM_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0) throw ConfigError("FEDALA_SIM_THREADS", "must be a non-negative integer");
  return static_cast<std::size_t>(n);
}

int run(ExperimentConfig cfg, const RunOptions& options, std::ostream& err) {
  if (options.output_dir) cfg.output_dir = *options.output_dir;
  if (options.seed) cfg.seed = *options.seed;
  if (options.repeats) {
    if (*options.repeats < 1) {
      err << "error: --repeats must be positive\n";
      return 2;
    }
    cfg.repeats = *options.repeats;
  }
  cfg.fl.seed = cfg.seed;

  RunReport report;
  report.run_name = cfg.run_name;
  report.strategy = cfg.fl.strategy.label();
  report.version = version_string();
  report.config_json = config_to_json(cfg);

  const fs::path dir = cfg.output_dir / cfg.run_name;
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    err << "error: cannot create output directory '" << dir.string() << "': " << e.what() << "\n";
    return 1;
  }

  try {
    cfg.fl.threads = options.threads ? *options.threads : threads_from_env();
    std::ostringstream metrics;
    std::ostringstream telemetry;
    write_metrics_header(metrics);
    std::vector<AlaTelemetryRecord> ala_rows;
    std::vector<double> local_acc, global_acc;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      ExperimentReport er = run_repeat(cfg, rep);
      for (const auto& row : er.records) write_metrics_row(metrics, row);
      ala_rows.insert(ala_rows.end(), er.ala_records.begin(), er.ala_records.end());
      RepeatResult rr;
      rr.repeat = rep;
      rr.seed = cfg.seed + static_cast<std::uint64_t>(rep);
      rr.avg_best_local_accuracy = er.avg_best_local_accuracy;
      rr.best_global_accuracy = er.best_global_accuracy;
      rr.total_comm_params = er.total_comm_params;
      rr.wall_ms = er.wall_ms;
      rr.final_objective_init = er.rounds.back().objective_init;
      rr.final_objective_trained = er.rounds.back().objective_trained;
      report.results.push_back(rr);
      report.total_comm_params += rr.total_comm_params;
      report.total_wall_ms += er.wall_ms;
      local_acc.push_back(rr.avg_best_local_accuracy);
      global_acc.push_back(rr.best_global_accuracy);
    }
    report.avg_best_local_accuracy = mean_std(local_acc);
    report.best_global_accuracy = mean_std(global_acc);
    write_file(dir / "metrics.csv", metrics.str());
    if (cfg.fl.strategy.uses_ala()) {
      write_ala_telemetry_csv(telemetry, ala_rows);
      write_file(dir / "ala_telemetry.csv", telemetry.str());
    }
    write_file(dir / "report.json", report_to_json(report));
    return 0;
  } catch (const std::exception& e) {
    report.error = e.what();
    err << "error: " << e.what() << "\n";
    try {
      write_file(dir / "report.json", report_to_json(report));
    } catch (const std::exception& e2) {
      err << "error: " << e2.what() << "\n";
    }
    return 1;
  }
}

std::vector<ComparisonRow> compare(const std::vector<fs::path>& run_dirs) {
  std::vector<ComparisonRow> rows;
  for (const auto& dir : run_dirs) {
    const fs::path file = dir / "report.json";
    std::ifstream in(file);
    if (!in) throw Error("no report.json in '" + dir.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunReport r;
    try {
      r = report_from_json(ss.str());
    } catch (const SchemaError& e) {
      throw Error("corrupt '" + file.string() + "': " + e.what());
    }
    if (r.error) throw Error("run in '" + dir.string() + "' failed: " + *r.error);
    rows.push_back({r.run_name, r.strategy, r.avg_best_local_accuracy, r.total_comm_params, r.total_wall_ms});
  }
  return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "run_name,strategy,avg_best_local_acc_mean,avg_best_local_acc_std,total_comm_params,total_wall_ms\n";
  for (const auto& r : rows)
    out << r.run_name << ',' << r.strategy << ',' << format_float(r.avg_best_local_accuracy.mean) << ','
        << format_float(r.avg_best_local_accuracy.std) << ',' << r.total_comm_params << ','
        << r.total_wall_ms << '\n';
}

void print_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-14s %22s %16s %12s\n", "run", "strategy",
                "avg-best-local acc (%)", "comm params", "wall ms");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %-14s %13.2f +- %5.2f %16lld %12lld\n", r.run_name.c_str(),
                  r.strategy.c_str(), 100.0 * r.avg_best_local_accuracy.mean,
                  100.0 * r.avg_best_local_accuracy.std, static_cast<long long>(r.total_comm_params),
                  static_cast<long long>(r.total_wall_ms));
    out << line;
  }
}

}  // namespace fedala
