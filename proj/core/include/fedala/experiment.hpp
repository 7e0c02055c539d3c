#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedala/data.hpp"
#include "fedala/model.hpp"
#include "fedala/runtime.hpp"

namespace fedala {

enum class DataSource { kSynthetic, kCsv };

struct SyntheticConfig {
  std::size_t num_classes = 10;
  std::size_t input_dim = 32;
  std::size_t samples_per_class = 200;
  double class_sep = 3.0;
};

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  SyntheticConfig synthetic;
  std::filesystem::path csv_path;
  PartitionScheme scheme = PartitionScheme::kDirichlet;
  double dirichlet_beta = 0.1;
  std::size_t classes_per_client = 2;
  double test_fraction = 0.25;
};

struct ExperimentConfig {
  std::string run_name;
  std::filesystem::path output_dir = "runs";
  int repeats = 1;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  DataConfig data;
  ArchKind model_kind = ArchKind::kMlp1Hidden;
  std::size_t hidden_dim = 64;
  FlConfig fl;  // fl.seed mirrors `seed`; per-repeat seeds are seed + repeat
};

// Strict JSON parsing: unknown keys, wrong types, and out-of-range values
// raise ConfigError naming the dotted key path. Missing keys take defaults.
ExperimentConfig parse_config_string(const std::string& text,
                                     const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

// Canonical JSON of a parsed config (every field, defaults filled).
std::string config_to_json(const ExperimentConfig& cfg);

// Loads or generates the dataset described by cfg.data.
Dataset load_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

// Architecture with input/class dimensions taken from the data.
ModelArch make_arch(const ExperimentConfig& cfg, const Dataset& data);

// data -> partition -> per-client 75/25 split, all seeded from `seed`.
std::vector<ClientSplit> build_client_splits(const ExperimentConfig& cfg, const Dataset& data,
                                             std::uint64_t seed);

// One repeat end-to-end with seed = cfg.seed + repeat.
ExperimentReport run_repeat(const ExperimentConfig& cfg, int repeat);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
  friend bool operator==(const Stat&, const Stat&) = default;
};

Stat mean_std(const std::vector<double>& values);

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  double avg_best_local_accuracy = 0.0;
  double best_global_accuracy = 0.0;
  std::int64_t total_comm_params = 0;
  std::int64_t wall_ms = 0;
  double final_objective_init = 0.0;
  double final_objective_trained = 0.0;
  friend bool operator==(const RepeatResult&, const RepeatResult&) = default;
};

// Contents of report.json.
struct RunReport {
  std::string run_name;
  std::string strategy;
  std::string version;
  std::string config_json;  // canonical config echo
  std::vector<RepeatResult> results;
  Stat avg_best_local_accuracy;
  Stat best_global_accuracy;
  std::int64_t total_comm_params = 0;  // summed over repeats
  std::int64_t total_wall_ms = 0;
  std::optional<std::string> error;
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::optional<std::size_t> threads;  // defaults to FEDALA_SIM_THREADS, else 0
};

// Applies overrides, runs every repeat, writes <output_dir>/<run_name>/
// {metrics.csv, report.json[, ala_telemetry.csv]}. Returns the exit code;
// errors go to `err` and report.json's "error".
int run(ExperimentConfig cfg, const RunOptions& options, std::ostream& err);

// Reads FEDALA_SIM_THREADS; 0 when unset.
std::size_t threads_from_env();

struct ComparisonRow {
  std::string run_name;
  std::string strategy;
  Stat avg_best_local_accuracy;
  std::int64_t total_comm_params = 0;
  std::int64_t total_wall_ms = 0;
};

// Reads <dir>/report.json for each directory. Throws Error naming the
// directory or file when a report is missing or corrupt.
std::vector<ComparisonRow> compare(const std::vector<std::filesystem::path>& run_dirs);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
void print_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows);

// git-describe style string baked in at configure time.
std::string version_string();

}  // namespace fedala
