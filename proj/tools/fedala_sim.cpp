// Command-line entry point:
//   fedala_sim run <config.json> [--output-dir DIR] [--seed N] [--repeats N]
//   fedala_sim compare <run-dir>... [--output-dir DIR]
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedala/error.hpp"
#include "fedala/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with adaptive local aggregation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fedala::version_string());

  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run_cmd->add_option("config", config_path, "Path to the experiment config")->required();
  run_cmd->add_option("--output-dir", output_dir, "Override output_dir");
  run_cmd->add_option("--seed", seed, "Override the base seed");
  run_cmd->add_option("--repeats", repeats, "Override the number of repeats");

  std::vector<std::string> run_dirs;
  std::optional<std::string> compare_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate finished runs and write comparison.csv");
  cmp_cmd->add_option("dirs", run_dirs, "Run directories containing report.json")->required();
  cmp_cmd->add_option("--output-dir", compare_out, "Where to write comparison.csv (default: .)");

  CLI11_PARSE(app, argc, argv);

  if (*run_cmd) {
    fedala::ExperimentConfig cfg;
    try {
      cfg = fedala::parse_config(config_path);
    } catch (const fedala::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    fedala::RunOptions opts;
    if (output_dir) opts.output_dir = *output_dir;
    opts.seed = seed;
    opts.repeats = repeats;
    const int rc = fedala::run(cfg, opts, std::cerr);
    if (rc == 0)
      std::cout << "wrote " << ((output_dir ? std::filesystem::path(*output_dir) : cfg.output_dir) / cfg.run_name).string()
                << "\n";
    return rc;
  }

  try {
    std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
    const auto rows = fedala::compare(dirs);
    fedala::print_comparison(std::cout, rows);
    const std::filesystem::path out_dir = compare_out ? std::filesystem::path(*compare_out) : ".";
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "comparison.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw fedala::Error("cannot write '" + (out_dir / "comparison.csv").string() + "'");
    fedala::write_comparison_csv(out, rows);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
