#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedala/ala.hpp"
#include "fedala/data.hpp"
#include "fedala/metrics.hpp"
#include "fedala/model.hpp"

namespace fedala {

enum class StrategyKind { kFedAvg, kFedProx, kFedAvgC, kFedAla };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kFedAvg;
  double prox_mu = 0.001;   // fedprox
  int finetune_epochs = 1;  // fedavg_c
  bool attach_ala = false;  // ALA local initialization on top of fedavg/fedprox/fedavg_c

  bool uses_ala() const { return kind == StrategyKind::kFedAla || attach_ala; }
  // e.g. "fedala", "fedprox+ala"
  std::string label() const;
};

struct FlConfig {
  std::size_t num_clients = 20;
  double join_ratio = 1.0;
  int rounds = 100;
  double local_lr = 0.05;
  int local_epochs = 1;
  std::size_t batch_size = 10;
  StrategyConfig strategy;
  std::optional<AlaConfig> ala;
  std::uint64_t seed = 0;
  // Worker threads for client work within a round; 0 runs sequentially.
  std::size_t threads = 0;

  // ceil(join_ratio * num_clients)
  std::size_t participants_per_round() const;
  // Throws ConfigError naming the offending key.
  void validate(const ModelArch& arch) const;
};

struct ClientState {
  int id = 0;
  ClientSplit split;
  ModelParams local_model;
  std::optional<AlaState> ala_state;
  double k_weight = 0.0;  // |train_i| / sum_j |train_j|
};

// Clients with local models set to `initial` and k_i from training-set sizes.
std::vector<ClientState> make_clients(std::vector<ClientSplit> splits, const ModelParams& initial,
                                      const ModelArch& arch, const FlConfig& cfg);

// Uniform sample without replacement of participants_per_round() client ids,
// seeded by (seed, round_t); returned in ascending order.
std::vector<int> sample_participants(std::size_t num_clients, double join_ratio,
                                     std::uint64_t seed, int round_t);

// k_i / sum_{j in participants} k_j for each participant, in the given order.
// The last entry is 1 minus the sum of the others, so summing in order gives
// 1 to within an ulp.
std::vector<double> renormalized_weights(std::span<const double> k);

// sum_i weights[i] * models[i], accumulated in the given order.
ModelParams aggregate(std::span<const ModelParams* const> models, std::span<const double> weights);

// Initialized local model for this round (see StrategyConfig). Mutates only
// the client's ALA state.
ModelParams local_init(ClientState& client, const ModelArch& arch, const ModelParams& global,
                       const FlConfig& cfg, int round_t, AlaRoundStats* ala_stats = nullptr);

// local_epochs of shuffled mini-batch SGD on the client's training data;
// fedprox adds mu * (theta - global_ref) to every gradient.
ModelParams local_train(const ModelParams& model, const ClientSplit& split, const ModelArch& arch,
                        const FlConfig& cfg, const ModelParams& global_ref, std::uint64_t seed);

// Transmitted parameters for one participant in one round (download + upload).
std::int64_t comm_params_per_participant(const ModelParams& model);

struct ClientRoundOutcome {
  int client_id = 0;
  EvalResult init_train;  // initialized model, training data
  EvalResult init_test;   // initialized model, test data
  EvalResult trained_train;
  EvalResult trained_test;
  std::optional<AlaRoundStats> ala;
  std::int64_t wall_ms = 0;
};

struct RoundResult {
  int round = 0;
  std::vector<int> participants;
  std::vector<std::pair<int, ModelParams>> uploaded;  // ascending client id
  std::vector<ClientRoundOutcome> outcomes;           // ascending client id
  std::vector<MetricsRecord> per_client_metrics;      // init then trained row per participant
};

struct RoundOptions {
  bool evaluate = true;
  bool record_wall_time = false;
};

// One iteration: sample participants, run local init / train / evaluation for
// each (in parallel when cfg.threads > 0), aggregate uploads in ascending id
// order with renormalized k. Unsampled clients are untouched.
std::pair<ModelParams, RoundResult> run_round(const ModelParams& server_model,
                                              std::vector<ClientState>& clients,
                                              const ModelArch& arch, const FlConfig& cfg,
                                              int round_t, const RoundOptions& options = {});

struct RoundSummary {
  int round = 0;
  double objective_init = 0.0;     // sum k_i L_i over participants, initialized models
  double objective_trained = 0.0;  // same for trained models
  double mean_init_accuracy = 0.0;
  double mean_trained_accuracy = 0.0;
  double server_loss = 0.0;
  double server_accuracy = 0.0;
  std::int64_t comm_params = 0;
};

struct ExperimentReport {
  std::string run_name;
  int repeat = 0;
  std::string strategy;
  double avg_best_local_accuracy = 0.0;  // mean over clients of best-so-far init accuracy
  double best_global_accuracy = 0.0;     // max over rounds of the server model accuracy
  std::int64_t total_comm_params = 0;
  std::int64_t wall_ms = 0;
  std::vector<RoundSummary> rounds;
  std::vector<MetricsRecord> records;
  std::vector<AlaTelemetryRecord> ala_records;
};

struct ExperimentOptions {
  std::string run_name = "run";
  int repeat = 0;
  bool record_wall_time = false;
};

// Runs cfg.rounds iterations from a seeded initial model broadcast to every
// client. Participants are evaluated after local initialization and after
// training; the personalized metric tracks each client's best accuracy of its
// initialized model.
ExperimentReport run_experiment(const FlConfig& cfg, const ModelArch& arch,
                                std::vector<ClientSplit> splits, const ExperimentOptions& options = {});

}  // namespace fedala
