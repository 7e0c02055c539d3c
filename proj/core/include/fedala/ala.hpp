#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedala/data.hpp"
#include "fedala/model.hpp"
#include "fedala/tensor.hpp"

namespace fedala {

// Adaptive local aggregation: each client keeps element-wise weights W over
// the top-p logical layers and initializes its model for local training as
//   init = local + (global - local) * [1 ... 1; W]
// with W learned by gradient descent on the local loss of `init` while both
// models stay frozen. W is clipped to [0, 1] after every step.
struct AlaConfig {
  int p = 1;                     // number of top logical layers with learned weights
  double s_percent = 80.0;       // share of local training data used for weight learning
  double eta = 1.0;              // weight learning rate
  std::size_t batch_size = 10;   // mini-batch size for weight learning
  int init_stage_round = 2;      // first round where weight learning is active
  int init_max_epochs = 40;      // hard cap for the initial stage
  int init_min_epochs = 6;       // floor for the initial stage
  int init_converge_window = 3;  // epochs compared by the convergence test
  double init_converge_tol = 1e-4;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct AlaState {
  AggregationWeights weights;
  bool initialized = false;  // the initial stage has run

  friend bool operator==(const AlaState&, const AlaState&) = default;
};

// Telemetry for one call to ala_local_init.
struct AlaRoundStats {
  int round = 0;
  bool active = false;  // false when deactivated (first round) or nothing to learn
  bool initial_stage = false;
  int epochs = 0;
  double final_loss = 0.0;  // mean weight-learning loss of the last epoch
  double drift = 0.0;       // max |W_after - W_before|
  double mean_weight = 1.0;
  double frac_at_zero = 0.0;
  double frac_at_one = 1.0;
  int loss_increases = 0;  // epochs whose mean loss rose over the previous epoch
  std::vector<double> epoch_losses;
};

// All-ones weights over the top-p layers of `arch`; p = 0 gives an empty set.
AlaState ala_init_state(const ModelArch& arch, const AlaConfig& cfg);

// Gradient of the loss of interpolate(local, global, w) with respect to w:
// (dL/d init)^p * (global - local)^p. Returns the batch loss alongside.
std::pair<double, AggregationWeights> ala_weight_gradient(const ModelArch& arch,
                                                          const ModelParams& local,
                                                          const ModelParams& global,
                                                          const AggregationWeights& w,
                                                          const Batch& batch);

// w -= eta * grad, then clip to [0, 1] when `clip` is set.
void ala_weight_step(AggregationWeights& w, const AggregationWeights& grad, double eta,
                     bool clip = true);

// One pass of weight updates over `data` in row order, in chunks of
// `batch_size`. Returns the mean batch loss.
double ala_weight_epoch(const ModelArch& arch, const ModelParams& local, const ModelParams& global,
                        AggregationWeights& w, const Dataset& data, std::size_t batch_size,
                        double eta, bool clip = true);

// Builds the initialized local model for `round_t` and updates `state`.
//   round_t < init_stage_round: deactivated, returns `global`.
//   first active call: initial stage, trains W until the epoch-mean loss
//     varies by less than init_converge_tol (relative) over the last
//     init_converge_window epochs, between init_min_epochs and init_max_epochs.
//   later calls: exactly one epoch.
// Each round samples s_percent of `train_data` with a seed derived from
// (seed, round_t). With p = 0 or eta = 0 no weight updates are run.
// Throws NumericError carrying the round and epoch on a non-finite loss.
ModelParams ala_local_init(AlaState& state, const ModelArch& arch, const ModelParams& local,
                           const ModelParams& global, const Dataset& train_data, int round_t,
                           const AlaConfig& cfg, std::uint64_t seed, AlaRoundStats* stats = nullptr);

// One unclipped weight step followed by interpolation, next to the direct
// element-wise scaled update of the initialized model:
//   init - eta * (global - local) * (global - local) * dL/d init.
// Requires weights covering every layer.
struct EquivalenceResult {
  ModelParams via_weights;
  ModelParams direct;
};
EquivalenceResult ala_equivalence_check(const AlaState& state, const ModelArch& arch,
                                        const ModelParams& local, const ModelParams& global,
                                        const Batch& batch, double eta);

// Max element-wise |after - before|; 0 for two empty weight sets.
double ala_weight_drift(const AlaState& before, const AlaState& after);

}  // namespace fedala
