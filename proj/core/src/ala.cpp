#include "fedala/ala.hpp"

#include <algorithm>
#include <cmath>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"

namespace fedala {

void AlaConfig::validate() const {
  if (p < 0) throw ConfigError("p", "must be non-negative");
  if (!(s_percent > 0.0 && s_percent <= 100.0)) throw ConfigError("s_percent", "must be in (0, 100]");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta", "must be finite and non-negative");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (init_stage_round < 2) throw ConfigError("init_stage_round", "must be at least 2");
  if (init_max_epochs < 1) throw ConfigError("init_max_epochs", "must be positive");
  if (init_min_epochs < 1 || init_min_epochs > init_max_epochs)
    throw ConfigError("init_min_epochs", "must be in [1, init_max_epochs]");
  if (init_converge_window < 1) throw ConfigError("init_converge_window", "must be positive");
  if (!(init_converge_tol > 0.0)) throw ConfigError("init_converge_tol", "must be positive");
}

AlaState ala_init_state(const ModelArch& arch, const AlaConfig& cfg) {
  if (cfg.p > arch.num_logical_layers())
    throw ConfigError("p", "layer range " + std::to_string(cfg.p) + " exceeds the " +
                               std::to_string(arch.num_logical_layers()) + " layers of " +
                               to_string(arch.kind));
  const ModelParams shape = make_params(arch);
  AlaState state;
  for (std::size_t i = top_layers_begin(shape, cfg.p); i < shape.layers.size(); ++i)
    state.weights.tensors.push_back(shape.layers[i].filled_like(1.0));
  return state;
}

std::pair<double, AggregationWeights> ala_weight_gradient(const ModelArch& arch,
                                                          const ModelParams& local,
                                                          const ModelParams& global,
                                                          const AggregationWeights& w,
                                                          const Batch& batch) {
  const ModelParams init = interpolate(local, global, w);
  LossResult fwd = forward_loss(arch, init, batch);
  const ModelParams grad = backward(init, fwd.cache);
  AggregationWeights gw = w;
  const std::size_t begin = local.layers.size() - w.tensors.size();
  for (std::size_t i = 0; i < gw.tensors.size(); ++i) {
    const auto& g = grad.layers[begin + i].data;
    const auto& gl = global.layers[begin + i].data;
    const auto& lo = local.layers[begin + i].data;
    auto& out = gw.tensors[i].data;
    for (std::size_t q = 0; q < out.size(); ++q) out[q] = g[q] * (gl[q] - lo[q]);
  }
  return {fwd.loss, std::move(gw)};
}

void ala_weight_step(AggregationWeights& w, const AggregationWeights& grad, double eta, bool clip) {
  if (w.tensors.size() != grad.tensors.size())
    throw InvalidArgument("ala_weight_step: weight/gradient tensor count mismatch");
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    saxpy_inplace(w.tensors[i], -eta, grad.tensors[i]);
    if (clip) clip01_inplace(w.tensors[i]);
  }
}

double ala_weight_epoch(const ModelArch& arch, const ModelParams& local, const ModelParams& global,
                        AggregationWeights& w, const Dataset& data, std::size_t batch_size,
                        double eta, bool clip) {
  if (batch_size == 0) throw InvalidArgument("ala_weight_epoch: batch_size must be positive");
  if (data.size() == 0) throw InvalidArgument("ala_weight_epoch: no data");
  std::vector<std::size_t> idx;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Batch batch = make_batch(data, idx);
    auto [loss, grad] = ala_weight_gradient(arch, local, global, w, batch);
    ala_weight_step(w, grad, eta, clip);
    total += loss;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

namespace {

void fill_weight_summary(const AggregationWeights& w, AlaRoundStats& stats) {
  const std::size_t n = w.num_elements();
  if (n == 0) {
    stats.mean_weight = 1.0;
    stats.frac_at_zero = 0.0;
    stats.frac_at_one = 1.0;
    return;
  }
  double sum = 0.0;
  std::size_t zeros = 0, ones = 0;
  for (const auto& t : w.tensors)
    for (double x : t.data) {
      sum += x;
      zeros += x == 0.0;
      ones += x == 1.0;
    }
  const auto dn = static_cast<double>(n);
  stats.mean_weight = sum / dn;
  stats.frac_at_zero = static_cast<double>(zeros) / dn;
  stats.frac_at_one = static_cast<double>(ones) / dn;
}

bool converged(const std::vector<double>& losses, const AlaConfig& cfg) {
  const auto n = static_cast<int>(losses.size());
  if (n < cfg.init_min_epochs || n < cfg.init_converge_window) return false;
  const auto first = losses.end() - cfg.init_converge_window;
  const auto [lo, hi] = std::minmax_element(first, losses.end());
  double mean = 0.0;
  for (auto it = first; it != losses.end(); ++it) mean += *it;
  mean /= cfg.init_converge_window;
  return (*hi - *lo) < cfg.init_converge_tol * std::max(std::abs(mean), 1e-12);
}

}  // namespace

ModelParams ala_local_init(AlaState& state, const ModelArch& arch, const ModelParams& local,
                           const ModelParams& global, const Dataset& train_data, int round_t,
                           const AlaConfig& cfg, std::uint64_t seed, AlaRoundStats* stats) {
  if (round_t < 1) throw InvalidArgument("ala_local_init: round must be >= 1");
  require_compatible(local, global, "ala_local_init");
  require_weights_cover_top(local, state.weights);

  AlaRoundStats local_stats;
  AlaRoundStats& st = stats ? *stats : local_stats;
  st = AlaRoundStats{};
  st.round = round_t;

  if (round_t < cfg.init_stage_round) {
    // Every client still holds the broadcast initial model; nothing to learn.
    fill_weight_summary(state.weights, st);
    return global;
  }

  const bool nothing_to_learn = state.weights.empty() || cfg.eta == 0.0 || train_data.size() == 0;
  if (nothing_to_learn) {
    state.initialized = true;
    fill_weight_summary(state.weights, st);
    return interpolate(local, global, state.weights);
  }

  const AggregationWeights before = state.weights;
  const Dataset sampled =
      sample_fraction(train_data, cfg.s_percent, derive_seed(seed, {tag(Stream::kAlaSample),
                                                                    static_cast<std::uint64_t>(round_t)}));
  st.active = true;
  st.initial_stage = !state.initialized;
  const int max_epochs = st.initial_stage ? cfg.init_max_epochs : 1;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    double loss = 0.0;
    try {
      loss = ala_weight_epoch(arch, local, global, state.weights, sampled, cfg.batch_size, cfg.eta);
    } catch (const NumericError& e) {
      throw NumericError("weight learning diverged at round " + std::to_string(round_t) +
                         ", epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!st.epoch_losses.empty() && loss > st.epoch_losses.back()) ++st.loss_increases;
    st.epoch_losses.push_back(loss);
    if (st.initial_stage && converged(st.epoch_losses, cfg)) break;
  }
  state.initialized = true;

  st.epochs = static_cast<int>(st.epoch_losses.size());
  st.final_loss = st.epoch_losses.back();
  st.drift = ala_weight_drift(AlaState{before, false}, state);
  fill_weight_summary(state.weights, st);
  return interpolate(local, global, state.weights);
}

EquivalenceResult ala_equivalence_check(const AlaState& state, const ModelArch& arch,
                                        const ModelParams& local, const ModelParams& global,
                                        const Batch& batch, double eta) {
  if (state.weights.tensors.size() != local.layers.size())
    throw InvalidArgument("ala_equivalence_check: weights must cover every layer");
  const ModelParams init = interpolate(local, global, state.weights);

  EquivalenceResult out;
  {
    AggregationWeights w = state.weights;
    auto [loss, grad] = ala_weight_gradient(arch, local, global, w, batch);
    ala_weight_step(w, grad, eta, /*clip=*/false);
    out.via_weights = interpolate(local, global, w);
  }
  {
    LossResult fwd = forward_loss(arch, init, batch);
    const ModelParams g = backward(init, fwd.cache);
    out.direct = init;
    for (std::size_t i = 0; i < init.layers.size(); ++i) {
      const auto& gl = global.layers[i].data;
      const auto& lo = local.layers[i].data;
      auto& d = out.direct.layers[i].data;
      for (std::size_t q = 0; q < d.size(); ++q) {
        const double update = gl[q] - lo[q];
        d[q] -= eta * update * update * g.layers[i].data[q];
      }
    }
  }
  return out;
}

double ala_weight_drift(const AlaState& before, const AlaState& after) {
  if (before.weights.tensors.size() != after.weights.tensors.size())
    throw InvalidArgument("ala_weight_drift: weight sets differ in size");
  double drift = 0.0;
  for (std::size_t i = 0; i < before.weights.tensors.size(); ++i) {
    const auto& a = before.weights.tensors[i];
    const auto& b = after.weights.tensors[i];
    require_same_shape(a, b, "ala_weight_drift");
    for (std::size_t q = 0; q < a.size(); ++q) drift = std::max(drift, std::abs(b.data[q] - a.data[q]));
  }
  return drift;
}

}  // namespace fedala
