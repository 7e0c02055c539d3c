#include "fedala/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"

namespace fedala {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kFedAvg:
      return "fedavg";
    case StrategyKind::kFedProx:
      return "fedprox";
    case StrategyKind::kFedAvgC:
      return "fedavg_c";
    case StrategyKind::kFedAla:
      return "fedala";
  }
  return "fedavg";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "fedavg") return StrategyKind::kFedAvg;
  if (s == "fedprox") return StrategyKind::kFedProx;
  if (s == "fedavg_c") return StrategyKind::kFedAvgC;
  if (s == "fedala") return StrategyKind::kFedAla;
  throw InvalidArgument("unknown strategy '" + s + "'");
}

std::string StrategyConfig::label() const {
  std::string s = to_string(kind);
  if (attach_ala && kind != StrategyKind::kFedAla) s += "+ala";
  return s;
}

std::size_t FlConfig::participants_per_round() const {
  const double exact = join_ratio * static_cast<double>(num_clients);
  const auto m = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(m, 1, num_clients);
}

void FlConfig::validate(const ModelArch& arch) const {
  if (num_clients == 0) throw ConfigError("num_clients", "must be positive");
  if (!(join_ratio > 0.0 && join_ratio <= 1.0)) throw ConfigError("join_ratio", "must be in (0, 1]");
  if (rounds < 1) throw ConfigError("rounds", "must be positive");
  if (!(local_lr > 0.0) || !std::isfinite(local_lr)) throw ConfigError("local_lr", "must be positive");
  if (local_epochs < 1) throw ConfigError("local_epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(strategy.prox_mu >= 0.0)) throw ConfigError("prox_mu", "must be non-negative");
  if (strategy.finetune_epochs < 0) throw ConfigError("finetune_epochs", "must be non-negative");
  if (strategy.attach_ala && strategy.kind == StrategyKind::kFedAla)
    throw ConfigError("attach_ala", "fedala already uses adaptive local aggregation");
  if (strategy.uses_ala()) {
    if (!ala) throw ConfigError("ala", "strategy " + strategy.label() + " requires an ala section");
    ala->validate();
    if (ala->p > arch.num_logical_layers())
      throw ConfigError("p", "layer range " + std::to_string(ala->p) + " exceeds the " +
                                 std::to_string(arch.num_logical_layers()) + " layers of " +
                                 to_string(arch.kind));
  }
}

std::vector<ClientState> make_clients(std::vector<ClientSplit> splits, const ModelParams& initial,
                                      const ModelArch& arch, const FlConfig& cfg) {
  std::size_t total = 0;
  for (const auto& s : splits) total += s.train.size();
  if (total == 0) throw InvalidArgument("make_clients: no training data");
  std::vector<ClientState> clients;
  clients.reserve(splits.size());
  for (std::size_t i = 0; i < splits.size(); ++i) {
    ClientState c;
    c.id = static_cast<int>(i);
    c.k_weight = static_cast<double>(splits[i].train.size()) / static_cast<double>(total);
    c.split = std::move(splits[i]);
    c.local_model = initial;
    if (cfg.strategy.uses_ala()) {
      AlaConfig ala = *cfg.ala;
      c.ala_state = ala_init_state(arch, ala);
    }
    clients.push_back(std::move(c));
  }
  return clients;
}

std::vector<int> sample_participants(std::size_t num_clients, double join_ratio,
                                     std::uint64_t seed, int round_t) {
  FlConfig tmp;
  tmp.num_clients = num_clients;
  tmp.join_ratio = join_ratio;
  const std::size_t m = tmp.participants_per_round();
  std::vector<int> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  if (m < num_clients) {
    Rng rng(derive_seed(seed, {tag(Stream::kClientSampling), static_cast<std::uint64_t>(round_t)}));
    for (std::size_t i = 0; i < m; ++i) std::swap(ids[i], ids[i + rng.uniform_index(num_clients - i)]);
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

std::vector<double> renormalized_weights(std::span<const double> k) {
  double total = 0.0;
  for (double x : k) total += x;
  if (!(total > 0.0)) throw InvalidArgument("renormalized_weights: weights sum to zero");
  std::vector<double> w(k.size());
  double head = 0.0;
  for (std::size_t i = 0; i + 1 < k.size(); ++i) {
    w[i] = k[i] / total;
    head += w[i];
  }
  // The last weight absorbs the rounding residual so the in-order sum lands
  // within an ulp of 1 instead of drifting with the participant count.
  w.back() = std::max(0.0, 1.0 - head);
  return w;
}

ModelParams aggregate(std::span<const ModelParams* const> models, std::span<const double> weights) {
  if (models.empty()) throw InvalidArgument("aggregate: no models");
  if (models.size() != weights.size()) throw InvalidArgument("aggregate: weight count mismatch");
  ModelParams out = models[0]->zeros_like();
  for (std::size_t i = 0; i < models.size(); ++i) {
    require_compatible(out, *models[i], "aggregate");
    for (std::size_t l = 0; l < out.layers.size(); ++l)
      saxpy_inplace(out.layers[l], weights[i], models[i]->layers[l]);
  }
  return out;
}

namespace {

// One pass of shuffled mini-batch SGD; `prox_ref` adds mu * (theta - ref).
void sgd_epoch(ModelParams& model, const Dataset& data, const ModelArch& arch, double lr,
               std::size_t batch_size, Rng& rng, const ModelParams* prox_ref, double mu) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const Batch batch =
        make_batch(data, std::span<const std::size_t>(order).subspan(start, end - start));
    LossResult fwd = forward_loss(arch, model, batch);
    ModelParams grad = backward(model, fwd.cache);
    if (prox_ref && mu != 0.0) {
      for (std::size_t l = 0; l < grad.layers.size(); ++l) {
        auto& g = grad.layers[l].data;
        const auto& th = model.layers[l].data;
        const auto& ref = prox_ref->layers[l].data;
        for (std::size_t q = 0; q < g.size(); ++q) g[q] += mu * (th[q] - ref[q]);
      }
    }
    sgd_step(model, grad, lr);
  }
}

std::uint64_t client_seed(std::uint64_t seed, Stream stream, int round_t, int client_id) {
  return derive_seed(seed, {tag(stream), static_cast<std::uint64_t>(round_t),
                            static_cast<std::uint64_t>(client_id)});
}

[[noreturn]] void rethrow_with_context(std::exception_ptr ep, const std::string& prefix) {
  try {
    std::rethrow_exception(ep);
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const InvalidState& e) {
    throw InvalidState(prefix + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since)
      .count();
}

EvalResult eval_on(const ModelArch& arch, const ModelParams& m, const Dataset& d) {
  return evaluate(arch, m, d.features, d.labels);
}

}  // namespace

ModelParams local_init(ClientState& client, const ModelArch& arch, const ModelParams& global,
                       const FlConfig& cfg, int round_t, AlaRoundStats* ala_stats) {
  require_compatible(client.local_model, global, "local_init");
  ModelParams init;
  if (cfg.strategy.uses_ala()) {
    if (!client.ala_state) throw InvalidState("local_init: client has no ALA state");
    AlaConfig ala = *cfg.ala;
    ala.batch_size = cfg.batch_size;
    const std::uint64_t seed = derive_seed(cfg.seed, {tag(Stream::kAlaSample),
                                                      static_cast<std::uint64_t>(client.id)});
    init = ala_local_init(*client.ala_state, arch, client.local_model, global, client.split.train,
                          round_t, ala, seed, ala_stats);
  } else {
    init = global;
  }
  if (cfg.strategy.kind == StrategyKind::kFedAvgC && cfg.strategy.finetune_epochs > 0 &&
      client.split.train.size() > 0) {
    Rng rng(client_seed(cfg.seed, Stream::kFinetune, round_t, client.id));
    for (int e = 0; e < cfg.strategy.finetune_epochs; ++e)
      sgd_epoch(init, client.split.train, arch, cfg.local_lr, cfg.batch_size, rng, nullptr, 0.0);
  }
  return init;
}

ModelParams local_train(const ModelParams& model, const ClientSplit& split, const ModelArch& arch,
                        const FlConfig& cfg, const ModelParams& global_ref, std::uint64_t seed) {
  if (cfg.local_epochs < 1) throw InvalidArgument("local_train: local_epochs must be >= 1");
  ModelParams out = model;
  if (split.train.size() == 0) return out;
  Rng rng(seed);
  const bool prox = cfg.strategy.kind == StrategyKind::kFedProx;
  for (int e = 0; e < cfg.local_epochs; ++e)
    sgd_epoch(out, split.train, arch, cfg.local_lr, cfg.batch_size, rng, prox ? &global_ref : nullptr,
              cfg.strategy.prox_mu);
  return out;
}

std::int64_t comm_params_per_participant(const ModelParams& model) {
  return 2 * static_cast<std::int64_t>(model.num_parameters());
}

std::pair<ModelParams, RoundResult> run_round(const ModelParams& server_model,
                                              std::vector<ClientState>& clients,
                                              const ModelArch& arch, const FlConfig& cfg,
                                              int round_t, const RoundOptions& options) {
  if (round_t < 1) throw InvalidArgument("run_round: round must be >= 1");
  if (clients.size() != cfg.num_clients)
    throw InvalidArgument("run_round: client count does not match num_clients");

  RoundResult result;
  result.round = round_t;
  result.participants = sample_participants(cfg.num_clients, cfg.join_ratio, cfg.seed, round_t);
  const std::size_t m = result.participants.size();

  std::vector<ModelParams> trained(m);
  std::vector<ClientRoundOutcome> outcomes(m);
  std::vector<std::exception_ptr> errors(m);

  auto work = [&](std::size_t slot) {
    const auto start = std::chrono::steady_clock::now();
    ClientState& client = clients[static_cast<std::size_t>(result.participants[slot])];
    ClientRoundOutcome& out = outcomes[slot];
    out.client_id = client.id;
    try {
      AlaRoundStats stats;
      ModelParams init = local_init(client, arch, server_model, cfg, round_t, &stats);
      if (cfg.strategy.uses_ala()) out.ala = stats;
      if (options.evaluate) {
        out.init_train = eval_on(arch, init, client.split.train);
        out.init_test = eval_on(arch, init, client.split.test);
      }
      ModelParams model = local_train(init, client.split, arch, cfg, server_model,
                                      client_seed(cfg.seed, Stream::kLocalTrain, round_t, client.id));
      if (options.evaluate) {
        out.trained_train = eval_on(arch, model, client.split.train);
        out.trained_test = eval_on(arch, model, client.split.test);
      }
      client.local_model = model;
      trained[slot] = std::move(model);
    } catch (...) {
      errors[slot] = std::current_exception();
    }
    if (options.record_wall_time) out.wall_ms = elapsed_ms(start);
  };

  const std::size_t n_threads = std::min(cfg.threads, m);
  if (n_threads <= 1) {
    for (std::size_t s = 0; s < m; ++s) work(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t s = next.fetch_add(1); s < m; s = next.fetch_add(1)) work(s);
      });
  }
  for (std::size_t s = 0; s < m; ++s)
    if (errors[s])
      rethrow_with_context(errors[s], "round " + std::to_string(round_t) + ", client " +
                                          std::to_string(result.participants[s]) + ": ");

  std::vector<double> k(m);
  std::vector<const ModelParams*> uploads(m);
  for (std::size_t s = 0; s < m; ++s) {
    k[s] = clients[static_cast<std::size_t>(result.participants[s])].k_weight;
    uploads[s] = &trained[s];
  }
  ModelParams new_server = aggregate(uploads, renormalized_weights(k));

  const std::int64_t comm = comm_params_per_participant(server_model);
  for (std::size_t s = 0; s < m; ++s) {
    const auto& o = outcomes[s];
    MetricsRecord init_row;
    init_row.round = round_t;
    init_row.client_id = o.client_id;
    init_row.phase = Phase::kInit;
    init_row.loss = o.init_train.loss;
    init_row.accuracy = o.init_test.accuracy;
    if (o.ala) {
      init_row.ala_epochs = o.ala->epochs;
      init_row.ala_drift = o.ala->drift;
    }
    MetricsRecord trained_row;
    trained_row.round = round_t;
    trained_row.client_id = o.client_id;
    trained_row.phase = Phase::kTrained;
    trained_row.loss = o.trained_train.loss;
    trained_row.accuracy = o.trained_test.accuracy;
    trained_row.comm_params = comm;
    trained_row.wall_ms = o.wall_ms;
    result.per_client_metrics.push_back(init_row);
    result.per_client_metrics.push_back(trained_row);
    result.uploaded.emplace_back(o.client_id, std::move(trained[s]));
  }
  result.outcomes = std::move(outcomes);
  return {std::move(new_server), std::move(result)};
}

ExperimentReport run_experiment(const FlConfig& cfg, const ModelArch& arch,
                                std::vector<ClientSplit> splits, const ExperimentOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(arch);
  if (splits.size() != cfg.num_clients)
    throw InvalidArgument("run_experiment: got " + std::to_string(splits.size()) + " client splits for " +
                          std::to_string(cfg.num_clients) + " clients");

  // Union of client test sets for the traditional (global model) metric.
  Dataset union_test;
  union_test.input_dim = arch.input_dim;
  union_test.num_classes = arch.num_classes;
  for (const auto& s : splits) {
    union_test.features.insert(union_test.features.end(), s.test.features.begin(), s.test.features.end());
    union_test.labels.insert(union_test.labels.end(), s.test.labels.begin(), s.test.labels.end());
  }

  ModelParams server = init_params(arch, derive_seed(cfg.seed, {tag(Stream::kModelInit)}));
  std::vector<ClientState> clients = make_clients(std::move(splits), server, arch, cfg);

  ExperimentReport report;
  report.run_name = options.run_name;
  report.repeat = options.repeat;
  report.strategy = cfg.strategy.label();

  std::vector<double> best(cfg.num_clients, 0.0);
  std::vector<bool> seen(cfg.num_clients, false);
  report.best_global_accuracy = 0.0;

  for (int t = 1; t <= cfg.rounds; ++t) {
    const auto round_start = std::chrono::steady_clock::now();
    RoundOptions ro;
    ro.record_wall_time = options.record_wall_time;
    auto [next_server, rr] = run_round(server, clients, arch, cfg, t, ro);
    server = std::move(next_server);

    RoundSummary sum;
    sum.round = t;
    std::vector<double> k;
    for (int id : rr.participants) k.push_back(clients[static_cast<std::size_t>(id)].k_weight);
    const std::vector<double> w = renormalized_weights(k);
    for (std::size_t s = 0; s < rr.outcomes.size(); ++s) {
      const auto& o = rr.outcomes[s];
      sum.objective_init += w[s] * o.init_train.loss;
      sum.objective_trained += w[s] * o.trained_train.loss;
      sum.mean_init_accuracy += o.init_test.accuracy;
      sum.mean_trained_accuracy += o.trained_test.accuracy;
      const auto id = static_cast<std::size_t>(o.client_id);
      if (!seen[id] || o.init_test.accuracy > best[id]) best[id] = o.init_test.accuracy;
      seen[id] = true;
      if (o.ala && o.ala->active) {
        AlaTelemetryRecord a;
        a.run_name = options.run_name;
        a.repeat = options.repeat;
        a.round = t;
        a.client_id = o.client_id;
        a.initial_stage = o.ala->initial_stage;
        a.epochs = o.ala->epochs;
        a.final_loss = o.ala->final_loss;
        a.drift = o.ala->drift;
        a.mean_weight = o.ala->mean_weight;
        a.frac_at_zero = o.ala->frac_at_zero;
        a.frac_at_one = o.ala->frac_at_one;
        a.loss_increases = o.ala->loss_increases;
        report.ala_records.push_back(std::move(a));
      }
    }
    const auto n_part = static_cast<double>(rr.outcomes.size());
    sum.mean_init_accuracy /= n_part;
    sum.mean_trained_accuracy /= n_part;

    const EvalResult server_eval = evaluate(arch, server, union_test.features, union_test.labels);
    sum.server_loss = server_eval.loss;
    sum.server_accuracy = server_eval.accuracy;
    sum.comm_params = comm_params_per_participant(server) * static_cast<std::int64_t>(rr.participants.size());
    report.best_global_accuracy = std::max(report.best_global_accuracy, server_eval.accuracy);
    report.total_comm_params += sum.comm_params;

    for (auto& r : rr.per_client_metrics) {
      r.run_name = options.run_name;
      r.repeat = options.repeat;
      report.records.push_back(std::move(r));
    }
    MetricsRecord g_init{options.run_name, options.repeat, t, -1, Phase::kInit, sum.objective_init,
                         sum.mean_init_accuracy};
    MetricsRecord g_trained{options.run_name, options.repeat, t, -1, Phase::kTrained,
                            sum.objective_trained, sum.mean_trained_accuracy};
    MetricsRecord srv{options.run_name, options.repeat, t, -1, Phase::kServer, sum.server_loss,
                      sum.server_accuracy, sum.comm_params};
    if (options.record_wall_time) srv.wall_ms = elapsed_ms(round_start);
    report.records.push_back(g_init);
    report.records.push_back(g_trained);
    report.records.push_back(srv);
    report.rounds.push_back(sum);
  }

  double acc = 0.0;
  std::size_t n_seen = 0;
  for (std::size_t i = 0; i < best.size(); ++i)
    if (seen[i]) {
      acc += best[i];
      ++n_seen;
    }
  report.avg_best_local_accuracy = n_seen ? acc / static_cast<double>(n_seen) : 0.0;
  report.wall_ms = elapsed_ms(start);
  return report;
}

}  // namespace fedala
