#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>
#include <set>

#include "fedala/error.hpp"
#include "fedala/rng.hpp"
#include "fedala/runtime.hpp"

namespace fedala {
namespace {

ModelParams two_param(double a, double b) {
  ModelParams p;
  p.layers.push_back(LayerTensor("w", {2}, std::vector<double>{a, b}));
  return p;
}

TEST(Aggregate, TwoClientsByHand) {
  const ModelParams a = two_param(4, -8), b = two_param(8, 4);
  const ModelParams* models[] = {&a, &b};
  const double k[] = {0.25, 0.75};
  // 0.25*4 + 0.75*8 = 7; 0.25*-8 + 0.75*4 = 1
  EXPECT_EQ(aggregate(models, k), two_param(7, 1));
}

TEST(Aggregate, ThreeClientsByHand) {
  const ModelParams a = two_param(10, -5), b = two_param(20, 10), c = two_param(30, 0);
  const ModelParams* models[] = {&a, &b, &c};
  const double k[] = {0.2, 0.3, 0.5};
  const ModelParams out = aggregate(models, k);
  // Same accumulation order as the server: ((0 + 0.2a) + 0.3b) + 0.5c.
  EXPECT_EQ(out.layers[0].data[0], ((0.0 + 0.2 * 10) + 0.3 * 20) + 0.5 * 30);
  EXPECT_EQ(out.layers[0].data[1], ((0.0 + 0.2 * -5) + 0.3 * 10) + 0.5 * 0);
  EXPECT_NEAR(out.layers[0].data[0], 23.0, 1e-14);
  EXPECT_NEAR(out.layers[0].data[1], 2.0, 1e-14);
}

TEST(Aggregate, Errors) {
  const ModelParams a = two_param(1, 2);
  ModelParams b;
  b.layers.push_back(LayerTensor("w", {3}));
  const ModelParams* both[] = {&a, &b};
  const double k2[] = {0.5, 0.5};
  const double k1[] = {1.0};
  EXPECT_THROW(aggregate(both, k2), InvalidArgument);
  EXPECT_THROW(aggregate(std::span<const ModelParams* const>(both, 1), std::span<const double>(k2)),
               InvalidArgument);
  EXPECT_THROW(aggregate({}, std::span<const double>(k1, 0)), InvalidArgument);
}

TEST(RenormalizedWeights, SumToOneWithinAnUlp) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> k(1 + trial % 20);
    for (auto& v : k) v = u(gen);
    double s = 0.0;
    for (double w : renormalized_weights(k)) s += w;
    EXPECT_LE(std::abs(s - 1.0), std::nextafter(1.0, 2.0) - 1.0) << "trial " << trial;
  }
  EXPECT_THROW(renormalized_weights(std::vector<double>{0.0, 0.0}), InvalidArgument);
}

TEST(SampleParticipants, HalfOfTwenty) {
  std::set<std::vector<int>> distinct;
  std::vector<int> hits(20, 0);
  for (int t = 1; t <= 200; ++t) {
    const auto ids = sample_participants(20, 0.5, 3, t);
    ASSERT_EQ(ids.size(), 10u);
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()).size(), 10u);
    for (int id : ids) ++hits[static_cast<std::size_t>(id)];
    distinct.insert(ids);
    EXPECT_EQ(ids, sample_participants(20, 0.5, 3, t));
  }
  EXPECT_GT(distinct.size(), 190u);
  // Each client joins ~100 of 200 rounds; 5 sigma is ~35.
  for (int h : hits) EXPECT_NEAR(h, 100, 35);
  EXPECT_EQ(sample_participants(20, 1.0, 3, 1).size(), 20u);
  EXPECT_EQ(sample_participants(20, 0.01, 3, 1).size(), 1u);
}

struct World {
  ModelArch arch;
  std::vector<ClientSplit> splits;
  ModelParams initial;

  explicit World(std::size_t n_clients, bool identical = false) {
    arch.kind = ArchKind::kMlp1Hidden;
    arch.input_dim = 4;
    arch.hidden_dim = 5;
    arch.num_classes = 3;
    const Dataset d = gen_synthetic(3, 4, 20 * n_clients, 2.0, 4);
    PartitionConfig pc;
    pc.num_clients = n_clients;
    pc.dirichlet_beta = 1.0;
    pc.seed = 2;
    const auto parts = partition(d, pc);
    for (std::size_t i = 0; i < n_clients; ++i)
      splits.push_back(split_client(identical ? parts[0] : parts[i], 0.25, 10 + (identical ? 0 : i)));
    initial = init_params(arch, 6);
  }
};

FlConfig config(StrategyKind kind, std::size_t n) {
  FlConfig c;
  c.num_clients = n;
  c.rounds = 3;
  c.strategy.kind = kind;
  c.seed = 8;
  if (kind == StrategyKind::kFedAla) c.ala = AlaConfig{};
  return c;
}

TEST(LocalInit, StrategyBehaviour) {
  World w(3);
  const ModelParams global = init_params(w.arch, 99);
  for (auto kind : {StrategyKind::kFedAvg, StrategyKind::kFedProx}) {
    FlConfig c = config(kind, 3);
    auto clients = make_clients(w.splits, w.initial, w.arch, c);
    EXPECT_EQ(local_init(clients[0], w.arch, global, c, 4), global);
  }
  FlConfig ala = config(StrategyKind::kFedAla, 3);
  auto ala_clients = make_clients(w.splits, w.initial, w.arch, ala);
  EXPECT_EQ(local_init(ala_clients[0], w.arch, global, ala, 1), global);
  EXPECT_NE(local_init(ala_clients[0], w.arch, global, ala, 2), global);

  FlConfig ft = config(StrategyKind::kFedAvgC, 3);
  ft.strategy.finetune_epochs = 0;
  auto ft_clients = make_clients(w.splits, w.initial, w.arch, ft);
  EXPECT_EQ(local_init(ft_clients[0], w.arch, global, ft, 4), global);
  ft.strategy.finetune_epochs = 1;
  EXPECT_NE(local_init(ft_clients[0], w.arch, global, ft, 4), global);
}

TEST(LocalTrain, ZeroRateAndZeroMu) {
  World w(2);
  FlConfig c = config(StrategyKind::kFedAvg, 2);
  const ModelParams ref = init_params(w.arch, 5);
  const ModelParams avg = local_train(w.initial, w.splits[0], w.arch, c, ref, 17);
  EXPECT_NE(avg, w.initial);
  FlConfig prox = config(StrategyKind::kFedProx, 2);
  prox.strategy.prox_mu = 0.0;
  EXPECT_EQ(local_train(w.initial, w.splits[0], w.arch, prox, ref, 17), avg);
  prox.strategy.prox_mu = 0.5;
  EXPECT_NE(local_train(w.initial, w.splits[0], w.arch, prox, ref, 17), avg);
  FlConfig still = c;
  still.local_lr = 0.0;
  EXPECT_EQ(local_train(w.initial, w.splits[0], w.arch, still, ref, 17), w.initial);
}

TEST(LocalTrain, SingleBatchMatchesHandStep) {
  // One batch covering the whole training set: shuffling cannot matter and
  // the result is one plain gradient step.
  World w(2);
  FlConfig c = config(StrategyKind::kFedAvg, 2);
  c.batch_size = 1000;
  c.local_lr = 0.1;
  const Dataset& train = w.splits[0].train;
  const auto fwd = forward_loss(w.arch, w.initial, as_batch(train));
  ModelParams expect = w.initial;
  sgd_step(expect, backward(w.initial, fwd.cache), 0.1);
  const ModelParams got = local_train(w.initial, w.splits[0], w.arch, c, w.initial, 3);
  for (std::size_t t = 0; t < got.layers.size(); ++t)
    for (std::size_t i = 0; i < got.layers[t].size(); ++i)
      EXPECT_NEAR(got.layers[t].data[i], expect.layers[t].data[i], 1e-14);
}

TEST(RunRound, IdenticalClientsAgreeWithServer) {
  World w(3, /*identical=*/true);
  FlConfig c = config(StrategyKind::kFedAvg, 3);
  c.batch_size = 1000;  // deterministic regardless of per-client shuffle seeds
  auto clients = make_clients(w.splits, w.initial, w.arch, c);
  auto [server, rr] = run_round(w.initial, clients, w.arch, c, 1);
  for (const auto& [id, model] : rr.uploaded)
    for (std::size_t t = 0; t < model.layers.size(); ++t)
      for (std::size_t i = 0; i < model.layers[t].size(); ++i)
        EXPECT_NEAR(server.layers[t].data[i], model.layers[t].data[i], 1e-15);
}

TEST(RunRound, UnsampledClientsUntouchedAndAggregateMatches) {
  World w(6);
  FlConfig c = config(StrategyKind::kFedAla, 6);
  c.join_ratio = 0.5;
  auto clients = make_clients(w.splits, w.initial, w.arch, c);
  const auto before = clients;
  auto [server, rr] = run_round(w.initial, clients, w.arch, c, 2);
  ASSERT_EQ(rr.participants.size(), 3u);
  std::vector<const ModelParams*> ups;
  std::vector<double> k;
  for (const auto& [id, m] : rr.uploaded) {
    ups.push_back(&m);
    k.push_back(clients[static_cast<std::size_t>(id)].k_weight);
  }
  EXPECT_EQ(server, aggregate(ups, renormalized_weights(k)));
  for (int i = 0; i < 6; ++i) {
    const bool joined =
        std::find(rr.participants.begin(), rr.participants.end(), i) != rr.participants.end();
    const auto& a = clients[static_cast<std::size_t>(i)];
    const auto& b = before[static_cast<std::size_t>(i)];
    EXPECT_EQ(a.local_model == b.local_model, !joined) << "client " << i;
    EXPECT_EQ(a.ala_state == b.ala_state, !joined) << "client " << i;
  }
}

TEST(RunRound, ThreadedMatchesSequential) {
  World w(5);
  FlConfig c = config(StrategyKind::kFedAla, 5);
  auto seq = make_clients(w.splits, w.initial, w.arch, c);
  auto par = seq;
  FlConfig cp = c;
  cp.threads = 4;
  ModelParams s1 = w.initial, s2 = w.initial;
  for (int t = 1; t <= 3; ++t) {
    s1 = run_round(s1, seq, w.arch, c, t).first;
    s2 = run_round(s2, par, w.arch, cp, t).first;
  }
  EXPECT_EQ(s1, s2);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(seq[i].ala_state, par[i].ala_state);
}

TEST(RunRound, ClientErrorCarriesContext) {
  World w(2);
  FlConfig c = config(StrategyKind::kFedAvg, 2);
  auto clients = make_clients(w.splits, w.initial, w.arch, c);
  clients[1].split.train.features[0] = NAN;
  try {
    run_round(w.initial, clients, w.arch, c, 4);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("round 4, client 1"), std::string::npos) << e.what();
  }
}

TEST(RunExperiment, HomogeneousSingleRoundMatchesCentralTraining) {
  World w(3, /*identical=*/true);
  FlConfig c = config(StrategyKind::kFedAvg, 3);
  c.rounds = 2;
  c.batch_size = 1000;
  const auto report = run_experiment(c, w.arch, w.splits);
  // Round 2's initialized model is the aggregate of identical round-1
  // uploads, i.e. one central full-batch step from the initial model.
  ModelParams central = init_params(w.arch, derive_seed(c.seed, {tag(Stream::kModelInit)}));
  const auto fwd = forward_loss(w.arch, central, as_batch(w.splits[0].train));
  const double acc0 = evaluate(w.arch, central, w.splits[0].test.features, w.splits[0].test.labels).accuracy;
  sgd_step(central, backward(central, fwd.cache), c.local_lr);
  const double acc1 = evaluate(w.arch, central, w.splits[0].test.features, w.splits[0].test.labels).accuracy;
  EXPECT_DOUBLE_EQ(report.avg_best_local_accuracy, std::max(acc0, acc1));
}

TEST(RunExperiment, DeterministicAndCommunicationMatchesFedAvg) {
  World w(4);
  FlConfig avg = config(StrategyKind::kFedAvg, 4);
  FlConfig ala = config(StrategyKind::kFedAla, 4);
  avg.join_ratio = ala.join_ratio = 0.5;
  const auto r1 = run_experiment(ala, w.arch, w.splits);
  const auto r2 = run_experiment(ala, w.arch, w.splits);
  EXPECT_EQ(r1.records, r2.records);
  EXPECT_EQ(r1.ala_records, r2.ala_records);
  const auto r3 = run_experiment(avg, w.arch, w.splits);
  EXPECT_EQ(r1.total_comm_params, r3.total_comm_params);
  const std::int64_t per = comm_params_per_participant(w.initial);
  EXPECT_EQ(per, 2 * static_cast<std::int64_t>(w.initial.num_parameters()));
  for (std::size_t t = 0; t < r1.rounds.size(); ++t) {
    EXPECT_EQ(r1.rounds[t].comm_params, r3.rounds[t].comm_params);
    EXPECT_EQ(r1.rounds[t].comm_params, 2 * per);
  }
}

TEST(RunExperiment, RecordLayoutPerRound) {
  World w(3);
  FlConfig c = config(StrategyKind::kFedAla, 3);
  const auto r = run_experiment(c, w.arch, w.splits);
  // 3 clients x (init, trained) + 3 summary rows, for 3 rounds.
  ASSERT_EQ(r.records.size(), 3u * 9);
  EXPECT_EQ(r.records[6].client_id, -1);
  EXPECT_EQ(r.records[6].phase, Phase::kInit);
  EXPECT_EQ(r.records[8].phase, Phase::kServer);
  // Round 1 is deactivated, so only rounds 2 and 3 produce telemetry.
  EXPECT_EQ(r.ala_records.size(), 6u);
  EXPECT_TRUE(r.ala_records[0].initial_stage);
  EXPECT_FALSE(r.ala_records[3].initial_stage);
}

TEST(FlConfig, ValidateNamesTheKey) {
  ModelArch arch;
  auto key_of = [&](const FlConfig& c) {
    try {
      c.validate(arch);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string();
  };
  FlConfig c;
  EXPECT_EQ(key_of(c), "");
  c.join_ratio = 1.5;
  EXPECT_EQ(key_of(c), "join_ratio");
  c = {};
  c.strategy.kind = StrategyKind::kFedAla;
  EXPECT_EQ(key_of(c), "ala");
  c.ala = AlaConfig{};
  c.ala->p = 2;
  EXPECT_EQ(key_of(c), "p");
  c = {};
  c.strategy.kind = StrategyKind::kFedAla;
  c.strategy.attach_ala = true;
  EXPECT_EQ(key_of(c), "attach_ala");
}

TEST(StrategyConfig, Labels) {
  StrategyConfig s;
  EXPECT_EQ(s.label(), "fedavg");
  s.kind = StrategyKind::kFedProx;
  s.attach_ala = true;
  EXPECT_EQ(s.label(), "fedprox+ala");
  EXPECT_TRUE(s.uses_ala());
  EXPECT_THROW(strategy_kind_from_string("fedsgd"), InvalidArgument);
}

}  // namespace
}  // namespace fedala
