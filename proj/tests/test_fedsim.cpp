#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qfl/errors.hpp"
#include "qfl/fedsim.hpp"
#include "support.hpp"

namespace qfl {
namespace {

constexpr double kPi = std::numbers::pi;

ServerNode make_server(AnsatzSpec spec, std::uint64_t seed) {
  ServerNode s;
  s.spec = spec;
  s.theta = random_theta(spec.num_params(), seed);
  s.seed = seed;
  return s;
}

std::vector<ClientNode> make_clients(const ReferenceTask& task, std::optional<std::uint64_t> shots = std::nullopt) {
  std::vector<ClientNode> clients;
  for (std::size_t c = 0; c < task.client_data.size(); ++c) clients.push_back({c, task.client_data[c], shots, 42});
  return clients;
}

std::vector<double> mean_exact_gradient(const AnsatzSpec& spec, const ParamVector& theta,
                                        const std::vector<LabeledExample>& data) {
  std::vector<double> g(spec.num_params(), 0.0);
  for (const LabeledExample& ex : data) {
    const std::vector<double> e = exact_gradient(spec, theta, ex);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += e[i] / static_cast<double>(data.size());
  }
  return g;
}

TEST(ServerPrepare, SingleModeCounts) {
  const ServerNode server = make_server({2, 2}, 1);
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 3, ledger);
  EXPECT_EQ(states.size(), 4u);
  EXPECT_EQ(ledger.current().qubits_downlink, 3u * 4u * 4u);
  EXPECT_EQ(ledger.current().states_sent, 12u);
  EXPECT_EQ(ledger.current().classical_equivalent_bits, 12u * 16u * 64u);
}

TEST(ServerPrepare, IndexedModeCounts) {
  ServerNode server = make_server({2, 2}, 1);
  server.shift_mode = ShiftMode::indexed;
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 1, ledger);
  ASSERT_EQ(states.size(), 1u);
  EXPECT_EQ(states[0].program.num_qubits(), 2u * 2u + 2u);
  EXPECT_EQ(ledger.current().qubits_downlink, 6u);
}

TEST(ServerPrepare, MultiModeSingleState) {
  ServerNode server = make_server({2, 2}, 1);
  server.shift_mode = ShiftMode::multi;
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 2, ledger);
  ASSERT_EQ(states.size(), 1u);
  EXPECT_EQ(states[0].spec.indices.size(), 4u);
  EXPECT_EQ(ledger.current().qubits_downlink, 8u);
}

TEST(SelectParameters, PartialIsDeterministic) {
  ServerNode server = make_server({2, 2}, 9);
  server.partial_fraction = 0.5;
  const auto first = select_parameters(server, 3);
  EXPECT_EQ(first.size(), 2u);
  EXPECT_TRUE(std::is_sorted(first.begin(), first.end()));
  for (int rerun = 0; rerun < 5; ++rerun) EXPECT_EQ(select_parameters(server, 3), first);
  bool varies = false;
  for (std::size_t round = 0; round < 20; ++round) varies = varies || select_parameters(server, round) != first;
  EXPECT_TRUE(varies);
  server.partial_fraction = 0.1;
  EXPECT_THROW(select_parameters(server, 0), std::invalid_argument);
}

TEST(ClientProcess, SingleExampleMatchesExactGradient) {
  std::mt19937_64 rng(3);
  for (ShiftMode mode : {ShiftMode::single, ShiftMode::indexed}) {
    ServerNode server = make_server({2, 2}, 3);
    server.shift_mode = mode;
    const LabeledExample ex{testing::random_state(4, rng), testing::random_state(4, rng)};
    const ClientNode client{0, {ex}, std::nullopt, 1};
    CommLedger ledger;
    ledger.open_round();
    const ClientResult r = client_process(client, server_prepare_round(server, 0, 1, ledger), 4, 0);
    ASSERT_TRUE(r.message);
    const std::vector<double> g = exact_gradient(server.spec, server.theta, ex);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.message->values[i], g[i], 1e-8);
    EXPECT_EQ(r.retransmissions, 0u);
  }
}

TEST(ClientProcess, PartialLeavesOthersZero) {
  std::mt19937_64 rng(4);
  ServerNode server = make_server({2, 2}, 4);
  server.partial_fraction = 0.5;
  const LabeledExample ex{testing::random_state(4, rng), testing::random_state(4, rng)};
  CommLedger ledger;
  ledger.open_round();
  const ClientResult r = client_process({0, {ex}, std::nullopt, 1}, server_prepare_round(server, 2, 1, ledger), 4, 2);
  const auto chosen = select_parameters(server, 2);
  const std::vector<double> g = exact_gradient(server.spec, server.theta, ex);
  for (std::size_t i = 0; i < 4; ++i) {
    const bool selected = std::find(chosen.begin(), chosen.end(), i) != chosen.end();
    EXPECT_NEAR(r.message->values[i], selected ? g[i] : 0.0, 1e-8);
  }
}

TEST(ClientProcess, IdenticalBatchEqualsSingle) {
  std::mt19937_64 rng(5);
  const ServerNode server = make_server({2, 1}, 5);
  const LabeledExample ex{testing::random_state(4, rng), testing::random_state(4, rng)};
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 1, ledger);
  const auto one = client_process({0, {ex}, std::nullopt, 1}, states, 2, 0);
  const auto three = client_process({0, {ex, ex, ex}, std::nullopt, 1}, states, 2, 0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(one.message->values[i], three.message->values[i], 1e-12);
}

TEST(ClientProcess, ShotModeWithinThreeSigma) {
  std::mt19937_64 rng(6);
  const ServerNode server = make_server({2, 2}, 6);
  const LabeledExample ex{testing::random_state(4, rng), testing::random_state(4, rng)};
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 1, ledger);
  const ClientResult r = client_process({0, {ex}, 100'000, 77}, states, 4, 0);
  ASSERT_TRUE(r.message);
  const std::vector<double> g = exact_gradient(server.spec, server.theta, ex);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GT(r.message->std_errors[i], 0.0);
    EXPECT_NEAR(r.message->values[i], g[i], 3 * r.message->std_errors[i]);
  }
  EXPECT_EQ(r.message->shots, 4u * 100'000u);
}

TEST(ClientProcess, CapExhaustionDropsClient) {
  std::mt19937_64 rng(7);
  const ServerNode server = make_server({2, 2}, 7);
  std::vector<LabeledExample> data;
  for (int i = 0; i < 4; ++i) data.push_back({testing::random_state(4, rng), testing::random_state(4, rng)});
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 1, ledger);
  const ClientResult r = client_process({0, data, 1000, 1}, states, 4, 0, 1);
  EXPECT_FALSE(r.message);
  EXPECT_GE(r.retransmissions, 1u);
}

TEST(Retransmission, AlwaysOneCopyAtCertainty) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto r = simulate_retransmission(1.0, rng);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.copies, 1u);
  }
}

TEST(Retransmission, GeometricMean) {
  std::mt19937_64 rng(9);
  const int trials = 10'000;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) total += static_cast<double>(simulate_retransmission(0.25, rng).copies);
  EXPECT_NEAR(total / trials, 4.0, 0.2);
}

TEST(Retransmission, ImpossibleHitsCap) {
  std::mt19937_64 rng(10);
  const auto r = simulate_retransmission(0.0, rng, 16);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.copies, 16u);
  EXPECT_THROW(simulate_retransmission(1.5, rng), std::invalid_argument);
}

TEST(Aggregate, FedSgdMatchesCentralizedStep) {
  const AnsatzSpec spec{2, 2};
  const ReferenceTask task = make_reference_task(spec, 3, 1, 11);
  const ServerNode server = make_server(spec, 11);
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 3, ledger);
  std::vector<GradientMessage> messages;
  std::vector<LabeledExample> pooled;
  for (const ClientNode& c : make_clients(task)) {
    messages.push_back(*client_process(c, states, 4, 0).message);
    pooled.insert(pooled.end(), c.dataset.begin(), c.dataset.end());
  }
  const ParamVector next = aggregate_fedsgd(server, messages);
  const std::vector<double> g = mean_exact_gradient(spec, server.theta, pooled);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(next[i], server.theta[i] - server.learning_rate * 3.0 * g[i], 1e-10);
  }
}

TEST(Aggregate, ZeroGradientAndSign) {
  ServerNode server = make_server({1, 1}, 12);
  GradientMessage zero{0, {0.0}, {0.0}, 5, 0, 0};
  EXPECT_EQ(aggregate_fedsgd(server, {zero}), server.theta);
  GradientMessage positive{0, {0.3}, {0.0}, 1, 0, 0};
  EXPECT_LT(aggregate_fedsgd(server, {positive})[0], server.theta[0]);
  EXPECT_THROW(aggregate_fedsgd(server, {}), std::invalid_argument);
  EXPECT_THROW(aggregate_fedavg(server, {}), std::invalid_argument);
}

TEST(Aggregate, FedAvgIdentities) {
  ServerNode server = make_server({2, 1}, 13);
  const std::vector<double> g{0.4, -0.7};
  const std::size_t clients = 3, per_client = 4;
  std::vector<GradientMessage> same;
  for (std::size_t c = 0; c < clients; ++c) same.push_back({c, g, {0, 0}, per_client, 0, 0});
  const ParamVector avg = aggregate_fedavg(server, same);
  ServerNode scaled = server;
  scaled.learning_rate = server.learning_rate / static_cast<double>(clients * per_client);
  const ParamVector sgd = aggregate_fedsgd(scaled, same);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(avg[i], sgd[i], 1e-12);

  const ParamVector one = aggregate_fedavg(server, {{0, g, {0, 0}, 7, 0, 0}});
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(one[i], server.theta[i] - server.learning_rate * g[i], 1e-12);

  // Unequal sizes: the weights n_c / n sum to one, so a zero step is a fixed point.
  const std::vector<GradientMessage> uneven{{0, {0, 0}, {0, 0}, 1, 0, 0}, {1, {0, 0}, {0, 0}, 5, 0, 0}};
  const ParamVector fixed = aggregate_fedavg(server, uneven);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(fixed[i], server.theta[i], 1e-12);
}

TEST(Aggregate, DroppedClientRemovesExactlyItsContribution) {
  const AnsatzSpec spec{2, 2};
  const ReferenceTask task = make_reference_task(spec, 3, 2, 14);
  const ServerNode server = make_server(spec, 14);
  CommLedger ledger;
  ledger.open_round();
  const auto states = server_prepare_round(server, 0, 3, ledger);
  std::vector<GradientMessage> messages;
  for (const ClientNode& c : make_clients(task)) messages.push_back(*client_process(c, states, 4, 0).message);
  const ParamVector all = aggregate_fedsgd(server, messages);
  const std::vector<GradientMessage> without(messages.begin(), messages.begin() + 2);
  const ParamVector partial = aggregate_fedsgd(server, without);
  const GradientMessage& dropped = messages[2];
  for (std::size_t i = 0; i < 4; ++i) {
    const double contribution = server.learning_rate * static_cast<double>(dropped.sample_count) * dropped.values[i];
    EXPECT_NEAR(partial[i] - all[i], contribution, 1e-12);
  }
}

TrainingConfig reference_like(std::size_t rounds) {
  const AnsatzSpec spec{2, 2};
  const ReferenceTask task = make_reference_task(spec, 3, 4, 42);
  TrainingConfig cfg;
  cfg.server = make_server(spec, 42);
  cfg.clients = make_clients(task);
  cfg.rounds = rounds;
  return cfg;
}

TEST(RunTraining, ZeroRounds) {
  const TrainingResult r = run_training(reference_like(0));
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.ledger.totals(), LedgerEntry{});
}

TEST(RunTraining, Deterministic) {
  TrainingConfig cfg = reference_like(30);
  cfg.clients = make_clients(make_reference_task(cfg.server.spec, 3, 4, 42), 2000);
  const TrainingResult a = run_training(cfg);
  const TrainingResult b = run_training(cfg);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].theta_after, b.records[k].theta_after);
    EXPECT_EQ(a.records[k].mean_loss, b.records[k].mean_loss);
    EXPECT_EQ(a.records[k].ledger, b.records[k].ledger);
  }
  cfg.parallel_clients = false;
  const TrainingResult serial = run_training(cfg);
  EXPECT_EQ(serial.final_theta, a.final_theta);
}

TEST(RunTraining, LedgerConservation) {
  TrainingConfig cfg = reference_like(10);
  cfg.clients = make_clients(make_reference_task(cfg.server.spec, 3, 4, 42), 1000);
  const TrainingResult r = run_training(cfg);
  const LedgerEntry totals = r.ledger.totals();
  LedgerEntry summed;
  for (const RoundRecord& rec : r.records) summed += rec.ledger;
  EXPECT_EQ(totals, summed);
  EXPECT_EQ(r.records.back().ledger_cumulative, totals);
  // 4 states to 3 clients per round, each on 4 qubits, plus retransmitted copies.
  EXPECT_EQ(totals.states_sent, 10u * 4u * 3u);
  EXPECT_EQ(totals.qubits_downlink, (totals.states_sent + totals.retransmissions) * 4u);
  EXPECT_EQ(totals.qubits_uplink, 0u);
  EXPECT_GT(totals.retransmissions, 0u);
  for (std::size_t k = 1; k < r.records.size(); ++k) {
    EXPECT_GE(r.records[k].ledger_cumulative.qubits_downlink, r.records[k - 1].ledger_cumulative.qubits_downlink);
  }
}

TEST(RunTraining, RetransmissionsOnlyAddDownlink) {
  TrainingConfig exact = reference_like(5);
  TrainingConfig shots = exact;
  shots.clients = make_clients(make_reference_task(exact.server.spec, 3, 4, 42), 1000);
  shots.retransmission_cap = 1'000'000;
  const LedgerEntry e = run_training(exact).ledger.totals();
  const LedgerEntry s = run_training(shots).ledger.totals();
  EXPECT_EQ(e.classical_bits, s.classical_bits);
  EXPECT_EQ(e.qubits_uplink, s.qubits_uplink);
  EXPECT_EQ(s.qubits_downlink - e.qubits_downlink, s.retransmissions * 4u);
}

TEST(RunTraining, DroppedClientRecorded) {
  TrainingConfig cfg = reference_like(3);
  cfg.clients[1].shots = 1000;
  cfg.retransmission_cap = 1;
  const TrainingResult r = run_training(cfg);
  for (const RoundRecord& rec : r.records) EXPECT_EQ(rec.dropped_clients, std::vector<std::size_t>{1});
}

TEST(RunTraining, AllDroppedAborts) {
  TrainingConfig cfg = reference_like(3);
  for (ClientNode& c : cfg.clients) c.shots = 1000;
  cfg.retransmission_cap = 1;
  try {
    run_training(cfg);
    FAIL() << "expected RunFailure";
  } catch (const RunFailure& e) {
    EXPECT_EQ(e.round(), 0u);
  }
}

TEST(RunTraining, FedSgdTrajectoryMatchesCentralized) {
  const AnsatzSpec spec{2, 2};
  TrainingConfig cfg;
  cfg.server = make_server(spec, 15);
  cfg.clients = make_clients(make_reference_task(spec, 3, 1, 15));
  cfg.rounds = 50;
  const TrainingResult r = run_training(cfg);

  std::vector<LabeledExample> pooled;
  for (const ClientNode& c : cfg.clients) pooled.insert(pooled.end(), c.dataset.begin(), c.dataset.end());
  ParamVector theta = cfg.server.theta;
  for (const RoundRecord& rec : r.records) {
    const std::vector<double> g = mean_exact_gradient(spec, theta, pooled);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.server.learning_rate * 3.0 * g[i];
    for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_NEAR(rec.theta_after[i], theta[i], 1e-10);
  }
}

TEST(RunTraining, ReferenceLossDescends) {
  const TrainingResult r = run_training(reference_like(200));
  const double initial = r.records.front().mean_loss;
  EXPECT_LT(r.final_mean_loss, initial);
  std::size_t decreasing = 0;
  for (std::size_t k = 1; k < r.records.size(); ++k) decreasing += r.records[k].mean_loss < r.records[k - 1].mean_loss;
  decreasing += r.final_mean_loss < r.records.back().mean_loss;
  EXPECT_GE(static_cast<double>(decreasing), 0.8 * static_cast<double>(r.records.size()));
  EXPECT_LT(r.final_mean_loss + 1.0, 0.1 * (initial + 1.0));
}

TEST(LedgerReport, Arithmetic) {
  CommLedger ledger;
  ledger.open_round();
  ledger.debit_downlink(4, 4, 1, false);
  const LedgerSummary s = ledger_report(ledger, 4, 4);
  EXPECT_EQ(s.qubits_downlink, 4u);
  EXPECT_EQ(s.matrix_equivalent_bits, 1024u);
  EXPECT_EQ(s.parameter_equivalent_bits, 256u);
  EXPECT_DOUBLE_EQ(s.matrix_bits_per_qubit, 256.0);
}

TEST(LedgerReport, TotalsAreSumsOfRounds) {
  CommLedger ledger;
  std::mt19937_64 rng(16);
  LedgerEntry expected;
  for (int k = 0; k < 10; ++k) {
    ledger.open_round();
    const std::uint64_t copies = 1 + rng() % 5;
    ledger.debit_downlink(6, 4, copies, false);
    ledger.debit_downlink(6, 4, rng() % 3, true);
    ledger.debit_uplink(4);
    expected += ledger.current();
  }
  EXPECT_EQ(ledger.totals(), expected);
  EXPECT_EQ(ledger_report(ledger, 4, 4).qubits_downlink, expected.qubits_downlink);
}

TEST(ReferenceTask, RealizableLabels) {
  const AnsatzSpec spec{2, 2};
  const ReferenceTask task = make_reference_task(spec, 3, 4, 42);
  ASSERT_EQ(task.client_data.size(), 3u);
  for (const auto& data : task.client_data) {
    ASSERT_EQ(data.size(), 4u);
    for (const LabeledExample& ex : data) EXPECT_NEAR(loss(spec, task.hidden_theta, ex), 1.0, 1e-12);
  }
  EXPECT_NE(task.hidden_theta, random_theta(spec.num_params(), 42));
}

}  // namespace
}  // namespace qfl
