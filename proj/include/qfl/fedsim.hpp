#pragma once

// Federated rounds: the server prepares shift states, each client runs them
// through its chip against its local data and returns gradient estimates,
// and the server aggregates with FedSGD or FedAvg. Every round is accounted
// for in a communication ledger.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "qfl/model.hpp"

namespace qfl {

enum class Strategy { fedsgd, fedavg };

inline constexpr std::size_t kDefaultRetransmissionCap = 64;

struct ClientNode {
  std::size_t id = 0;
  std::vector<LabeledExample> dataset;
  std::optional<std::uint64_t> shots;  // unset: exact expectation values
  std::uint64_t rng_seed = 0;
};

struct ServerNode {
  AnsatzSpec spec;
  ParamVector theta;
  double learning_rate = 0.05;
  Strategy strategy = Strategy::fedsgd;
  ShiftMode shift_mode = ShiftMode::single;
  double partial_fraction = 1.0;
  double shift = 3.141592653589793;
  std::uint64_t seed = 0;
};

struct GradientMessage {
  std::size_t client_id = 0;
  /// One entry per parameter, zero for parameters not shifted this round.
  /// Multi-mode states only reveal the sum of the shifted partials, which is
  /// reported on every shifted parameter (a step along their sum direction).
  std::vector<double> values;
  /// Standard error of each entry of `values`; zero in exact mode.
  std::vector<double> std_errors;
  std::size_t sample_count = 0;
  std::uint64_t shots = 0;
  std::uint64_t retransmissions = 0;
};

struct LedgerEntry {
  std::uint64_t states_sent = 0;
  std::uint64_t qubits_downlink = 0;
  std::uint64_t qubits_uplink = 0;
  std::uint64_t classical_bits = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t classical_equivalent_bits = 0;

  LedgerEntry& operator+=(const LedgerEntry& other);
  bool operator==(const LedgerEntry&) const = default;
};

/// Per-round communication counters. Cumulative totals never decrease.
class CommLedger {
 public:
  void open_round() { rounds_.emplace_back(); }
  LedgerEntry& current();
  const std::vector<LedgerEntry>& rounds() const noexcept { return rounds_; }
  LedgerEntry totals() const;

  /// Downlink of `copies` copies of a state on `qubits` qubits encoding an
  /// N x N operator; `retransmitted` copies count as retransmissions.
  void debit_downlink(std::uint64_t qubits, std::size_t dim, std::uint64_t copies, bool retransmitted);
  void debit_uplink(std::uint64_t classical_values);

 private:
  std::vector<LedgerEntry> rounds_;
};

/// Bits charged per classical real on any channel.
inline constexpr std::uint64_t kBitsPerReal = 64;

/// Parameter indices shifted in `round`, sorted. All of them when
/// partial_fraction is 1; otherwise floor(partial_fraction * m) drawn with a
/// generator seeded from (server.seed, round).
std::vector<std::size_t> select_parameters(const ServerNode& server, std::size_t round);

/// Shift states for one round. Debits the ledger for one copy of every state
/// to each of `num_clients` clients.
std::vector<ShiftState> server_prepare_round(const ServerNode& server, std::size_t round, std::size_t num_clients,
                                             CommLedger& ledger);

struct RetransmissionOutcome {
  bool success = false;
  std::uint64_t copies = 0;  // copies of the state consumed, including the successful one
};

/// Geometric trials with success probability `success_prob` until success or
/// until `cap` copies have failed.
RetransmissionOutcome simulate_retransmission(double success_prob, std::mt19937_64& rng,
                                              std::size_t cap = kDefaultRetransmissionCap);

struct ClientResult {
  std::optional<GradientMessage> message;  // empty when the client dropped
  std::uint64_t retransmissions = 0;       // failed copies, including those before a drop
};

/// Runs every state against every local example. In shot mode each (state,
/// example) pair first goes through simulate_retransmission; a pair that
/// exhausts the cap drops the client for the round.
ClientResult client_process(const ClientNode& client, const std::vector<ShiftState>& states, std::size_t num_params,
                            std::size_t round, std::size_t retransmission_cap = kDefaultRetransmissionCap);

/// theta - eta * sum over clients and their examples of the per-example gradient.
ParamVector aggregate_fedsgd(const ServerNode& server, const std::vector<GradientMessage>& messages);
/// sum_c (n_c / n) (theta - eta * g_c), with the client updates formed on the server.
ParamVector aggregate_fedavg(const ServerNode& server, const std::vector<GradientMessage>& messages);

struct RoundRecord;

struct TrainingConfig {
  ServerNode server;
  std::vector<ClientNode> clients;
  std::size_t rounds = 200;
  std::size_t retransmission_cap = kDefaultRetransmissionCap;
  bool parallel_clients = true;
  /// Called after each round's record is complete.
  std::function<void(const RoundRecord&)> on_round;
};

struct RoundRecord {
  std::size_t round = 0;
  ParamVector theta_before;
  ParamVector theta_after;
  double mean_loss = 0.0;               // at theta_before, over all clients
  std::vector<double> per_client_loss;  // at theta_before
  std::vector<std::size_t> dropped_clients;
  LedgerEntry ledger;                   // this round only
  LedgerEntry ledger_cumulative;
};

struct TrainingResult {
  std::vector<RoundRecord> records;
  CommLedger ledger;
  ParamVector final_theta;
  double final_mean_loss = 0.0;
};

/// Mean over clients of each client's mean loss.
double mean_loss(const AnsatzSpec& spec, const ParamVector& theta, const std::vector<ClientNode>& clients,
                 std::vector<double>* per_client = nullptr);

/// Throws RunFailure when every client drops in a round.
TrainingResult run_training(const TrainingConfig& config);

struct LedgerSummary {
  std::uint64_t states_sent = 0;
  std::uint64_t qubits_downlink = 0;
  std::uint64_t qubits_uplink = 0;
  std::uint64_t classical_bits = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t matrix_equivalent_bits = 0;     // N^2 * 64 per state
  std::uint64_t parameter_equivalent_bits = 0;  // m * 64 per state
  double matrix_bits_per_qubit = 0.0;
  double parameter_bits_per_qubit = 0.0;
};

LedgerSummary ledger_report(const CommLedger& ledger, std::size_t dim, std::size_t num_params);

/// Realizable regression task: a hidden theta* and examples (x, O(theta*) x)
/// with Gaussian-random real unit x, dealt to clients in order.
struct ReferenceTask {
  ParamVector hidden_theta;
  std::vector<std::vector<LabeledExample>> client_data;
};

ReferenceTask make_reference_task(const AnsatzSpec& spec, std::size_t num_clients, std::size_t examples_per_client,
                                  std::uint64_t data_seed);

/// Uniform in [-pi, pi) from `seed`.
ParamVector random_theta(std::size_t count, std::uint64_t seed);

/// Generator for a (seed, round, client, stream) tuple.
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t round, std::uint64_t client, std::uint64_t stream);

}  // namespace qfl
