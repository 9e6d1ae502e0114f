#include "qfl/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "qfl/errors.hpp"

namespace qfl {
namespace {

// Streams keep draws from one master seed independent.
constexpr std::uint64_t kClientStream = 0;
constexpr std::uint64_t kSelectionStream = 1;
constexpr std::uint64_t kTaskStream = 2;
constexpr std::uint64_t kInitStream = 3;

struct RawEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Signed overlap of the post-selected branch with the doubled target,
// rescaled by sqrt(branch probability) so that it equals scale * <y|D x>.
RawEstimate estimate_branch(const PureState& branch, double branch_prob, const PureState& target,
                            std::optional<std::uint64_t> shots, std::mt19937_64& rng) {
  const double amplitude = std::sqrt(branch_prob);
  const double overlap = overlap_real_estimate(target, branch, shots, rng());
  RawEstimate out{amplitude * overlap, 0.0};
  if (shots) out.std_error = amplitude * overlap_standard_error(overlap, *shots);
  return out;
}

void check_messages(const ServerNode& server, const std::vector<GradientMessage>& messages) {
  if (messages.empty()) throw std::invalid_argument("aggregation needs at least one message");
  for (const GradientMessage& msg : messages) {
    if (msg.values.size() != server.theta.size()) {
      throw std::invalid_argument("message from client " + std::to_string(msg.client_id) +
                                  " has the wrong number of values");
    }
    if (msg.sample_count == 0) throw std::invalid_argument("message with zero samples");
    for (double v : msg.values) {
      if (!std::isfinite(v)) throw std::invalid_argument("message values must be finite");
    }
  }
}

}  // namespace

LedgerEntry& LedgerEntry::operator+=(const LedgerEntry& other) {
  states_sent += other.states_sent;
  qubits_downlink += other.qubits_downlink;
  qubits_uplink += other.qubits_uplink;
  classical_bits += other.classical_bits;
  retransmissions += other.retransmissions;
  classical_equivalent_bits += other.classical_equivalent_bits;
  return *this;
}

LedgerEntry& CommLedger::current() {
  if (rounds_.empty()) throw std::logic_error("ledger has no open round");
  return rounds_.back();
}

LedgerEntry CommLedger::totals() const {
  LedgerEntry sum;
  for (const LedgerEntry& e : rounds_) sum += e;
  return sum;
}

void CommLedger::debit_downlink(std::uint64_t qubits, std::size_t dim, std::uint64_t copies, bool retransmitted) {
  LedgerEntry& e = current();
  e.qubits_downlink += qubits * copies;
  if (retransmitted) {
    e.retransmissions += copies;
  } else {
    e.states_sent += copies;
    e.classical_equivalent_bits += copies * dim * dim * kBitsPerReal;
  }
}

void CommLedger::debit_uplink(std::uint64_t classical_values) {
  current().classical_bits += classical_values * kBitsPerReal;
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t round, std::uint64_t client, std::uint64_t stream) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(round), hi(round), lo(client), hi(client), lo(stream), hi(stream)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> select_parameters(const ServerNode& server, std::size_t round) {
  const std::size_t m = server.spec.num_params();
  if (!(server.partial_fraction > 0.0 && server.partial_fraction <= 1.0)) {
    throw std::invalid_argument("partial_fraction must lie in (0, 1]");
  }
  const auto count = static_cast<std::size_t>(std::floor(server.partial_fraction * static_cast<double>(m) + 1e-9));
  if (count == 0) throw std::invalid_argument("partial_fraction selects no parameters");

  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= m) return all;
  std::vector<std::size_t> chosen;
  auto rng = derived_rng(server.seed, round, 0, kSelectionStream);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<ShiftState> server_prepare_round(const ServerNode& server, std::size_t round, std::size_t num_clients,
                                             CommLedger& ledger) {
  const std::vector<std::size_t> indices = select_parameters(server, round);
  std::vector<ShiftState> states;
  switch (server.shift_mode) {
    case ShiftMode::single:
      for (std::size_t i : indices) states.push_back(prepare_shift_state(server.spec, server.theta, i, server.shift));
      break;
    case ShiftMode::multi:
      states.push_back(prepare_multi_shift_state(server.spec, server.theta, indices, server.shift));
      break;
    case ShiftMode::indexed:
      // A lone parameter needs no index register.
      if (indices.size() == 1) {
        states.push_back(prepare_shift_state(server.spec, server.theta, indices.front(), server.shift));
      } else {
        states.push_back(prepare_indexed_shift_state(server.spec, server.theta, indices, server.shift));
      }
      break;
  }
  for (const ShiftState& s : states) {
    ledger.debit_downlink(s.program.num_qubits(), server.spec.dim(), num_clients, false);
    // The descale factor travels as classical metadata.
    ledger.current().classical_bits += num_clients * kBitsPerReal;
  }
  return states;
}

RetransmissionOutcome simulate_retransmission(double success_prob, std::mt19937_64& rng, std::size_t cap) {
  if (!(success_prob >= 0.0 && success_prob <= 1.0)) {
    throw std::invalid_argument("success probability must lie in [0, 1]");
  }
  if (cap == 0) throw std::invalid_argument("retransmission cap must be positive");
  std::bernoulli_distribution trial(success_prob);
  for (std::uint64_t copies = 1; copies <= cap; ++copies) {
    if (trial(rng)) return {true, copies};
  }
  return {false, cap};
}

ClientResult client_process(const ClientNode& client, const std::vector<ShiftState>& states, std::size_t num_params,
                            std::size_t round, std::size_t retransmission_cap) {
  if (client.dataset.empty()) throw std::invalid_argument("client " + std::to_string(client.id) + " has no data");
  const unsigned n = client.dataset.front().x.num_qubits();
  const std::size_t dim = client.dataset.front().x.dim();

  ClientResult result;
  GradientMessage msg{client.id, std::vector<double>(num_params, 0.0), std::vector<double>(num_params, 0.0),
                      client.dataset.size(), 0, 0};
  std::vector<double> variance(num_params, 0.0);
  auto rng = derived_rng(client.rng_seed, round, client.id, kClientStream);

  for (const ShiftState& state : states) {
    if (state.data_qubits() != n) {
      throw std::invalid_argument("shift state does not match client " + std::to_string(client.id) + " data");
    }
    for (const LabeledExample& ex : client.dataset) {
      std::optional<ChipOutput> out;
      try {
        out = chip_apply(state.program, state.index_qubits, state.spec.descale, ex.x);
      } catch (const ImpossibleBranch&) {
        // D x = 0: the exact contribution is zero, but no copy ever succeeds.
      }
      const double p = out ? out->success_prob : 0.0;

      if (client.shots) {
        const RetransmissionOutcome r = simulate_retransmission(p, rng, retransmission_cap);
        result.retransmissions += r.success ? r.copies - 1 : r.copies;
        if (!r.success) return result;
      }
      if (!out) continue;

      const PureState target = doubled_target(ex.y);
      if (state.spec.mode == ShiftMode::indexed) {
        std::vector<double> raw(state.spec.indices.size(), 0.0);
        std::vector<double> raw_se(state.spec.indices.size(), 0.0);
        for (std::size_t k = 0; k < state.spec.indices.size(); ++k) {
          try {
            const SelectedState branch = post_select(out->joint_state, {0, state.index_qubits},
                                                     to_bits(k, state.index_qubits));
            const RawEstimate est = estimate_branch(branch.state, p * branch.probability, target, client.shots, rng);
            raw[k] = est.value;
            raw_se[k] = est.std_error;
            if (client.shots) msg.shots += *client.shots;
          } catch (const ImpossibleBranch&) {
            // Branch carries no amplitude: D_k x = 0.
          }
        }
        const std::vector<double> partials = recover_partials(raw, state.spec, dim);
        const std::vector<double> partial_se = recover_partials(raw_se, state.spec, dim);
        for (std::size_t k = 0; k < partials.size(); ++k) {
          msg.values[state.spec.indices[k]] += partials[k];
          variance[state.spec.indices[k]] += partial_se[k] * partial_se[k];
        }
      } else {
        const RawEstimate est = estimate_branch(out->joint_state, p, target, client.shots, rng);
        if (client.shots) msg.shots += *client.shots;
        const double partial = recover_partials(est.value, state.spec, dim);
        const double se = recover_partials(est.std_error, state.spec, dim);
        for (std::size_t i : state.spec.indices) {
          msg.values[i] += partial;
          variance[i] += se * se;
        }
      }
    }
  }

  const auto batch = static_cast<double>(client.dataset.size());
  for (std::size_t i = 0; i < num_params; ++i) {
    msg.values[i] /= batch;
    msg.std_errors[i] = std::sqrt(variance[i]) / batch;
  }
  msg.retransmissions = result.retransmissions;
  result.message = std::move(msg);
  return result;
}

ParamVector aggregate_fedsgd(const ServerNode& server, const std::vector<GradientMessage>& messages) {
  check_messages(server, messages);
  ParamVector next = server.theta;
  for (const GradientMessage& msg : messages) {
    const auto n = static_cast<double>(msg.sample_count);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= server.learning_rate * n * msg.values[i];
  }
  return next;
}

ParamVector aggregate_fedavg(const ServerNode& server, const std::vector<GradientMessage>& messages) {
  check_messages(server, messages);
  double total = 0.0;
  for (const GradientMessage& msg : messages) total += static_cast<double>(msg.sample_count);

  ParamVector next(server.theta.size(), 0.0);
  for (const GradientMessage& msg : messages) {
    const double weight = static_cast<double>(msg.sample_count) / total;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] += weight * (server.theta[i] - server.learning_rate * msg.values[i]);
    }
  }
  return next;
}

double mean_loss(const AnsatzSpec& spec, const ParamVector& theta, const std::vector<ClientNode>& clients,
                 std::vector<double>* per_client) {
  if (clients.empty()) throw std::invalid_argument("mean_loss needs at least one client");
  double sum = 0.0;
  if (per_client) per_client->clear();
  for (const ClientNode& c : clients) {
    double client_sum = 0.0;
    for (const LabeledExample& ex : c.dataset) client_sum += loss(spec, theta, ex);
    const double client_mean = client_sum / static_cast<double>(c.dataset.size());
    if (per_client) per_client->push_back(client_mean);
    sum += client_mean;
  }
  return sum / static_cast<double>(clients.size());
}

TrainingResult run_training(const TrainingConfig& config) {
  if (config.clients.empty()) throw std::invalid_argument("training needs at least one client");
  if (!(config.server.learning_rate > 0.0) || !std::isfinite(config.server.learning_rate)) {
    throw std::invalid_argument("learning rate must be positive and finite");
  }
  ServerNode server = config.server;
  const std::size_t m = server.spec.num_params();
  TrainingResult result;
  LedgerEntry cumulative;

  for (std::size_t k = 0; k < config.rounds; ++k) {
    RoundRecord record;
    record.round = k;
    record.theta_before = server.theta;
    record.mean_loss = mean_loss(server.spec, server.theta, config.clients, &record.per_client_loss);

    result.ledger.open_round();
    const std::vector<ShiftState> states = server_prepare_round(server, k, config.clients.size(), result.ledger);

    std::vector<ClientResult> outcomes(config.clients.size());
    if (config.parallel_clients && config.clients.size() > 1) {
      std::vector<std::future<ClientResult>> futures;
      for (const ClientNode& c : config.clients) {
        futures.push_back(std::async(std::launch::async, [&, k] {
          return client_process(c, states, m, k, config.retransmission_cap);
        }));
      }
      for (std::size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
    } else {
      for (std::size_t i = 0; i < config.clients.size(); ++i) {
        outcomes[i] = client_process(config.clients[i], states, m, k, config.retransmission_cap);
      }
    }

    // Barrier: the ledger and aggregation only see completed client work.
    std::vector<GradientMessage> messages;
    const std::uint64_t state_qubits = states.front().program.num_qubits();
    std::uint64_t covered = 0;
    for (const ShiftState& s : states) covered += s.spec.indices.size();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      result.ledger.debit_downlink(state_qubits, server.spec.dim(), outcomes[i].retransmissions, true);
      if (!outcomes[i].message) {
        record.dropped_clients.push_back(config.clients[i].id);
        continue;
      }
      result.ledger.debit_uplink(covered);
      messages.push_back(std::move(*outcomes[i].message));
    }
    if (messages.empty()) throw RunFailure(k, "every client dropped after exhausting retransmissions");

    server.theta = server.strategy == Strategy::fedsgd ? aggregate_fedsgd(server, messages)
                                                       : aggregate_fedavg(server, messages);
    record.theta_after = server.theta;
    record.ledger = result.ledger.current();
    cumulative += record.ledger;
    record.ledger_cumulative = cumulative;
    if (config.on_round) config.on_round(record);
    result.records.push_back(std::move(record));
  }

  result.final_theta = server.theta;
  result.final_mean_loss = mean_loss(server.spec, server.theta, config.clients);
  return result;
}

LedgerSummary ledger_report(const CommLedger& ledger, std::size_t dim, std::size_t num_params) {
  const LedgerEntry t = ledger.totals();
  LedgerSummary s;
  s.states_sent = t.states_sent;
  s.qubits_downlink = t.qubits_downlink;
  s.qubits_uplink = t.qubits_uplink;
  s.classical_bits = t.classical_bits;
  s.retransmissions = t.retransmissions;
  s.matrix_equivalent_bits = t.states_sent * dim * dim * kBitsPerReal;
  s.parameter_equivalent_bits = t.states_sent * num_params * kBitsPerReal;
  if (t.qubits_downlink > 0) {
    s.matrix_bits_per_qubit = static_cast<double>(s.matrix_equivalent_bits) / static_cast<double>(t.qubits_downlink);
    s.parameter_bits_per_qubit =
        static_cast<double>(s.parameter_equivalent_bits) / static_cast<double>(t.qubits_downlink);
  }
  return s;
}

ReferenceTask make_reference_task(const AnsatzSpec& spec, std::size_t num_clients, std::size_t examples_per_client,
                                  std::uint64_t data_seed) {
  if (num_clients == 0 || examples_per_client == 0) {
    throw std::invalid_argument("reference task needs clients and examples");
  }
  std::mt19937_64 rng = derived_rng(data_seed, 0, 0, kTaskStream);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ReferenceTask task;
  task.hidden_theta.resize(spec.num_params());
  for (double& t : task.hidden_theta) t = angle(rng);
  const RealMatrix target = build_operator(spec, task.hidden_theta).matrix();

  task.client_data.resize(num_clients);
  for (auto& data : task.client_data) {
    for (std::size_t e = 0; e < examples_per_client; ++e) {
      std::vector<double> x(spec.dim());
      for (double& v : x) v = gauss(rng);
      PureState xs = PureState::from_real(x);
      const ComplexVector y = target.cast<Complex>() * xs.amplitudes();
      data.push_back({std::move(xs), PureState::from_amplitudes(y)});
    }
  }
  return task;
}

ParamVector random_theta(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng = derived_rng(seed, 0, 0, kInitStream);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  ParamVector theta(count);
  for (double& t : theta) t = angle(rng);
  return theta;
}

}  // namespace qfl
