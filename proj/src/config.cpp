#include "qfl/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace qfl {
namespace {

using nlohmann::json;

void reject_unknown(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ConfigError(name + ": expected an object");
  for (const auto& [key, value] : section.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + (name.empty() ? key : name + "." + key) + "'");
  }
}

template <typename T>
void read(const json& section, const std::string& section_name, const char* key, T& out) {
  if (!section.contains(key)) return;
  const std::string path = section_name + "." + key;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + path + "' has the wrong type");
  }
}

// Unsigned integers must be written as non-negative integers, not floats.
template <typename T>
void read_count(const json& section, const std::string& section_name, const char* key, T& out) {
  if (!section.contains(key)) return;
  const json& v = section.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError("key '" + section_name + "." + key + "' must be a non-negative integer");
  }
  out = v.get<T>();
}

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw ConfigError("key '" + key + "' " + why);
}

Strategy parse_strategy(const std::string& s) {
  if (s == "fedsgd") return Strategy::fedsgd;
  if (s == "fedavg") return Strategy::fedavg;
  throw ConfigError("key 'training.strategy' must be fedsgd or fedavg, got '" + s + "'");
}

ShiftMode parse_shift_mode(const std::string& s) {
  if (s == "single") return ShiftMode::single;
  if (s == "multi") return ShiftMode::multi;
  if (s == "indexed") return ShiftMode::indexed;
  throw ConfigError("key 'training.shift_mode' must be single, multi or indexed, got '" + s + "'");
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_json(*this) == to_json(o); }

std::string to_string(Strategy s) { return s == Strategy::fedsgd ? "fedsgd" : "fedavg"; }

std::string to_string(ShiftMode m) {
  switch (m) {
    case ShiftMode::single: return "single";
    case ShiftMode::multi: return "multi";
    case ShiftMode::indexed: return "indexed";
  }
  return "single";
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, "", {"ansatz", "clients", "training", "estimation", "output"});

  if (j.contains("ansatz")) {
    const json& s = j.at("ansatz");
    reject_unknown(s, "ansatz", {"num_qubits", "num_layers"});
    read_count(s, "ansatz", "num_qubits", c.ansatz.num_qubits);
    read_count(s, "ansatz", "num_layers", c.ansatz.num_layers);
  }
  if (j.contains("clients")) {
    const json& s = j.at("clients");
    reject_unknown(s, "clients", {"count", "examples_per_client", "data_seed"});
    read_count(s, "clients", "count", c.clients.count);
    read_count(s, "clients", "examples_per_client", c.clients.examples_per_client);
    read_count(s, "clients", "data_seed", c.clients.data_seed);
  }
  if (j.contains("training")) {
    const json& s = j.at("training");
    reject_unknown(s, "training",
                   {"rounds", "learning_rate", "strategy", "shift_mode", "shift_size", "partial_fraction"});
    read_count(s, "training", "rounds", c.training.rounds);
    read(s, "training", "learning_rate", c.training.learning_rate);
    std::string strategy = to_string(c.training.strategy);
    read(s, "training", "strategy", strategy);
    c.training.strategy = parse_strategy(strategy);
    std::string mode = to_string(c.training.shift_mode);
    read(s, "training", "shift_mode", mode);
    c.training.shift_mode = parse_shift_mode(mode);
    read(s, "training", "shift_size", c.training.shift_size);
    read(s, "training", "partial_fraction", c.training.partial_fraction);
  }
  if (j.contains("estimation")) {
    const json& s = j.at("estimation");
    reject_unknown(s, "estimation", {"mode", "shots", "seed"});
    std::string mode = c.estimation.exact ? "exact" : "shots";
    read(s, "estimation", "mode", mode);
    if (mode != "exact" && mode != "shots") {
      throw ConfigError("key 'estimation.mode' must be exact or shots, got '" + mode + "'");
    }
    c.estimation.exact = mode == "exact";
    read_count(s, "estimation", "shots", c.estimation.shots);
    read_count(s, "estimation", "seed", c.estimation.seed);
  }
  if (j.contains("output")) {
    const json& s = j.at("output");
    reject_unknown(s, "output", {"directory", "formats"});
    read(s, "output", "directory", c.output.directory);
    read(s, "output", "formats", c.output.formats);
  }

  require(c.ansatz.num_qubits > 0 && c.ansatz.num_qubits <= 6, "ansatz.num_qubits", "must be in [1, 6]");
  require(c.ansatz.num_layers > 0, "ansatz.num_layers", "must be positive");
  require(c.clients.count > 0, "clients.count", "must be positive");
  require(c.clients.examples_per_client > 0, "clients.examples_per_client", "must be positive");
  require(std::isfinite(c.training.learning_rate) && c.training.learning_rate > 0.0, "training.learning_rate",
          "must be positive");
  require(std::isfinite(c.training.shift_size) && c.training.shift_size > 0.0 &&
              c.training.shift_size < 2.0 * std::numbers::pi,
          "training.shift_size", "must lie in (0, 2*pi)");
  const double m = static_cast<double>(c.ansatz.num_qubits) * c.ansatz.num_layers;
  require(c.training.partial_fraction > 0.0 && c.training.partial_fraction <= 1.0 &&
              c.training.partial_fraction * m >= 1.0 - 1e-9,
          "training.partial_fraction", "must lie in (0, 1] and select at least one parameter");
  require(c.estimation.shots > 0, "estimation.shots", "must be positive");
  require(!c.output.directory.empty(), "output.directory", "must not be empty");
  require(!c.output.formats.empty(), "output.formats", "must list at least one format");
  for (const std::string& f : c.output.formats) {
    require(f == "jsonl" || f == "csv", "output.formats", "entries must be jsonl or csv, got '" + f + "'");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"ansatz", {{"num_qubits", c.ansatz.num_qubits}, {"num_layers", c.ansatz.num_layers}}},
      {"clients",
       {{"count", c.clients.count},
        {"examples_per_client", c.clients.examples_per_client},
        {"data_seed", c.clients.data_seed}}},
      {"training",
       {{"rounds", c.training.rounds},
        {"learning_rate", c.training.learning_rate},
        {"strategy", to_string(c.training.strategy)},
        {"shift_mode", to_string(c.training.shift_mode)},
        {"shift_size", c.training.shift_size},
        {"partial_fraction", c.training.partial_fraction}}},
      {"estimation",
       {{"mode", c.estimation.exact ? "exact" : "shots"}, {"shots", c.estimation.shots}, {"seed", c.estimation.seed}}},
      {"output", {{"directory", c.output.directory}, {"formats", c.output.formats}}},
  };
}

TrainingConfig make_training_config(const ExperimentConfig& config) {
  const AnsatzSpec spec{config.ansatz.num_qubits, config.ansatz.num_layers};
  const ReferenceTask task =
      make_reference_task(spec, config.clients.count, config.clients.examples_per_client, config.clients.data_seed);

  TrainingConfig tc;
  tc.server.spec = spec;
  tc.server.theta = random_theta(spec.num_params(), config.estimation.seed);
  tc.server.learning_rate = config.training.learning_rate;
  tc.server.strategy = config.training.strategy;
  tc.server.shift_mode = config.training.shift_mode;
  tc.server.shift = config.training.shift_size;
  tc.server.partial_fraction = config.training.partial_fraction;
  tc.server.seed = config.estimation.seed;
  tc.rounds = config.training.rounds;
  for (std::size_t i = 0; i < task.client_data.size(); ++i) {
    ClientNode client;
    client.id = i;
    client.dataset = task.client_data[i];
    if (!config.estimation.exact) client.shots = config.estimation.shots;
    client.rng_seed = config.estimation.seed;
    tc.clients.push_back(std::move(client));
  }
  return tc;
}

}  // namespace qfl
