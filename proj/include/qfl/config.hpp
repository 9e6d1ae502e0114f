#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfl/fedsim.hpp"

namespace qfl {

/// Experiment configuration as read from JSON. Every section and key is
/// optional; missing keys keep the defaults below. Unknown keys are errors.
struct ExperimentConfig {
  struct Ansatz {
    unsigned num_qubits = 2;
    unsigned num_layers = 2;
  } ansatz;

  struct Clients {
    std::size_t count = 3;
    std::size_t examples_per_client = 4;
    std::uint64_t data_seed = 42;
  } clients;

  struct Training {
    std::size_t rounds = 200;
    double learning_rate = 0.05;
    Strategy strategy = Strategy::fedsgd;
    ShiftMode shift_mode = ShiftMode::single;
    double shift_size = 3.141592653589793;
    double partial_fraction = 1.0;
  } training;

  struct Estimation {
    bool exact = true;
    std::uint64_t shots = 10000;
    std::uint64_t seed = 42;
  } estimation;

  struct Output {
    std::string directory = "out";
    std::vector<std::string> formats{"jsonl"};
  } output;

  bool operator==(const ExperimentConfig&) const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

std::string to_string(Strategy s);
std::string to_string(ShiftMode m);

/// Server, clients and data for a configured run, with the reference task as
/// data and an initial theta drawn from the estimation seed.
TrainingConfig make_training_config(const ExperimentConfig& config);

}  // namespace qfl
