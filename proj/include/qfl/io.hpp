#pragma once

// Plain-text matrix/state files and metrics output.
//
// Matrix and state files start with a header line "dim N". A matrix file then
// holds N rows of N whitespace-separated decimals; a state file holds N
// decimals in any line layout. Blank lines and lines starting with '#' are
// skipped.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfl/chip.hpp"
#include "qfl/fedsim.hpp"

namespace qfl {

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

RealMatrix read_matrix(std::istream& in, const std::string& source = "<input>");
std::vector<double> read_state(std::istream& in, const std::string& source = "<input>");
RealMatrix read_matrix_file(const std::string& path);
std::vector<double> read_state_file(const std::string& path);

void write_matrix(std::ostream& out, const RealMatrix& m);
void write_decomposition(std::ostream& out, const PermutedBlockDecomposition& d, double reconstruction_error);

inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsRecord {
  std::size_t round = 0;
  double mean_loss = 0.0;
  std::vector<double> per_client_loss;
  double theta_norm = 0.0;
  std::uint64_t qubits_downlink_cum = 0;
  std::uint64_t retransmissions_cum = 0;
  double wall_time_ms = 0.0;
};

MetricsRecord to_metrics(const RoundRecord& record, double wall_time_ms);

/// Column order shared by the JSONL keys and the CSV header.
const std::vector<std::string>& metrics_columns();

nlohmann::ordered_json to_json(const MetricsRecord& r);
/// One CSV line without the trailing newline; per-client losses are joined by ';'.
std::string to_csv_row(const MetricsRecord& r);
std::string csv_header();

nlohmann::ordered_json to_json(const LedgerSummary& s);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace qfl
