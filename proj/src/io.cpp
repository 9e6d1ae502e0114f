#include "qfl/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace qfl {
namespace {

struct Line {
  std::size_t number = 0;
  std::vector<double> values;
};

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

std::vector<double> parse_values(const std::string& text, const std::string& source, std::size_t line_no) {
  std::vector<double> out;
  std::istringstream tokens(text);
  std::string tok;
  while (tokens >> tok) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
      throw FormatError(where(source, line_no) + ": '" + tok + "' is not a finite decimal");
    }
    out.push_back(v);
  }
  return out;
}

// Reads the "dim N" header and the remaining non-empty lines.
std::size_t read_body(std::istream& in, const std::string& source, std::vector<Line>& lines) {
  std::string text;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line_no;
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    if (!have_header) {
      std::istringstream header(text);
      std::string word;
      long long n = -1;
      std::string extra;
      if (!(header >> word >> n) || word != "dim" || n <= 0 || (header >> extra)) {
        throw FormatError(where(source, line_no) + ": expected header 'dim N'");
      }
      dim = static_cast<std::size_t>(n);
      have_header = true;
      continue;
    }
    lines.push_back({line_no, parse_values(text, source, line_no)});
  }
  if (!have_header) throw FormatError(source + ": missing 'dim N' header");
  return dim;
}

}  // namespace

RealMatrix read_matrix(std::istream& in, const std::string& source) {
  std::vector<Line> lines;
  const std::size_t dim = read_body(in, source, lines);
  if (lines.size() != dim) {
    throw FormatError(source + ": expected " + std::to_string(dim) + " rows, found " + std::to_string(lines.size()));
  }
  RealMatrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < dim; ++r) {
    if (lines[r].values.size() != dim) {
      throw FormatError(where(source, lines[r].number) + ": expected " + std::to_string(dim) + " values, found " +
                        std::to_string(lines[r].values.size()));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = lines[r].values[c];
    }
  }
  return m;
}

std::vector<double> read_state(std::istream& in, const std::string& source) {
  std::vector<Line> lines;
  const std::size_t dim = read_body(in, source, lines);
  std::vector<double> values;
  for (const Line& l : lines) values.insert(values.end(), l.values.begin(), l.values.end());
  if (values.size() != dim) {
    throw FormatError(source + ": expected " + std::to_string(dim) + " amplitudes, found " +
                      std::to_string(values.size()));
  }
  return values;
}

RealMatrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_matrix(in, path);
}

std::vector<double> read_state_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_state(in, path);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_matrix(std::ostream& out, const RealMatrix& m) {
  out << "dim " << m.rows() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_decomposition(std::ostream& out, const PermutedBlockDecomposition& d, double reconstruction_error) {
  unsigned width = 0;
  while ((std::size_t{2} << width) < d.dim) ++width;
  out << "# O = sum_i D_i P_i\n";
  out << "terms " << d.terms.size() << '\n';
  for (std::size_t i = 0; i < d.terms.size(); ++i) {
    out << "term " << i << " bits " << (width > 0 ? d.terms[i].permutation_bits(width) : "-") << '\n';
    write_matrix(out, d.terms[i].block_diagonal);
  }
  out << "reconstruction_error " << format_double(reconstruction_error) << '\n';
}

MetricsRecord to_metrics(const RoundRecord& record, double wall_time_ms) {
  MetricsRecord m;
  m.round = record.round;
  m.mean_loss = record.mean_loss;
  m.per_client_loss = record.per_client_loss;
  double sq = 0.0;
  for (double t : record.theta_before) sq += t * t;
  m.theta_norm = std::sqrt(sq);
  m.qubits_downlink_cum = record.ledger_cumulative.qubits_downlink;
  m.retransmissions_cum = record.ledger_cumulative.retransmissions;
  m.wall_time_ms = wall_time_ms;
  return m;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns{"schema_version",      "round",          "mean_loss",
                                                "per_client_loss",     "theta_norm",     "qubits_downlink_cum",
                                                "retransmissions_cum", "wall_time_ms"};
  return columns;
}

nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["round"] = r.round;
  j["mean_loss"] = r.mean_loss;
  j["per_client_loss"] = r.per_client_loss;
  j["theta_norm"] = r.theta_norm;
  j["qubits_downlink_cum"] = r.qubits_downlink_cum;
  j["retransmissions_cum"] = r.retransmissions_cum;
  j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

std::string csv_header() {
  std::string out;
  for (const std::string& c : metrics_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string to_csv_row(const MetricsRecord& r) {
  std::string losses;
  for (double l : r.per_client_loss) {
    if (!losses.empty()) losses += ';';
    losses += format_double(l);
  }
  std::ostringstream row;
  row << kMetricsSchemaVersion << ',' << r.round << ',' << format_double(r.mean_loss) << ',' << losses << ','
      << format_double(r.theta_norm) << ',' << r.qubits_downlink_cum << ',' << r.retransmissions_cum << ','
      << format_double(r.wall_time_ms);
  return row.str();
}

nlohmann::ordered_json to_json(const LedgerSummary& s) {
  nlohmann::ordered_json j;
  j["states_sent"] = s.states_sent;
  j["qubits_downlink"] = s.qubits_downlink;
  j["qubits_uplink"] = s.qubits_uplink;
  j["classical_bits"] = s.classical_bits;
  j["retransmissions"] = s.retransmissions;
  j["matrix_equivalent_bits"] = s.matrix_equivalent_bits;
  j["parameter_equivalent_bits"] = s.parameter_equivalent_bits;
  j["matrix_bits_per_qubit"] = s.matrix_bits_per_qubit;
  j["parameter_bits_per_qubit"] = s.parameter_bits_per_qubit;
  return j;
}

}  // namespace qfl
