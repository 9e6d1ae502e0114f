#pragma once

// Server-side parameterized operator O(theta), the overlap loss <y|O|x>, its
// exact gradient, and the shift states the server transmits to clients.

#include <cstddef>
#include <vector>

#include "qfl/chip.hpp"
#include "qfl/statevec.hpp"

namespace qfl {

/// Layered ansatz: each layer is one R_y per qubit followed by a ring of CZ
/// entanglers (a single CZ for two qubits, none for one). Parameter
/// layer * num_qubits + q drives the rotation on qubit q of that layer.
struct AnsatzSpec {
  unsigned num_qubits = 1;
  unsigned num_layers = 1;

  std::size_t num_params() const noexcept { return std::size_t{num_qubits} * num_layers; }
  std::size_t dim() const noexcept { return std::size_t{1} << num_qubits; }
};

using ParamVector = std::vector<double>;

struct LabeledExample {
  PureState x;
  PureState y;
};

enum class ShiftMode { single, multi, indexed };

/// Metadata that travels with a shift state. `descale` is the norm of the
/// unnormalized program vector, sum_i |i> (x) (vec(O+_i) - vec(O-_i)).
struct ShiftStateSpec {
  ShiftMode mode = ShiftMode::single;
  std::vector<std::size_t> indices;
  double shift = 0.0;
  double descale = 1.0;
};

struct ShiftState {
  /// [index register | column | row]; the index register is empty unless
  /// mode is indexed.
  PureState program;
  unsigned index_qubits = 0;
  ShiftStateSpec spec;

  unsigned data_qubits() const noexcept { return (program.num_qubits() - index_qubits) / 2; }
};

RealOperator build_operator(const AnsatzSpec& spec, const ParamVector& theta);

/// <y|O(theta)|x>, real for real data.
double loss(const AnsatzSpec& spec, const ParamVector& theta, const LabeledExample& ex);

/// Exact partials from [L(theta + pi e_i) - L(theta - pi e_i)] / 4. The loss is
/// A cos(theta_i / 2) + B sin(theta_i / 2) in every parameter, which makes the
/// rule exact.
std::vector<double> exact_gradient(const AnsatzSpec& spec, const ParamVector& theta, const LabeledExample& ex);

ShiftState prepare_shift_state(const AnsatzSpec& spec, const ParamVector& theta, std::size_t index, double shift);
ShiftState prepare_multi_shift_state(const AnsatzSpec& spec, const ParamVector& theta,
                                     const std::vector<std::size_t>& indices, double shift);
ShiftState prepare_indexed_shift_state(const AnsatzSpec& spec, const ParamVector& theta,
                                       const std::vector<std::size_t>& indices, double shift);

/// Qubits of the index register for `count` indexed parameters.
unsigned index_register_qubits(std::size_t count);

/// Σ_r y_r |r>|r>, the reference the chip's row/data output is compared with.
PureState doubled_target(const PureState& y);

/// raw * descale * sqrt(N) / (4 sin(s / 2)).
double recover_partials(double raw, const ShiftStateSpec& spec, std::size_t dim);
/// Per-branch form for indexed states; `raw` has one entry per index.
std::vector<double> recover_partials(const std::vector<double>& raw, const ShiftStateSpec& spec, std::size_t dim);

}  // namespace qfl
