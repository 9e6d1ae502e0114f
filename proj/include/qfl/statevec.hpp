#pragma once

// Dense state-vector simulation.
//
// Qubit ordering is big-endian everywhere in this library: qubit 0 is the most
// significant bit of the basis index, so the ket |q0 q1 q2> is the amplitude
// at index q0*4 + q1*2 + q2.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace qfl {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Largest register the simulator will allocate.
inline constexpr unsigned kMaxQubits = 22;

/// Normalized amplitude vector over num_qubits qubits. Immutable.
class PureState {
 public:
  /// Computational basis state |index>.
  static PureState basis(unsigned num_qubits, std::uint64_t index);

  /// Normalizes `amplitudes`. Throws ImpossibleBranch on a zero vector and
  /// std::invalid_argument when the length is not a power of two.
  static PureState from_amplitudes(ComplexVector amplitudes);
  static PureState from_real(const std::vector<double>& amplitudes);

  unsigned num_qubits() const noexcept { return num_qubits_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(amplitudes_.size()); }
  const ComplexVector& amplitudes() const noexcept { return amplitudes_; }
  Complex operator[](std::size_t i) const { return amplitudes_[static_cast<Eigen::Index>(i)]; }

 private:
  PureState(unsigned num_qubits, ComplexVector amplitudes)
      : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {}

  unsigned num_qubits_ = 0;
  ComplexVector amplitudes_;
};

/// A contiguous run of qubits [start_qubit, start_qubit + length).
struct RegisterSpan {
  unsigned start_qubit = 0;
  unsigned length = 0;

  unsigned end() const noexcept { return start_qubit + length; }
  bool overlaps(const RegisterSpan& other) const noexcept {
    return start_qubit < other.end() && other.start_qubit < end();
  }
};

struct MeasurementSample {
  std::string outcome;
  std::uint64_t count = 0;

  bool operator==(const MeasurementSample&) const = default;
};

/// A state together with the squared norm it had before renormalization.
struct WeightedState {
  PureState state;
  double weight = 1.0;
};

struct SelectedState {
  PureState state;
  double probability = 0.0;
};

PureState tensor(const PureState& a, const PureState& b);

/// Applies `m` to `span` (identity elsewhere). Non-unitary matrices are
/// allowed; the returned weight is the squared norm after application.
WeightedState apply_matrix(const PureState& state, const ComplexMatrix& m, RegisterSpan span);

/// Applies `m` to `target` on the subspace where `control` reads `pattern`.
WeightedState controlled_apply(const PureState& state, RegisterSpan control, std::string_view pattern,
                               const ComplexMatrix& m, RegisterSpan target);

struct Control {
  RegisterSpan span;
  std::string pattern;
};

/// Same, conditioned on every control reading its pattern. An empty control
/// list applies `m` unconditionally.
WeightedState controlled_apply(const PureState& state, std::span<const Control> controls, const ComplexMatrix& m,
                               RegisterSpan target);

PureState hadamard_register(const PureState& state, RegisterSpan span);

/// Projects `span` onto `value` and removes it. The remaining qubits keep
/// their relative order.
SelectedState post_select(const PureState& state, RegisterSpan span, std::string_view value);

/// <a|b>
Complex inner_product(const PureState& a, const PureState& b);

/// Marginal probabilities of `span`, indexed by the span's big-endian value.
std::vector<double> marginal_probabilities(const PureState& state, RegisterSpan span);

/// Draws `shots` outcomes of `span`. Samples are sorted by outcome and only
/// outcomes that occurred are listed.
std::vector<MeasurementSample> sample(const PureState& state, RegisterSpan span, std::uint64_t shots,
                                      std::uint64_t seed);

/// Re<a|b>. With `shots` unset the value is exact; otherwise it is the
/// Hadamard-test estimate 2k/shots - 1 where k ~ Binomial(shots, (1 + Re<a|b>)/2).
double overlap_real_estimate(const PureState& a, const PureState& b, std::optional<std::uint64_t> shots,
                             std::uint64_t seed);

/// Standard error of a shot-mode overlap estimate with true value `overlap`.
double overlap_standard_error(double overlap, std::uint64_t shots);

// Common gates.
ComplexMatrix pauli_x();
ComplexMatrix pauli_z();
ComplexMatrix hadamard();
ComplexMatrix ry(double angle);

/// Big-endian bitstring of `value` over `width` bits.
std::string to_bits(std::uint64_t value, unsigned width);
/// Inverse of to_bits; throws std::invalid_argument on non-binary characters.
std::uint64_t from_bits(std::string_view bits);

}  // namespace qfl
