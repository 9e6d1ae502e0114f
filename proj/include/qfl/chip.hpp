#pragma once

// The input-driven chip: an operator O arrives as the state |vec(O)> and the
// chip applies it to a data register through a cascade of controlled matrix
// units, a Hadamard layer on the column register and post-selection.
//
// Register layout of a program state is [passenger | column | row], each of
// column and row being n qubits for an N = 2^n operator. vec-encoding is
// column-major: amplitude c*N + r holds O(r, c) / ||O||_F.

#include <cstdint>
#include <string>
#include <vector>

#include "qfl/linalg.hpp"
#include "qfl/statevec.hpp"

namespace qfl {

/// Square real matrix with power-of-two dimension, finite entries and a
/// nonzero Frobenius norm.
class RealOperator {
 public:
  explicit RealOperator(RealMatrix entries);

  static RealOperator identity(std::size_t dim);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
  unsigned num_qubits() const noexcept { return num_qubits_; }
  const RealMatrix& matrix() const noexcept { return entries_; }
  double operator()(std::size_t r, std::size_t c) const {
    return entries_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  double frobenius_norm() const { return entries_.norm(); }

 private:
  RealMatrix entries_;
  unsigned num_qubits_ = 0;
};

struct VecEncodedOperator {
  PureState state;  // 2n qubits: column register then row register
  double frob_norm = 1.0;

  unsigned data_qubits() const noexcept { return state.num_qubits() / 2; }
};

VecEncodedOperator vec_encode(const RealOperator& o);
/// Throws std::invalid_argument if any amplitude has an imaginary part above 1e-9.
RealOperator vec_decode(const VecEncodedOperator& e);

struct ChipOutput {
  /// Post-selected state over [passenger | row | data].
  PureState joint_state;
  /// Probability of the full pipeline relative to the normalized inputs.
  double success_prob = 0.0;
  /// Diagonal |r>|r> amplitudes without renormalization; entry p*N + r is
  /// scale * (O_p psi)_r for passenger branch p.
  ComplexVector extracted;
  /// 1 / (sqrt(N) * program_norm).
  double scale = 0.0;
  unsigned passenger_qubits = 0;
};

enum class GateRoute {
  direct,  // non-unitary matrix units applied with weight tracking
  lcu,     // each 2x2 matrix unit block-encoded from {I, X, Z, XZ}; N = 2 only
};

ChipOutput chip_apply(const VecEncodedOperator& o, const PureState& psi, GateRoute route = GateRoute::direct);

/// General form. `program` is [passenger | column | row]; `program_norm` is the
/// norm of the unnormalized program vector the state was built from, so that
/// `extracted / scale` recovers the unnormalized operator image. The passenger
/// register is carried through untouched.
ChipOutput chip_apply(const PureState& program, unsigned passenger_qubits, double program_norm,
                      const PureState& psi);

/// ||O psi||^2 / (N ||O||_F^2), the closed form of ChipOutput::success_prob.
double success_probability(const RealOperator& o, const PureState& psi);

/// m = identity*I + x*X + z*Z + xz*XZ.
struct LcuCoefficients {
  double identity = 0.0;
  double x = 0.0;
  double z = 0.0;
  double xz = 0.0;

  RealMatrix reconstruct() const;
  double one_norm() const;
};

LcuCoefficients lcu_2x2(const RealMatrix& m);

/// Applies the 2x2 operator described by `coeffs` to the one-qubit `target`
/// through a two-ancilla PREPARE/SELECT/UNPREPARE circuit and post-selection
/// of the ancillas on |00>. The weight has the same meaning as in
/// apply_matrix.
WeightedState block_encoded_apply(const PureState& state, const LcuCoefficients& coeffs, RegisterSpan target);

/// Controlled variant. Requires a unit one-norm so that the active and idle
/// branches carry the same block-encoding scale.
WeightedState controlled_block_encoded_apply(const PureState& state, RegisterSpan control, std::string_view pattern,
                                             const LcuCoefficients& coeffs, RegisterSpan target);

struct PermutedBlockTerm {
  RealMatrix block_diagonal;   // 2x2 blocks on the diagonal, zero elsewhere
  std::uint64_t permutation;   // XOR mask over block indices; bits of P_i

  /// Big-endian bits of the permutation over `width` block qubits.
  std::string permutation_bits(unsigned width) const { return to_bits(permutation, width); }
};

struct PermutedBlockDecomposition {
  std::size_t dim = 0;
  std::vector<PermutedBlockTerm> terms;
};

/// (X^{b_0} ⊗ ... ⊗ X^{b_{n-2}}) ⊗ I_2 for the bits of `mask`.
RealMatrix block_permutation_matrix(std::uint64_t mask, std::size_t dim);

/// O = sum_i D_i P_i where block j of D_i is the block of O at (j, j XOR i).
PermutedBlockDecomposition permuted_block_decompose(const RealOperator& o);
RealOperator reconstruct(const PermutedBlockDecomposition& d);

}  // namespace qfl
