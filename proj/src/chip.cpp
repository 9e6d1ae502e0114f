#include "qfl/chip.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "qfl/errors.hpp"

namespace qfl {
namespace {

constexpr double kRealTolerance = 1e-9;
constexpr double kUnitOneNorm = 1e-12;

unsigned qubits_for_dim(std::size_t dim) {
  if (dim < 2 || (dim & (dim - 1)) != 0) {
    throw std::invalid_argument("operator dimension " + std::to_string(dim) + " is not a power of two >= 2");
  }
  unsigned n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  return n;
}

// |r><c| as an N x N complex matrix.
ComplexMatrix matrix_unit(std::size_t dim, std::size_t r, std::size_t c) {
  ComplexMatrix m = ComplexMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 1.0;
  return m;
}

ComplexMatrix to_complex(const RealMatrix& m) { return m.cast<Complex>(); }

// Orthogonal (and symmetric) 4x4 whose first column is `v`.
RealMatrix householder_prepare(const Eigen::Vector4d& v) {
  Eigen::Vector4d u = v;
  u[0] -= 1.0;
  const double uu = u.squaredNorm();
  if (uu < 1e-30) return RealMatrix::Identity(4, 4);
  return RealMatrix::Identity(4, 4) - 2.0 * u * u.transpose() / uu;
}

// Shifts a span right by `offset` qubits.
RegisterSpan shifted(RegisterSpan s, unsigned offset) { return {s.start_qubit + offset, s.length}; }

ChipOutput finish_chip(PureState state, double cascade_weight, unsigned passenger, unsigned n, double program_norm) {
  const RegisterSpan column{passenger, n};
  state = hadamard_register(state, column);
  SelectedState selected = post_select(state, column, std::string(n, '0'));

  const std::size_t dim = std::size_t{1} << n;
  const std::size_t branches = std::size_t{1} << passenger;
  ChipOutput out{selected.state, cascade_weight * selected.probability, {}, 0.0, passenger};
  out.scale = 1.0 / (std::sqrt(static_cast<double>(dim)) * program_norm);
  out.extracted = ComplexVector::Zero(static_cast<Eigen::Index>(branches * dim));
  const double amplitude_scale = std::sqrt(out.success_prob);
  for (std::size_t b = 0; b < branches; ++b) {
    for (std::size_t r = 0; r < dim; ++r) {
      const std::size_t joint_index = (b * dim + r) * dim + r;
      out.extracted[static_cast<Eigen::Index>(b * dim + r)] = amplitude_scale * out.joint_state[joint_index];
    }
  }
  return out;
}

}  // namespace

RealOperator::RealOperator(RealMatrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) throw std::invalid_argument("operator must be square");
  num_qubits_ = qubits_for_dim(static_cast<std::size_t>(entries_.rows()));
  if (!entries_.allFinite()) throw std::invalid_argument("operator entries must be finite");
  if (!(entries_.norm() > 0.0)) throw std::invalid_argument("operator has zero Frobenius norm");
}

RealOperator RealOperator::identity(std::size_t dim) {
  return RealOperator(RealMatrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
}

VecEncodedOperator vec_encode(const RealOperator& o) {
  const auto n = static_cast<Eigen::Index>(o.dim());
  ComplexVector amps(n * n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) amps[c * n + r] = o.matrix()(r, c);
  }
  const double norm = o.frobenius_norm();
  return {PureState::from_amplitudes(std::move(amps)), norm};
}

RealOperator vec_decode(const VecEncodedOperator& e) {
  if (e.state.num_qubits() % 2 != 0 || e.state.num_qubits() == 0) {
    throw std::invalid_argument("vec_decode: state must have an even, nonzero number of qubits");
  }
  const auto n = static_cast<Eigen::Index>(std::size_t{1} << e.data_qubits());
  RealMatrix m(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const Complex a = e.state.amplitudes()[c * n + r];
      if (std::abs(a.imag()) > kRealTolerance) {
        throw std::invalid_argument("vec_decode: amplitude " + std::to_string(c * n + r) + " is not real");
      }
      m(r, c) = e.frob_norm * a.real();
    }
  }
  return RealOperator(std::move(m));
}

ChipOutput chip_apply(const VecEncodedOperator& o, const PureState& psi, GateRoute route) {
  if (route == GateRoute::direct) return chip_apply(o.state, 0, o.frob_norm, psi);

  if (o.state.num_qubits() != 2 || psi.num_qubits() != 1) {
    throw std::invalid_argument("chip_apply: the LCU route is defined for 2x2 operators only");
  }
  // Fig. 1 cascade with every matrix unit O_i = |r><c| realized as a
  // block-encoded LCU; all four units have unit one-norm.
  PureState state = tensor(o.state, psi);
  double weight = 1.0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < 2; ++r) {
      const RealMatrix unit = matrix_unit(2, r, c).real();
      WeightedState step = controlled_block_encoded_apply(state, {0, 2}, to_bits(c * 2 + r, 2), lcu_2x2(unit), {2, 1});
      state = std::move(step.state);
      weight *= step.weight;
    }
  }
  return finish_chip(std::move(state), weight, 0, 1, o.frob_norm);
}

ChipOutput chip_apply(const PureState& program, unsigned passenger_qubits, double program_norm,
                      const PureState& psi) {
  const unsigned n = psi.num_qubits();
  if (n == 0 || program.num_qubits() != passenger_qubits + 2 * n) {
    throw std::invalid_argument("chip_apply: program has " + std::to_string(program.num_qubits()) +
                                " qubits, expected " + std::to_string(passenger_qubits + 2 * n));
  }
  if (!(program_norm > 0.0)) throw std::invalid_argument("chip_apply: program norm must be positive");

  const std::size_t dim = std::size_t{1} << n;
  const RegisterSpan selector{passenger_qubits, 2 * n};
  const RegisterSpan data{passenger_qubits + 2 * n, n};

  PureState state = tensor(program, psi);
  double weight = 1.0;
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t r = 0; r < dim; ++r) {
      WeightedState step =
          controlled_apply(state, selector, to_bits(c, n) + to_bits(r, n), matrix_unit(dim, r, c), data);
      state = std::move(step.state);
      weight *= step.weight;
    }
  }
  return finish_chip(std::move(state), weight, passenger_qubits, n, program_norm);
}

double success_probability(const RealOperator& o, const PureState& psi) {
  if (psi.dim() != o.dim()) throw std::invalid_argument("success_probability: dimension mismatch");
  const ComplexVector image = to_complex(o.matrix()) * psi.amplitudes();
  const double frob = o.frobenius_norm();
  return image.squaredNorm() / (static_cast<double>(o.dim()) * frob * frob);
}

RealMatrix LcuCoefficients::reconstruct() const {
  RealMatrix px(2, 2), pz(2, 2);
  px << 0, 1, 1, 0;
  pz << 1, 0, 0, -1;
  return identity * RealMatrix::Identity(2, 2) + x * px + z * pz + xz * (px * pz);
}

double LcuCoefficients::one_norm() const {
  return std::abs(identity) + std::abs(x) + std::abs(z) + std::abs(xz);
}

LcuCoefficients lcu_2x2(const RealMatrix& m) {
  if (m.rows() != 2 || m.cols() != 2) throw std::invalid_argument("lcu_2x2: matrix must be 2x2");
  // Columns are vec(I), vec(X), vec(Z), vec(XZ) in row-major order.
  Eigen::Matrix4d basis;
  basis << 1, 0, 1, 0,
           0, 1, 0, -1,
           0, 1, 0, 1,
           1, 0, -1, 0;
  const Eigen::Vector4d rhs(m(0, 0), m(0, 1), m(1, 0), m(1, 1));
  const Eigen::Vector4d coeffs = basis.partialPivLu().solve(rhs);
  return {coeffs[0], coeffs[1], coeffs[2], coeffs[3]};
}

WeightedState block_encoded_apply(const PureState& state, const LcuCoefficients& coeffs, RegisterSpan target) {
  return controlled_block_encoded_apply(state, {0, 0}, "", coeffs, target);
}

WeightedState controlled_block_encoded_apply(const PureState& state, RegisterSpan control, std::string_view pattern,
                                             const LcuCoefficients& coeffs, RegisterSpan target) {
  const double lambda = coeffs.one_norm();
  if (!(lambda > 0.0)) throw ImpossibleBranch("block encoding of a zero operator");
  const bool controlled = control.length > 0;
  if (controlled && std::abs(lambda - 1.0) > kUnitOneNorm) {
    throw std::invalid_argument("controlled block encoding needs unit one-norm, got " + std::to_string(lambda));
  }
  if (target.length != 1) throw std::invalid_argument("block encoding targets a single qubit");

  const std::array<double, 4> c{coeffs.identity, coeffs.x, coeffs.z, coeffs.xz};
  const std::array<ComplexMatrix, 4> unitaries{ComplexMatrix::Identity(2, 2), pauli_x(), pauli_z(),
                                               pauli_x() * pauli_z()};
  Eigen::Vector4d amplitudes;
  for (int k = 0; k < 4; ++k) amplitudes[k] = std::sqrt(std::abs(c[k]) / lambda);
  const ComplexMatrix prepare = to_complex(householder_prepare(amplitudes));

  // Two ancillas in front of the register.
  const RegisterSpan ancilla{0, 2};
  PureState s = tensor(PureState::basis(2, 0), state);
  s = apply_matrix(s, prepare, ancilla).state;
  for (int k = 0; k < 4; ++k) {
    if (c[k] == 0.0) continue;
    std::vector<Control> controls{{ancilla, to_bits(static_cast<std::uint64_t>(k), 2)}};
    if (controlled) controls.push_back({shifted(control, 2), std::string(pattern)});
    const ComplexMatrix signed_unitary = (c[k] < 0 ? -1.0 : 1.0) * unitaries[static_cast<std::size_t>(k)];
    s = controlled_apply(s, controls, signed_unitary, shifted(target, 2)).state;
  }
  s = apply_matrix(s, prepare.adjoint(), ancilla).state;
  SelectedState selected = post_select(s, ancilla, "00");
  return {std::move(selected.state), selected.probability * lambda * lambda};
}

RealMatrix block_permutation_matrix(std::uint64_t mask, std::size_t dim) {
  const unsigned n = qubits_for_dim(dim);
  RealMatrix x(2, 2);
  x << 0, 1, 1, 0;
  RealMatrix p = RealMatrix::Identity(1, 1);
  for (unsigned j = 0; j + 1 < n; ++j) {
    const bool flip = (mask >> (n - 2 - j)) & 1U;
    p = kron<double>(p, flip ? x : RealMatrix::Identity(2, 2));
  }
  return kron<double>(p, RealMatrix::Identity(2, 2));
}

PermutedBlockDecomposition permuted_block_decompose(const RealOperator& o) {
  const std::size_t dim = o.dim();
  const std::size_t blocks = dim / 2;
  PermutedBlockDecomposition d{dim, {}};
  d.terms.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    PermutedBlockTerm term{RealMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)), i};
    for (std::size_t j = 0; j < blocks; ++j) {
      const auto row = static_cast<Eigen::Index>(2 * j);
      const auto col = static_cast<Eigen::Index>(2 * (j ^ i));
      term.block_diagonal.block(row, row, 2, 2) = o.matrix().block(row, col, 2, 2);
    }
    d.terms.push_back(std::move(term));
  }
  return d;
}

RealOperator reconstruct(const PermutedBlockDecomposition& d) {
  const auto dim = static_cast<Eigen::Index>(d.dim);
  RealMatrix sum = RealMatrix::Zero(dim, dim);
  for (const PermutedBlockTerm& term : d.terms) {
    if (term.block_diagonal.rows() != dim || term.block_diagonal.cols() != dim) {
      throw std::invalid_argument("reconstruct: term dimension differs from decomposition dimension");
    }
    sum += term.block_diagonal * block_permutation_matrix(term.permutation, d.dim);
  }
  return RealOperator(std::move(sum));
}

}  // namespace qfl
