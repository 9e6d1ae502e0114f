#include "qfl/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qfl/errors.hpp"
#include "qfl/linalg.hpp"

namespace qfl {
namespace {

constexpr double kDegenerate = 1e-12;

RealMatrix ry_real(double angle) {
  RealMatrix m(2, 2);
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  m << c, -s, s, c;
  return m;
}

// Diagonal of the CZ ring as +-1 entries.
RealVector entangler_diagonal(unsigned n) {
  const std::size_t dim = std::size_t{1} << n;
  std::vector<std::pair<unsigned, unsigned>> pairs;
  if (n == 2) {
    pairs.emplace_back(0, 1);
  } else if (n > 2) {
    for (unsigned q = 0; q < n; ++q) pairs.emplace_back(q, (q + 1) % n);
  }
  RealVector diag = RealVector::Ones(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    for (auto [a, b] : pairs) {
      const bool qa = (i >> (n - 1 - a)) & 1U;
      const bool qb = (i >> (n - 1 - b)) & 1U;
      if (qa && qb) diag[static_cast<Eigen::Index>(i)] = -diag[static_cast<Eigen::Index>(i)];
    }
  }
  return diag;
}

void check_theta(const AnsatzSpec& spec, const ParamVector& theta) {
  if (spec.num_qubits == 0 || spec.num_layers == 0) throw std::invalid_argument("ansatz needs qubits and layers");
  if (theta.size() != spec.num_params()) {
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " entries, ansatz needs " +
                                std::to_string(spec.num_params()));
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw std::invalid_argument("theta must be finite");
  }
}

void check_example(const AnsatzSpec& spec, const LabeledExample& ex) {
  if (ex.x.dim() != spec.dim() || ex.y.dim() != spec.dim()) {
    throw std::invalid_argument("example dimension does not match the ansatz");
  }
}

void check_shift(double shift) {
  if (!std::isfinite(shift)) throw std::invalid_argument("shift must be finite");
  if (std::abs(std::sin(shift / 2.0)) < kDegenerate) {
    throw DegenerateShift("shift " + std::to_string(shift) + " maps theta + s and theta - s to the same operator");
  }
  if (!(shift > 0.0 && shift < 2.0 * std::numbers::pi)) {
    throw std::invalid_argument("shift must lie in (0, 2*pi)");
  }
}

void check_index(const AnsatzSpec& spec, std::size_t index) {
  if (index >= spec.num_params()) {
    throw std::invalid_argument("parameter index " + std::to_string(index) + " out of range");
  }
}

// O(theta + s e_i) - O(theta - s e_i)
RealMatrix shift_difference(const AnsatzSpec& spec, const ParamVector& theta, std::size_t index, double shift) {
  ParamVector plus = theta;
  ParamVector minus = theta;
  plus[index] += shift;
  minus[index] -= shift;
  return build_operator(spec, plus).matrix() - build_operator(spec, minus).matrix();
}

// Column-major flatten of `m` into out[offset ...].
void append_vec(const RealMatrix& m, ComplexVector& out, Eigen::Index offset) {
  const Eigen::Index n = m.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) out[offset + c * n + r] = m(r, c);
  }
}

ShiftState finish(ComplexVector program, unsigned index_qubits, ShiftStateSpec spec) {
  spec.descale = program.norm();
  if (spec.descale < kDegenerate) throw DegenerateShift("shift state vanishes");
  return {PureState::from_amplitudes(std::move(program)), index_qubits, std::move(spec)};
}

}  // namespace

RealOperator build_operator(const AnsatzSpec& spec, const ParamVector& theta) {
  check_theta(spec, theta);
  const unsigned n = spec.num_qubits;
  const auto dim = static_cast<Eigen::Index>(spec.dim());
  const RealVector entangler = entangler_diagonal(n);
  RealMatrix op = RealMatrix::Identity(dim, dim);
  for (unsigned layer = 0; layer < spec.num_layers; ++layer) {
    RealMatrix rotations = RealMatrix::Identity(1, 1);
    for (unsigned q = 0; q < n; ++q) rotations = kron<double>(rotations, ry_real(theta[layer * n + q]));
    op = entangler.asDiagonal() * (rotations * op);
  }
  return RealOperator(std::move(op));
}

double loss(const AnsatzSpec& spec, const ParamVector& theta, const LabeledExample& ex) {
  check_example(spec, ex);
  const ComplexVector image = build_operator(spec, theta).matrix().cast<Complex>() * ex.x.amplitudes();
  return ex.y.amplitudes().dot(image).real();
}

std::vector<double> exact_gradient(const AnsatzSpec& spec, const ParamVector& theta, const LabeledExample& ex) {
  check_theta(spec, theta);
  check_example(spec, ex);
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    ParamVector plus = theta;
    ParamVector minus = theta;
    plus[i] += std::numbers::pi;
    minus[i] -= std::numbers::pi;
    grad[i] = (loss(spec, plus, ex) - loss(spec, minus, ex)) / 4.0;
  }
  return grad;
}

ShiftState prepare_shift_state(const AnsatzSpec& spec, const ParamVector& theta, std::size_t index, double shift) {
  check_theta(spec, theta);
  check_index(spec, index);
  check_shift(shift);
  const auto dim = static_cast<Eigen::Index>(spec.dim());
  ComplexVector program(dim * dim);
  append_vec(shift_difference(spec, theta, index, shift), program, 0);
  return finish(std::move(program), 0, {ShiftMode::single, {index}, shift, 1.0});
}

ShiftState prepare_multi_shift_state(const AnsatzSpec& spec, const ParamVector& theta,
                                     const std::vector<std::size_t>& indices, double shift) {
  check_theta(spec, theta);
  check_shift(shift);
  if (indices.empty()) throw std::invalid_argument("multi shift needs at least one index");
  const auto dim = static_cast<Eigen::Index>(spec.dim());
  RealMatrix total = RealMatrix::Zero(dim, dim);
  for (std::size_t i : indices) {
    check_index(spec, i);
    total += shift_difference(spec, theta, i, shift);
  }
  ComplexVector program(dim * dim);
  append_vec(total, program, 0);
  return finish(std::move(program), 0, {ShiftMode::multi, indices, shift, 1.0});
}

ShiftState prepare_indexed_shift_state(const AnsatzSpec& spec, const ParamVector& theta,
                                       const std::vector<std::size_t>& indices, double shift) {
  check_theta(spec, theta);
  check_shift(shift);
  if (indices.size() < 2) throw std::invalid_argument("indexed shift needs at least two indices");
  const unsigned index_qubits = index_register_qubits(indices.size());
  // The chip adds n data qubits on top of the program register.
  if (index_qubits + 3 * spec.num_qubits > kMaxQubits) {
    throw std::invalid_argument("index register overflow: " + std::to_string(index_qubits) +
                                " index qubits do not fit the simulator");
  }
  const auto dim = static_cast<Eigen::Index>(spec.dim());
  const Eigen::Index block = dim * dim;
  ComplexVector program = ComplexVector::Zero(block << index_qubits);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    check_index(spec, indices[k]);
    append_vec(shift_difference(spec, theta, indices[k], shift), program, static_cast<Eigen::Index>(k) * block);
  }
  return finish(std::move(program), index_qubits, {ShiftMode::indexed, indices, shift, 1.0});
}

unsigned index_register_qubits(std::size_t count) {
  unsigned q = 0;
  while ((std::size_t{1} << q) < count) ++q;
  return q;
}

PureState doubled_target(const PureState& y) {
  const std::size_t dim = y.dim();
  ComplexVector t = ComplexVector::Zero(static_cast<Eigen::Index>(dim * dim));
  for (std::size_t r = 0; r < dim; ++r) t[static_cast<Eigen::Index>(r * dim + r)] = y[r];
  return PureState::from_amplitudes(std::move(t));
}

double recover_partials(double raw, const ShiftStateSpec& spec, std::size_t dim) {
  if (spec.mode == ShiftMode::indexed) throw std::invalid_argument("indexed shift states recover a vector");
  return raw * spec.descale * std::sqrt(static_cast<double>(dim)) / (4.0 * std::sin(spec.shift / 2.0));
}

std::vector<double> recover_partials(const std::vector<double>& raw, const ShiftStateSpec& spec, std::size_t dim) {
  if (spec.mode != ShiftMode::indexed || raw.size() != spec.indices.size()) {
    throw std::invalid_argument("recover_partials: raw values do not match the shift state");
  }
  const double factor = spec.descale * std::sqrt(static_cast<double>(dim)) / (4.0 * std::sin(spec.shift / 2.0));
  std::vector<double> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = raw[k] * factor;
  return out;
}

}  // namespace qfl
