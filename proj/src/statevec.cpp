#include "qfl/statevec.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "qfl/errors.hpp"

namespace qfl {
namespace {

constexpr double kZeroNorm = 1e-30;
constexpr double kImpossibleBranch = 1e-15;

unsigned log2_exact(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("length " + std::to_string(n) + " is not a power of two");
  }
  unsigned k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

void check_span(const PureState& state, RegisterSpan span, const char* what) {
  if (span.length == 0 || span.end() > state.num_qubits()) {
    throw std::invalid_argument(std::string(what) + ": span [" + std::to_string(span.start_qubit) + ", " +
                                std::to_string(span.end()) + ") does not fit " +
                                std::to_string(state.num_qubits()) + " qubits");
  }
}

// Bit offset of the least significant qubit of `span`.
unsigned shift_of(unsigned num_qubits, RegisterSpan span) { return num_qubits - span.end(); }

std::uint64_t mask_of(unsigned num_qubits, RegisterSpan span) {
  return ((std::uint64_t{1} << span.length) - 1) << shift_of(num_qubits, span);
}

std::uint64_t read_span(std::uint64_t index, unsigned num_qubits, RegisterSpan span) {
  return (index >> shift_of(num_qubits, span)) & ((std::uint64_t{1} << span.length) - 1);
}

// Applies m to `target` for every base index accepted by `active`.
template <typename Predicate>
ComplexVector apply_on_subspace(const PureState& state, const ComplexMatrix& m, RegisterSpan target,
                                Predicate active) {
  const unsigned n = state.num_qubits();
  const std::uint64_t target_mask = mask_of(n, target);
  const unsigned shift = shift_of(n, target);
  const auto block = static_cast<Eigen::Index>(std::uint64_t{1} << target.length);

  ComplexVector out = state.amplitudes();
  ComplexVector gathered(block);
  for (std::uint64_t base = 0; base < state.dim(); ++base) {
    if ((base & target_mask) != 0 || !active(base)) continue;
    for (Eigen::Index t = 0; t < block; ++t) {
      gathered[t] = out[static_cast<Eigen::Index>(base | (static_cast<std::uint64_t>(t) << shift))];
    }
    const ComplexVector image = m * gathered;
    for (Eigen::Index t = 0; t < block; ++t) {
      out[static_cast<Eigen::Index>(base | (static_cast<std::uint64_t>(t) << shift))] = image[t];
    }
  }
  return out;
}

WeightedState renormalize(ComplexVector amplitudes, const char* what) {
  const double weight = amplitudes.squaredNorm();
  if (!(weight > kZeroNorm)) {
    throw ImpossibleBranch(std::string(what) + ": operator annihilated the state");
  }
  return {PureState::from_amplitudes(std::move(amplitudes)), weight};
}

void check_matrix(const ComplexMatrix& m, RegisterSpan span) {
  const auto expected = static_cast<Eigen::Index>(std::uint64_t{1} << span.length);
  if (m.rows() != expected || m.cols() != expected) {
    throw std::invalid_argument("matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                ", span needs " + std::to_string(expected) + "x" + std::to_string(expected));
  }
}

}  // namespace

PureState PureState::basis(unsigned num_qubits, std::uint64_t index) {
  if (num_qubits > kMaxQubits) throw std::invalid_argument("too many qubits");
  const std::uint64_t dim = std::uint64_t{1} << num_qubits;
  if (index >= dim) throw std::invalid_argument("basis index out of range");
  ComplexVector amps = ComplexVector::Zero(static_cast<Eigen::Index>(dim));
  amps[static_cast<Eigen::Index>(index)] = 1.0;
  return PureState(num_qubits, std::move(amps));
}

PureState PureState::from_amplitudes(ComplexVector amplitudes) {
  const unsigned n = log2_exact(static_cast<std::size_t>(amplitudes.size()));
  if (n > kMaxQubits) throw std::invalid_argument("too many qubits");
  if (!amplitudes.allFinite()) throw std::invalid_argument("amplitudes must be finite");
  const double norm = amplitudes.norm();
  if (!(norm * norm > kZeroNorm)) throw ImpossibleBranch("cannot normalize a zero vector");
  amplitudes /= norm;
  return PureState(n, std::move(amplitudes));
}

PureState PureState::from_real(const std::vector<double>& amplitudes) {
  ComplexVector v(static_cast<Eigen::Index>(amplitudes.size()));
  for (std::size_t i = 0; i < amplitudes.size(); ++i) v[static_cast<Eigen::Index>(i)] = amplitudes[i];
  return from_amplitudes(std::move(v));
}

PureState tensor(const PureState& a, const PureState& b) {
  if (a.num_qubits() + b.num_qubits() > kMaxQubits) throw std::invalid_argument("too many qubits");
  ComplexVector out(static_cast<Eigen::Index>(a.dim() * b.dim()));
  const auto bd = static_cast<Eigen::Index>(b.dim());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(a.dim()); ++i) {
    out.segment(i * bd, bd) = a.amplitudes()[i] * b.amplitudes();
  }
  return PureState::from_amplitudes(std::move(out));
}

WeightedState apply_matrix(const PureState& state, const ComplexMatrix& m, RegisterSpan span) {
  check_span(state, span, "apply_matrix");
  check_matrix(m, span);
  return renormalize(apply_on_subspace(state, m, span, [](std::uint64_t) { return true; }), "apply_matrix");
}

WeightedState controlled_apply(const PureState& state, RegisterSpan control, std::string_view pattern,
                               const ComplexMatrix& m, RegisterSpan target) {
  const Control c{control, std::string(pattern)};
  return controlled_apply(state, std::span<const Control>(&c, 1), m, target);
}

WeightedState controlled_apply(const PureState& state, std::span<const Control> controls, const ComplexMatrix& m,
                               RegisterSpan target) {
  check_span(state, target, "controlled_apply target");
  check_matrix(m, target);
  std::vector<std::uint64_t> wanted;
  for (const Control& c : controls) {
    check_span(state, c.span, "controlled_apply control");
    if (c.span.overlaps(target)) throw std::invalid_argument("controlled_apply: control and target overlap");
    if (c.pattern.size() != c.span.length) {
      throw std::invalid_argument("controlled_apply: pattern length differs from control span");
    }
    wanted.push_back(from_bits(c.pattern));
  }
  const unsigned n = state.num_qubits();
  auto active = [&](std::uint64_t base) {
    for (std::size_t k = 0; k < controls.size(); ++k) {
      if (read_span(base, n, controls[k].span) != wanted[k]) return false;
    }
    return true;
  };
  return renormalize(apply_on_subspace(state, m, target, active), "controlled_apply");
}

PureState hadamard_register(const PureState& state, RegisterSpan span) {
  check_span(state, span, "hadamard_register");
  const ComplexMatrix h = hadamard();
  PureState out = state;
  for (unsigned q = span.start_qubit; q < span.end(); ++q) {
    out = apply_matrix(out, h, {q, 1}).state;
  }
  return out;
}

SelectedState post_select(const PureState& state, RegisterSpan span, std::string_view value) {
  check_span(state, span, "post_select");
  if (value.size() != span.length) throw std::invalid_argument("post_select: value length differs from span");
  const std::uint64_t want = from_bits(value);
  const unsigned n = state.num_qubits();
  const unsigned rest = n - span.length;

  const unsigned low_bits = shift_of(n, span);
  const std::uint64_t low_mask = (std::uint64_t{1} << low_bits) - 1;
  ComplexVector kept = ComplexVector::Zero(static_cast<Eigen::Index>(std::uint64_t{1} << rest));
  for (std::uint64_t i = 0; i < state.dim(); ++i) {
    if (read_span(i, n, span) != want) continue;
    const std::uint64_t high = i >> (low_bits + span.length);
    const std::uint64_t compact = (high << low_bits) | (i & low_mask);
    kept[static_cast<Eigen::Index>(compact)] = state.amplitudes()[static_cast<Eigen::Index>(i)];
  }
  const double probability = kept.squaredNorm();
  if (probability < kImpossibleBranch) {
    throw ImpossibleBranch("post_select: outcome " + std::string(value) + " has probability " +
                           std::to_string(probability));
  }
  return {PureState::from_amplitudes(std::move(kept)), probability};
}

Complex inner_product(const PureState& a, const PureState& b) {
  if (a.num_qubits() != b.num_qubits()) throw std::invalid_argument("inner_product: dimension mismatch");
  return a.amplitudes().dot(b.amplitudes());
}

std::vector<double> marginal_probabilities(const PureState& state, RegisterSpan span) {
  check_span(state, span, "marginal_probabilities");
  std::vector<double> probs(std::size_t{1} << span.length, 0.0);
  for (std::uint64_t i = 0; i < state.dim(); ++i) {
    probs[read_span(i, state.num_qubits(), span)] += std::norm(state.amplitudes()[static_cast<Eigen::Index>(i)]);
  }
  return probs;
}

std::vector<MeasurementSample> sample(const PureState& state, RegisterSpan span, std::uint64_t shots,
                                      std::uint64_t seed) {
  if (shots == 0) throw std::invalid_argument("sample: shots must be positive");
  const std::vector<double> probs = marginal_probabilities(state, span);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
  std::vector<std::uint64_t> counts(probs.size(), 0);
  for (std::uint64_t s = 0; s < shots; ++s) ++counts[dist(rng)];

  std::vector<MeasurementSample> out;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    if (counts[v] > 0) out.push_back({to_bits(v, span.length), counts[v]});
  }
  return out;
}

double overlap_real_estimate(const PureState& a, const PureState& b, std::optional<std::uint64_t> shots,
                             std::uint64_t seed) {
  const double exact = inner_product(a, b).real();
  if (!shots) return exact;
  if (*shots == 0) throw std::invalid_argument("overlap_real_estimate: shots must be positive");
  const double p = std::clamp((1.0 + exact) / 2.0, 0.0, 1.0);
  std::mt19937_64 rng(seed);
  std::binomial_distribution<std::uint64_t> dist(*shots, p);
  const auto zeros = static_cast<double>(dist(rng));
  return 2.0 * zeros / static_cast<double>(*shots) - 1.0;
}

double overlap_standard_error(double overlap, std::uint64_t shots) {
  const double var = std::max(0.0, 1.0 - overlap * overlap);
  return std::sqrt(var / static_cast<double>(shots));
}

ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

ComplexMatrix hadamard() {
  ComplexMatrix m(2, 2);
  const double r = 1.0 / std::sqrt(2.0);
  m << r, r, r, -r;
  return m;
}

ComplexMatrix ry(double angle) {
  ComplexMatrix m(2, 2);
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  m << c, -s, s, c;
  return m;
}

std::string to_bits(std::uint64_t value, unsigned width) {
  std::string bits(width, '0');
  for (unsigned i = 0; i < width; ++i) {
    if ((value >> (width - 1 - i)) & 1U) bits[i] = '1';
  }
  return bits;
}

std::uint64_t from_bits(std::string_view bits) {
  if (bits.size() > 63) throw std::invalid_argument("bitstring too long");
  std::uint64_t value = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') throw std::invalid_argument("bitstring has non-binary character");
    value = (value << 1) | static_cast<std::uint64_t>(c == '1');
  }
  return value;
}

}  // namespace qfl
