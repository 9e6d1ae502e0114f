#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "qfl/chip.hpp"
#include "qfl/statevec.hpp"

namespace qfl::testing {

inline RealMatrix random_matrix(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RealMatrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
  return m;
}

inline std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = g(rng);
    sq += x * x;
  }
  for (double& x : v) x /= std::sqrt(sq);
  return v;
}

inline PureState random_state(std::size_t dim, std::mt19937_64& rng) {
  return PureState::from_real(random_unit(dim, rng));
}

inline RealVector as_vector(const std::vector<double>& v) {
  return Eigen::Map<const RealVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace qfl::testing
