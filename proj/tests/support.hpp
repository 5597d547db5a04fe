#pragma once
// Hand-rolled generators for the property tests. Every generator draws from
// a caller-owned engine so a failing case is reproducible from its seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "congest/grid.hpp"

namespace congest::testing {

using Engine = std::mt19937_64;

inline double uniform(Engine& e, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(e); }

inline std::size_t pick(Engine& e, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(e);
}

inline ScalarField random_scalar(Engine& e, const Grid& g, double lo = -1.0, double hi = 1.0) {
  ScalarField f(g);
  for (std::size_t c = 0; c < g.cells(); ++c) f[c] = uniform(e, lo, hi);
  return f;
}

/// Random face field with zero walls.
inline FaceField random_faces(Engine& e, const Grid& g, double scale = 1.0) {
  return FaceField::sample(g, [&](int, double, double) { return uniform(e, -scale, scale); });
}

/// Random unit-mass density, strictly positive.
inline DensityField random_density(Engine& e, const Grid& g) {
  std::vector<double> v(g.cells());
  for (double& x : v) x = uniform(e, 0.05, 1.0);
  return DensityField::normalized(g, std::move(v));
}

/// Random unit-mass density with a saturated block and sparse tails: the
/// shape the projection has to handle.
inline DensityField random_crowd(Engine& e, const Grid& g) {
  std::vector<double> v(g.cells(), 0.0);
  const double target = 1.0 / g.cell_volume();  // cells needed for unit mass at rho = 1
  std::size_t full = static_cast<std::size_t>(std::floor(0.6 * target));
  full = std::min(full, g.cells());
  std::vector<std::size_t> order(g.cells());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), e);
  double mass = 0.0;
  for (std::size_t k = 0; k < full; ++k) {
    v[order[k]] = 1.0;
    mass += g.cell_volume();
  }
  // Spread the remaining mass below saturation.
  std::vector<std::size_t> rest(order.begin() + static_cast<long>(full), order.end());
  double weight = 0.0;
  std::vector<double> w(rest.size());
  for (std::size_t k = 0; k < rest.size(); ++k) weight += (w[k] = uniform(e, 0.0, 1.0));
  const double left = 1.0 - mass;
  for (std::size_t k = 0; k < rest.size(); ++k) v[rest[k]] = std::min(0.9, left * w[k] / (weight * g.cell_volume()));
  return DensityField(g, std::move(v));
}

}  // namespace congest::testing
