#pragma once
// 1D densities as quantile functions. Q_j = F^{-1}((j + 1/2) / n): n equal-mass
// samples, so W2^2 between two densities is (1/n) sum |Q1_j - Q2_j|^2 and the
// constraint rho <= 1 becomes Q_{j+1} - Q_j >= 1/n.

#include <algorithm>
#include <cmath>
#include <vector>

#include "congest/grid.hpp"

namespace congest {

struct QuantileFunction {
  double lower = 0.0;  ///< domain bounds
  double upper = 1.0;
  std::vector<double> q;  ///< nondecreasing samples at s_j = (j + 1/2)/n

  std::size_t size() const { return q.size(); }
  double s(std::size_t j) const { return (static_cast<double>(j) + 0.5) / static_cast<double>(q.size()); }
  bool monotone() const { return std::is_sorted(q.begin(), q.end()); }
};

inline void require_1d(const Grid& g, const char* what) {
  if (g.dim() != 1) throw Error(std::string(what) + ": only one-dimensional grids are supported");
}

/// Inverts the piecewise linear CDF of a cell-wise constant density.
inline QuantileFunction quantiles_of(const DensityField& rho, std::size_t n) {
  const Grid& g = rho.grid();
  require_1d(g, "quantiles_of");
  if (n == 0) throw Error("quantiles_of: need at least one sample");
  const double h = g.h(0);
  const double mass = rho.mass();
  if (!(mass > 0.0)) throw Error("quantiles_of: zero mass");
  QuantileFunction out{g.axis(0).lower, g.axis(0).upper, std::vector<double>(n)};
  std::size_t cell = 0;
  double below = 0.0;  // CDF at the left face of `cell`
  for (std::size_t j = 0; j < n; ++j) {
    const double target = out.s(j) * mass;
    while (cell + 1 < g.cells() && below + rho[cell] * h < target) {
      below += rho[cell] * h;
      ++cell;
    }
    const double left = g.axis(0).face(cell);
    const double frac = rho[cell] > 0.0 ? (target - below) / (rho[cell] * h) : 0.0;
    out.q[j] = std::clamp(left + std::clamp(frac, 0.0, 1.0) * h, out.lower, out.upper);
  }
  return out;
}

/// Each sample carries mass 1/n spread uniformly between the midpoints of
/// its neighbours (end pieces mirror the inner half width, clipped to the
/// domain); the result is averaged onto the grid cells. Spacings >= 1/n give
/// a density <= 1.
inline DensityField density_from_quantiles(const QuantileFunction& qf, const Grid& g) {
  require_1d(g, "density_from_quantiles");
  const std::size_t n = qf.size();
  if (n == 0) throw Error("density_from_quantiles: empty quantile function");
  const double lo = g.axis(0).lower, hi = g.axis(0).upper;
  std::vector<double> edge(n + 1);
  if (n == 1) {
    const double half = 0.5;
    edge[0] = std::max(lo, qf.q[0] - half);
    edge[1] = std::min(hi, qf.q[0] + half);
  } else {
    for (std::size_t j = 1; j < n; ++j) edge[j] = 0.5 * (qf.q[j - 1] + qf.q[j]);
    edge[0] = std::max(lo, qf.q[0] - (edge[1] - qf.q[0]));
    edge[n] = std::min(hi, qf.q[n - 1] + (qf.q[n - 1] - edge[n - 1]));
  }
  const double h = g.h(0);
  const double piece_mass = 1.0 / static_cast<double>(n);
  std::vector<double> cell_mass(g.cells(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = edge[j], b = edge[j + 1];
    if (!(b > a)) {
      // Degenerate piece: drop the mass into the cell containing it.
      const auto c = static_cast<std::size_t>(std::clamp((a - lo) / h, 0.0, static_cast<double>(g.cells() - 1)));
      cell_mass[c] += piece_mass;
      continue;
    }
    const double dens = piece_mass / (b - a);
    auto c0 = static_cast<std::size_t>(std::clamp(std::floor((a - lo) / h), 0.0, static_cast<double>(g.cells() - 1)));
    for (std::size_t c = c0; c < g.cells(); ++c) {
      const double cl = g.axis(0).face(c), cr = g.axis(0).face(c + 1);
      if (cl >= b) break;
      const double overlap = std::min(b, cr) - std::max(a, cl);
      if (overlap > 0.0) cell_mass[c] += dens * overlap;
    }
  }
  for (double& m : cell_mass) m /= h;
  return DensityField(g, std::move(cell_mass));
}

/// Pool-adjacent-violators: the L2-closest nondecreasing sequence (equal weights).
inline std::vector<double> isotonic_regression(const std::vector<double>& y) {
  std::vector<double> level;
  std::vector<std::size_t> count;
  level.reserve(y.size());
  count.reserve(y.size());
  for (double v : y) {
    level.push_back(v);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double w1 = static_cast<double>(count[count.size() - 2]);
      const double w2 = static_cast<double>(count.back());
      const double merged = (w1 * level[level.size() - 2] + w2 * level.back()) / (w1 + w2);
      const std::size_t c = count[count.size() - 2] + count.back();
      level.pop_back();
      count.pop_back();
      level.back() = merged;
      count.back() = c;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), count[b], level[b]);
  return out;
}

/// Euclidean projection of y onto { x : x_{j+1} - x_j >= gap, lo <= x_0, x_{n-1} <= hi }.
/// Substituting r_j = x_j - j*gap turns this into bounded isotonic regression,
/// solved by PAVA followed by clamping.
inline std::vector<double> project_min_spacing(const std::vector<double>& y, double gap, double lo, double hi) {
  const std::size_t n = y.size();
  std::vector<double> r(n);
  for (std::size_t j = 0; j < n; ++j) r[j] = y[j] - static_cast<double>(j) * gap;
  r = isotonic_regression(r);
  const double rhi = hi - static_cast<double>(n == 0 ? 0 : n - 1) * gap;
  if (rhi < lo) throw Error("project_min_spacing: infeasible bounds");
  for (std::size_t j = 0; j < n; ++j) r[j] = std::clamp(r[j], lo, rhi) + static_cast<double>(j) * gap;
  return r;
}

/// W2 between quantile samples on the same s-grid.
inline double w2_squared(const QuantileFunction& a, const QuantileFunction& b) {
  if (a.size() != b.size()) throw Error("w2: sample counts differ");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a.q[j] - b.q[j]) * (a.q[j] - b.q[j]);
  return s / static_cast<double>(a.size());
}

/// Default sample count used when converting grid densities.
inline std::size_t default_quantile_count(const Grid& g) { return std::max<std::size_t>(g.cells(), 64); }

}  // namespace congest
