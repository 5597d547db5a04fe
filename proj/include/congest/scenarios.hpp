#pragma once
// Scenario construction: analytic potentials, superlevel sets of unit
// measure and the "nothing moves" equilibrium.
//
// Given Phi with |{Phi > l}| = 1, put A = {Phi > l} and rho0 = 1_A. The
// candidate equilibrium keeps rho_t = rho0 while everybody pushes: with
// Phi_tilde = -|Phi - l| and phi_tilde its Hopf-Lax value function,
//     phi = (1 - 2 1_A) phi_tilde
// solves d_t phi + |grad phi|^2/2 = 0 off A and d_t phi - |grad phi|^2/2 = 0
// on A, and grad p = grad phi on A.

#include <cmath>
#include <string>
#include <vector>

#include "congest/grid.hpp"
#include "congest/hjb.hpp"
#include "congest/mfg.hpp"

namespace congest {

struct LevelResult {
  double level = 0.0;
  double measure = 0.0;  ///< |{Phi > level}| on the grid
  double defect = 0.0;   ///< measure - 1
  bool plateau = false;  ///< measure jumps over 1: no level within one cell
};

/// Discrete measure of the superlevel set {Phi > l}.
inline double superlevel_measure(const ScalarField& phi, double l) {
  std::size_t count = 0;
  for (std::size_t c = 0; c < phi.size(); ++c) count += phi[c] > l ? 1 : 0;
  return static_cast<double>(count) * phi.grid().cell_volume();
}

/// Bisection for |{Phi > l}| = 1. Keeps m(lo) >= 1 > m(hi); stops on an
/// exact hit, otherwise returns the bracket end closest to 1 (the one with
/// m >= 1 on ties).
inline LevelResult find_level(const ScalarField& phi) {
  const double vol = phi.grid().cell_volume();
  if (phi.grid().measure() < 1.0) throw Error("find_level: domain measure below 1");
  double lo = phi.min(), hi = phi.max();
  if (superlevel_measure(phi, lo) < 1.0) {
    throw Error("find_level: |{Phi > min Phi}| < 1, no superlevel set of unit measure");
  }
  const double tol = 1e-9 * vol;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = superlevel_measure(phi, mid);
    if (std::abs(m - 1.0) <= tol) return {mid, m, m - 1.0, false};
    if (m > 1.0) lo = mid;
    else hi = mid;
  }
  const double mlo = superlevel_measure(phi, lo), mhi = superlevel_measure(phi, hi);
  LevelResult r = std::abs(mhi - 1.0) < std::abs(mlo - 1.0) ? LevelResult{hi, mhi, mhi - 1.0, false}
                                                            : LevelResult{lo, mlo, mlo - 1.0, false};
  r.plateau = std::abs(r.defect) > vol * (1.0 + 1e-9);
  return r;
}

struct NothingMovesScenario {
  double level = 0.0;
  double measure_defect = 0.0;
  std::vector<char> in_A;      ///< cell mask of A = {Phi > l}
  ScalarField potential;       ///< Phi - l (positive exactly on A)
  ScalarField tilde_terminal;  ///< -|Phi - l|
  DensityField rho0;           ///< 1_A / |A|
};

inline NothingMovesScenario build_nothing_moves(const ScalarField& phi) {
  const LevelResult lv = find_level(phi);
  if (lv.plateau) throw Error("build_nothing_moves: Phi has a plateau at the unit-measure level");
  NothingMovesScenario s;
  s.level = lv.level;
  s.measure_defect = lv.defect;
  const Grid& g = phi.grid();
  s.potential = phi;
  s.tilde_terminal = ScalarField(g);
  s.in_A.assign(g.cells(), 0);
  std::vector<double> rho(g.cells(), 0.0);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    s.potential[c] = phi[c] - lv.level;
    s.tilde_terminal[c] = -std::abs(s.potential[c]);
    if (s.potential[c] > 0.0) {
      s.in_A[c] = 1;
      rho[c] = 1.0;
    }
  }
  s.rho0 = DensityField::normalized(g, std::move(rho));
  return s;
}

/// Cells whose distance (in cells, per axis) to a cell on the other side of
/// the boundary of A is at most `width`.
inline std::vector<char> collar_mask(const Grid& g, const std::vector<char>& in_A, std::size_t width) {
  std::vector<char> out(g.cells(), 0);
  const auto w = static_cast<long>(width);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const long i = static_cast<long>(g.ix(c)), j = static_cast<long>(g.iy(c));
    const long ny = g.dim() == 2 ? static_cast<long>(g.ny()) : 1;
    for (long dj = (g.dim() == 2 ? -w : 0); dj <= (g.dim() == 2 ? w : 0) && !out[c]; ++dj) {
      for (long di = -w; di <= w; ++di) {
        const long ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.nx()) || jj >= ny) continue;
        if (in_A[g.index(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj))] != in_A[c]) {
          out[c] = 1;
          break;
        }
      }
    }
  }
  return out;
}

/// phi_ref(t_k) = (1 - 2 1_A) hopf_lax(Phi_tilde, t_k, T) at every node.
inline ScalarTrajectory nothing_moves_reference(const NothingMovesScenario& s, const TimeGrid& tg) {
  ScalarTrajectory out(tg, ScalarField(s.potential.grid()));
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    ScalarField f = hopf_lax(s.tilde_terminal, tg.t(k), tg.horizon());
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (s.in_A[c]) f[c] = -f[c];
    }
    out[k] = std::move(f);
  }
  return out;
}

struct NothingMovesThresholds {
  double stationarity = 0.1;
  double pressure_min = -1e-8;
  double pressure_budget = 1e-6;  ///< int_{A^c} p + int int p (1 - rho)
  double mass_drift = 1e-10;
  double value_error = 0.05;
};

struct NothingMovesReport {
  double stationarity = 0.0;       ///< (a) sup_t L1(rho_t, rho0)
  double pressure_min = 0.0;       ///< (b)
  double pressure_outside = 0.0;   ///< (c) int_0^T int_{A^c} p
  double complementarity = 0.0;    ///< (d) int_0^T int p |1 - rho|
  double value_error = 0.0;        ///< (e) sup |phi - phi_ref| off the collar
  double phipm_outside = 0.0;      ///< (f) mean |D_t phi + Q/2| on A^c off the collar
  double phipm_inside = 0.0;       ///< (f) mean |D_t phi - Q/2| on A off the collar
  double phipm_outside_max = 0.0;
  double phipm_inside_max = 0.0;
  double mass_drift = 0.0;
  bool stationarity_ok = false;
  bool pressure_sign_ok = false;
  bool pressure_budget_ok = false;
  bool mass_ok = false;
  bool value_ok = false;

  bool passed() const { return stationarity_ok && pressure_sign_ok && pressure_budget_ok && mass_ok && value_ok; }
};

inline NothingMovesReport verify_nothing_moves(const NothingMovesScenario& s, const MfgSolution& sol,
                                               const NothingMovesThresholds& th = {}, std::size_t collar = 1) {
  const Grid& g = s.potential.grid();
  if (!(sol.rho.grid() == g)) throw Error("verify_nothing_moves: solution grid differs from the scenario");
  const TimeGrid& tg = sol.rho.time;
  const double vol = g.cell_volume(), dt = tg.dt();
  NothingMovesReport r;
  r.pressure_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    r.stationarity = std::max(r.stationarity, l1_distance(sol.rho[k], s.rho0));
    r.pressure_min = std::min(r.pressure_min, sol.p[k].min());
    r.mass_drift = std::max(r.mass_drift, std::abs(sol.rho[k].mass() - 1.0));
    const double wt = (k == 0 || k == tg.steps()) ? 0.5 * dt : dt;
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (!s.in_A[c]) r.pressure_outside += wt * vol * sol.p[k][c];
      r.complementarity += wt * vol * sol.p[k][c] * std::abs(1.0 - sol.rho[k][c]);
    }
  }
  const std::vector<char> skip = collar_mask(g, s.in_A, collar);
  const ScalarTrajectory ref = nothing_moves_reference(s, tg);
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (!skip[c]) r.value_error = std::max(r.value_error, std::abs(sol.phi[k][c] - ref[k][c]));
    }
  }
  double in_w = 0.0, out_w = 0.0;
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    const ScalarField q = face_product(sol.phi[k + 1], sol.phi[k + 1]);
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (skip[c]) continue;
      const double dphi = (sol.phi[k + 1][c] - sol.phi[k][c]) / dt;
      if (s.in_A[c]) {
        const double e = std::abs(dphi - 0.5 * q[c]);
        r.phipm_inside += e * dt * vol;
        r.phipm_inside_max = std::max(r.phipm_inside_max, e);
        in_w += dt * vol;
      } else {
        const double e = std::abs(dphi + 0.5 * q[c]);
        r.phipm_outside += e * dt * vol;
        r.phipm_outside_max = std::max(r.phipm_outside_max, e);
        out_w += dt * vol;
      }
    }
  }
  if (in_w > 0.0) r.phipm_inside /= in_w;
  if (out_w > 0.0) r.phipm_outside /= out_w;
  r.stationarity_ok = r.stationarity <= th.stationarity;
  r.pressure_sign_ok = r.pressure_min >= th.pressure_min;
  r.pressure_budget_ok = r.pressure_outside + r.complementarity <= th.pressure_budget;
  r.mass_ok = r.mass_drift <= th.mass_drift;
  r.value_ok = r.value_error <= th.value_error;
  return r;
}

// ---------------------------------------------------------------------------
// Analytic potential families

/// -|x - c| (1D) or -|x - c| Euclidean (2D).
inline ScalarField cone_potential(const Grid& g, double cx, double cy = 0.0) {
  return ScalarField::sample(g, [&](double x, double y) {
    return g.dim() == 1 ? -std::abs(x - cx) : -std::hypot(x - cx, y - cy);
  });
}

/// depth - k |x - c|^2
inline ScalarField quadratic_well(const Grid& g, double depth, double k, double cx, double cy = 0.0) {
  return ScalarField::sample(g, [&](double x, double y) {
    const double r2 = (x - cx) * (x - cx) + (g.dim() == 2 ? (y - cy) * (y - cy) : 0.0);
    return depth - k * r2;
  });
}

/// -(x - a)^2 (x - b)^2 (1D): two maxima at a and b.
inline ScalarField double_well(const Grid& g, double a, double b, double scale = 1.0) {
  return ScalarField::sample(g, [&](double x) { return -scale * (x - a) * (x - a) * (x - b) * (x - b); });
}

}  // namespace congest
