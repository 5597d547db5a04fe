#pragma once
// Conservative first-order upwind transport for d_t rho + div(rho v) = 0 with
// no-flux walls, and the weak-form residual used to audit trajectories.

#include <cmath>
#include <cstddef>
#include <utility>

#include "congest/grid.hpp"

namespace congest {

struct CflReport {
  std::array<double, 2> max_speed{0.0, 0.0};
  double dt = 0.0;       ///< macro step requested by the caller
  double cfl = 0.0;      ///< CFL number of each executed substep
  std::size_t substeps = 1;
};

inline constexpr double kMaxCfl = 0.9;

/// dt * max over cells of the outflow rate sum_a (v+_hi + v-_lo) / h_a: the
/// fraction of a cell's mass leaving in one step. Positivity needs <= 1.
inline double cfl_number(const FaceField& v, double dt) {
  const Grid& g = v.grid();
  double worst = 0.0;
  for (std::size_t j = 0; j < g.ny(); ++j) {
    for (std::size_t i = 0; i < g.nx(); ++i) {
      double rate = 0.0;
      for (int a = 0; a < g.dim(); ++a) {
        const auto comp = v.axis(a);
        const double lo = comp[a == 0 ? g.face_index(0, i, j) : g.face_index(1, i, j)];
        const double hi = comp[a == 0 ? g.face_index(0, i + 1, j) : g.face_index(1, i, j + 1)];
        rate += (std::max(hi, 0.0) + std::max(-lo, 0.0)) / g.h(a);
      }
      worst = std::max(worst, rate);
    }
  }
  return dt * worst;
}

/// Upwind mass flux rho_upwind * v on every face (zero on walls).
inline FaceField upwind_flux(const DensityField& rho, const FaceField& v) {
  const Grid& g = rho.grid();
  FaceField flux(g);
  for (int a = 0; a < g.dim(); ++a) {
    const auto vc = v.axis(a);
    auto fc = flux.axis(a);
    for (std::size_t k = 0; k < vc.size(); ++k) {
      if (g.is_boundary_face(a, k) || vc[k] == 0.0) continue;
      const auto [lo, hi] = g.face_cells(a, k);
      fc[k] = vc[k] * (vc[k] > 0.0 ? rho[lo] : rho[hi]);
    }
  }
  return flux;
}

/// One macro step of length dt, internally split so that every substep has
/// CFL <= 0.9. Mass is conserved by telescoping fluxes.
inline std::pair<DensityField, CflReport> advect_step(const DensityField& rho, const FaceField& v, double dt) {
  if (!(dt > 0.0)) throw Error("advect_step: dt must be positive");
  if (!(rho.grid() == v.grid())) throw Error("advect_step: grid mismatch");
  if (!v.finite()) throw Error("advect_step: non-finite velocity");
  if (!v.boundary_is_zero()) throw Error("advect_step: boundary faces must carry zero velocity");

  CflReport rep;
  rep.dt = dt;
  for (int a = 0; a < v.grid().dim(); ++a) rep.max_speed[static_cast<std::size_t>(a)] = v.max_abs(a);
  const double cfl = cfl_number(v, dt);
  rep.substeps = cfl > kMaxCfl ? static_cast<std::size_t>(std::ceil(cfl / kMaxCfl)) : 1;
  const double sub = dt / static_cast<double>(rep.substeps);
  rep.cfl = cfl / static_cast<double>(rep.substeps);

  DensityField cur = rho;
  if (cfl == 0.0) return {cur, rep};
  std::vector<double> next(cur.size());
  for (std::size_t s = 0; s < rep.substeps; ++s) {
    const ScalarField div = divergence(upwind_flux(cur, v));
    for (std::size_t c = 0; c < cur.size(); ++c) {
      // Round-off can produce -1e-17 in emptied cells.
      next[c] = std::max(0.0, cur[c] - sub * div[c]);
    }
    cur = DensityField(rho.grid(), next);
  }
  return {cur, rep};
}

/// rho_{k+1} = advect_step(rho_k, v_k, dt) for k = 0..N-1. The velocity
/// trajectory must have at least N entries; v_N (if present) is unused.
inline DensityTrajectory solve_continuity(const DensityField& rho0, const FaceTrajectory& v, const TimeGrid& tg,
                                          std::vector<CflReport>* reports = nullptr) {
  if (v.size() < tg.steps()) throw Error("solve_continuity: velocity trajectory too short");
  if (std::abs(rho0.mass() - 1.0) > 1e-10) throw Error("solve_continuity: initial density must have unit mass");
  DensityTrajectory out(tg, rho0);
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    auto [next, rep] = advect_step(out[k], v[k], tg.dt());
    out[k + 1] = std::move(next);
    if (reports) reports->push_back(rep);
  }
  return out;
}

/// Discrete version of  integral grad(psi) . v d rho  using the upwind face
/// densities of the transport scheme.
inline double transported_pairing(const ScalarField& psi, const FaceField& v, const DensityField& rho) {
  return inner(gradient(psi), upwind_flux(rho, v));
}

/// max_k | (int psi d rho_{k+1} - int psi d rho_k)/dt - int grad psi . v_k d rho_k |
inline double weak_residual(const DensityTrajectory& rho, const FaceTrajectory& v, const ScalarField& psi) {
  if (!rho.consistent()) throw Error("weak_residual: inconsistent density trajectory");
  const double dt = rho.time.dt();
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < rho.size(); ++k) {
    const double lhs = (integrate(psi, rho[k + 1]) - integrate(psi, rho[k])) / dt;
    const double rhs = transported_pairing(psi, v[k], rho[k]);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

}  // namespace congest
