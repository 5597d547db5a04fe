#pragma once
// Constrained Benamou-Brenier problem in momentum variables:
//
//   min_{0 <= rho <= 1}  sum dt vol B(rho_bar, q) - sum vol Phi rho_N
//   s.t. (rho_{k+1} - rho_k)/dt + div q_k = 0,  k = 0..N-1,  rho_0 given,
//
// with B(r, q) = |q|^2 / (2r) the perspective of the kinetic energy and
// rho_bar the average of the four cell/time values around a face and an
// interval. Solved by Chambolle-Pock with the continuity constraint and the
// kinetic term on the dual side; chi (the multiplier of the continuity
// equation) lives on the N time intervals.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "congest/gradient_flow.hpp"
#include "congest/grid.hpp"
#include "congest/hjb.hpp"
#include "congest/mfg.hpp"

namespace congest {

/// B(r, q) with the lower semicontinuous conventions at r = 0.
inline double perspective(double r, double q) {
  if (r > 0.0) return q * q / (2.0 * r);
  if (q == 0.0 && r == 0.0) return 0.0;
  return std::numeric_limits<double>::infinity();
}

namespace detail {

// Face density averaged over the two adjacent cells and the two nodes.
inline double face_average(const Grid& g, int a, std::size_t f, const DensityField& r0, const DensityField& r1) {
  const auto [lo, hi] = g.face_cells(a, f);
  return 0.25 * (r0[lo] + r0[hi] + r1[lo] + r1[hi]);
}

}  // namespace detail

/// sum_k sum_faces dt vol B(rho_bar_{k,f}, q_{k,f}); +infinity if some face
/// carries momentum with zero density. q has one face field per interval.
inline double kinetic_energy(const DensityTrajectory& rho, const std::vector<FaceField>& q) {
  const TimeGrid& tg = rho.time;
  if (q.size() != tg.steps()) throw Error("kinetic_energy: need one momentum field per time interval");
  const Grid& g = rho.grid();
  const double w = tg.dt() * g.cell_volume();
  double e = 0.0;
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    for (int a = 0; a < g.dim(); ++a) {
      const auto qa = q[k].axis(a);
      for (std::size_t f = 0; f < qa.size(); ++f) {
        if (g.is_boundary_face(a, f)) continue;
        e += w * perspective(detail::face_average(g, a, f, rho[k], rho[k + 1]), qa[f]);
      }
    }
  }
  return e;
}

/// Euclidean projection onto { (a, b) : a + b^2/2 <= 0 }, the domain of the
/// conjugate of B. By the Moreau identity this is the prox step of B seen
/// from the dual side. The multiplier solves a monotone convex scalar
/// equation; Newton from the left cannot overshoot, bisection guards it.
inline std::pair<double, double> project_parabola(double a0, double b0) {
  if (a0 + 0.5 * b0 * b0 <= 0.0) return {a0, b0};
  auto f = [&](double l) { return a0 - l + 0.5 * b0 * b0 / ((1.0 + l) * (1.0 + l)); };
  double lo = 0.0, hi = std::max(0.0, a0) + 0.5 * b0 * b0;
  double l = 0.0;
  for (int it = 0; it < 50; ++it) {
    const double fl = f(l);
    if (std::abs(fl) <= 1e-12 * (1.0 + std::abs(a0) + b0 * b0)) break;
    if (fl > 0.0) lo = l;
    else hi = l;
    const double df = -1.0 - b0 * b0 / ((1.0 + l) * (1.0 + l) * (1.0 + l));
    double next = l - fl / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    l = next;
  }
  const double b = b0 / (1.0 + l);
  return {-0.5 * b * b, b};
}

struct BbConfig {
  std::size_t iterations = 5000;
  double sigma = 0.0;            ///< dual step (0: from the operator norm)
  double tau = 0.0;              ///< primal step (0: from the operator norm)
  double step_ratio = 1.0;       ///< sigma / tau when the steps are derived
  double gap_tolerance = 1e-6;
  double feasibility_tolerance = 1e-6;
  std::size_t check_every = 10;
  std::size_t power_iterations = 60;
  bool warm_start = true;        ///< chi from the unconstrained value function
  DensityThresholds thresholds{};
};

struct BbHistoryEntry {
  std::size_t iteration = 0;
  double primal = 0.0, dual = 0.0, gap = 0.0, feasibility = 0.0;
};

struct BbIterate {
  DensityTrajectory rho;         ///< nodes 0..N, rho_0 = initial datum
  std::vector<FaceField> q;      ///< one per interval
  std::vector<ScalarField> chi;  ///< one per interval
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double feasibility = 0.0;      ///< sum dt vol |continuity residual|
  double operator_norm = 0.0;
  double sigma = 0.0, tau = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::string message;
  std::vector<BbHistoryEntry> history;
};

namespace detail {

// Flat storage: cells and faces per interval / node.
struct BbLayout {
  Grid g;
  std::size_t n_steps = 0, cells = 0, faces = 0;
  std::array<std::size_t, 2> offset{0, 0};  // face offsets per axis
  double dt = 0.0;

  BbLayout(const Grid& grid, const TimeGrid& tg) : g(grid), n_steps(tg.steps()), cells(grid.cells()), dt(tg.dt()) {
    offset[0] = 0;
    offset[1] = grid.faces(0);
    faces = grid.faces(0) + grid.faces(1);
  }
  std::size_t fid(int a, std::size_t f) const { return offset[static_cast<std::size_t>(a)] + f; }
};

struct BbState {
  std::vector<double> rho;  // nodes 1..N, (k-1)*cells + c
  std::vector<double> q;    // intervals 0..N-1
  std::vector<double> chi;  // intervals
  std::vector<double> zr, zq;
};

// Interior face -> adjacent cells, in flat face numbering.
struct FaceTable {
  std::vector<std::size_t> lo, hi;
  std::vector<char> interior;
  std::vector<std::array<std::size_t, 4>> cell_faces;  // per cell, up to 4 interior faces
  std::vector<int> cell_face_count;
  std::vector<int> axis_of;
  std::vector<double> inv_h;
};

inline FaceTable face_table(const BbLayout& L) {
  FaceTable t;
  t.lo.assign(L.faces, 0);
  t.hi.assign(L.faces, 0);
  t.interior.assign(L.faces, 0);
  t.axis_of.assign(L.faces, 0);
  t.inv_h.assign(L.faces, 0.0);
  t.cell_faces.assign(L.cells, {});
  t.cell_face_count.assign(L.cells, 0);
  for (int a = 0; a < L.g.dim(); ++a) {
    for (std::size_t f = 0; f < L.g.faces(a); ++f) {
      const std::size_t id = L.fid(a, f);
      t.axis_of[id] = a;
      t.inv_h[id] = 1.0 / L.g.h(a);
      if (L.g.is_boundary_face(a, f)) continue;
      const auto [lo, hi] = L.g.face_cells(a, f);
      t.lo[id] = lo;
      t.hi[id] = hi;
      t.interior[id] = 1;
      for (std::size_t c : {lo, hi}) t.cell_faces[c][static_cast<std::size_t>(t.cell_face_count[c]++)] = id;
    }
  }
  return t;
}

struct BbOperator {
  const BbLayout& L;
  const FaceTable& T;
  const std::vector<double>& rho0;

  // Node value with rho_0 as given constant (or zero for the linear part).
  double node(const std::vector<double>& rho, std::size_t k, std::size_t c, bool with_rho0) const {
    if (k == 0) return with_rho0 ? rho0[c] : 0.0;
    return rho[(k - 1) * L.cells + c];
  }

  // Continuity residual (rho_{k+1} - rho_k)/dt + div q_k.
  void continuity(const std::vector<double>& rho, const std::vector<double>& q, bool with_rho0,
                  std::vector<double>& out) const {
    out.assign(L.n_steps * L.cells, 0.0);
    for (std::size_t k = 0; k < L.n_steps; ++k) {
      double* o = &out[k * L.cells];
      for (std::size_t c = 0; c < L.cells; ++c) o[c] = (node(rho, k + 1, c, with_rho0) - node(rho, k, c, with_rho0)) / L.dt;
      const double* qk = &q[k * L.faces];
      for (std::size_t f = 0; f < L.faces; ++f) {
        if (!T.interior[f]) continue;
        const double flux = qk[f] * T.inv_h[f];
        o[T.lo[f]] += flux;
        o[T.hi[f]] -= flux;
      }
    }
  }

  // rho_bar on faces per interval.
  void interpolate(const std::vector<double>& rho, bool with_rho0, std::vector<double>& out) const {
    out.assign(L.n_steps * L.faces, 0.0);
    for (std::size_t k = 0; k < L.n_steps; ++k) {
      for (std::size_t f = 0; f < L.faces; ++f) {
        if (!T.interior[f]) continue;
        out[k * L.faces + f] = 0.25 * (node(rho, k, T.lo[f], with_rho0) + node(rho, k, T.hi[f], with_rho0) +
                                       node(rho, k + 1, T.lo[f], with_rho0) + node(rho, k + 1, T.hi[f], with_rho0));
      }
    }
  }

  // Adjoint: (chi, zr, zq) -> (rho part, q part).
  void adjoint(const std::vector<double>& chi, const std::vector<double>& zr, const std::vector<double>& zq,
               std::vector<double>& grho, std::vector<double>& gq) const {
    grho.assign(L.n_steps * L.cells, 0.0);
    gq.assign(L.n_steps * L.faces, 0.0);
    for (std::size_t j = 1; j <= L.n_steps; ++j) {
      double* o = &grho[(j - 1) * L.cells];
      const double* cprev = &chi[(j - 1) * L.cells];
      for (std::size_t c = 0; c < L.cells; ++c) {
        const double cnext = j < L.n_steps ? chi[j * L.cells + c] : 0.0;
        o[c] = (cprev[c] - cnext) / L.dt;
      }
      for (std::size_t f = 0; f < L.faces; ++f) {
        if (!T.interior[f]) continue;
        double z = zr[(j - 1) * L.faces + f];
        if (j < L.n_steps) z += zr[j * L.faces + f];
        o[T.lo[f]] += 0.25 * z;
        o[T.hi[f]] += 0.25 * z;
      }
    }
    for (std::size_t k = 0; k < L.n_steps; ++k) {
      const double* ck = &chi[k * L.cells];
      for (std::size_t f = 0; f < L.faces; ++f) {
        if (!T.interior[f]) continue;
        gq[k * L.faces + f] = -(ck[T.hi[f]] - ck[T.lo[f]]) * T.inv_h[f] + zq[k * L.faces + f];
      }
    }
  }
};

}  // namespace detail

namespace detail {

struct BbEvaluation {
  double primal = 0.0, dual = 0.0, feasibility = 0.0;
};

// Primal objective, exact Lagrangian dual of chi, continuity residual.
inline BbEvaluation bb_evaluate(const BbLayout& L, const FaceTable& T, const BbOperator& K,
                                const std::vector<double>& rho, const std::vector<double>& q,
                                const std::vector<double>& chi, const ScalarField& phi) {
  BbEvaluation ev;
  const double vol = L.g.cell_volume();
  const double w = L.dt * vol;
  std::vector<double> rbar, res;
  K.interpolate(rho, true, rbar);
  for (std::size_t i = 0; i < rbar.size(); ++i) {
    if (!T.interior[i % L.faces]) continue;
    ev.primal += w * perspective(rbar[i], q[i]);
  }
  for (std::size_t c = 0; c < L.cells; ++c) ev.primal -= vol * phi[c] * rho[(L.n_steps - 1) * L.cells + c];
  K.continuity(rho, q, true, res);
  for (double r : res) ev.feasibility += w * std::abs(r);

  // Dual: minimize the Lagrangian over q (closed form) and over rho in [0, 1].
  std::vector<double> g2(L.n_steps * L.faces, 0.0);
  for (std::size_t k = 0; k < L.n_steps; ++k) {
    for (std::size_t f = 0; f < L.faces; ++f) {
      if (!T.interior[f]) continue;
      const double gr = (chi[k * L.cells + T.hi[f]] - chi[k * L.cells + T.lo[f]]) * T.inv_h[f];
      g2[k * L.faces + f] = gr * gr;
    }
  }
  double dual = 0.0;
  for (std::size_t c = 0; c < L.cells; ++c) dual -= vol * chi[c] * K.rho0[c];
  for (std::size_t f = 0; f < L.faces; ++f) {
    if (!T.interior[f]) continue;
    dual -= w * 0.25 * (K.rho0[T.lo[f]] + K.rho0[T.hi[f]]) * 0.5 * g2[f];
  }
  for (std::size_t j = 1; j <= L.n_steps; ++j) {
    for (std::size_t c = 0; c < L.cells; ++c) {
      double coef = vol * chi[(j - 1) * L.cells + c];
      if (j < L.n_steps) coef -= vol * chi[j * L.cells + c];
      else coef -= vol * phi[c];
      double kin = 0.0;
      for (int m = 0; m < T.cell_face_count[c]; ++m) {
        const std::size_t f = T.cell_faces[c][static_cast<std::size_t>(m)];
        kin += g2[(j - 1) * L.faces + f];
        if (j < L.n_steps) kin += g2[j * L.faces + f];
      }
      coef -= w * 0.125 * kin;
      dual += std::min(0.0, coef);
    }
  }
  ev.dual = dual;
  return ev;
}

}  // namespace detail

/// Chambolle-Pock on the saddle problem. Steps satisfy sigma tau |K|^2 < 1
/// with |K| estimated by power iteration.
inline BbIterate solve_bb_constrained(const DensityField& rho0, const ScalarField& phi, const TimeGrid& tg,
                                      const BbConfig& cfg = {}) {
  const Grid& g = rho0.grid();
  if (!(phi.grid() == g)) throw Error("solve_bb_constrained: Phi and rho0 live on different grids");
  if (!rho0.in_constraint_set(cfg.thresholds)) throw Error("solve_bb_constrained: rho0 must satisfy rho <= 1");
  const detail::BbLayout L(g, tg);
  const detail::FaceTable T = detail::face_table(L);
  const std::vector<double> r0(rho0.values().begin(), rho0.values().end());
  const detail::BbOperator K{L, T, r0};
  const std::size_t nc = L.n_steps * L.cells, nf = L.n_steps * L.faces;

  BbIterate out;
  // Power iteration on K^T K.
  {
    std::vector<double> xr(nc), xq(nf), yc, yr, grho, gq;
    for (std::size_t i = 0; i < nc; ++i) xr[i] = 1.0 + 0.37 * std::sin(1.3 * static_cast<double>(i));
    for (std::size_t i = 0; i < nf; ++i) xq[i] = T.interior[i % L.faces] ? std::cos(0.7 * static_cast<double>(i)) : 0.0;
    double lambda = 0.0;
    for (std::size_t it = 0; it < cfg.power_iterations; ++it) {
      double nrm = 0.0;
      for (double v : xr) nrm += v * v;
      for (double v : xq) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (double& v : xr) v /= nrm;
      for (double& v : xq) v /= nrm;
      K.continuity(xr, xq, false, yc);
      K.interpolate(xr, false, yr);
      K.adjoint(yc, yr, xq, grho, gq);
      double dot = 0.0;
      for (std::size_t i = 0; i < nc; ++i) dot += grho[i] * xr[i];
      for (std::size_t i = 0; i < nf; ++i) dot += gq[i] * xq[i];
      lambda = dot;
      xr = grho;
      xq = gq;
    }
    out.operator_norm = std::sqrt(std::max(lambda, 0.0)) * 1.05;  // safety margin on the estimate
  }
  if (cfg.sigma > 0.0 && cfg.tau > 0.0) {
    out.sigma = cfg.sigma;
    out.tau = cfg.tau;
  } else {
    const double s = 0.99 / out.operator_norm;
    out.sigma = s * std::sqrt(cfg.step_ratio);
    out.tau = s / std::sqrt(cfg.step_ratio);
  }
  if (!(out.sigma * out.tau * out.operator_norm * out.operator_norm < 1.0)) {
    throw Error("solve_bb_constrained: step sizes violate sigma tau |K|^2 < 1");
  }

  detail::BbState x;
  x.rho.assign(nc, 0.0);
  for (std::size_t k = 0; k < L.n_steps; ++k) std::copy(r0.begin(), r0.end(), x.rho.begin() + static_cast<long>(k * L.cells));
  x.q.assign(nf, 0.0);
  x.chi.assign(nc, 0.0);
  x.zr.assign(nf, 0.0);
  x.zq.assign(nf, 0.0);
  if (cfg.warm_start) {
    const HjbProblem prob{phi, std::nullopt, std::nullopt, HjbOrientation::Sup};
    const ScalarTrajectory v = hjb_backward(prob, tg);
    for (std::size_t k = 0; k < L.n_steps; ++k) {
      for (std::size_t c = 0; c < L.cells; ++c) x.chi[k * L.cells + c] = 0.5 * (v[k][c] + v[k + 1][c]);
      for (std::size_t f = 0; f < L.faces; ++f) {
        if (!T.interior[f]) continue;
        const double gr = (x.chi[k * L.cells + T.hi[f]] - x.chi[k * L.cells + T.lo[f]]) * T.inv_h[f];
        x.zr[k * L.faces + f] = -0.5 * gr * gr;
        x.zq[k * L.faces + f] = gr;
      }
    }
  }

  // Constant parts: a (initial datum in the continuity operator) and c0
  // (initial datum in the face average).
  std::vector<double> a_shift(nc, 0.0), c0(nf, 0.0);
  for (std::size_t c = 0; c < L.cells; ++c) a_shift[c] = r0[c] / L.dt;
  for (std::size_t f = 0; f < L.faces; ++f) {
    if (T.interior[f]) c0[f] = 0.25 * (r0[T.lo[f]] + r0[T.hi[f]]);
  }

  std::vector<double> xbar_r = x.rho, xbar_q = x.q;
  std::vector<double> yc, yr, grho, gq;
  double first_gap = std::numeric_limits<double>::quiet_NaN();
  const double sigma = out.sigma, tau = out.tau;
  const std::size_t last_node = (L.n_steps - 1) * L.cells;

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    // Dual ascent.
    K.continuity(xbar_r, xbar_q, false, yc);
    for (std::size_t i = 0; i < nc; ++i) x.chi[i] += sigma * (yc[i] - a_shift[i]);
    K.interpolate(xbar_r, false, yr);
    for (std::size_t i = 0; i < nf; ++i) {
      if (!T.interior[i % L.faces]) continue;
      const auto [za, zb] = project_parabola(x.zr[i] + sigma * (yr[i] + c0[i]), x.zq[i] + sigma * xbar_q[i]);
      x.zr[i] = za;
      x.zq[i] = zb;
    }
    // Primal descent with the box prox (terminal payoff enters as a shift).
    K.adjoint(x.chi, x.zr, x.zq, grho, gq);
    for (std::size_t i = 0; i < nc; ++i) {
      const double old = x.rho[i];
      double v = old - tau * grho[i];
      if (i >= last_node) v += tau * phi[i - last_node] / L.dt;
      x.rho[i] = std::clamp(v, 0.0, 1.0);
      xbar_r[i] = 2.0 * x.rho[i] - old;
    }
    for (std::size_t i = 0; i < nf; ++i) {
      const double old = x.q[i];
      x.q[i] = T.interior[i % L.faces] ? old - tau * gq[i] : 0.0;
      xbar_q[i] = 2.0 * x.q[i] - old;
    }
    out.iterations = it;
    if (it % cfg.check_every == 0 || it == cfg.iterations) {
      // Momentum on faces without density has infinite cost; the reported
      // iterate drops it (it vanishes at convergence anyway).
      std::vector<double> rbar;
      K.interpolate(x.rho, true, rbar);
      std::vector<double> qc = x.q;
      for (std::size_t i = 0; i < nf; ++i) {
        if (!(rbar[i] > 0.0)) qc[i] = 0.0;
      }
      const auto ev = detail::bb_evaluate(L, T, K, x.rho, qc, x.chi, phi);
      const double gap = ev.primal - ev.dual;
      out.history.push_back({it, ev.primal, ev.dual, gap, ev.feasibility});
      if (std::isnan(first_gap)) first_gap = std::abs(gap);
      if (!std::isfinite(gap) || std::abs(gap) > 1e3 * std::max(first_gap, 1.0)) {
        out.diverged = true;
        out.message = "gap grew from " + std::to_string(first_gap) + " to " + std::to_string(gap) + " at iteration " +
                      std::to_string(it);
        break;
      }
      if (std::abs(gap) <= cfg.gap_tolerance && ev.feasibility <= cfg.feasibility_tolerance) {
        out.converged = true;
        break;
      }
    }
  }

  // Package the iterate.
  std::vector<double> rbar;
  K.interpolate(x.rho, true, rbar);
  for (std::size_t i = 0; i < nf; ++i) {
    if (!(rbar[i] > 0.0)) x.q[i] = 0.0;
  }
  out.rho = DensityTrajectory(tg, rho0);
  for (std::size_t k = 1; k <= L.n_steps; ++k) {
    out.rho[k] = DensityField(g, std::vector<double>(x.rho.begin() + static_cast<long>((k - 1) * L.cells),
                                                     x.rho.begin() + static_cast<long>(k * L.cells)));
  }
  out.q.assign(L.n_steps, FaceField(g));
  out.chi.assign(L.n_steps, ScalarField(g));
  for (std::size_t k = 0; k < L.n_steps; ++k) {
    for (int a = 0; a < g.dim(); ++a) {
      auto qa = out.q[k].axis(a);
      for (std::size_t f = 0; f < qa.size(); ++f) qa[f] = x.q[k * L.faces + L.fid(a, f)];
    }
    for (std::size_t c = 0; c < L.cells; ++c) out.chi[k][c] = x.chi[k * L.cells + c];
  }
  const auto ev = detail::bb_evaluate(L, T, K, x.rho, x.q, x.chi, phi);
  out.primal = ev.primal;
  out.dual = ev.dual;
  out.gap = ev.primal - ev.dual;
  out.feasibility = ev.feasibility;
  return out;
}

// ---------------------------------------------------------------------------
// Optimality conditions

struct OptimalityResiduals {
  double empty = 0.0;           ///< int max(0, r) over {rho <= eps}
  double saturated = 0.0;       ///< int max(0, -r) over {rho >= 1 - eps}
  double intermediate = 0.0;    ///< int |r| over {eps < rho < 1 - eps}
  double terminal_empty = 0.0;  ///< int max(0, -(chi_T - Phi)) over {rho_T <= eps}
  double terminal_saturated = 0.0;     ///< int max(0, chi_T - Phi) over {rho_T >= 1 - eps}
  double terminal_intermediate = 0.0;  ///< int |chi_T - Phi| over the rest
  double momentum = 0.0;        ///< sum dt vol |q - rho_bar grad chi|

  double max_condition() const {
    return std::max({empty, saturated, intermediate, terminal_empty, terminal_saturated, terminal_intermediate});
  }
};

/// r = d_t chi + |grad chi|^2/2 at the interior nodes and the terminal
/// quantity chi_T - Phi, both in the discrete form that appears in the
/// Lagrangian dual (so that the six conditions are exact at a discrete
/// saddle point).
inline OptimalityResiduals check_optimality_conditions(const BbIterate& it, const ScalarField& phi,
                                                       const DensityThresholds& th = {}) {
  const TimeGrid& tg = it.rho.time;
  const Grid& g = it.rho.grid();
  const double dt = tg.dt(), vol = g.cell_volume(), eps = th.saturation;
  const std::size_t N = tg.steps();
  std::vector<FaceField> grads;
  for (const auto& c : it.chi) grads.push_back(gradient(c));
  // Sum of squared face gradients adjacent to a cell, for interval k.
  auto adjacent_sq = [&](std::size_t k, std::size_t c) {
    const std::size_t i = g.ix(c), j = g.iy(c);
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      const auto ga = grads[k].axis(a);
      const std::size_t f0 = g.face_index(a, i, j);
      const std::size_t f1 = a == 0 ? g.face_index(0, i + 1, j) : g.face_index(1, i, j + 1);
      s += ga[f0] * ga[f0] + ga[f1] * ga[f1];
    }
    return s;
  };
  OptimalityResiduals r;
  for (std::size_t j = 1; j < N; ++j) {
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const double rr = (it.chi[j][c] - it.chi[j - 1][c]) / dt + 0.125 * (adjacent_sq(j - 1, c) + adjacent_sq(j, c));
      const double rho = it.rho[j][c];
      if (rho <= eps) r.empty += dt * vol * std::max(0.0, rr);
      else if (rho >= 1.0 - eps) r.saturated += dt * vol * std::max(0.0, -rr);
      else r.intermediate += dt * vol * std::abs(rr);
    }
  }
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const double s = it.chi[N - 1][c] - phi[c] - dt * 0.125 * adjacent_sq(N - 1, c);
    const double rho = it.rho[N][c];
    if (rho <= eps) r.terminal_empty += vol * std::max(0.0, -s);
    else if (rho >= 1.0 - eps) r.terminal_saturated += vol * std::max(0.0, s);
    else r.terminal_intermediate += vol * std::abs(s);
  }
  for (std::size_t k = 0; k < N; ++k) {
    for (int a = 0; a < g.dim(); ++a) {
      const auto qa = it.q[k].axis(a);
      const auto ga = grads[k].axis(a);
      for (std::size_t f = 0; f < qa.size(); ++f) {
        if (g.is_boundary_face(a, f)) continue;
        const double rb = detail::face_average(g, a, f, it.rho[k], it.rho[k + 1]);
        r.momentum += dt * vol * std::abs(qa[f] - rb * ga[f]);
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// chi = phi - p from a constrained MFG solution

struct ChiReport {
  ScalarTrajectory chi;
  double identity_gap = 0.0;     ///< max |(D_t chi + Q(chi)/2) - (-D_t p + Q(p)/2)|
  double simple_hjb_residual = 0.0;  ///< max |D_t phi + Q(phi)/2 - Q(phi, p)|
  double terminal_identity = 0.0;    ///< max |(chi_T - Phi) + p_T|
  double saturated_min = 0.0;        ///< min of -D_t p + Q(p)/2 on {rho = 1}
  double saturated_negative = 0.0;   ///< int max(0, -(...)) on {rho = 1}
  double intermediate_abs = 0.0;     ///< int |...| on {0 < rho < 1}
};

inline ChiReport chi_from_mfg(const MfgSolution& sol, const DensityThresholds& th = {}) {
  const TimeGrid& tg = sol.rho.time;
  const Grid& g = sol.rho.grid();
  const double dt = tg.dt(), vol = g.cell_volume();
  ChiReport r;
  r.chi = sol.phi;
  for (std::size_t k = 0; k < tg.nodes(); ++k) r.chi[k] -= sol.p[k];
  r.saturated_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    const ScalarField qcc = face_product(r.chi[k + 1], r.chi[k + 1]);
    const ScalarField qpp = face_product(sol.p[k + 1], sol.p[k + 1]);
    const ScalarField qff = face_product(sol.phi[k + 1], sol.phi[k + 1]);
    const ScalarField qfp = face_product(sol.phi[k + 1], sol.p[k + 1]);
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const double lhs = (r.chi[k + 1][c] - r.chi[k][c]) / dt + 0.5 * qcc[c];
      const double rhs = -(sol.p[k + 1][c] - sol.p[k][c]) / dt + 0.5 * qpp[c];
      const double e = (sol.phi[k + 1][c] - sol.phi[k][c]) / dt + 0.5 * qff[c] - qfp[c];
      r.identity_gap = std::max(r.identity_gap, std::abs(lhs - rhs));
      r.simple_hjb_residual = std::max(r.simple_hjb_residual, std::abs(e));
      const double rho = sol.rho[k + 1][c];
      if (rho >= 1.0 - th.saturation) {
        r.saturated_min = std::min(r.saturated_min, rhs);
        r.saturated_negative += dt * vol * std::max(0.0, -rhs);
      } else if (rho > th.saturation) {
        r.intermediate_abs += dt * vol * std::abs(rhs);
      }
    }
  }
  if (!std::isfinite(r.saturated_min)) r.saturated_min = 0.0;
  const std::size_t N = tg.steps();
  for (std::size_t c = 0; c < g.cells(); ++c) {
    r.terminal_identity = std::max(r.terminal_identity, std::abs((r.chi[N][c] - sol.terminal[c]) + sol.p[N][c]));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Static reduction

enum class StaticConvention {
  Literal,      ///< c(T) = T
  HalfInverse,  ///< c(T) = 1 / (2T), the kinetic energy of a geodesic
};

inline double static_coefficient(StaticConvention c, double horizon) {
  return c == StaticConvention::Literal ? horizon : 1.0 / (2.0 * horizon);
}

struct StaticReductionSolution {
  double value = 0.0;
  QuantileFunction quantiles;
  bool converged = false;
};

/// min c W2^2(Q0, Q) - (1/n) sum Phi(Q_j) over Q with spacings >= 1/n.
inline StaticReductionSolution static_reduction_quantiles(const QuantileFunction& q0, const ScalarField& phi,
                                                          double coefficient, double tolerance = 1e-13) {
  JkoConfig cfg;
  cfg.mode = JkoMode::Constrained;
  cfg.tau = 1.0 / (2.0 * coefficient);
  cfg.tolerance = tolerance;
  cfg.max_iter = 100000;
  const JkoStepResult st = jko_step_quantiles(q0, -phi, cfg);
  return {st.energy + coefficient * st.w2_squared, st.quantiles, st.converged};
}

struct StaticReduction {
  double value_literal = 0.0;        ///< c(T) = T
  double value_half_inverse = 0.0;   ///< c(T) = 1/(2T)
  DensityField rho_literal;
  DensityField rho_half_inverse;
};

/// Both coefficient conventions; 1/(2T) is the one consistent with the
/// kinetic energy used by solve_bb_constrained.
inline StaticReduction static_reduction_oracle_1d(const DensityField& rho0, const ScalarField& phi, double horizon,
                                                  std::size_t samples = 0) {
  require_1d(rho0.grid(), "static_reduction_oracle_1d");
  if (rho0.grid().measure() < 1.0) throw Error("static_reduction_oracle_1d: domain shorter than 1, K is empty");
  if (!(horizon > 0.0)) throw Error("static_reduction_oracle_1d: horizon must be positive");
  const std::size_t n = samples ? samples : default_quantile_count(rho0.grid());
  const QuantileFunction q0 = quantiles_of(rho0, n);
  StaticReduction out;
  const auto lit = static_reduction_quantiles(q0, phi, static_coefficient(StaticConvention::Literal, horizon));
  const auto half = static_reduction_quantiles(q0, phi, static_coefficient(StaticConvention::HalfInverse, horizon));
  out.value_literal = lit.value;
  out.value_half_inverse = half.value;
  out.rho_literal = density_from_quantiles(lit.quantiles, rho0.grid());
  out.rho_half_inverse = density_from_quantiles(half.quantiles, rho0.grid());
  return out;
}

}  // namespace congest
