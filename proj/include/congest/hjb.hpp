#pragma once
// Backward monotone solver for
//     d_t phi + |grad phi|^2 / 2 - grad phi . b - c = 0,   phi(T) = Phi
// (value function of  sup -int(|a|^2/2 + c) ds + Phi(y(T)),  y' = a - b(y)),
// its inf-type mirror, and the exact Hopf-Lax evaluator for b = c = 0.
//
// Interior cells use a local Lax-Friedrichs flux for the quadratic part and
// drift-direction upwinding for -grad phi . b. Wall cells use the one-sided
// state-constraint Hamiltonian |max(p+,0)|^2/2 (left) or |min(p-,0)|^2/2
// (right), i.e. trajectories may not leave the box.

#include <cmath>
#include <optional>
#include <string>

#include "congest/grid.hpp"

namespace congest {

enum class HjbOrientation {
  /// value function of a maximization:  d_t phi + H(grad phi) - c = 0
  Sup,
  /// cost function of a minimization: -d_t phi + |grad phi|^2/2 + grad phi . b - c = 0
  Inf,
};

struct HjbProblem {
  ScalarField terminal;
  std::optional<FaceTrajectory> drift;     ///< b, one face field per time node
  std::optional<ScalarTrajectory> source;  ///< c, one cell field per time node
  HjbOrientation orientation = HjbOrientation::Sup;
};

namespace detail {

inline constexpr double kHjbCfl = 0.9;

// Numerical Hamiltonian (without source) and the monotonicity rate
// sum_a (diagonal coefficient) at every cell.
inline void hjb_hamiltonian(const ScalarField& psi, const FaceField* drift, std::vector<double>& ham,
                            double& rate) {
  const Grid& g = psi.grid();
  ham.assign(g.cells(), 0.0);
  rate = 0.0;
  std::vector<double> cell_rate(g.cells(), 0.0);
  for (int a = 0; a < g.dim(); ++a) {
    const double h = g.h(a);
    const std::size_t n = g.axis(a).cells;
    const auto bface = drift ? drift->axis(a) : std::span<const double>{};
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const std::size_t i = a == 0 ? g.ix(c) : g.iy(c);
      const std::size_t stride = a == 0 ? 1 : g.nx();
      const bool has_lo = i > 0, has_hi = i + 1 < n;
      const double pm = has_lo ? (psi[c] - psi[c - stride]) / h : 0.0;
      const double pp = has_hi ? (psi[c + stride] - psi[c]) / h : 0.0;
      double hv = 0.0, diag = 0.0;
      if (has_lo && has_hi) {
        const double avg = 0.5 * (pm + pp);
        const double theta = std::max(std::abs(pm), std::abs(pp));
        hv = 0.5 * avg * avg + 0.5 * theta * (pp - pm);
        diag = theta;
      } else if (has_hi) {
        const double q = std::max(pp, 0.0);
        hv = 0.5 * q * q;
        diag = q;
      } else {
        const double q = std::min(pm, 0.0);
        hv = 0.5 * q * q;
        diag = -q;
      }
      if (drift) {
        const std::size_t ii = g.ix(c), jj = g.iy(c);
        const std::size_t flo = a == 0 ? g.face_index(0, ii, jj) : g.face_index(1, ii, jj);
        const std::size_t fhi = a == 0 ? g.face_index(0, ii + 1, jj) : g.face_index(1, ii, jj + 1);
        const double blo = std::max(bface[flo], 0.0);
        const double bhi = std::min(bface[fhi], 0.0);
        hv -= blo * pm + bhi * pp;
        diag += blo - bhi;
      }
      ham[c] += hv;
      cell_rate[c] += diag / h;
    }
  }
  for (double r : cell_rate) rate = std::max(rate, r);
}

}  // namespace detail

/// One backward macro step of length dt for the Sup orientation:
/// psi_k = psi_{k+1} + dt (H_num(psi_{k+1}) - c), split into substeps that
/// keep the scheme monotone. Deterministic, so the residual check can replay it.
inline ScalarField hjb_macro_step(const ScalarField& next, const FaceField* drift, const ScalarField* source,
                                  double dt, std::size_t* substeps = nullptr) {
  ScalarField cur = next;
  std::vector<double> ham;
  double remaining = dt;
  std::size_t count = 0;
  while (remaining > 0.0) {
    double rate = 0.0;
    detail::hjb_hamiltonian(cur, drift, ham, rate);
    double sub = remaining;
    if (rate * sub > detail::kHjbCfl) sub = detail::kHjbCfl / rate;
    // Avoid a sliver substep from floating point leftovers.
    if (remaining - sub < 1e-12 * dt) sub = remaining;
    for (std::size_t c = 0; c < cur.size(); ++c) {
      cur[c] += sub * (ham[c] - (source ? (*source)[c] : 0.0));
    }
    remaining -= sub;
    ++count;
    if (count > 1000000) throw Error("hjb: substep budget exhausted");
  }
  if (substeps) *substeps += count;
  return cur;
}

namespace detail {

inline void check_problem(const HjbProblem& prob, const TimeGrid& tg) {
  if (!prob.terminal.finite()) throw Error("hjb: terminal data must be finite");
  if (prob.drift && (prob.drift->size() != tg.nodes() || !(prob.drift->grid() == prob.terminal.grid()))) {
    throw Error("hjb: drift trajectory does not match the time/space grid");
  }
  if (prob.source && (prob.source->size() != tg.nodes() || !(prob.source->grid() == prob.terminal.grid()))) {
    throw Error("hjb: source trajectory does not match the time/space grid");
  }
}

}  // namespace detail

struct HjbStats {
  std::size_t substeps = 0;
};

/// Solves backward from phi(T) = terminal; returns phi at every node of tg.
inline ScalarTrajectory hjb_backward(const HjbProblem& prob, const TimeGrid& tg, HjbStats* stats = nullptr) {
  detail::check_problem(prob, tg);
  const double sign = prob.orientation == HjbOrientation::Sup ? 1.0 : -1.0;
  const double scale = std::max(1.0, prob.terminal.max_abs());
  ScalarTrajectory out(tg, sign * prob.terminal);
  std::size_t subs = 0;
  for (std::size_t k = tg.steps(); k-- > 0;) {
    const FaceField* b = prob.drift ? &(*prob.drift)[k + 1] : nullptr;
    const ScalarField* c = prob.source ? &(*prob.source)[k + 1] : nullptr;
    out[k] = hjb_macro_step(out[k + 1], b, c, tg.dt(), &subs);
    const double m = out[k].max_abs();
    if (!std::isfinite(m) || m > 1e6 * scale) {
      throw Error("hjb: blow-up at t = " + std::to_string(tg.t(k)) + " (|phi| = " + std::to_string(m) + ")");
    }
  }
  if (sign < 0.0) {
    for (auto& f : out.nodes) f *= -1.0;
  }
  if (stats) stats->substeps = subs;
  return out;
}

/// max_k max_i |phi_k - S(phi_{k+1})| / dt with S the scheme's own macro step.
/// Zero (to round-off) on output of hjb_backward for the same problem.
inline double hjb_residual(const ScalarTrajectory& phi, const HjbProblem& prob) {
  const TimeGrid& tg = phi.time;
  detail::check_problem(prob, tg);
  const double sign = prob.orientation == HjbOrientation::Sup ? 1.0 : -1.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    const FaceField* b = prob.drift ? &(*prob.drift)[k + 1] : nullptr;
    const ScalarField* c = prob.source ? &(*prob.source)[k + 1] : nullptr;
    const ScalarField step = hjb_macro_step(sign * phi[k + 1], b, c, tg.dt());
    for (std::size_t i = 0; i < step.size(); ++i) {
      worst = std::max(worst, std::abs(sign * phi[k][i] - step[i]) / tg.dt());
    }
  }
  return worst;
}

/// x -> max over cell centers y of Phi(y) - |x - y|^2 / (2 (T - t)).
inline ScalarField hopf_lax(const ScalarField& terminal, double t, double horizon) {
  if (t > horizon) throw Error("hopf_lax: t must not exceed the horizon");
  const double s = horizon - t;
  if (s <= 0.0) return terminal;
  const Grid& g = terminal.grid();
  ScalarField out(g);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const auto x = g.center(c);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < g.cells(); ++d) {
      const auto y = g.center(d);
      const double r2 = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]);
      best = std::max(best, terminal[d] - r2 / (2.0 * s));
    }
    out[c] = best;
  }
  return out;
}

/// Optimal effort a = grad phi at every node.
inline FaceTrajectory optimal_feedback(const ScalarTrajectory& phi) {
  FaceTrajectory out;
  out.time = phi.time;
  out.nodes.reserve(phi.size());
  for (const auto& f : phi.nodes) out.nodes.push_back(gradient(f));
  return out;
}

}  // namespace congest
