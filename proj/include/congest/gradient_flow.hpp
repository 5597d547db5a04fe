#pragma once
// One-dimensional Wasserstein gradient flows of
//     F(rho) = int D d rho + { indicator of K   (constrained)
//                            { (1/m) int rho^m  (penalized)
// by the JKO scheme in quantile coordinates, plus an explicit finite volume
// scheme for the porous medium equation
//     d_t rho - div(rho grad D) - (m-1)/m lap(rho^m) = 0
// used as an independent reference for the penalized flow.

#include <cmath>
#include <optional>
#include <vector>

#include "congest/grid.hpp"
#include "congest/quantile.hpp"

namespace congest {

/// W2 distance via n quantile samples (n = 0 picks a default).
inline double w2_distance_1d(const DensityField& a, const DensityField& b, std::size_t samples = 0) {
  require_1d(a.grid(), "w2_distance_1d");
  require_1d(b.grid(), "w2_distance_1d");
  const std::size_t n = samples ? samples : std::max(default_quantile_count(a.grid()), default_quantile_count(b.grid()));
  return std::sqrt(w2_squared(quantiles_of(a, n), quantiles_of(b, n)));
}

/// Displacement interpolation Q_t = (1-t) Q_0 + t Q_1.
inline DensityField geodesic_1d(const DensityField& rho0, const DensityField& rho1, double t, std::size_t samples = 0) {
  require_1d(rho0.grid(), "geodesic_1d");
  if (!(t >= 0.0 && t <= 1.0)) throw Error("geodesic_1d: t must lie in [0, 1]");
  if (!(rho0.grid() == rho1.grid())) throw Error("geodesic_1d: grid mismatch");
  if (t == 0.0) return rho0;
  if (t == 1.0) return rho1;
  const std::size_t n = samples ? samples : default_quantile_count(rho0.grid());
  QuantileFunction a = quantiles_of(rho0, n);
  const QuantileFunction b = quantiles_of(rho1, n);
  for (std::size_t j = 0; j < n; ++j) a.q[j] = (1.0 - t) * a.q[j] + t * b.q[j];
  return density_from_quantiles(a, rho0.grid());
}

enum class JkoMode { Constrained, Penalized };

struct JkoConfig {
  double tau = 1e-2;
  JkoMode mode = JkoMode::Constrained;
  double m = 2.0;               ///< exponent, penalized mode only
  double tolerance = 1e-8;      ///< on the objective decrease
  std::size_t max_iter = 10000;
  std::size_t samples = 0;      ///< quantile count (0: default for the grid)

  void validate() const {
    if (!(tau > 0.0)) throw Error("JkoConfig: tau must be positive");
    if (mode == JkoMode::Penalized && !(m >= 2.0)) throw Error("JkoConfig: m must be >= 2");
    if (!(tolerance > 0.0)) throw Error("JkoConfig: tolerance must be positive");
  }
};

/// Piecewise linear interpolation of a cell-centered potential (linear
/// extrapolation beyond the outer centers).
class LinearPotential {
 public:
  explicit LinearPotential(const ScalarField& d) : d_(d) { require_1d(d.grid(), "LinearPotential"); }

  double value(double x) const {
    const auto [i, w] = locate(x);
    return (1.0 - w) * d_[i] + w * d_[i + 1];
  }
  /// Nonnegative second differences, so the interpolant is convex.
  bool convex() const {
    double scale = 0.0;
    for (std::size_t i = 0; i < d_.size(); ++i) scale = std::max(scale, std::abs(d_[i]));
    for (std::size_t i = 1; i + 1 < d_.size(); ++i) {
      if (d_[i - 1] - 2.0 * d_[i] + d_[i + 1] < -1e-14 * scale) return false;
    }
    return true;
  }
  /// Right derivative.
  double slope(double x) const {
    const auto [i, w] = locate(x);
    (void)w;
    return (d_[i + 1] - d_[i]) / d_.grid().h(0);
  }

 private:
  std::pair<std::size_t, double> locate(double x) const {
    const Axis& ax = d_.grid().axis(0);
    const double u = (x - ax.center(0)) / ax.h();
    const double last = static_cast<double>(ax.cells - 2);
    const double base = std::clamp(std::floor(u), 0.0, last);
    return {static_cast<std::size_t>(base), u - base};
  }

  ScalarField d_;
};

namespace detail {

struct JkoObjective {
  const LinearPotential& pot;
  const std::vector<double>& prev;
  const JkoConfig& cfg;
  double n;

  double penalty(const std::vector<double>& q) const {
    if (cfg.mode != JkoMode::Penalized) return 0.0;
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < q.size(); ++j) {
      const double d = q[j + 1] - q[j];
      if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
      s += std::pow(n * d, 1.0 - cfg.m);
    }
    return s / (cfg.m * n);
  }
  double potential(const std::vector<double>& q) const {
    double s = 0.0;
    for (double x : q) s += pot.value(x);
    return s / n;
  }
  double energy(const std::vector<double>& q) const { return potential(q) + penalty(q); }
  double transport(const std::vector<double>& q) const {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - prev[j]) * (q[j] - prev[j]);
    return s / (2.0 * cfg.tau * n);
  }
  double total(const std::vector<double>& q) const { return energy(q) + transport(q); }

  void gradient(const std::vector<double>& q, std::vector<double>& g) const {
    g.assign(q.size(), 0.0);
    for (std::size_t j = 0; j < q.size(); ++j) g[j] = pot.slope(q[j]) / n + (q[j] - prev[j]) / (cfg.tau * n);
    if (cfg.mode == JkoMode::Penalized) {
      const double c = (cfg.m - 1.0) / cfg.m;
      for (std::size_t j = 0; j + 1 < q.size(); ++j) {
        const double dp = -c * std::pow(n * (q[j + 1] - q[j]), -cfg.m);  // d penalty / d spacing
        g[j] -= dp;
        g[j + 1] += dp;
      }
    }
  }

  // Tridiagonal Hessian (the potential contributes nothing a.e.).
  void hessian(const std::vector<double>& q, std::vector<double>& diag, std::vector<double>& off) const {
    const std::size_t k = q.size();
    diag.assign(k, 1.0 / (cfg.tau * n));
    off.assign(k > 0 ? k - 1 : 0, 0.0);
    if (cfg.mode != JkoMode::Penalized) return;
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double d2 = (cfg.m - 1.0) * n * std::pow(n * (q[j + 1] - q[j]), -cfg.m - 1.0);
      diag[j] += d2;
      diag[j + 1] += d2;
      off[j] -= d2;
    }
  }
};

// Solves a symmetric tridiagonal system in place (Thomas algorithm).
inline std::vector<double> solve_tridiagonal(std::vector<double> diag, const std::vector<double>& off,
                                             std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = off[i - 1] / diag[i - 1];
    diag[i] -= w * off[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - off[i] * x[i + 1]) / diag[i];
  return x;
}

// Constrained step for a convex potential. With r_j = Q_j - j gap the
// problem is isotonic regression of r with separable convex costs on
// [lo, hi - (n-1) gap]: pool adjacent violators, minimizing every pooled
// block exactly by bisection on its right derivative.
inline std::vector<double> pooled_constrained_step(const LinearPotential& pot, const std::vector<double>& prev,
                                                   double tau, double gap, double lo, double hi) {
  const std::size_t k = prev.size();
  const double rhi = hi - static_cast<double>(k - 1) * gap;
  auto shift = [&](std::size_t j) { return static_cast<double>(j) * gap; };
  auto block_min = [&](std::size_t a, std::size_t b) {
    auto deriv = [&](double r) {
      double d = 0.0;
      for (std::size_t j = a; j <= b; ++j) d += (r + shift(j) - prev[j]) / tau + pot.slope(r + shift(j));
      return d;
    };
    double l = lo, h = rhi;
    if (deriv(l) >= 0.0) return l;
    if (deriv(h) < 0.0) return h;
    for (int it = 0; it < 200; ++it) {
      const double m = 0.5 * (l + h);
      if (m <= l || m >= h) break;
      (deriv(m) >= 0.0 ? h : l) = m;
    }
    return h;
  };
  struct Block {
    std::size_t a, b;
    double r;
  };
  std::vector<Block> st;
  for (std::size_t j = 0; j < k; ++j) {
    st.push_back({j, j, block_min(j, j)});
    while (st.size() > 1 && st[st.size() - 2].r > st.back().r) {
      const std::size_t b = st.back().b;
      st.pop_back();
      st.back().b = b;
      st.back().r = block_min(st.back().a, b);
    }
  }
  std::vector<double> q(k);
  for (const Block& bl : st) {
    for (std::size_t j = bl.a; j <= bl.b; ++j) q[j] = bl.r + shift(j);
  }
  return q;
}

}  // namespace detail

struct JkoStepResult {
  QuantileFunction quantiles;
  double energy = 0.0;       ///< F at the new point
  double w2_squared = 0.0;   ///< W2^2 to the previous point
  std::size_t iterations = 0;
  bool converged = false;
};

/// argmin_Q  F(Q) + W2^2(Q, prev) / (2 tau)  over nondecreasing Q in the domain.
/// Constrained mode: projected gradient with backtracking (projection onto
/// spacings >= 1/n); a convex potential is minimized exactly by pooling
/// instead, since a common backtracked step stalls at the kinks of the
/// interpolant. Penalized mode: Newton steps on the tridiagonal Hessian
/// with backtracking, clamped to the domain.
inline JkoStepResult jko_step_quantiles(const QuantileFunction& prev, const ScalarField& potential,
                                        const JkoConfig& cfg) {
  cfg.validate();
  const std::size_t k = prev.size();
  const double n = static_cast<double>(k);
  const double gap = 1.0 / n;
  if (cfg.mode == JkoMode::Constrained && prev.upper - prev.lower < 1.0) {
    throw Error("jko_step: domain shorter than 1, constrained problem infeasible");
  }
  const LinearPotential pot(potential);
  const detail::JkoObjective obj{pot, prev.q, cfg, n};
  const double qlo = cfg.mode == JkoMode::Constrained ? prev.lower + 0.5 * gap : prev.lower;
  const double qhi = cfg.mode == JkoMode::Constrained ? prev.upper - 0.5 * gap : prev.upper;

  JkoStepResult res;
  if (cfg.mode == JkoMode::Constrained && pot.convex()) {
    const std::vector<double> q = detail::pooled_constrained_step(pot, prev.q, cfg.tau, gap, qlo, qhi);
    res.quantiles = QuantileFunction{prev.lower, prev.upper, q};
    res.energy = obj.energy(q);
    res.w2_squared = w2_squared(res.quantiles, prev);
    res.iterations = 1;
    res.converged = true;
    return res;
  }
  std::vector<double> q = prev.q;
  if (cfg.mode == JkoMode::Constrained) q = project_min_spacing(q, gap, qlo, qhi);
  double f = obj.total(q);
  std::vector<double> g, trial(k);
  double step = cfg.tau * n;  // inverse curvature of the transport term

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    res.iterations = it;
    obj.gradient(q, g);
    double f_new = f;
    if (cfg.mode == JkoMode::Constrained) {
      double s = step;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t j = 0; j < k; ++j) trial[j] = q[j] - s * g[j];
        trial = project_min_spacing(trial, gap, qlo, qhi);
        f_new = obj.total(trial);
        double dist2 = 0.0, lin = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          dist2 += (trial[j] - q[j]) * (trial[j] - q[j]);
          lin += g[j] * (trial[j] - q[j]);
        }
        if (f_new <= f + lin + dist2 / (2.0 * s) + 1e-15 * std::abs(f)) {
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted || f_new > f) {
        res.converged = true;  // no descent left at machine precision
        break;
      }
    } else {
      std::vector<double> diag, off;
      obj.hessian(q, diag, off);
      std::vector<double> rhs(k);
      for (std::size_t j = 0; j < k; ++j) rhs[j] = -g[j];
      const std::vector<double> dir = detail::solve_tridiagonal(diag, off, rhs);
      double slope = 0.0;
      for (std::size_t j = 0; j < k; ++j) slope += g[j] * dir[j];
      double s = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t j = 0; j < k; ++j) trial[j] = std::clamp(q[j] + s * dir[j], qlo, qhi);
        f_new = obj.total(trial);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * s * slope) {
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) {
        res.converged = -slope <= 2.0 * cfg.tolerance;
        break;
      }
    }
    const double decrease = f - f_new;
    q = trial;
    f = f_new;
    if (decrease <= cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.quantiles = QuantileFunction{prev.lower, prev.upper, q};
  res.energy = obj.energy(q);
  res.w2_squared = w2_squared(res.quantiles, prev);
  return res;
}

/// Energy of a quantile configuration (the F the JKO step decreases).
inline double jko_energy(const QuantileFunction& q, const ScalarField& potential, const JkoConfig& cfg) {
  const LinearPotential pot(potential);
  const detail::JkoObjective obj{pot, q.q, cfg, static_cast<double>(q.size())};
  return obj.energy(q.q);
}

struct JkoDensityStep {
  DensityField rho;
  JkoStepResult step;
};

/// One JKO step from a grid density. When the minimizer is the starting point
/// the input density is returned unchanged.
inline JkoDensityStep jko_step(const DensityField& rho, const ScalarField& potential, const JkoConfig& cfg) {
  require_1d(rho.grid(), "jko_step");
  const std::size_t n = cfg.samples ? cfg.samples : default_quantile_count(rho.grid());
  const QuantileFunction prev = quantiles_of(rho, n);
  JkoStepResult st = jko_step_quantiles(prev, potential, cfg);
  if (st.quantiles.q == prev.q) return {rho, std::move(st)};
  return {density_from_quantiles(st.quantiles, rho.grid()), std::move(st)};
}

struct GradientFlowResult {
  DensityTrajectory rho;
  std::vector<double> energy;        ///< F(rho_k), k = 0..steps
  std::vector<double> w2_increment;  ///< W2(rho_{k+1}, rho_k), k = 0..steps-1
  std::vector<QuantileFunction> quantiles;
  bool converged = true;
};

/// Iterates the JKO step in quantile coordinates (the density is only
/// reconstructed for output), so the recorded energies are exactly the ones
/// each minimization compares.
inline GradientFlowResult run_gradient_flow(const DensityField& rho0, const ScalarField& potential,
                                            const JkoConfig& cfg, std::size_t steps) {
  require_1d(rho0.grid(), "run_gradient_flow");
  cfg.validate();
  if (steps == 0) throw Error("run_gradient_flow: need at least one step");
  const Grid& g = rho0.grid();
  const std::size_t n = cfg.samples ? cfg.samples : default_quantile_count(g);
  GradientFlowResult out;
  out.rho = DensityTrajectory(TimeGrid(cfg.tau * static_cast<double>(steps), steps), rho0);
  QuantileFunction q = quantiles_of(rho0, n);
  // rho_k is reused when a step leaves Q unchanged, which requires rho_k to
  // be the density of Q; an initial datum outside K is not.
  bool represents = true;
  if (cfg.mode == JkoMode::Constrained) {
    const double gap = 1.0 / static_cast<double>(n);
    const std::vector<double> raw = q.q;
    q.q = project_min_spacing(q.q, gap, q.lower + 0.5 * gap, q.upper - 0.5 * gap);
    represents = raw == q.q;
  }
  out.quantiles.push_back(q);
  out.energy.push_back(jko_energy(q, potential, cfg));
  for (std::size_t k = 0; k < steps; ++k) {
    JkoStepResult st = jko_step_quantiles(q, potential, cfg);
    out.converged = out.converged && st.converged;
    out.rho[k + 1] = represents && st.quantiles.q == q.q ? out.rho[k] : density_from_quantiles(st.quantiles, g);
    represents = true;
    out.energy.push_back(st.energy);
    out.w2_increment.push_back(std::sqrt(st.w2_squared));
    q = std::move(st.quantiles);
    out.quantiles.push_back(q);
  }
  return out;
}

/// Explicit conservative scheme for the porous medium equation with drift
/// -grad D: flux = rho_upwind (-grad D) - (m-1)/m grad(rho^m). Output sampled
/// at the nodes of tg; stability is enforced by substepping.
inline DensityTrajectory porous_media_reference(const DensityField& rho0, const ScalarField& potential, double m,
                                                const TimeGrid& tg, std::size_t* substeps = nullptr) {
  const Grid& g = rho0.grid();
  require_1d(g, "porous_media_reference");
  if (!(m > 1.0)) throw Error("porous_media_reference: m must exceed 1");
  const double h = g.h(0);
  const std::size_t nc = g.cells();
  std::vector<double> vel(nc + 1, 0.0);
  double vmax = 0.0;
  for (std::size_t f = 1; f < nc; ++f) {
    vel[f] = -(potential[f] - potential[f - 1]) / h;
    vmax = std::max(vmax, std::abs(vel[f]));
  }
  const double c = (m - 1.0) / m;
  DensityTrajectory out(tg, rho0);
  std::vector<double> rho(rho0.values().begin(), rho0.values().end()), flux(nc + 1, 0.0), pw(nc);
  std::size_t count = 0;
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    double remaining = tg.dt();
    while (remaining > 0.0) {
      double rmax = 0.0;
      for (double r : rho) rmax = std::max(rmax, r);
      // A cell can lose mass through both faces by drift.
      const double rate = 2.0 * (m - 1.0) * std::pow(rmax, m - 1.0) / (h * h) + 2.0 * vmax / h;
      double sub = remaining;
      if (rate * sub > 0.9) sub = 0.9 / rate;
      if (remaining - sub < 1e-12 * tg.dt()) sub = remaining;
      for (std::size_t i = 0; i < nc; ++i) pw[i] = std::pow(rho[i], m);
      for (std::size_t f = 1; f < nc; ++f) {
        const double adv = vel[f] * (vel[f] > 0.0 ? rho[f - 1] : rho[f]);
        flux[f] = adv - c * (pw[f] - pw[f - 1]) / h;
      }
      for (std::size_t i = 0; i < nc; ++i) rho[i] = std::max(0.0, rho[i] - sub * (flux[i + 1] - flux[i]) / h);
      remaining -= sub;
      ++count;
    }
    out[k + 1] = DensityField(g, rho);
  }
  if (substeps) *substeps = count;
  return out;
}

}  // namespace congest
