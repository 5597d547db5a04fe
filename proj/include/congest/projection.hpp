#pragma once
// Projection of a velocity field onto the admissible cone
//     adm(rho) = { v : div v >= 0 on the saturated set S },
// computed through its pressure: v = u - grad p with p >= 0 supported on S
// and the complementarity problem
//     w = div u - lap p >= 0,  p >= 0,  p w = 0   on S,   p = 0 off S.
// Also: the W2 projection onto K = { rho <= 1 } in one dimension and the
// crowd evolution d_t rho + div(rho P_adm(rho)[u]) = 0.

#include <cmath>
#include <optional>
#include <vector>

#include "congest/grid.hpp"
#include "congest/quantile.hpp"
#include "congest/transport.hpp"

namespace congest {

struct ProjectionOptions {
  double tolerance = 1e-9;    ///< stop when the largest Gauss-Seidel update is below this
  std::size_t max_iter = 200000;
  double relaxation = 1.5;    ///< over-relaxation factor, 0 < omega < 2
  DensityThresholds thresholds{};
  bool active_set_start = true;  ///< run the active-set initializer before the sweeps
};

struct ProjectionResult {
  FaceField v;
  ScalarField p;
  double complementarity = 0.0;  ///< sum_S p |w| vol
  double orthogonality = 0.0;    ///< |<v, grad p>|
  double cone_violation = 0.0;   ///< max(0, -min_S div v)
  double constraint_excess = 0.0;  ///< max(0, max rho - 1) of the input
  std::size_t iterations = 0;
  bool converged = true;
};

/// Cells with rho >= 1 - eps_sat.
inline std::vector<char> saturated_mask(const DensityField& rho, const DensityThresholds& th = {}) {
  std::vector<char> m(rho.size());
  for (std::size_t c = 0; c < rho.size(); ++c) m[c] = rho.saturated(c, th) ? 1 : 0;
  return m;
}

/// max(0, -min over saturated cells of div v).
inline double cone_violation(const DensityField& rho, const FaceField& v, const DensityThresholds& th = {}) {
  const ScalarField d = divergence(v);
  double worst = 0.0;
  for (std::size_t c = 0; c < rho.size(); ++c) {
    if (rho.saturated(c, th)) worst = std::max(worst, -d[c]);
  }
  return worst;
}

namespace detail {

// Neighbour bookkeeping for the 5-point (3-point in 1D) Neumann Laplacian.
struct Stencil {
  std::vector<std::array<std::size_t, 4>> nb;
  std::vector<std::array<double, 4>> w;
  std::vector<int> count;
  std::vector<double> diag;
};

inline Stencil laplace_stencil(const Grid& g) {
  Stencil s;
  s.nb.resize(g.cells());
  s.w.resize(g.cells());
  s.count.assign(g.cells(), 0);
  s.diag.assign(g.cells(), 0.0);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const std::size_t i = g.ix(c), j = g.iy(c);
    auto add = [&](std::size_t other, double wgt) {
      const int k = s.count[c]++;
      s.nb[c][static_cast<std::size_t>(k)] = other;
      s.w[c][static_cast<std::size_t>(k)] = wgt;
      s.diag[c] += wgt;
    };
    const double wx = 1.0 / (g.h(0) * g.h(0));
    if (i > 0) add(g.index(i - 1, j), wx);
    if (i + 1 < g.nx()) add(g.index(i + 1, j), wx);
    if (g.dim() == 2) {
      const double wy = 1.0 / (g.h(1) * g.h(1));
      if (j > 0) add(g.index(i, j - 1), wy);
      if (j + 1 < g.ny()) add(g.index(i, j + 1), wy);
    }
  }
  return s;
}

// Conjugate gradients for L_JJ x = b with L the stencil restricted to the
// cells flagged in `in_j` (p = 0 elsewhere acts as a Dirichlet condition).
inline void restricted_cg(const Stencil& st, const std::vector<std::size_t>& cells, const std::vector<char>& in_j,
                          const std::vector<double>& b, std::vector<double>& x) {
  const std::size_t n = cells.size();
  std::vector<std::size_t> local(st.diag.size(), n);
  for (std::size_t k = 0; k < n; ++k) local[cells[k]] = k;
  auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = cells[k];
      double acc = st.diag[c] * v[k];
      for (int m = 0; m < st.count[c]; ++m) {
        const std::size_t nb = st.nb[c][static_cast<std::size_t>(m)];
        if (in_j[nb]) acc -= st.w[c][static_cast<std::size_t>(m)] * v[local[nb]];
      }
      out[k] = acc;
    }
  };
  std::vector<double> r(n), d(n), ad(n);
  apply(x, ad);
  double bnorm = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    r[k] = b[k] - ad[k];
    bnorm = std::max(bnorm, std::abs(b[k]));
  }
  d = r;
  double rr = 0.0;
  for (double v : r) rr += v * v;
  const double stop = 1e-15 * std::max(bnorm, 1e-300);
  for (std::size_t it = 0; it < 20 * n + 100; ++it) {
    double worst = 0.0;
    for (double v : r) worst = std::max(worst, std::abs(v));
    if (worst <= stop) break;
    apply(d, ad);
    double dad = 0.0;
    for (std::size_t k = 0; k < n; ++k) dad += d[k] * ad[k];
    if (!(dad > 0.0)) break;
    const double alpha = rr / dad;
    double rr_new = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * d[k];
      r[k] -= alpha * ad[k];
      rr_new += r[k] * r[k];
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) d[k] = r[k] + beta * d[k];
  }
}

// Primal-dual active set iteration for the LCP. For the M-matrix at hand it
// reaches the exact active set in a handful of linear solves, after which
// the Gauss-Seidel sweeps only have to polish. Returns false if the active
// set did not settle (the sweeps then start from whatever was reached).
inline bool active_set_start(const Stencil& st, const std::vector<std::size_t>& active, const ScalarField& divu,
                             ScalarField& p, std::size_t max_rounds = 100) {
  std::vector<char> in_j(st.diag.size(), 0);
  bool any = false;
  for (std::size_t c : active) {
    if (p[c] > 0.0 || divu[c] < 0.0) {
      in_j[c] = 1;
      any = true;
    }
  }
  if (!any) {
    for (std::size_t c : active) p[c] = 0.0;
    return true;
  }
  for (std::size_t round = 0; round < max_rounds; ++round) {
    std::vector<std::size_t> cells;
    for (std::size_t c : active) {
      if (in_j[c]) cells.push_back(c);
      else p[c] = 0.0;
    }
    std::vector<double> b(cells.size()), x(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      b[k] = -divu[cells[k]];
      x[k] = p[cells[k]];
    }
    restricted_cg(st, cells, in_j, b, x);
    for (std::size_t k = 0; k < cells.size(); ++k) p[cells[k]] = x[k];
    bool changed = false;
    for (std::size_t c : active) {
      double w = divu[c] + st.diag[c] * p[c];
      for (int m = 0; m < st.count[c]; ++m) {
        w -= st.w[c][static_cast<std::size_t>(m)] * p[st.nb[c][static_cast<std::size_t>(m)]];
      }
      const char next = in_j[c] ? (p[c] > 0.0 ? 1 : 0) : (w < 0.0 ? 1 : 0);
      changed = changed || next != in_j[c];
      in_j[c] = next;
    }
    if (!changed) {
      for (std::size_t c : active) p[c] = std::max(0.0, p[c]);
      return true;
    }
  }
  for (std::size_t c : active) p[c] = std::max(0.0, p[c]);
  return false;
}

}  // namespace detail

/// Projects u onto adm(rho) by projected Gauss-Seidel on the pressure LCP,
/// started from an active-set estimate. `warm_start` seeds p (values off S
/// are ignored).
inline ProjectionResult project_velocity(const DensityField& rho, const FaceField& u, const ProjectionOptions& opt = {},
                                         const ScalarField* warm_start = nullptr) {
  const Grid& g = rho.grid();
  if (!(g == u.grid())) throw Error("project_velocity: grid mismatch");
  if (!(opt.relaxation > 0.0 && opt.relaxation < 2.0)) throw Error("project_velocity: relaxation must be in (0, 2)");
  if (!(opt.tolerance > 0.0)) throw Error("project_velocity: tolerance must be positive");

  ProjectionResult res;
  // Transport may overshoot rho <= 1 by O(h); such cells count as saturated.
  res.constraint_excess = std::max(0.0, rho.max() - 1.0);
  res.p = ScalarField(g);
  const auto sat = saturated_mask(rho, opt.thresholds);
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < g.cells(); ++c) {
    if (sat[c]) active.push_back(c);
  }
  if (active.empty()) {
    res.v = u;
    return res;
  }

  const ScalarField divu = divergence(u);
  const auto st = detail::laplace_stencil(g);
  auto& p = res.p;
  if (warm_start) {
    for (std::size_t c : active) p[c] = std::max(0.0, (*warm_start)[c]);
  }
  if (opt.active_set_start) detail::active_set_start(st, active, divu, p);
  const double omega = opt.relaxation;
  // w_i = div u_i + sum_k w_k (p_i - p_nb)
  auto residual = [&](std::size_t c) {
    double acc = st.diag[c] * p[c];
    for (int k = 0; k < st.count[c]; ++k) acc -= st.w[c][static_cast<std::size_t>(k)] * p[st.nb[c][static_cast<std::size_t>(k)]];
    return divu[c] + acc;
  };

  res.converged = false;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    double biggest = 0.0;
    for (std::size_t c : active) {
      const double w = residual(c);
      const double updated = std::max(0.0, p[c] - omega * w / st.diag[c]);
      biggest = std::max(biggest, std::abs(updated - p[c]));
      p[c] = updated;
    }
    res.iterations = it;
    if (biggest <= opt.tolerance) {
      res.converged = true;
      break;
    }
  }

  // Whole domain saturated: pressure is defined up to a constant.
  if (active.size() == g.cells()) {
    const double m = p.min();
    for (std::size_t c = 0; c < g.cells(); ++c) p[c] -= m;
  }

  const FaceField gp = gradient(p);
  res.v = u - gp;
  double comp = 0.0;
  for (std::size_t c : active) comp += p[c] * std::abs(residual(c));
  res.complementarity = comp * g.cell_volume();
  res.orthogonality = std::abs(inner(res.v, gp));
  res.cone_violation = cone_violation(rho, res.v, opt.thresholds);
  return res;
}

/// W2-closest density to rho_tilde with rho <= 1 (one dimension).
inline DensityField wasserstein_project_K_1d(const DensityField& rho_tilde, std::size_t samples = 0,
                                             const DensityThresholds& th = {}) {
  const Grid& g = rho_tilde.grid();
  require_1d(g, "wasserstein_project_K_1d");
  if (g.measure() < 1.0) throw Error("wasserstein_project_K_1d: domain shorter than 1, K is empty");
  if (rho_tilde.in_constraint_set(th)) return rho_tilde;
  const std::size_t n = samples ? samples : default_quantile_count(g);
  QuantileFunction qf = quantiles_of(rho_tilde, n);
  const double gap = 1.0 / static_cast<double>(n);
  qf.q = project_min_spacing(qf.q, gap, qf.lower + 0.5 * gap, qf.upper - 0.5 * gap);
  return density_from_quantiles(qf, g);
}

struct CrowdTrajectory {
  DensityTrajectory rho;
  ScalarTrajectory pressure;
  FaceTrajectory velocity;
  std::size_t failed_projections = 0;
};

/// d_t rho + div(rho P_adm(rho)[u_k]) = 0, with the projection taken at the
/// start of every step. `spontaneous` supplies u at each node.
template <class VelocityFn>
CrowdTrajectory evolve_crowd(const DensityField& rho0, VelocityFn&& spontaneous, const TimeGrid& tg,
                             const ProjectionOptions& opt = {}) {
  CrowdTrajectory out;
  out.rho = DensityTrajectory(tg, rho0);
  out.pressure = ScalarTrajectory(tg, ScalarField(rho0.grid()));
  out.velocity = FaceTrajectory(tg, FaceField(rho0.grid()));
  const ScalarField* warm = nullptr;
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    const FaceField u = spontaneous(k, out.rho[k]);
    ProjectionResult pr = project_velocity(out.rho[k], u, opt, warm);
    if (!pr.converged) ++out.failed_projections;
    out.pressure[k] = std::move(pr.p);
    out.velocity[k] = std::move(pr.v);
    warm = &out.pressure[k];
    if (k < tg.steps()) out.rho[k + 1] = advect_step(out.rho[k], out.velocity[k], tg.dt()).first;
  }
  return out;
}

}  // namespace congest
