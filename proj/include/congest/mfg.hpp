#pragma once
// Fixed-point drivers for the deterministic MFG systems
//
//   penalized:    d_t phi + |grad phi|^2/2 - g(rho) = 0,
//                 d_t rho + div(rho grad phi) = 0,
//   constrained:  d_t phi + |grad phi|^2/2 - grad phi . grad p = 0,
//                 d_t rho + div(rho (grad phi - grad p)) = 0,
//                 p >= 0, p (1 - rho) = 0,
//
// with phi(T) = Phi and rho(0) = rho0, plus the diagnostics used to judge a
// computed equilibrium: residual report, fictitious pressure, a dynamic
// programming best response (exploitability) and the uniqueness monitor.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "congest/grid.hpp"
#include "congest/hjb.hpp"
#include "congest/projection.hpp"
#include "congest/transport.hpp"

namespace congest {

/// g(rho) = rho^(m-1), G(rho) = rho^m / m.
class CongestionPenalty {
 public:
  explicit CongestionPenalty(double m = 2.0) : m_(m) {
    if (!(m >= 2.0) || !std::isfinite(m)) throw Error("CongestionPenalty: exponent must be >= 2");
    // g must be the derivative of G; central differences are exact to O(d^2).
    for (double r : {0.1, 0.5, 0.9, 1.0, 1.3}) {
      const double d = 1e-5;
      const double fd = (G(r + d) - G(r - d)) / (2.0 * d);
      if (std::abs(fd - g(r)) > 1e-6 * std::max(1.0, g(r))) throw Error("CongestionPenalty: g is not G'");
    }
  }
  double m() const { return m_; }
  double g(double rho) const { return std::pow(std::max(rho, 0.0), m_ - 1.0); }
  double G(double rho) const { return std::pow(std::max(rho, 0.0), m_) / m_; }

  ScalarTrajectory source(const DensityTrajectory& rho) const {
    ScalarTrajectory out(rho.time, ScalarField(rho.grid()));
    for (std::size_t k = 0; k < rho.size(); ++k) {
      for (std::size_t c = 0; c < rho[k].size(); ++c) out[k][c] = g(rho[k][c]);
    }
    return out;
  }

 private:
  double m_;
};

enum class MfgMode { Penalized, Constrained };

/// How the constrained loop couples the HJB drift to the projection.
enum class Coupling {
  /// HJB drift uses the pressure of the previous iterate.
  Lagged,
  /// The pressure feeding the HJB step at t_{k+1} is recomputed inside the
  /// backward sweep by projecting grad phi(t_{k+1}) onto adm(rho(t_{k+1}))
  /// with the current density iterate.
  Synchronous,
};

struct MfgOptions {
  std::size_t iterations = 200;
  double tolerance = 1e-8;  ///< on the sup-norm fixed-point increment
  double damping = 0.0;     ///< 0 selects fictitious play, delta_k = 1/(k+1)
  Coupling coupling = Coupling::Synchronous;
  bool project = true;      ///< false forces p = 0 (negative control)
  ProjectionOptions projection{};
};

struct ResidualReport {
  double hjb = 0.0;                 ///< scheme residual of phi against the stored fields
  double continuity = 0.0;          ///< max_k |rho_{k+1} - advect(rho_k, v_k)|
  double weak_continuity = 0.0;     ///< weak residual for psi(x) = x (first axis)
  double complementarity = 0.0;     ///< sum_k dt int p |1 - rho|
  double pressure_min = 0.0;        ///< signed
  double orthogonality = 0.0;       ///< max_k |<grad p_k, v_k>|
  double effort_consistency = 0.0;  ///< max_k |alpha_k - grad phi_k|
  double velocity_consistency = 0.0;  ///< max_k |v_k - (alpha_k - grad p_k)|
  double increment = 0.0;           ///< last fixed-point increment
  double mass_drift = 0.0;          ///< max_k |mass(rho_k) - 1|
  double constraint_excess = 0.0;   ///< max(0, max rho - 1)
  std::optional<double> exploitability;
};

struct MfgSolution {
  MfgMode mode = MfgMode::Penalized;
  std::optional<CongestionPenalty> penalty;
  ScalarField terminal;
  DensityTrajectory rho;
  ScalarTrajectory phi;
  ScalarTrajectory p;
  FaceTrajectory alpha;
  FaceTrajectory v;
  std::vector<double> history;  ///< increment per iteration
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t failed_projections = 0;
  ResidualReport report;
};

namespace detail {

inline double sup_increment(const DensityTrajectory& a, const DensityTrajectory& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t c = 0; c < a[k].size(); ++c) m = std::max(m, std::abs(a[k][c] - b[k][c]));
  }
  return m;
}

inline double sup_increment(const ScalarTrajectory& a, const ScalarTrajectory& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, sup_distance(a[k], b[k]));
  return m;
}

// Iterations are counted from k = 1, so the first fresh iterate replaces
// the initial guess: delta = 1/k here is the 1/(k+1) rule counted from 0.
inline double mix_weight(const MfgOptions& opt, std::size_t k) {
  if (k <= 1) return 1.0;
  return opt.damping > 0.0 ? opt.damping : 1.0 / static_cast<double>(k);
}

inline DensityTrajectory mix(const DensityTrajectory& old, const DensityTrajectory& fresh, double w) {
  DensityTrajectory out = old;
  for (std::size_t k = 0; k < old.size(); ++k) {
    std::vector<double> vals(old[k].size());
    for (std::size_t c = 0; c < vals.size(); ++c) vals[c] = (1.0 - w) * old[k][c] + w * fresh[k][c];
    out[k] = DensityField(old.grid(), std::move(vals));
  }
  return out;
}

inline ScalarTrajectory mix(const ScalarTrajectory& old, const ScalarTrajectory& fresh, double w) {
  ScalarTrajectory out = old;
  for (std::size_t k = 0; k < old.size(); ++k) out[k] = (1.0 - w) * old[k] + w * fresh[k];
  return out;
}

inline FaceTrajectory gradients(const ScalarTrajectory& f) { return optimal_feedback(f); }

inline void check_inputs(const DensityField& rho0, const ScalarField& terminal) {
  if (!(rho0.grid() == terminal.grid())) throw Error("mfg: rho0 and Phi live on different grids");
  if (std::abs(rho0.mass() - 1.0) > 1e-10) throw Error("mfg: rho0 must have unit mass");
  if (!terminal.finite()) throw Error("mfg: Phi must be finite");
}

struct ForwardSweep {
  DensityTrajectory rho;
  ScalarTrajectory p;
  FaceTrajectory v;
  std::size_t failed = 0;
};

inline ForwardSweep forward_constrained(const DensityField& rho0, const FaceTrajectory& alpha, const TimeGrid& tg,
                                        const MfgOptions& opt) {
  ForwardSweep out;
  if (!opt.project) {
    out.rho = solve_continuity(rho0, alpha, tg);
    out.p = ScalarTrajectory(tg, ScalarField(rho0.grid()));
    out.v = alpha;
    return out;
  }
  CrowdTrajectory ct = evolve_crowd(rho0, [&](std::size_t k, const DensityField&) { return alpha[k]; }, tg,
                                    opt.projection);
  out.rho = std::move(ct.rho);
  out.p = std::move(ct.pressure);
  out.v = std::move(ct.velocity);
  out.failed = ct.failed_projections;
  return out;
}

// Backward sweep with the pressure recomputed from the current density
// iterate at every node; returns phi and the pressures that were used.
inline std::pair<ScalarTrajectory, ScalarTrajectory> backward_synchronous(const ScalarField& terminal,
                                                                          const DensityTrajectory& rho,
                                                                          const TimeGrid& tg,
                                                                          const MfgOptions& opt,
                                                                          std::size_t& failed) {
  ScalarTrajectory phi(tg, terminal);
  ScalarTrajectory p(tg, ScalarField(terminal.grid()));
  const ScalarField* warm = nullptr;
  for (std::size_t k = tg.steps(); k-- > 0;) {
    ProjectionResult pr = project_velocity(rho[k + 1], gradient(phi[k + 1]), opt.projection, warm);
    if (!pr.converged) ++failed;
    p[k + 1] = std::move(pr.p);
    warm = &p[k + 1];
    const FaceField drift = gradient(p[k + 1]);
    phi[k] = hjb_macro_step(phi[k + 1], &drift, nullptr, tg.dt());
    const double mx = phi[k].max_abs();
    if (!std::isfinite(mx) || mx > 1e6 * std::max(1.0, terminal.max_abs())) {
      throw Error("hjb: blow-up at t = " + std::to_string(tg.t(k)));
    }
  }
  ProjectionResult pr0 = project_velocity(rho[0], gradient(phi[0]), opt.projection, warm);
  if (!pr0.converged) ++failed;
  p[0] = std::move(pr0.p);
  return {std::move(phi), std::move(p)};
}

}  // namespace detail

/// Discrete Q(f, g) at every cell: sum over axes of the average over the two
/// faces of (grad f)(grad g). Bilinear, so algebraic identities between
/// residuals built from it hold to round-off.
inline ScalarField face_product(const ScalarField& f, const ScalarField& g) {
  const FaceField a = gradient(f), b = gradient(g);
  const Grid& gr = f.grid();
  ScalarField out(gr);
  for (std::size_t c = 0; c < gr.cells(); ++c) {
    const std::size_t i = gr.ix(c), j = gr.iy(c);
    double s = 0.0;
    for (int ax = 0; ax < gr.dim(); ++ax) {
      const std::size_t f0 = gr.face_index(ax, i, j);
      const std::size_t f1 = ax == 0 ? gr.face_index(0, i + 1, j) : gr.face_index(1, i, j + 1);
      s += 0.5 * (a.axis(ax)[f0] * b.axis(ax)[f0] + a.axis(ax)[f1] * b.axis(ax)[f1]);
    }
    out[c] = s;
  }
  return out;
}

/// Every ResidualReport entry recomputed from the stored trajectories.
inline ResidualReport equilibrium_residual(const MfgSolution& sol) {
  ResidualReport r;
  const TimeGrid& tg = sol.rho.time;
  HjbProblem prob{sol.terminal, std::nullopt, std::nullopt, HjbOrientation::Sup};
  if (sol.mode == MfgMode::Penalized) {
    if (!sol.penalty) throw Error("equilibrium_residual: penalized solution without penalty");
    prob.source = sol.penalty->source(sol.rho);
  } else {
    prob.drift = detail::gradients(sol.p);
  }
  r.hjb = hjb_residual(sol.phi, prob);

  const ScalarField psi = ScalarField::sample(sol.rho.grid(), [](double x, double) { return x; });
  r.weak_continuity = weak_residual(sol.rho, sol.v, psi);
  r.pressure_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    const DensityField& rho = sol.rho[k];
    if (k < tg.steps()) {
      const DensityField next = advect_step(rho, sol.v[k], tg.dt()).first;
      for (std::size_t c = 0; c < rho.size(); ++c) {
        r.continuity = std::max(r.continuity, std::abs(next[c] - sol.rho[k + 1][c]));
      }
    }
    double comp = 0.0;
    for (std::size_t c = 0; c < rho.size(); ++c) comp += sol.p[k][c] * std::abs(1.0 - rho[c]);
    // trapezoid in time
    const double wt = (k == 0 || k == tg.steps()) ? 0.5 : 1.0;
    r.complementarity += wt * tg.dt() * comp * rho.grid().cell_volume();
    r.pressure_min = std::min(r.pressure_min, sol.p[k].min());
    const FaceField gp = gradient(sol.p[k]);
    r.orthogonality = std::max(r.orthogonality, std::abs(inner(gp, sol.v[k])));
    const FaceField gphi = gradient(sol.phi[k]);
    for (int a = 0; a < rho.grid().dim(); ++a) {
      const auto al = sol.alpha[k].axis(a), gf = gphi.axis(a), vv = sol.v[k].axis(a), pp = gp.axis(a);
      for (std::size_t f = 0; f < al.size(); ++f) {
        r.effort_consistency = std::max(r.effort_consistency, std::abs(al[f] - gf[f]));
        r.velocity_consistency = std::max(r.velocity_consistency, std::abs(vv[f] - (al[f] - pp[f])));
      }
    }
    r.mass_drift = std::max(r.mass_drift, std::abs(rho.mass() - 1.0));
    r.constraint_excess = std::max(r.constraint_excess, std::max(0.0, rho.max() - 1.0));
  }
  r.increment = sol.history.empty() ? 0.0 : sol.history.back();
  r.exploitability = sol.report.exploitability;
  return r;
}

/// Penalized system by fictitious play on the density trajectory.
inline MfgSolution solve_mfg_penalized(const DensityField& rho0, const ScalarField& terminal,
                                       const CongestionPenalty& penalty, const TimeGrid& tg,
                                       const MfgOptions& opt = {}) {
  detail::check_inputs(rho0, terminal);
  MfgSolution sol;
  sol.mode = MfgMode::Penalized;
  sol.penalty = penalty;
  sol.terminal = terminal;
  DensityTrajectory rho(tg, rho0);
  auto best_response = [&](const DensityTrajectory& r, ScalarTrajectory& phi, FaceTrajectory& alpha) {
    const HjbProblem prob{terminal, std::nullopt, penalty.source(r), HjbOrientation::Sup};
    phi = hjb_backward(prob, tg);
    alpha = optimal_feedback(phi);
    return solve_continuity(rho0, alpha, tg);
  };
  ScalarTrajectory phi;
  FaceTrajectory alpha;
  for (std::size_t k = 1; k <= opt.iterations; ++k) {
    const DensityTrajectory fresh = best_response(rho, phi, alpha);
    const double inc = detail::sup_increment(fresh, rho);
    sol.history.push_back(inc);
    sol.iterations = k;
    rho = detail::mix(rho, fresh, detail::mix_weight(opt, k));
    if (inc <= opt.tolerance) {
      sol.converged = true;
      break;
    }
  }
  // The returned density is the one the returned effort actually produces.
  sol.rho = best_response(rho, phi, alpha);
  sol.phi = std::move(phi);
  sol.alpha = std::move(alpha);
  sol.v = sol.alpha;
  sol.p = ScalarTrajectory(tg, ScalarField(rho0.grid()));
  sol.report = equilibrium_residual(sol);
  return sol;
}

/// Density-constrained system. Each iteration solves the HJB with the
/// pressure drift, sets alpha = grad phi, then runs the forward sweep
/// (project alpha_k onto adm(rho_k), advect) and damps (rho, p).
inline MfgSolution solve_mfg_constrained(const DensityField& rho0, const ScalarField& terminal, const TimeGrid& tg,
                                         const MfgOptions& opt = {}) {
  detail::check_inputs(rho0, terminal);
  if (!rho0.in_constraint_set(opt.projection.thresholds)) throw Error("mfg: rho0 must satisfy rho <= 1");
  MfgSolution sol;
  sol.mode = MfgMode::Constrained;
  sol.terminal = terminal;
  DensityTrajectory rho(tg, rho0);
  ScalarTrajectory p(tg, ScalarField(rho0.grid()));
  ScalarTrajectory phi;
  FaceTrajectory alpha;

  auto backward = [&](const DensityTrajectory& r, const ScalarTrajectory& pr) {
    if (opt.coupling == Coupling::Synchronous && opt.project) {
      phi = detail::backward_synchronous(terminal, r, tg, opt, sol.failed_projections).first;
    } else {
      const HjbProblem prob{terminal, detail::gradients(pr), std::nullopt, HjbOrientation::Sup};
      phi = hjb_backward(prob, tg);
    }
    alpha = optimal_feedback(phi);
  };

  for (std::size_t k = 1; k <= opt.iterations; ++k) {
    backward(rho, p);
    detail::ForwardSweep fw = detail::forward_constrained(rho0, alpha, tg, opt);
    sol.failed_projections += fw.failed;
    const double inc = std::max(detail::sup_increment(fw.rho, rho), detail::sup_increment(fw.p, p));
    sol.history.push_back(inc);
    sol.iterations = k;
    const double w = detail::mix_weight(opt, k);
    rho = detail::mix(rho, fw.rho, w);
    p = detail::mix(p, fw.p, w);
    if (inc <= opt.tolerance) {
      sol.converged = true;
      break;
    }
  }
  backward(rho, p);
  detail::ForwardSweep fw = detail::forward_constrained(rho0, alpha, tg, opt);
  sol.failed_projections += fw.failed;
  sol.rho = std::move(fw.rho);
  sol.p = std::move(fw.p);
  sol.v = std::move(fw.v);
  sol.phi = std::move(phi);
  sol.alpha = std::move(alpha);
  sol.report = equilibrium_residual(sol);
  return sol;
}

// ---------------------------------------------------------------------------
// Fictitious pressure

struct FictitiousPressure {
  ScalarTrajectory p_hat;
  std::optional<ScalarTrajectory> phi_hat;  ///< phi + p_hat when phi was given
  double phi_residual = 0.0;      ///< |D_t phi + Q(phi,phi)/2 - g|
  double p_hat_residual = 0.0;    ///< |-D_t p_hat + Q(p_hat,p_hat)/2 - g|
  double transformed_residual = 0.0;  ///< |D_t phi_hat + Q(phi_hat,phi_hat)/2 - Q(phi_hat,p_hat)|
  /// max |R_hat - (R_phi - R_p_hat)|: the transformed equation is the
  /// difference of the two others, so this is round-off.
  double decomposition_defect = 0.0;
};

/// p_hat solves -d_t p + |grad p|^2/2 - rho^(m-1) = 0, p(T) = 0 (inf-type).
/// With phi given, also phi_hat = phi + p_hat and the residuals of the
/// decomposed system, measured with a simple explicit discretization
/// (backward difference in time, face_product for the quadratic terms)
/// over the cells away from the walls.
inline FictitiousPressure fictitious_pressure(const DensityTrajectory& rho, double m,
                                              const ScalarTrajectory* phi = nullptr) {
  const CongestionPenalty pen(m);
  const TimeGrid& tg = rho.time;
  FictitiousPressure out;
  const ScalarTrajectory src = pen.source(rho);
  const HjbProblem prob{ScalarField(rho.grid()), std::nullopt, src, HjbOrientation::Inf};
  out.p_hat = hjb_backward(prob, tg);
  if (!phi) return out;
  if (phi->size() != rho.size()) throw Error("fictitious_pressure: phi does not match the time grid");
  out.phi_hat = *phi;
  for (std::size_t k = 0; k < tg.nodes(); ++k) (*out.phi_hat)[k] += out.p_hat[k];
  const double dt = tg.dt();
  // The state constraint makes the scheme one-sided in wall cells, where the
  // centered face average is not a consistent measure.
  const Grid& g = rho.grid();
  auto touches_wall = [&](std::size_t c) {
    const std::size_t i = g.ix(c), j = g.iy(c);
    if (i == 0 || i + 1 == g.nx()) return true;
    return g.dim() == 2 && (j == 0 || j + 1 == g.ny());
  };
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    const ScalarField& f0 = (*phi)[k];
    const ScalarField& f1 = (*phi)[k + 1];
    const ScalarField& q0 = out.p_hat[k];
    const ScalarField& q1 = out.p_hat[k + 1];
    const ScalarField& h0 = (*out.phi_hat)[k];
    const ScalarField& h1 = (*out.phi_hat)[k + 1];
    const ScalarField qff = face_product(f1, f1), qpp = face_product(q1, q1);
    const ScalarField qhh = face_product(h1, h1), qhp = face_product(h1, q1);
    for (std::size_t c = 0; c < f0.size(); ++c) {
      if (touches_wall(c)) continue;
      const double rphi = (f1[c] - f0[c]) / dt + 0.5 * qff[c] - src[k + 1][c];
      const double rp = -(q1[c] - q0[c]) / dt + 0.5 * qpp[c] - src[k + 1][c];
      const double rh = (h1[c] - h0[c]) / dt + 0.5 * qhh[c] - qhp[c];
      out.phi_residual = std::max(out.phi_residual, std::abs(rphi));
      out.p_hat_residual = std::max(out.p_hat_residual, std::abs(rp));
      out.transformed_residual = std::max(out.transformed_residual, std::abs(rh));
      out.decomposition_defect = std::max(out.decomposition_defect, std::abs(rh - (rphi - rp)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic programming best response (one dimension)

struct BestResponseConfig {
  double alpha_max = 0.0;       ///< 0: 2 diam(Omega) / T
  std::size_t controls = 801;   ///< lattice points in [-alpha_max, alpha_max]
};

/// What an individual agent faces: running cost c(t, x) (congestion
/// g(rho), or zero), pressure drift grad p (or none) and terminal payoff.
struct AgentFields {
  ScalarField terminal;
  std::optional<ScalarTrajectory> running_cost;
  std::optional<FaceTrajectory> drift;

  static AgentFields from(const MfgSolution& sol) {
    AgentFields f{sol.terminal, std::nullopt, std::nullopt};
    if (sol.mode == MfgMode::Penalized) f.running_cost = sol.penalty->source(sol.rho);
    else f.drift = detail::gradients(sol.p);
    return f;
  }
};

namespace detail {

// Linear interpolation between cell centers, flat outside the outer centers.
inline double interp_cells(const ScalarField& f, double x) {
  const Axis& ax = f.grid().axis(0);
  const double u = (x - ax.center(0)) / ax.h();
  if (u <= 0.0) return f[0];
  const double last = static_cast<double>(ax.cells - 1);
  if (u >= last) return f[ax.cells - 1];
  const auto i = static_cast<std::size_t>(u);
  const double w = u - static_cast<double>(i);
  return (1.0 - w) * f[i] + w * f[i + 1];
}

// Linear interpolation between face positions (walls carry zero).
inline double interp_faces(const FaceField& v, double x) {
  const Axis& ax = v.grid().axis(0);
  const auto comp = v.axis(0);
  const double u = (x - ax.lower) / ax.h();
  if (u <= 0.0) return comp[0];
  const double last = static_cast<double>(ax.cells);
  if (u >= last) return comp[ax.cells];
  const auto i = static_cast<std::size_t>(u);
  const double w = u - static_cast<double>(i);
  return (1.0 - w) * comp[i] + w * comp[i + 1];
}

}  // namespace detail

struct DpValue {
  ScalarTrajectory value;  ///< V_k at cell centers
  double alpha_max = 0.0;
  double d_alpha = 0.0;
  bool bound_active = false;  ///< some maximizer sat on +-alpha_max
};

/// Backward dynamic programming for
///   V_k(x) = max_a  -dt (a^2/2 + c_k(x)) + V_{k+1}(clamp(x + dt (a - b_k(x)))),
/// V_N = Phi, over the control lattice.
inline DpValue dp_value(const AgentFields& fields, const TimeGrid& tg, const BestResponseConfig& cfg = {}) {
  const Grid& g = fields.terminal.grid();
  require_1d(g, "trajectory_best_response");
  if (cfg.controls < 3) throw Error("best response: need at least 3 controls");
  DpValue out;
  out.alpha_max = cfg.alpha_max > 0.0 ? cfg.alpha_max : 2.0 * g.diameter() / tg.horizon();
  out.d_alpha = 2.0 * out.alpha_max / static_cast<double>(cfg.controls - 1);
  out.value = ScalarTrajectory(tg, fields.terminal);
  const double dt = tg.dt();
  const double lo = g.axis(0).lower, hi = g.axis(0).upper;
  for (std::size_t k = tg.steps(); k-- > 0;) {
    const ScalarField& next = out.value[k + 1];
    ScalarField cur(g);
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const double x = g.center(c)[0];
      const double cost = fields.running_cost ? (*fields.running_cost)[k][c] : 0.0;
      const double b = fields.drift ? detail::interp_faces((*fields.drift)[k], x) : 0.0;
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t j = 0; j < cfg.controls; ++j) {
        const double a = -out.alpha_max + static_cast<double>(j) * out.d_alpha;
        const double y = std::clamp(x + dt * (a - b), lo, hi);
        const double val = -dt * (0.5 * a * a + cost) + detail::interp_cells(next, y);
        if (val > best) {
          best = val;
          arg = j;
        }
      }
      if (arg == 0 || arg + 1 == cfg.controls) out.bound_active = true;
      cur[c] = best;
    }
    out.value[k] = std::move(cur);
  }
  return out;
}

struct BestResponse {
  std::vector<double> path;  ///< positions at t_{k0}, ..., t_N
  double payoff = 0.0;
  bool bound_active = false;
};

/// Best response of an agent starting at x0 at node k0, by forward greedy
/// reconstruction through the DP value function.
inline BestResponse trajectory_best_response(double x0, std::size_t k0, const AgentFields& fields, const DpValue& dp) {
  const TimeGrid& tg = dp.value.time;
  if (k0 > tg.steps()) throw Error("best response: start node beyond the horizon");
  const Grid& g = fields.terminal.grid();
  const double lo = g.axis(0).lower, hi = g.axis(0).upper;
  const double dt = tg.dt();
  const std::size_t controls = static_cast<std::size_t>(std::llround(2.0 * dp.alpha_max / dp.d_alpha)) + 1;
  BestResponse out;
  out.bound_active = dp.bound_active;
  double y = std::clamp(x0, lo, hi);
  out.path.push_back(y);
  for (std::size_t k = k0; k < tg.steps(); ++k) {
    const double cost = fields.running_cost ? detail::interp_cells((*fields.running_cost)[k], y) : 0.0;
    const double b = fields.drift ? detail::interp_faces((*fields.drift)[k], y) : 0.0;
    double best = -std::numeric_limits<double>::infinity(), best_a = 0.0;
    for (std::size_t j = 0; j < controls; ++j) {
      const double a = -dp.alpha_max + static_cast<double>(j) * dp.d_alpha;
      const double yn = std::clamp(y + dt * (a - b), lo, hi);
      const double val = -dt * 0.5 * a * a + detail::interp_cells(dp.value[k + 1], yn);
      if (val > best) {
        best = val;
        best_a = a;
      }
    }
    out.payoff -= dt * (0.5 * best_a * best_a + cost);
    y = std::clamp(y + dt * (best_a - b), lo, hi);
    out.path.push_back(y);
  }
  out.payoff += detail::interp_cells(fields.terminal, y);
  return out;
}

/// Payoff collected by an agent at x0 who follows the equilibrium effort:
/// y' = alpha(t, y) - grad p(t, y), explicit Euler on the time grid.
inline double realized_payoff(double x0, const MfgSolution& sol, const AgentFields& fields) {
  const TimeGrid& tg = sol.rho.time;
  const Grid& g = sol.rho.grid();
  const double lo = g.axis(0).lower, hi = g.axis(0).upper;
  double y = x0, payoff = 0.0;
  for (std::size_t k = 0; k < tg.steps(); ++k) {
    const double a = detail::interp_faces(sol.alpha[k], y);
    const double b = fields.drift ? detail::interp_faces((*fields.drift)[k], y) : 0.0;
    const double cost = fields.running_cost ? detail::interp_cells((*fields.running_cost)[k], y) : 0.0;
    payoff -= tg.dt() * (0.5 * a * a + cost);
    y = std::clamp(y + tg.dt() * (a - b), lo, hi);
  }
  return payoff + detail::interp_cells(fields.terminal, y);
}

struct ExploitabilityReport {
  double exploitability = 0.0;  ///< max_x0 (best response - realized), >= 0
  double payoff_scale = 0.0;    ///< max Phi - min Phi
  std::vector<double> starts;
  std::vector<double> best;
  std::vector<double> realized;
  bool bound_active = false;
};

/// Exploitability over the given starting positions. Following the
/// equilibrium is itself a candidate strategy, so the best response is taken
/// as the larger of the DP payoff and the realized payoff.
inline ExploitabilityReport exploitability_at(const MfgSolution& sol, const std::vector<double>& starts,
                                              const BestResponseConfig& cfg = {}) {
  const AgentFields fields = AgentFields::from(sol);
  const DpValue dp = dp_value(fields, sol.rho.time, cfg);
  ExploitabilityReport rep;
  rep.payoff_scale = sol.terminal.max() - sol.terminal.min();
  rep.bound_active = dp.bound_active;
  for (double x0 : starts) {
    const double real = realized_payoff(x0, sol, fields);
    const double br = std::max(trajectory_best_response(x0, 0, fields, dp).payoff, real);
    rep.starts.push_back(x0);
    rep.best.push_back(br);
    rep.realized.push_back(real);
    rep.exploitability = std::max(rep.exploitability, br - real);
  }
  return rep;
}

/// Cells carrying initial mass (above 1e-3 of the peak).
inline std::vector<std::size_t> occupied_cells(const DensityField& rho0) {
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < rho0.size(); ++c) {
    if (rho0[c] > 1e-3 * rho0.max()) cells.push_back(c);
  }
  return cells;
}

/// Up to `samples` evenly spread starting points among the occupied cells.
inline ExploitabilityReport exploitability(const MfgSolution& sol, std::size_t samples = 20,
                                           const BestResponseConfig& cfg = {}) {
  const DensityField& r0 = sol.rho[0];
  const std::vector<std::size_t> cells = occupied_cells(r0);
  const std::size_t take = std::min(samples, cells.size());
  std::vector<double> starts;
  for (std::size_t s = 0; s < take; ++s) {
    const std::size_t c = cells[(s * cells.size()) / take + (cells.size() / take) / 2];
    starts.push_back(r0.grid().center(c)[0]);
  }
  return exploitability_at(sol, starts, cfg);
}

// ---------------------------------------------------------------------------
// Uniqueness monitor

struct UniquenessSeries {
  std::vector<double> t;
  std::vector<double> I;     ///< int (phi1 - phi2) d(rho1 - rho2) at every node
  std::vector<double> dIdt;  ///< forward differences, one per step
};

inline UniquenessSeries uniqueness_monitor(const MfgSolution& a, const MfgSolution& b) {
  if (!(a.rho.grid() == b.rho.grid()) || !(a.rho.time == b.rho.time)) {
    throw Error("uniqueness_monitor: solutions live on different grids");
  }
  UniquenessSeries s;
  const TimeGrid& tg = a.rho.time;
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.rho[k].size(); ++c) {
      acc += (a.phi[k][c] - b.phi[k][c]) * (a.rho[k][c] - b.rho[k][c]);
    }
    s.t.push_back(tg.t(k));
    s.I.push_back(acc * a.rho.grid().cell_volume());
  }
  for (std::size_t k = 0; k < tg.steps(); ++k) s.dIdt.push_back((s.I[k + 1] - s.I[k]) / tg.dt());
  return s;
}

}  // namespace congest
