#pragma once
// Scenario orchestration behind the command line tool: dispatch to a solver,
// write fields/*.csv, report.json and summary.txt, evaluate the selected
// checks. The "residuals" block of every report is produced by a function
// of the emitted fields only, so it can be recomputed from the CSV files
// (see recompute_residuals).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "congest/config.hpp"
#include "congest/gradient_flow.hpp"
#include "congest/io.hpp"
#include "congest/mfg.hpp"
#include "congest/projection.hpp"
#include "congest/scenarios.hpp"
#include "congest/variational.hpp"

namespace congest {

enum class Command { Crowd, MfgPenalized, MfgConstrained, Variational, VerifyExample, MSweep };

inline const std::vector<std::pair<Command, std::string>>& command_names() {
  static const std::vector<std::pair<Command, std::string>> names{
      {Command::Crowd, "crowd"},           {Command::MfgPenalized, "mfg-penalized"},
      {Command::MfgConstrained, "mfg-constrained"}, {Command::Variational, "variational"},
      {Command::VerifyExample, "verify-example"},   {Command::MSweep, "m-sweep"}};
  return names;
}

inline std::string command_name(Command c) {
  for (const auto& [cmd, name] : command_names()) {
    if (cmd == c) return name;
  }
  return "?";
}

inline std::optional<Command> parse_command(const std::string& s) {
  for (const auto& [cmd, name] : command_names()) {
    if (name == s) return cmd;
  }
  return std::nullopt;
}

/// The built-in nothing-moves scenario: Phi = -|x - 1| on [0, 2].
inline ScenarioConfig nothing_moves_config() {
  ScenarioConfig cfg;
  cfg.grid.x = {0.0, 2.0};
  cfg.grid.nx = 200;
  cfg.grid.ny = 1;
  cfg.time = {1.0, 200};
  cfg.potential.family = "cone";
  cfg.potential.center = {1.0, 0.0};
  cfg.initial.kind = "superlevel";
  return cfg;
}

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool upper = true;  ///< pass iff value <= threshold (else value >= threshold)
  bool passed() const { return upper ? value <= threshold : value >= threshold; }
};

struct RunResult {
  Command command = Command::Crowd;
  json report;
  std::vector<Check> checks;
  std::string summary;
  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed(); });
  }
};

namespace detail {

namespace fs = std::filesystem;

struct Metric {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool upper = true;
  bool by_default = true;
};

// Default checks, or exactly those named in the configuration.
inline std::vector<Check> select_checks(const std::vector<Metric>& metrics, const ScenarioConfig& cfg, Command cmd) {
  std::vector<Check> out;
  if (cfg.checks.empty()) {
    for (const auto& m : metrics) {
      if (m.by_default) out.push_back({m.name, m.value, m.threshold, m.upper});
    }
    return out;
  }
  for (const auto& [name, thr] : cfg.checks) {
    auto it = std::find_if(metrics.begin(), metrics.end(), [&](const Metric& m) { return m.name == name; });
    if (it == metrics.end()) {
      std::string avail;
      for (const auto& m : metrics) avail += (avail.empty() ? "" : ", ") + m.name;
      throw ConfigError("/checks/" + name, "not available for " + command_name(cmd) + " (available: " + avail + ")");
    }
    out.push_back({name, it->value, thr, it->upper});
  }
  return out;
}

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_ / "fields"); }
  void field(const std::string& name, const CsvTable& t) const { write_csv((dir_ / "fields" / (name + ".csv")).string(), t); }
  void table(const std::string& name, const CsvTable& t) const { write_csv((dir_ / (name + ".csv")).string(), t); }
  void faces(const std::string& name, const FaceTrajectory& f) const {
    const char* suffix[] = {"_x", "_y"};
    for (int a = 0; a < f.grid().dim(); ++a) field(name + suffix[a], face_table(f, a));
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

inline std::string field_path(const fs::path& dir, const std::string& name) {
  return (dir / "fields" / (name + ".csv")).string();
}

inline std::vector<std::string> face_paths(const fs::path& dir, const std::string& name, int dim) {
  std::vector<std::string> out{field_path(dir, name + "_x")};
  if (dim == 2) out.push_back(field_path(dir, name + "_y"));
  return out;
}

inline json grid_json(const Grid& g) {
  json j;
  j["dim"] = g.dim();
  j["x"] = {g.axis(0).lower, g.axis(0).upper};
  j["nx"] = g.nx();
  if (g.dim() == 2) {
    j["y"] = {g.axis(1).lower, g.axis(1).upper};
    j["ny"] = g.ny();
  }
  j["cells"] = g.cells();
  return j;
}

inline double max_mass_drift(const DensityTrajectory& rho) {
  double m = 0.0;
  for (std::size_t k = 0; k < rho.size(); ++k) m = std::max(m, std::abs(rho[k].mass() - 1.0));
  return m;
}

inline double max_density(const DensityTrajectory& rho) {
  double m = 0.0;
  for (std::size_t k = 0; k < rho.size(); ++k) m = std::max(m, rho[k].max());
  return m;
}

inline double max_l1(const DensityTrajectory& a, const DensityTrajectory& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, l1_distance(a[k], b[k]));
  return m;
}

inline json residual_report_json(const ResidualReport& r) {
  json j;
  j["hjb"] = r.hjb;
  j["continuity"] = r.continuity;
  j["weak_continuity"] = r.weak_continuity;
  j["complementarity"] = r.complementarity;
  j["pressure_min"] = r.pressure_min;
  j["orthogonality"] = r.orthogonality;
  j["effort_consistency"] = r.effort_consistency;
  j["velocity_consistency"] = r.velocity_consistency;
  j["increment"] = r.increment;
  j["mass_drift"] = r.mass_drift;
  j["constraint_excess"] = r.constraint_excess;
  if (r.exploitability) j["exploitability"] = *r.exploitability;
  return j;
}

inline json nothing_moves_json(const NothingMovesReport& r) {
  json j;
  j["stationarity"] = r.stationarity;
  j["pressure_min"] = r.pressure_min;
  j["pressure_outside"] = r.pressure_outside;
  j["complementarity"] = r.complementarity;
  j["pressure_budget"] = r.pressure_outside + r.complementarity;
  j["value_error"] = r.value_error;
  j["phipm_outside_mean"] = r.phipm_outside;
  j["phipm_inside_mean"] = r.phipm_inside;
  j["phipm_outside_max"] = r.phipm_outside_max;
  j["phipm_inside_max"] = r.phipm_inside_max;
  j["mass_drift"] = r.mass_drift;
  return j;
}

// Starting points for the exploitability probe: distinct occupied cells
// drawn with the configured seed.
inline std::vector<double> exploitability_starts(const DensityField& rho0, std::size_t samples, std::uint64_t seed) {
  std::vector<std::size_t> cells = occupied_cells(rho0);
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(samples, cells.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (cells.size() - i));
    std::swap(cells[i], cells[j]);
  }
  cells.resize(take);
  std::sort(cells.begin(), cells.end());
  std::vector<double> out;
  for (std::size_t c : cells) out.push_back(rho0.grid().center(c)[0]);
  return out;
}

inline std::vector<double> history_from_csv(const fs::path& dir) {
  const CsvTable t = read_csv((dir / "history.csv").string());
  const std::size_t col = t.column("increment");
  std::vector<double> out;
  for (const auto& row : t.rows) out.push_back(row[col]);
  return out;
}

inline CsvTable history_table(const std::vector<double>& h) {
  CsvTable t{{"iteration", "increment"}, {}};
  for (std::size_t i = 0; i < h.size(); ++i) t.rows.push_back({static_cast<double>(i + 1), h[i]});
  return t;
}

// ---------------------------------------------------------------------------
// Residual blocks (functions of emitted data only)

inline json mfg_residuals(const MfgSolution& sol, const ScenarioConfig& cfg) {
  MfgSolution s = sol;
  s.report.exploitability.reset();
  ResidualReport r = equilibrium_residual(s);
  if (sol.rho.grid().dim() == 1 && cfg.solver.exploitability_samples > 0) {
    BestResponseConfig bc;
    bc.controls = cfg.solver.controls;
    const auto starts = exploitability_starts(sol.rho[0], cfg.solver.exploitability_samples, cfg.seed);
    const ExploitabilityReport ex = exploitability_at(sol, starts, bc);
    r.exploitability = ex.exploitability;
  }
  json j = residual_report_json(r);
  if (r.exploitability) {
    const double scale = sol.terminal.max() - sol.terminal.min();
    j["payoff_scale"] = scale;
    j["exploitability_ratio"] = scale > 0.0 ? *r.exploitability / scale : *r.exploitability;
  }
  return j;
}

inline void write_mfg(const Artifacts& art, const MfgSolution& sol) {
  art.field("rho", trajectory_table(sol.rho));
  art.field("phi", trajectory_table(sol.phi));
  art.field("p", trajectory_table(sol.p));
  art.field("Phi", field_table(sol.terminal, sol.rho.time.horizon()));
  art.faces("alpha", sol.alpha);
  art.faces("v", sol.v);
  art.table("history", history_table(sol.history));
}

inline MfgSolution load_mfg(const fs::path& dir, const ScenarioConfig& cfg, MfgMode mode) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  MfgSolution s;
  s.mode = mode;
  if (mode == MfgMode::Penalized) s.penalty = CongestionPenalty(cfg.solver.m);
  s.terminal = read_scalar_field(field_path(dir, "Phi"), g, tg.horizon());
  s.rho = read_density_trajectory(field_path(dir, "rho"), g, tg);
  s.phi = read_scalar_trajectory(field_path(dir, "phi"), g, tg);
  s.p = read_scalar_trajectory(field_path(dir, "p"), g, tg);
  s.alpha = read_face_trajectory(face_paths(dir, "alpha", g.dim()), g, tg);
  s.v = read_face_trajectory(face_paths(dir, "v", g.dim()), g, tg);
  s.history = history_from_csv(dir);
  return s;
}

inline NothingMovesThresholds nothing_moves_thresholds(const ScenarioConfig& cfg) {
  NothingMovesThresholds th;
  auto pick = [&](const char* name, double& v) {
    if (auto it = cfg.checks.find(name); it != cfg.checks.end()) v = it->second;
  };
  pick("stationarity", th.stationarity);
  pick("pressure_budget", th.pressure_budget);
  pick("value_error", th.value_error);
  pick("mass_drift", th.mass_drift);
  return th;
}

inline json variational_residuals(const BbIterate& it, const ScalarField& phi) {
  const OptimalityResiduals oc = check_optimality_conditions(it, phi);
  json j;
  j["empty"] = oc.empty;
  j["saturated"] = oc.saturated;
  j["intermediate"] = oc.intermediate;
  j["terminal_empty"] = oc.terminal_empty;
  j["terminal_saturated"] = oc.terminal_saturated;
  j["terminal_intermediate"] = oc.terminal_intermediate;
  j["max_condition"] = oc.max_condition();
  j["momentum"] = oc.momentum;
  j["kinetic_energy"] = kinetic_energy(it.rho, it.q);
  j["terminal_payoff"] = integrate(phi, it.rho[it.rho.time.steps()]);
  j["mass_drift"] = max_mass_drift(it.rho);
  return j;
}

inline std::vector<double> interval_midpoints(const TimeGrid& tg) {
  std::vector<double> out;
  for (std::size_t k = 0; k < tg.steps(); ++k) out.push_back(tg.t(k) + 0.5 * tg.dt());
  return out;
}

inline BbIterate load_bb(const fs::path& dir, const ScenarioConfig& cfg) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  BbIterate it;
  it.rho = read_density_trajectory(field_path(dir, "rho"), g, tg);
  const auto mids = interval_midpoints(tg);
  const auto chi = cell_blocks(read_csv(field_path(dir, "chi")), g, mids, "chi");
  for (const auto& b : chi) it.chi.emplace_back(g, b);
  for (int a = 0; a < g.dim(); ++a) {
    const std::string path = face_paths(dir, "q", g.dim())[static_cast<std::size_t>(a)];
    const CsvTable t = read_csv(path);
    const std::size_t nf = g.faces(a);
    if (t.rows.size() != nf * mids.size()) throw Error("csv: " + path + ": wrong number of rows");
    if (a == 0) it.q.assign(mids.size(), FaceField(g));
    const std::size_t vcol = t.column("value");
    for (std::size_t k = 0; k < mids.size(); ++k) {
      auto comp = it.q[k].axis(a);
      for (std::size_t f = 0; f < nf; ++f) comp[f] = t.rows[k * nf + f][vcol];
    }
  }
  return it;
}

inline TimeGrid flow_time(const ScenarioConfig& cfg) {
  return TimeGrid(cfg.solver.jko.tau * static_cast<double>(cfg.solver.jko.steps), cfg.solver.jko.steps);
}

inline JkoConfig jko_config(const ScenarioConfig& cfg, JkoMode mode, double m) {
  JkoConfig j;
  j.mode = mode;
  j.m = m;
  j.tau = cfg.solver.jko.tau;
  j.tolerance = cfg.solver.jko.tolerance;
  j.samples = cfg.solver.jko.samples;
  return j;
}

inline std::string m_label(double m) {
  std::ostringstream os;
  os << m;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Outcome {
  json residuals;
  json extra;
  std::vector<Metric> metrics;
};

inline Outcome run_crowd(const ScenarioConfig& cfg, const Artifacts& art) {
  const Grid g = cfg.grid.build();
  const ScalarField D = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, D);
  Outcome o;
  if (g.dim() == 1) {
    const JkoMode mode = cfg.solver.jko.mode == "penalized" ? JkoMode::Penalized : JkoMode::Constrained;
    const GradientFlowResult fl = run_gradient_flow(rho0, D, jko_config(cfg, mode, cfg.solver.m), cfg.solver.jko.steps);
    art.field("rho", trajectory_table(fl.rho));
    CsvTable energy{{"step", "t", "energy", "w2_increment"}, {}};
    double increase = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fl.energy.size(); ++k) {
      energy.rows.push_back({static_cast<double>(k), fl.rho.time.t(k), fl.energy[k], k ? fl.w2_increment[k - 1] : 0.0});
      if (k) increase = std::max(increase, fl.energy[k] - fl.energy[k - 1]);
    }
    art.table("energy", energy);
    o.residuals["mass_drift"] = max_mass_drift(fl.rho);
    o.residuals["max_density"] = max_density(fl.rho);
    o.extra["energy_initial"] = fl.energy.front();
    o.extra["energy_final"] = fl.energy.back();
    o.extra["energy_max_increase"] = increase;
    o.extra["inner_converged"] = fl.converged;
    o.metrics.push_back({"mass_drift", max_mass_drift(fl.rho), 1e-10});
    o.metrics.push_back({"energy_increase", increase, 0.0});
    if (mode == JkoMode::Constrained) {
      o.metrics.push_back({"constraint_excess", std::max(0.0, max_density(fl.rho) - 1.0), 1e-8});
    } else if (cfg.solver.pme_reference) {
      const DensityTrajectory pme = porous_media_reference(rho0, D, cfg.solver.m, fl.rho.time);
      art.field("rho_pme", trajectory_table(pme));
      o.residuals["pme_l1"] = max_l1(fl.rho, pme);
      o.metrics.push_back({"pme_l1", max_l1(fl.rho, pme), 0.05});
    }
  } else {
    const TimeGrid tg = cfg.time.build();
    const FaceField u = -1.0 * gradient(D);
    const CrowdTrajectory ct = evolve_crowd(rho0, [&](std::size_t, const DensityField&) { return u; }, tg);
    art.field("rho", trajectory_table(ct.rho));
    art.field("p", trajectory_table(ct.pressure));
    art.faces("v", ct.velocity);
    o.residuals["mass_drift"] = max_mass_drift(ct.rho);
    o.residuals["max_density"] = max_density(ct.rho);
    double pmin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ct.pressure.size(); ++k) pmin = std::min(pmin, ct.pressure[k].min());
    o.residuals["pressure_min"] = pmin;
    o.extra["failed_projections"] = ct.failed_projections;
    o.metrics.push_back({"mass_drift", max_mass_drift(ct.rho), 1e-10});
    o.metrics.push_back({"pressure_min", pmin, -1e-8, false});
    o.metrics.push_back({"failed_projections", static_cast<double>(ct.failed_projections), 0.0});
  }
  return o;
}

inline Outcome run_mfg_penalized(const ScenarioConfig& cfg, const Artifacts& art) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const ScalarField phi = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, phi);
  MfgOptions opt;
  opt.iterations = cfg.solver.iterations;
  opt.tolerance = cfg.solver.tolerance;
  opt.damping = cfg.solver.damping;
  const MfgSolution sol = solve_mfg_penalized(rho0, phi, CongestionPenalty(cfg.solver.m), tg, opt);
  write_mfg(art, sol);
  Outcome o;
  o.residuals = mfg_residuals(sol, cfg);
  o.extra["iterations"] = sol.iterations;
  o.extra["converged"] = sol.converged;
  const FictitiousPressure fp = fictitious_pressure(sol.rho, cfg.solver.m, &sol.phi);
  art.field("p_hat", trajectory_table(fp.p_hat));
  o.extra["fictitious_pressure"] = {{"phi_residual", fp.phi_residual},
                                    {"p_hat_residual", fp.p_hat_residual},
                                    {"transformed_residual", fp.transformed_residual},
                                    {"decomposition_defect", fp.decomposition_defect}};
  o.metrics.push_back({"increment", o.residuals["increment"].get<double>(), cfg.solver.tolerance});
  o.metrics.push_back({"mass_drift", o.residuals["mass_drift"].get<double>(), 1e-10});
  o.metrics.push_back({"continuity", o.residuals["continuity"].get<double>(), 1e-12});
  o.metrics.push_back({"hjb", o.residuals["hjb"].get<double>(), 1e-2, true, false});
  if (o.residuals.contains("exploitability_ratio")) {
    o.metrics.push_back({"exploitability_ratio", o.residuals["exploitability_ratio"].get<double>(), 1e-2});
  }
  o.metrics.push_back({"decomposition_defect", fp.decomposition_defect, 1e-9});
  return o;
}

inline Outcome run_mfg_constrained(const ScenarioConfig& cfg, const Artifacts& art) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const ScalarField phi_raw = build_potential(cfg.potential, g);
  const bool nothing_moves = cfg.initial.kind == "superlevel";
  std::optional<NothingMovesScenario> nm;
  if (nothing_moves) nm = build_nothing_moves(phi_raw);
  const ScalarField phi = nm ? nm->potential : phi_raw;
  const DensityField rho0 = nm ? nm->rho0 : build_initial(cfg.initial, g, phi);
  MfgOptions opt;
  opt.iterations = cfg.solver.iterations;
  opt.tolerance = cfg.solver.tolerance;
  opt.damping = cfg.solver.damping;
  opt.coupling = cfg.solver.coupling == "lagged" ? Coupling::Lagged : Coupling::Synchronous;
  opt.project = cfg.solver.project;
  const MfgSolution sol = solve_mfg_constrained(rho0, phi, tg, opt);
  write_mfg(art, sol);
  Outcome o;
  o.residuals = mfg_residuals(sol, cfg);
  o.extra["iterations"] = sol.iterations;
  o.extra["converged"] = sol.converged;
  o.extra["failed_projections"] = sol.failed_projections;
  const ChiReport chi = chi_from_mfg(sol);
  o.extra["chi"] = {{"identity_gap", chi.identity_gap},
                    {"simple_hjb_residual", chi.simple_hjb_residual},
                    {"terminal_identity", chi.terminal_identity},
                    {"saturated_min", chi.saturated_min},
                    {"saturated_negative", chi.saturated_negative},
                    {"intermediate_abs", chi.intermediate_abs}};
  o.metrics.push_back({"mass_drift", o.residuals["mass_drift"].get<double>(), 1e-10});
  o.metrics.push_back({"pressure_min", o.residuals["pressure_min"].get<double>(), -1e-8, false});
  o.metrics.push_back({"complementarity", o.residuals["complementarity"].get<double>(), 1e-6});
  o.metrics.push_back({"increment", o.residuals["increment"].get<double>(), cfg.solver.tolerance, true, false});
  if (nm) {
    const NothingMovesReport r = verify_nothing_moves(*nm, sol, nothing_moves_thresholds(cfg));
    o.residuals["nothing_moves"] = nothing_moves_json(r);
    o.metrics.push_back({"stationarity", r.stationarity, 0.1});
    o.metrics.push_back({"pressure_budget", r.pressure_outside + r.complementarity, 1e-6});
    o.metrics.push_back({"value_error", r.value_error, 0.05});
  }
  return o;
}

inline Outcome run_variational(const ScenarioConfig& cfg, const Artifacts& art) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const ScalarField phi_raw = build_potential(cfg.potential, g);
  const bool nothing_moves = cfg.initial.kind == "superlevel";
  std::optional<NothingMovesScenario> nm;
  if (nothing_moves) nm = build_nothing_moves(phi_raw);
  const ScalarField phi = nm ? nm->potential : phi_raw;
  const DensityField rho0 = nm ? nm->rho0 : build_initial(cfg.initial, g, phi);
  BbConfig bc;
  bc.iterations = cfg.solver.bb.iterations;
  bc.gap_tolerance = cfg.solver.bb.gap_tolerance;
  bc.feasibility_tolerance = cfg.solver.bb.feasibility_tolerance;
  bc.step_ratio = cfg.solver.bb.step_ratio;
  const BbIterate it = solve_bb_constrained(rho0, phi, tg, bc);
  const auto mids = interval_midpoints(tg);
  art.field("rho", trajectory_table(it.rho));
  art.field("chi", sequence_table(it.chi, mids));
  for (int a = 0; a < g.dim(); ++a) art.field(a == 0 ? "q_x" : "q_y", face_table(it.q, mids, a));
  art.field("Phi", field_table(phi, tg.horizon()));
  CsvTable conv{{"iteration", "primal", "dual", "gap", "feasibility"}, {}};
  for (const auto& h : it.history) {
    conv.rows.push_back({static_cast<double>(h.iteration), h.primal, h.dual, h.gap, h.feasibility});
  }
  art.table("convergence", conv);
  Outcome o;
  o.residuals = variational_residuals(it, phi);
  o.extra["primal"] = it.primal;
  o.extra["dual"] = it.dual;
  o.extra["gap"] = it.gap;
  o.extra["feasibility"] = it.feasibility;
  o.extra["iterations"] = it.iterations;
  o.extra["converged"] = it.converged;
  o.extra["diverged"] = it.diverged;
  o.extra["operator_norm"] = it.operator_norm;
  if (!it.message.empty()) o.extra["message"] = it.message;
  o.metrics.push_back({"gap", std::abs(it.gap), 1e-2});
  o.metrics.push_back({"optimality", o.residuals["max_condition"].get<double>(), 1e-2});
  o.metrics.push_back({"momentum", o.residuals["momentum"].get<double>(), 1e-2});
  o.metrics.push_back({"feasibility", it.feasibility, 1e-2, true, false});
  const double stay = -integrate(phi, rho0);
  o.extra["stay_put_value"] = stay;
  o.metrics.push_back({"stay_put", std::abs(it.primal - stay), 1e-2, true, nothing_moves});
  if (g.dim() == 1 && g.measure() >= 1.0) {
    const StaticReduction sr = static_reduction_oracle_1d(rho0, phi, tg.horizon());
    o.extra["static_reduction"] = {{"value_half_inverse", sr.value_half_inverse}, {"value_literal", sr.value_literal}};
    art.field("rho_static", field_table(sr.rho_half_inverse, tg.horizon()));
    o.metrics.push_back({"static_reduction", std::abs(it.primal - sr.value_half_inverse), 1e-2, true, !nothing_moves});
  }
  return o;
}

inline Outcome run_verify_example(const ScenarioConfig& cfg, const Artifacts& art) {
  if (cfg.initial.kind != "superlevel") throw ConfigError("/initial/kind", "verify-example needs 'superlevel'");
  Outcome o = run_mfg_constrained(cfg, art);
  // Negative control: the same scenario with the projection switched off.
  const Grid g = cfg.grid.build();
  const NothingMovesScenario nm = build_nothing_moves(build_potential(cfg.potential, g));
  MfgOptions opt;
  opt.iterations = cfg.solver.iterations;
  opt.tolerance = cfg.solver.tolerance;
  opt.project = false;
  const MfgSolution free = solve_mfg_constrained(nm.rho0, nm.potential, cfg.time.build(), opt);
  const NothingMovesReport r = verify_nothing_moves(nm, free);
  o.extra["negative_control"] = nothing_moves_json(r);
  o.metrics.push_back({"negative_control_moves", r.stationarity, 0.1, false});
  return o;
}

inline Outcome run_m_sweep(const ScenarioConfig& cfg, const Artifacts& art) {
  const Grid g = cfg.grid.build();
  require_1d(g, "m-sweep");
  const ScalarField D = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, D);
  const std::size_t steps = cfg.solver.jko.steps;
  const GradientFlowResult con = run_gradient_flow(rho0, D, jko_config(cfg, JkoMode::Constrained, 2.0), steps);
  art.field("rho_constrained", trajectory_table(con.rho));
  CsvTable sweep{{"m", "max_l1_gap", "final_l1_gap"}, {}};
  std::vector<double> gaps;
  Outcome o;
  for (double m : cfg.solver.m_values) {
    const GradientFlowResult pen = run_gradient_flow(rho0, D, jko_config(cfg, JkoMode::Penalized, m), steps);
    art.field("rho_m" + m_label(m), trajectory_table(pen.rho));
    const double gap = max_l1(pen.rho, con.rho);
    gaps.push_back(gap);
    sweep.rows.push_back({m, gap, l1_distance(pen.rho[steps], con.rho[steps])});
    o.residuals["gap_m" + m_label(m)] = gap;
  }
  art.table("sweep", sweep);
  double rise = 0.0;
  for (std::size_t i = 1; i < gaps.size(); ++i) rise = std::max(rise, gaps[i] - gaps[i - 1]);
  o.extra["max_rise"] = rise;
  o.metrics.push_back({"trend_noise", rise, 1e-3});
  if (!gaps.empty()) o.metrics.push_back({"final_gap", gaps.back(), 0.05});
  return o;
}

inline std::string summary_text(const RunResult& r, const json& extra) {
  std::ostringstream os;
  os << "command: " << command_name(r.command) << "\n";
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    if (it.value().is_primitive()) os << "  " << it.key() << ": " << it.value().dump() << "\n";
  }
  os << "checks:\n";
  for (const auto& c : r.checks) {
    os << "  " << (c.passed() ? "PASS " : "FAIL ") << c.name << " = " << format_double(c.value)
       << (c.upper ? " <= " : " >= ") << format_double(c.threshold) << "\n";
  }
  os << (r.ok() ? "result: PASS\n" : "result: FAIL\n");
  return os.str();
}

}  // namespace detail

/// Runs one command, writes the artifacts under `out` and returns the
/// report. Identical config and seed give bit-identical CSV files.
inline RunResult run_scenario(Command cmd, const ScenarioConfig& cfg, const std::filesystem::path& out) {
  if (cmd != Command::Crowd && cmd != Command::MfgPenalized) {
    if (cfg.grid.build().measure() < 1.0) throw ConfigError("/grid", "|Omega| must be >= 1 for the constrained solvers");
  }
  if (cmd == Command::Crowd && cfg.solver.jko.mode == "constrained" && cfg.grid.build().measure() < 1.0) {
    throw ConfigError("/grid", "|Omega| must be >= 1 for the constrained solvers");
  }
  const detail::Artifacts art(out);
  detail::Outcome o;
  switch (cmd) {
    case Command::Crowd: o = detail::run_crowd(cfg, art); break;
    case Command::MfgPenalized: o = detail::run_mfg_penalized(cfg, art); break;
    case Command::MfgConstrained: o = detail::run_mfg_constrained(cfg, art); break;
    case Command::Variational: o = detail::run_variational(cfg, art); break;
    case Command::VerifyExample: o = detail::run_verify_example(cfg, art); break;
    case Command::MSweep: o = detail::run_m_sweep(cfg, art); break;
  }
  RunResult r;
  r.command = cmd;
  r.checks = detail::select_checks(o.metrics, cfg, cmd);
  json& rep = r.report;
  rep["schema_version"] = kSchemaVersion;
  rep["command"] = command_name(cmd);
  rep["seed"] = cfg.seed;
  rep["grid"] = detail::grid_json(cfg.grid.build());
  rep["time"] = {{"horizon", cfg.time.horizon}, {"steps", cfg.time.steps}};
  rep["residuals"] = o.residuals;
  rep["objectives"] = o.extra;
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", c.value},
                      {"threshold", c.threshold},
                      {"direction", c.upper ? "<=" : ">="},
                      {"passed", c.passed()}});
  }
  rep["checks"] = checks;
  rep["passed"] = r.ok();
  {
    std::ofstream f(out / "report.json");
    f << rep.dump(2) << "\n";
  }
  r.summary = detail::summary_text(r, o.extra);
  {
    std::ofstream f(out / "summary.txt");
    f << r.summary;
  }
  return r;
}

/// The "residuals" block recomputed from the CSV files in `dir`.
inline json recompute_residuals(Command cmd, const ScenarioConfig& cfg, const std::filesystem::path& dir) {
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  json j;
  switch (cmd) {
    case Command::Crowd: {
      const TimeGrid ft = g.dim() == 1 ? detail::flow_time(cfg) : tg;
      const DensityTrajectory rho = read_density_trajectory(detail::field_path(dir, "rho"), g, ft);
      j["mass_drift"] = detail::max_mass_drift(rho);
      j["max_density"] = detail::max_density(rho);
      if (g.dim() == 2) {
        const ScalarTrajectory p = read_scalar_trajectory(detail::field_path(dir, "p"), g, ft);
        double pmin = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.size(); ++k) pmin = std::min(pmin, p[k].min());
        j["pressure_min"] = pmin;
      } else if (std::filesystem::exists(detail::field_path(dir, "rho_pme"))) {
        j["pme_l1"] = detail::max_l1(rho, read_density_trajectory(detail::field_path(dir, "rho_pme"), g, ft));
      }
      return j;
    }
    case Command::MfgPenalized:
      return detail::mfg_residuals(detail::load_mfg(dir, cfg, MfgMode::Penalized), cfg);
    case Command::MfgConstrained:
    case Command::VerifyExample: {
      const MfgSolution sol = detail::load_mfg(dir, cfg, MfgMode::Constrained);
      j = detail::mfg_residuals(sol, cfg);
      if (cfg.initial.kind == "superlevel") {
        const NothingMovesScenario nm = build_nothing_moves(build_potential(cfg.potential, g));
        j["nothing_moves"] = detail::nothing_moves_json(verify_nothing_moves(nm, sol, detail::nothing_moves_thresholds(cfg)));
      }
      return j;
    }
    case Command::Variational: {
      const BbIterate it = detail::load_bb(dir, cfg);
      const ScalarField phi = read_scalar_field(detail::field_path(dir, "Phi"), g, tg.horizon());
      return detail::variational_residuals(it, phi);
    }
    case Command::MSweep: {
      const TimeGrid ft = detail::flow_time(cfg);
      const DensityTrajectory con = read_density_trajectory(detail::field_path(dir, "rho_constrained"), g, ft);
      for (double m : cfg.solver.m_values) {
        const std::string name = "rho_m" + detail::m_label(m);
        j["gap_m" + detail::m_label(m)] =
            detail::max_l1(read_density_trajectory(detail::field_path(dir, name), g, ft), con);
      }
      return j;
    }
  }
  return j;
}

}  // namespace congest
