// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Scenario parameters come from examples/configs where a
// shipped configuration exists; oracles come from tests/oracles.hpp.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "congest/run.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace congest;
using namespace congest::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  // Records `name = value` against `limit` and folds the comparison in.
  void at_most(const std::string& name, double value, double limit) { add(name, value, "<=", limit, value <= limit); }
  void at_least(const std::string& name, double value, double limit) { add(name, value, ">=", limit, value >= limit); }
  void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }

 private:
  void add(const std::string& name, double value, const char* op, double limit, bool ok) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s=%.4g %s %.3g%s", name.c_str(), value, op, limit, ok ? "" : " (!)");
    note(buf);
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScenarioConfig load(const std::string& name) {
  std::ifstream in(fs::path(CONGEST_CONFIG_DIR) / name);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double max_l1(const DensityTrajectory& a, const DensityTrajectory& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, l1_distance(a[k], b[k]));
  return worst;
}

// Constrained nothing-moves run on n cells and n time steps over T = 1.
struct NothingMovesRun {
  NothingMovesScenario s;
  MfgSolution sol;
  NothingMovesReport report;
  double seconds = 0.0;
};

NothingMovesRun nothing_moves(std::size_t n) {
  const Grid g = Grid::line(0.0, 2.0, n);
  const TimeGrid tg(1.0, n);
  NothingMovesRun r;
  r.s = build_nothing_moves(cone_potential(g, 1.0));
  const auto t0 = std::chrono::steady_clock::now();
  r.sol = solve_mfg_constrained(r.s.rho0, r.s.potential, tg);
  r.seconds = seconds_since(t0);
  r.report = verify_nothing_moves(r.s, r.sol);
  return r;
}

Verdict criterion1(const NothingMovesRun& run) {
  Verdict v;
  v.at_most("sup_t L1(rho_t,rho0)", run.report.stationarity, 0.1);
  v.at_least("min p", run.report.pressure_min, -1e-8);
  v.at_most("int_Ac p + int p(1-rho)", run.report.pressure_outside + run.report.complementarity, 1e-6);
  v.at_most("mass drift", run.report.mass_drift, 1e-10);
  v.at_most("seconds", run.seconds, 60.0);
  return v;
}

Verdict criterion2(const NothingMovesRun& fine) {
  Verdict v;
  const NothingMovesRun coarse = nothing_moves(100);
  v.at_most("|phi - phi_ref| n=200", fine.report.value_error, 0.05);
  v.note("n=100 error " + format_double(coarse.report.value_error).substr(0, 8));
  v.at_least("refinement ratio", coarse.report.value_error / fine.report.value_error, 1.3);
  return v;
}

Verdict criterion3() {
  Verdict v;
  Engine e(20240601);
  double idem = 0.0, expansion = 0.0, ortho = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool two = trial % 2 == 0;
    const Grid g = two ? Grid::rect({0.0, 2.0}, {0.0, 2.0}, pick(e, 4, 12), pick(e, 4, 12))
                       : Grid::line(0.0, 2.0, pick(e, 8, 80));
    const DensityField rho = random_crowd(e, g);
    const FaceField u1 = random_faces(e, g, 2.0), u2 = random_faces(e, g, 2.0);
    const ProjectionResult r1 = project_velocity(rho, u1), r2 = project_velocity(rho, u2);
    const ProjectionResult again = project_velocity(rho, r1.v);
    idem = std::max({idem, again.p.max_abs(), (again.v - r1.v).max_abs()});
    expansion = std::max(expansion, norm(r1.v - r2.v) - norm(u1 - u2));
    const double scale = std::max(1.0, norm(u1) * norm(r1.p));
    ortho = std::max(ortho, std::abs(inner(r1.v, gradient(r1.p))) / scale);
  }
  v.at_most("idempotence", idem, 1e-8);
  v.at_most("expansion", std::max(0.0, expansion), 1e-8);
  v.at_most("orthogonality/scale", ortho, 1e-8);

  double qp = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int kind = trial % 3;
    const Grid g = kind == 2 ? Grid::rect({0.0, 2.0}, {0.0, 1.0}, 4, 2) : Grid::line(0.0, 1.0, 8);
    std::vector<double> values(8, 1.0);
    std::vector<std::size_t> S;
    for (std::size_t c = 0; c < 8; ++c) {
      if (kind != 0 && uniform(e, 0.0, 1.0) >= 0.7) values[c] = 0.3;
      if (values[c] == 1.0) S.push_back(c);
    }
    const DensityField rho(g, values);
    const FaceField u = random_faces(e, g, 3.0);
    const std::vector<double> got = flatten(project_velocity(rho, u).v);
    const std::vector<double> want = brute_force_projection(g, S, flatten(u));
    for (std::size_t k = 0; k < got.size(); ++k) qp = std::max(qp, std::abs(got[k] - want[k]));
  }
  v.at_most("active-set QP oracle (n=8)", qp, 1e-6);
  return v;
}

Verdict criterion4() {
  Verdict v;
  const ScenarioConfig cfg = load("crowd_pme.json");
  const Grid g = cfg.grid.build();
  const ScalarField D = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, D);
  JkoConfig jc;
  jc.mode = JkoMode::Penalized;
  jc.m = 4.0;
  jc.tau = 1e-3;
  jc.tolerance = cfg.solver.jko.tolerance;
  const std::size_t steps = cfg.solver.jko.steps;
  const GradientFlowResult fl = run_gradient_flow(rho0, D, jc, steps);
  const DensityTrajectory pme = porous_media_reference(rho0, D, 4.0, fl.rho.time);
  double rise = -1.0;
  for (std::size_t k = 1; k < fl.energy.size(); ++k) rise = std::max(rise, fl.energy[k] - fl.energy[k - 1]);
  v.note("n=" + std::to_string(g.cells()) + " m=4 tau=1e-3");
  v.at_most("max_t L1(JKO, PME)", max_l1(fl.rho, pme), 0.05);
  v.at_most("max energy increase", rise, 0.0);
  return v;
}

Verdict criterion5() {
  Verdict v;
  const ScenarioConfig cfg = load("m_sweep.json");
  const Grid g = cfg.grid.build();
  const ScalarField D = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, D);
  JkoConfig jc;
  jc.tau = cfg.solver.jko.tau;
  jc.tolerance = cfg.solver.jko.tolerance;
  const std::size_t steps = cfg.solver.jko.steps;
  jc.mode = JkoMode::Constrained;
  const GradientFlowResult con = run_gradient_flow(rho0, D, jc, steps);
  jc.mode = JkoMode::Penalized;
  std::vector<double> gaps;
  std::string table;
  for (double m : {2.0, 4.0, 8.0, 16.0}) {
    jc.m = m;
    gaps.push_back(max_l1(run_gradient_flow(rho0, D, jc, steps).rho, con.rho));
    table += (table.empty() ? "" : ", ") + format_double(gaps.back()).substr(0, 6);
  }
  double rise = 0.0;
  for (std::size_t i = 1; i < gaps.size(); ++i) rise = std::max(rise, gaps[i] - gaps[i - 1]);
  v.note("gaps m=2,4,8,16: " + table);
  v.at_most("largest rise", rise, 1e-3);
  v.at_most("gap m=16", gaps.back(), 0.05);
  return v;
}

Verdict criterion6() {
  Verdict v;
  {
    const Grid g = Grid::line(0.0, 2.0, 32);
    const TimeGrid tg(1.0, 16);
    const BbIterate it = solve_bb_constrained(DensityField::uniform(g), ScalarField(g, 0.7), tg);
    v.at_most("Phi-const gap", std::abs(it.gap), 1e-6);
    v.at_most("iterations", static_cast<double>(it.iterations), 5000.0);
  }
  const ScenarioConfig cfg = load("variational_nothing_moves.json");
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const NothingMovesScenario s = build_nothing_moves(build_potential(cfg.potential, g));
  BbConfig bc;
  bc.iterations = cfg.solver.bb.iterations;
  const BbIterate it = solve_bb_constrained(s.rho0, s.potential, tg, bc);
  const OptimalityResiduals oc = check_optimality_conditions(it, s.potential);
  v.at_most("|primal + int Phi d rho0|", std::abs(it.primal + integrate(s.potential, s.rho0)), 1e-2);
  v.at_most("max of six conditions", oc.max_condition(), 1e-2);
  v.at_most("q - rho grad chi", oc.momentum, 1e-2);
  return v;
}

Verdict criterion7() {
  Verdict v;
  const ScenarioConfig cfg = load("variational_translation.json");
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const ScalarField phi = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, phi);
  BbConfig bc;
  bc.iterations = cfg.solver.bb.iterations;
  bc.gap_tolerance = cfg.solver.bb.gap_tolerance;
  const BbIterate it = solve_bb_constrained(rho0, phi, tg, bc);
  const StaticReduction sr = static_reduction_oracle_1d(rho0, phi, tg.horizon());
  v.note("BB " + format_double(it.primal).substr(0, 9) + ", static 1/(2T) " +
         format_double(sr.value_half_inverse).substr(0, 9) + ", literal T " + format_double(sr.value_literal).substr(0, 9));
  v.at_most("|BB - static(1/(2T))|", std::abs(it.primal - sr.value_half_inverse), 1e-2);

  const Grid small = Grid::line(0.0, 2.0, 40);
  const DensityField flat = DensityField::uniform(small);
  const ScalarField well = ScalarField::sample(small, [](double x) { return -2.0 * (x - 1.2) * (x - 1.2); });
  double worst = 0.0;
  for (std::size_t n : {8u, 16u, 32u}) {
    const QuantileFunction q0 = quantiles_of(flat, n);
    for (double c : {0.5, 2.0}) {
      const double got = static_reduction_quantiles(q0, well, c).value;
      worst = std::max(worst, std::abs(got - brute_force_static(q0, well, c, 64000 / n)));
    }
  }
  v.at_most("oracle vs lattice brute force (n<=32)", worst, 1e-4);
  return v;
}

Verdict criterion8() {
  Verdict v;
  const ScenarioConfig cfg = load("penalized_bump.json");
  const Grid g = cfg.grid.build();
  const TimeGrid tg = cfg.time.build();
  const ScalarField phi = build_potential(cfg.potential, g);
  const DensityField rho0 = build_initial(cfg.initial, g, phi);
  MfgOptions opt;
  opt.iterations = cfg.solver.iterations;
  opt.tolerance = cfg.solver.tolerance;
  const CongestionPenalty pen(2.0);
  const MfgSolution sol = solve_mfg_penalized(rho0, phi, pen, tg, opt);
  v.note(std::string(sol.converged ? "converged" : "NOT converged") + " in " + std::to_string(sol.iterations));
  const auto starts = detail::exploitability_starts(rho0, cfg.solver.exploitability_samples, cfg.seed);
  const ExploitabilityReport ex = exploitability_at(sol, starts);
  v.at_most("exploitability/payoff scale", ex.exploitability / ex.payoff_scale, 1e-2);

  const FictitiousPressure fp = fictitious_pressure(sol.rho, 2.0, &sol.phi);
  const ScalarTrajectory sup = hjb_backward({ScalarField(g), std::nullopt, pen.source(sol.rho), HjbOrientation::Sup}, tg);
  double flip = 0.0;
  for (std::size_t k = 0; k < tg.nodes(); ++k) flip = std::max(flip, sup_distance(fp.p_hat[k], -sup[k]));
  v.at_most("p_hat vs -sup(0, g(rho))", flip, 1e-12);
  const DpValue dp = dp_value(AgentFields{ScalarField(g), pen.source(sol.rho), std::nullopt}, tg);
  double worst = 0.0;
  for (std::size_t s = 0; s < 20; ++s) {
    const std::size_t k = (s * 7) % tg.steps(), c = (s * 37 + 5) % g.cells();
    worst = std::max(worst, std::abs(fp.p_hat[k][c] + dp.value[k][c]));
  }
  v.at_most("p_hat vs DP at 20 (t,x)", worst, 2.0 * g.h(0));
  return v;
}

Verdict criterion9() {
  Verdict v;
  Engine e(9090);
  std::size_t violations = 0;
  double flip = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool two = trial % 4 == 0;
    const Grid g = two ? Grid::rect({0.0, 1.0}, {0.0, 1.0}, 7, 9) : Grid::line(0.0, 2.0, pick(e, 5, 60));
    const TimeGrid tg(uniform(e, 0.1, 1.0), pick(e, 2, 20));
    const ScalarField lower = random_scalar(e, g, -2.0, 2.0);
    ScalarField upper = lower;
    for (std::size_t c = 0; c < g.cells(); ++c) upper[c] += uniform(e, 0.0, 1.0);
    FaceTrajectory b(tg, FaceField(g));
    ScalarTrajectory src(tg, ScalarField(g));
    for (std::size_t k = 0; k < tg.nodes(); ++k) {
      b[k] = random_faces(e, g, 2.0);
      src[k] = random_scalar(e, g);
    }
    const HjbOrientation o = trial % 2 ? HjbOrientation::Inf : HjbOrientation::Sup;
    const ScalarTrajectory lo = hjb_backward({lower, b, src, o}, tg), hi = hjb_backward({upper, b, src, o}, tg);
    for (std::size_t k = 0; k < tg.nodes(); ++k) {
      for (std::size_t c = 0; c < g.cells(); ++c) violations += lo[k][c] > hi[k][c] + 1e-13 ? 1 : 0;
    }
    const ScalarTrajectory inf = hjb_backward({lower, b, src, HjbOrientation::Inf}, tg);
    const ScalarTrajectory sup = hjb_backward({-lower, b, src, HjbOrientation::Sup}, tg);
    for (std::size_t k = 0; k < tg.nodes(); ++k) flip = std::max(flip, sup_distance(inf[k], -sup[k]));
  }
  v.at_most("comparison violations", static_cast<double>(violations), 0.0);
  v.at_most("inf(Phi,c) + sup(-Phi,c)", flip, 1e-12);

  auto hopf_lax_error = [](std::size_t n) {
    const Grid g = Grid::line(0.0, 2.0, n);
    const TimeGrid tg(0.5, n / 2);
    const ScalarField phi = cone_potential(g, 1.0);
    const ScalarTrajectory sol = hjb_backward({phi, std::nullopt, std::nullopt, HjbOrientation::Sup}, tg);
    double worst = 0.0;
    for (std::size_t k = 0; k < tg.nodes(); ++k) worst = std::max(worst, sup_distance(sol[k], hopf_lax(phi, tg.t(k), 0.5)));
    return worst;
  };
  const double e1 = hopf_lax_error(50), e2 = hopf_lax_error(100), e3 = hopf_lax_error(200);
  v.note("Hopf-Lax errors " + format_double(e1).substr(0, 7) + ", " + format_double(e2).substr(0, 7) + ", " +
         format_double(e3).substr(0, 7));
  v.at_least("refinement ratio", std::min(e1 / e2, e2 / e3), 1.5);
  return v;
}

Verdict criterion10() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "congest_acceptance";
  fs::remove_all(root);
  ScenarioConfig cfg = load("penalized_bump.json");
  cfg.grid.nx = 40;
  cfg.time.steps = 40;
  cfg.solver.iterations = 200;
  const std::vector<std::pair<Command, ScenarioConfig>> runs{
      {Command::MfgPenalized, cfg},
      {Command::VerifyExample, [] {
         ScenarioConfig c = nothing_moves_config();
         c.grid.nx = 60;
         c.time.steps = 60;
         return c;
       }()}};
  std::size_t files = 0, differing = 0;
  double worst = 0.0;
  for (const auto& [cmd, c] : runs) {
    const fs::path a = root / (command_name(cmd) + "_a"), b = root / (command_name(cmd) + "_b");
    const RunResult ra = run_scenario(cmd, c, a);
    run_scenario(cmd, c, b);
    for (const auto& entry : fs::recursive_directory_iterator(a / "fields")) {
      if (!entry.is_regular_file()) continue;
      ++files;
      differing += slurp(entry.path()) == slurp(b / "fields" / entry.path().filename()) ? 0 : 1;
    }
    // Every numeric residual in the report, nested blocks included.
    const json re = recompute_residuals(cmd, c, a);
    std::function<void(const json&, const json&)> compare = [&](const json& x, const json& y) {
      for (auto it = x.begin(); it != x.end(); ++it) {
        if (!y.contains(it.key())) {
          worst = std::max(worst, 1.0);
        } else if (it.value().is_object()) {
          compare(it.value(), y[it.key()]);
        } else if (it.value().is_number()) {
          worst = std::max(worst, std::abs(it.value().get<double>() - y[it.key()].get<double>()));
        }
      }
    };
    compare(ra.report["residuals"], re);
  }
  v.note(std::to_string(files) + " CSV files");
  v.at_most("differing CSV files", static_cast<double>(differing), 0.0);
  v.at_most("|report - recomputed|", worst, 1e-12);
  fs::remove_all(root);
  return v;
}

}  // namespace

int main() {
  const char* names[] = {"",
                         "nothing-moves reproduction",
                         "value-function construction",
                         "projection correctness",
                         "JKO / porous-media cross-validation",
                         "m -> infinity trend",
                         "variational solver",
                         "static reduction oracle",
                         "penalized MFG equilibrium quality",
                         "HJ scheme soundness",
                         "determinism and self-consistency"};
  NothingMovesRun fine;
  bool have_fine = false;
  auto fine_run = [&]() -> const NothingMovesRun& {
    if (!have_fine) fine = nothing_moves(200);
    have_fine = true;
    return fine;
  };
  const std::vector<std::function<Verdict()>> criteria{
      [&] { return criterion1(fine_run()); },
      [&] { return criterion2(fine_run()); },
      criterion3, criterion4, criterion5, criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v.pass = false;
      v.note(std::string("threw: ") + e.what());
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", i + 1, names[i + 1], v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
