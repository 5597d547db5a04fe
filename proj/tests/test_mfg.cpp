#include <gtest/gtest.h>

#include <cmath>

#include "congest/mfg.hpp"
#include "congest/scenarios.hpp"
#include "support.hpp"

namespace congest {
namespace {

DensityField small_bump(const Grid& g, double center, double width) {
  return DensityField::sample_normalized(g, [&](double x) {
    const double u = (x - center) / width;
    return std::abs(u) < 1.0 ? std::pow(std::cos(M_PI * u / 2.0), 2) : 0.0;
  });
}

// hjb + transport with no coupling at all.
DensityTrajectory uncoupled_flow(const DensityField& rho0, const ScalarField& terminal, const TimeGrid& tg) {
  const ScalarTrajectory phi = hjb_backward(HjbProblem{terminal, std::nullopt, std::nullopt, {}}, tg);
  return solve_continuity(rho0, optimal_feedback(phi), tg);
}

double max_l1(const DensityTrajectory& a, const DensityTrajectory& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, l1_distance(a[k], b[k]));
  return m;
}

TEST(CongestionPenalty, DerivativeAndDomain) {
  const CongestionPenalty pen(4.0);
  EXPECT_DOUBLE_EQ(pen.g(0.5), 0.125);
  EXPECT_DOUBLE_EQ(pen.G(0.5), 0.015625);
  EXPECT_THROW(CongestionPenalty(1.5), Error);
}

TEST(MfgPenalized, ConstantTerminalAndUniformDensityIsStationary) {
  const Grid g = Grid::line(0.0, 2.0, 40);
  const TimeGrid tg(1.0, 20);
  const DensityField rho0 = DensityField::uniform(g);
  const MfgSolution sol = solve_mfg_penalized(rho0, ScalarField(g, 3.0), CongestionPenalty(2.0), tg);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.iterations, 1u);
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    EXPECT_LE(sol.phi[k].max() - sol.phi[k].min(), 1e-12);
    EXPECT_EQ(sol.alpha[k].max_abs(), 0.0);
    EXPECT_LE(l1_distance(sol.rho[k], rho0), 1e-12);
  }
  const ResidualReport& r = sol.report;
  for (double v : {r.hjb, r.continuity, r.weak_continuity, r.complementarity, r.orthogonality, r.effort_consistency,
                   r.velocity_consistency, r.increment, r.mass_drift})
    EXPECT_LE(v, 1e-10);
}

TEST(MfgPenalized, DiluteCrowdBehavesLikeUncoupledControl) {
  const Grid g = Grid::line(0.0, 4.0, 80);
  const TimeGrid tg(1.0, 40);
  const DensityField rho0 = small_bump(g, 1.5, 1.5);
  ASSERT_LT(rho0.max(), 0.7);
  // A gentle drift that translates the crowd without compressing it.
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return 0.3 * x; });
  MfgOptions opt;
  opt.iterations = 50;
  const MfgSolution sol = solve_mfg_penalized(rho0, terminal, CongestionPenalty(16.0), tg, opt);
  for (std::size_t k = 0; k < tg.nodes(); ++k) ASSERT_LT(sol.rho[k].max(), 0.75);
  EXPECT_LE(max_l1(sol.rho, uncoupled_flow(rho0, terminal, tg)), 0.05);
}

TEST(MfgPenalized, StructuralInvariantsAndExploitability) {
  const Grid g = Grid::line(0.0, 2.0, 50);
  const TimeGrid tg(1.0, 50);
  const DensityField rho0 = small_bump(g, 0.7, 0.5);
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return -(x - 1.4) * (x - 1.4); });
  MfgOptions opt;
  opt.iterations = 300;
  opt.tolerance = 5e-3;
  const MfgSolution sol = solve_mfg_penalized(rho0, terminal, CongestionPenalty(2.0), tg, opt);
  EXPECT_LE(sol.report.continuity, 1e-12);
  EXPECT_LE(sol.report.velocity_consistency, 1e-12);
  EXPECT_LE(sol.report.effort_consistency, 1e-12);
  EXPECT_LE(sol.report.mass_drift, 1e-12);
  // History of a fictitious play run decays.
  EXPECT_LT(sol.history.back(), sol.history.front());
  const ExploitabilityReport ex = exploitability(sol, 10);
  EXPECT_GE(ex.exploitability, 0.0);
  for (std::size_t i = 0; i < ex.starts.size(); ++i) EXPECT_GE(ex.best[i], ex.realized[i]);
  EXPECT_LE(ex.exploitability, 2e-2 * ex.payoff_scale);
}

TEST(MfgConstrained, ConstantTerminalNeedsNoPressure) {
  const Grid g = Grid::line(0.0, 2.0, 40);
  const TimeGrid tg(1.0, 20);
  const DensityField rho0 = DensityField::uniform(g);
  const MfgSolution sol = solve_mfg_constrained(rho0, ScalarField(g, -1.0), tg);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.iterations, 1u);
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    EXPECT_EQ(sol.alpha[k].max_abs(), 0.0);
    EXPECT_EQ(sol.p[k].max_abs(), 0.0);
    EXPECT_EQ(sol.rho[k], rho0);
  }
}

TEST(MfgConstrained, UnsaturatedRunEqualsUncoupledControl) {
  const Grid g = Grid::line(0.0, 4.0, 80);
  const TimeGrid tg(1.0, 40);
  const DensityField rho0 = small_bump(g, 1.5, 1.5);
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return 0.2 * x; });
  const MfgSolution sol = solve_mfg_constrained(rho0, terminal, tg);
  const DensityTrajectory ref = uncoupled_flow(rho0, terminal, tg);
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    ASSERT_LT(sol.rho[k].max(), 1.0 - 1e-6);
    EXPECT_EQ(sol.p[k].max_abs(), 0.0);
  }
  EXPECT_LE(max_l1(sol.rho, ref), 1e-8);
  EXPECT_TRUE(sol.converged);
}

TEST(MfgConstrained, RejectsDensityAboveOne) {
  const Grid g = Grid::line(0.0, 2.0, 20);
  const DensityField peak = DensityField::sample_normalized(g, [](double x) { return x < 0.3 ? 1.0 : 0.0; });
  EXPECT_THROW(solve_mfg_constrained(peak, ScalarField(g), TimeGrid(1.0, 10)), Error);
}

TEST(MfgConstrained, CoarseNothingMovesEquilibrium) {
  const Grid g = Grid::line(0.0, 2.0, 60);
  const TimeGrid tg(1.0, 60);
  const NothingMovesScenario s = build_nothing_moves(cone_potential(g, 1.0));
  const MfgSolution sol = solve_mfg_constrained(s.rho0, s.potential, tg);
  const NothingMovesReport rep = verify_nothing_moves(s, sol);
  EXPECT_LE(rep.stationarity, 0.1);
  EXPECT_GE(rep.pressure_min, -1e-8);
  EXPECT_LE(rep.pressure_outside + rep.complementarity, 1e-6);
  EXPECT_LE(rep.mass_drift, 1e-10);
  EXPECT_LE(sol.report.velocity_consistency, 1e-12);
  EXPECT_LE(sol.report.continuity, 1e-12);
  EXPECT_LE(sol.report.orthogonality, 1e-6);
  // Agents want to move although nobody does.
  EXPECT_GT(sol.alpha[0].max_abs(), 0.1);

  // Following the equilibrium effort earns the value function (phi at the
  // start). Against a frozen pressure field a deviating agent can still do
  // better by parking on the ridge of p at the centre of A, where the drift
  // vanishes, so only the sign of the gap is asserted here.
  std::vector<double> starts;
  for (std::size_t c = 0; c < g.cells(); c += 5) {
    if (s.in_A[c]) starts.push_back(g.center(c)[0]);
  }
  const ExploitabilityReport ex = exploitability_at(sol, starts);
  EXPECT_GE(ex.exploitability, 0.0);
  for (std::size_t i = 0; i < ex.starts.size(); ++i) {
    if (std::abs(ex.starts[i] - 1.0) < 2.0 * g.h(0)) continue;  // on the ridge itself
    const auto c = static_cast<std::size_t>(ex.starts[i] / g.h(0));
    EXPECT_NEAR(ex.realized[i], sol.phi[0][c], 0.05);
  }
}

TEST(MfgResidual, CorruptedPressureIsDetected) {
  const Grid g = Grid::line(0.0, 2.0, 40);
  const TimeGrid tg(1.0, 20);
  const NothingMovesScenario s = build_nothing_moves(cone_potential(g, 1.0));
  MfgSolution sol = solve_mfg_constrained(s.rho0, s.potential, tg);
  const double clean = equilibrium_residual(sol).complementarity;
  // Direct integral of 0.1 (1 - rho) over A^c, trapezoid in time.
  double expected = 0.0;
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    double off = 0.0;
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (!s.in_A[c]) {
        sol.p[k][c] += 0.1;
        off += std::abs(1.0 - sol.rho[k][c]) * g.cell_volume();
      }
    }
    expected += (k == 0 || k == tg.steps() ? 0.5 : 1.0) * tg.dt() * 0.1 * off;
  }
  const double corrupted = equilibrium_residual(sol).complementarity;
  EXPECT_NEAR(corrupted - clean, expected, 1e-12);
  EXPECT_GT(corrupted, 0.09);
}

TEST(FictitiousPressure, EmptyAndFullDensities) {
  const Grid g = Grid::line(0.0, 1.0, 20);
  const TimeGrid tg(1.0, 10);
  const DensityTrajectory empty(tg, DensityField(g, std::vector<double>(20, 0.0)));
  EXPECT_EQ(fictitious_pressure(empty, 3.0).p_hat[0].max_abs(), 0.0);
  const DensityTrajectory full(tg, DensityField::uniform(g));
  const FictitiousPressure fp = fictitious_pressure(full, 3.0);
  for (std::size_t k = 0; k < tg.nodes(); ++k) {
    EXPECT_NEAR(fp.p_hat[k].min(), 1.0 - tg.t(k), 1e-12);
    EXPECT_NEAR(fp.p_hat[k].max(), 1.0 - tg.t(k), 1e-12);
  }
}

TEST(FictitiousPressure, DecompositionAndDynamicProgramming) {
  const Grid g = Grid::line(0.0, 2.0, 60);
  const TimeGrid tg(1.0, 60);
  const DensityField rho0 = small_bump(g, 0.7, 0.5);
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return -(x - 1.4) * (x - 1.4); });
  MfgOptions opt;
  opt.iterations = 100;
  opt.tolerance = 1e-2;
  const MfgSolution sol = solve_mfg_penalized(rho0, terminal, CongestionPenalty(2.0), tg, opt);
  const FictitiousPressure fp = fictitious_pressure(sol.rho, 2.0, &sol.phi);
  EXPECT_LE(fp.decomposition_defect, 1e-9);
  for (std::size_t k = 0; k < tg.nodes(); ++k) EXPECT_GE(fp.p_hat[k].min(), 0.0);

  // p_hat is the cost of the cheapest path; the DP oracle maximizes minus it.
  const AgentFields af{ScalarField(g), CongestionPenalty(2.0).source(sol.rho), std::nullopt};
  const DpValue dp = dp_value(af, tg);
  double worst = 0.0;
  for (std::size_t s = 0; s < 20; ++s) {
    const std::size_t k = (s * 7) % tg.steps(), c = (s * 37 + 5) % g.cells();
    worst = std::max(worst, std::abs(fp.p_hat[k][c] + dp.value[k][c]));
  }
  EXPECT_LE(worst, 2.0 * g.h(0));
}

TEST(BestResponse, ConstantTerminalStaysPut) {
  const Grid g = Grid::line(0.0, 2.0, 40);
  const TimeGrid tg(1.0, 20);
  const AgentFields af{ScalarField(g, 1.25), std::nullopt, std::nullopt};
  const DpValue dp = dp_value(af, tg);
  const BestResponse br = trajectory_best_response(0.8, 0, af, dp);
  EXPECT_NEAR(br.payoff, 1.25, 1e-12);
  for (double y : br.path) EXPECT_NEAR(y, 0.8, 1e-12);
}

TEST(BestResponse, FreeAgentMatchesHopfLax) {
  const Grid g = Grid::line(0.0, 2.0, 100);
  const TimeGrid tg(1.0, 50);
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return std::sin(2.0 * x); });
  const AgentFields af{terminal, std::nullopt, std::nullopt};
  const DpValue dp = dp_value(af, tg);
  const ScalarField hl = hopf_lax(terminal, 0.0, 1.0);
  for (std::size_t c = 10; c < 90; c += 10) {
    const double x0 = g.center(c)[0];
    const BestResponse br = trajectory_best_response(x0, 0, af, dp);
    EXPECT_NEAR(br.payoff, hl[c], 2.0 * (g.h(0) + dp.d_alpha)) << "x0 " << x0;
    EXPECT_FALSE(br.bound_active);
  }
}

TEST(UniquenessMonitor, IdenticalAndShiftedSolutions) {
  const Grid g = Grid::line(0.0, 2.0, 30);
  const TimeGrid tg(1.0, 10);
  const DensityField rho0 = DensityField::uniform(g);
  const MfgSolution a = solve_mfg_constrained(rho0, ScalarField(g, 0.0), tg);
  const MfgSolution b = solve_mfg_constrained(rho0, ScalarField(g, 5.0), tg);
  for (const auto& series : {uniqueness_monitor(a, a), uniqueness_monitor(a, b)}) {
    ASSERT_EQ(series.I.size(), tg.nodes());
    for (double v : series.I) EXPECT_EQ(v, 0.0);
    for (double v : series.dIdt) EXPECT_EQ(v, 0.0);
  }
}

TEST(UniquenessMonitor, PerturbedPenalizedRunsGiveFiniteSeries) {
  const Grid g = Grid::line(0.0, 2.0, 30);
  const TimeGrid tg(1.0, 15);
  const ScalarField terminal = ScalarField::sample(g, [](double x) { return -(x - 1.2) * (x - 1.2); });
  MfgOptions opt;
  opt.iterations = 20;
  const MfgSolution a = solve_mfg_penalized(small_bump(g, 0.7, 0.5), terminal, CongestionPenalty(2.0), tg, opt);
  const MfgSolution b = solve_mfg_penalized(small_bump(g, 0.8, 0.5), terminal, CongestionPenalty(2.0), tg, opt);
  const UniquenessSeries s = uniqueness_monitor(a, b);
  for (double v : s.I) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(s.dIdt.size(), tg.steps());
}

}  // namespace
}  // namespace congest
