#include <gtest/gtest.h>

#include <cmath>
#include <optional>

#include "congest/projection.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace congest {
namespace {

DensityField with_saturated(const Grid& g, const std::vector<char>& sat) {
  std::vector<double> v(g.cells());
  for (std::size_t c = 0; c < g.cells(); ++c) v[c] = sat[c] ? 1.0 : 0.3;
  return DensityField(g, std::move(v));
}

TEST(Projection, DiluteDensityIsLeftAlone) {
  testing::Engine e(1);
  const Grid g = Grid::rect({0.0, 2.0}, {0.0, 2.0}, 6, 6);
  std::vector<double> v(g.cells());
  for (double& x : v) x = testing::uniform(e, 0.0, 0.5);
  const FaceField u = testing::random_faces(e, g);
  const ProjectionResult r = project_velocity(DensityField(g, v), u);
  EXPECT_EQ(r.v, u);
  EXPECT_EQ(r.p.max_abs(), 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(Projection, CompressiveFieldOnFullDomainIsStopped) {
  const Grid g = Grid::line(0.0, 1.0, 40);
  const DensityField rho(g, std::vector<double>(40, 1.0));
  const FaceField u = FaceField::sample(g, [](int, double x, double) { return 0.5 - x; });
  const ProjectionResult r = project_velocity(rho, u);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.v.max_abs(), 1e-7);
  // p = x/2 - x^2/2 up to the additive constant fixed by min p = 0.
  const ScalarField exact = ScalarField::sample(g, [](double x) { return x / 2.0 - x * x / 2.0; });
  EXPECT_NEAR(r.p.min(), 0.0, 1e-15);
  for (std::size_t c = 0; c < g.cells(); ++c) EXPECT_NEAR(r.p[c] - r.p[0], exact[c] - exact[0], 1e-7);
}

TEST(ConeViolation, ZeroAndExpandingFields) {
  const Grid g = Grid::line(0.0, 1.0, 10);
  const DensityField rho(g, std::vector<double>(10, 1.0));
  EXPECT_EQ(cone_violation(rho, FaceField(g)), 0.0);
  // Walls stop any flow, so the expanding field is tested on an interior block.
  std::vector<double> block(10, 0.2);
  for (std::size_t c = 2; c < 8; ++c) block[c] = 1.0;
  const FaceField expand = FaceField::sample(g, [](int, double x, double) { return x - 0.5; });
  EXPECT_EQ(cone_violation(DensityField(g, block), expand), 0.0);
  const FaceField squeeze = FaceField::sample(g, [](int, double x, double) { return 0.5 - x; });
  EXPECT_GT(cone_violation(rho, squeeze), 0.5);
}

// Idempotence, non-expansiveness, orthogonality and complementarity on random
// crowds in one and two dimensions.
TEST(Projection, ConeProjectionProperties) {
  testing::Engine e(77);
  for (int trial = 0; trial < 200; ++trial) {
    const bool two = trial % 2 == 0;
    const Grid g = two ? Grid::rect({0.0, 2.0}, {0.0, 2.0}, testing::pick(e, 4, 12), testing::pick(e, 4, 12))
                       : Grid::line(0.0, 2.0, testing::pick(e, 8, 80));
    const DensityField rho = testing::random_crowd(e, g);
    const FaceField u1 = testing::random_faces(e, g, 2.0), u2 = testing::random_faces(e, g, 2.0);
    const ProjectionResult r1 = project_velocity(rho, u1), r2 = project_velocity(rho, u2);
    ASSERT_TRUE(r1.converged && r2.converged) << "trial " << trial;

    const ProjectionResult again = project_velocity(rho, r1.v);
    EXPECT_LE(again.p.max_abs(), 1e-8) << "trial " << trial;
    EXPECT_LE((again.v - r1.v).max_abs(), 1e-8) << "trial " << trial;

    EXPECT_LE(norm(r1.v - r2.v), norm(u1 - u2) + 1e-8) << "trial " << trial;
    EXPECT_LE(norm(r1.v), norm(u1) + 1e-8);

    EXPECT_LE(std::abs(inner(r1.v, gradient(r1.p))), 1e-8 * std::max(1.0, norm(u1) * norm(r1.p))) << "trial " << trial;
    EXPECT_LE(r1.cone_violation, 1e-6);
    EXPECT_GE(r1.p.min(), -1e-12);
    double off = 0.0, total = 0.0;
    for (std::size_t c = 0; c < g.cells(); ++c) {
      off += r1.p[c] * (1.0 - rho[c]);
      total += r1.p[c];
      if (!rho.saturated(c)) EXPECT_LE(r1.p[c], 1e-12);
    }
    EXPECT_LE(off, 1e-8 * std::max(total, 1.0));
    EXPECT_LE(r1.complementarity, 1e-8 * std::max(1.0, r1.p.max_abs()));
  }
}

TEST(Projection, AgreesWithActiveSetEnumeration) {
  testing::Engine e(4242);
  for (int trial = 0; trial < 50; ++trial) {
    // Eight cells: 1D fully saturated, 1D partly saturated, 2D 4x2.
    const int kind = trial % 3;
    const Grid g = kind == 2 ? Grid::rect({0.0, 2.0}, {0.0, 1.0}, 4, 2) : Grid::line(0.0, 1.0, 8);
    std::vector<char> sat(8, 1);
    if (kind != 0) {
      for (auto& s : sat) s = testing::uniform(e, 0.0, 1.0) < 0.7 ? 1 : 0;
    }
    const DensityField rho = with_saturated(g, sat);
    std::vector<std::size_t> S;
    for (std::size_t c = 0; c < 8; ++c) {
      if (sat[c]) S.push_back(c);
    }
    const FaceField u = testing::random_faces(e, g, 3.0);
    const ProjectionResult r = project_velocity(rho, u);
    ASSERT_TRUE(r.converged);
    const std::vector<double> oracle = testing::brute_force_projection(g, S, testing::flatten(u));
    const std::vector<double> got = testing::flatten(r.v);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], oracle[k], 1e-6) << "trial " << trial;
  }
}

TEST(Projection, PlainSweepsAndActiveSetStartAgree) {
  testing::Engine e(5);
  const Grid g = Grid::rect({0.0, 2.0}, {0.0, 2.0}, 10, 10);
  const DensityField rho = testing::random_crowd(e, g);
  const FaceField u = testing::random_faces(e, g);
  ProjectionOptions plain;
  plain.active_set_start = false;
  const ProjectionResult a = project_velocity(rho, u), b = project_velocity(rho, u, plain);
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_LE((a.v - b.v).max_abs(), 1e-6);
}

TEST(Projection, RejectsBadOptions) {
  const Grid g = Grid::line(0.0, 1.0, 4);
  ProjectionOptions opt;
  opt.relaxation = 2.0;
  EXPECT_THROW(project_velocity(DensityField::uniform(g), FaceField(g), opt), Error);
}

// Dykstra's alternating projections onto the individual half-spaces, an
// independent route to the min-spacing projection.
std::vector<double> dykstra_min_spacing(const std::vector<double>& y, double gap, double lo, double hi) {
  const std::size_t n = y.size();
  // Constraints: x_0 >= lo, x_{n-1} <= hi, x_{j+1} - x_j >= gap.
  const std::size_t m = n + 1;
  std::vector<std::vector<double>> corr(m, std::vector<double>(n, 0.0));
  std::vector<double> x = y;
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double change = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<double> z = x;
      for (std::size_t i = 0; i < n; ++i) z[i] += corr[k][i];
      std::vector<double> p = z;
      if (k == 0) p[0] = std::max(p[0], lo);
      else if (k == 1) p[n - 1] = std::min(p[n - 1], hi);
      else {
        const std::size_t j = k - 2;
        const double d = p[j + 1] - p[j];
        if (d < gap) {
          p[j] -= 0.5 * (gap - d);
          p[j + 1] += 0.5 * (gap - d);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        corr[k][i] = z[i] - p[i];
        change = std::max(change, std::abs(p[i] - x[i]));
      }
      x = p;
    }
    if (change < 1e-14) break;
  }
  return x;
}

TEST(MinSpacing, MatchesDykstra) {
  testing::Engine e(31);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = testing::pick(e, 2, 32);
    std::vector<double> y(n);
    for (double& v : y) v = testing::uniform(e, 0.0, 2.0);
    std::sort(y.begin(), y.end());
    const double gap = 1.0 / static_cast<double>(n);
    const auto a = project_min_spacing(y, gap, 0.5 * gap, 2.0 - 0.5 * gap);
    const auto b = dykstra_min_spacing(y, gap, 0.5 * gap, 2.0 - 0.5 * gap);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(a[j], b[j], 1e-8) << "trial " << trial;
  }
}

TEST(WassersteinProjection, MembersOfKAreFixed) {
  const Grid g = Grid::line(0.0, 2.0, 40);
  testing::Engine e(2);
  const DensityField rho = testing::random_density(e, g);
  ASSERT_TRUE(rho.in_constraint_set());
  EXPECT_EQ(wasserstein_project_K_1d(rho), rho);
}

TEST(WassersteinProjection, DoubledHalfBoxSpreadsToUnitBox) {
  const Grid g = Grid::line(0.0, 2.0, 32);
  const DensityField rho = DensityField::sample_normalized(g, [](double x) { return x < 0.5 ? 2.0 : 0.0; });
  const DensityField box = DensityField::sample_normalized(g, [](double x) { return x < 1.0 ? 1.0 : 0.0; });
  const DensityField out = wasserstein_project_K_1d(rho, 32);
  EXPECT_LE(out.max(), 1.0 + 1e-12);
  EXPECT_NEAR(out.mass(), 1.0, 1e-12);
  EXPECT_LE(l1_distance(out, box), 1e-12);
}

TEST(WassersteinProjection, SymmetricBumpGetsSymmetricPlateau) {
  const Grid g = Grid::line(0.0, 2.0, 64);
  const DensityField rho = DensityField::sample_normalized(
      g, [](double x) { return std::abs(x - 1.0) < 0.4 ? std::pow(std::cos(M_PI * (x - 1.0) / 0.8), 2) : 0.0; });
  ASSERT_GT(rho.max(), 1.0);
  const DensityField out = wasserstein_project_K_1d(rho, 64);
  EXPECT_LE(out.max(), 1.0 + 1e-9);
  EXPECT_NEAR(out.mass(), 1.0, 1e-12);
  for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(out[c], out[63 - c], 1e-9);
  EXPECT_NEAR(out[31], 1.0, 1e-9);
  EXPECT_NEAR(out[32], 1.0, 1e-9);
}

TEST(WassersteinProjection, RejectsShortDomains) {
  const Grid g = Grid::line(0.0, 0.5, 10);
  EXPECT_THROW(wasserstein_project_K_1d(DensityField::uniform(g)), Error);
}

}  // namespace
}  // namespace congest
