#include <gtest/gtest.h>

#include <cmath>

#include "congest/grid.hpp"
#include "support.hpp"

namespace congest {
namespace {

TEST(Grid, LineHasExpectedCentersAndSpacing) {
  const Grid g = Grid::line(0.0, 2.0, 4);
  EXPECT_DOUBLE_EQ(g.h(0), 0.5);
  const double expected[] = {0.25, 0.75, 1.25, 1.75};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(g.center(c)[0], expected[c]);
  EXPECT_EQ(g.faces(0), 5u);
  EXPECT_TRUE(g.is_boundary_face(0, 0));
  EXPECT_TRUE(g.is_boundary_face(0, 4));
  EXPECT_FALSE(g.is_boundary_face(0, 2));
}

TEST(Grid, SquareCellVolume) {
  const Grid g = Grid::rect({0.0, 1.0}, {0.0, 1.0}, 2, 2);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 0.25);
  EXPECT_EQ(g.cells(), 4u);
  EXPECT_EQ(g.faces(0), 6u);
  EXPECT_EQ(g.faces(1), 6u);
}

TEST(Grid, RejectsInvertedOrDegenerateAxes) {
  EXPECT_THROW(Grid::line(0.0, -1.0, 4), Error);
  EXPECT_THROW(Grid::line(0.0, 1.0, 1), Error);
  EXPECT_THROW(Grid::line(0.0, std::nan(""), 4), Error);
}

TEST(TimeGrid, NodesAndRejection) {
  const TimeGrid tg(1.0, 4);
  EXPECT_EQ(tg.nodes(), 5u);
  EXPECT_DOUBLE_EQ(tg.dt(), 0.25);
  EXPECT_EQ(tg.t(4), 1.0);
  EXPECT_THROW(TimeGrid(0.0, 4), Error);
  EXPECT_THROW(TimeGrid(1.0, 0), Error);
}

TEST(Gradient, ConstantIsZero) {
  const Grid g = Grid::rect({0.0, 1.0}, {0.0, 2.0}, 5, 7);
  EXPECT_EQ(gradient(ScalarField(g, 3.7)).max_abs(), 0.0);
  EXPECT_EQ(divergence(FaceField(g)).max_abs(), 0.0);
}

TEST(Gradient, LinearIsExactOnInteriorFaces) {
  const Grid g = Grid::line(0.0, 1.0, 4);
  const FaceField d = gradient(ScalarField::sample(g, [](double x) { return x; }));
  const auto c = d.axis(0);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[4], 0.0);
  for (std::size_t f = 1; f < 4; ++f) EXPECT_NEAR(c[f], 1.0, 1e-14);
}

TEST(Gradient, QuadraticIsSecondOrderAtFaces) {
  // At a face, (f(x+h/2) - f(x-h/2))/h is exact for x^2, so use x^3 whose
  // error is h^2/4: it must drop by 4 per halving.
  auto error = [](std::size_t n) {
    const Grid g = Grid::line(0.0, 1.0, n);
    const FaceField d = gradient(ScalarField::sample(g, [](double x) { return x * x * x; }));
    double worst = 0.0;
    for (std::size_t f = 1; f < n; ++f) {
      const double x = g.axis(0).face(f);
      worst = std::max(worst, std::abs(d.axis(0)[f] - 3.0 * x * x));
    }
    return worst;
  };
  const double e1 = error(32), e2 = error(64);
  EXPECT_NEAR(e1 / e2, 4.0, 1e-6);
}

TEST(Divergence, SmallExample) {
  const Grid g = Grid::line(0.0, 2.0, 4);
  FaceField v(g);
  v.axis(0)[1] = 0.0;
  v.axis(0)[2] = 1.0;
  v.axis(0)[3] = 0.0;
  const ScalarField d = divergence(v);
  const double expected[] = {0.0, 2.0, -2.0, 0.0};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(d[c], expected[c]);
}

TEST(Calculus, GradientIsMinusAdjointOfDivergence) {
  testing::Engine e(11);
  for (int trial = 0; trial < 50; ++trial) {
    const bool two = trial % 2 == 1;
    const Grid g = two ? Grid::rect({0.0, testing::uniform(e, 0.5, 3.0)}, {-1.0, 1.0}, testing::pick(e, 2, 12),
                                    testing::pick(e, 2, 12))
                       : Grid::line(-1.0, testing::uniform(e, 0.0, 3.0), testing::pick(e, 2, 40));
    const ScalarField f = testing::random_scalar(e, g);
    const FaceField v = testing::random_faces(e, g);
    const double lhs = inner(gradient(f), v);
    const double rhs = -inner(f, divergence(v));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << "trial " << trial;
  }
}

TEST(Integrate, NormalizationAndMoments) {
  const Grid g = Grid::line(0.0, 2.0, 200);
  testing::Engine e(3);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_NEAR(integrate(ScalarField(g, 1.0), testing::random_density(e, g)), 1.0, 1e-12);
  }
  const ScalarField x = ScalarField::sample(g, [](double s) { return s; });
  EXPECT_NEAR(integrate(x, DensityField::uniform(g)), 1.0, 1e-12);

  // Midpoint rule for x^2 on [0, 1]: error h^2/12 exactly.
  const ScalarField x2 = ScalarField::sample(g, [](double s) { return s * s; });
  const DensityField box = DensityField::sample_normalized(g, [](double s) { return s < 1.0 ? 1.0 : 0.0; });
  const double h = g.h(0);
  EXPECT_NEAR(integrate(x2, box), 1.0 / 3.0 - h * h / 12.0, 1e-12);
}

TEST(DensityField, RejectsNegativeAndClampsRoundOff) {
  const Grid g = Grid::line(0.0, 1.0, 2);
  EXPECT_THROW(DensityField(g, {1.0, -0.1}), Error);
  EXPECT_THROW(DensityField(g, {1.0, std::nan("")}), Error);
  const DensityField d(g, {2.0, -1e-16});
  EXPECT_EQ(d[1], 0.0);
  EXPECT_THROW(DensityField::normalized(g, {0.0, 0.0}), Error);
}

TEST(FaceField, SampleLeavesWallsAtZero) {
  const Grid g = Grid::rect({0.0, 1.0}, {0.0, 1.0}, 3, 4);
  const FaceField v = FaceField::sample(g, [](int, double, double) { return 1.0; });
  EXPECT_TRUE(v.boundary_is_zero());
  EXPECT_EQ(v.max_abs(), 1.0);
}

}  // namespace
}  // namespace congest
