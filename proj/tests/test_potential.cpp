#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eshape/potential.hpp"
#include "fixtures.hpp"

using namespace eshape;
using expr::parse;

namespace {

constexpr const char* kCoupled = "q1^2 + q1*q2 + 2*q2^2 + q2*q3 + q3^2";

double coupled_h(const Vec& q) {
  return q[0] * q[0] + q[0] * q[1] + 2 * q[1] * q[1] + q[1] * q[2] + q[2] * q[2];
}

KineticSolution identity_kinetic(const ModelSpec& spec, double c = 1.0) {
  return load_kinetic(spec, "[kinetic]\nK11 = " + std::to_string(c) + "\nK12 = 0\nK22 = " + std::to_string(c) + "\n");
}

/// Composite Simpson, independent of the library quadrature.
template <class F>
double simpson(F f, double a, double b, int panels = 2000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace

TEST(UFields, PendulumClosedForm) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const fixtures::Pendulum p;
  const KineticSolution k = solve_kinetic_1dou(spec, parse("1"));
  for (const Vec& q : fixtures::pendulum_points(50, 1)) {
    const double expect = p.u(q[0], q[1]);
    EXPECT_NEAR(u_fields(spec, k, q)[0], expect, 1e-8 * std::fabs(expect));
  }
  EXPECT_EQ(u_fields(spec, k, Vec{0, 0})[0], 0.0);
}

TEST(UFields, FlatQuadraticAtCriticalPoint) {
  const ModelSpec spec = fixtures::flat3("2*q1^2 + 3*q2^2 + 5*q3^2");
  const Vec u = u_fields(spec, identity_kinetic(spec), Vec{0, 0, 0});
  EXPECT_EQ(u, (Vec{0, 0}));
}

TEST(Integrability, OneDegreeIsVacuous) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const KineticSolution k = solve_kinetic_1dou(spec, parse("1"));
  EXPECT_LT(integrability_residual(spec, k, box_grid({0, 0}, 0.1, 9)), 1e-8);
}

TEST(Integrability, GradientFieldIsClosed) {
  const ModelSpec spec = fixtures::flat3(kCoupled);
  EXPECT_LT(integrability_residual(spec, identity_kinetic(spec), box_grid({0, 0, 0}, 0.1, 5)), 1e-8);
}

TEST(Integrability, RotationFieldRejected) {
  auto rotation = [](std::span<const double> q) { return Vec{-q[1], q[0]}; };
  EXPECT_NEAR(integrability_residual(rotation, 2, box_grid({0, 0, 0}, 0.1, 3)), 2.0, 1e-3);

  const ModelSpec spec = fixtures::flat3("q1*q2");
  const KineticSolution k = load_kinetic(spec, "[kinetic]\nK11 = 1\nK12 = 0\nK22 = 3\n");
  EXPECT_NEAR(integrability_residual(spec, k, box_grid({0, 0, 0}, 0.1, 3)), 2.0, 1e-3);
  EXPECT_THROW(build_hhat(spec, k, 1.0), Error);
}

TEST(BoxGrid, LexicographicOrder) {
  const auto g = box_grid({0, 0}, 0.2, 3);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g[0], (Vec{-0.2, -0.2}));
  EXPECT_EQ(g[1], (Vec{-0.2, 0.0}));
  EXPECT_EQ(g[3], (Vec{0.0, -0.2}));
  EXPECT_EQ(g[8], (Vec{0.2, 0.2}));
  EXPECT_THROW(box_grid({0}, 0.1, 0), Error);
}

TEST(ShapedPotential, BoundaryData) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const ShapedPotential hhat = build_hhat(spec, solve_kinetic_1dou(spec, parse("1")), 2.5);
  EXPECT_EQ(hhat(Vec{0, 0}), 0.0);
  for (double y = -0.4; y <= 0.4; y += 0.05) EXPECT_NEAR(hhat(Vec{0, y}), 1.25 * y * y, 1e-12);
  for (double g : fd_grad(hhat, Vec{0, 0})) EXPECT_NEAR(g, 0, 1e-6);
}

TEST(ShapedPotential, PendulumClosedForm) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const fixtures::Pendulum p;
  const ShapedPotential hhat = build_hhat(spec, solve_kinetic_1dou(spec, parse("1")), 2.0);
  for (const Vec& q : fixtures::pendulum_points(10, 2)) {
    const double expect = simpson([&](double t) { return p.u(t, q[1]); }, 0, q[0]) + q[1] * q[1];
    EXPECT_NEAR(hhat(q), expect, 1e-9);
  }
}

TEST(ShapedPotential, SolvesPotentialEquation) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const KineticSolution k = solve_kinetic_1dou(spec, parse("1"));
  const ShapedPotential hhat = build_hhat(spec, k, 2.0);
  for (const Vec& q : fixtures::pendulum_points(50, 3)) {
    const Vec g = fd_grad(hhat, q);
    EXPECT_LE(std::fabs(g[0] - u_fields(spec, k, q)[0]), 1e-6);
  }
}

TEST(ShapedPotential, TwoUnactuatedDirections) {
  const ModelSpec spec = fixtures::flat3(kCoupled);
  const ShapedPotential hhat = build_hhat(spec, identity_kinetic(spec), 3.0);
  for (const Vec& q : random_points({0, 0, 0}, 0.3, 20, 4)) {
    const double expect = coupled_h(q) - coupled_h(Vec{0, 0, q[2]}) + 1.5 * q[2] * q[2];
    EXPECT_NEAR(hhat(q), expect, 1e-12);
  }
}

TEST(ShapedPotential, RequiresCenteredChart) {
  ExprMatrix h{{parse("1"), parse("0")}, {parse("0"), parse("1")}};
  const ModelSpec spec({"q1", "q2"}, {}, h, parse("(q1 - 1)^2 + q2^2"), {{parse("0"), parse("1")}}, {1, 0});
  const KineticSolution k = solve_kinetic_1dou(spec, parse("1"));
  EXPECT_THROW(build_hhat(spec, k, 1.0), Error);
  EXPECT_THROW(certificate(spec, k), Error);
}

TEST(Certificate, PendulumPasses) {
  const ModelSpec spec = fixtures::pendulum_spec();
  const PositivityCertificate c = certificate(spec, solve_kinetic_1dou(spec, parse("1")));
  EXPECT_NEAR(c.M(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(c.A(0, 0), 0.0, 1e-8);
  ASSERT_TRUE(c.varpi_min.has_value());
  EXPECT_NEAR(*c.varpi_min, 0.0, 1e-8);
  EXPECT_EQ(c.varpi, 2.0);
  EXPECT_TRUE(c.pass);
  EXPECT_EQ(c.verdict, "pass");
  for (double w : {1e-3, 0.5, 10.0}) EXPECT_TRUE(certificate(spec, solve_kinetic_1dou(spec, parse("1")), w).pass);
}

TEST(Certificate, PendulumFailsBelowThreshold) {
  const ModelSpec spec = fixtures::pendulum_spec({{"g", 1.0}});
  const PositivityCertificate c = certificate(spec, solve_kinetic_1dou(spec, parse("1")));
  // M = -D1 K(0,0) / (A - g B) = -1
  EXPECT_NEAR(c.M(0, 0), -1.0, 1e-6);
  EXPECT_FALSE(c.pass);
  EXPECT_EQ(c.verdict, "M not positive-definite");
  EXPECT_FALSE(c.varpi_min.has_value());
}

TEST(Certificate, UnstableUnactuatedDirectionFails) {
  ExprMatrix h{{parse("1"), parse("0")}, {parse("0"), parse("1")}};
  const ModelSpec spec({"q1", "q2"}, {}, h, parse("-q1^2 + q2^2"), {{parse("0"), parse("1")}}, {0, 0});
  const PositivityCertificate c = certificate(spec, solve_kinetic_1dou(spec, parse("1")));
  EXPECT_LE(c.M(0, 0), 0);
  EXPECT_FALSE(c.pass);
}

TEST(Certificate, CoupledModelBound) {
  const ModelSpec spec = fixtures::flat3(kCoupled);
  const KineticSolution k = identity_kinetic(spec);
  const PositivityCertificate c = certificate(spec, k);
  EXPECT_NEAR(c.M(0, 0), 2, 1e-8);
  EXPECT_NEAR(c.M(0, 1), 1, 1e-8);
  EXPECT_NEAR(c.M(1, 1), 4, 1e-8);
  EXPECT_NEAR(c.A(0, 0), 0, 1e-8);
  EXPECT_NEAR(c.A(1, 0), 1, 1e-8);
  const double lambda = 3 - std::numbers::sqrt2;
  EXPECT_NEAR(c.lambda_min, lambda, 1e-8);
  EXPECT_NEAR(c.norm_a_sq, 1, 1e-8);
  EXPECT_NEAR(*c.varpi_min, 1 / lambda, 1e-8);
  EXPECT_NEAR(c.varpi, 2.0, 1e-12);
  EXPECT_TRUE(c.pass);

  const PositivityCertificate low = certificate(spec, k, 0.5);
  EXPECT_FALSE(low.pass);
  EXPECT_EQ(low.verdict, "varpi not above the bound ||A||^2/lambda_min");
}

TEST(Certificate, HessianBlocksMatchFiniteDifferences) {
  for (const ModelSpec& spec : {fixtures::pendulum_spec(), fixtures::flat3(kCoupled)}) {
    const KineticSolution k =
        spec.dou() == 1 ? solve_kinetic_1dou(spec, parse("1")) : identity_kinetic(spec);
    const PositivityCertificate c = certificate(spec, k);
    const ShapedPotential hhat = build_hhat(spec, k, c.varpi);
    const Mat h = fd_hess(hhat, Vec(spec.n(), 0.0));
    for (std::size_t i = 0; i < spec.n(); ++i)
      for (std::size_t j = 0; j < spec.n(); ++j) EXPECT_NEAR(h(i, j), c.hess0(i, j), 1e-4);
    EXPECT_GT(min_eigen_sym(h), 0);
  }
}

TEST(Certificate, XiScaling) {
  const ModelSpec spec = fixtures::flat3(kCoupled);
  const PositivityCertificate base = certificate(spec, identity_kinetic(spec));
  for (double c : {0.5, 2.0, 10.0}) {
    const PositivityCertificate s = certificate(spec, identity_kinetic(spec).scaled(c));
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(s.M(i, j), c * base.M(i, j), 1e-6 * c * (1 + std::fabs(base.M(i, j))));
      EXPECT_NEAR(s.A(i, 0), c * base.A(i, 0), 1e-6 * c * (1 + std::fabs(base.A(i, 0))));
    }
    EXPECT_NEAR(s.norm_a_sq, c * c * base.norm_a_sq, 1e-6 * c * c);
    EXPECT_NEAR(*s.varpi_min, c * *base.varpi_min, 1e-6 * c);
    EXPECT_EQ(s.pass, base.pass);
  }
}
