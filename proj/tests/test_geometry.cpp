#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bsb/geometry.hpp"
#include "random_systems.hpp"

using namespace bsb;

namespace {

VectorField field(std::vector<std::string> comps, int n, int m) { return VectorField::parse(comps, n, m); }

AffineSystem dubins(bool drift = false) {
  const int m = drift ? 2 : 0;
  return AffineSystem(field({drift ? "cos(x3) + r1" : "cos(x3)", drift ? "sin(x3) + r2" : "sin(x3)", "0"}, 3, m),
                      field({"0", "0", "1"}, 3, m));
}

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

CotangentPoint point(Vec p, Vec q) { return CotangentPoint{std::move(p), std::move(q)}; }

void expect_field_equals(const VectorField& f, const std::vector<std::string>& expected, int n, int m) {
  const VectorField g = field(expected, n, m);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    Vec q(n), r(m);
    for (int i = 0; i < n; ++i) q[i] = u(rng);
    for (int i = 0; i < m; ++i) r[i] = u(rng);
    const Vec a = f.value(q, r);
    const Vec b = g.value(q, r);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-14) << "component " << i;
  }
}

}  // namespace

TEST(LieBracket, DubinsFirstBracket) {
  expect_field_equals(dubins().f01(), {"sin(x3)", "-cos(x3)", "0"}, 3, 0);
}

TEST(LieBracket, DubinsSecondOrderBrackets) {
  expect_field_equals(dubins().f101(), {"cos(x3)", "sin(x3)", "0"}, 3, 0);
  expect_field_equals(dubins().f001(), {"0", "0", "0"}, 3, 0);
}

TEST(LieBracket, DriftLeavesBracketsUnchanged) {
  expect_field_equals(dubins(true).f01(), {"sin(x3)", "-cos(x3)", "0"}, 3, 2);
  expect_field_equals(dubins(true).f001(), {"0", "0", "0"}, 3, 2);
}

TEST(LieBracket, LinearSystemGivesMinusAb) {
  // f0 = A q, f1 = b: [f0, f1] = -A b.
  const VectorField f0 = field({"2*x1 - x2", "x1 + 3*x3", "-x2 + 0.5*x3"}, 3, 0);
  const VectorField f1 = field({"1", "-2", "4"}, 3, 0);
  Mat a(3, 3);
  a << 2, -1, 0, 1, 0, 3, 0, -1, 0.5;
  const Vec expected = -a * v3(1, -2, 4);
  const Vec got = lie_bracket(f0, f1).value(v3(0.3, -0.1, 2.0), Vec());
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(got[i], expected[i]);
}

TEST(LieBracket, SelfBracketVanishes) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 10; ++k) {
    const auto def = fixtures::random_dubins_like(rng);
    const VectorField f = field(def.f0, 3, 2);
    const Vec val = lie_bracket(f, f).value(v3(0.2, 0.4, -0.3), Vec::Constant(2, 0.1));
    EXPECT_EQ(val.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(LieBracket, Antisymmetry) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 10; ++k) {
    const auto def = fixtures::random_dubins_like(rng);
    const VectorField f = field(def.f0, 3, 2);
    const VectorField g = field(def.f1, 3, 2);
    const Vec q = v3(0.7, -0.2, 1.3);
    const Vec r = Vec::Constant(2, -0.05);
    EXPECT_LE((lie_bracket(f, g).value(q, r) + lie_bracket(g, f).value(q, r)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(LieBracket, DimensionMismatchThrows) {
  EXPECT_THROW(lie_bracket(field({"x1"}, 1, 0), field({"x1", "x2"}, 2, 0)), DimensionError);
}

TEST(Poisson, DubinsExample) {
  const AffineSystem sys = dubins();
  const auto l = point(v3(1, 0, -1), v3(0, 0, std::numbers::pi / 2));
  const LiftedHamiltonian f0(sys.f0()), f1(sys.f1());
  EXPECT_NEAR(poisson(f0, f1, l, Vec()), 1.0, 1e-15);
  EXPECT_EQ(poisson(f0, f0, l, Vec()), 0.0);
}

TEST(Poisson, MatchesLiftedBracketOnRandomSystems) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 50; ++k) {
    const auto def = fixtures::random_dubins_like(rng);
    const AffineSystem sys(field(def.f0, 3, 2), field(def.f1, 3, 2));
    const auto l = point(v3(u(rng), u(rng), u(rng)), v3(u(rng), u(rng), u(rng)));
    const Vec r = v3(u(rng), u(rng), 0).head(2);
    const LiftedHamiltonian f0(sys.f0()), f1(sys.f1()), f01(sys.f01());
    EXPECT_NEAR(poisson(f0, f1, l, r), lifted_value(sys.f01(), l, r), 1e-10);
    EXPECT_NEAR(poisson(f0, f01, l, r), lifted_value(sys.f001(), l, r), 1e-10);
    EXPECT_NEAR(poisson(f1, f01, l, r), lifted_value(sys.f101(), l, r), 1e-10);
    EXPECT_NEAR(poisson(f1, f0, l, r), -poisson(f0, f1, l, r), 1e-14);
  }
}

TEST(SingularControl, DubinsIsZero) {
  const AffineSystem sys = dubins();
  EXPECT_EQ(singular_control(point(v3(1, 0, 0), v3(5, 1, 0)), sys, Vec()), 0.0);
  const AffineSystem drift = dubins(true);
  const Vec r = v3(0.03, -0.01, 0).head(2);
  EXPECT_EQ(singular_control(point(v3(0.9, 0.1, 0.2), v3(1, 2, 0.3)), drift, r), 0.0);
}

TEST(SingularControl, ThrowsWithoutSglc) {
  const AffineSystem sys = dubins();
  // F101 = p1 cos x3 + p2 sin x3 = 0 here.
  EXPECT_THROW(singular_control(point(v3(0, 1, 0), v3(0, 0, 0)), sys, Vec()), SGLCViolated);
  EXPECT_THROW(singular_control(point(v3(-1, 0, 0), v3(0, 0, 0)), sys, Vec()), SGLCViolated);
}

TEST(SingularControl, NonzeroFeedbackOnCoupledSystem) {
  // The x2^2 coupling makes f001 nonzero.
  const AffineSystem sys(field({"cos(x3) + 0.5*x2^2", "sin(x3)", "0"}, 3, 0), field({"0", "0", "1"}, 3, 0));
  const auto l = point(v3(1, 0.2, 0), v3(0.1, 0.7, 0.3));
  const double f001 = lifted_value(sys.f001(), l, Vec());
  const double f101 = lifted_value(sys.f101(), l, Vec());
  ASSERT_GT(f101, 0.0);
  EXPECT_DOUBLE_EQ(singular_control(l, sys, Vec()), -f001 / f101);
}

TEST(SingularLocus, Examples) {
  const AffineSystem sys = dubins();
  EXPECT_TRUE(on_S(point(v3(1, 0, 0), v3(5, 1, 0)), sys, Vec(), 1e-12));
  EXPECT_FALSE(on_sigma(point(v3(1, 0, 1), v3(5, 1, 0)), sys, Vec(), 1e-12));
  const auto l = point(v3(0, 1, 0), v3(0, 0, 0));
  EXPECT_TRUE(on_sigma(l, sys, Vec(), 1e-12));
  EXPECT_FALSE(on_S(l, sys, Vec(), 1e-12));
}

TEST(SingularLocus, ConstructedPointsLieOnS) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  int built = 0;
  for (int k = 0; k < 20; ++k) {
    const auto ms = fixtures::random_metric_system(rng);
    const ParametricProblem prob = compile(ms.def);
    const Vec r = Vec::Constant(1, 0.1);
    const auto l = fixtures::point_on_singular_locus(prob.sys, v3(u(rng), u(rng), 3 * u(rng)), r);
    if (!l) continue;
    ++built;
    EXPECT_TRUE(on_S(*l, prob.sys, r, 1e-12));
    EXPECT_NEAR(lifted_value(prob.sys.f0(), *l, r), 1.0, 1e-12);
  }
  EXPECT_GT(built, 15);
}

TEST(VectorFieldJet, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 10; ++k) {
    const auto def = fixtures::random_dubins_like(rng);
    const VectorField f = field(def.f0, 3, 2);
    const Vec q = v3(0.4, -0.3, 0.8);
    const Vec r = v3(0.02, -0.04, 0).head(2);
    const FieldJet j = f.jet(q, r, JetOrder::second);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6;
      Vec qp = q, qm = q;
      qp[c] += h;
      qm[c] -= h;
      const Vec fd = (f.value(qp, r) - f.value(qm, r)) / (2 * h);
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(j.jacobian(i, c), fd[i], 1e-8);
    }
    for (int c = 0; c < 2; ++c) {
      const double h = 1e-6;
      Vec rp = r, rm = r;
      rp[c] += h;
      rm[c] -= h;
      const Vec fd = (f.value(q, rp) - f.value(q, rm)) / (2 * h);
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(j.dr(i, c), fd[i], 1e-8);
    }
  }
}
