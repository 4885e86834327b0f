#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bsb/bsb.hpp"
#include "random_systems.hpp"

using namespace bsb;

namespace {

ParametricProblem dubins() { return compile(*builtin_problem("dubins")); }
ExtremalStructure nominal() { return *builtin_problem("dubins")->z0; }

SingularArcData dubins_data(const Vec& r, const ExtremalStructure& z) {
  return build_singular_arc_data(assemble(dubins(), r, z));
}

/// Constant-curvature metric system with conjugate time pi / (2 alpha sqrt(beta)).
SingularArcData metric_arc(double alpha, double beta, double length) {
  fixtures::MetricSystem ms;
  ms.alpha = alpha;
  ms.beta = beta;
  const std::string speed = "(" + format_double(alpha) + ")*(1 + (" + format_double(beta) + ")*(x1^2 + x2^2))";
  ms.def.name = "metric";
  ms.def.n = 3;
  ms.def.m = 0;
  ms.def.f0 = {speed + "*cos(x3)", speed + "*sin(x3)", "0"};
  ms.def.f1 = {"0", "0", "1"};
  ms.def.a = ms.def.b = {"0", "0", "0"};
  const ParametricProblem prob = compile(ms.def);
  Vec q(3);
  q << 0.3, -0.2, 0.7;
  const auto l1 = fixtures::point_on_singular_locus(prob.sys, q, Vec());
  EXPECT_TRUE(l1.has_value());
  return SingularArcData(prob.sys, Vec(), *l1, 0.0, length);
}

}  // namespace

TEST(SingularArc, DubinsSglcFunctionIsOne) {
  const SingularArcData data = dubins_data(Vec::Zero(2), nominal());
  for (int i = 0; i <= 20; ++i) {
    const double t = data.tau1() + data.length() * i / 20;
    const auto s = data.at(t);
    EXPECT_NEAR(s.R, 1.0, 1e-9);
    EXPECT_NEAR(s.v, 0.0, 1e-12);
    // Straight-line flow at heading 0: g = (sin 0, -cos 0, 0).
    EXPECT_NEAR(s.g[0], 0.0, 1e-9);
    EXPECT_NEAR(s.g[1], -1.0, 1e-9);
    EXPECT_NEAR(s.g[2], 0.0, 1e-9);
  }
}

TEST(SingularArc, InitialValuesOnRandomSystem) {
  std::mt19937_64 rng(9);
  const ParametricProblem prob = compile(fixtures::random_dubins_like(rng));
  Vec r(2);
  r << 0.01, -0.02;
  const ExtremalStructure z = fixtures::random_dubins_structure(rng);
  const BsBExtremal ext = assemble(prob, r, z);
  const SingularArcData data = build_singular_arc_data(ext);
  const auto s = data.at(data.tau1());
  const CotangentPoint l1 = ext.junction1();
  EXPECT_LE((s.S - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((s.g - prob.sys.f01().value(l1.q, r)).cwiseAbs().maxCoeff(), 1e-12);
  const Vec c = -prob.sys.f01().jacobian(l1.q, r).transpose() * l1.p;
  EXPECT_LE((s.c - c).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(s.g_integral.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SingularArc, CrossFunctionalMatchesFiniteDifferences) {
  // c(t) dx = -d/dx <omega, g_t(x)> at x1, with g_t the field dragged back by
  // the reference flow under the frozen control v(t). Oracle: re-integrate
  // that flow from perturbed starting points.
  std::mt19937_64 rng(31);
  const auto ms = fixtures::random_metric_system(rng);
  const ParametricProblem prob = compile(ms.def);
  const Vec r = Vec::Constant(1, 0.2);
  Vec q(3);
  q << 0.2, -0.1, 0.4;
  const auto l1 = fixtures::point_on_singular_locus(prob.sys, q, r);
  ASSERT_TRUE(l1.has_value());
  const double t_end = 1.7;
  const SingularArcData data(prob.sys, r, *l1, 0.0, t_end);
  const auto& sys = prob.sys;
  auto dragged = [&](const Vec& x0) {
    const int n = 3;
    Vec y0(n + n * n);
    y0.head(n) = x0;
    y0.tail(n * n) = Mat::Identity(n, n).reshaped();
    auto rhs = [&](double t, const Vec& y, Vec& dy) {
      const double v = data.at(t).v;
      const Vec x = y.head(n);
      const Mat s = y.tail(n * n).reshaped(n, n);
      dy.resize(y.size());
      dy.head(n) = sys.f0().value(x, r) + v * sys.f1().value(x, r);
      dy.tail(n * n) = ((sys.f0().jacobian(x, r) + v * sys.f1().jacobian(x, r)) * s).reshaped();
    };
    OdeOptions o;
    o.abs_tol = o.rel_tol = 1e-12;
    const Vec y = dopri5(rhs, 0.0, y0, t_end, o).back();
    const Mat s = y.tail(n * n).reshaped(n, n);
    return Vec(s.partialPivLu().solve(sys.f01().value(y.head(n), r)));
  };
  const auto s = data.at(t_end);
  const double h = 1e-5;
  for (int j = 0; j < 3; ++j) {
    Vec xp = l1->q, xm = l1->q;
    xp[j] += h;
    xm[j] -= h;
    const double fd = -(l1->p.dot(dragged(xp)) - l1->p.dot(dragged(xm))) / (2 * h);
    EXPECT_NEAR(s.c[j], fd, 1e-6 * std::max(1.0, std::abs(fd))) << j;
  }
  EXPECT_LE((s.g - dragged(l1->q)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LagrangianFrameTest, IsLagrangian) {
  Vec f0(3), f1(3);
  f0 << 0.3, 1.2, -0.4;
  f1 << 0.1, 0.0, 1.0;
  const LagrangianFrame frame = LagrangianFrame::at_junction(f0, f1);
  EXPECT_LE(frame.lagrangian_defect(), 1e-14);
  EXPECT_EQ(Eigen::FullPivLU<Mat>(frame.basis).rank(), 3);
  EXPECT_THROW(LagrangianFrame::at_junction(f0, 2 * f0), RankDeficientConstraints);
}

TEST(Controllability, DubinsFullRank) {
  const ControllabilityRank cr = controllability_rank(dubins_data(Vec::Zero(2), nominal()));
  EXPECT_EQ(cr.rank, 3);
  EXPECT_GT(cr.smallest_sv, 0.1);
}

TEST(Controllability, DuplicateColumnsAreDeficient) {
  Mat cols(3, 4);
  cols << 1, 1, 1, 1, 0, 0, 0, 0, 2, 2, 2, 2;
  const ControllabilityRank cr = controllability_rank(cols, 1e-8);
  EXPECT_LT(cr.rank, 3);
  EXPECT_EQ(cr.rank, 1);
}

TEST(Controllability, PlanarFromTwoColumns) {
  Mat cols(2, 2);
  cols << 1, 0.5, 0, 2;
  EXPECT_EQ(controllability_rank(cols, 1e-8).rank, 2);
}

TEST(Coercivity, DubinsBothTests) {
  const SingularArcData data = dubins_data(Vec::Zero(2), nominal());
  const HamiltonianCoercivity h = coercivity_hamiltonian(data);
  EXPECT_EQ(h.verdict, CoercivityVerdict::coercive);
  EXPECT_EQ(h.sign_changes, 0);
  const QpCoercivity qp = coercivity_qp(data);
  EXPECT_EQ(qp.verdict, CoercivityVerdict::coercive);
  EXPECT_GT(qp.min_eig, 0.0);
  EXPECT_TRUE(qp.richardson_stable);
  EXPECT_LE(std::abs(qp.min_eig - qp.min_eig_refined), 0.1 * std::abs(qp.min_eig_refined));
}

TEST(Coercivity, ZeroLengthArcIsTriviallyCoercive) {
  const BsBExtremal ext = assemble(dubins(), Vec::Zero(2), nominal());
  const SingularArcData data(ext.system(), Vec::Zero(2), ext.junction1(), nominal().tau1, nominal().tau1);
  EXPECT_EQ(coercivity_hamiltonian(data).verdict, CoercivityVerdict::coercive);
}

TEST(Coercivity, QuadraticFormIsSymmetric) {
  const QuadraticProgram qp = assemble_second_variation_qp(dubins_data(Vec::Zero(2), nominal()), 32);
  EXPECT_LE((qp.hessian - qp.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(qp.constraints.rows(), 3);
  EXPECT_EQ(qp.constraints.cols(), 34);
}

TEST(Coercivity, DriftedDubinsStaysNearNominal) {
  const ParametricProblem prob = dubins();
  NewtonOptions no;
  no.certify = false;
  const double nominal_eig = coercivity_qp(dubins_data(Vec::Zero(2), nominal())).min_eig;
  for (const auto& rv : {std::pair{0.05, 0.0}, std::pair{0.0, 0.05}, std::pair{-0.03, 0.04}}) {
    Vec r(2);
    r << rv.first, rv.second;
    const ContinuationRecord rec = newton_solve(prob, r, nominal(), no);
    const QpCoercivity qp = coercivity_qp(dubins_data(r, rec.z));
    EXPECT_GT(qp.min_eig, 0.0);
    EXPECT_LE(std::abs(qp.min_eig - nominal_eig), 0.2 * nominal_eig) << r.transpose();
  }
}

TEST(Coercivity, MetricArcBeforeAndAfterConjugateTime) {
  // alpha = 1, beta = 1/4: conjugate time pi.
  const double tc = std::numbers::pi;
  const SingularArcData short_arc = metric_arc(1.0, 0.25, 0.5 * tc);
  EXPECT_EQ(coercivity_hamiltonian(short_arc).verdict, CoercivityVerdict::coercive);
  EXPECT_EQ(coercivity_qp(short_arc).verdict, CoercivityVerdict::coercive);

  const SingularArcData long_arc = metric_arc(1.0, 0.25, 1.5 * tc);
  const HamiltonianCoercivity h = coercivity_hamiltonian(long_arc);
  EXPECT_EQ(h.verdict, CoercivityVerdict::not_coercive);
  ASSERT_TRUE(h.critical_time.has_value());
  EXPECT_NEAR(*h.critical_time, tc, 0.05 * tc);
  EXPECT_EQ(coercivity_qp(long_arc).verdict, CoercivityVerdict::not_coercive);
}

TEST(Coercivity, RandomMetricSystemsAgree) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uq(-0.5, 0.5);
  std::uniform_real_distribution<double> ufrac(0.3, 1.8);
  int compared = 0;
  for (int k = 0; k < 12; ++k) {
    const auto ms = fixtures::random_metric_system(rng);
    const ParametricProblem prob = compile(ms.def);
    const Vec r = Vec::Constant(1, uq(rng));
    const Vec q = fixtures::random_metric_start(rng, ms);
    double frac = ufrac(rng);
    if (std::abs(frac - 1.0) < 0.2) frac += 0.4;
    const auto l1 = fixtures::point_on_singular_locus(prob.sys, q, r);
    if (!l1) continue;
    const SingularArcData data(prob.sys, r, *l1, 0.0, frac * ms.conjugate_time());
    const QpCoercivity qp = coercivity_qp(data);
    const HamiltonianCoercivity h = coercivity_hamiltonian(data);
    EXPECT_TRUE(qp.richardson_stable) << qp.min_eig << " vs " << qp.min_eig_refined;
    if (std::abs(qp.min_eig) > 10 * qp.tolerance) {
      ++compared;
      EXPECT_EQ(h.verdict, qp.verdict) << "frac " << frac << " min_eig " << qp.min_eig;
    }
    // The couplings are small, so the first conjugate point stays near the
    // unperturbed one.
    if (h.verdict == CoercivityVerdict::not_coercive) {
      ASSERT_TRUE(h.critical_time.has_value());
      EXPECT_NEAR(*h.critical_time, ms.conjugate_time(), 0.05 * ms.conjugate_time());
    }
  }
  EXPECT_GE(compared, 8);
}
