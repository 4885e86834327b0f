#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bsb/bsb.hpp"

using namespace bsb;

namespace {

const double kPi = std::numbers::pi;

ParametricProblem dubins() { return compile(*builtin_problem("dubins")); }

ExtremalStructure nominal() { return *builtin_problem("dubins")->z0; }

}  // namespace

TEST(Assemble, DubinsNominalHitsTarget) {
  const ParametricProblem prob = dubins();
  const BsBExtremal ext = assemble(prob, Vec::Zero(2), nominal());
  const Vec q = ext.final_point().q;
  EXPECT_NEAR(q[0], 10.0, 1e-9);
  EXPECT_NEAR(q[1], 0.0, 1e-9);
  EXPECT_NEAR(q[2], -kPi / 2, 1e-9);
  // Junctions of the analytic solution: (1, 1, 0) and (9, 1, 0).
  EXPECT_NEAR(ext.junction1().q[0], 1.0, 1e-9);
  EXPECT_NEAR(ext.junction1().q[1], 1.0, 1e-9);
  EXPECT_NEAR(ext.junction2().q[0], 9.0, 1e-9);
  EXPECT_NEAR(ext.junction2().q[1], 1.0, 1e-9);
}

TEST(Assemble, ControlPattern) {
  const BsBExtremal ext = assemble(dubins(), Vec::Zero(2), nominal());
  EXPECT_EQ(ext.control(0.5), -1.0);
  EXPECT_NEAR(ext.control(5.0), 0.0, 1e-12);
  EXPECT_EQ(ext.control(10.5), -1.0);
  EXPECT_EQ(ext.arc_index(0.5), 0);
  EXPECT_EQ(ext.arc_index(5.0), 1);
  EXPECT_EQ(ext.arc_index(10.5), 2);
}

TEST(Assemble, DegenerateStructureRejected) {
  ExtremalStructure z = nominal();
  z.T = z.tau2;
  EXPECT_THROW(assemble(dubins(), Vec::Zero(2), z), StructureBroken);
  z = nominal();
  z.tau1 = 0.0;
  EXPECT_THROW(assemble(dubins(), Vec::Zero(2), z), StructureBroken);
}

TEST(Assemble, DimensionMismatchRejected) {
  EXPECT_THROW(assemble(dubins(), Vec::Zero(1), nominal()), DimensionError);
  ExtremalStructure z = nominal();
  z.omega = Vec::Ones(2);
  EXPECT_THROW(assemble(dubins(), Vec::Zero(2), z), DimensionError);
}

TEST(Assemble, DriftCreatesMismatch) {
  const ParametricProblem prob = dubins();
  Vec r = Vec::Zero(2);
  r[0] = 0.01;
  const ShootingResidual res = residual(prob, r, nominal());
  EXPECT_GT(res.endpoint.norm(), 1e-3);
  // Constant drift does not enter the adjoint, so F1 at the first junction is unchanged.
  EXPECT_LE(std::abs(res.s1), 1e-9);
}

TEST(Assemble, BitIdenticalReassembly) {
  const ParametricProblem prob = dubins();
  Vec r(2);
  r << 0.013, -0.004;
  const BsBExtremal a = assemble(prob, r, nominal());
  const BsBExtremal b = assemble(prob, r, nominal());
  EXPECT_EQ(a.final_point().stacked(), b.final_point().stacked());
  EXPECT_EQ(residual(prob, a).stacked(), residual(prob, r, nominal()).stacked());
}

TEST(EndpointMapTest, RejectsStateDependence) {
  EXPECT_THROW(EndpointMap({sym::parse("x1", 1, 0)}, 0), ValidationError);
  EXPECT_THROW(EndpointMap({sym::Expr()}, 0), ValidationError);
  const EndpointMap b({sym::parse("10", 0, 2), sym::parse("r2*3", 0, 2)}, 2);
  Vec r(2);
  r << 0.5, 0.25;
  EXPECT_DOUBLE_EQ(b.value(r)[1], 0.75);
  EXPECT_DOUBLE_EQ(b.jacobian(r)(1, 1), 3.0);
  EXPECT_DOUBLE_EQ(b.jacobian(r)(0, 0), 0.0);
}

TEST(Certify, DubinsNominal) {
  const BsBExtremal ext = assemble(dubins(), Vec::Zero(2), nominal());
  const CertificationReport rep = certify(ext);
  EXPECT_TRUE(rep.pass()) << (rep.failures.empty() ? "" : rep.failures.front());
  EXPECT_NEAR(rep.margin_sglc, 1.0, 1e-8);
  EXPECT_NEAR(rep.junction1, 1.0, 1e-8);
  EXPECT_NEAR(rep.junction2, 1.0, 1e-8);
  EXPECT_NEAR(rep.sup_v, 0.0, 1e-10);
  EXPECT_LE(rep.normality_drift, 1e-8);
  EXPECT_LE(rep.singular_f1_max, 1e-8);
  EXPECT_LE(rep.singular_f01_max, 1e-8);
  EXPECT_EQ(rep.controllability_rank, 3);
  EXPECT_EQ(rep.hamiltonian_test.verdict, CoercivityVerdict::coercive);
  EXPECT_EQ(rep.qp_test.verdict, CoercivityVerdict::coercive);
  // u1 F1 = 1 - sin t on the first arc, minimised at the collar edge.
  const double collar = 1e-3 * kPi / 2;
  EXPECT_NEAR(rep.margin_bang1, 1 - std::cos(collar), 1e-9);
  EXPECT_GT(rep.margin_bang2, 0.0);
  EXPECT_GT(rep.injectivity_margin, 0.0);
}

TEST(Certify, SwitchingFunctionSignPattern) {
  const BsBExtremal ext = assemble(dubins(), Vec::Zero(2), nominal());
  const AffineSystem& sys = ext.system();
  const Vec r = Vec::Zero(2);
  for (int i = 0; i <= 100; ++i) {
    const double t = ext.structure().T * i / 100;
    const double f1 = lifted_value(sys.f1(), ext.point(t), r);
    if (t < ext.structure().tau1) {
      EXPECT_GE(-f1, -1e-12);
    } else if (t <= ext.structure().tau2) {
      EXPECT_LE(std::abs(f1), 1e-8);
    } else {
      EXPECT_GE(-f1, -1e-12);
    }
  }
}

TEST(Certify, WrongStructureFails) {
  // Long singular arc with a covector off S: switching residuals fail.
  ExtremalStructure z = nominal();
  z.omega[1] = 0.2;
  const BsBExtremal ext = assemble(dubins(), Vec::Zero(2), z);
  const CertificationReport rep = certify(ext);
  EXPECT_FALSE(rep.pass());
}
