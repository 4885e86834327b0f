#pragma once

// Shooting map of the bang-singular-bang structure
//   Psi(r, z) = (q(T) - b(r), F1(l1), F01(l1), F0(l1) - 1),
// where l1 = exp(tau1 H1)(omega, a(r)) and q(T) is the end state of the three
// concatenated arcs. Zeros are found by damped Newton and followed in r.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bsb/certification.hpp"
#include "bsb/errors.hpp"
#include "bsb/extremal.hpp"
#include "bsb/flows.hpp"
#include "bsb/geometry.hpp"
#include "bsb/hamiltonian.hpp"
#include "bsb/linalg.hpp"

namespace bsb {

struct ShootingResidual {
  Vec endpoint;  // q(T) - b(r)
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  Vec stacked() const {
    Vec v(endpoint.size() + 3);
    v << endpoint, s1, s2, s3;
    return v;
  }
  double norm() const { return max_abs(stacked()); }
};

inline ShootingResidual residual(const ParametricProblem& prob, const BsBExtremal& ext) {
  const Vec& r = ext.r();
  const CotangentPoint l1 = ext.junction1();
  ShootingResidual out;
  out.endpoint = ext.final_point().q - prob.b.value(r);
  out.s1 = lifted_value(prob.sys.f1(), l1, r);
  out.s2 = lifted_value(prob.sys.f01(), l1, r);
  out.s3 = lifted_value(prob.sys.f0(), l1, r) - 1.0;
  return out;
}

inline ShootingResidual residual(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z,
                                 const AssembleOptions& opts = {}) {
  return residual(prob, assemble(prob, r, z, opts));
}

struct ShootingJacobian {
  Vec residual;  // Psi at z, from the variational integration
  Mat dz;        // (n+3) x (n+3), columns (omega, tau1, tau2, T)
  Mat dr;        // (n+3) x m
};

/// Derivatives of Psi through the transition matrices of the three arcs and
/// the chain rule on the arc durations.
inline ShootingJacobian jacobian(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z,
                                 const AssembleOptions& opts = {}) {
  prob.validate();
  z.require_admissible();
  const int n = prob.n();
  const int m = prob.m();
  const int d = 2 * n;
  if (z.omega.size() != n || r.size() != m) throw DimensionError("jacobian: dimension mismatch");

  const HamiltonianField h1 = HamiltonianField::bang(prob.sys, prob.u1, r);
  const HamiltonianField hs = HamiltonianField::singular(prob.sys, r, opts.tol_sglc);
  const HamiltonianField h2 = HamiltonianField::bang(prob.sys, prob.u2, r);

  const CotangentPoint l0{z.omega, prob.a.value(r)};
  const FlowSegment s1 = variational(h1, l0, 0.0, z.tau1, opts.flow);
  const CotangentPoint l1 = s1.end();
  const FlowSegment s2 = variational(hs, l1, z.tau1, z.tau2, opts.flow);
  const CotangentPoint l2 = s2.end();
  const FlowSegment s3 = variational(h2, l2, z.tau2, z.T, opts.flow);
  const CotangentPoint lf = s3.end();

  const Vec v1 = h1.vector_field(l1.stacked());
  const Vec vs = hs.vector_field(l2.stacked());
  const Vec v2 = h2.vector_field(lf.stacked());

  // d l1 / d(omega, tau1, tau2, T, r)
  const Mat m1 = s1.end_transition();
  Mat dl1 = Mat::Zero(d, n + 3);
  dl1.leftCols(n) = m1.leftCols(n);
  dl1.col(n) = v1;
  const Mat dl1_dr = m1.rightCols(n) * prob.a.jacobian(r) + s1.end_param_sensitivity();

  const Mat m2 = s2.end_transition();
  Mat dl2 = m2 * dl1;
  dl2.col(n) -= vs;
  dl2.col(n + 1) += vs;
  const Mat dl2_dr = m2 * dl1_dr + s2.end_param_sensitivity();

  const Mat m3 = s3.end_transition();
  Mat dlf = m3 * dl2;
  dlf.col(n + 1) -= v2;
  dlf.col(n + 2) += v2;
  const Mat dlf_dr = m3 * dl2_dr + s3.end_param_sensitivity();

  ShootingJacobian out;
  out.dz = Mat::Zero(n + 3, n + 3);
  out.dr = Mat::Zero(n + 3, m);
  out.dz.topRows(n) = dlf.bottomRows(n);
  out.dr.topRows(n) = dlf_dr.bottomRows(n) - prob.b.jacobian(r);

  const VectorField* fields[3] = {&prob.sys.f1(), &prob.sys.f01(), &prob.sys.f0()};
  out.residual.resize(n + 3);
  out.residual.head(n) = lf.q - prob.b.value(r);
  for (int i = 0; i < 3; ++i) {
    const HamiltonianJet j = HamiltonianJet::lift(fields[i]->jet(l1.q, r, JetOrder::second), l1.p, JetOrder::second);
    // Only the first arc enters: the tau2 and T columns stay exactly zero.
    out.dz.row(n + i).head(n + 1) = j.grad.transpose() * dl1.leftCols(n + 1);
    out.dr.row(n + i) = j.grad.transpose() * dl1_dr + j.dr.transpose();
    out.residual[n + i] = j.value - (i == 2 ? 1.0 : 0.0);
  }
  return out;
}

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 25;
  double cond_max = 1e12;
  int max_backtracks = 30;
  bool certify = true;
  AssembleOptions assemble;
  CertifyOptions certification;
};

/// A solved point of the continuation branch.
struct ContinuationRecord {
  Vec r;
  ExtremalStructure z;
  Mat jacobian;     // dPsi/dz at the solution
  Mat jacobian_r;   // dPsi/dr at the solution
  Mat sensitivity;  // dz/dr = -(dPsi/dz)^{-1} dPsi/dr
  double condition = 0.0;
  int iterations = 0;
  double residual_norm = 0.0;
  std::optional<CertificationReport> certification;

  bool certified() const { return certification && certification->pass(); }
};

inline double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

namespace detail {

inline std::optional<Vec> try_residual(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z,
                                       const AssembleOptions& opts) {
  if (!z.admissible()) return std::nullopt;
  try {
    Vec v = residual(prob, r, z, opts).stacked();
    if (!v.allFinite()) return std::nullopt;
    return v;
  } catch (const SGLCViolated&) {
  } catch (const StepFailure&) {
  } catch (const DomainError&) {
  }
  return std::nullopt;
}

}  // namespace detail

/// Damped Newton on Psi(r, .) from z0, with backtracking on the max-norm of
/// the residual.
inline ContinuationRecord newton_solve(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z0,
                                       const NewtonOptions& opts = {}) {
  prob.validate();
  z0.require_admissible();
  ExtremalStructure z = z0;
  Vec fvec = residual(prob, r, z, opts.assemble).stacked();
  double fnorm = max_abs(fvec);
  int it = 0;
  while (fnorm > opts.tol) {
    if (it >= opts.max_iter) {
      throw NoConvergence("newton: residual " + std::to_string(fnorm) + " after " + std::to_string(it) +
                          " iterations");
    }
    ++it;
    const ShootingJacobian jac = jacobian(prob, r, z, opts.assemble);
    const double cond = condition_number(jac.dz);
    if (!(cond <= opts.cond_max)) throw SingularJacobian("newton: Jacobian condition " + std::to_string(cond));
    const Vec step = -jac.dz.partialPivLu().solve(fvec);

    double lambda = 1.0;
    bool accepted = false;
    bool structure_lost = false;
    for (int k = 0; k <= opts.max_backtracks; ++k, lambda *= 0.5) {
      const ExtremalStructure trial = ExtremalStructure::from_stacked(z.stacked() + lambda * step);
      if (!trial.admissible()) {
        structure_lost = true;
        continue;
      }
      const auto f = detail::try_residual(prob, r, trial, opts.assemble);
      if (f && max_abs(*f) < (1.0 - 1e-4 * lambda) * fnorm) {
        z = trial;
        fvec = *f;
        fnorm = max_abs(fvec);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (structure_lost) throw StructureBroken("newton: every damped step leaves 0 < tau1 < tau2 < T");
      // Residual at the noise floor of the integrator: nothing left to gain.
      throw NoConvergence("newton: line search failed at residual " + std::to_string(fnorm));
    }
  }

  ContinuationRecord rec;
  rec.r = r;
  rec.z = z;
  rec.iterations = it;
  rec.residual_norm = fnorm;
  const ShootingJacobian jac = jacobian(prob, r, z, opts.assemble);
  rec.jacobian = jac.dz;
  rec.jacobian_r = jac.dr;
  rec.condition = condition_number(jac.dz);
  if (!(rec.condition <= opts.cond_max)) {
    throw SingularJacobian("newton: Jacobian condition " + std::to_string(rec.condition) + " at the solution");
  }
  rec.sensitivity = -jac.dz.partialPivLu().solve(jac.dr);
  if (opts.certify) rec.certification = certify(assemble(prob, r, z, opts.assemble), opts.certification);
  return rec;
}

struct ContinuationOptions {
  NewtonOptions newton;
  int max_halvings = 8;
};

/// Follows the zero of Psi along r_path with a tangent predictor. Failed
/// corrector steps are retried on halved increments; the path stops after the
/// first record whose certificate fails.
inline std::vector<ContinuationRecord> continue_path(const ParametricProblem& prob, const std::vector<Vec>& r_path,
                                                     const ExtremalStructure& z0, const ContinuationOptions& opts = {}) {
  std::vector<ContinuationRecord> out;
  if (r_path.empty()) return out;
  ContinuationRecord cur = newton_solve(prob, r_path.front(), z0, opts.newton);
  out.push_back(cur);
  if (!cur.certified() && opts.newton.certify) return out;

  NewtonOptions inner = opts.newton;
  inner.certify = false;
  for (std::size_t k = 1; k < r_path.size(); ++k) {
    const Vec& target = r_path[k];
    ContinuationRecord base = cur;
    int halvings = 0;
    // Advance from base.r towards target in sub-steps of size target_step.
    double frac = 1.0;
    while (true) {
      const Vec dr = target - base.r;
      const Vec r_try = base.r + frac * dr;
      const bool at_target = frac == 1.0;
      const ExtremalStructure guess =
          ExtremalStructure::from_stacked(base.z.stacked() + base.sensitivity * (r_try - base.r));
      try {
        ContinuationRecord next = newton_solve(prob, r_try, guess, at_target ? opts.newton : inner);
        if (at_target) {
          cur = std::move(next);
          break;
        }
        base = std::move(next);
        frac = 1.0;
      } catch (const Error&) {
        if (++halvings > opts.max_halvings) {
          throw NoConvergence("continuation: step halving exhausted before path point " + std::to_string(k));
        }
        frac *= 0.5;
      }
    }
    out.push_back(cur);
    if (opts.newton.certify && !cur.certified()) break;
  }
  return out;
}

/// Points r0 + t_k * direction for t_k = k * t_max / steps, k = 0..steps.
inline std::vector<Vec> parameter_ray(const Vec& r0, const Vec& direction, double t_max, int steps) {
  if (steps < 1) throw ValidationError("parameter ray needs at least one step");
  if (direction.size() != r0.size()) throw DimensionError("parameter ray: direction dimension mismatch");
  std::vector<Vec> path;
  for (int k = 0; k <= steps; ++k) path.push_back(r0 + (t_max * k / steps) * direction);
  return path;
}

struct UniquenessOptions {
  int n_probe = 200;
  double box_frac = 0.1;     // covector box radius as a fraction of |omega|
  double time_radius = 0.1;  // absolute radius for tau1, tau2, T
  double distinct_tol = 1e-6;
  std::uint64_t seed = 0;
  NewtonOptions newton;
};

struct UniquenessResult {
  int n_zeros_found = 0;
  int n_converged = 0;
  std::vector<ExtremalStructure> zeros;
};

/// Runs Newton from random starts around the record and counts distinct
/// converged zeros, the record's own zero included.
inline UniquenessResult uniqueness_scan(const ParametricProblem& prob, const ContinuationRecord& record,
                                        const UniquenessOptions& opts = {}) {
  UniquenessResult out;
  out.zeros.push_back(record.z);
  NewtonOptions nopts = opts.newton;
  nopts.certify = false;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double box = opts.box_frac * record.z.omega.norm();
  const auto n = record.z.omega.size();
  for (int k = 0; k < opts.n_probe; ++k) {
    ExtremalStructure z = record.z;
    for (Eigen::Index i = 0; i < n; ++i) z.omega[i] += box * unit(rng);
    z.tau1 += opts.time_radius * unit(rng);
    z.tau2 += opts.time_radius * unit(rng);
    z.T += opts.time_radius * unit(rng);
    if (!z.admissible()) continue;
    try {
      const ContinuationRecord rec = newton_solve(prob, record.r, z, nopts);
      ++out.n_converged;
      const Vec zs = rec.z.stacked();
      const bool seen = std::any_of(out.zeros.begin(), out.zeros.end(), [&](const ExtremalStructure& e) {
        return max_abs(e.stacked() - zs) <= opts.distinct_tol;
      });
      if (!seen) out.zeros.push_back(rec.z);
    } catch (const Error&) {
    }
  }
  out.n_zeros_found = static_cast<int>(out.zeros.size());
  return out;
}

}  // namespace bsb
