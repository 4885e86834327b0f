#pragma once

// Randomised fixtures shared by the unit tests and the acceptance binary.

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bsb/bsb.hpp"

namespace bsb::fixtures {

// ---------------------------------------------------------------------------
// Expressions.

/// Unsimplified tree built from raw nodes, so printing and re-parsing must
/// reproduce it node for node.
inline sym::Expr random_raw_expr(std::mt19937_64& rng, int depth, int n_state, int n_param) {
  using sym::Op;
  std::uniform_int_distribution<int> pick(0, 99);
  std::uniform_real_distribution<double> mag(0.1, 5.0);
  const int roll = pick(rng);
  if (depth <= 0 || roll < 25) {
    const int leaf = pick(rng) % 3;
    if (leaf == 0 || (leaf == 2 && n_param == 0)) {
      const double v = (pick(rng) % 2 ? -1.0 : 1.0) * mag(rng);
      return sym::lit(v);
    }
    if (leaf == 1) return sym::state(static_cast<int>(rng() % static_cast<unsigned>(n_state)));
    return sym::param(static_cast<int>(rng() % static_cast<unsigned>(n_param)));
  }
  const int kind = pick(rng) % 10;
  switch (kind) {
    case 0: return sym::raw_unary(Op::neg, random_raw_expr(rng, depth - 1, n_state, n_param));
    case 1: return sym::raw_binary(Op::add, random_raw_expr(rng, depth - 1, n_state, n_param),
                                   random_raw_expr(rng, depth - 1, n_state, n_param));
    case 2: return sym::raw_binary(Op::sub, random_raw_expr(rng, depth - 1, n_state, n_param),
                                   random_raw_expr(rng, depth - 1, n_state, n_param));
    case 3: return sym::raw_binary(Op::mul, random_raw_expr(rng, depth - 1, n_state, n_param),
                                   random_raw_expr(rng, depth - 1, n_state, n_param));
    case 4: return sym::raw_binary(Op::div, random_raw_expr(rng, depth - 1, n_state, n_param),
                                   random_raw_expr(rng, depth - 1, n_state, n_param));
    case 5: return sym::raw_pow(random_raw_expr(rng, depth - 1, n_state, n_param), pick(rng) % 7 - 3);
    case 6: return sym::raw_unary(Op::sin, random_raw_expr(rng, depth - 1, n_state, n_param));
    case 7: return sym::raw_unary(Op::cos, random_raw_expr(rng, depth - 1, n_state, n_param));
    case 8: return sym::raw_unary(Op::exp, random_raw_expr(rng, depth - 1, n_state, n_param));
    default: return sym::raw_unary(Op::sqrt, random_raw_expr(rng, depth - 1, n_state, n_param));
  }
}

/// Simplified tree with bounded magnitude: denominators and square-root
/// arguments are kept away from zero.
inline sym::Expr random_expr(std::mt19937_64& rng, int depth, int n_state, int n_param) {
  std::uniform_int_distribution<int> pick(0, 99);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  if (depth <= 0 || pick(rng) < 20) {
    const int leaf = pick(rng) % 3;
    if (leaf == 0 || (leaf == 2 && n_param == 0)) return sym::lit(coef(rng));
    if (leaf == 1) return sym::state(static_cast<int>(rng() % static_cast<unsigned>(n_state)));
    return sym::param(static_cast<int>(rng() % static_cast<unsigned>(n_param)));
  }
  auto sub = [&] { return random_expr(rng, depth - 1, n_state, n_param); };
  auto positive = [&] { return sym::lit(1.5) + sym::pow(sub(), 2); };
  switch (pick(rng) % 10) {
    case 0: return -sub();
    case 1: return sub() + sub();
    case 2: return sub() - sub();
    case 3:
    case 4: return sub() * sub();
    case 5: return sub() / positive();
    case 6: return sym::pow(rng() % 2 ? sub() : positive(), pick(rng) % 7 - 3);
    case 7: return sym::sin(sub());
    case 8: return sym::cos(sub());
    default: return pick(rng) % 2 ? sym::exp(sym::sin(sub())) : sym::sqrt(positive());
  }
}

// ---------------------------------------------------------------------------
// Systems.

inline std::string num(double v) { return "(" + format_double(v) + ")"; }

/// Dubins car with small random couplings, parameter dependence in the drift
/// and the start point, and a random target.
inline ProblemDefinition random_dubins_like(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  std::uniform_real_distribution<double> target(-1.0, 1.0);
  ProblemDefinition d;
  d.name = "random-dubins";
  d.n = 3;
  d.m = 2;
  d.f0 = {"cos(x3) + " + num(small(rng)) + "*x2 + " + num(small(rng)) + "*r1*x1",
          "sin(x3) + " + num(small(rng)) + "*x1 + r2",
          num(small(rng)) + "*sin(x1) + " + num(small(rng)) + "*x2^2"};
  d.f1 = {num(small(rng)) + "*x2", num(small(rng)) + "*x1", "1 + " + num(small(rng)) + "*cos(x1)"};
  d.a = {num(small(rng)) + "*r1", "0", "pi/2"};
  d.b = {format_double(10 + target(rng)), format_double(target(rng)) + " + r2", "-pi/2"};
  d.u1 = -1;
  d.u2 = -1;
  return d;
}

/// Structure near the Dubins nominal, with a random singular length.
inline ExtremalStructure random_dubins_structure(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> length(2.0, 5.0);
  const double pi = std::numbers::pi;
  ExtremalStructure z;
  z.omega = Vec(3);
  z.omega << 1 + jitter(rng), jitter(rng), -1 + jitter(rng);
  z.tau1 = pi / 2 + jitter(rng);
  z.tau2 = z.tau1 + length(rng);
  z.T = z.tau2 + pi / 2 + jitter(rng);
  return z;
}

/// Central finite differences of the shooting residual in z and r.
inline ShootingJacobian fd_shooting_jacobian(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z,
                                             double h, const AssembleOptions& opts) {
  const Vec zs = z.stacked();
  const auto k = zs.size();
  ShootingJacobian out;
  out.residual = residual(prob, r, z, opts).stacked();
  out.dz = Mat::Zero(k, k);
  out.dr = Mat::Zero(k, r.size());
  for (Eigen::Index j = 0; j < k; ++j) {
    Vec zp = zs, zm = zs;
    zp[j] += h;
    zm[j] -= h;
    out.dz.col(j) = (residual(prob, r, ExtremalStructure::from_stacked(zp), opts).stacked() -
                     residual(prob, r, ExtremalStructure::from_stacked(zm), opts).stacked()) /
                    (2 * h);
  }
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    Vec rp = r, rm = r;
    rp[j] += h;
    rm[j] -= h;
    out.dr.col(j) = (residual(prob, rp, z, opts).stacked() - residual(prob, rm, z, opts).stacked()) / (2 * h);
  }
  return out;
}

/// Conformally flat "metric" system: speed s(x, y) = alpha (1 + beta (x^2 + y^2))
/// plus small perturbations. Unperturbed, the singular extremals are geodesics
/// of constant curvature 4 alpha^2 beta, with first conjugate time
/// pi / (2 alpha sqrt(beta)).
struct MetricSystem {
  ProblemDefinition def;
  double alpha = 1.0;
  double beta = 0.25;
  double conjugate_time() const { return std::numbers::pi / (2 * alpha * std::sqrt(beta)); }
};

inline MetricSystem random_metric_system(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(0.7, 1.3);
  std::uniform_real_distribution<double> ub(0.15, 0.4);
  std::uniform_real_distribution<double> small(-0.01, 0.01);
  MetricSystem s;
  s.alpha = ua(rng);
  s.beta = ub(rng);
  const std::string speed = num(s.alpha) + "*(1 + " + num(s.beta) + "*(x1^2 + x2^2))";
  auto& d = s.def;
  d.name = "random-metric";
  d.n = 3;
  d.m = 1;
  d.f0 = {speed + "*cos(x3) + " + num(small(rng)) + "*x2 + r1*" + num(small(rng)),
          speed + "*sin(x3) + " + num(small(rng)) + "*x1",
          num(small(rng)) + "*x1*x2"};
  d.f1 = {"0", "0", "1"};
  d.a = {"0", "0", "0"};
  d.b = {"0", "0", "0"};
  return s;
}

/// Start point for a metric-system arc. The unperturbed geodesics are great
/// circles of a stereographic sphere; starting near the equator r = 1/sqrt(beta)
/// with a near-tangential heading keeps the antipodal point, and so the whole
/// arc, at bounded radius.
inline Vec random_metric_start(std::mt19937_64& rng, const MetricSystem& ms) {
  std::uniform_real_distribution<double> radial(0.8, 1.2);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> tilt(-0.3, 0.3);
  const double rho = radial(rng) / std::sqrt(ms.beta);
  const double phi = angle(rng);
  const double turn = rng() % 2 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
  Vec q(3);
  q << rho * std::cos(phi), rho * std::sin(phi), phi + turn + tilt(rng);
  return q;
}

/// Covector at q on S: <p, f1> = <p, f01> = 0 and <p, f0> = 1. Empty when the
/// three fields are dependent or F101 is not positive there.
inline std::optional<CotangentPoint> point_on_singular_locus(const AffineSystem& sys, const Vec& q, const Vec& r) {
  const auto n = q.size();
  if (n != 3) return std::nullopt;
  Mat rows(3, 3);
  rows.row(0) = sys.f1().value(q, r).transpose();
  rows.row(1) = sys.f01().value(q, r).transpose();
  rows.row(2) = sys.f0().value(q, r).transpose();
  Eigen::JacobiSVD<Mat> svd(rows);
  if (!(svd.singularValues()(2) > 1e-8 * svd.singularValues()(0))) return std::nullopt;
  CotangentPoint l;
  l.q = q;
  l.p = rows.partialPivLu().solve(Vec::Unit(3, 2));
  if (!(lifted_value(sys.f101(), l, r) > 1e-3)) return std::nullopt;
  return l;
}

}  // namespace bsb::fixtures
