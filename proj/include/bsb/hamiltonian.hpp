#pragma once

// Hamiltonians on T*R^n evaluated together with their derivatives.
//
// A HamiltonianJet carries H, its gradient over l = (p, q), and (for second
// order) the Hessian plus the parameter derivatives d/dr H and d/dr grad H.
// Products and quotients of lifted Hamiltonians are propagated exactly, which
// is what the singular Hamiltonian F0 - (F001/F101) F1 needs.

#include <string>
#include <utility>

#include "bsb/errors.hpp"
#include "bsb/geometry.hpp"
#include "bsb/linalg.hpp"

namespace bsb {

struct HamiltonianJet {
  double value = 0.0;
  Vec grad;     // [dH/dp; dH/dq]
  Mat hess;     // blocks [[pp, pq], [qp, qq]]
  Vec dr;       // dH/dr
  Mat dr_grad;  // d/dr of grad, 2n x m
  bool second = false;

  /// Lift of a field jet: F(p, q) = <p, f(q)>.
  static HamiltonianJet lift(const FieldJet& f, const Vec& p, JetOrder order) {
    const auto n = p.size();
    HamiltonianJet h;
    h.value = p.dot(f.value);
    h.grad.resize(2 * n);
    h.grad << f.value, f.jacobian.transpose() * p;
    if (order == JetOrder::first) return h;

    h.second = true;
    h.hess = Mat::Zero(2 * n, 2 * n);
    h.hess.topRightCorner(n, n) = f.jacobian;
    h.hess.bottomLeftCorner(n, n) = f.jacobian.transpose();
    Mat qq = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      qq += p[i] * f.hessian.row(i).reshaped(n, n);
    }
    h.hess.bottomRightCorner(n, n) = qq;

    const auto m = f.dr.cols();
    h.dr = f.dr.transpose() * p;
    h.dr_grad.resize(2 * n, m);
    for (Eigen::Index l = 0; l < m; ++l) {
      h.dr_grad.col(l).head(n) = f.dr.col(l);
      h.dr_grad.col(l).tail(n) = f.dr_jacobian.middleCols(l * n, n).transpose() * p;
    }
    return h;
  }

  HamiltonianJet& operator+=(const HamiltonianJet& o) {
    value += o.value;
    grad += o.grad;
    if (second) {
      hess += o.hess;
      dr += o.dr;
      dr_grad += o.dr_grad;
    }
    return *this;
  }

  friend HamiltonianJet operator+(HamiltonianJet a, const HamiltonianJet& b) { return a += b; }

  friend HamiltonianJet operator*(double s, HamiltonianJet a) {
    a.value *= s;
    a.grad *= s;
    if (a.second) {
      a.hess *= s;
      a.dr *= s;
      a.dr_grad *= s;
    }
    return a;
  }

  friend HamiltonianJet operator*(const HamiltonianJet& a, const HamiltonianJet& b) {
    HamiltonianJet h;
    h.second = a.second && b.second;
    h.value = a.value * b.value;
    h.grad = a.value * b.grad + b.value * a.grad;
    if (!h.second) return h;
    h.hess = a.value * b.hess + b.value * a.hess + a.grad * b.grad.transpose() + b.grad * a.grad.transpose();
    h.dr = a.value * b.dr + b.value * a.dr;
    h.dr_grad = a.value * b.dr_grad + b.value * a.dr_grad + b.grad * a.dr.transpose() + a.grad * b.dr.transpose();
    return h;
  }

  /// 1 / b.
  static HamiltonianJet reciprocal(const HamiltonianJet& b) {
    const double inv = 1.0 / b.value;
    const double inv2 = inv * inv;
    HamiltonianJet h;
    h.second = b.second;
    h.value = inv;
    h.grad = -inv2 * b.grad;
    if (!h.second) return h;
    h.hess = -inv2 * b.hess + 2.0 * inv2 * inv * (b.grad * b.grad.transpose());
    h.dr = -inv2 * b.dr;
    h.dr_grad = -inv2 * b.dr_grad + 2.0 * inv2 * inv * (b.grad * b.dr.transpose());
    return h;
  }

  /// Hamiltonian vector field (-dH/dq, dH/dp).
  Vec vector_field() const {
    const auto n = grad.size() / 2;
    Vec v(2 * n);
    v << -grad.tail(n), grad.head(n);
    return v;
  }

  /// Derivative of the Hamiltonian vector field with respect to l.
  Mat vector_field_jacobian() const {
    const auto n = grad.size() / 2;
    Mat a(2 * n, 2 * n);
    a.topRows(n) = -hess.bottomRows(n);
    a.bottomRows(n) = hess.topRows(n);
    return a;
  }

  /// Derivative of the Hamiltonian vector field with respect to r.
  Mat vector_field_dr() const {
    const auto n = grad.size() / 2;
    Mat a(2 * n, dr_grad.cols());
    a.topRows(n) = -dr_grad.bottomRows(n);
    a.bottomRows(n) = dr_grad.topRows(n);
    return a;
  }
};

inline FieldJet combine(const FieldJet& a, double s, const FieldJet& b, JetOrder order) {
  FieldJet out;
  out.value = a.value + s * b.value;
  out.jacobian = a.jacobian + s * b.jacobian;
  if (order == JetOrder::second) {
    out.hessian = a.hessian + s * b.hessian;
    out.dr = a.dr + s * b.dr;
    out.dr_jacobian = a.dr_jacobian + s * b.dr_jacobian;
  }
  return out;
}

enum class HamiltonianKind { bang, singular, lift };

/// A Hamiltonian bound to a parameter value r:
///  - bang:     H = F0 + u F1 with u in {-1, +1},
///  - singular: F^S = F0 - (F001 / F101) F1, defined where F101 > tol_sglc,
///  - lift:     F = <p, f(q)> for an arbitrary field f.
class HamiltonianField {
 public:
  static HamiltonianField bang(const AffineSystem& sys, int u, Vec r) {
    if (u != -1 && u != 1) throw ValidationError("bang control must be -1 or +1");
    check_r(sys.m(), r);
    HamiltonianField h(HamiltonianKind::bang, sys, std::move(r));
    h.u_ = u;
    return h;
  }

  static HamiltonianField singular(const AffineSystem& sys, Vec r, double tol_sglc = kDefaultTolSglc) {
    check_r(sys.m(), r);
    HamiltonianField h(HamiltonianKind::singular, sys, std::move(r));
    h.tol_sglc_ = tol_sglc;
    return h;
  }

  static HamiltonianField lift(const VectorField& f, Vec r) {
    check_r(f.n_param(), r);
    HamiltonianField h(HamiltonianKind::lift, AffineSystem{}, std::move(r));
    h.field_ = f;
    h.n_ = f.dim();
    return h;
  }

  HamiltonianKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return n_; }
  int n_param() const noexcept { return static_cast<int>(r_.size()); }
  const Vec& r() const noexcept { return r_; }
  int control() const noexcept { return u_; }
  double tol_sglc() const noexcept { return tol_sglc_; }
  const AffineSystem& system() const noexcept { return sys_; }

  HamiltonianJet jet(const Vec& l, JetOrder order) const {
    const auto n = static_cast<Eigen::Index>(n_);
    if (l.size() != 2 * n) throw DimensionError("hamiltonian: point dimension mismatch");
    const Vec p = l.head(n);
    const Vec q = l.tail(n);
    switch (kind_) {
      case HamiltonianKind::lift:
        return HamiltonianJet::lift(field_.jet(q, r_, order), p, order);
      case HamiltonianKind::bang: {
        FieldJet h = combine(sys_.f0().jet(q, r_, order), u_, sys_.f1().jet(q, r_, order), order);
        return HamiltonianJet::lift(h, p, order);
      }
      case HamiltonianKind::singular: {
        HamiltonianJet b = HamiltonianJet::lift(sys_.f101().jet(q, r_, order), p, order);
        if (!(b.value > tol_sglc_)) {
          throw SGLCViolated("F101 = " + std::to_string(b.value) + " along the singular flow");
        }
        HamiltonianJet a = HamiltonianJet::lift(sys_.f001().jet(q, r_, order), p, order);
        HamiltonianJet v = -1.0 * (a * HamiltonianJet::reciprocal(b));
        HamiltonianJet f0 = HamiltonianJet::lift(sys_.f0().jet(q, r_, order), p, order);
        HamiltonianJet f1 = HamiltonianJet::lift(sys_.f1().jet(q, r_, order), p, order);
        return f0 + v * f1;
      }
    }
    return {};
  }

  double value(const CotangentPoint& l) const { return jet(l.stacked(), JetOrder::first).value; }
  Vec vector_field(const Vec& l) const { return jet(l, JetOrder::first).vector_field(); }

  /// Control realised by this Hamiltonian at l: u for bang arcs, the singular
  /// feedback for singular arcs.
  double control_at(const CotangentPoint& l) const {
    switch (kind_) {
      case HamiltonianKind::bang: return u_;
      case HamiltonianKind::singular: return singular_control(l, sys_, r_, tol_sglc_);
      case HamiltonianKind::lift: return 0.0;
    }
    return 0.0;
  }

 private:
  HamiltonianField(HamiltonianKind kind, AffineSystem sys, Vec r)
      : kind_(kind), sys_(std::move(sys)), r_(std::move(r)), n_(kind == HamiltonianKind::lift ? 0 : sys_.n()) {}

  static void check_r(int m, const Vec& r) {
    if (r.size() != m) throw DimensionError("hamiltonian: parameter dimension mismatch");
  }

  HamiltonianKind kind_;
  AffineSystem sys_;
  VectorField field_;
  Vec r_;
  int n_ = 0;
  int u_ = 0;
  double tol_sglc_ = kDefaultTolSglc;
};

}  // namespace bsb
