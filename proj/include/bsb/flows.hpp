#pragma once

// Flows of Hamiltonian vector fields on T*R^n, optionally together with the
// first-variation matrices d l(t) / d l0 and d l(t) / dr.

#include <utility>

#include "bsb/errors.hpp"
#include "bsb/geometry.hpp"
#include "bsb/hamiltonian.hpp"
#include "bsb/linalg.hpp"
#include "bsb/ode.hpp"

namespace bsb {

using FlowOptions = OdeOptions;

/// Dense solution of one Hamiltonian arc. With variational data the state is
/// [l; vec(transition); vec(param_sensitivity)] in column-major order.
class FlowSegment {
 public:
  FlowSegment() = default;
  FlowSegment(DenseSolution sol, int n, int m, bool variational)
      : sol_(std::move(sol)), n_(n), m_(m), variational_(variational) {}

  int dim() const noexcept { return n_; }
  int n_param() const noexcept { return m_; }
  bool has_variational() const noexcept { return variational_; }
  double t_begin() const noexcept { return sol_.t_begin(); }
  double t_end() const noexcept { return sol_.t_end(); }
  double error_estimate() const noexcept { return sol_.error_estimate(); }
  std::size_t steps() const noexcept { return sol_.steps(); }
  std::vector<double> grid() const { return sol_.grid(); }
  const DenseSolution& solution() const noexcept { return sol_; }

  Vec point_at(double t) const { return sol_.at(t).head(2 * n_); }
  CotangentPoint at(double t) const { return CotangentPoint::from_stacked(point_at(t)); }
  CotangentPoint start() const { return CotangentPoint::from_stacked(sol_.front().head(2 * n_)); }
  CotangentPoint end() const { return CotangentPoint::from_stacked(sol_.back().head(2 * n_)); }

  Mat transition(double t) const { return unpack_transition(sol_.at(t)); }
  Mat param_sensitivity(double t) const { return unpack_sensitivity(sol_.at(t)); }
  Mat end_transition() const { return unpack_transition(sol_.back()); }
  Mat end_param_sensitivity() const { return unpack_sensitivity(sol_.back()); }

 private:
  Mat unpack_transition(const Vec& y) const {
    require_variational();
    const int d = 2 * n_;
    return y.segment(d, d * d).reshaped(d, d);
  }
  Mat unpack_sensitivity(const Vec& y) const {
    require_variational();
    const int d = 2 * n_;
    return y.segment(d + d * d, d * m_).reshaped(d, m_);
  }
  void require_variational() const {
    if (!variational_) throw DomainError("flow segment carries no variational data");
  }

  DenseSolution sol_;
  int n_ = 0;
  int m_ = 0;
  bool variational_ = false;
};

/// l(t) = exp((t - t0) H->)(l0) for t between t0 and t1.
inline FlowSegment integrate(const HamiltonianField& h, const CotangentPoint& l0, double t0, double t1,
                             const FlowOptions& opts = {}) {
  const int n = h.dim();
  if (l0.dim() != n || l0.p.size() != n) throw DimensionError("integrate: initial point dimension mismatch");
  auto rhs = [&h](double, const Vec& y, Vec& dy) { dy = h.jet(y, JetOrder::first).vector_field(); };
  return FlowSegment(dopri5(rhs, t0, l0.stacked(), t1, opts), n, h.n_param(), false);
}

/// Base flow plus transition matrix (identity at t0) and parameter
/// sensitivity (zero at t0), integrated jointly under one error control.
inline FlowSegment variational(const HamiltonianField& h, const CotangentPoint& l0, double t0, double t1,
                               const FlowOptions& opts = {}) {
  const int n = h.dim();
  const int m = h.n_param();
  const int d = 2 * n;
  if (l0.dim() != n || l0.p.size() != n) throw DimensionError("variational: initial point dimension mismatch");

  Vec y0 = Vec::Zero(d + d * d + d * m);
  y0.head(d) = l0.stacked();
  y0.segment(d, d * d) = Mat::Identity(d, d).reshaped();
  auto rhs = [&h, d, m](double, const Vec& y, Vec& dy) {
    const HamiltonianJet j = h.jet(y.head(d), JetOrder::second);
    const Mat a = j.vector_field_jacobian();
    dy.resize(y.size());
    dy.head(d) = j.vector_field();
    dy.segment(d, d * d) = (a * y.segment(d, d * d).reshaped(d, d)).reshaped();
    if (m > 0) {
      dy.segment(d + d * d, d * m) =
          (a * y.segment(d + d * d, d * m).reshaped(d, m) + j.vector_field_dr()).reshaped();
    }
  };
  return FlowSegment(dopri5(rhs, t0, y0, t1, opts), n, m, true);
}

/// || M^T J M - J ||_max for a transition matrix M.
inline double symplectic_defect(const Mat& transition) {
  const int n = static_cast<int>(transition.rows() / 2);
  const Mat j = symplectic_matrix(n);
  return (transition.transpose() * j * transition - j).cwiseAbs().maxCoeff();
}

}  // namespace bsb
