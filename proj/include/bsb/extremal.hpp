#pragma once

// Parametric minimum-time problems with a bang-singular-bang reference
// structure, and assembly of the corresponding extremal from (omega, tau1,
// tau2, T).

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "bsb/errors.hpp"
#include "bsb/flows.hpp"
#include "bsb/geometry.hpp"
#include "bsb/hamiltonian.hpp"
#include "bsb/linalg.hpp"
#include "bsb/symexpr.hpp"

namespace bsb {

/// A point of R^n depending on the parameter r only.
class EndpointMap {
 public:
  EndpointMap() = default;
  EndpointMap(std::vector<sym::Expr> components, int n_param) : comps_(std::move(components)), m_(n_param) {
    for (std::size_t i = 0; i < comps_.size(); ++i) {
      const auto& c = comps_[i];
      if (!c.valid()) throw ValidationError("endpoint component " + std::to_string(i) + " is empty");
      if (sym::max_index(c, sym::Variable::Kind::state) >= 0) {
        throw ValidationError("endpoint component " + std::to_string(i) + " depends on the state");
      }
      if (sym::max_index(c, sym::Variable::Kind::param) >= m_) {
        throw ValidationError("endpoint component " + std::to_string(i) + " references an undeclared parameter");
      }
      for (int l = 0; l < m_; ++l) d_.push_back(sym::differentiate(c, sym::Variable::r(l)));
    }
  }

  int dim() const noexcept { return static_cast<int>(comps_.size()); }
  const std::vector<sym::Expr>& components() const noexcept { return comps_; }

  Vec value(const Vec& r) const {
    check(r);
    Vec out(dim());
    for (int i = 0; i < dim(); ++i) out[i] = sym::evaluate(comps_[static_cast<std::size_t>(i)], {}, as_span(r));
    return out;
  }

  Mat jacobian(const Vec& r) const {
    check(r);
    Mat out(dim(), m_);
    for (int i = 0; i < dim(); ++i) {
      for (int l = 0; l < m_; ++l) out(i, l) = sym::evaluate(d_[static_cast<std::size_t>(i * m_ + l)], {}, as_span(r));
    }
    return out;
  }

 private:
  void check(const Vec& r) const {
    if (r.size() != m_) throw DimensionError("endpoint: parameter dimension mismatch");
  }

  std::vector<sym::Expr> comps_;
  std::vector<sym::Expr> d_;
  int m_ = 0;
};

/// Minimise T subject to q' = f0(q; r) + u f1(q; r), |u| <= 1, q(0) = a(r),
/// q(T) = b(r), with reference control u1 / singular / u2.
struct ParametricProblem {
  std::string name;
  AffineSystem sys;
  EndpointMap a;
  EndpointMap b;
  int u1 = -1;
  int u2 = -1;

  int n() const noexcept { return sys.n(); }
  int m() const noexcept { return sys.m(); }

  void validate() const {
    if (a.dim() != n() || b.dim() != n()) throw ValidationError("endpoint dimension differs from the state dimension");
    if ((u1 != -1 && u1 != 1) || (u2 != -1 && u2 != 1)) throw ValidationError("bang values must be -1 or +1");
  }
};

/// Shooting unknowns z = (omega, tau1, tau2, T).
struct ExtremalStructure {
  Vec omega;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double T = 0.0;

  bool admissible() const noexcept { return 0.0 < tau1 && tau1 < tau2 && tau2 < T; }

  void require_admissible() const {
    if (!admissible()) {
      throw StructureBroken("switching times must satisfy 0 < tau1 < tau2 < T (got " + std::to_string(tau1) + ", " +
                            std::to_string(tau2) + ", " + std::to_string(T) + ")");
    }
  }

  Vec stacked() const {
    Vec z(omega.size() + 3);
    z << omega, tau1, tau2, T;
    return z;
  }

  static ExtremalStructure from_stacked(const Vec& z) {
    const auto n = z.size() - 3;
    return {z.head(n), z[n], z[n + 1], z[n + 2]};
  }
};

struct AssembleOptions {
  FlowOptions flow;
  double tol_sglc = kDefaultTolSglc;
};

/// The concatenation bang(u1) on [0, tau1], singular on [tau1, tau2],
/// bang(u2) on [tau2, T].
class BsBExtremal {
 public:
  BsBExtremal(ExtremalStructure z, Vec r, std::array<HamiltonianField, 3> fields, std::array<FlowSegment, 3> arcs)
      : z_(std::move(z)), r_(std::move(r)), fields_(std::move(fields)), arcs_(std::move(arcs)) {}

  const ExtremalStructure& structure() const noexcept { return z_; }
  const Vec& r() const noexcept { return r_; }
  int dim() const noexcept { return arcs_[0].dim(); }
  const FlowSegment& arc(int k) const { return arcs_.at(static_cast<std::size_t>(k)); }
  const HamiltonianField& hamiltonian(int k) const { return fields_.at(static_cast<std::size_t>(k)); }
  const AffineSystem& system() const noexcept { return fields_[1].system(); }
  int u1() const noexcept { return fields_[0].control(); }
  int u2() const noexcept { return fields_[2].control(); }

  double arc_begin(int k) const { return arc(k).t_begin(); }
  double arc_end(int k) const { return arc(k).t_end(); }

  /// Arc owning time t; junction times belong to the singular arc.
  int arc_index(double t) const {
    if (t < z_.tau1) return 0;
    if (t <= z_.tau2) return 1;
    return 2;
  }

  CotangentPoint point(double t) const { return arc(arc_index(t)).at(t); }

  double control(double t) const {
    const int k = arc_index(t);
    return fields_[static_cast<std::size_t>(k)].control_at(arc(k).at(t));
  }

  CotangentPoint initial_point() const { return arcs_[0].start(); }
  CotangentPoint junction1() const { return arcs_[0].end(); }
  CotangentPoint junction2() const { return arcs_[1].end(); }
  CotangentPoint final_point() const { return arcs_[2].end(); }

 private:
  ExtremalStructure z_;
  Vec r_;
  std::array<HamiltonianField, 3> fields_;
  std::array<FlowSegment, 3> arcs_;
};

/// Integrates the three arcs from (omega, a(r)). The third arc lasts T - tau2.
inline BsBExtremal assemble(const ParametricProblem& prob, const Vec& r, const ExtremalStructure& z,
                            const AssembleOptions& opts = {}) {
  prob.validate();
  z.require_admissible();
  if (z.omega.size() != prob.n()) throw DimensionError("assemble: covector dimension mismatch");
  if (r.size() != prob.m()) throw DimensionError("assemble: parameter dimension mismatch");

  std::array<HamiltonianField, 3> h{HamiltonianField::bang(prob.sys, prob.u1, r),
                                    HamiltonianField::singular(prob.sys, r, opts.tol_sglc),
                                    HamiltonianField::bang(prob.sys, prob.u2, r)};
  CotangentPoint l0{z.omega, prob.a.value(r)};
  FlowSegment s1 = integrate(h[0], l0, 0.0, z.tau1, opts.flow);
  FlowSegment s2 = integrate(h[1], s1.end(), z.tau1, z.tau2, opts.flow);
  FlowSegment s3 = integrate(h[2], s2.end(), z.tau2, z.T, opts.flow);
  return BsBExtremal(z, r, std::move(h), {std::move(s1), std::move(s2), std::move(s3)});
}

}  // namespace bsb
