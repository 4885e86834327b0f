#pragma once

// Vector fields on R^n with exact derivative data, Lie brackets, and their
// lifts to Hamiltonians on the cotangent bundle T*R^n = (R^n)* x R^n.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bsb/errors.hpp"
#include "bsb/linalg.hpp"
#include "bsb/symexpr.hpp"

namespace bsb {

inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

enum class JetOrder { first, second };

/// Pointwise derivative data of a vector field f(q; r).
///
/// `hessian(i, j*n + k)` is d2 f_i / dq_j dq_k and `dr_jacobian(i, l*n + j)` is
/// d2 f_i / dq_j dr_l. The second-order members are empty for JetOrder::first.
struct FieldJet {
  Vec value;
  Mat jacobian;
  Mat hessian;
  Mat dr;
  Mat dr_jacobian;
};

/// A parameter-dependent vector field with symbolic components.
///
/// All derivatives are built symbolically on construction and compiled to
/// tapes, so copies are cheap and evaluation is reentrant.
class VectorField {
 public:
  VectorField() = default;

  VectorField(std::vector<sym::Expr> components, int n_param) {
    auto d = std::make_shared<Data>();
    d->n = static_cast<int>(components.size());
    d->m = n_param;
    const int n = d->n;
    const int m = d->m;
    if (n == 0) throw DimensionError("vector field needs at least one component");
    for (const auto& c : components) {
      if (!c.valid()) throw DimensionError("vector field component is empty");
      if (sym::max_index(c, sym::Variable::Kind::state) >= n ||
          sym::max_index(c, sym::Variable::Kind::param) >= m) {
        throw DimensionError("vector field component references an undeclared variable");
      }
    }
    d->comps = std::move(components);
    d->jac.resize(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) d->jac[idx(i * n + j)] = sym::differentiate(d->comps[idx(i)], sym::Variable::x(j));
    }

    std::vector<sym::Expr> first;
    first.insert(first.end(), d->comps.begin(), d->comps.end());
    first.insert(first.end(), d->jac.begin(), d->jac.end());
    d->tape1 = sym::Tape(first, n, m);

    // Second order: upper triangle of each Hessian, parameter gradient, and
    // mixed state/parameter derivatives of the Jacobian.
    std::vector<sym::Expr> second = first;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = j; k < n; ++k) {
          second.push_back(sym::differentiate(d->jac[idx(i * n + j)], sym::Variable::x(k)));
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < m; ++l) second.push_back(sym::differentiate(d->comps[idx(i)], sym::Variable::r(l)));
    }
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < m; ++l) {
        for (int j = 0; j < n; ++j) {
          second.push_back(sym::differentiate(d->jac[idx(i * n + j)], sym::Variable::r(l)));
        }
      }
    }
    d->tape2 = sym::Tape(second, n, m);
    data_ = std::move(d);
  }

  /// Parses one expression per component.
  static VectorField parse(const std::vector<std::string>& components, int n_state, int n_param) {
    if (static_cast<int>(components.size()) != n_state) {
      throw DimensionError("expected " + std::to_string(n_state) + " components, got " +
                           std::to_string(components.size()));
    }
    std::vector<sym::Expr> exprs;
    exprs.reserve(components.size());
    for (const auto& c : components) exprs.push_back(sym::parse(c, n_state, n_param));
    return VectorField(std::move(exprs), n_param);
  }

  bool valid() const noexcept { return data_ != nullptr; }
  int dim() const noexcept { return data_->n; }
  int n_param() const noexcept { return data_->m; }
  const std::vector<sym::Expr>& components() const noexcept { return data_->comps; }
  const sym::Expr& component(int i) const { return data_->comps[idx(i)]; }
  /// Symbolic d f_i / d q_j.
  const sym::Expr& jacobian_entry(int i, int j) const { return data_->jac[idx(i * dim() + j)]; }

  Vec value(const Vec& q, const Vec& r) const {
    check(q, r);
    const int n = dim();
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = sym::evaluate(data_->comps[idx(i)], as_span(q), as_span(r));
    return out;
  }

  Mat jacobian(const Vec& q, const Vec& r) const { return jet(q, r, JetOrder::first).jacobian; }

  FieldJet jet(const Vec& q, const Vec& r, JetOrder order) const {
    check(q, r);
    const int n = dim();
    const int m = n_param();
    const sym::Tape& tape = order == JetOrder::first ? data_->tape1 : data_->tape2;
    thread_local std::vector<double> buf;
    buf.resize(tape.n_outputs());
    tape.evaluate(as_span(q), as_span(r), buf);

    FieldJet out;
    std::size_t k = 0;
    out.value.resize(n);
    for (int i = 0; i < n; ++i) out.value[i] = buf[k++];
    out.jacobian.resize(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) out.jacobian(i, j) = buf[k++];
    }
    if (order == JetOrder::first) return out;

    out.hessian.resize(n, n * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int l = j; l < n; ++l) {
          const double v = buf[k++];
          out.hessian(i, j * n + l) = v;
          out.hessian(i, l * n + j) = v;
        }
      }
    }
    out.dr.resize(n, m);
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < m; ++l) out.dr(i, l) = buf[k++];
    }
    out.dr_jacobian.resize(n, n * m);
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < m; ++l) {
        for (int j = 0; j < n; ++j) out.dr_jacobian(i, l * n + j) = buf[k++];
      }
    }
    return out;
  }

 private:
  struct Data {
    int n = 0;
    int m = 0;
    std::vector<sym::Expr> comps;
    std::vector<sym::Expr> jac;
    sym::Tape tape1;
    sym::Tape tape2;
  };

  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

  void check(const Vec& q, const Vec& r) const {
    if (q.size() != dim() || r.size() != n_param()) throw DimensionError("vector field: argument dimension mismatch");
  }

  std::shared_ptr<const Data> data_;
};

/// [f, g](q) = Dg(q) f(q) - Df(q) g(q), built symbolically.
inline VectorField lie_bracket(const VectorField& f, const VectorField& g) {
  if (f.dim() != g.dim() || f.n_param() != g.n_param()) throw DimensionError("lie_bracket: dimension mismatch");
  const int n = f.dim();
  std::vector<sym::Expr> comps;
  comps.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    sym::Expr acc = sym::lit(0.0);
    for (int j = 0; j < n; ++j) {
      acc = acc + g.jacobian_entry(i, j) * f.component(j);
      acc = acc - f.jacobian_entry(i, j) * g.component(j);
    }
    comps.push_back(acc);
  }
  return VectorField(std::move(comps), f.n_param());
}

/// f01 = [f0, f1], f001 = [f0, f01], f101 = [f1, f01].
struct BracketSet {
  VectorField f01;
  VectorField f001;
  VectorField f101;
};

inline BracketSet iterated_brackets(const VectorField& f0, const VectorField& f1) {
  BracketSet b;
  b.f01 = lie_bracket(f0, f1);
  b.f001 = lie_bracket(f0, b.f01);
  b.f101 = lie_bracket(f1, b.f01);
  return b;
}

/// Single-input control-affine dynamics q' = f0(q; r) + u f1(q; r) together
/// with the brackets the singular-arc machinery needs.
class AffineSystem {
 public:
  AffineSystem() = default;
  AffineSystem(VectorField f0, VectorField f1) : f0_(std::move(f0)), f1_(std::move(f1)) {
    if (f0_.dim() != f1_.dim() || f0_.n_param() != f1_.n_param()) {
      throw DimensionError("affine system: f0 and f1 dimensions differ");
    }
    brackets_ = iterated_brackets(f0_, f1_);
  }

  int n() const noexcept { return f0_.dim(); }
  int m() const noexcept { return f0_.n_param(); }
  const VectorField& f0() const noexcept { return f0_; }
  const VectorField& f1() const noexcept { return f1_; }
  const VectorField& f01() const noexcept { return brackets_.f01; }
  const VectorField& f001() const noexcept { return brackets_.f001; }
  const VectorField& f101() const noexcept { return brackets_.f101; }
  const BracketSet& brackets() const noexcept { return brackets_; }

 private:
  VectorField f0_;
  VectorField f1_;
  BracketSet brackets_;
};

/// A point l = (p, q) of T*R^n: covector p and state q.
struct CotangentPoint {
  Vec p;
  Vec q;

  int dim() const noexcept { return static_cast<int>(q.size()); }

  /// (p, q) stacked as a 2n column.
  Vec stacked() const {
    Vec v(p.size() + q.size());
    v << p, q;
    return v;
  }
  static CotangentPoint from_stacked(const Vec& v) {
    const auto n = v.size() / 2;
    return {v.head(n), v.tail(n)};
  }
};

/// <p, f(q)>.
inline double lifted_value(const VectorField& f, const CotangentPoint& l, const Vec& r) {
  return l.p.dot(f.value(l.q, r));
}

/// The Hamiltonian F(p, q) = <p, f(q)> obtained by lifting a vector field.
class LiftedHamiltonian {
 public:
  explicit LiftedHamiltonian(VectorField f) : f_(std::move(f)) {}

  const VectorField& field() const noexcept { return f_; }
  double value(const CotangentPoint& l, const Vec& r) const { return lifted_value(f_, l, r); }

  /// (-p Df(q), f(q)) stacked; the q-part is f(q) itself.
  Vec vector_field(const CotangentPoint& l, const Vec& r) const {
    FieldJet j = f_.jet(l.q, r, JetOrder::first);
    Vec out(2 * f_.dim());
    out << -(j.jacobian.transpose() * l.p), j.value;
    return out;
  }

  /// dF(l) as a row over (dp, dq).
  Vec differential(const CotangentPoint& l, const Vec& r) const {
    FieldJet j = f_.jet(l.q, r, JetOrder::first);
    Vec out(2 * f_.dim());
    out << j.value, j.jacobian.transpose() * l.p;
    return out;
  }

 private:
  VectorField f_;
};

/// {F, G}(l) = dG(l) . F->(l), evaluated numerically from the two lifts.
inline double poisson(const LiftedHamiltonian& F, const LiftedHamiltonian& G, const CotangentPoint& l, const Vec& r) {
  if (F.field().dim() != G.field().dim() || l.dim() != F.field().dim()) throw DimensionError("poisson: dimension mismatch");
  return G.differential(l, r).dot(F.vector_field(l, r));
}

inline constexpr double kDefaultTolSglc = 1e-9;

/// Singular feedback v = -F001 / F101 at l.
inline double singular_control(const CotangentPoint& l, const AffineSystem& sys, const Vec& r,
                               double tol_sglc = kDefaultTolSglc) {
  const double f101 = lifted_value(sys.f101(), l, r);
  if (!(f101 > tol_sglc)) throw SGLCViolated("F101 = " + std::to_string(f101) + " is not above the SGLC tolerance");
  return -lifted_value(sys.f001(), l, r) / f101;
}

/// Sigma = {F1 = 0}.
inline bool on_sigma(const CotangentPoint& l, const AffineSystem& sys, const Vec& r, double tol) {
  return std::abs(lifted_value(sys.f1(), l, r)) <= tol;
}

/// S = {F1 = F01 = 0, F101 > 0}.
inline bool on_S(const CotangentPoint& l, const AffineSystem& sys, const Vec& r, double tol) {
  return on_sigma(l, sys, r, tol) && std::abs(lifted_value(sys.f01(), l, r)) <= tol &&
         lifted_value(sys.f101(), l, r) > tol;
}

}  // namespace bsb
