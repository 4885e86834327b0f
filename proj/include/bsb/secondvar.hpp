#pragma once

// Extended second variation along the singular arc.
//
// Along [tau1, tau2] the admissible variations are (eps0, eps1, w) with
//   zeta' = w g(t),  zeta(tau1) = eps0 f0(x1) + eps1 f1(x1),  zeta(tau2) = 0,
// where g(t) = S(t)^{-1} f01(xi(t)) is f01 pulled back to x1 by the reference
// flow S(t). The quadratic form is
//   J = 1/2 int (R w^2 + 2 w c(t) zeta) dt,  R = F101(lambda),
//   c(t) = -mu(t)^T Df01(xi(t)) S(t).
// Coercivity is decided twice: by a Jacobi-type test on the linear
// Hamiltonian flow of the accessory problem, and by brute-force
// discretisation of the constrained quadratic form.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "bsb/errors.hpp"
#include "bsb/extremal.hpp"
#include "bsb/flows.hpp"
#include "bsb/geometry.hpp"
#include "bsb/linalg.hpp"
#include "bsb/ode.hpp"

namespace bsb {

struct SecondVariationOptions {
  FlowOptions flow;
  double tol_sglc = kDefaultTolSglc;
  // Hamiltonian test
  double kernel_tol = 1e-7;
  double exclusion_frac = 1e-4;
  int kernel_samples = 1024;
  // quadratic-program test
  int qp_intervals = 128;
  double eig_tol = 1e-7;  // relative to max R
  double richardson_tol = 0.1;
  // controllability
  int rank_samples = 64;
  double rank_tol = 1e-8;
};

/// Reference data on the singular arc, dense in t.
class SingularArcData {
 public:
  struct Sample {
    double t = 0.0;
    CotangentPoint l;
    Mat S;           // state transition of the reference flow from tau1
    double R = 0.0;  // F101 along the arc
    double v = 0.0;  // singular control
    Vec g;           // S^{-1} f01(xi)
    Vec c;           // row functional, stored as a column
    Vec g_integral;  // int_{tau1}^t g
  };

  SingularArcData(const AffineSystem& sys, Vec r, const CotangentPoint& l1, double tau1, double tau2,
                  const SecondVariationOptions& opts = {})
      : sys_(sys), r_(std::move(r)), tau1_(tau1), tau2_(tau2), tol_sglc_(opts.tol_sglc) {
    const int n = sys_.n();
    if (l1.dim() != n) throw DimensionError("singular arc data: point dimension mismatch");
    if (!(tau2 >= tau1)) throw StructureBroken("singular arc data: tau2 < tau1");
    n_ = n;
    x1_ = l1.q;
    f0_x1_ = sys_.f0().value(x1_, r_);
    f1_x1_ = sys_.f1().value(x1_, r_);
    // Quadratic form the frame lifts of F0, F1 put on span{f0, f1} at x1:
    // (a, b) -> -<p, Df_a f_b>, symmetric on S since F01 = 0 there.
    {
      const Mat d0 = sys_.f0().jacobian(x1_, r_);
      const Mat d1 = sys_.f1().jacobian(x1_, r_);
      junction_form_.resize(2, 2);
      junction_form_(0, 0) = -l1.p.dot(d0 * f0_x1_);
      junction_form_(1, 1) = -l1.p.dot(d1 * f1_x1_);
      junction_form_(0, 1) = junction_form_(1, 0) = -0.5 * l1.p.dot(d0 * f1_x1_ + d1 * f0_x1_);
    }

    // Layout: [lambda | S | Q | int g], Q = mu^T D^2(flow) pulled back to x1.
    Vec y0 = Vec::Zero(2 * n + 2 * n * n + n);
    y0.head(2 * n) = l1.stacked();
    y0.segment(2 * n, n * n) = Mat::Identity(n, n).reshaped();
    const HamiltonianField fs = HamiltonianField::singular(sys_, r_, tol_sglc_);
    auto rhs = [this, &fs, n](double, const Vec& y, Vec& dy) {
      const Vec lq = y.head(2 * n);
      const CotangentPoint l = CotangentPoint::from_stacked(lq);
      const double v = singular_control(l, sys_, r_, tol_sglc_);
      const FieldJet j0 = sys_.f0().jet(l.q, r_, JetOrder::second);
      const FieldJet j1 = sys_.f1().jet(l.q, r_, JetOrder::second);
      const Mat a = j0.jacobian + v * j1.jacobian;
      const Mat s = y.segment(2 * n, n * n).reshaped(n, n);
      // Hessian of <p, f0 + v f1> in q, with v frozen along the reference.
      const Mat hess = (l.p.transpose() * (j0.hessian + v * j1.hessian)).reshaped(n, n);
      dy.resize(y.size());
      dy.head(2 * n) = fs.jet(lq, JetOrder::first).vector_field();
      dy.segment(2 * n, n * n) = (a * s).reshaped();
      dy.segment(2 * n + n * n, n * n) = (s.transpose() * hess * s).reshaped();
      dy.tail(n) = s.partialPivLu().solve(sys_.f01().value(l.q, r_));
    };
    sol_ = dopri5(rhs, tau1, y0, tau2, opts.flow);
  }

  int dim() const noexcept { return n_; }
  double tau1() const noexcept { return tau1_; }
  double tau2() const noexcept { return tau2_; }
  double length() const noexcept { return tau2_ - tau1_; }
  const Vec& x1() const noexcept { return x1_; }
  const Vec& f0_at_x1() const noexcept { return f0_x1_; }
  const Vec& f1_at_x1() const noexcept { return f1_x1_; }
  const Mat& junction_form() const noexcept { return junction_form_; }
  const AffineSystem& system() const noexcept { return sys_; }
  const Vec& r() const noexcept { return r_; }
  const DenseSolution& solution() const noexcept { return sol_; }

  Sample at(double t) const {
    const int n = n_;
    const Vec y = sol_.at(t);
    Sample s;
    s.t = t;
    s.l = CotangentPoint::from_stacked(y.head(2 * n));
    s.S = y.segment(2 * n, n * n).reshaped(n, n);
    s.g_integral = y.tail(n);
    s.R = lifted_value(sys_.f101(), s.l, r_);
    if (!(s.R > tol_sglc_)) throw SGLCViolated("F101 = " + std::to_string(s.R) + " on the singular arc");
    s.v = -lifted_value(sys_.f001(), s.l, r_) / s.R;
    const FieldJet j01 = sys_.f01().jet(s.l.q, r_, JetOrder::first);
    s.g = s.S.partialPivLu().solve(j01.value);
    // x |-> <omega, g_t(x)> differentiated at x1: the Df01 part plus the
    // curvature of the reference flow itself.
    const Mat q2 = y.segment(2 * n + n * n, n * n).reshaped(n, n);
    s.c = -(s.S.transpose() * (j01.jacobian.transpose() * s.l.p)) + q2 * s.g;
    return s;
  }

 private:
  AffineSystem sys_;
  Vec r_;
  double tau1_;
  double tau2_;
  double tol_sglc_;
  int n_ = 0;
  Vec x1_;
  Vec f0_x1_;
  Vec f1_x1_;
  Mat junction_form_;
  DenseSolution sol_;
};

inline SingularArcData build_singular_arc_data(const BsBExtremal& ext, const SecondVariationOptions& opts = {}) {
  const auto& z = ext.structure();
  return SingularArcData(ext.system(), ext.r(), ext.junction1(), z.tau1, z.tau2, opts);
}

enum class CoercivityVerdict { coercive, not_coercive, marginal };

inline const char* to_string(CoercivityVerdict v) {
  switch (v) {
    case CoercivityVerdict::coercive: return "coercive";
    case CoercivityVerdict::not_coercive: return "not_coercive";
    case CoercivityVerdict::marginal: return "marginal";
  }
  return "?";
}

/// Basis of the initial Lagrangian subspace
///   L = {f0(x1), f1(x1)}^perp x span{f0(x1), f1(x1)}
/// as the columns of a 2n x n matrix in (omega, dx) coordinates.
struct LagrangianFrame {
  Mat basis;

  static LagrangianFrame at_junction(const Vec& f0, const Vec& f1) {
    const auto n = f0.size();
    Mat span(n, 2);
    span << f0, f1;
    Eigen::JacobiSVD<Mat> svd(span.transpose(), Eigen::ComputeFullV);
    const double smax = svd.singularValues()(0);
    if (n < 2 || !(svd.singularValues()(1) > 1e-12 * smax)) {
      throw RankDeficientConstraints("f0 and f1 are parallel at the junction");
    }
    LagrangianFrame f;
    f.basis = Mat::Zero(2 * n, n);
    for (Eigen::Index i = 0; i < n - 2; ++i) f.basis.col(i).head(n) = svd.matrixV().col(2 + i);
    f.basis.col(n - 2).tail(n) = f0;
    f.basis.col(n - 1).tail(n) = f1;
    return f;
  }

  /// max |sigma(b_i, b_j)| with sigma((w, x), (w', x')) = w.x' - w'.x.
  double lagrangian_defect() const {
    const auto n = basis.cols();
    const Mat w = basis.topRows(n);
    const Mat x = basis.bottomRows(n);
    const Mat s = w.transpose() * x - x.transpose() * w;
    return s.cwiseAbs().maxCoeff();
  }
};

struct HamiltonianCoercivity {
  CoercivityVerdict verdict = CoercivityVerdict::coercive;
  double min_ratio = std::numeric_limits<double>::infinity();  // min sigma_min / sigma_max of the dx block
  double t_min_ratio = 0.0;
  std::optional<double> critical_time;  // first sign change of det, or the marginal time
  int sign_changes = 0;
};

/// Flows the frame by the accessory Hamiltonian
///   K(t, omega, dx) = -(<omega, g(t)> + c(t) dx)^2 / (2 R(t))
/// and watches the dx block X(t) on (tau1 + delta0, tau2].
inline HamiltonianCoercivity coercivity_hamiltonian(const SingularArcData& data, const LagrangianFrame& frame,
                                                    const SecondVariationOptions& opts = {}) {
  HamiltonianCoercivity out;
  const int n = data.dim();
  const double len = data.length();
  if (len <= 0.0) return out;

  auto rhs = [&data, n](double t, const Vec& y, Vec& dy) {
    const SingularArcData::Sample s = data.at(t);
    const Mat yy = y.reshaped(2 * n, n);
    Vec row(2 * n);
    row << s.g, s.c;
    Vec dir(2 * n);
    dir << s.c, -s.g;
    dy = ((dir / s.R) * (row.transpose() * yy)).reshaped();
  };
  const Vec y0 = frame.basis.reshaped();
  const DenseSolution sol = dopri5(rhs, data.tau1(), y0, data.tau2(), opts.flow);

  const double t_start = data.tau1() + opts.exclusion_frac * len;
  std::vector<double> times;
  for (int k = 0; k <= opts.kernel_samples; ++k) {
    times.push_back(t_start + (data.tau2() - t_start) * k / opts.kernel_samples);
  }
  for (double t : sol.grid()) {
    if (t > t_start && t < data.tau2()) times.push_back(t);
  }
  std::sort(times.begin(), times.end());

  double prev_det = 0.0;
  double prev_t = t_start;
  std::optional<double> marginal_t;
  for (double t : times) {
    const Mat x = sol.at(t).reshaped(2 * n, n).bottomRows(n);
    Eigen::JacobiSVD<Mat> svd(x);
    const auto& sv = svd.singularValues();
    const double ratio = sv(0) > 0 ? sv(n - 1) / sv(0) : 0.0;
    if (ratio < out.min_ratio) {
      out.min_ratio = ratio;
      out.t_min_ratio = t;
    }
    if (ratio <= opts.kernel_tol && !marginal_t) marginal_t = t;
    const double det = x.determinant();
    if (prev_det != 0.0 && det != 0.0 && (det > 0) != (prev_det > 0)) {
      if (out.sign_changes == 0) out.critical_time = 0.5 * (prev_t + t);
      ++out.sign_changes;
    }
    if (det != 0.0) {
      prev_det = det;
      prev_t = t;
    }
  }
  if (out.sign_changes > 0) {
    out.verdict = CoercivityVerdict::not_coercive;
  } else if (marginal_t) {
    out.verdict = CoercivityVerdict::marginal;
    out.critical_time = marginal_t;
  }
  return out;
}

inline HamiltonianCoercivity coercivity_hamiltonian(const SingularArcData& data,
                                                    const SecondVariationOptions& opts = {}) {
  return coercivity_hamiltonian(data, LagrangianFrame::at_junction(data.f0_at_x1(), data.f1_at_x1()), opts);
}

struct QuadraticProgram {
  Mat hessian;      // of J in (eps0, eps1, w_1..w_N)
  Mat constraints;  // n x (N + 2), columns f0, f1, G_1..G_N
  Vec metric;       // diagonal: 1, 1, h, ..., h
  double max_R = 0.0;
};

/// Discretises w as piecewise constant on `intervals` equal pieces and
/// assembles J exactly up to Gauss-Legendre quadrature of the dense data.
inline QuadraticProgram assemble_second_variation_qp(const SingularArcData& data, int intervals) {
  using Gauss = boost::math::quadrature::gauss<double, 8>;
  const int n = data.dim();
  const int N = intervals;
  if (N < 1) throw ValidationError("quadratic program needs at least one interval");
  const double h = data.length() / N;

  // Gauss-Legendre nodes on [-1, 1]; boost stores the non-negative half.
  std::vector<double> nodes;
  std::vector<double> weights;
  for (std::size_t i = 0; i < Gauss::abscissa().size(); ++i) {
    const double x = Gauss::abscissa()[i];
    const double w = Gauss::weights()[i];
    nodes.push_back(x);
    weights.push_back(w);
    if (x != 0.0) {
      nodes.push_back(-x);
      weights.push_back(w);
    }
  }

  QuadraticProgram qp;
  qp.hessian = Mat::Zero(N + 2, N + 2);
  qp.constraints.resize(n, N + 2);
  qp.constraints.col(0) = data.f0_at_x1();
  qp.constraints.col(1) = data.f1_at_x1();
  qp.metric = Vec::Constant(N + 2, h);
  qp.metric[0] = 1.0;
  qp.metric[1] = 1.0;

  Vec g_prev = data.at(data.tau1()).g_integral;
  Mat rows = Mat::Zero(N, N + 2);
  for (int k = 0; k < N; ++k) {
    const double a = data.tau1() + k * h;
    const double b = k + 1 == N ? data.tau2() : a + h;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double r_int = 0.0;
    double partial = 0.0;
    Vec c_int = Vec::Zero(n);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const SingularArcData::Sample s = data.at(mid + half * nodes[i]);
      const double w = half * weights[i];
      r_int += w * s.R;
      c_int += w * s.c;
      partial += w * s.c.dot(s.g_integral - g_prev);
      qp.max_R = std::max(qp.max_R, s.R);
    }
    const Vec g_next = data.at(b).g_integral;
    qp.constraints.col(2 + k) = g_next - g_prev;
    qp.hessian(2 + k, 2 + k) = r_int;
    rows(k, 0) = c_int.dot(data.f0_at_x1());
    rows(k, 1) = c_int.dot(data.f1_at_x1());
    for (int j = 0; j < k; ++j) rows(k, 2 + j) = c_int.dot(qp.constraints.col(2 + j));
    rows(k, 2 + k) = partial;
    g_prev = g_next;
  }
  qp.hessian.topLeftCorner(2, 2) = data.junction_form();
  qp.hessian.bottomRows(N) += rows;
  qp.hessian.rightCols(N) += rows.transpose();
  return qp;
}

/// Smallest eigenvalue of the reduced pencil (Z^T H Z, Z^T M Z), Z spanning
/// the kernel of the constraints.
inline double reduced_min_eigenvalue(const QuadraticProgram& qp) {
  const auto n = qp.constraints.rows();
  const auto d = qp.constraints.cols();
  Eigen::JacobiSVD<Mat> svd(qp.constraints, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-10 * smax && smax > 0) ++rank;
  }
  if (rank < n) {
    throw RankDeficientConstraints("endpoint constraints have rank " + std::to_string(rank) + " < " +
                                   std::to_string(n));
  }
  if (d == n) return std::numeric_limits<double>::infinity();
  const Mat z = svd.matrixV().rightCols(d - n);
  const Mat hr = z.transpose() * qp.hessian * z;
  const Mat mr = z.transpose() * qp.metric.asDiagonal() * z;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(0.5 * (hr + hr.transpose()), 0.5 * (mr + mr.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw RankDeficientConstraints("reduced eigenproblem failed");
  return es.eigenvalues()(0);
}

struct QpCoercivity {
  double min_eig = 0.0;          // at N intervals
  double min_eig_refined = 0.0;  // at 2N intervals
  double tolerance = 0.0;        // eig_tol * max R
  bool richardson_stable = false;
  CoercivityVerdict verdict = CoercivityVerdict::marginal;
};

inline QpCoercivity coercivity_qp(const SingularArcData& data, const SecondVariationOptions& opts = {}) {
  const QuadraticProgram coarse = assemble_second_variation_qp(data, opts.qp_intervals);
  const QuadraticProgram fine = assemble_second_variation_qp(data, 2 * opts.qp_intervals);
  QpCoercivity out;
  out.min_eig = reduced_min_eigenvalue(coarse);
  out.min_eig_refined = reduced_min_eigenvalue(fine);
  out.tolerance = opts.eig_tol * std::max(coarse.max_R, fine.max_R);
  out.richardson_stable =
      std::abs(out.min_eig - out.min_eig_refined) <= opts.richardson_tol * std::abs(out.min_eig_refined);
  if (out.min_eig > out.tolerance && out.min_eig_refined > out.tolerance && out.richardson_stable) {
    out.verdict = CoercivityVerdict::coercive;
  } else if (out.min_eig_refined < -out.tolerance) {
    out.verdict = CoercivityVerdict::not_coercive;
  }
  return out;
}

struct ControllabilityRank {
  int rank = 0;
  double smallest_sv = 0.0;  // n-th singular value
  double largest_sv = 0.0;
};

/// Numerical rank of a column set, thresholded relative to the largest
/// singular value.
inline ControllabilityRank controllability_rank(const Mat& columns, double rank_tol) {
  ControllabilityRank out;
  if (columns.size() == 0) return out;
  Eigen::JacobiSVD<Mat> svd(columns);
  const auto& sv = svd.singularValues();
  out.largest_sv = sv(0);
  out.smallest_sv = columns.rows() <= sv.size() ? sv(columns.rows() - 1) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rank_tol * out.largest_sv) ++out.rank;
  }
  return out;
}

/// Rank of [f0(x1), f1(x1), g(t_1), ..., g(t_K)].
inline ControllabilityRank controllability_rank(const SingularArcData& data, const SecondVariationOptions& opts = {}) {
  const int n = data.dim();
  const int k = std::max(opts.rank_samples, 1);
  Mat cols(n, 2 + k);
  cols.col(0) = data.f0_at_x1();
  cols.col(1) = data.f1_at_x1();
  for (int i = 0; i < k; ++i) {
    const double t = k == 1 ? data.tau1() : data.tau1() + data.length() * i / (k - 1);
    cols.col(2 + i) = data.at(t).g;
  }
  return controllability_rank(cols, opts.rank_tol);
}

}  // namespace bsb
