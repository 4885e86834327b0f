#pragma once

// Numerical certificates for an assembled bang-singular-bang extremal.
//
// Pointwise conditions are sampled on a per-arc grid and the worst sample is
// refined by a bracketed Brent search on the dense output.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "bsb/errors.hpp"
#include "bsb/extremal.hpp"
#include "bsb/geometry.hpp"
#include "bsb/linalg.hpp"
#include "bsb/secondvar.hpp"

namespace bsb {

struct CertifyOptions {
  int grid = 512;                // samples per arc
  double collar_frac = 1e-3;     // junction collar as a fraction of the arc length
  double residual_tol = 1e-6;    // bound on |H - 1| and on the switching residuals
  SecondVariationOptions second_variation;
};

struct CertificationReport {
  double margin_bang1 = 0.0;
  double margin_bang2 = 0.0;
  double margin_sglc = 0.0;
  double junction1 = 0.0;
  double junction2 = 0.0;
  double sup_v = 0.0;
  double normality_drift = 0.0;
  Vec switching_residuals = Vec::Zero(3);  // F1, F01, F0 - 1 at the first junction
  double singular_f1_max = 0.0;            // max |F1| on the singular arc
  double singular_f01_max = 0.0;           // max |F01| on the singular arc
  int controllability_rank = 0;
  double controllability_smallest_sv = 0.0;
  HamiltonianCoercivity hamiltonian_test;
  QpCoercivity qp_test;
  bool coercive = false;
  double injectivity_margin = 0.0;
  std::string second_variation_error;  // set when the singular-arc data could not be built
  int n = 0;
  std::vector<std::string> failures;

  bool pass() const noexcept { return failures.empty(); }
};

namespace detail {

struct Extremum {
  double t = 0.0;
  double value = 0.0;
};

/// Minimum of f over [a, b]: uniform grid, then Brent between the neighbours
/// of the best sample.
inline Extremum grid_minimum(const std::function<double(double)>& f, double a, double b, int grid) {
  Extremum best{a, f(a)};
  if (b <= a) return best;
  const int m = std::max(grid, 2);
  std::vector<double> ts(static_cast<std::size_t>(m));
  std::size_t arg = 0;
  for (int i = 0; i < m; ++i) {
    const double t = i + 1 == m ? b : a + (b - a) * i / (m - 1);
    ts[static_cast<std::size_t>(i)] = t;
    const double v = f(t);
    if (v < best.value || i == 0) {
      best = {t, v};
      arg = static_cast<std::size_t>(i);
    }
  }
  const double lo = ts[arg == 0 ? 0 : arg - 1];
  const double hi = ts[std::min(arg + 1, ts.size() - 1)];
  if (hi > lo) {
    auto [t, v] = boost::math::tools::brent_find_minima(f, lo, hi, 40);
    if (v < best.value) best = {t, v};
  }
  return best;
}

}  // namespace detail

/// Bang regularity, junction regularity, SGLC, normality, singular feedback
/// bound and injectivity. Second-variation fields are left untouched.
inline CertificationReport pointwise_certificates(const BsBExtremal& ext, const CertifyOptions& opts = {}) {
  CertificationReport rep;
  const AffineSystem& sys = ext.system();
  const Vec& r = ext.r();
  const auto& z = ext.structure();
  const int u1 = ext.u1();
  const int u2 = ext.u2();
  rep.n = ext.dim();

  auto lifted = [&](const VectorField& f, double t) { return lifted_value(f, ext.point(t), r); };

  const double collar1 = opts.collar_frac * z.tau1;
  const double collar2 = opts.collar_frac * (z.T - z.tau2);
  rep.margin_bang1 =
      detail::grid_minimum([&](double t) { return u1 * lifted(sys.f1(), t); }, 0.0, z.tau1 - collar1, opts.grid).value;
  rep.margin_bang2 =
      detail::grid_minimum([&](double t) { return u2 * lifted(sys.f1(), t); }, z.tau2 + collar2, z.T, opts.grid).value;
  rep.margin_sglc = detail::grid_minimum([&](double t) { return lifted(sys.f101(), t); }, z.tau1, z.tau2, opts.grid).value;

  const CotangentPoint l1 = ext.junction1();
  const CotangentPoint l2 = ext.junction2();
  rep.junction1 = u1 * lifted_value(sys.f001(), l1, r) + lifted_value(sys.f101(), l1, r);
  rep.junction2 = u2 * lifted_value(sys.f001(), l2, r) + lifted_value(sys.f101(), l2, r);
  rep.switching_residuals << lifted_value(sys.f1(), l1, r), lifted_value(sys.f01(), l1, r),
      lifted_value(sys.f0(), l1, r) - 1.0;

  if (rep.margin_sglc > opts.second_variation.tol_sglc) {
    rep.sup_v = -detail::grid_minimum(
                     [&](double t) { return -std::abs(singular_control(ext.point(t), sys, r, 0.0)); }, z.tau1, z.tau2,
                     opts.grid)
                     .value;
  } else {
    rep.sup_v = std::numeric_limits<double>::infinity();
  }

  // Samples shared by the normality, singular-arc and injectivity checks.
  std::vector<double> times;
  std::vector<Vec> states;
  for (int k = 0; k < 3; ++k) {
    const double a = ext.arc_begin(k);
    const double b = ext.arc_end(k);
    const FlowSegment& seg = ext.arc(k);
    const HamiltonianField& h = ext.hamiltonian(k);
    for (int i = 0; i < opts.grid; ++i) {
      const double t = i + 1 == opts.grid ? b : a + (b - a) * i / std::max(opts.grid - 1, 1);
      const CotangentPoint l = seg.at(t);
      rep.normality_drift = std::max(rep.normality_drift, std::abs(h.value(l) - 1.0));
      if (k == 1) {
        rep.singular_f1_max = std::max(rep.singular_f1_max, std::abs(lifted_value(sys.f1(), l, r)));
        rep.singular_f01_max = std::max(rep.singular_f01_max, std::abs(lifted_value(sys.f01(), l, r)));
      }
      times.push_back(t);
      states.push_back(l.q);
    }
  }

  const double collar = opts.collar_frac * z.T;
  rep.injectivity_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = i + 1; j < times.size(); ++j) {
      if (std::abs(times[j] - times[i]) <= collar) continue;
      rep.injectivity_margin = std::min(rep.injectivity_margin, (states[i] - states[j]).norm());
    }
  }
  return rep;
}

inline void collect_failures(CertificationReport& rep, const CertifyOptions& opts) {
  auto& f = rep.failures;
  f.clear();
  if (!(rep.margin_bang1 > 0)) f.push_back("bang regularity on the first arc");
  if (!(rep.margin_bang2 > 0)) f.push_back("bang regularity on the last arc");
  if (!(rep.margin_sglc > opts.second_variation.tol_sglc)) f.push_back("SGLC margin");
  if (!(rep.junction1 > 0)) f.push_back("first junction");
  if (!(rep.junction2 > 0)) f.push_back("second junction");
  if (!(rep.sup_v < 1.0)) f.push_back("singular control saturates");
  if (!(rep.normality_drift <= opts.residual_tol)) f.push_back("normality drift");
  if (!(max_abs(rep.switching_residuals) <= opts.residual_tol)) f.push_back("switching residuals");
  if (rep.controllability_rank != rep.n) f.push_back("controllability rank");
  if (!rep.coercive) f.push_back("coercivity");
  if (!(rep.injectivity_margin > 0)) f.push_back("injectivity");
}

/// Full certificate, including the second-variation tests on the singular arc.
inline CertificationReport certify(const BsBExtremal& ext, const CertifyOptions& opts = {}) {
  CertificationReport rep = pointwise_certificates(ext, opts);
  if (rep.margin_sglc > opts.second_variation.tol_sglc) {
    try {
      const SingularArcData data = build_singular_arc_data(ext, opts.second_variation);
      const ControllabilityRank cr = controllability_rank(data, opts.second_variation);
      rep.controllability_rank = cr.rank;
      rep.controllability_smallest_sv = cr.smallest_sv;
      rep.hamiltonian_test = coercivity_hamiltonian(data, opts.second_variation);
      rep.qp_test = coercivity_qp(data, opts.second_variation);
      rep.coercive = rep.hamiltonian_test.verdict == CoercivityVerdict::coercive &&
                     rep.qp_test.verdict == CoercivityVerdict::coercive;
    } catch (const Error& e) {
      rep.coercive = false;
      rep.second_variation_error = e.what();
    }
  }
  collect_failures(rep, opts);
  return rep;
}

}  // namespace bsb
