#pragma once

// Dormand-Prince 5(4) with FSAL, Hairer's initial step heuristic and the
// fourth-order continuous extension. Integrates forward or backward in time.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bsb/errors.hpp"
#include "bsb/linalg.hpp"

namespace bsb {

struct OdeOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double h_max = 0.0;  // 0: unbounded
  long max_steps = 1'000'000;
};

/// Piecewise quartic interpolant over the accepted steps.
class DenseSolution {
 public:
  DenseSolution() = default;
  DenseSolution(double t0, Vec y0) : t0_(t0), t1_(t0), y0_(y0), y1_(std::move(y0)) {}

  double t_begin() const noexcept { return t0_; }
  double t_end() const noexcept { return t1_; }
  const Vec& front() const noexcept { return y0_; }
  const Vec& back() const noexcept { return y1_; }
  Eigen::Index dim() const noexcept { return y0_.size(); }
  std::size_t steps() const noexcept { return starts_.size(); }
  long rejected() const noexcept { return rejected_; }
  long evaluations() const noexcept { return evaluations_; }
  /// Sum over accepted steps of the max-abs local error estimate.
  double error_estimate() const noexcept { return error_; }
  /// Step boundaries t0 = s_0, s_1, ..., t1.
  std::vector<double> grid() const {
    std::vector<double> g(starts_);
    g.push_back(t1_);
    return g;
  }

  Vec at(double t) const {
    if (starts_.empty()) return y0_;
    const double dir = t1_ >= t0_ ? 1.0 : -1.0;
    if (dir * (t - t0_) < -span_slack() || dir * (t - t1_) > span_slack()) {
      throw DomainError("dense output queried outside [" + std::to_string(t0_) + ", " + std::to_string(t1_) + "]");
    }
    if (t == t1_) return y1_;
    if (t == t0_) return y0_;
    // Last step whose start is not beyond t.
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t,
                               [dir](double a, double b) { return dir * a < dir * b; });
    std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    const double theta = (t - starts_[k]) / steps_[k];
    const double theta1 = 1.0 - theta;
    const Mat& c = coeffs_[k];
    return c.col(0) + theta * (c.col(1) + theta1 * (c.col(2) + theta * (c.col(3) + theta1 * c.col(4))));
  }

 private:
  template <class Rhs>
  friend DenseSolution dopri5(Rhs&& f, double t0, const Vec& y0, double t1, const OdeOptions& opts);

  double span_slack() const { return 1e-12 * std::max(1.0, std::max(std::abs(t0_), std::abs(t1_))); }

  double t0_ = 0.0;
  double t1_ = 0.0;
  Vec y0_;
  Vec y1_;
  std::vector<double> starts_;
  std::vector<double> steps_;
  std::vector<Mat> coeffs_;
  double error_ = 0.0;
  long rejected_ = 0;
  long evaluations_ = 0;
};

namespace dp {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

/// Integrates y' = f(t, y) from t0 to t1. `f` has signature
/// `void(double t, const Vec& y, Vec& dy)`.
template <class Rhs>
DenseSolution dopri5(Rhs&& f, double t0, const Vec& y0, double t1, const OdeOptions& opts) {
  DenseSolution sol(t0, y0);
  sol.t1_ = t1;
  if (t0 == t1) return sol;
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw DomainError("dopri5: non-finite time bounds");

  const auto n = y0.size();
  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  const double h_max = opts.h_max > 0 ? std::min(opts.h_max, span) : span;
  const double atol = opts.abs_tol;
  const double rtol = opts.rel_tol;

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y1(n), err(n);
  Vec y = y0;
  long evals = 0;
  auto call = [&](double t, const Vec& in, Vec& out) {
    f(t, in, out);
    ++evals;
  };
  auto scaled_norm = [&](const Vec& v, const Vec& ya, const Vec& yb) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = atol + rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      s += (v[i] / sk) * (v[i] / sk);
    }
    return std::sqrt(s / static_cast<double>(n));
  };

  double t = t0;
  call(t, y, k1);

  // Initial step size.
  double h;
  {
    const double dnf = scaled_norm(k1, y, y);
    const double dny = scaled_norm(y, y, y);
    h = (dnf <= 1e-5 || dny <= 1e-5) ? 1e-6 : 0.01 * dny / dnf;
    h = std::min(h, h_max);
    ytmp = y + dir * h * k1;
    call(t + dir * h, ytmp, k2);
    const double der2 = scaled_norm(k2 - k1, y, y) / h;
    const double der12 = std::max(der2, dnf);
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, h_max});
  }

  const double h_min = 1e-14 * std::max(1.0, std::max(std::abs(t0), std::abs(t1)));
  bool last_rejected = false;
  long steps = 0;
  while (dir * (t1 - t) > 0) {
    if (++steps > opts.max_steps) throw StepFailure("dopri5: step budget exhausted at t = " + std::to_string(t));
    if (h < h_min) throw StepFailure("dopri5: step size underflow at t = " + std::to_string(t));
    bool final_step = false;
    if (h >= std::abs(t1 - t) * (1.0 - 1e-13)) {
      h = std::abs(t1 - t);
      final_step = true;
    }
    const double hs = dir * h;

    ytmp = y + hs * (dp::a21 * k1);
    call(t + dp::c2 * hs, ytmp, k2);
    ytmp = y + hs * (dp::a31 * k1 + dp::a32 * k2);
    call(t + dp::c3 * hs, ytmp, k3);
    ytmp = y + hs * (dp::a41 * k1 + dp::a42 * k2 + dp::a43 * k3);
    call(t + dp::c4 * hs, ytmp, k4);
    ytmp = y + hs * (dp::a51 * k1 + dp::a52 * k2 + dp::a53 * k3 + dp::a54 * k4);
    call(t + dp::c5 * hs, ytmp, k5);
    ytmp = y + hs * (dp::a61 * k1 + dp::a62 * k2 + dp::a63 * k3 + dp::a64 * k4 + dp::a65 * k5);
    const double t_new = final_step ? t1 : t + hs;
    call(t + hs, ytmp, k6);
    y1 = y + hs * (dp::a71 * k1 + dp::a73 * k3 + dp::a74 * k4 + dp::a75 * k5 + dp::a76 * k6);
    call(t_new, y1, k7);
    err = hs * (dp::e1 * k1 + dp::e3 * k3 + dp::e4 * k4 + dp::e5 * k5 + dp::e6 * k6 + dp::e7 * k7);

    const double e = scaled_norm(err, y, y1);
    if (!std::isfinite(e)) {
      h *= 0.2;
      last_rejected = true;
      ++sol.rejected_;
      continue;
    }
    double fac = std::clamp(0.9 * std::pow(std::max(e, 1e-300), -0.2), 0.2, 5.0);
    if (e <= 1.0) {
      if (last_rejected) fac = std::min(fac, 1.0);
      Mat c(n, 5);
      const Vec ydiff = y1 - y;
      const Vec bspl = hs * k1 - ydiff;
      c.col(0) = y;
      c.col(1) = ydiff;
      c.col(2) = bspl;
      c.col(3) = ydiff - hs * k7 - bspl;
      c.col(4) = hs * (dp::d1 * k1 + dp::d3 * k3 + dp::d4 * k4 + dp::d5 * k5 + dp::d6 * k6 + dp::d7 * k7);
      sol.starts_.push_back(t);
      sol.steps_.push_back(hs);
      sol.coeffs_.push_back(std::move(c));
      sol.error_ += max_abs(err);
      t = t_new;
      y = y1;
      k1 = k7;
      last_rejected = false;
      if (final_step) break;
      h = std::min(h * fac, h_max);
    } else {
      h *= std::min(fac, 1.0);
      last_rejected = true;
      ++sol.rejected_;
    }
  }
  sol.y1_ = y;
  sol.evaluations_ = evals;
  return sol;
}

}  // namespace bsb
