#pragma once

#include <Eigen/Dense>

namespace bsb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Canonical symplectic matrix J = [[0, -I], [I, 0]] on (p, q) coordinates,
/// so that the Hamiltonian vector field of H is J * grad H.
inline Mat symplectic_matrix(int n) {
  Mat j = Mat::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = -Mat::Identity(n, n);
  j.bottomLeftCorner(n, n) = Mat::Identity(n, n);
  return j;
}

inline double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace bsb
