#pragma once

#include <complex>

#include "riccati_lab/common.hpp"
#include "riccati_lab/tolerances.hpp"

namespace riccati_lab {

/// Solves A'X + XA + Q = 0 for stable A.
///
/// With the complex Schur form A = U T U^H the equation becomes
/// T^H Y + Y T + C = 0 for Y = U^H X U, C = U^H Q U, which is solved one
/// column at a time by forward substitution against the lower triangular
/// T^H + t_jj I. Diagonal entries conj(t_ii) + t_jj never vanish when A is
/// stable.
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require(a.rows() == a.cols(), "lyapunov: A must be square");
  require(q.rows() == a.rows() && q.cols() == a.cols(), "lyapunov: Q dimension mismatch");
  require(a.allFinite() && q.allFinite(), "lyapunov: non-finite entries");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);

  Eigen::ComplexSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success) throw NumericalError("lyapunov: Schur decomposition failed");
  const ComplexMatrix& t = schur.matrixT();
  const ComplexMatrix& u = schur.matrixU();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(t(i, i).real() < 0.0))
      throw NumericalError("lyapunov: A is not stable; equation may be unsolvable or indefinite");

  const ComplexMatrix c = u.adjoint() * q.cast<std::complex<double>>() * u;
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  const ComplexMatrix th = t.adjoint();
  ComplexVector rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    rhs = -c.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= y.col(k) * t(k, j);
    // (T^H + t_jj I) y_j = rhs, lower triangular
    for (Eigen::Index i = 0; i < n; ++i) {
      std::complex<double> s = rhs(i);
      for (Eigen::Index k = 0; k < i; ++k) s -= th(i, k) * y(k, j);
      y(i, j) = s / (th(i, i) + t(j, j));
    }
  }
  Matrix x = (u * y * u.adjoint()).real();
  if ((q - q.transpose()).norm() <= 1e-14 * std::max(1.0, q.norm())) x = symmetrize(x);
  return x;
}

/// ||A'X + XA + Q|| / (||A|| ||X|| + ||Q||).
inline double lyapunov_relative_residual(const Matrix& a, const Matrix& x, const Matrix& q) {
  const double scale = a.norm() * x.norm() + q.norm();
  const double r = (a.transpose() * x + x * a + q).norm();
  return scale > 0.0 ? r / scale : r;
}

}  // namespace riccati_lab
