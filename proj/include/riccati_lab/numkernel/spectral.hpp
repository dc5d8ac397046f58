#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "riccati_lab/common.hpp"
#include "riccati_lab/tolerances.hpp"

namespace riccati_lab {

/// Eigendecomposition A = V diag(lambda) V^{-1}.
struct SpectralData {
  ComplexVector eigenvalues;
  ComplexMatrix basis;
  ComplexMatrix inverse_basis;
  double condition = 1.0;  // 2-norm condition number of the basis

  static SpectralData compute(const Matrix& a) {
    require(a.rows() == a.cols(), "spectral data needs a square matrix");
    require(a.allFinite(), "spectral data: non-finite entries");
    SpectralData out;
    const Eigen::Index n = a.rows();
    if (n == 0) return out;
    if ((a - a.transpose()).norm() <= 1e-14 * std::max(1.0, a.norm())) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
      out.eigenvalues = es.eigenvalues().cast<std::complex<double>>();
      out.basis = es.eigenvectors().cast<std::complex<double>>();
      out.inverse_basis = out.basis.adjoint();
      out.condition = 1.0;
      return out;
    }
    Eigen::EigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    out.eigenvalues = es.eigenvalues();
    out.basis = es.eigenvectors();
    Eigen::JacobiSVD<ComplexMatrix> svd(out.basis);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    out.condition = smin > 0.0 ? sv(0) / smin : INFINITY;
    if (!std::isfinite(out.condition)) return out;
    out.inverse_basis = out.basis.partialPivLu().inverse();
    return out;
  }

  double reconstruction_error(const Matrix& a) const {
    if (a.size() == 0) return 0.0;
    ComplexMatrix r = basis * eigenvalues.asDiagonal() * inverse_basis;
    return (r - a.cast<std::complex<double>>()).norm();
  }

  double abscissa() const {
    return eigenvalues.size() == 0 ? -INFINITY : eigenvalues.real().maxCoeff();
  }

  /// Re(V diag(f(lambda)) V^{-1} X).
  template <class F>
  Matrix apply_function(F&& f, const Matrix& x) const {
    ComplexVector d(eigenvalues.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = f(eigenvalues(i));
    ComplexMatrix y = inverse_basis * x.cast<std::complex<double>>();
    return (basis * (d.asDiagonal() * y)).real();
  }
};

inline Matrix expm(const Matrix& m) {
  if (m.size() == 0) return m;
  return m.exp();
}

/// The semigroup t -> e^{At}. Diagonal generators are exponentiated entrywise,
/// generators with a well-conditioned eigenbasis through SpectralData, and the
/// rest through Pade scaling-and-squaring.
class Semigroup {
 public:
  enum class Route { diagonal, spectral, pade };

  Semigroup() = default;
  explicit Semigroup(Matrix a) : a_(std::move(a)) {
    require(a_.rows() == a_.cols(), "generator must be square");
    require(a_.allFinite(), "generator has non-finite entries");
    Matrix off = a_;
    off.diagonal().setZero();
    if (off.isZero(0.0)) {
      route_ = Route::diagonal;
      return;
    }
    spectral_ = SpectralData::compute(a_);
    const double scale = std::max(1.0, a_.norm());
    if (spectral_.condition <= tol::kSpectralExpConditionMax &&
        spectral_.reconstruction_error(a_) <= 1e-12 * scale)
      route_ = Route::spectral;
    else
      route_ = Route::pade;
  }

  const Matrix& generator() const { return a_; }
  Route route() const { return route_; }
  Eigen::Index dim() const { return a_.rows(); }

  Matrix apply(double t, const Matrix& x) const {
    require(t >= 0.0, "semigroup time must be non-negative");
    require(std::isfinite(t), "semigroup time must be finite");
    require(x.rows() == a_.rows(), "semigroup apply: dimension mismatch");
    require(x.allFinite(), "semigroup apply: non-finite entries");
    switch (route_) {
      case Route::diagonal: {
        Vector d = (a_.diagonal() * t).array().exp();
        return d.asDiagonal() * x;
      }
      case Route::spectral:
        return spectral_.apply_function([t](std::complex<double> l) { return std::exp(l * t); }, x);
      case Route::pade:
        return expm(a_ * t) * x;
    }
    return x;
  }

  Matrix at(double t) const { return apply(t, Matrix::Identity(a_.rows(), a_.rows())); }

 private:
  Matrix a_;
  Route route_ = Route::diagonal;
  SpectralData spectral_;
};

/// e^{At} X.
inline Matrix matrix_exponential_apply(const Matrix& a, double t, const Matrix& x) {
  require(t >= 0.0, "matrix_exponential_apply: t < 0");
  return Semigroup(a).apply(t, x);
}

/// [e^{hA}, phi_1(hA), ..., phi_k(hA)] with phi_j(z) = int_0^1 e^{(1-s)z} s^{j-1}/(j-1)! ds,
/// read off the top block row of an augmented exponential.
inline std::vector<Matrix> phi_functions(const Matrix& a, double h, int k) {
  const Eigen::Index n = a.rows();
  Matrix big = Matrix::Zero((k + 1) * n, (k + 1) * n);
  big.topLeftCorner(n, n) = a * h;
  for (int j = 0; j < k; ++j) big.block(j * n, (j + 1) * n, n, n).setIdentity();
  const Matrix e = expm(big);
  std::vector<Matrix> out;
  out.reserve(k + 1);
  for (int j = 0; j <= k; ++j) out.push_back(e.block(0, j * n, n, n));
  return out;
}

/// Fractional powers (-A)^alpha for stable, diagonalizable A.
class FractionalPowers {
 public:
  explicit FractionalPowers(const Matrix& a) : n_(a.rows()) {
    require(a.rows() == a.cols(), "fractional power needs a square matrix");
    if (n_ == 0) return;
    spectral_ = SpectralData::compute(a);
    if (spectral_.abscissa() >= 0.0)
      throw PreconditionError("fractional power: eigenvalue with nonnegative real part");
    if (!(spectral_.condition <= tol::kBasisConditionMax))
      throw NumericalError("fractional power: eigenvector basis too ill-conditioned (defective A)");
    if (spectral_.reconstruction_error(a) > tol::kSpectralReconstruction * std::max(1.0, a.norm()))
      throw NumericalError("fractional power: eigendecomposition does not reconstruct A");
  }

  Matrix power(double alpha) const {
    if (n_ == 0) return Matrix(0, 0);
    if (alpha == 0.0) return Matrix::Identity(n_, n_);
    return spectral_.apply_function(
        [alpha](std::complex<double> l) { return std::pow(-l, alpha); }, Matrix::Identity(n_, n_));
  }

  const SpectralData& spectral() const { return spectral_; }

 private:
  Eigen::Index n_;
  SpectralData spectral_;
};

/// (-A)^alpha, principal branch; alpha in (-1, 1).
inline Matrix fractional_power(const Matrix& a, double alpha) {
  require(alpha > -1.0 && alpha < 1.0, "fractional power exponent must lie in (-1, 1)");
  require(a.allFinite(), "fractional power: non-finite entries");
  return FractionalPowers(a).power(alpha);
}

}  // namespace riccati_lab
