#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "riccati_lab/common.hpp"
#include "riccati_lab/numkernel.hpp"
#include "riccati_lab/random.hpp"

namespace riccati_lab {

/// Constants of the regularity hypotheses attached to a model.
struct AssumptionParams {
  double gamma = 0.5;    // singular decay exponent of F, in (0,1)
  double N = 1.0;        // singular decay constant
  double epsilon = 0.25; // fractional domain exponent
  double q = 1.5;        // kernel summability exponent, in (1,2)
  double omega = 1.0;    // stability rate
  double eta = 1.0;      // exponential decay rate of F
  double M = 1.0;        // stability constant, >= 1
  double delta = 0.0;    // weight rate, < min(omega, eta)

  double q_conjugate() const { return q / (q - 1.0); }

  void validate() const {
    require(gamma > 0.0 && gamma < 1.0, "assumption: gamma must lie in (0,1)");
    require(N > 0.0, "assumption: N must be > 0");
    require(epsilon > 0.0, "assumption: epsilon must be > 0");
    require(q > 1.0 && q < 2.0, "assumption: q must lie in (1,2)");
    require(omega > 0.0, "assumption: omega must be > 0");
    require(eta > 0.0, "assumption: eta must be > 0");
    require(M >= 1.0, "assumption: M must be >= 1");
    require(delta >= 0.0 && delta < std::min(omega, eta), "assumption: delta must lie in [0, min(omega, eta))");
  }

  friend bool operator==(const AssumptionParams&, const AssumptionParams&) = default;
};

/// Finite-dimensional LQ problem: y' = Ay + Bu, cost int ||Ry||^2 + ||u||^2.
struct LqModel {
  std::string model_id;
  Matrix A;  // n x n
  Matrix B;  // n x m
  Matrix R;  // p x n
  std::optional<double> horizon;  // nullopt: infinite horizon
  std::vector<int> parabolic_block;  // 0-based state indices
  AssumptionParams assumption;
  std::map<std::string, std::string> metadata;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return R.rows(); }
  bool finite_horizon() const { return horizon.has_value(); }
  double T() const {
    require(horizon.has_value(), "horizon mismatch: model has infinite horizon");
    return *horizon;
  }

  Matrix BBt() const { return B * B.transpose(); }
  Matrix RtR() const { return R.transpose() * R; }

  /// Diagonal projector onto the parabolic coordinates.
  Matrix parabolic_projector() const {
    Matrix pi = Matrix::Zero(n(), n());
    for (int i : parabolic_block) pi(i, i) = 1.0;
    return pi;
  }

  void validate() const {
    require(n() > 0, "model: empty state space");
    require(A.cols() == n(), "model: A must be square");
    require(B.rows() == n(), "model: B must have n rows");
    require(R.cols() == n(), "model: R must have n columns");
    require(A.allFinite() && B.allFinite(), "model: non-finite entries in A or B");
    for (Eigen::Index i = 0; i < R.rows(); ++i)
      require(!R.row(i).array().isNaN().all() || R.cols() == 0, "model: R has a row of NaNs");
    require(R.allFinite(), "model: non-finite entries in R");
    if (horizon) require(*horizon > 0.0 && std::isfinite(*horizon), "model: horizon must be positive and finite");
    for (int i : parabolic_block) require(i >= 0 && i < n(), "model: parabolic_block index out of range");
    Eigen::JacobiSVD<Matrix> svd(A);
    const auto& sv = svd.singularValues();
    require(sv(sv.size() - 1) > 1e-12 * sv(0), "model: A must be invertible");
    if (!horizon) {
      const double abscissa = spectral_abscissa(A);
      require(abscissa < 0.0, "model: infinite horizon requires exponentially stable A");
      require(abscissa <= -assumption.omega * (1.0 - 1e-9), "model: stability margin omega not respected");
    }
    assumption.validate();
  }

  LqModel with_horizon(std::optional<double> h) const {
    LqModel copy = *this;
    copy.horizon = h;
    return copy;
  }
};

namespace detail {

inline std::string format_param(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Choose epsilon and q so the kernel t^{-(gamma+eps)} stays q-integrable.
inline void fill_regularity(AssumptionParams& a) {
  a.epsilon = (1.0 - a.gamma) / 4.0;
  const double q_max = 1.0 / (a.gamma + a.epsilon);
  a.q = std::clamp(0.5 * (1.0 + q_max), 1.05, 1.95);
}

}  // namespace detail

/// Heat equation with boundary control, diagonalized: A = diag(-(k pi)^2),
/// b_k = sqrt(2) (k pi)^{2 beta}. The grading of b_k against the spectrum
/// makes ||B' e^{A't}|| ~ N t^{-(beta + 1/4)} until the truncation at n.
inline LqModel heat_boundary_surrogate(int n, double beta, std::optional<double> horizon = 1.0) {
  require(n >= 1, "heat surrogate: n >= 1");
  require(beta >= 0.0, "heat surrogate: beta >= 0");
  require(beta < 1.0, "heat surrogate: beta >= 1 gives no singular exponent below 1");
  LqModel m;
  m.model_id = "heat-n" + std::to_string(n) + "-beta" + detail::format_param(beta);
  m.A = Matrix::Zero(n, n);
  m.B = Matrix::Zero(n, 1);
  for (int k = 1; k <= n; ++k) {
    const double lam = std::pow(k * std::numbers::pi, 2);
    m.A(k - 1, k - 1) = -lam;
    m.B(k - 1, 0) = std::sqrt(2.0) * std::pow(k * std::numbers::pi, 2.0 * beta);
  }
  m.R = Matrix::Identity(n, n);
  m.horizon = horizon;
  for (int i = 0; i < n; ++i) m.parabolic_block.push_back(i);
  auto& a = m.assumption;
  a.gamma = std::clamp(beta + 0.25, 1e-3, 1.0 - 1e-3);
  // Riemann-sum prediction of the constant in ||F(t)|| ~ N t^{-gamma}
  a.N = std::sqrt(std::tgamma(2.0 * beta + 0.5) / (std::numbers::pi * std::pow(2.0, 2.0 * beta + 0.5)));
  detail::fill_regularity(a);
  a.omega = std::pow(std::numbers::pi, 2);
  a.eta = a.omega;
  a.M = 1.0;
  a.delta = 0.5 * a.omega;
  m.metadata["kind"] = "heat";
  m.metadata["n"] = std::to_string(n);
  m.metadata["beta"] = detail::format_param(beta);
  return m;
}

/// Coupled hyperbolic/parabolic system
///   A = [[S - damping I, kappa C], [-kappa C', D]],
/// S skew-symmetric, D = diag(-(k pi)^2). The symmetric part of A is
/// diag(-damping I, D), so A is stable for any kappa.
inline LqModel composite_surrogate(int n_h, int n_p, double kappa, double damping, std::uint64_t seed = 1,
                                   std::optional<double> horizon = 1.0, int m_controls = 1,
                                   double beta = 0.25) {
  require(n_h >= 1 && n_p >= 1, "composite surrogate: n_h, n_p >= 1");
  require(kappa >= 0.0, "composite surrogate: kappa >= 0");
  require(damping > 0.0, "composite surrogate: damping > 0");
  require(m_controls >= 1, "composite surrogate: at least one control");
  const int n = n_h + n_p;
  constexpr int kMaxResamples = 16;
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    Rng rng(sub_seed(seed, static_cast<std::uint64_t>(attempt)));
    Matrix g = rng.gaussian_matrix(n_h, n_h);
    Matrix s = (g - g.transpose()) / std::sqrt(2.0 * n_h);
    Matrix c = rng.gaussian_matrix(n_h, n_p) / std::sqrt(static_cast<double>(n_p));
    LqModel m;
    m.A = Matrix::Zero(n, n);
    m.A.topLeftCorner(n_h, n_h) = s - damping * Matrix::Identity(n_h, n_h);
    m.A.topRightCorner(n_h, n_p) = kappa * c;
    m.A.bottomLeftCorner(n_p, n_h) = -kappa * c.transpose();
    for (int k = 1; k <= n_p; ++k) m.A(n_h + k - 1, n_h + k - 1) = -std::pow(k * std::numbers::pi, 2);
    m.B = Matrix::Zero(n, m_controls);
    m.B.topRows(n_h) = rng.gaussian_matrix(n_h, m_controls) / std::sqrt(static_cast<double>(n_h));
    for (int k = 1; k <= n_p; ++k)
      for (int j = 0; j < m_controls; ++j)
        m.B(n_h + k - 1, j) = std::sqrt(2.0) * std::pow(k * std::numbers::pi, 2.0 * beta) / (j + 1);
    m.R = Matrix::Identity(n, n);
    m.horizon = horizon;
    for (int i = n_h; i < n; ++i) m.parabolic_block.push_back(i);
    const double abscissa = spectral_abscissa(m.A);
    if (!(abscissa < 0.0)) continue;

    m.model_id = "composite-h" + std::to_string(n_h) + "-p" + std::to_string(n_p) + "-k" +
                 detail::format_param(kappa) + "-d" + detail::format_param(damping) + "-s" + std::to_string(seed);
    auto& a = m.assumption;
    a.gamma = std::clamp(beta + 0.25, 1e-3, 1.0 - 1e-3);
    a.N = 1.0;
    detail::fill_regularity(a);
    a.omega = -abscissa;
    a.eta = a.omega;
    a.M = std::max(1.0, SpectralData::compute(m.A).condition);
    a.delta = 0.5 * a.omega;
    m.metadata["kind"] = "composite";
    m.metadata["kappa"] = detail::format_param(kappa);
    m.metadata["damping"] = detail::format_param(damping);
    m.metadata["seed"] = std::to_string(seed);
    m.metadata["spectrum_block_diagonal"] = kappa == 0.0 ? "true" : "false";
    return m;
  }
  throw NumericalError("composite surrogate: no stable generator after resampling");
}

/// Seeded dense model; A is shifted so that max Re lambda(A) = -margin.
inline LqModel random_stable(int n, int m, int p, std::uint64_t seed, double margin,
                             std::optional<double> horizon = std::nullopt) {
  require(n >= 1, "random_stable: n >= 1");
  require(m >= 0 && p >= 0, "random_stable: m, p >= 0");
  require(margin > 0.0, "random_stable: margin > 0");
  Rng rng(seed);
  LqModel model;
  Matrix a = rng.gaussian_matrix(n, n) / std::sqrt(static_cast<double>(n));
  a -= (spectral_abscissa(a) + margin) * Matrix::Identity(n, n);
  model.A = a;
  auto unit_columns = [](Matrix x) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double nn = x.col(j).norm();
      if (nn > 0.0) x.col(j) /= nn;
    }
    return x;
  };
  model.B = unit_columns(rng.gaussian_matrix(n, m));
  model.R = unit_columns(rng.gaussian_matrix(p, n));
  model.horizon = horizon;
  for (int i = 0; i < n; ++i) model.parabolic_block.push_back(i);
  model.model_id = "random-n" + std::to_string(n) + "-m" + std::to_string(m) + "-p" + std::to_string(p) + "-s" +
                   std::to_string(seed);
  auto& as = model.assumption;
  as.gamma = 0.5;
  as.N = std::max(1e-12, spectral_norm(model.B));
  as.epsilon = 0.25;
  as.q = 1.5;
  as.omega = -spectral_abscissa(model.A);
  as.eta = as.omega;
  as.M = std::max(1.0, SpectralData::compute(model.A).condition);
  as.delta = 0.5 * as.omega;
  model.metadata["kind"] = "random";
  model.metadata["seed"] = std::to_string(seed);
  model.metadata["margin"] = detail::format_param(margin);
  return model;
}

/// One-dimensional model y' = a y + b u with observation r.
inline LqModel scalar_model(double a = -1.0, double b = 1.0, double r = 1.0, std::optional<double> horizon = 1.0) {
  LqModel m;
  m.model_id = "scalar-a" + detail::format_param(a) + "-b" + detail::format_param(b) + "-r" + detail::format_param(r);
  m.A = Matrix::Constant(1, 1, a);
  m.B = Matrix::Constant(1, 1, b);
  m.R = Matrix::Constant(1, 1, r);
  m.horizon = horizon;
  auto& as = m.assumption;
  as.omega = as.eta = a < 0.0 ? -a : 1.0;
  as.delta = 0.5 * as.omega;
  as.M = 1.0;
  m.metadata["kind"] = "scalar";
  return m;
}

/// Models every verification sweep runs on.
inline std::vector<LqModel> shipped_models(std::optional<double> horizon = 1.0) {
  return {scalar_model(-1.0, 1.0, 1.0, horizon), heat_boundary_surrogate(8, 0.25, horizon),
          composite_surrogate(4, 4, 0.5, 0.1, 1, horizon), random_stable(6, 2, 3, 7, 0.5, horizon)};
}

/// Evaluates B' e^{A't} and its structural split F + G, where F is the
/// response to the control's action on the parabolic coordinates and G the
/// remainder: F(t) = (e^{At} Pi B)', G(t) = (e^{At} (I - Pi) B)'.
class AdjointKernel {
 public:
  explicit AdjointKernel(const LqModel& model)
      : semigroup_(model.A),
        b_(model.B),
        b_parabolic_(model.parabolic_projector() * model.B),
        b_rest_(model.B - b_parabolic_) {
    require(model.n() > 0, "adjoint kernel: empty model");
  }

  Matrix full(double t) const { return semigroup_.apply(t, b_).transpose(); }

  std::pair<Matrix, Matrix> split(double t) const {
    require(t > 0.0, "decompose_adjoint_kernel: t must be > 0");
    return {semigroup_.apply(t, b_parabolic_).transpose(), semigroup_.apply(t, b_rest_).transpose()};
  }

  const Semigroup& semigroup() const { return semigroup_; }

 private:
  Semigroup semigroup_;
  Matrix b_, b_parabolic_, b_rest_;
};

/// (F_t, G_t) with F_t + G_t = B' e^{A't}.
inline std::pair<Matrix, Matrix> decompose_adjoint_kernel(const LqModel& model, double t) {
  require(model.n() > 0, "decompose_adjoint_kernel: empty model");
  return AdjointKernel(model).split(t);
}

}  // namespace riccati_lab
