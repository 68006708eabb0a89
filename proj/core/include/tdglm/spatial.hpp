#pragma once

#include <Eigen/Core>
#include <stdexcept>

namespace tdglm {

struct NotPositiveDefiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Site geometry: planar coordinates and the Euclidean distance matrix.
struct SpatialDomain {
  explicit SpatialDomain(Eigen::MatrixXd coords_);

  Eigen::Index size() const { return coords.rows(); }

  Eigen::MatrixXd coords;  // L x 2
  Eigen::MatrixXd dist;    // L x L, symmetric, zero diagonal
};

/// Matern kernel parameters: process variance, decay, smoothness.
struct MaternKernel {
  double sigma2;
  double phi_s;
  double nu;
};

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& coords);

/// Normalized Matern correlation (2^(1-nu)/Gamma(nu)) (phi_s d)^nu K_nu(phi_s d)
/// with unit diagonal. nu = 0.5 reduces to exp(-phi_s d) exactly.
Eigen::MatrixXd matern_correlation(const Eigen::MatrixXd& dist, double phi_s,
                                   double nu);

/// Cached Cholesky factorization of an SPD matrix with its log-determinant
/// and the jitter that was needed to factor it.
class CholState {
 public:
  CholState() = default;
  CholState(Eigen::MatrixXd lower, double log_det, double jitter);

  const Eigen::MatrixXd& lower() const { return lower_; }
  double log_det() const { return log_det_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return lower_.rows(); }

  /// A^{-1} v via two triangular solves.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  /// v' A^{-1} v = ||L^{-1} v||^2.
  double quad_form(const Eigen::VectorXd& v) const;
  /// Solve L' x = v (used to draw N(0, A^{-1}) noise when A is a precision).
  Eigen::VectorXd solve_lower_transpose(const Eigen::VectorXd& v) const;
  /// Dense A^{-1}.
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::MatrixXd lower_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

/// Factor cov (+ jitter I if needed). The jitter ladder starts at base_jitter
/// and escalates x10 up to 1e-4 * mean(diag); throws NotPositiveDefiniteError
/// once exhausted.
CholState chol_factor(const Eigen::MatrixXd& cov, double base_jitter = 1e-10);

}  // namespace tdglm
