#pragma once

#include <Eigen/Core>

#include "tdglm/rng.hpp"

namespace tdglm {

/// Index parameter of the compound Poisson-gamma family, restricted to the
/// mixed-mass regime 1 < xi < 2.
class TweedieIndex {
 public:
  explicit TweedieIndex(double xi);

  double value() const { return xi_; }
  /// Series exponent alpha = (2 - xi) / (1 - xi), negative on (1,2).
  double alpha() const { return (2.0 - xi_) / (1.0 - xi_); }

 private:
  double xi_;
};

struct TweedieParams {
  TweedieParams(double mu, double phi, TweedieIndex xi);

  double mu;
  double phi;
  TweedieIndex xi;
};

enum class DensityMethod { Series, Saddlepoint };

/// Unit deviance d(y | mu, xi) >= 0, zero iff y == mu. Uses the convention
/// 0^(2-xi) = 0 so that d(0 | mu) = 2 mu^(2-xi) / (2-xi).
double deviance(double y, double mu, TweedieIndex xi);

/// Log density of the compound Poisson-gamma distribution. Exact closed form
/// at y = 0 for both methods. Series sums the normalizer a(y, phi) in log
/// space around its dominant index; Saddlepoint uses the deviance form with
/// b(y | phi, xi) = (2 pi phi y^xi)^(-1/2).
double log_density(double y, const TweedieParams& params, DensityMethod method);

/// Sum of per-observation log densities in index order. mu and phi are
/// per-observation vectors; the series path shares its lgamma term tables
/// across observations, which is much cheaper than N log_density calls.
double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& phi, TweedieIndex xi,
                      DensityMethod method);

/// Per-observation derivative of the exact (series) log density with respect
/// to log phi. For y > 0 this is -(1-alpha) E[j] - (y theta - kappa)/phi with
/// E[j] the mean series index under the normalized terms; for y = 0 it is
/// kappa/phi. Shares the series term tables across observations.
Eigen::VectorXd dlog_density_dlogphi(const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& mu,
                                     const Eigen::VectorXd& phi,
                                     TweedieIndex xi);

/// Constructive draw: n ~ Poisson(mu^(2-xi) / (phi (2-xi))), then the sum of
/// n Gamma jumps with shape (2-xi)/(xi-1) and scale phi (xi-1) mu^(xi-1).
double sample_cpg(const TweedieParams& params, Rng& rng);

}  // namespace tdglm
