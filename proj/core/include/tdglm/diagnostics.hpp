#pragma once

#include <Eigen/Core>

#include "tdglm/model.hpp"

namespace tdglm {

struct PosteriorSummary {
  double map_estimate = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double hpd_lower = 0.0;
  double hpd_upper = 0.0;
  double hpd_prob = 0.95;
};

/// Point and interval summaries of one parameter's kept draws. The MAP is
/// the draw at the iteration maximizing the stored joint log posterior; the
/// HPD interval is the shortest window over the order statistics containing
/// ceil(hpd_prob * M) draws.
PosteriorSummary summarize(const Eigen::VectorXd& draws,
                           const Eigen::VectorXd& joint_logpost,
                           double hpd_prob = 0.95);

struct EssResult {
  Eigen::VectorXd acf;
  double ess = 0.0;
  bool degenerate = false;  // zero-variance input, ess = M by convention
};

/// Autocorrelation function to max_lag and the initial-positive-sequence
/// effective sample size, clamped to (0, M].
EssResult ess_acf(const Eigen::VectorXd& draws, Eigen::Index max_lag);

/// Model parameter counts: p+q+1 (M1), 3p+3q+1 (M2), p+q+L+4 (M3),
/// 3p+3q+L+4 (M4).
long parameter_count(ModelId model, long p, long q, long n_sites);

double aic(double loglik_at_point, ModelId model, long p, long q, long n_sites);

struct Prediction {
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd phi_hat;
  double sqrt_deviance = 0.0;
};

/// Out-of-sample scoring at fixed point estimates: linear predictors on the
/// new data and sqrt(sum of unit deviances). All locations must have been
/// seen during fitting.
Prediction predict(const ModelState& point_estimates,
                   const ObservationSet& new_obs, ModelId model,
                   const Hyperparameters& hyper);

}  // namespace tdglm
