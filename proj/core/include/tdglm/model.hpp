#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "tdglm/selection.hpp"
#include "tdglm/spatial.hpp"
#include "tdglm/tweedie.hpp"

namespace tdglm {

/// The four model variants: plain double GLM (M1), with variable selection
/// (M2), with a spatial effect (M3), and with both (M4).
enum class ModelId { M1, M2, M3, M4 };

constexpr bool has_spatial(ModelId m) {
  return m == ModelId::M3 || m == ModelId::M4;
}
constexpr bool has_selection(ModelId m) {
  return m == ModelId::M2 || m == ModelId::M4;
}

const char* model_name(ModelId m);
ModelId parse_model(const std::string& name);

/// Response, exposures, site assignment, and the two design matrices.
/// loc holds 0-based site indices; the incidence matrix F is implicit
/// (row k has a single one at column loc[k]).
struct ObservationSet {
  ObservationSet(Eigen::VectorXd y_, Eigen::VectorXd t_, Eigen::VectorXi loc_,
                 Eigen::MatrixXd X_, Eigen::MatrixXd Z_, Eigen::Index n_sites_);

  Eigen::Index size() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index q() const { return Z.cols(); }

  Eigen::VectorXd y;
  Eigen::VectorXd t;
  Eigen::VectorXi loc;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  Eigen::Index n_sites;
  Eigen::VectorXd log_t;  // cached offsets
};

/// Prior and sampler settings. Defaults give the vague hierarchical prior
/// used throughout: inverse-Gamma(2, 1) variance components, flat xi on
/// (1, 2), spike value nu0 = 5e-4, fixed prior variance 1e6 when selection
/// is off, and the exponential Matern kernel (nu = 0.5).
struct Hyperparameters {
  // prior support and shapes
  double a_xi = 1.0;
  double b_xi = 2.0;
  double sigma2_beta_fixed = 1e6;
  double sigma2_gamma_fixed = 1e6;
  double a_sigma = 2.0;
  double b_sigma = 1.0;
  double a_phis = 0.0;
  double b_phis = 30.0;
  double nu = 0.5;
  double nu0 = 5e-4;
  double a_sigma_beta = 2.0;
  double b_sigma_beta = 1.0;
  double a_sigma_gamma = 2.0;
  double b_sigma_gamma = 1.0;

  // selection rule
  double fdr_alpha = 0.05;
  double fdr_c = 0.05;

  // chain layout
  long iters = 10000;
  long burnin = 5000;
  long thin = 10;

  // proposal scales: 0 requests the dimension-based default
  double tau_mean0 = 0.0;
  double tau_disp0 = 0.0;
  double step_xi0 = 0.02;
  double step_phis0 = 0.0;
  double target_mala = 0.574;
  double target_rw = 0.33;
  long adapt_window = 100;
  long precond_refresh = 50;

  // exposure offsets enter as offset_sign * log t (and the dispersion
  // counterpart scaled by 2 - xi)
  double offset_sign = -1.0;

  bool disp_grad_numeric = false;
  // nesting diagnostic: pin w = 0 and skip process updates in M3/M4
  bool freeze_spatial_at_zero = false;

  void validate() const;
};

/// Everything the chain moves: coefficients, spatial effects, index and
/// process parameters, and the spike-and-slab latents when selection is on.
struct ModelState {
  static ModelState init(ModelId model, Eigen::Index p, Eigen::Index q,
                         Eigen::Index n_sites, const Hyperparameters& hyper);

  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd w;  // empty for M1/M2
  double xi = 1.5;
  double sigma2 = 1.0;
  double phi_s = 1.0;
  SpikeSlabLatents sel_beta;   // empty for M1/M3
  SpikeSlabLatents sel_gamma;  // empty for M1/M3
};

struct LinearPredictors {
  Eigen::VectorXd mu;
  Eigen::VectorXd phi;
  long clamped = 0;  // linear predictors pinned to +-700 before exp
};

LinearPredictors linear_predictors(const ModelState& state,
                                   const ObservationSet& obs, ModelId model,
                                   const Hyperparameters& hyper);

/// Per-coefficient prior precisions: 1/(zeta_u sigma2_u) under selection,
/// 1/sigma2_fixed otherwise.
Eigen::VectorXd prior_precision_beta(const ModelState& state, ModelId model,
                                     const Hyperparameters& hyper);
Eigen::VectorXd prior_precision_gamma(const ModelState& state, ModelId model,
                                      const Hyperparameters& hyper);

/// Log posterior kernel of the mean block [beta; w] (just beta for M1/M2)
/// with gamma, xi, phi_s, sigma2 held at state values. kernel must factor
/// the current correlation R(phi_s) for spatial models.
double log_post_mean_block(const Eigen::VectorXd& beta_w,
                           const ObservationSet& obs, const ModelState& state,
                           const CholState* kernel, ModelId model,
                           const Hyperparameters& hyper);

Eigen::VectorXd grad_mean_block(const Eigen::VectorXd& beta_w,
                                const ObservationSet& obs,
                                const ModelState& state,
                                const CholState* kernel, ModelId model,
                                const Hyperparameters& hyper);

/// Log posterior kernel of the dispersion block under the saddlepoint
/// likelihood: -(sum d/(2 phi) + (log phi)/2 I(y>0)) minus the prior term.
/// Cheap and differentiable; the chain uses it for proposal drifts.
double log_post_disp_block(const Eigen::VectorXd& gamma,
                           const ObservationSet& obs, const ModelState& state,
                           ModelId model, const Hyperparameters& hyper);

/// Exact dispersion kernel: the series log likelihood at the candidate gamma
/// (mean held at state values) plus the prior term. Acceptance target of the
/// gamma update; the saddlepoint form above is biased when zeros dominate.
double log_post_disp_exact(const Eigen::VectorXd& gamma,
                           const ObservationSet& obs, const ModelState& state,
                           ModelId model, const Hyperparameters& hyper);

enum class GradMode { Analytic, Numeric };

Eigen::VectorXd grad_disp_block(const Eigen::VectorXd& gamma,
                                const ObservationSet& obs,
                                const ModelState& state, ModelId model,
                                const Hyperparameters& hyper, GradMode mode);

/// Gradient of the exact dispersion kernel. Analytic mode uses the series
/// derivative with respect to log phi; numeric mode central-differences
/// log_post_disp_exact.
Eigen::VectorXd grad_disp_exact(const Eigen::VectorXd& gamma,
                                const ObservationSet& obs,
                                const ModelState& state, ModelId model,
                                const Hyperparameters& hyper, GradMode mode);

/// Log posterior of xi: the exact series log likelihood with the dispersion
/// offset recomputed at the candidate xi, plus the flat-prior indicator
/// (-inf outside (a_xi, b_xi)).
double log_post_xi(double xi, const ObservationSet& obs,
                   const ModelState& state, ModelId model,
                   const Hyperparameters& hyper);

/// Log posterior of the Matern decay: -log|R|/2 - (sigma^-2/2) w'R^-1 w with
/// the flat-prior indicator. A factorization failure counts into *chol_failures
/// (when given) and returns -inf.
double log_post_phis(double phi_s, const Eigen::VectorXd& w, double sigma2,
                     const SpatialDomain& domain, const Hyperparameters& hyper,
                     long* chol_failures = nullptr);

/// Expected-information preconditioner of the mean block:
/// [X'WX + P_beta, X'WF; F'WX, F'WF + sigma^-2 R^-1], W = diag(mu^(2-xi)/phi).
Eigen::MatrixXd precondition_mean(const ObservationSet& obs,
                                  const ModelState& state,
                                  const CholState* kernel, ModelId model,
                                  const Hyperparameters& hyper);

/// Saddlepoint expected information of the dispersion block:
/// Z' diag(I(y>0)) Z / 2 + P_gamma.
Eigen::MatrixXd precondition_disp(const ObservationSet& obs,
                                  const ModelState& state, ModelId model,
                                  const Hyperparameters& hyper);

}  // namespace tdglm
