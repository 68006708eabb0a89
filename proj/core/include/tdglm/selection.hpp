#pragma once

#include <Eigen/Core>
#include <vector>

#include "tdglm/rng.hpp"

namespace tdglm {

/// Latent state of the continuous spike-and-slab prior for one coefficient
/// block: per-coefficient scale indicators zeta in {nu0, 1}, slab variances,
/// and the inclusion probability alpha. The implied prior variance of
/// coefficient u is zeta[u] * sigma2_coef[u].
struct SpikeSlabLatents {
  static SpikeSlabLatents init(Eigen::Index m);

  Eigen::VectorXd zeta;
  Eigen::VectorXd sigma2_coef;
  double alpha = 0.5;
};

/// One Gibbs sweep over the spike-and-slab full conditionals: zeta from its
/// two-point law (computed in log space), slab precisions from their Gamma
/// conditionals, then alpha from its Beta conditional.
SpikeSlabLatents gibbs_spike_slab(const Eigen::VectorXd& coefs,
                                  const SpikeSlabLatents& latents, double nu0,
                                  double a_sigma, double b_sigma, Rng& rng);

/// Per-coefficient local FDR probabilities and the selected set.
struct SelectionReport {
  Eigen::VectorXd p;             // P(|coef| <= c) under the posterior draws
  double kappa_alpha = 0.0;      // threshold from the sorted cumulative-mean rule
  std::vector<bool> selected;    // p[u] <= kappa_alpha
  bool any_threshold = false;    // false when no index satisfies the FDR rule
  double c = 0.0;
  double alpha_level = 0.0;
};

/// p_u = mean_m I(|draws(m,u)| <= c); kappa_alpha = p_(u*) with
/// u* = max{ u : mean of the u smallest p's <= alpha_level }. Selection is
/// inclusive: p_u <= kappa_alpha.
SelectionReport fdr_select(const Eigen::MatrixXd& draws, double c,
                           double alpha_level);

}  // namespace tdglm
