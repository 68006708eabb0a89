#include "tdglm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tdglm {

SpikeSlabLatents SpikeSlabLatents::init(Eigen::Index m) {
  SpikeSlabLatents s;
  s.zeta = Eigen::VectorXd::Ones(m);
  s.sigma2_coef = Eigen::VectorXd::Ones(m);
  s.alpha = 0.5;
  return s;
}

SpikeSlabLatents gibbs_spike_slab(const Eigen::VectorXd& coefs,
                                  const SpikeSlabLatents& latents, double nu0,
                                  double a_sigma, double b_sigma, Rng& rng) {
  const Eigen::Index m = coefs.size();
  if (latents.zeta.size() != m || latents.sigma2_coef.size() != m) {
    throw std::invalid_argument("gibbs_spike_slab: latent dimension mismatch");
  }
  SpikeSlabLatents out = latents;
  long n_slab = 0;
  for (Eigen::Index u = 0; u < m; ++u) {
    const double c2 = coefs[u] * coefs[u];
    const double s2 = latents.sigma2_coef[u];
    // two-point law for zeta: weights alpha1 (spike) vs alpha2 (slab)
    const double log_a1 =
        std::log1p(-latents.alpha) - 0.5 * std::log(nu0) - c2 / (2.0 * nu0 * s2);
    const double log_a2 = std::log(latents.alpha) - c2 / (2.0 * s2);
    const double p_slab = 1.0 / (1.0 + std::exp(log_a1 - log_a2));
    const bool slab = rng.uniform() < p_slab;
    out.zeta[u] = slab ? 1.0 : nu0;
    if (slab) ++n_slab;
    out.sigma2_coef[u] =
        1.0 / rng.gamma(a_sigma + 0.5, b_sigma + c2 / (2.0 * out.zeta[u]));
  }
  out.alpha = rng.beta(1.0 + static_cast<double>(n_slab),
                       1.0 + static_cast<double>(m - n_slab));
  return out;
}

SelectionReport fdr_select(const Eigen::MatrixXd& draws, double c,
                           double alpha_level) {
  if (draws.rows() < 1 || draws.cols() < 1) {
    throw std::invalid_argument("fdr_select: empty draws matrix");
  }
  if (c <= 0.0 || alpha_level <= 0.0 || alpha_level >= 1.0) {
    throw std::invalid_argument("fdr_select: need c > 0 and alpha in (0,1)");
  }
  const Eigen::Index m = draws.cols();
  const double M = static_cast<double>(draws.rows());

  SelectionReport rep;
  rep.c = c;
  rep.alpha_level = alpha_level;
  rep.p.resize(m);
  for (Eigen::Index u = 0; u < m; ++u) {
    rep.p[u] = (draws.col(u).array().abs() <= c).cast<double>().sum() / M;
  }

  std::vector<double> sorted(rep.p.data(), rep.p.data() + m);
  std::sort(sorted.begin(), sorted.end());
  double running = 0.0;
  long u_star = -1;
  for (long u = 0; u < m; ++u) {
    running += sorted[static_cast<std::size_t>(u)];
    if (running / static_cast<double>(u + 1) <= alpha_level) u_star = u;
  }

  rep.selected.assign(static_cast<std::size_t>(m), false);
  if (u_star >= 0) {
    rep.any_threshold = true;
    rep.kappa_alpha = sorted[static_cast<std::size_t>(u_star)];
    for (Eigen::Index u = 0; u < m; ++u) {
      rep.selected[static_cast<std::size_t>(u)] = rep.p[u] <= rep.kappa_alpha;
    }
  }
  return rep;
}

}  // namespace tdglm
