#include "tdglm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tdglm {

PosteriorSummary summarize(const Eigen::VectorXd& draws,
                           const Eigen::VectorXd& joint_logpost,
                           double hpd_prob) {
  const Eigen::Index m = draws.size();
  if (m < 2) throw std::invalid_argument("summarize: need at least two draws");
  if (joint_logpost.size() != m) {
    throw std::invalid_argument("summarize: log-posterior length mismatch");
  }
  if (!(hpd_prob > 0.0 && hpd_prob < 1.0)) {
    throw std::invalid_argument("summarize: hpd_prob must lie in (0,1)");
  }

  PosteriorSummary s;
  s.hpd_prob = hpd_prob;

  Eigen::Index arg_map = 0;
  joint_logpost.maxCoeff(&arg_map);
  s.map_estimate = draws[arg_map];

  s.mean = draws.mean();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double d = draws[i] - s.mean;
    ss += d * d;
  }
  s.sd = std::sqrt(ss / static_cast<double>(m - 1));

  std::vector<double> sorted(draws.data(), draws.data() + m);
  std::sort(sorted.begin(), sorted.end());
  s.median = (m % 2 == 1)
                 ? sorted[static_cast<std::size_t>(m / 2)]
                 : 0.5 * (sorted[static_cast<std::size_t>(m / 2 - 1)] +
                          sorted[static_cast<std::size_t>(m / 2)]);

  // shortest window over the order statistics
  const Eigen::Index k = std::min<Eigen::Index>(
      m, static_cast<Eigen::Index>(
             std::ceil(hpd_prob * static_cast<double>(m))));
  Eigen::Index best = 0;
  double best_width = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i + k <= m; ++i) {
    const double width = sorted[static_cast<std::size_t>(i + k - 1)] -
                         sorted[static_cast<std::size_t>(i)];
    if (width < best_width) {
      best_width = width;
      best = i;
    }
  }
  s.hpd_lower = sorted[static_cast<std::size_t>(best)];
  s.hpd_upper = sorted[static_cast<std::size_t>(best + k - 1)];
  return s;
}

EssResult ess_acf(const Eigen::VectorXd& draws, Eigen::Index max_lag) {
  const Eigen::Index m = draws.size();
  if (m < 10) throw std::invalid_argument("ess_acf: need at least 10 draws");
  max_lag = std::max<Eigen::Index>(1, std::min(max_lag, m - 1));

  EssResult r;
  r.acf = Eigen::VectorXd::Zero(max_lag + 1);
  r.acf[0] = 1.0;

  const double mean = draws.mean();
  const Eigen::ArrayXd centered = draws.array() - mean;
  const double var = centered.square().sum() / static_cast<double>(m);
  if (var <= 0.0 || !std::isfinite(var)) {
    r.ess = static_cast<double>(m);
    r.degenerate = true;
    return r;
  }
  for (Eigen::Index lag = 1; lag <= max_lag; ++lag) {
    const double cov =
        (centered.head(m - lag) * centered.tail(m - lag)).sum() /
        static_cast<double>(m - lag);
    r.acf[lag] = cov / var;
  }

  // initial positive sequence: add pair sums while they stay positive
  double tau = 1.0;
  for (Eigen::Index lag = 1; lag + 1 <= max_lag; lag += 2) {
    const double pair = r.acf[lag] + r.acf[lag + 1];
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  r.ess = std::min(static_cast<double>(m), static_cast<double>(m) / tau);
  if (!(r.ess > 0.0)) r.ess = 1.0;
  return r;
}

long parameter_count(ModelId model, long p, long q, long n_sites) {
  if (p < 0 || q < 0 || n_sites < 0) {
    throw std::invalid_argument("parameter_count: negative dimension");
  }
  switch (model) {
    case ModelId::M1: return p + q + 1;
    case ModelId::M2: return 3 * p + 3 * q + 1;
    case ModelId::M3: return p + q + n_sites + 4;
    case ModelId::M4: return 3 * p + 3 * q + n_sites + 4;
  }
  throw std::invalid_argument("parameter_count: bad model id");
}

double aic(double loglik_at_point, ModelId model, long p, long q, long n_sites) {
  return -2.0 * loglik_at_point +
         2.0 * static_cast<double>(parameter_count(model, p, q, n_sites));
}

Prediction predict(const ModelState& point_estimates,
                   const ObservationSet& new_obs, ModelId model,
                   const Hyperparameters& hyper) {
  if (has_spatial(model)) {
    for (Eigen::Index k = 0; k < new_obs.size(); ++k) {
      if (new_obs.loc[k] >= point_estimates.w.size()) {
        throw std::invalid_argument(
            "predict: observation at a location unseen during fitting");
      }
    }
  }
  Prediction out;
  const LinearPredictors lp =
      linear_predictors(point_estimates, new_obs, model, hyper);
  out.mu_hat = lp.mu;
  out.phi_hat = lp.phi;
  const TweedieIndex xi(point_estimates.xi);
  double total = 0.0;
  for (Eigen::Index k = 0; k < new_obs.size(); ++k) {
    total += deviance(new_obs.y[k], out.mu_hat[k], xi);
  }
  out.sqrt_deviance = std::sqrt(total);
  return out;
}

}  // namespace tdglm
