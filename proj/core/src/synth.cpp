#include "tdglm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "tdglm/diagnostics.hpp"
#include "tdglm/tweedie.hpp"

namespace tdglm {

namespace {

struct ActiveSplit {
  long size = 0;    // active-set size in each model
  long shared = 0;  // covariates active in both
};

// Choose active-set sizes realizing overlap = shared / union exactly,
// preferring sizes near half the covariates.
ActiveSplit solve_overlap(long m, int overlap_percent) {
  const double rho = overlap_percent / 100.0;
  const long half = std::max(1L, m / 2);
  std::vector<long> order;
  for (long d = 0; d <= m; ++d) {
    if (half + d <= m && half + d >= 1) order.push_back(half + d);
    if (d > 0 && half - d >= 1) order.push_back(half - d);
  }
  for (long k : order) {
    const double x = 2.0 * k * rho / (1.0 + rho);
    const long xi = std::lround(x);
    if (std::abs(x - static_cast<double>(xi)) > 1e-9) continue;
    if (xi < 0 || xi > k) continue;
    if (2 * k - xi > m) continue;
    return {k, xi};
  }
  throw std::invalid_argument("scenario: overlap not realizable for " +
                              std::to_string(m) + " covariates");
}

void standardize_columns(Eigen::MatrixXd& m) {
  const double n = static_cast<double>(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    m.col(j).array() -= mean;
    const double sd = std::sqrt(m.col(j).squaredNorm() / (n - 1.0));
    if (sd > 0.0) m.col(j) /= sd;
  }
}

// Expected zero fraction as a function of a level shift applied to log mu.
double expected_zero_fraction(const Eigen::VectorXd& lambda0, double shift,
                              double xi) {
  const double factor = std::exp((2.0 - xi) * shift);
  double total = 0.0;
  for (Eigen::Index k = 0; k < lambda0.size(); ++k) {
    total += std::exp(-lambda0[k] * factor);
  }
  return total / static_cast<double>(lambda0.size());
}

double calibrate_level(const Eigen::VectorXd& lambda0, double target, double xi) {
  double lo = -30.0, hi = 30.0;
  // expected_zero_fraction is decreasing in the shift
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_zero_fraction(lambda0, mid, xi) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

double median_of(const Eigen::VectorXd& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  const std::size_t m = s.size();
  return (m % 2 == 1) ? s[m / 2] : 0.5 * (s[m / 2 - 1] + s[m / 2]);
}

}  // namespace

const char* pattern_name(SpatialPattern p) {
  switch (p) {
    case SpatialPattern::GpDraw: return "gp";
    case SpatialPattern::Deterministic: return "deterministic";
    case SpatialPattern::None: return "none";
  }
  return "?";
}

SpatialPattern parse_pattern(const std::string& name) {
  if (name == "gp") return SpatialPattern::GpDraw;
  if (name == "deterministic") return SpatialPattern::Deterministic;
  if (name == "none") return SpatialPattern::None;
  throw std::invalid_argument("unknown spatial pattern: " + name);
}

Scenario Scenario::from_zero_setting(int zero_percent) {
  Scenario s;
  s.zero_percent = zero_percent;
  switch (zero_percent) {
    case 15: s.mu_beta = 0.50; s.gamma0 = -1.50; break;
    case 30: s.mu_beta = 0.50; s.gamma0 = 0.70; break;
    case 60: s.mu_beta = 0.50; s.gamma0 = 2.50; break;
    case 80: s.mu_beta = 1.00; s.gamma0 = 4.50; break;
    case 95: s.mu_beta = 1.00; s.gamma0 = 7.00; break;
    default:
      throw std::invalid_argument("zero setting must be one of 15/30/60/80/95");
  }
  return s;
}

void Scenario::validate() const {
  if (zero_percent != 15 && zero_percent != 30 && zero_percent != 60 &&
      zero_percent != 80 && zero_percent != 95) {
    throw std::invalid_argument("zero setting must be one of 15/30/60/80/95");
  }
  if (n_obs < 1 || n_sites < 1 || n_covariates < 1) {
    throw std::invalid_argument("scenario: dimensions must be positive");
  }
  if (!(xi_true > 1.0 && xi_true < 2.0)) {
    throw std::invalid_argument("scenario: xi_true must lie in (1,2)");
  }
  solve_overlap(n_covariates, overlap_percent);  // throws if unrealizable
}

GeneratedData generate_dataset(const Scenario& sc, Rng& rng) {
  sc.validate();
  const long n = sc.n_obs;
  const long L = sc.n_sites;
  const long m = sc.n_covariates;
  const bool spatial = sc.pattern != SpatialPattern::None;

  Eigen::MatrixXd coords(L, 2);
  for (long i = 0; i < L; ++i) {
    coords(i, 0) = rng.uniform();
    coords(i, 1) = rng.uniform();
  }

  Eigen::MatrixXd covariates(n, m);
  for (long k = 0; k < n; ++k) {
    for (long j = 0; j < m; ++j) covariates(k, j) = rng.normal();
  }
  standardize_columns(covariates);

  Eigen::VectorXi loc(n);
  for (long k = 0; k < n; ++k) {
    loc[k] = static_cast<int>(std::min<double>(L - 1, rng.uniform() * L));
  }

  const ActiveSplit split = solve_overlap(m, sc.overlap_percent);
  // mean model active on {0..k-1}, dispersion on {k-shared .. 2k-shared-1}
  std::vector<bool> mean_active(static_cast<std::size_t>(m), false);
  std::vector<bool> disp_active(static_cast<std::size_t>(m), false);
  for (long j = 0; j < split.size; ++j) {
    mean_active[static_cast<std::size_t>(j)] = true;
    disp_active[static_cast<std::size_t>(split.size - split.shared + j)] = true;
  }

  Eigen::VectorXd beta_cov(m), gamma_cov(m);
  for (long j = 0; j < m; ++j) {
    beta_cov[j] = mean_active[static_cast<std::size_t>(j)]
                      ? sc.mu_beta + sc.sd_beta * rng.normal()
                      : sc.inactive_value;
    gamma_cov[j] = disp_active[static_cast<std::size_t>(j)]
                       ? sc.mu_gamma + sc.sd_gamma * rng.normal()
                       : sc.inactive_value;
  }

  Eigen::VectorXd w = Eigen::VectorXd::Zero(spatial ? L : 0);
  if (sc.pattern == SpatialPattern::GpDraw) {
    const Eigen::MatrixXd dist = pairwise_distances(coords);
    const CholState chol =
        chol_factor(matern_correlation(dist, sc.phis_true, sc.nu));
    Eigen::VectorXd z(L);
    for (long i = 0; i < L; ++i) z[i] = rng.normal();
    w = std::sqrt(sc.sigma2_true) * (chol.lower() * z);
  } else if (sc.pattern == SpatialPattern::Deterministic) {
    for (long i = 0; i < L; ++i) {
      w[i] = 5.0 * (std::sin(3.0 * M_PI * coords(i, 0)) +
                    std::cos(3.0 * M_PI * coords(i, 1))) +
             rng.normal();
    }
  }

  // linear predictors before the level calibration
  Eigen::VectorXd eta_mu = covariates * beta_cov;
  if (spatial) {
    for (long k = 0; k < n; ++k) eta_mu[k] += w[loc[k]];
  }
  Eigen::VectorXd eta_phi =
      Eigen::VectorXd::Constant(n, sc.gamma0) + covariates * gamma_cov;

  Eigen::VectorXd lambda0(n);
  for (long k = 0; k < n; ++k) {
    lambda0[k] = std::exp((2.0 - sc.xi_true) * eta_mu[k]) /
                 (std::exp(eta_phi[k]) * (2.0 - sc.xi_true));
  }
  const double shift =
      calibrate_level(lambda0, sc.zero_percent / 100.0, sc.xi_true);

  const TweedieIndex xi(sc.xi_true);
  Eigen::VectorXd y(n);
  long zeros = 0;
  for (long k = 0; k < n; ++k) {
    const double mu = std::exp(eta_mu[k] + shift);
    const double phi = std::exp(eta_phi[k]);
    y[k] = sample_cpg(TweedieParams(mu, phi, xi), rng);
    if (y[k] == 0.0) ++zeros;
  }

  // assemble designs: spatial scenarios fold the level into w and drop the
  // mean intercept; non-spatial ones carry it as the leading X column
  Eigen::MatrixXd X, Z;
  SyntheticTruth truth;
  truth.pattern = sc.pattern;
  truth.xi = sc.xi_true;
  truth.level_offset = shift;
  truth.zero_fraction = static_cast<double>(zeros) / static_cast<double>(n);
  if (sc.pattern == SpatialPattern::GpDraw) {
    truth.sigma2 = sc.sigma2_true;
    truth.phi_s = sc.phis_true;
  }

  Z.resize(n, m + 1);
  Z.col(0) = Eigen::VectorXd::Ones(n);
  Z.rightCols(m) = covariates;
  truth.gamma.resize(m + 1);
  truth.gamma[0] = sc.gamma0;
  truth.gamma.tail(m) = gamma_cov;
  truth.gamma_active.assign(static_cast<std::size_t>(m + 1), false);
  truth.gamma_cov_id.resize(m + 1);
  truth.gamma_cov_id[0] = -1;
  for (long j = 0; j < m; ++j) {
    truth.gamma_active[static_cast<std::size_t>(j + 1)] =
        disp_active[static_cast<std::size_t>(j)];
    truth.gamma_cov_id[j + 1] = static_cast<int>(j);
  }

  if (spatial) {
    X = covariates;
    truth.beta = beta_cov;
    truth.beta_active = mean_active;
    truth.beta_cov_id.resize(m);
    for (long j = 0; j < m; ++j) truth.beta_cov_id[j] = static_cast<int>(j);
    truth.w = w.array() + shift;
  } else {
    X.resize(n, m + 1);
    X.col(0) = Eigen::VectorXd::Ones(n);
    X.rightCols(m) = covariates;
    truth.beta.resize(m + 1);
    truth.beta[0] = shift;
    truth.beta.tail(m) = beta_cov;
    truth.beta_active.assign(static_cast<std::size_t>(m + 1), false);
    truth.beta_cov_id.resize(m + 1);
    truth.beta_cov_id[0] = -1;
    for (long j = 0; j < m; ++j) {
      truth.beta_active[static_cast<std::size_t>(j + 1)] =
          mean_active[static_cast<std::size_t>(j)];
      truth.beta_cov_id[j + 1] = static_cast<int>(j);
    }
  }

  ObservationSet obs(std::move(y), Eigen::VectorXd::Ones(n), std::move(loc),
                     std::move(X), std::move(Z), L);
  std::optional<SpatialDomain> domain;
  if (spatial) domain.emplace(std::move(coords));
  return {std::move(obs), std::move(domain), std::move(truth)};
}

FitMetrics evaluate_fit(const SyntheticTruth& truth, const ChainOutput& chain,
                        const SelectionReport* report_mean,
                        const SelectionReport* report_disp) {
  FitMetrics metrics;
  metrics.zero_fraction = truth.zero_fraction;

  const Eigen::MatrixXd beta_draws = chain.block("beta");
  const Eigen::MatrixXd gamma_draws = chain.block("gamma");
  if (beta_draws.cols() != truth.beta.size() ||
      gamma_draws.cols() != truth.gamma.size()) {
    throw std::invalid_argument("evaluate_fit: chain/truth dimension mismatch");
  }

  auto family_metrics = [&](const Eigen::MatrixXd& draws,
                            const Eigen::VectorXd& target, double& mse,
                            double& cp) {
    double sq = 0.0;
    long covered = 0;
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      const PosteriorSummary s = summarize(draws.col(j), chain.log_posterior);
      const double err = s.median - target[j];
      sq += err * err;
      covered += (target[j] >= s.hpd_lower && target[j] <= s.hpd_upper);
    }
    mse = sq / static_cast<double>(draws.cols());
    cp = static_cast<double>(covered) / static_cast<double>(draws.cols());
  };

  family_metrics(beta_draws, truth.beta, metrics.mse_beta, metrics.cp_beta);
  family_metrics(gamma_draws, truth.gamma, metrics.mse_gamma, metrics.cp_gamma);

  const double xi_med = median_of(chain.draws.col(chain.column("xi")));
  metrics.mse_xi = (xi_med - truth.xi) * (xi_med - truth.xi);

  if (truth.w.size() > 0) {
    const Eigen::MatrixXd w_draws = chain.block("w");
    if (w_draws.cols() == truth.w.size() && w_draws.cols() > 0) {
      family_metrics(w_draws, truth.w, metrics.mse_w, metrics.cp_w);
    }
  }
  if (truth.pattern == SpatialPattern::GpDraw) {
    if (chain.has_column("sigma2")) {
      const double v =
          median_of(chain.draws.col(chain.column("sigma2"))) - truth.sigma2;
      metrics.mse_sigma2 = v * v;
    }
    if (chain.has_column("phi_s")) {
      const double v =
          median_of(chain.draws.col(chain.column("phi_s"))) - truth.phi_s;
      metrics.mse_phis = v * v;
    }
  }

  if (report_mean != nullptr && report_disp != nullptr) {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    std::set<int> sel_mean, sel_disp;
    auto tally = [&](const SelectionReport& rep, const std::vector<bool>& active,
                     const Eigen::VectorXi& cov_id, std::set<int>& chosen) {
      for (std::size_t u = 0; u < rep.selected.size(); ++u) {
        if (cov_id[static_cast<Eigen::Index>(u)] < 0) continue;  // intercept
        const bool sel = rep.selected[u];
        const bool act = active[u];
        tp += (sel && act);
        fp += (sel && !act);
        fn += (!sel && act);
        tn += (!sel && !act);
        if (sel) chosen.insert(cov_id[static_cast<Eigen::Index>(u)]);
      }
    };
    tally(*report_mean, truth.beta_active, truth.beta_cov_id, sel_mean);
    tally(*report_disp, truth.gamma_active, truth.gamma_cov_id, sel_disp);
    metrics.fpr = (fp + tn) > 0 ? static_cast<double>(fp) / (fp + tn) : 0.0;
    metrics.tpr = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;

    std::set<int> both, either(sel_mean);
    either.insert(sel_disp.begin(), sel_disp.end());
    for (int id : sel_mean) {
      if (sel_disp.count(id) > 0) both.insert(id);
    }
    metrics.overlap = either.empty() ? 0.0
                                     : static_cast<double>(both.size()) /
                                           static_cast<double>(either.size());
  }
  return metrics;
}

}  // namespace tdglm
