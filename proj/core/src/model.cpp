#include "tdglm/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdglm {

namespace {

constexpr double kEtaClamp = 700.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp_eta(double eta, long& clamped) {
  if (eta > kEtaClamp) {
    ++clamped;
    return kEtaClamp;
  }
  if (eta < -kEtaClamp) {
    ++clamped;
    return -kEtaClamp;
  }
  return eta;
}

// mu from a candidate mean-block vector, all else from state.
Eigen::VectorXd mean_from_block(const Eigen::VectorXd& beta_w,
                                const ObservationSet& obs, ModelId model,
                                const Hyperparameters& hyper, long& clamped) {
  const Eigen::Index n = obs.size();
  const Eigen::Index p = obs.p();
  Eigen::VectorXd eta =
      hyper.offset_sign * obs.log_t + obs.X * beta_w.head(p);
  if (has_spatial(model) && !hyper.freeze_spatial_at_zero) {
    for (Eigen::Index k = 0; k < n; ++k) eta[k] += beta_w[p + obs.loc[k]];
  }
  Eigen::VectorXd mu(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    mu[k] = std::exp(clamp_eta(eta[k], clamped));
  }
  return mu;
}

Eigen::VectorXd disp_from_gamma(const Eigen::VectorXd& gamma,
                                const ObservationSet& obs, double xi,
                                const Hyperparameters& hyper, long& clamped) {
  const Eigen::Index n = obs.size();
  Eigen::VectorXd eta =
      (hyper.offset_sign * (2.0 - xi)) * obs.log_t + obs.Z * gamma;
  Eigen::VectorXd phi(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    phi[k] = std::exp(clamp_eta(eta[k], clamped));
  }
  return phi;
}

Eigen::VectorXd block_for_state(const ModelState& state, ModelId model,
                                const Hyperparameters& hyper) {
  if (!has_spatial(model) || hyper.freeze_spatial_at_zero) return state.beta;
  Eigen::VectorXd v(state.beta.size() + state.w.size());
  v << state.beta, state.w;
  return v;
}

}  // namespace

const char* model_name(ModelId m) {
  switch (m) {
    case ModelId::M1: return "M1";
    case ModelId::M2: return "M2";
    case ModelId::M3: return "M3";
    case ModelId::M4: return "M4";
  }
  return "?";
}

ModelId parse_model(const std::string& name) {
  if (name == "M1") return ModelId::M1;
  if (name == "M2") return ModelId::M2;
  if (name == "M3") return ModelId::M3;
  if (name == "M4") return ModelId::M4;
  throw std::invalid_argument("unknown model id: " + name);
}

ObservationSet::ObservationSet(Eigen::VectorXd y_, Eigen::VectorXd t_,
                               Eigen::VectorXi loc_, Eigen::MatrixXd X_,
                               Eigen::MatrixXd Z_, Eigen::Index n_sites_)
    : y(std::move(y_)),
      t(std::move(t_)),
      loc(std::move(loc_)),
      X(std::move(X_)),
      Z(std::move(Z_)),
      n_sites(n_sites_) {
  const Eigen::Index n = y.size();
  if (t.size() != n || loc.size() != n || X.rows() != n || Z.rows() != n) {
    throw std::invalid_argument("ObservationSet: row-count mismatch");
  }
  if ((y.array() < 0.0).any() || !y.allFinite()) {
    throw std::invalid_argument("ObservationSet: responses must be finite and >= 0");
  }
  if ((t.array() <= 0.0).any() || !t.allFinite()) {
    throw std::invalid_argument("ObservationSet: exposures must be finite and > 0");
  }
  if (!X.allFinite() || !Z.allFinite()) {
    throw std::invalid_argument("ObservationSet: non-finite design entry");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (loc[k] < 0 || loc[k] >= n_sites) {
      throw std::invalid_argument("ObservationSet: location index out of range");
    }
  }
  log_t = t.array().log();
}

void Hyperparameters::validate() const {
  if (!(a_xi >= 1.0 && b_xi <= 2.0 && a_xi < b_xi)) {
    throw std::invalid_argument("Hyperparameters: need 1 <= a_xi < b_xi <= 2");
  }
  if (!(nu0 > 0.0 && nu0 < 1.0)) {
    throw std::invalid_argument("Hyperparameters: nu0 must lie in (0,1)");
  }
  if (!(a_phis < b_phis)) {
    throw std::invalid_argument("Hyperparameters: need a_phis < b_phis");
  }
  if (!(a_sigma > 0 && b_sigma > 0 && a_sigma_beta > 0 && b_sigma_beta > 0 &&
        a_sigma_gamma > 0 && b_sigma_gamma > 0)) {
    throw std::invalid_argument("Hyperparameters: Gamma shapes/rates must be > 0");
  }
  if (!(sigma2_beta_fixed > 0 && sigma2_gamma_fixed > 0 && nu > 0)) {
    throw std::invalid_argument("Hyperparameters: variances and nu must be > 0");
  }
  if (!(fdr_alpha > 0 && fdr_alpha < 1 && fdr_c > 0)) {
    throw std::invalid_argument("Hyperparameters: fdr settings out of range");
  }
  if (iters <= 0 || burnin < 0 || burnin >= iters || thin <= 0) {
    throw std::invalid_argument("Hyperparameters: bad chain layout");
  }
  if (adapt_window <= 0 || precond_refresh <= 0) {
    throw std::invalid_argument("Hyperparameters: window sizes must be > 0");
  }
}

ModelState ModelState::init(ModelId model, Eigen::Index p, Eigen::Index q,
                            Eigen::Index n_sites, const Hyperparameters& hyper) {
  ModelState s;
  s.beta = Eigen::VectorXd::Zero(p);
  s.gamma = Eigen::VectorXd::Zero(q);
  s.xi = 0.5 * (hyper.a_xi + hyper.b_xi);
  s.sigma2 = 1.0;
  if (has_spatial(model)) {
    s.w = Eigen::VectorXd::Zero(n_sites);
    s.phi_s = 0.5 * (hyper.a_phis + hyper.b_phis);
  }
  if (has_selection(model)) {
    s.sel_beta = SpikeSlabLatents::init(p);
    s.sel_gamma = SpikeSlabLatents::init(q);
  }
  return s;
}

LinearPredictors linear_predictors(const ModelState& state,
                                   const ObservationSet& obs, ModelId model,
                                   const Hyperparameters& hyper) {
  LinearPredictors out;
  const Eigen::VectorXd block = block_for_state(state, model, hyper);
  out.mu = mean_from_block(block, obs, model, hyper, out.clamped);
  out.phi = disp_from_gamma(state.gamma, obs, state.xi, hyper, out.clamped);
  return out;
}

Eigen::VectorXd prior_precision_beta(const ModelState& state, ModelId model,
                                     const Hyperparameters& hyper) {
  if (has_selection(model)) {
    return (state.sel_beta.zeta.array() * state.sel_beta.sigma2_coef.array())
        .inverse()
        .matrix();
  }
  return Eigen::VectorXd::Constant(state.beta.size(), 1.0 / hyper.sigma2_beta_fixed);
}

Eigen::VectorXd prior_precision_gamma(const ModelState& state, ModelId model,
                                      const Hyperparameters& hyper) {
  if (has_selection(model)) {
    return (state.sel_gamma.zeta.array() * state.sel_gamma.sigma2_coef.array())
        .inverse()
        .matrix();
  }
  return Eigen::VectorXd::Constant(state.gamma.size(),
                                   1.0 / hyper.sigma2_gamma_fixed);
}

double log_post_mean_block(const Eigen::VectorXd& beta_w,
                           const ObservationSet& obs, const ModelState& state,
                           const CholState* kernel, ModelId model,
                           const Hyperparameters& hyper) {
  const bool spatial = has_spatial(model) && !hyper.freeze_spatial_at_zero;
  const Eigen::Index p = obs.p();
  long clamped = 0;
  const Eigen::VectorXd mu = mean_from_block(beta_w, obs, model, hyper, clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(state.gamma, obs, state.xi, hyper, clamped);
  const TweedieIndex xi(state.xi);

  double value = 0.0;
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    value -= deviance(obs.y[k], mu[k], xi) / (2.0 * phi[k]);
  }
  const Eigen::VectorXd prec = prior_precision_beta(state, model, hyper);
  value -= 0.5 * (prec.array() * beta_w.head(p).array().square()).sum();
  if (spatial) {
    value -= 0.5 / state.sigma2 * kernel->quad_form(beta_w.tail(obs.n_sites));
  }
  return value;
}

Eigen::VectorXd grad_mean_block(const Eigen::VectorXd& beta_w,
                                const ObservationSet& obs,
                                const ModelState& state,
                                const CholState* kernel, ModelId model,
                                const Hyperparameters& hyper) {
  const bool spatial = has_spatial(model) && !hyper.freeze_spatial_at_zero;
  const Eigen::Index p = obs.p();
  long clamped = 0;
  const Eigen::VectorXd mu = mean_from_block(beta_w, obs, model, hyper, clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(state.gamma, obs, state.xi, hyper, clamped);

  // u_k = (y_k - mu_k) mu_k^(1-xi) / phi_k
  Eigen::VectorXd u(obs.size());
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    u[k] = (obs.y[k] - mu[k]) * std::pow(mu[k], 1.0 - state.xi) / phi[k];
  }

  Eigen::VectorXd grad(beta_w.size());
  const Eigen::VectorXd prec = prior_precision_beta(state, model, hyper);
  grad.head(p) = obs.X.transpose() * u -
                 (prec.array() * beta_w.head(p).array()).matrix();
  if (spatial) {
    Eigen::VectorXd site_sum = Eigen::VectorXd::Zero(obs.n_sites);
    for (Eigen::Index k = 0; k < obs.size(); ++k) site_sum[obs.loc[k]] += u[k];
    grad.tail(obs.n_sites) =
        site_sum - kernel->solve(beta_w.tail(obs.n_sites)) / state.sigma2;
  }
  return grad;
}

double log_post_disp_block(const Eigen::VectorXd& gamma,
                           const ObservationSet& obs, const ModelState& state,
                           ModelId model, const Hyperparameters& hyper) {
  long clamped = 0;
  const Eigen::VectorXd mu =
      mean_from_block(block_for_state(state, model, hyper), obs, model, hyper,
                      clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(gamma, obs, state.xi, hyper, clamped);
  const TweedieIndex xi(state.xi);

  double value = 0.0;
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    value -= deviance(obs.y[k], mu[k], xi) / (2.0 * phi[k]);
    if (obs.y[k] > 0.0) value -= 0.5 * std::log(phi[k]);
  }
  const Eigen::VectorXd prec = prior_precision_gamma(state, model, hyper);
  value -= 0.5 * (prec.array() * gamma.array().square()).sum();
  return value;
}

double log_post_disp_exact(const Eigen::VectorXd& gamma,
                           const ObservationSet& obs, const ModelState& state,
                           ModelId model, const Hyperparameters& hyper) {
  long clamped = 0;
  const Eigen::VectorXd mu =
      mean_from_block(block_for_state(state, model, hyper), obs, model, hyper,
                      clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(gamma, obs, state.xi, hyper, clamped);
  double value = log_likelihood(obs.y, mu, phi, TweedieIndex(state.xi),
                                DensityMethod::Series);
  const Eigen::VectorXd prec = prior_precision_gamma(state, model, hyper);
  value -= 0.5 * (prec.array() * gamma.array().square()).sum();
  return value;
}

Eigen::VectorXd grad_disp_block(const Eigen::VectorXd& gamma,
                                const ObservationSet& obs,
                                const ModelState& state, ModelId model,
                                const Hyperparameters& hyper, GradMode mode) {
  if (mode == GradMode::Numeric) {
    const Eigen::Index q = gamma.size();
    Eigen::VectorXd grad(q);
    for (Eigen::Index v = 0; v < q; ++v) {
      const double h = 1e-6 * (1.0 + std::abs(gamma[v]));
      Eigen::VectorXd lo = gamma, hi = gamma;
      lo[v] -= h;
      hi[v] += h;
      grad[v] = (log_post_disp_block(hi, obs, state, model, hyper) -
                 log_post_disp_block(lo, obs, state, model, hyper)) /
                (2.0 * h);
    }
    return grad;
  }

  long clamped = 0;
  const Eigen::VectorXd mu =
      mean_from_block(block_for_state(state, model, hyper), obs, model, hyper,
                      clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(gamma, obs, state.xi, hyper, clamped);
  const TweedieIndex xi(state.xi);

  Eigen::VectorXd v(obs.size());
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    v[k] = deviance(obs.y[k], mu[k], xi) / (2.0 * phi[k]) -
           (obs.y[k] > 0.0 ? 0.5 : 0.0);
  }
  const Eigen::VectorXd prec = prior_precision_gamma(state, model, hyper);
  return obs.Z.transpose() * v - (prec.array() * gamma.array()).matrix();
}

Eigen::VectorXd grad_disp_exact(const Eigen::VectorXd& gamma,
                                const ObservationSet& obs,
                                const ModelState& state, ModelId model,
                                const Hyperparameters& hyper, GradMode mode) {
  if (mode == GradMode::Numeric) {
    const Eigen::Index q = gamma.size();
    Eigen::VectorXd grad(q);
    for (Eigen::Index v = 0; v < q; ++v) {
      const double h = 1e-6 * (1.0 + std::abs(gamma[v]));
      Eigen::VectorXd lo = gamma, hi = gamma;
      lo[v] -= h;
      hi[v] += h;
      grad[v] = (log_post_disp_exact(hi, obs, state, model, hyper) -
                 log_post_disp_exact(lo, obs, state, model, hyper)) /
                (2.0 * h);
    }
    return grad;
  }

  long clamped = 0;
  const Eigen::VectorXd mu =
      mean_from_block(block_for_state(state, model, hyper), obs, model, hyper,
                      clamped);
  const Eigen::VectorXd phi =
      disp_from_gamma(gamma, obs, state.xi, hyper, clamped);
  const Eigen::VectorXd dlogphi =
      dlog_density_dlogphi(obs.y, mu, phi, TweedieIndex(state.xi));
  const Eigen::VectorXd prec = prior_precision_gamma(state, model, hyper);
  return obs.Z.transpose() * dlogphi - (prec.array() * gamma.array()).matrix();
}

double log_post_xi(double xi, const ObservationSet& obs,
                   const ModelState& state, ModelId model,
                   const Hyperparameters& hyper) {
  if (!(xi > hyper.a_xi && xi < hyper.b_xi) || xi <= 1.0 || xi >= 2.0) {
    return kNegInf;
  }
  long clamped = 0;
  const Eigen::VectorXd mu =
      mean_from_block(block_for_state(state, model, hyper), obs, model, hyper,
                      clamped);
  const Eigen::VectorXd phi = disp_from_gamma(state.gamma, obs, xi, hyper, clamped);
  return log_likelihood(obs.y, mu, phi, TweedieIndex(xi), DensityMethod::Series);
}

double log_post_phis(double phi_s, const Eigen::VectorXd& w, double sigma2,
                     const SpatialDomain& domain, const Hyperparameters& hyper,
                     long* chol_failures) {
  if (!(phi_s > hyper.a_phis && phi_s < hyper.b_phis)) return kNegInf;
  try {
    const CholState chol =
        chol_factor(matern_correlation(domain.dist, phi_s, hyper.nu));
    return -0.5 * chol.log_det() - 0.5 / sigma2 * chol.quad_form(w);
  } catch (const NotPositiveDefiniteError&) {
    if (chol_failures != nullptr) ++(*chol_failures);
    return kNegInf;
  }
}

Eigen::MatrixXd precondition_mean(const ObservationSet& obs,
                                  const ModelState& state,
                                  const CholState* kernel, ModelId model,
                                  const Hyperparameters& hyper) {
  const bool spatial = has_spatial(model) && !hyper.freeze_spatial_at_zero;
  const Eigen::Index p = obs.p();
  const Eigen::Index L = spatial ? obs.n_sites : 0;
  const LinearPredictors lp = linear_predictors(state, obs, model, hyper);

  Eigen::VectorXd wdiag(obs.size());
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    wdiag[k] = std::pow(lp.mu[k], 2.0 - state.xi) / lp.phi[k];
  }

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p + L, p + L);
  info.topLeftCorner(p, p) =
      obs.X.transpose() * wdiag.asDiagonal() * obs.X;
  info.topLeftCorner(p, p).diagonal() +=
      prior_precision_beta(state, model, hyper);
  if (spatial) {
    Eigen::MatrixXd xwf = Eigen::MatrixXd::Zero(p, L);
    Eigen::VectorXd fwf = Eigen::VectorXd::Zero(L);
    for (Eigen::Index k = 0; k < obs.size(); ++k) {
      xwf.col(obs.loc[k]) += wdiag[k] * obs.X.row(k).transpose();
      fwf[obs.loc[k]] += wdiag[k];
    }
    info.topRightCorner(p, L) = xwf;
    info.bottomLeftCorner(L, p) = xwf.transpose();
    Eigen::MatrixXd wblock = kernel->inverse() / state.sigma2;
    wblock.diagonal() += fwf;
    info.bottomRightCorner(L, L) = wblock;
  }
  // symmetrize away accumulation roundoff
  info = 0.5 * (info + info.transpose()).eval();
  return info;
}

Eigen::MatrixXd precondition_disp(const ObservationSet& obs,
                                  const ModelState& state, ModelId model,
                                  const Hyperparameters& hyper) {
  const Eigen::Index q = obs.q();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    if (obs.y[k] > 0.0) {
      info.noalias() += 0.5 * obs.Z.row(k).transpose() * obs.Z.row(k);
    }
  }
  info.diagonal() += prior_precision_gamma(state, model, hyper);
  info = 0.5 * (info + info.transpose()).eval();
  return info;
}

}  // namespace tdglm
