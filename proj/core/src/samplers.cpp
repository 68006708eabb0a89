#include "tdglm/samplers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdglm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gamma_log_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}
}  // namespace

Preconditioner Preconditioner::identity(Eigen::Index n) {
  Preconditioner p;
  p.chol_ = CholState(Eigen::MatrixXd::Identity(n, n), 0.0, 0.0);
  p.identity_ = true;
  return p;
}

Preconditioner Preconditioner::from_information(const Eigen::MatrixXd& info) {
  try {
    Preconditioner p;
    p.chol_ = chol_factor(info);
    return p;
  } catch (const NotPositiveDefiniteError&) {
    return identity(info.rows());
  }
}

Eigen::VectorXd Preconditioner::apply(const Eigen::VectorXd& g) const {
  if (identity_) return g;
  return chol_.solve(g);
}

Eigen::VectorXd Preconditioner::noise(Rng& rng) const {
  Eigen::VectorXd eps(chol_.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  if (identity_) return eps;
  return chol_.solve_lower_transpose(eps);
}

double Preconditioner::quad(const Eigen::VectorXd& v) const {
  if (identity_) return v.squaredNorm();
  return (chol_.lower().transpose() * v).squaredNorm();
}

StepResult mala_step(const Eigen::VectorXd& x, const LogPostFn& logpost,
                     const GradFn& grad, const Preconditioner& precond,
                     double tau, Rng& rng) {
  const double lp_x = logpost(x);
  const Eigen::VectorXd g_x = grad(x);
  const double half_tau2 = 0.5 * tau * tau;

  const Eigen::VectorXd mean_fwd = x + half_tau2 * precond.apply(g_x);
  const Eigen::VectorXd proposal = mean_fwd + tau * precond.noise(rng);

  const double lp_star = logpost(proposal);
  if (!std::isfinite(lp_star)) return {x, false, lp_x};

  const Eigen::VectorXd g_star = grad(proposal);
  const Eigen::VectorXd mean_rev = proposal + half_tau2 * precond.apply(g_star);
  const double inv_2tau2 = 1.0 / (2.0 * tau * tau);
  const double log_q_fwd = -inv_2tau2 * precond.quad(proposal - mean_fwd);
  const double log_q_rev = -inv_2tau2 * precond.quad(x - mean_rev);

  const double log_ratio = lp_star - lp_x + log_q_rev - log_q_fwd;
  if (std::log(rng.uniform()) < log_ratio) return {proposal, true, lp_star};
  return {x, false, lp_x};
}

ScalarStepResult rw_step(double x, const ScalarLogPostFn& logpost, double step,
                         double support_lo, double support_hi, Rng& rng) {
  const double lp_x = logpost(x);
  const double proposal = x + step * rng.normal();
  if (proposal <= support_lo || proposal >= support_hi) {
    return {x, false, lp_x};
  }
  const double lp_star = logpost(proposal);
  if (!std::isfinite(lp_star)) return {x, false, lp_x};
  if (std::log(rng.uniform()) < lp_star - lp_x) return {proposal, true, lp_star};
  return {x, false, lp_x};
}

double gibbs_sigma2_process(const Eigen::VectorXd& w, const CholState& kernel,
                            double a_sigma, double b_sigma, Rng& rng) {
  const double shape = a_sigma + 0.5 * static_cast<double>(w.size());
  const double rate = b_sigma + 0.5 * kernel.quad_form(w);
  return 1.0 / rng.gamma(shape, rate);
}

double adapt_scale(double tau, double recent_accept_rate, double target,
                   long iteration) {
  const double gain =
      std::min(0.05, 1.0 / std::sqrt(static_cast<double>(std::max(iteration, 1L))));
  return tau * std::exp(gain * (recent_accept_rate - target));
}

void AcceptanceWindow::push(bool accepted) {
  if (flags_.size() < static_cast<std::size_t>(window_)) {
    flags_.push_back(accepted ? 1 : 0);
  } else {
    flags_[static_cast<std::size_t>(next_)] = accepted ? 1 : 0;
  }
  next_ = (next_ + 1) % window_;
  filled_ = std::min(filled_ + 1, window_);
  ++total_;
  if (accepted) ++accepted_;
}

double AcceptanceWindow::window_rate() const {
  if (filled_ == 0) return 0.0;
  long acc = 0;
  for (long i = 0; i < filled_; ++i) acc += flags_[static_cast<std::size_t>(i)];
  return static_cast<double>(acc) / static_cast<double>(filled_);
}

double AcceptanceWindow::overall_rate() const {
  if (total_ == 0) return 0.0;
  return static_cast<double>(accepted_) / static_cast<double>(total_);
}

Eigen::Index ChainOutput::column(const std::string& name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    if (column_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw std::invalid_argument("ChainOutput: no column named " + name);
}

bool ChainOutput::has_column(const std::string& name) const {
  for (const auto& n : column_names) {
    if (n == name) return true;
  }
  return false;
}

Eigen::MatrixXd ChainOutput::block(const std::string& prefix) const {
  const std::string key = prefix + ".";
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    if (column_names[i].rfind(key, 0) == 0) {
      cols.push_back(static_cast<Eigen::Index>(i));
    }
  }
  Eigen::MatrixXd out(draws.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = draws.col(cols[j]);
  }
  return out;
}

ChainOutput run_chain(ModelId model, const ObservationSet& obs,
                      const SpatialDomain* domain, const Hyperparameters& hyper,
                      std::uint64_t seed) {
  hyper.validate();
  const bool spatial = has_spatial(model);
  const bool frozen = hyper.freeze_spatial_at_zero;
  const bool selection = has_selection(model);
  if (spatial && domain == nullptr) {
    throw std::invalid_argument("run_chain: M3/M4 require a spatial domain");
  }
  if (!spatial && domain != nullptr) {
    throw std::invalid_argument("run_chain: M1/M2 take no spatial domain");
  }
  if (spatial && domain->size() != obs.n_sites) {
    throw std::invalid_argument("run_chain: domain size != number of sites");
  }

  const Eigen::Index p = obs.p();
  const Eigen::Index q = obs.q();
  const Eigen::Index L = spatial ? obs.n_sites : 0;
  const Eigen::Index mean_dim = frozen || !spatial ? p : p + L;

  Rng rng(seed);
  ModelState state = ModelState::init(model, p, q, obs.n_sites, hyper);

  CholState chol_r;
  if (spatial) {
    chol_r = chol_factor(matern_correlation(domain->dist, state.phi_s, hyper.nu));
  }

  StepState steps;
  steps.tau_mean = hyper.tau_mean0 > 0.0
                       ? hyper.tau_mean0
                       : std::pow(static_cast<double>(mean_dim), -1.0 / 6.0);
  steps.tau_disp = hyper.tau_disp0 > 0.0
                       ? hyper.tau_disp0
                       : std::pow(static_cast<double>(q), -1.0 / 6.0);
  steps.step_xi = hyper.step_xi0;
  steps.step_phis = hyper.step_phis0 > 0.0
                        ? hyper.step_phis0
                        : 0.1 * (hyper.b_phis - hyper.a_phis);

  Preconditioner precond_mean = Preconditioner::identity(mean_dim);
  Preconditioner precond_disp = Preconditioner::identity(q);

  AcceptanceWindow win_mean, win_disp, win_xi, win_phis;
  long acc_mean = 0, acc_disp = 0, acc_xi = 0, acc_phis = 0, post_iters = 0;

  // column layout: beta, gamma, xi, then process block, then inclusion rates
  std::vector<std::string> names;
  for (Eigen::Index u = 0; u < p; ++u) names.push_back("beta." + std::to_string(u + 1));
  for (Eigen::Index v = 0; v < q; ++v) names.push_back("gamma." + std::to_string(v + 1));
  names.push_back("xi");
  if (spatial) {
    for (Eigen::Index i = 0; i < L; ++i) names.push_back("w." + std::to_string(i + 1));
    names.push_back("sigma2");
    names.push_back("phi_s");
  }
  if (selection) {
    names.push_back("alpha_beta");
    names.push_back("alpha_gamma");
  }

  const long n_kept = (hyper.iters - hyper.burnin) / hyper.thin;
  ChainOutput out;
  out.model = model;
  out.seed = seed;
  out.column_names = names;
  out.draws.resize(n_kept, static_cast<Eigen::Index>(names.size()));
  out.log_posterior.resize(n_kept);

  const double phis_lo = hyper.a_phis, phis_hi = hyper.b_phis;
  double lp_phis_cur = 0.0;  // kernel part of the phi_s posterior, kept current
  if (spatial && !frozen) {
    lp_phis_cur = -0.5 * chol_r.log_det() -
                  0.5 / state.sigma2 * chol_r.quad_form(state.w);
  }

  long kept = 0;
  for (long iter = 0; iter < hyper.iters; ++iter) {
    const bool in_burnin = iter < hyper.burnin;

    // expected-information preconditioners, frozen after burn-in
    if (in_burnin && iter % hyper.precond_refresh == 0) {
      precond_mean = Preconditioner::from_information(
          precondition_mean(obs, state, spatial ? &chol_r : nullptr, model, hyper));
      precond_disp = Preconditioner::from_information(
          precondition_disp(obs, state, model, hyper));
    }

    // 1. MALA block update of [beta; w]
    {
      Eigen::VectorXd block(mean_dim);
      block.head(p) = state.beta;
      if (spatial && !frozen) block.tail(L) = state.w;
      auto logpost = [&](const Eigen::VectorXd& v) {
        return log_post_mean_block(v, obs, state, spatial ? &chol_r : nullptr,
                                   model, hyper);
      };
      auto gradient = [&](const Eigen::VectorXd& v) {
        return grad_mean_block(v, obs, state, spatial ? &chol_r : nullptr,
                               model, hyper);
      };
      const StepResult res =
          mala_step(block, logpost, gradient, precond_mean, steps.tau_mean, rng);
      state.beta = res.value.head(p);
      if (spatial && !frozen) state.w = res.value.tail(L);
      win_mean.push(res.accepted);
      if (!in_burnin) { acc_mean += res.accepted; }
    }

    // 2. MALA update of gamma against the exact series conditional
    {
      auto logpost = [&](const Eigen::VectorXd& g) {
        return log_post_disp_exact(g, obs, state, model, hyper);
      };
      auto gradient = [&](const Eigen::VectorXd& g) {
        return grad_disp_exact(g, obs, state, model, hyper,
                               hyper.disp_grad_numeric ? GradMode::Numeric
                                                       : GradMode::Analytic);
      };
      const StepResult res = mala_step(state.gamma, logpost, gradient,
                                       precond_disp, steps.tau_disp, rng);
      state.gamma = res.value;
      win_disp.push(res.accepted);
      if (!in_burnin) { acc_disp += res.accepted; }
    }

    // 3. random-walk update of xi against the exact series likelihood
    double loglik_series;
    {
      auto logpost = [&](double x) {
        return log_post_xi(x, obs, state, model, hyper);
      };
      const ScalarStepResult res = rw_step(state.xi, logpost, steps.step_xi,
                                           hyper.a_xi, hyper.b_xi, rng);
      state.xi = res.value;
      loglik_series = res.log_post;
      win_xi.push(res.accepted);
      if (!in_burnin) { acc_xi += res.accepted; }
    }

    if (spatial && !frozen) {
      // 4. random-walk update of phi_s, keeping the accepted factorization
      {
        lp_phis_cur = -0.5 * chol_r.log_det() -
                      0.5 / state.sigma2 * chol_r.quad_form(state.w);
        const double proposal = state.phi_s + steps.step_phis * rng.normal();
        bool accepted = false;
        if (proposal > phis_lo && proposal < phis_hi) {
          try {
            const CholState chol_star = chol_factor(
                matern_correlation(domain->dist, proposal, hyper.nu));
            const double lp_star = -0.5 * chol_star.log_det() -
                                   0.5 / state.sigma2 * chol_star.quad_form(state.w);
            if (std::log(rng.uniform()) < lp_star - lp_phis_cur) {
              state.phi_s = proposal;
              chol_r = chol_star;
              lp_phis_cur = lp_star;
              accepted = true;
            }
          } catch (const NotPositiveDefiniteError&) {
            ++out.phis_chol_failures;
          }
        }
        win_phis.push(accepted);
        if (!in_burnin) { acc_phis += accepted; }
      }

      // 5. conjugate update of the process variance
      state.sigma2 =
          gibbs_sigma2_process(state.w, chol_r, hyper.a_sigma, hyper.b_sigma, rng);
    }

    // 6. spike-and-slab latent sweeps
    if (selection) {
      state.sel_beta = gibbs_spike_slab(state.beta, state.sel_beta, hyper.nu0,
                                        hyper.a_sigma_beta, hyper.b_sigma_beta, rng);
      state.sel_gamma = gibbs_spike_slab(state.gamma, state.sel_gamma, hyper.nu0,
                                         hyper.a_sigma_gamma, hyper.b_sigma_gamma, rng);
    }

    // 7. scale adaptation, burn-in only; the gain decays in the number of
    // adaptation events
    if (in_burnin && (iter + 1) % hyper.adapt_window == 0) {
      const long event = (iter + 1) / hyper.adapt_window;
      steps.tau_mean = adapt_scale(steps.tau_mean, win_mean.window_rate(),
                                   hyper.target_mala, event);
      steps.tau_disp = adapt_scale(steps.tau_disp, win_disp.window_rate(),
                                   hyper.target_mala, event);
      steps.step_xi = adapt_scale(steps.step_xi, win_xi.window_rate(),
                                  hyper.target_rw, event);
      if (spatial && !frozen) {
        steps.step_phis = adapt_scale(steps.step_phis, win_phis.window_rate(),
                                      hyper.target_rw, event);
      }
    }

    if (!in_burnin) {
      ++post_iters;
      if ((iter - hyper.burnin) % hyper.thin == 0 && kept < n_kept) {
        Eigen::Index c = 0;
        for (Eigen::Index u = 0; u < p; ++u) out.draws(kept, c++) = state.beta[u];
        for (Eigen::Index v = 0; v < q; ++v) out.draws(kept, c++) = state.gamma[v];
        out.draws(kept, c++) = state.xi;
        if (spatial) {
          for (Eigen::Index i = 0; i < L; ++i) out.draws(kept, c++) = state.w[i];
          out.draws(kept, c++) = state.sigma2;
          out.draws(kept, c++) = state.phi_s;
        }
        if (selection) {
          out.draws(kept, c++) = state.sel_beta.alpha;
          out.draws(kept, c++) = state.sel_gamma.alpha;
        }

        // joint log posterior: exact likelihood plus every prior that moves
        double lp = loglik_series;
        const Eigen::VectorXd prec_b = prior_precision_beta(state, model, hyper);
        const Eigen::VectorXd prec_g = prior_precision_gamma(state, model, hyper);
        for (Eigen::Index u = 0; u < p; ++u) {
          lp += 0.5 * std::log(prec_b[u] / (2.0 * M_PI)) -
                0.5 * prec_b[u] * state.beta[u] * state.beta[u];
        }
        for (Eigen::Index v = 0; v < q; ++v) {
          lp += 0.5 * std::log(prec_g[v] / (2.0 * M_PI)) -
                0.5 * prec_g[v] * state.gamma[v] * state.gamma[v];
        }
        if (spatial && !frozen) {
          const double Ld = static_cast<double>(L);
          lp += -0.5 * (Ld * std::log(2.0 * M_PI * state.sigma2) + chol_r.log_det()) -
                0.5 / state.sigma2 * chol_r.quad_form(state.w);
          lp += gamma_log_pdf(1.0 / state.sigma2, hyper.a_sigma, hyper.b_sigma);
        }
        if (selection) {
          for (Eigen::Index u = 0; u < p; ++u) {
            lp += state.sel_beta.zeta[u] == 1.0 ? std::log(state.sel_beta.alpha)
                                                : std::log1p(-state.sel_beta.alpha);
            lp += gamma_log_pdf(1.0 / state.sel_beta.sigma2_coef[u],
                                hyper.a_sigma_beta, hyper.b_sigma_beta);
          }
          for (Eigen::Index v = 0; v < q; ++v) {
            lp += state.sel_gamma.zeta[v] == 1.0 ? std::log(state.sel_gamma.alpha)
                                                 : std::log1p(-state.sel_gamma.alpha);
            lp += gamma_log_pdf(1.0 / state.sel_gamma.sigma2_coef[v],
                                hyper.a_sigma_gamma, hyper.b_sigma_gamma);
          }
        }
        out.log_posterior[kept] = lp;
        out.clamp_events += linear_predictors(state, obs, model, hyper).clamped;
        ++kept;
      }
    }
  }

  out.kept = kept;
  out.final_steps = steps;
  const double denom = std::max(post_iters, 1L);
  out.acceptance["mean_block"] = static_cast<double>(acc_mean) / denom;
  out.acceptance["disp_block"] = static_cast<double>(acc_disp) / denom;
  out.acceptance["xi"] = static_cast<double>(acc_xi) / denom;
  if (spatial && !frozen) {
    out.acceptance["phi_s"] = static_cast<double>(acc_phis) / denom;
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> hierarchical_center(
    const Eigen::MatrixXd& w_draws) {
  if (w_draws.rows() < 1) {
    throw std::invalid_argument("hierarchical_center: need at least one draw");
  }
  Eigen::VectorXd beta0 = w_draws.rowwise().mean();
  Eigen::MatrixXd centered = w_draws.colwise() - beta0;
  return {std::move(beta0), std::move(centered)};
}

}  // namespace tdglm
