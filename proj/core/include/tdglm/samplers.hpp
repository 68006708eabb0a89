#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tdglm/model.hpp"
#include "tdglm/rng.hpp"
#include "tdglm/spatial.hpp"

namespace tdglm {

/// Proposal-distribution state for a MALA step: holds the Cholesky factor of
/// the information matrix M (so the preconditioner is A = M^{-1}).
class Preconditioner {
 public:
  static Preconditioner identity(Eigen::Index n);
  /// Factor an information matrix; falls back to the identity when the
  /// jitter ladder cannot make it positive definite.
  static Preconditioner from_information(const Eigen::MatrixXd& info);

  Eigen::Index size() const { return chol_.size(); }
  bool is_identity() const { return identity_; }

  /// A g = M^{-1} g.
  Eigen::VectorXd apply(const Eigen::VectorXd& g) const;
  /// Draw from N(0, A) as L^{-T} eps.
  Eigen::VectorXd noise(Rng& rng) const;
  /// v' M v (squared Mahalanobis norm under the proposal precision).
  double quad(const Eigen::VectorXd& v) const;

 private:
  CholState chol_;
  bool identity_ = false;
};

struct StepResult {
  Eigen::VectorXd value;
  bool accepted = false;
  double log_post = 0.0;  // log posterior at the returned value
};

using LogPostFn = std::function<double(const Eigen::VectorXd&)>;
using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// One Metropolis-adjusted Langevin step with proposal
/// x* = x + (tau^2/2) A grad(x) + tau A^(1/2) eps and the exact asymmetric
/// acceptance ratio. Non-finite proposal log posteriors auto-reject.
StepResult mala_step(const Eigen::VectorXd& x, const LogPostFn& logpost,
                     const GradFn& grad, const Preconditioner& precond,
                     double tau, Rng& rng);

struct ScalarStepResult {
  double value = 0.0;
  bool accepted = false;
  double log_post = 0.0;
};

using ScalarLogPostFn = std::function<double(double)>;

/// Gaussian random-walk Metropolis on a scalar with open-interval support;
/// proposals outside the support are rejected.
ScalarStepResult rw_step(double x, const ScalarLogPostFn& logpost, double step,
                         double support_lo, double support_hi, Rng& rng);

/// Conjugate draw of the process variance: sigma^-2 ~ Gamma(a + L/2,
/// b + w'R^-1 w / 2); returns sigma^2.
double gibbs_sigma2_process(const Eigen::VectorXd& w, const CholState& kernel,
                            double a_sigma, double b_sigma, Rng& rng);

/// Robbins-Monro update on log tau toward the target acceptance rate, gain
/// min(0.05, iteration^-1/2) where iteration counts adaptation events.
/// Applied once per window during burn-in only.
double adapt_scale(double tau, double recent_accept_rate, double target,
                   long iteration);

/// Ring buffer of recent acceptance flags (window 100) plus lifetime counts.
class AcceptanceWindow {
 public:
  explicit AcceptanceWindow(long window = 100) : window_(window) {}

  void push(bool accepted);
  double window_rate() const;
  double overall_rate() const;
  long total() const { return total_; }

 private:
  long window_;
  std::vector<char> flags_;
  long next_ = 0;
  long filled_ = 0;
  long total_ = 0;
  long accepted_ = 0;
};

/// Proposal scales for the four move types.
struct StepState {
  double tau_mean = 0.0;
  double tau_disp = 0.0;
  double step_xi = 0.0;
  double step_phis = 0.0;
};

struct ChainOutput {
  Eigen::MatrixXd draws;  // kept iterations x parameters
  std::vector<std::string> column_names;
  Eigen::VectorXd log_posterior;  // joint log posterior per kept iteration
  std::map<std::string, double> acceptance;  // post burn-in rates per block
  StepState final_steps;
  std::uint64_t seed = 0;
  ModelId model = ModelId::M1;
  long kept = 0;
  long clamp_events = 0;
  long phis_chol_failures = 0;

  Eigen::Index column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  /// Kept draws of the coefficient block whose columns start with `prefix.`.
  Eigen::MatrixXd block(const std::string& prefix) const;
};

/// Run the full hybrid sampler: MALA for [beta; w] and gamma, random walks
/// for xi and phi_s, Gibbs for sigma^2 and the spike-and-slab latents, with
/// window-based scale adaptation frozen after burn-in. domain is required
/// for M3/M4 and must be null otherwise.
ChainOutput run_chain(ModelId model, const ObservationSet& obs,
                      const SpatialDomain* domain, const Hyperparameters& hyper,
                      std::uint64_t seed);

/// Split each kept draw of w into its mean (the recovered intercept) and the
/// centered effects; centered rows sum to zero exactly.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> hierarchical_center(
    const Eigen::MatrixXd& w_draws);

}  // namespace tdglm
