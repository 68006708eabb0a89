// Compound Poisson-gamma density: exact series evaluation, saddlepoint
// form, unit deviance, and a constructive sampler.

#include "tdglm/tweedie.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tdglm {

namespace {

// Series terms are dropped once they fall this many natural-log units
// below the running maximum; the truncated tail is then O(nterm * e^-drop)
// relative to the sum.
constexpr double kSeriesDrop = 37.0;
constexpr int kSeriesStride = 5;
constexpr int kSeriesMaxTerms = 20000;

struct SeriesBounds {
  long lo;
  long hi;
};

// Bracket the dominant region of f(j) = j*logz - lgamma(1+j) - lgamma(-a*j)
// using its Stirling approximation j*(cc - a1*log j), stepping outward from
// the stationary point jmax until the approximation drops kSeriesDrop below
// its peak value a1*jmax.
SeriesBounds series_bounds(double y, double phi, double alpha, double xi) {
  const double a1 = 1.0 - alpha;  // equals 1/(xi-1)
  const double jmax = std::max(1.0, std::pow(y, 2.0 - xi) / (phi * (2.0 - xi)));
  const double logz = -alpha * std::log(y) + alpha * std::log(xi - 1.0) -
                      a1 * std::log(phi) - std::log(2.0 - xi);
  const double cc = logz + a1 + alpha * std::log(-alpha);
  const double peak = a1 * jmax;

  double j = jmax;
  while (true) {
    j += kSeriesStride;
    if (j * (cc - a1 * std::log(j)) < peak - kSeriesDrop) break;
  }
  const long hi = static_cast<long>(std::ceil(j));

  j = jmax;
  while (true) {
    j -= kSeriesStride;
    if (j < 1.0 || j * (cc - a1 * std::log(j)) < peak - kSeriesDrop) break;
  }
  const long lo = std::max(1L, static_cast<long>(std::floor(j)));
  return {lo, std::min(hi, lo + static_cast<long>(kSeriesMaxTerms) - 1)};
}

// log a(y, phi) for y > 0: log-space sum of z^j / (j! Gamma(-j alpha))
// over the bracketed index range, recentred on the largest term.
double log_series_normalizer(double y, double phi, double alpha, double xi) {
  const double a1 = 1.0 - alpha;
  const double logz = -alpha * std::log(y) + alpha * std::log(xi - 1.0) -
                      a1 * std::log(phi) - std::log(2.0 - xi);
  const SeriesBounds b = series_bounds(y, phi, alpha, xi);

  double wmax = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(b.hi - b.lo + 1));
  for (long j = b.lo; j <= b.hi; ++j) {
    const double jd = static_cast<double>(j);
    const double w = jd * logz - std::lgamma(1.0 + jd) - std::lgamma(-alpha * jd);
    terms.push_back(w);
    wmax = std::max(wmax, w);
  }
  double sum = 0.0;
  for (double w : terms) sum += std::exp(w - wmax);
  return -std::log(y) + wmax + std::log(sum);
}

double log_density_zero(double mu, double phi, double xi) {
  return -std::pow(mu, 2.0 - xi) / (phi * (2.0 - xi));
}

void check_point(double y, double mu, double phi) {
  if (y < 0.0 || !std::isfinite(y)) throw std::domain_error("tweedie: y must be finite and >= 0");
  if (mu <= 0.0 || !std::isfinite(mu)) throw std::domain_error("tweedie: mu must be finite and > 0");
  if (phi <= 0.0 || !std::isfinite(phi)) throw std::domain_error("tweedie: phi must be finite and > 0");
}

}  // namespace

TweedieIndex::TweedieIndex(double xi) : xi_(xi) {
  if (!(xi > 1.0 && xi < 2.0)) {
    throw std::domain_error("TweedieIndex: xi must lie in (1, 2)");
  }
}

TweedieParams::TweedieParams(double mu_, double phi_, TweedieIndex xi_)
    : mu(mu_), phi(phi_), xi(xi_) {
  check_point(0.0, mu, phi);
}

double deviance(double y, double mu, TweedieIndex xi) {
  check_point(y, mu, 1.0);
  const double p = xi.value();
  const double mu1 = std::pow(mu, 1.0 - p);
  const double mu2 = std::pow(mu, 2.0 - p);
  if (y == 0.0) return 2.0 * mu2 / (2.0 - p);
  const double y2 = std::pow(y, 2.0 - p);
  const double d =
      2.0 * ((y2 - y * mu1) / (1.0 - p) - (y2 - mu2) / (2.0 - p));
  // exact zero at y == mu; tiny negative values are roundoff
  return std::max(d, 0.0);
}

double log_density(double y, const TweedieParams& params, DensityMethod method) {
  check_point(y, params.mu, params.phi);
  const double xi = params.xi.value();
  if (y == 0.0) return log_density_zero(params.mu, params.phi, xi);

  if (method == DensityMethod::Saddlepoint) {
    const double d = deviance(y, params.mu, params.xi);
    return -0.5 * std::log(2.0 * M_PI * params.phi * std::pow(y, xi)) -
           d / (2.0 * params.phi);
  }
  const double alpha = params.xi.alpha();
  const double theta_term =
      y * std::pow(params.mu, 1.0 - xi) / (params.phi * (1.0 - xi));
  return log_series_normalizer(y, params.phi, alpha, xi) + theta_term +
         log_density_zero(params.mu, params.phi, xi);
}

double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                      const Eigen::VectorXd& phi, TweedieIndex xi,
                      DensityMethod method) {
  const Eigen::Index n = y.size();
  if (mu.size() != n || phi.size() != n) {
    throw std::invalid_argument("log_likelihood: y, mu, phi length mismatch");
  }
  const double p = xi.value();

  if (method == DensityMethod::Saddlepoint) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      total += log_density(y[k], TweedieParams(mu[k], phi[k], xi), method);
    }
    return total;
  }

  // Series path: lgamma(1+j) and lgamma(-alpha j) depend only on (j, xi),
  // so the tables are shared across observations.
  const double alpha = xi.alpha();
  const double a1 = 1.0 - alpha;
  std::vector<SeriesBounds> bounds(static_cast<std::size_t>(n), SeriesBounds{0, -1});
  long jtop = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    check_point(y[k], mu[k], phi[k]);
    if (y[k] > 0.0) {
      bounds[static_cast<std::size_t>(k)] = series_bounds(y[k], phi[k], alpha, p);
      jtop = std::max(jtop, bounds[static_cast<std::size_t>(k)].hi);
    }
  }
  std::vector<double> lgam_tab(static_cast<std::size_t>(jtop) + 1, 0.0);
  for (long j = 1; j <= jtop; ++j) {
    const double jd = static_cast<double>(j);
    lgam_tab[static_cast<std::size_t>(j)] =
        std::lgamma(1.0 + jd) + std::lgamma(-alpha * jd);
  }

  const double log_xim1 = std::log(p - 1.0);
  const double log_2mxi = std::log(2.0 - p);
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mu2 = std::pow(mu[k], 2.0 - p);
    total -= mu2 / (phi[k] * (2.0 - p));
    if (y[k] == 0.0) continue;

    const double logz = -alpha * std::log(y[k]) + alpha * log_xim1 -
                        a1 * std::log(phi[k]) - log_2mxi;
    const SeriesBounds& b = bounds[static_cast<std::size_t>(k)];
    double wmax = -std::numeric_limits<double>::infinity();
    for (long j = b.lo; j <= b.hi; ++j) {
      wmax = std::max(wmax, static_cast<double>(j) * logz -
                                lgam_tab[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (long j = b.lo; j <= b.hi; ++j) {
      sum += std::exp(static_cast<double>(j) * logz -
                      lgam_tab[static_cast<std::size_t>(j)] - wmax);
    }
    total += -std::log(y[k]) + wmax + std::log(sum) +
             y[k] * std::pow(mu[k], 1.0 - p) / (phi[k] * (1.0 - p));
  }
  return total;
}

Eigen::VectorXd dlog_density_dlogphi(const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& mu,
                                     const Eigen::VectorXd& phi,
                                     TweedieIndex xi) {
  const Eigen::Index n = y.size();
  if (mu.size() != n || phi.size() != n) {
    throw std::invalid_argument("dlog_density_dlogphi: length mismatch");
  }
  const double p = xi.value();
  const double alpha = xi.alpha();
  const double a1 = 1.0 - alpha;

  std::vector<SeriesBounds> bounds(static_cast<std::size_t>(n), SeriesBounds{0, -1});
  long jtop = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    check_point(y[k], mu[k], phi[k]);
    if (y[k] > 0.0) {
      bounds[static_cast<std::size_t>(k)] = series_bounds(y[k], phi[k], alpha, p);
      jtop = std::max(jtop, bounds[static_cast<std::size_t>(k)].hi);
    }
  }
  std::vector<double> lgam_tab(static_cast<std::size_t>(jtop) + 1, 0.0);
  for (long j = 1; j <= jtop; ++j) {
    const double jd = static_cast<double>(j);
    lgam_tab[static_cast<std::size_t>(j)] =
        std::lgamma(1.0 + jd) + std::lgamma(-alpha * jd);
  }

  const double log_xim1 = std::log(p - 1.0);
  const double log_2mxi = std::log(2.0 - p);
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double kappa = std::pow(mu[k], 2.0 - p) / (2.0 - p);
    if (y[k] == 0.0) {
      out[k] = kappa / phi[k];
      continue;
    }
    const double logz = -alpha * std::log(y[k]) + alpha * log_xim1 -
                        a1 * std::log(phi[k]) - log_2mxi;
    const SeriesBounds& b = bounds[static_cast<std::size_t>(k)];
    double wmax = -std::numeric_limits<double>::infinity();
    for (long j = b.lo; j <= b.hi; ++j) {
      wmax = std::max(wmax, static_cast<double>(j) * logz -
                                lgam_tab[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0, jsum = 0.0;
    for (long j = b.lo; j <= b.hi; ++j) {
      const double t = std::exp(static_cast<double>(j) * logz -
                                lgam_tab[static_cast<std::size_t>(j)] - wmax);
      sum += t;
      jsum += static_cast<double>(j) * t;
    }
    const double exponent =
        y[k] * std::pow(mu[k], 1.0 - p) / (1.0 - p) - kappa;
    out[k] = -a1 * (jsum / sum) - exponent / phi[k];
  }
  return out;
}

double sample_cpg(const TweedieParams& params, Rng& rng) {
  const double xi = params.xi.value();
  const double lambda =
      std::pow(params.mu, 2.0 - xi) / (params.phi * (2.0 - xi));
  const long n = rng.poisson(lambda);
  if (n == 0) return 0.0;
  const double jump_shape = (2.0 - xi) / (xi - 1.0);
  const double scale = params.phi * (xi - 1.0) * std::pow(params.mu, xi - 1.0);
  // sum of n iid Gamma jumps collapses to one draw with n-fold shape
  return rng.gamma(static_cast<double>(n) * jump_shape, 1.0 / scale);
}

}  // namespace tdglm
