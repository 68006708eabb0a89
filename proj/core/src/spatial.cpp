#include "tdglm/spatial.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace tdglm {

SpatialDomain::SpatialDomain(Eigen::MatrixXd coords_)
    : coords(std::move(coords_)), dist(pairwise_distances(coords)) {}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& coords) {
  if (coords.rows() < 1 || coords.cols() != 2) {
    throw std::invalid_argument("pairwise_distances: coords must be L x 2 with L >= 1");
  }
  if (!coords.allFinite()) {
    throw std::invalid_argument("pairwise_distances: non-finite coordinate");
  }
  const Eigen::Index L = coords.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = i + 1; j < L; ++j) {
      const double v = (coords.row(i) - coords.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Eigen::MatrixXd matern_correlation(const Eigen::MatrixXd& dist, double phi_s,
                                   double nu) {
  if (phi_s <= 0.0 || nu <= 0.0) {
    throw std::invalid_argument("matern_correlation: phi_s and nu must be > 0");
  }
  const Eigen::Index L = dist.rows();
  const double norm_const = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = i + 1; j < L; ++j) {
      const double x = phi_s * dist(i, j);
      double v;
      if (x == 0.0) {
        v = 1.0;
      } else if (nu == 0.5) {
        v = std::exp(-x);  // exponential kernel, exact
      } else {
        v = norm_const * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
      }
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

CholState::CholState(Eigen::MatrixXd lower, double log_det, double jitter)
    : lower_(std::move(lower)), log_det_(log_det), jitter_(jitter) {}

Eigen::VectorXd CholState::solve(const Eigen::VectorXd& v) const {
  Eigen::VectorXd x = lower_.triangularView<Eigen::Lower>().solve(v);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(x);
}

double CholState::quad_form(const Eigen::VectorXd& v) const {
  return lower_.triangularView<Eigen::Lower>().solve(v).squaredNorm();
}

Eigen::VectorXd CholState::solve_lower_transpose(const Eigen::VectorXd& v) const {
  return lower_.transpose().triangularView<Eigen::Upper>().solve(v);
}

Eigen::MatrixXd CholState::inverse() const {
  const Eigen::Index n = lower_.rows();
  Eigen::MatrixXd inv = lower_.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  return inv.transpose() * inv;
}

CholState chol_factor(const Eigen::MatrixXd& cov, double base_jitter) {
  if (cov.rows() != cov.cols()) {
    throw std::invalid_argument("chol_factor: matrix must be square");
  }
  const double jitter_cap = 1e-4 * cov.diagonal().mean();
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd m = cov;
    if (jitter > 0.0) m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd lower = llt.matrixL();
      const double log_det = 2.0 * lower.diagonal().array().log().sum();
      if (std::isfinite(log_det)) return CholState(lower, log_det, jitter);
    }
    jitter = (jitter == 0.0) ? base_jitter : jitter * 10.0;
    if (jitter > jitter_cap || jitter <= 0.0) {
      throw NotPositiveDefiniteError("chol_factor: jitter ladder exhausted");
    }
  }
}

}  // namespace tdglm
