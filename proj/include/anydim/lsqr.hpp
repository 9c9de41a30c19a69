#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "anydim/errors.hpp"
#include "anydim/sparse_operator.hpp"

namespace anydim {

struct LsqrOptions {
  double atol = 1e-12;
  double btol = 1e-12;
  Index max_iterations = 10'000;
};

struct LsqrResult {
  Eigen::VectorXd x;
  Index iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;         // ||a x - b||
  double normal_residual_norm = 0.0;  // ||a^T (a x - b)||, estimated
};

// Golub-Kahan bidiagonalization least-squares solver. Started from x = 0 it
// converges to the minimum-norm least-squares solution; the operator is only
// touched through apply / apply_transpose.
inline LsqrResult lsqr_solve(const SparseOperator& a, const Eigen::VectorXd& b,
                             const LsqrOptions& opts = {}) {
  if (a.rows() != b.size()) throw ConfigError("lsqr: rhs length does not match operator rows");
  const Index n = a.cols();
  LsqrResult res;
  res.x = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd u = b;
  double beta = u.norm();
  const double bnorm = beta;
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }
  u /= beta;
  Eigen::VectorXd v = a.apply_transpose(u);
  double alpha = v.norm();
  if (alpha == 0.0) {
    // b is orthogonal to the range; x = 0 is the minimizer.
    res.converged = true;
    res.residual_norm = bnorm;
    return res;
  }
  v /= alpha;
  Eigen::VectorXd w = v;

  double phibar = beta;
  double rhobar = alpha;
  double norm_a_est = 0.0;

  for (Index iter = 1; iter <= opts.max_iterations; ++iter) {
    u = a.apply(v) - alpha * u;
    beta = u.norm();
    if (beta > 0.0) u /= beta;
    v = a.apply_transpose(u) - beta * v;
    alpha = v.norm();
    if (alpha > 0.0) v /= alpha;

    norm_a_est = std::sqrt(norm_a_est * norm_a_est + alpha * alpha + beta * beta);

    const double rho = std::hypot(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;

    res.x += (phi / rho) * w;
    w = v - (theta / rho) * w;

    res.iterations = iter;
    res.residual_norm = phibar;
    res.normal_residual_norm = phibar * alpha * std::abs(c);

    const double stop1 = opts.btol * bnorm + opts.atol * norm_a_est * res.x.norm();
    const double stop2 = opts.atol * std::max(norm_a_est * res.residual_norm, 1e-300);
    if (res.residual_norm <= stop1 || res.normal_residual_norm <= stop2) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Minimum-norm least-squares solve. Reports non-convergence instead of
// silently returning a stale iterate.
inline Eigen::VectorXd min_norm_lstsq(const SparseOperator& a, const Eigen::VectorXd& b,
                                      double tol = 1e-12, Index max_iterations = 10'000) {
  LsqrOptions opts;
  opts.atol = tol;
  opts.btol = tol;
  opts.max_iterations = max_iterations;
  LsqrResult res = lsqr_solve(a, b, opts);
  if (!res.converged)
    throw NumericalError("min_norm_lstsq did not converge within " +
                         std::to_string(max_iterations) + " iterations (residual " +
                         std::to_string(res.residual_norm) + ")");
  return res.x;
}

}  // namespace anydim
