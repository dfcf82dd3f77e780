#pragma once

#include <Eigen/Dense>

#include "fgpl/diffcore/tensor.hpp"
#include "fgpl/flowsde/sampler.hpp"

namespace fgpl::flow {

// Closed-form quantities for x_t = (1 - t)x_0 + tε with x_0 ~ N(μ₀, Σ₀).
class GaussianOracle {
 public:
  GaussianOracle(Eigen::VectorXd mu0, Eigen::MatrixXd sigma0);

  std::size_t dim() const { return static_cast<std::size_t>(mu0_.size()); }
  const Eigen::VectorXd& data_mean() const { return mu0_; }
  const Eigen::MatrixXd& data_cov() const { return sigma0_; }

  Eigen::VectorXd marginal_mean(double t) const { return (1.0 - t) * mu0_; }
  Eigen::MatrixXd marginal_cov(double t) const;

  // Posterior-mean velocity E[ε - x_0 | x_t = x].
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t) const;
  // ∇ log q_t(x) = -C_t⁻¹(x - m_t).
  Eigen::VectorXd score(const Eigen::VectorXd& x, double t) const;

  VelocityFn velocity_fn() const;
  // Batched score [B, d] -> [B, d].
  Tensor score_batch(const Tensor& x, double t) const;

 private:
  Eigen::VectorXd mu0_;
  Eigen::MatrixXd sigma0_;
};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and (biased) covariance of the rows of a [N, d] tensor.
Moments empirical_moments(const Tensor& samples);
double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace fgpl::flow
