#include "fgpl/flowsde/gaussian_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace fgpl::flow {

GaussianOracle::GaussianOracle(Eigen::VectorXd mu0, Eigen::MatrixXd sigma0)
    : mu0_(std::move(mu0)), sigma0_(std::move(sigma0)) {
  if (sigma0_.rows() != mu0_.size() || sigma0_.cols() != mu0_.size()) {
    throw std::invalid_argument("GaussianOracle: covariance shape does not match mean");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma0_);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("GaussianOracle: covariance is not positive definite");
  }
}

Eigen::MatrixXd GaussianOracle::marginal_cov(double t) const {
  const auto n = mu0_.size();
  return (1.0 - t) * (1.0 - t) * sigma0_ + t * t * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd GaussianOracle::velocity(const Eigen::VectorXd& x, double t) const {
  const auto n = mu0_.size();
  const Eigen::VectorXd w = marginal_cov(t).llt().solve(x - marginal_mean(t));
  // E[ε|x] = t·C⁻¹(x - m),  E[x₀|x] = μ₀ + (1-t)·Σ₀·C⁻¹(x - m)
  const Eigen::MatrixXd a = t * Eigen::MatrixXd::Identity(n, n) - (1.0 - t) * sigma0_;
  return a * w - mu0_;
}

Eigen::VectorXd GaussianOracle::score(const Eigen::VectorXd& x, double t) const {
  return -marginal_cov(t).llt().solve(x - marginal_mean(t));
}

VelocityFn GaussianOracle::velocity_fn() const {
  return [self = *this](const Tensor& x, double t) {
    const auto n = self.mu0_.size();
    const Eigen::MatrixXd a = t * Eigen::MatrixXd::Identity(n, n) - (1.0 - t) * self.sigma0_;
    const Eigen::MatrixXd gain = a * self.marginal_cov(t).inverse();
    const Eigen::VectorXd m = self.marginal_mean(t);
    Tensor out(x.shape, std::vector<double>(x.numel()));
    const std::size_t d = static_cast<std::size_t>(n);
    for (std::size_t b = 0; b < x.rows(); ++b) {
      Eigen::Map<const Eigen::VectorXd> xr(&x.values[b * d], n);
      Eigen::Map<Eigen::VectorXd> outr(&out.values[b * d], n);
      outr = gain * (xr - m) - self.mu0_;
    }
    return out;
  };
}

Tensor GaussianOracle::score_batch(const Tensor& x, double t) const {
  const auto n = mu0_.size();
  const Eigen::MatrixXd prec = marginal_cov(t).inverse();
  const Eigen::VectorXd m = marginal_mean(t);
  Tensor out(x.shape, std::vector<double>(x.numel()));
  const std::size_t d = static_cast<std::size_t>(n);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    Eigen::Map<const Eigen::VectorXd> xr(&x.values[b * d], n);
    Eigen::Map<Eigen::VectorXd> outr(&out.values[b * d], n);
    outr = -prec * (xr - m);
  }
  return out;
}

Moments empirical_moments(const Tensor& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      samples.values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Moments out;
  out.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd centered = m.rowwise() - out.mean.transpose();
  out.cov = centered.transpose() * centered / static_cast<double>(n);
  return out;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace fgpl::flow
