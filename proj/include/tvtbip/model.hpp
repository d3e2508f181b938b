#pragma once

#include <span>

#include <Eigen/Dense>

#include "tvtbip/corpus.hpp"

namespace tvtbip {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Point estimates for one session: theta (docs x K), beta and eta (K x V),
// x (speakers).
struct SessionParams {
  Matrix theta;
  Matrix beta;
  Matrix eta;
  Vector x;

  std::size_t topics() const { return static_cast<std::size_t>(beta.rows()); }
  std::size_t terms() const { return static_cast<std::size_t>(beta.cols()); }

  // Checks shapes agree, theta and beta are strictly positive, all finite.
  void validate() const;
};

// Gamma(shape, rate) for theta and beta; eta and x are fixed standard normal.
struct PriorConfig {
  double gamma_shape = 0.3;
  double gamma_rate = 0.3;
};

double gamma_log_density(double value, double shape, double rate);
double std_normal_log_density(double value);

// rate_v = sum_k theta_k * beta_kv * exp(x * eta_kv). Terms whose exponent
// exceeds 30 are accumulated in log space; an exponent above 700 throws
// Overflow.
Vector poisson_rate(std::span<const double> theta_row, const Matrix& beta,
                    const Matrix& eta, double x);

// Poisson log-pmf without the log(c!) constant.
double poisson_loglik(std::span<const std::int32_t> counts, const Vector& rates);

// Sparse-row variant used for whole corpora.
double poisson_loglik(std::span<const CountEntry> row, const Vector& rates);

// Sum of poisson_loglik over all documents of the corpus.
double log_likelihood(const SessionParams& params, const SessionCorpus& corpus);

double log_prior(const SessionParams& params, const PriorConfig& prior);

}  // namespace tvtbip
