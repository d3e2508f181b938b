#include "tvtbip/model.hpp"

#include <cmath>
#include <numbers>

#include "tvtbip/errors.hpp"

namespace tvtbip {

void SessionParams::validate() const {
  if (beta.rows() != eta.rows() || beta.cols() != eta.cols()) {
    throw DimensionMismatch("beta and eta shapes differ");
  }
  if (theta.size() > 0 && theta.cols() != beta.rows()) {
    throw DimensionMismatch("theta columns do not match topic count");
  }
  if (!theta.allFinite() || !beta.allFinite() || !eta.allFinite() || !x.allFinite()) {
    throw NonPositiveParam("non-finite parameter");
  }
  if ((theta.array() <= 0.0).any() || (beta.array() <= 0.0).any()) {
    throw NonPositiveParam("theta and beta must be strictly positive");
  }
}

double gamma_log_density(double value, double shape, double rate) {
  if (!(value > 0.0)) throw NonPositiveParam("gamma density evaluated at a non-positive value");
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(value) -
         rate * value;
}

double std_normal_log_density(double value) {
  return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * value * value;
}

Vector poisson_rate(std::span<const double> theta_row, const Matrix& beta,
                    const Matrix& eta, double x) {
  const auto K = static_cast<std::size_t>(beta.rows());
  if (theta_row.size() != K || eta.rows() != beta.rows() || eta.cols() != beta.cols()) {
    throw DimensionMismatch("poisson_rate: dimensions disagree");
  }
  const Eigen::Index V = beta.cols();
  Vector rate(V);
  for (Eigen::Index v = 0; v < V; ++v) {
    double max_arg = -HUGE_VAL;
    for (std::size_t k = 0; k < K; ++k) {
      const double arg = x * eta(static_cast<Eigen::Index>(k), v);
      if (arg > 700.0) throw Overflow("exp argument x*eta exceeds 700");
      max_arg = std::max(max_arg, arg);
    }
    double r = 0.0;
    if (max_arg > 30.0) {
      // log-sum-exp over topics of log(theta * beta) + x * eta
      double top = -HUGE_VAL;
      for (std::size_t k = 0; k < K; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        top = std::max(top, std::log(theta_row[k]) + std::log(beta(kk, v)) + x * eta(kk, v));
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        acc += std::exp(std::log(theta_row[k]) + std::log(beta(kk, v)) + x * eta(kk, v) - top);
      }
      r = std::exp(top + std::log(acc));
    } else {
      for (std::size_t k = 0; k < K; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        r += theta_row[k] * beta(kk, v) * std::exp(x * eta(kk, v));
      }
    }
    if (!std::isfinite(r)) throw Overflow("poisson rate is not finite");
    rate(v) = r;
  }
  return rate;
}

double poisson_loglik(std::span<const std::int32_t> counts, const Vector& rates) {
  if (counts.size() != static_cast<std::size_t>(rates.size())) {
    throw DimensionMismatch("poisson_loglik: dimensions disagree");
  }
  double ll = 0.0;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    const double rate = rates(static_cast<Eigen::Index>(v));
    if (!std::isfinite(rate) || rate <= 0.0) throw NonFiniteRate("rate must be finite and positive");
    if (counts[v] > 0) ll += counts[v] * std::log(rate);
    ll -= rate;
  }
  return ll;
}

double poisson_loglik(std::span<const CountEntry> row, const Vector& rates) {
  double ll = 0.0;
  for (Eigen::Index v = 0; v < rates.size(); ++v) {
    if (!std::isfinite(rates(v)) || rates(v) <= 0.0) {
      throw NonFiniteRate("rate must be finite and positive");
    }
    ll -= rates(v);
  }
  for (const auto& e : row) {
    if (e.col < 0 || e.col >= rates.size()) throw DimensionMismatch("count column out of range");
    ll += e.count * std::log(rates(e.col));
  }
  return ll;
}

double log_likelihood(const SessionParams& params, const SessionCorpus& corpus) {
  if (static_cast<std::size_t>(params.theta.rows()) != corpus.num_docs() ||
      params.terms() != corpus.num_terms() ||
      static_cast<std::size_t>(params.x.size()) != corpus.num_speakers()) {
    throw DimensionMismatch("log_likelihood: params do not match corpus");
  }
  double ll = 0.0;
  for (std::size_t i = 0; i < corpus.num_docs(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const std::span<const double> theta_row(params.theta.row(row).data(),
                                            static_cast<std::size_t>(params.theta.cols()));
    const Vector rate = poisson_rate(theta_row, params.beta, params.eta,
                                     params.x(static_cast<Eigen::Index>(corpus.doc_speaker[i])));
    ll += poisson_loglik(corpus.counts.row(i), rate);
  }
  return ll;
}

double log_prior(const SessionParams& params, const PriorConfig& prior) {
  const double a = prior.gamma_shape;
  const double b = prior.gamma_rate;
  if (!(a > 0.0) || !(b > 0.0)) throw Error("gamma prior shape and rate must be positive");
  if ((params.theta.array() <= 0.0).any() || (params.beta.array() <= 0.0).any()) {
    throw NonPositiveParam("theta and beta must be strictly positive");
  }
  const double gamma_const = a * std::log(b) - std::lgamma(a);
  auto gamma_block = [&](const Matrix& m) {
    return static_cast<double>(m.size()) * gamma_const +
           (a - 1.0) * m.array().log().sum() - b * m.sum();
  };
  const double normal_const = -0.5 * std::log(2.0 * std::numbers::pi);
  auto normal_block = [&](auto&& m) {
    return static_cast<double>(m.size()) * normal_const - 0.5 * m.squaredNorm();
  };
  return gamma_block(params.theta) + gamma_block(params.beta) + normal_block(params.eta) +
         normal_block(params.x);
}

}  // namespace tvtbip
