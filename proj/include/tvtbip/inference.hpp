#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tvtbip/corpus.hpp"
#include "tvtbip/model.hpp"
#include "tvtbip/nmf.hpp"

namespace tvtbip {

using Rng = std::mt19937_64;

// Mean-field family: log-normal theta (docs x K) and beta (K x V), normal eta
// (K x V) and x (speakers). Scales are stored as log standard deviations.
struct VariationalState {
  Matrix mu_theta, logsig_theta;
  Matrix mu_beta, logsig_beta;
  Matrix mu_eta, logsig_eta;
  Vector mu_x, logsig_x;

  static VariationalState zeros(std::size_t docs, std::size_t topics, std::size_t terms,
                                std::size_t speakers);

  std::size_t docs() const { return static_cast<std::size_t>(mu_theta.rows()); }
  std::size_t topics() const { return static_cast<std::size_t>(mu_beta.rows()); }
  std::size_t terms() const { return static_cast<std::size_t>(mu_beta.cols()); }
  std::size_t speakers() const { return static_cast<std::size_t>(mu_x.size()); }

  // Number of scalar parameters; also the length of flatten().
  std::size_t size() const;
  // Visits every scalar in a fixed block order (mu_theta, logsig_theta, ...).
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;

  bool all_finite() const;
  void check_matches(const SessionCorpus& corpus) const;
  bool operator==(const VariationalState&) const = default;
};

// Gradients share the parameter layout.
using StateGradient = VariationalState;

// Standard-normal draws for one Monte Carlo sample. `theta` holds one row per
// document of the batch the noise was drawn for, in batch order.
struct Noise {
  Matrix theta;
  Matrix beta;
  Matrix eta;
  Vector x;
};

Noise draw_noise(const VariationalState& state, std::size_t batch_rows, Rng& rng);

struct FitConfig {
  int topics = 25;
  PriorConfig prior;
  long iters = 300000;
  double learning_rate = 0.01;
  int batch_size = 1024;  // clamped to the number of documents
  int mc_samples = 1;
  std::uint64_t seed = 0;
  int elbo_log_every = 100;
  int workers = 1;
  int nmf_iters = 2000;
  int nmf_transform_iters = 500;
  int pairing_checks = 4;       // topic re-pairing checkpoints, see fit_session
  int pairing_candidates = 2;   // swaps polished per checkpoint
  int pairing_polish = 2000;    // steps each candidate runs before comparison
};

// Carried-forward column values for a chained session (K x V of the new
// vocabulary); see carry_forward_init.
struct CarriedInit {
  Matrix mu_beta;
  Matrix mu_eta;
};

inline constexpr double kInitFloor = 1e-6;
inline constexpr double kInitLogSigma = -2.0;
inline constexpr double kExpClamp = 50.0;

VariationalState init_variational(const SessionCorpus& corpus, const FitConfig& cfg,
                                  const NmfResult& nmf,
                                  const std::optional<CarriedInit>& prev = std::nullopt);

// theta, beta = exp(mu + sigma * eps); eta, x = mu + sigma * eps. `noise.theta`
// must cover every document.
SessionParams reparameterized_sample(const VariationalState& state, const Noise& noise);

double lognormal_entropy(double mu, double logsig);
double normal_entropy(double logsig);

// Closed-form entropy of q; the theta block covers `doc_batch` scaled by
// `theta_scale`.
double variational_entropy(const VariationalState& state, std::span<const std::size_t> doc_batch,
                           double theta_scale);

// One-draw ELBO split by block. Log-prior and entropy of theta are already
// scaled by N / |batch|, as is the likelihood.
struct ElboBreakdown {
  double loglik = 0.0;
  double theta = 0.0;
  double beta = 0.0;
  double eta = 0.0;
  double x = 0.0;
  long clamped = 0;  // exp arguments that hit the +-50 guard

  double total() const { return loglik + theta + beta + eta + x; }
};

// ELBO and its pathwise gradient averaged over the given noise draws. The
// entropy terms are exact, so the estimate is E_q[log p(c, params)] by Monte
// Carlo plus H[q] in closed form. Throws NonFinite naming the bad block.
struct ElboEvaluation {
  ElboBreakdown value;
  StateGradient gradient;
};

ElboBreakdown elbo_with_noise(const VariationalState& state, const SessionCorpus& corpus,
                              std::span<const std::size_t> doc_batch, const PriorConfig& prior,
                              std::span<const Noise> noise);

ElboEvaluation elbo_and_gradient(const VariationalState& state, const SessionCorpus& corpus,
                                 std::span<const std::size_t> doc_batch, const PriorConfig& prior,
                                 std::span<const Noise> noise, int workers = 1);

// Draw cfg.mc_samples noise sets from rng and evaluate.
double elbo_estimate(const VariationalState& state, const SessionCorpus& corpus,
                     std::span<const std::size_t> doc_batch, const FitConfig& cfg, Rng& rng);

StateGradient elbo_gradient(const VariationalState& state, const SessionCorpus& corpus,
                            std::span<const std::size_t> doc_batch, const FitConfig& cfg,
                            Rng& rng);

// theta, beta: exp(mu + sigma^2 / 2); eta, x: mu.
SessionParams posterior_means(const VariationalState& state);

struct ElboLogEntry {
  long iteration;
  double elbo;  // mean of the per-step estimates since the previous entry
};

struct SessionFit {
  VariationalState state;
  SessionParams params;
  std::vector<ElboLogEntry> elbo_trace;
  long clamped = 0;
};

// Exchanges topics j and k for the speakers below the median ideal point:
// their documents swap theta columns, and beta/eta are refit so each topic
// keeps its own log rates at the upper group's mean position and takes the
// other topic's at the lower group's.
VariationalState swap_topic_blocs(const VariationalState& s, const SessionCorpus& corpus,
                                  std::size_t j, std::size_t k);

// Runs cfg.iters Adam steps on -ELBO with uniformly sampled batches. At
// cfg.pairing_checks checkpoints (10%, 20%, ... of the run) every pairwise
// swap_topic_blocs candidate is scored on a fixed probe of documents and noise;
// the best cfg.pairing_candidates are run for cfg.pairing_polish steps
// alongside the unchanged state and the best by probe ELBO continues. A
// successful swap is followed by another round. Throws Diverged if an
// estimate becomes non-finite.
SessionFit fit_session(const SessionCorpus& corpus, const FitConfig& cfg, VariationalState init);

// Uniform sample of `batch` distinct rows out of `docs`, ascending.
std::vector<std::size_t> sample_batch(std::size_t docs, std::size_t batch, Rng& rng);

// ---------------------------------------------------------------------------

template <typename F>
void VariationalState::for_each(F&& f) {
  for (Matrix* m : {&mu_theta, &logsig_theta, &mu_beta, &logsig_beta, &mu_eta, &logsig_eta}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) f(m->data()[i]);
  }
  for (Vector* v : {&mu_x, &logsig_x}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) f(v->data()[i]);
  }
}

template <typename F>
void VariationalState::for_each(F&& f) const {
  for (const Matrix* m : {&mu_theta, &logsig_theta, &mu_beta, &logsig_beta, &mu_eta, &logsig_eta}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) f(m->data()[i]);
  }
  for (const Vector* v : {&mu_x, &logsig_x}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) f(v->data()[i]);
  }
}

}  // namespace tvtbip
