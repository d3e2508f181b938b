#include "tvtbip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Per-speaker groups of batch positions.
struct SpeakerGroup {
  std::size_t speaker;
  std::vector<std::size_t> positions;
};

std::vector<SpeakerGroup> group_by_speaker(const SessionCorpus& corpus,
                                           std::span<const std::size_t> doc_batch) {
  std::vector<std::size_t> order(doc_batch.size());
  for (std::size_t b = 0; b < order.size(); ++b) order[b] = b;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.doc_speaker[doc_batch[a]] < corpus.doc_speaker[doc_batch[b]];
  });
  std::vector<SpeakerGroup> groups;
  for (std::size_t b : order) {
    const std::size_t s = corpus.doc_speaker[doc_batch[b]];
    if (groups.empty() || groups.back().speaker != s) groups.push_back({s, {}});
    groups.back().positions.push_back(b);
  }
  return groups;
}

// Likelihood accumulators owned by one worker.
struct LikelihoodPartial {
  double loglik = 0.0;
  long clamped = 0;
  Matrix g_beta;       // d loglik / d beta (sampled, log-rate term)
  Matrix g_beta_mean;  // d loglik / d E[beta] (linear term)
  Matrix g_eta;        // d loglik / d eta
};

// Adds the unscaled batch log-likelihood of the speakers in `groups` and its
// derivatives. The log-rate term uses the sampled theta and beta; the linear
// term sum_v lambda_iv uses their exact means under q, which removes the heavy
// upper tail of log-normal draws from the estimator without changing its
// expectation. Rows of g_theta receive d/d theta, rows of g_theta_mean
// d/d E[theta].
void accumulate_likelihood(const SessionCorpus& corpus, std::span<const std::size_t> doc_batch,
                           std::span<const SpeakerGroup> groups, const Matrix& theta,
                           const Matrix& theta_mean, const Matrix& beta, const Matrix& beta_mean,
                           const Matrix& eta, const Vector& x, bool want_grad,
                           LikelihoodPartial& out, Matrix& g_theta, Matrix& g_theta_mean,
                           Vector& g_x) {
  const Eigen::Index K = beta.rows();
  const Eigen::Index V = beta.cols();
  Matrix E(K, V);
  Matrix G(K, V);   // beta * E
  Matrix Gm(K, V);  // E[beta] * E
  Matrix R(K, V);
  Vector A(K);
  Vector T(K);
  Vector th(K);
  if (want_grad) {
    out.g_beta.setZero(K, V);
    out.g_beta_mean.setZero(K, V);
    out.g_eta.setZero(K, V);
  }

  for (const SpeakerGroup& group : groups) {
    const double xs = x(static_cast<Eigen::Index>(group.speaker));
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index v = 0; v < V; ++v) {
        double arg = xs * eta(k, v);
        if (arg > kExpClamp || arg < -kExpClamp) {
          arg = std::clamp(arg, -kExpClamp, kExpClamp);
          ++out.clamped;
        }
        E(k, v) = std::exp(arg);
        G(k, v) = beta(k, v) * E(k, v);
        Gm(k, v) = beta_mean(k, v) * E(k, v);
      }
    }
    A = Gm.rowwise().sum();
    if (want_grad) {
      R.setZero();
      T.setZero();
    }

    for (std::size_t b : group.positions) {
      const auto bb = static_cast<Eigen::Index>(b);
      th = theta.row(bb).transpose();
      for (const CountEntry& e : corpus.counts.row(doc_batch[b])) {
        double lam = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) lam += th(k) * G(k, e.col);
        out.loglik += e.count * std::log(lam);
        if (want_grad) {
          const double w = e.count / lam;
          for (Eigen::Index k = 0; k < K; ++k) {
            g_theta(bb, k) += w * G(k, e.col);
            R(k, e.col) += th(k) * w;
          }
        }
      }
      out.loglik -= theta_mean.row(bb).dot(A.transpose());
      if (want_grad) {
        g_theta_mean.row(bb) -= A.transpose();
        T += theta_mean.row(bb).transpose();
      }
    }

    if (!want_grad) continue;
    double gx = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index v = 0; v < V; ++v) {
        out.g_beta(k, v) += R(k, v) * E(k, v);
        out.g_beta_mean(k, v) -= T(k) * E(k, v);
        const double arg = xs * eta(k, v);
        if (arg <= kExpClamp && arg >= -kExpClamp) {
          // d loglik / d (x eta) through E
          const double dg = R(k, v) * G(k, v) - T(k) * Gm(k, v);
          out.g_eta(k, v) += dg * xs;
          gx += dg * eta(k, v);
        }
      }
    }
    g_x(static_cast<Eigen::Index>(group.speaker)) += gx;
  }
}

struct Draw {
  Matrix theta;  // batch rows
  Matrix beta;
  Matrix eta;
  Vector x;
};

Draw sample_draw(const VariationalState& s, std::span<const std::size_t> doc_batch,
                 const Noise& noise) {
  const auto K = static_cast<Eigen::Index>(s.topics());
  if (noise.theta.rows() != static_cast<Eigen::Index>(doc_batch.size()) || noise.theta.cols() != K ||
      noise.beta.rows() != s.mu_beta.rows() || noise.beta.cols() != s.mu_beta.cols() ||
      noise.eta.rows() != s.mu_eta.rows() || noise.eta.cols() != s.mu_eta.cols() ||
      noise.x.size() != s.mu_x.size()) {
    throw DimensionMismatch("noise shape does not match state and batch");
  }
  Draw d;
  d.theta.resize(static_cast<Eigen::Index>(doc_batch.size()), K);
  for (std::size_t b = 0; b < doc_batch.size(); ++b) {
    const auto i = static_cast<Eigen::Index>(doc_batch[b]);
    const auto bb = static_cast<Eigen::Index>(b);
    d.theta.row(bb) = (s.mu_theta.row(i).array() +
                       s.logsig_theta.row(i).array().exp() * noise.theta.row(bb).array())
                          .exp();
  }
  d.beta = (s.mu_beta.array() + s.logsig_beta.array().exp() * noise.beta.array()).exp();
  d.eta = s.mu_eta.array() + s.logsig_eta.array().exp() * noise.eta.array();
  d.x = s.mu_x.array() + s.logsig_x.array().exp() * noise.x.array();
  return d;
}

ElboEvaluation evaluate(const VariationalState& state, const SessionCorpus& corpus,
                        std::span<const std::size_t> doc_batch, const PriorConfig& prior,
                        std::span<const Noise> noise, int workers, bool want_grad) {
  state.check_matches(corpus);
  if (doc_batch.empty()) throw DimensionMismatch("document batch is empty");
  if (noise.empty()) throw DimensionMismatch("at least one noise draw is required");
  for (std::size_t i : doc_batch) {
    if (i >= corpus.num_docs()) throw DimensionMismatch("batch index out of range");
  }
  const double a = prior.gamma_shape;
  const double rate = prior.gamma_rate;
  const double gamma_const = a * std::log(rate) - std::lgamma(a);
  const double normal_const = -0.5 * std::log(2.0 * std::numbers::pi);
  const double scale = static_cast<double>(corpus.num_docs()) / static_cast<double>(doc_batch.size());
  const auto K = static_cast<Eigen::Index>(state.topics());
  const auto V = static_cast<Eigen::Index>(state.terms());
  const auto S = static_cast<Eigen::Index>(state.speakers());
  const auto B = static_cast<Eigen::Index>(doc_batch.size());
  const double M = static_cast<double>(noise.size());

  const auto groups = group_by_speaker(corpus, doc_batch);
  const std::size_t n_workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, groups.size());

  ElboEvaluation out;
  if (want_grad) out.gradient = VariationalState::zeros(state.docs(), state.topics(), state.terms(), state.speakers());
  StateGradient& g = out.gradient;

  const Matrix sig_theta = state.logsig_theta.array().exp();
  const Matrix sig_beta = state.logsig_beta.array().exp();
  const Matrix sig_eta = state.logsig_eta.array().exp();
  const Vector sig_x = state.logsig_x.array().exp();
  const Matrix beta_mean = (state.mu_beta.array() + 0.5 * sig_beta.array().square()).exp();
  Matrix theta_mean(B, K);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<Eigen::Index>(doc_batch[static_cast<std::size_t>(b)]);
    theta_mean.row(b) = (state.mu_theta.row(i).array() + 0.5 * sig_theta.row(i).array().square()).exp();
  }

  // Prior and entropy terms have closed-form expectations under q: E[log t] = mu,
  // E[t] = exp(mu + sigma^2 / 2) for log-normal t, E[z^2] = mu^2 + sigma^2 for
  // normal z. They do not depend on the noise.
  ElboBreakdown exact;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<Eigen::Index>(doc_batch[static_cast<std::size_t>(b)]);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double mu = state.mu_theta(i, k);
      const double tm = theta_mean(b, k);
      exact.theta += scale * (gamma_const + (a - 1.0) * mu - rate * tm +
                              lognormal_entropy(mu, state.logsig_theta(i, k)));
      if (want_grad) {
        g.mu_theta(i, k) += scale * ((a - 1.0) - rate * tm + 1.0);
        g.logsig_theta(i, k) += scale * (-rate * tm * sig_theta(i, k) * sig_theta(i, k) + 1.0);
      }
    }
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index t = 0; t < V; ++t) {
      const double mu = state.mu_beta(k, t);
      const double bm = beta_mean(k, t);
      exact.beta += gamma_const + (a - 1.0) * mu - rate * bm + lognormal_entropy(mu, state.logsig_beta(k, t));
      const double me = state.mu_eta(k, t);
      const double se = sig_eta(k, t);
      exact.eta += normal_const - 0.5 * (me * me + se * se) + normal_entropy(state.logsig_eta(k, t));
      if (want_grad) {
        g.mu_beta(k, t) += (a - 1.0) - rate * bm + 1.0;
        g.logsig_beta(k, t) += -rate * bm * sig_beta(k, t) * sig_beta(k, t) + 1.0;
        g.mu_eta(k, t) += -me;
        g.logsig_eta(k, t) += -se * se + 1.0;
      }
    }
  }
  for (Eigen::Index s = 0; s < S; ++s) {
    const double mx = state.mu_x(s);
    const double sx = sig_x(s);
    exact.x += normal_const - 0.5 * (mx * mx + sx * sx) + normal_entropy(state.logsig_x(s));
    if (want_grad) {
      g.mu_x(s) += -mx;
      g.logsig_x(s) += -sx * sx + 1.0;
    }
  }
  out.value.theta = exact.theta;
  out.value.beta = exact.beta;
  out.value.eta = exact.eta;
  out.value.x = exact.x;

  // The likelihood is averaged over the draws; its gradient is accumulated
  // with weight 1 / M.
  for (const Noise& eps : noise) {
    const Draw d = sample_draw(state, doc_batch, eps);
    Matrix g_theta = Matrix::Zero(want_grad ? B : 0, want_grad ? K : 0);
    Matrix g_theta_mean = Matrix::Zero(want_grad ? B : 0, want_grad ? K : 0);
    Vector g_x = Vector::Zero(want_grad ? S : 0);

    std::vector<LikelihoodPartial> partials(n_workers);
    const std::span<const SpeakerGroup> all(groups);
    auto chunk = [&](std::size_t w) {
      const std::size_t lo = groups.size() * w / n_workers;
      const std::size_t hi = groups.size() * (w + 1) / n_workers;
      accumulate_likelihood(corpus, doc_batch, all.subspan(lo, hi - lo), d.theta, theta_mean,
                            d.beta, beta_mean, d.eta, d.x, want_grad, partials[w], g_theta,
                            g_theta_mean, g_x);
    };
    if (n_workers == 1) {
      chunk(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(chunk, w);
      chunk(0);
    }

    ElboBreakdown v;
    Matrix lik_beta, lik_beta_mean, lik_eta;
    if (want_grad) {
      lik_beta = Matrix::Zero(K, V);
      lik_beta_mean = Matrix::Zero(K, V);
      lik_eta = Matrix::Zero(K, V);
    }
    for (auto& p : partials) {
      v.loglik += p.loglik;
      v.clamped += p.clamped;
      if (want_grad) {
        lik_beta += p.g_beta;
        lik_beta_mean += p.g_beta_mean;
        lik_eta += p.g_eta;
      }
    }
    v.loglik *= scale;

    if (want_grad) {
      const double wm = scale / M;
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto i = static_cast<Eigen::Index>(doc_batch[static_cast<std::size_t>(b)]);
        for (Eigen::Index k = 0; k < K; ++k) {
          const double path = wm * g_theta(b, k) * d.theta(b, k);
          const double mean = wm * g_theta_mean(b, k) * theta_mean(b, k);
          g.mu_theta(i, k) += path + mean;
          g.logsig_theta(i, k) += path * sig_theta(i, k) * eps.theta(b, k) +
                                  mean * sig_theta(i, k) * sig_theta(i, k);
        }
      }
      for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index t = 0; t < V; ++t) {
          const double path = wm * lik_beta(k, t) * d.beta(k, t);
          const double mean = wm * lik_beta_mean(k, t) * beta_mean(k, t);
          g.mu_beta(k, t) += path + mean;
          g.logsig_beta(k, t) += path * sig_beta(k, t) * eps.beta(k, t) +
                                 mean * sig_beta(k, t) * sig_beta(k, t);
          const double de = wm * lik_eta(k, t);
          g.mu_eta(k, t) += de;
          g.logsig_eta(k, t) += de * sig_eta(k, t) * eps.eta(k, t);
        }
      }
      for (Eigen::Index s = 0; s < S; ++s) {
        const double dx = wm * g_x(s);
        g.mu_x(s) += dx;
        g.logsig_x(s) += dx * sig_x(s) * eps.x(s);
      }
    }

    out.value.loglik += v.loglik / M;
    out.value.clamped += v.clamped;
  }

  const std::pair<const char*, double> blocks[] = {{"loglik", out.value.loglik},
                                                   {"theta", out.value.theta},
                                                   {"beta", out.value.beta},
                                                   {"eta", out.value.eta},
                                                   {"x", out.value.x}};
  for (const auto& [name, val] : blocks) {
    if (!std::isfinite(val)) throw NonFinite(name);
  }
  if (want_grad && !g.all_finite()) throw NonFinite("gradient");
  return out;
}

}  // namespace

VariationalState VariationalState::zeros(std::size_t docs, std::size_t topics, std::size_t terms,
                                         std::size_t speakers) {
  const auto D = static_cast<Eigen::Index>(docs);
  const auto K = static_cast<Eigen::Index>(topics);
  const auto V = static_cast<Eigen::Index>(terms);
  const auto S = static_cast<Eigen::Index>(speakers);
  VariationalState s;
  s.mu_theta = Matrix::Zero(D, K);
  s.logsig_theta = Matrix::Zero(D, K);
  s.mu_beta = Matrix::Zero(K, V);
  s.logsig_beta = Matrix::Zero(K, V);
  s.mu_eta = Matrix::Zero(K, V);
  s.logsig_eta = Matrix::Zero(K, V);
  s.mu_x = Vector::Zero(S);
  s.logsig_x = Vector::Zero(S);
  return s;
}

std::size_t VariationalState::size() const {
  return static_cast<std::size_t>(2 * (mu_theta.size() + mu_beta.size() + mu_eta.size() + mu_x.size()));
}

bool VariationalState::all_finite() const {
  return mu_theta.allFinite() && logsig_theta.allFinite() && mu_beta.allFinite() &&
         logsig_beta.allFinite() && mu_eta.allFinite() && logsig_eta.allFinite() &&
         mu_x.allFinite() && logsig_x.allFinite();
}

void VariationalState::check_matches(const SessionCorpus& corpus) const {
  const auto K = mu_beta.rows();
  const auto V = mu_beta.cols();
  const bool ok = mu_theta.rows() == static_cast<Eigen::Index>(corpus.num_docs()) &&
                  mu_theta.cols() == K && logsig_theta.rows() == mu_theta.rows() &&
                  logsig_theta.cols() == K && V == static_cast<Eigen::Index>(corpus.num_terms()) &&
                  logsig_beta.rows() == K && logsig_beta.cols() == V && mu_eta.rows() == K &&
                  mu_eta.cols() == V && logsig_eta.rows() == K && logsig_eta.cols() == V &&
                  mu_x.size() == static_cast<Eigen::Index>(corpus.num_speakers()) &&
                  logsig_x.size() == mu_x.size();
  if (!ok) throw DimensionMismatch("variational state does not match corpus dimensions");
}

Noise draw_noise(const VariationalState& state, std::size_t batch_rows, Rng& rng) {
  Noise n;
  n.theta = standard_normal(static_cast<Eigen::Index>(batch_rows), state.mu_beta.rows(), rng);
  n.beta = standard_normal(state.mu_beta.rows(), state.mu_beta.cols(), rng);
  n.eta = standard_normal(state.mu_eta.rows(), state.mu_eta.cols(), rng);
  n.x = standard_normal(state.mu_x.size(), 1, rng).col(0);
  return n;
}

VariationalState init_variational(const SessionCorpus& corpus, const FitConfig& cfg,
                                  const NmfResult& nmf, const std::optional<CarriedInit>& prev) {
  const auto K = static_cast<Eigen::Index>(cfg.topics);
  const auto D = static_cast<Eigen::Index>(corpus.num_docs());
  const auto V = static_cast<Eigen::Index>(corpus.num_terms());
  if (nmf.W.rows() != D || nmf.W.cols() != K || nmf.H.rows() != K || nmf.H.cols() != V) {
    throw DimensionMismatch("NMF factors do not match corpus and topic count");
  }
  VariationalState s = VariationalState::zeros(corpus.num_docs(), static_cast<std::size_t>(K),
                                               corpus.num_terms(), corpus.num_speakers());
  s.mu_theta = nmf.W.array().max(kInitFloor).log();
  s.mu_beta = nmf.H.array().max(kInitFloor).log();
  if (prev) {
    if (prev->mu_beta.rows() != K || prev->mu_beta.cols() != V || prev->mu_eta.rows() != K ||
        prev->mu_eta.cols() != V) {
      throw DimensionMismatch("carried initialization does not match K x V");
    }
    s.mu_beta = prev->mu_beta;
    s.mu_eta = prev->mu_eta;
  }
  s.logsig_theta.setConstant(kInitLogSigma);
  s.logsig_beta.setConstant(kInitLogSigma);
  s.logsig_eta.setConstant(kInitLogSigma);
  s.logsig_x.setConstant(kInitLogSigma);
  return s;
}

SessionParams reparameterized_sample(const VariationalState& state, const Noise& noise) {
  std::vector<std::size_t> all(state.docs());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Draw d = sample_draw(state, all, noise);
  return {std::move(d.theta), std::move(d.beta), std::move(d.eta), std::move(d.x)};
}

double lognormal_entropy(double mu, double logsig) { return mu + kHalfLog2PiE + logsig; }

double normal_entropy(double logsig) { return kHalfLog2PiE + logsig; }

double variational_entropy(const VariationalState& state, std::span<const std::size_t> doc_batch,
                           double theta_scale) {
  const auto K = static_cast<Eigen::Index>(state.topics());
  double h = 0.0;
  for (std::size_t i : doc_batch) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < K; ++k) {
      h += theta_scale * lognormal_entropy(state.mu_theta(r, k), state.logsig_theta(r, k));
    }
  }
  h += state.mu_beta.sum() + state.logsig_beta.sum() + kHalfLog2PiE * static_cast<double>(state.mu_beta.size());
  h += state.logsig_eta.sum() + kHalfLog2PiE * static_cast<double>(state.logsig_eta.size());
  h += state.logsig_x.sum() + kHalfLog2PiE * static_cast<double>(state.logsig_x.size());
  return h;
}

ElboBreakdown elbo_with_noise(const VariationalState& state, const SessionCorpus& corpus,
                              std::span<const std::size_t> doc_batch, const PriorConfig& prior,
                              std::span<const Noise> noise) {
  return evaluate(state, corpus, doc_batch, prior, noise, 1, false).value;
}

ElboEvaluation elbo_and_gradient(const VariationalState& state, const SessionCorpus& corpus,
                                 std::span<const std::size_t> doc_batch, const PriorConfig& prior,
                                 std::span<const Noise> noise, int workers) {
  return evaluate(state, corpus, doc_batch, prior, noise, workers, true);
}

namespace {

std::vector<Noise> draw_many(const VariationalState& state, std::size_t batch_rows, int count,
                             Rng& rng) {
  std::vector<Noise> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 1)));
  for (int m = 0; m < std::max(count, 1); ++m) out.push_back(draw_noise(state, batch_rows, rng));
  return out;
}

}  // namespace

double elbo_estimate(const VariationalState& state, const SessionCorpus& corpus,
                     std::span<const std::size_t> doc_batch, const FitConfig& cfg, Rng& rng) {
  const auto noise = draw_many(state, doc_batch.size(), cfg.mc_samples, rng);
  return elbo_with_noise(state, corpus, doc_batch, cfg.prior, noise).total();
}

StateGradient elbo_gradient(const VariationalState& state, const SessionCorpus& corpus,
                            std::span<const std::size_t> doc_batch, const FitConfig& cfg,
                            Rng& rng) {
  const auto noise = draw_many(state, doc_batch.size(), cfg.mc_samples, rng);
  return elbo_and_gradient(state, corpus, doc_batch, cfg.prior, noise, cfg.workers).gradient;
}

SessionParams posterior_means(const VariationalState& state) {
  SessionParams p;
  p.theta = (state.mu_theta.array() + 0.5 * (2.0 * state.logsig_theta.array()).exp()).exp();
  p.beta = (state.mu_beta.array() + 0.5 * (2.0 * state.logsig_beta.array()).exp()).exp();
  p.eta = state.mu_eta;
  p.x = state.mu_x;
  return p;
}

std::vector<std::size_t> sample_batch(std::size_t docs, std::size_t batch, Rng& rng) {
  batch = std::min(batch, docs);
  std::vector<std::size_t> out;
  if (batch == docs) {
    out.resize(docs);
    for (std::size_t i = 0; i < docs; ++i) out[i] = i;
    return out;
  }
  // Floyd's algorithm: exactly `batch` distinct draws.
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(batch * 2);
  for (std::size_t j = docs - batch; j < docs; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  out.assign(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct AdamBlock {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Block>
void adam_ascent(Block& param, const Block& grad, Block& m, Block& v, double lr, double bc1,
                 double bc2, const AdamBlock& c) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  param.array() += lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

namespace {

struct Trajectory {
  VariationalState state, m, v;
  double bc1 = 1.0;
  double bc2 = 1.0;
  Rng rng;
  double window_sum = 0.0;
  long window_n = 0;
  long clamped = 0;
  std::vector<ElboLogEntry> trace;
};

void reset_moments(Trajectory& t) {
  t.m = VariationalState::zeros(t.state.docs(), t.state.topics(), t.state.terms(), t.state.speakers());
  t.v = t.m;
  t.bc1 = 1.0;
  t.bc2 = 1.0;
}

void advance(Trajectory& t, const SessionCorpus& corpus, const FitConfig& cfg, std::size_t batch,
             long it) {
  const AdamBlock adam;
  const auto docs = sample_batch(corpus.num_docs(), batch, t.rng);
  const auto noise = draw_many(t.state, docs.size(), cfg.mc_samples, t.rng);
  ElboEvaluation ev;
  try {
    ev = elbo_and_gradient(t.state, corpus, docs, cfg.prior, noise, cfg.workers);
  } catch (const NonFinite& e) {
    throw Diverged(it, e.what());
  }
  t.clamped += ev.value.clamped;
  t.window_sum += ev.value.total();
  ++t.window_n;

  t.bc1 *= adam.beta1;
  t.bc2 *= adam.beta2;
  const double c1 = 1.0 - t.bc1;
  const double c2 = 1.0 - t.bc2;
  const double lr = cfg.learning_rate;
  const StateGradient& g = ev.gradient;
  VariationalState& s = t.state;
  adam_ascent(s.mu_theta, g.mu_theta, t.m.mu_theta, t.v.mu_theta, lr, c1, c2, adam);
  adam_ascent(s.logsig_theta, g.logsig_theta, t.m.logsig_theta, t.v.logsig_theta, lr, c1, c2, adam);
  adam_ascent(s.mu_beta, g.mu_beta, t.m.mu_beta, t.v.mu_beta, lr, c1, c2, adam);
  adam_ascent(s.logsig_beta, g.logsig_beta, t.m.logsig_beta, t.v.logsig_beta, lr, c1, c2, adam);
  adam_ascent(s.mu_eta, g.mu_eta, t.m.mu_eta, t.v.mu_eta, lr, c1, c2, adam);
  adam_ascent(s.logsig_eta, g.logsig_eta, t.m.logsig_eta, t.v.logsig_eta, lr, c1, c2, adam);
  adam_ascent(s.mu_x, g.mu_x, t.m.mu_x, t.v.mu_x, lr, c1, c2, adam);
  adam_ascent(s.logsig_x, g.logsig_x, t.m.logsig_x, t.v.logsig_x, lr, c1, c2, adam);

  if (t.window_n == cfg.elbo_log_every || it == cfg.iters) {
    const double smoothed = t.window_sum / static_cast<double>(t.window_n);
    t.trace.push_back({it, smoothed});
    spdlog::debug("session {} iteration {} elbo {:.6g}", corpus.session, it, smoothed);
    t.window_sum = 0.0;
    t.window_n = 0;
  }
}

// Fixed documents and noise so candidates are compared on the same draws.
struct PairingProbe {
  std::vector<std::size_t> docs;
  std::vector<Noise> noise;

  double score(const VariationalState& s, const SessionCorpus& corpus, const PriorConfig& prior) const {
    try {
      return elbo_with_noise(s, corpus, docs, prior, noise).total();
    } catch (const NonFinite&) {
      return -std::numeric_limits<double>::infinity();
    }
  }
};

constexpr std::size_t kProbeDocs = 4096;
constexpr int kProbeDraws = 4;

}  // namespace

VariationalState swap_topic_blocs(const VariationalState& s, const SessionCorpus& corpus,
                                  std::size_t j, std::size_t k) {
  const auto S = s.mu_x.size();
  if (j == k || j >= s.topics() || k >= s.topics() || S < 2) {
    throw Error("swap_topic_blocs: need two distinct topics and two speakers");
  }
  std::vector<double> xs(s.mu_x.data(), s.mu_x.data() + S);
  auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  const double median = *mid;
  double x_hi = 0.0, x_lo = 0.0;
  int n_hi = 0, n_lo = 0;
  for (Eigen::Index i = 0; i < S; ++i) {
    if (s.mu_x(i) >= median) {
      x_hi += s.mu_x(i);
      ++n_hi;
    } else {
      x_lo += s.mu_x(i);
      ++n_lo;
    }
  }
  if (n_lo == 0) return s;  // every speaker sits at the median
  x_hi /= n_hi;
  x_lo /= n_lo;
  const double gap = x_hi - x_lo;
  const auto J = static_cast<Eigen::Index>(j);
  const auto Kk = static_cast<Eigen::Index>(k);

  VariationalState out = s;
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    if (s.mu_x(static_cast<Eigen::Index>(corpus.doc_speaker[d])) >= median) continue;
    const auto r = static_cast<Eigen::Index>(d);
    std::swap(out.mu_theta(r, J), out.mu_theta(r, Kk));
    std::swap(out.logsig_theta(r, J), out.logsig_theta(r, Kk));
  }
  // Keep each topic's high-side log rates and take the low side from the
  // other topic; solve for the intercept and slope through both points.
  for (Eigen::Index v = 0; v < s.mu_beta.cols(); ++v) {
    const double j_hi = s.mu_beta(J, v) + x_hi * s.mu_eta(J, v);
    const double j_lo = s.mu_beta(J, v) + x_lo * s.mu_eta(J, v);
    const double k_hi = s.mu_beta(Kk, v) + x_hi * s.mu_eta(Kk, v);
    const double k_lo = s.mu_beta(Kk, v) + x_lo * s.mu_eta(Kk, v);
    out.mu_eta(J, v) = (j_hi - k_lo) / gap;
    out.mu_beta(J, v) = j_hi - x_hi * out.mu_eta(J, v);
    out.mu_eta(Kk, v) = (k_hi - j_lo) / gap;
    out.mu_beta(Kk, v) = k_hi - x_hi * out.mu_eta(Kk, v);
  }
  return out;
}

SessionFit fit_session(const SessionCorpus& corpus, const FitConfig& cfg, VariationalState init) {
  init.check_matches(corpus);
  if (static_cast<int>(init.topics()) != cfg.topics) {
    throw DimensionMismatch("initial state topic count differs from config");
  }
  if (cfg.iters < 0 || cfg.learning_rate <= 0.0 || cfg.batch_size < 1 || cfg.elbo_log_every < 1 ||
      cfg.pairing_checks < 0 || cfg.pairing_polish < 1 || cfg.pairing_candidates < 1) {
    throw Error(
        "fit config: iters >= 0, learning_rate > 0, batch_size >= 1, elbo_log_every >= 1, "
        "pairing_checks >= 0, pairing_polish >= 1, pairing_candidates >= 1");
  }
  const std::size_t batch = std::min(static_cast<std::size_t>(cfg.batch_size), corpus.num_docs());
  Trajectory main;
  main.rng.seed(cfg.seed);
  main.state = std::move(init);
  reset_moments(main);

  // Checkpoints at 10%, 20%, ... of the run. Each tries swapping every topic
  // pair between the two halves of the ideal-point scale.
  std::vector<long> checks;
  const std::size_t K = main.state.topics();
  if (K >= 2 && corpus.num_speakers() >= 2) {
    for (int c = 1; c <= cfg.pairing_checks; ++c) {
      const long at = cfg.iters * c / 10;
      if (at > 0 && at + cfg.pairing_polish <= cfg.iters) checks.push_back(at);
    }
  }
  PairingProbe probe;
  if (!checks.empty()) {
    Rng probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    probe.docs = sample_batch(corpus.num_docs(), kProbeDocs, probe_rng);
    probe.noise = draw_many(main.state, probe.docs.size(), kProbeDraws, probe_rng);
  }

  long it = 1;
  std::size_t next_check = 0;
  while (it <= cfg.iters) {
    if (next_check < checks.size() && it == checks[next_check] + 1) {
      ++next_check;
      const long stop = it + cfg.pairing_polish;
      // Every contender, the unchanged state included, restarts Adam so the
      // comparison is not tilted by the fresh moments of the swapped ones.
      Trajectory best = main;
      reset_moments(best);
      for (long t = it; t < stop; ++t) advance(best, corpus, cfg, batch, t);
      double best_score = probe.score(best.state, corpus, cfg.prior);
      const double base_score = best_score;
      // Screen every pair on the probe as is, then polish the most promising.
      struct Screened {
        double raw;
        std::size_t j, k;
      };
      std::vector<Screened> screened;
      for (std::size_t j = 0; j < K; ++j) {
        for (std::size_t k = j + 1; k < K; ++k) {
          screened.push_back({probe.score(swap_topic_blocs(main.state, corpus, j, k), corpus, cfg.prior), j, k});
        }
      }
      const auto keep = std::min(screened.size(), static_cast<std::size_t>(cfg.pairing_candidates));
      std::partial_sort(screened.begin(), screened.begin() + static_cast<std::ptrdiff_t>(keep), screened.end(),
                        [](const Screened& a, const Screened& b) { return a.raw > b.raw; });
      std::pair<std::size_t, std::size_t> chosen{0, 0};
      for (std::size_t c = 0; c < keep; ++c) {
        const auto [raw, j, k] = screened[c];
        if (!std::isfinite(raw)) continue;
        Trajectory cand = main;
        cand.state = swap_topic_blocs(main.state, corpus, j, k);
        reset_moments(cand);
        try {
          for (long t = it; t < stop; ++t) advance(cand, corpus, cfg, batch, t);
        } catch (const Diverged&) {
          continue;
        }
        const double sc = probe.score(cand.state, corpus, cfg.prior);
        if (sc > best_score) {
          best_score = sc;
          best = std::move(cand);
          chosen = {j, k};
        }
      }
      const bool swapped = best_score > base_score;
      if (swapped) {
        spdlog::info("session {} iteration {}: swapped topics {} and {} across blocs (+{:.1f})",
                     corpus.session, it, chosen.first, chosen.second, best_score - base_score);
      }
      main = std::move(best);
      it = stop;
      // A successful swap earns another round straight away.
      if (swapped && stop + cfg.pairing_polish <= cfg.iters) {
        checks.insert(checks.begin() + static_cast<std::ptrdiff_t>(next_check), stop - 1);
      }
      continue;
    }
    advance(main, corpus, cfg, batch, it);
    ++it;
  }
  if (!main.state.all_finite()) throw Diverged(cfg.iters, "variational state is not finite");
  if (main.clamped > 0) {
    spdlog::info("session {}: {} exp arguments clamped to +-{}", corpus.session, main.clamped, kExpClamp);
  }
  SessionFit fit;
  fit.elbo_trace = std::move(main.trace);
  fit.clamped = main.clamped;
  fit.params = posterior_means(main.state);
  fit.state = std::move(main.state);
  return fit;
}

}  // namespace tvtbip
