#include "tvtbip/chain.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double median(std::vector<double> values) {
  const std::size_t n = values.size();
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n / 2), values.end());
  const double upper = values[n / 2];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lower + upper);
}

}  // namespace

std::uint64_t session_seed(std::uint64_t master, std::size_t index) {
  return index == 0 ? master : splitmix64(master ^ splitmix64(index));
}

VariationalState carry_forward_init(const SessionFit& prev_fit,
                                    const std::vector<std::string>& prev_vocab,
                                    const SessionCorpus& next_corpus, const FitConfig& cfg) {
  const Matrix& beta = prev_fit.params.beta;
  const Matrix& eta = prev_fit.params.eta;
  if (beta.rows() != cfg.topics) {
    throw TopicCountMismatch("previous fit has " + std::to_string(beta.rows()) +
                             " topics, config asks for " + std::to_string(cfg.topics));
  }
  if (beta.cols() != static_cast<Eigen::Index>(prev_vocab.size())) {
    throw DimensionMismatch("previous vocabulary does not match previous fit");
  }
  const VocabAlignment align = align_vocabulary(prev_vocab, next_corpus.vocabulary);
  const Eigen::Index K = beta.rows();
  const auto V = static_cast<Eigen::Index>(next_corpus.num_terms());

  Vector fill(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<double> carried_values;
    carried_values.reserve(align.carried.size());
    for (const auto& [next_idx, prev_idx] : align.carried) {
      carried_values.push_back(beta(k, static_cast<Eigen::Index>(prev_idx)));
    }
    if (carried_values.empty()) {
      carried_values.assign(beta.row(k).data(), beta.row(k).data() + beta.cols());
    }
    fill(k) = median(std::move(carried_values));
  }

  Matrix beta_next(K, V);
  Matrix eta_next = Matrix::Zero(K, V);
  for (const auto& [next_idx, prev_idx] : align.carried) {
    beta_next.col(static_cast<Eigen::Index>(next_idx)) = beta.col(static_cast<Eigen::Index>(prev_idx));
    eta_next.col(static_cast<Eigen::Index>(next_idx)) = eta.col(static_cast<Eigen::Index>(prev_idx));
  }
  for (std::size_t idx : align.added) beta_next.col(static_cast<Eigen::Index>(idx)) = fill;

  NmfResult nmf;
  nmf.W = nmf_transform(next_corpus.counts, beta_next, cfg.nmf_transform_iters, cfg.seed).W;
  nmf.H = beta_next;
  CarriedInit carried{beta_next.array().log(), eta_next};
  return init_variational(next_corpus, cfg, nmf, carried);
}

ChainResult fit_chain(std::span<const SessionCorpus> corpora, const FitConfig& cfg,
                      const ChainObserver& observer) {
  if (corpora.empty()) throw Error("fit_chain needs at least one session");
  ChainResult out;
  for (std::size_t t = 0; t < corpora.size(); ++t) {
    const SessionCorpus& corpus = corpora[t];
    if (t > 0 && corpus.session <= corpora[t - 1].session) {
      throw Error("sessions must be strictly increasing");
    }
    FitConfig session_cfg = cfg;
    session_cfg.seed = session_seed(cfg.seed, t);
    try {
      VariationalState init;
      if (t == 0) {
        const NmfResult nmf = nmf_factorize(corpus.counts, cfg.topics, cfg.nmf_iters, session_cfg.seed);
        init = init_variational(corpus, session_cfg, nmf);
      } else {
        init = carry_forward_init(out.fits.back(), corpora[t - 1].vocabulary, corpus, session_cfg);
        out.alignments.push_back(align_vocabulary(corpora[t - 1].vocabulary, corpus.vocabulary));
      }
      spdlog::info("fitting session {} ({} docs, {} terms, {} speakers)", corpus.session,
                   corpus.num_docs(), corpus.num_terms(), corpus.num_speakers());
      out.fits.push_back(fit_session(corpus, session_cfg, std::move(init)));
      out.sessions.push_back(corpus.session);
    } catch (const Diverged& e) {
      throw SessionError(corpus.session, e.what(), true);
    } catch (const SessionError&) {
      throw;
    } catch (const Error& e) {
      throw SessionError(corpus.session, e.what(), false);
    }
    if (observer) observer(t, corpus, out.fits.back());
  }
  return out;
}

}  // namespace tvtbip
