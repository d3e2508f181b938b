#include "tvtbip/synth.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "tvtbip/analysis.hpp"
#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

std::string padded(const std::string& prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string digits = std::to_string(i);
  return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

constexpr double kPositiveFloor = std::numeric_limits<double>::min();

}  // namespace

std::vector<std::int64_t> draw_counts(const Vector& rate, std::mt19937_64& rng) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(rate.size()), 0);
  for (Eigen::Index v = 0; v < rate.size(); ++v) {
    if (rate(v) > 1e-300) {
      std::poisson_distribution<std::int64_t> pois(rate(v));
      out[static_cast<std::size_t>(v)] = pois(rng);
    }
  }
  return out;
}

SyntheticData generate_corpus(const Scenario& sc, std::uint64_t seed) {
  if (sc.topics < 1 || sc.terms < 1 || sc.docs < 1 || sc.speakers < 1 || sc.sessions < 1 ||
      sc.gap < 0.0 || sc.drift < 0.0 || sc.x_noise < 0.0) {
    throw Error("scenario dimensions must be >= 1 and gap, drift, x_noise >= 0");
  }
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(sc.prior.gamma_shape, 1.0 / sc.prior.gamma_rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto K = static_cast<Eigen::Index>(sc.topics);
  const auto V = static_cast<Eigen::Index>(sc.terms);
  const auto S = static_cast<std::size_t>(sc.speakers);

  SyntheticData data;
  SyntheticTruth& truth = data.truth;
  truth.scenario = sc;
  for (Eigen::Index v = 0; v < V; ++v) {
    truth.vocabulary.push_back(padded("term", static_cast<std::size_t>(v), static_cast<std::size_t>(V)));
  }
  Vector x(static_cast<Eigen::Index>(S));
  for (std::size_t s = 0; s < S; ++s) {
    truth.speaker_ids.push_back(padded("spk", s, S));
    const Party p = s % 2 == 0 ? Party::D : Party::R;
    truth.party_of.push_back(p);
    const double centre = (p == Party::D ? 0.5 : -0.5) * sc.gap;
    x(static_cast<Eigen::Index>(s)) = centre + sc.x_noise * normal(rng);
  }

  Matrix beta(K, V);
  Matrix eta(K, V);
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta.data()[i] = std::max(gamma(rng), kPositiveFloor);
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta.data()[i] = normal(rng);

  for (int t = 0; t < sc.sessions; ++t) {
    if (t > 0 && sc.drift > 0.0) {
      for (Eigen::Index i = 0; i < beta.size(); ++i) {
        beta.data()[i] = std::max(beta.data()[i] * std::exp(sc.drift * normal(rng)), kPositiveFloor);
      }
      for (Eigen::Index i = 0; i < eta.size(); ++i) eta.data()[i] += sc.drift * normal(rng);
    }
    Matrix theta(static_cast<Eigen::Index>(sc.docs), K);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta.data()[i] = std::max(gamma(rng), kPositiveFloor);

    std::vector<Triplet> triplets;
    std::vector<std::size_t> doc_speaker_full;
    std::vector<Eigen::Index> kept_rows;
    std::vector<bool> term_used(static_cast<std::size_t>(V), false);
    for (Eigen::Index d = 0; d < theta.rows(); ++d) {
      const std::size_t s = static_cast<std::size_t>(d) % S;
      const std::span<const double> th(theta.row(d).data(), static_cast<std::size_t>(K));
      const Vector rate = poisson_rate(th, beta, eta, x(static_cast<Eigen::Index>(s)));
      bool any = false;
      const std::size_t row = kept_rows.size();
      const auto counts = draw_counts(rate, rng);
      for (Eigen::Index v = 0; v < V; ++v) {
        const std::int64_t c = counts[static_cast<std::size_t>(v)];
        if (c > 0) {
          triplets.push_back({row, static_cast<std::size_t>(v), static_cast<std::int32_t>(c)});
          term_used[static_cast<std::size_t>(v)] = true;
          any = true;
        }
      }
      if (any) {
        kept_rows.push_back(d);
        doc_speaker_full.push_back(s);
      }
    }

    std::vector<std::size_t> column_of(static_cast<std::size_t>(V), 0);
    SessionCorpus corpus;
    corpus.session = t + 1;
    for (std::size_t v = 0; v < term_used.size(); ++v) {
      if (term_used[v]) {
        column_of[v] = corpus.vocabulary.size();
        corpus.vocabulary.push_back(truth.vocabulary[v]);
      }
    }
    for (auto& tr : triplets) tr.col = column_of[tr.col];

    std::vector<bool> speaker_used(S, false);
    for (std::size_t s : doc_speaker_full) speaker_used[s] = true;
    std::vector<std::size_t> speaker_slot(S, 0);
    for (std::size_t s = 0; s < S; ++s) {
      if (speaker_used[s]) {
        speaker_slot[s] = corpus.speakers.size();
        corpus.speakers.push_back({truth.speaker_ids[s], truth.party_of[s]});
      }
    }
    for (std::size_t s : doc_speaker_full) corpus.doc_speaker.push_back(speaker_slot[s]);
    corpus.counts = CountMatrix::from_triplets(kept_rows.size(), corpus.vocabulary.size(), std::move(triplets));
    corpus.validate();

    SessionParams p;
    p.theta.resize(static_cast<Eigen::Index>(kept_rows.size()), K);
    for (std::size_t r = 0; r < kept_rows.size(); ++r) {
      p.theta.row(static_cast<Eigen::Index>(r)) = theta.row(kept_rows[r]);
    }
    p.beta = beta;
    p.eta = eta;
    p.x = x;
    truth.params.push_back(std::move(p));
    data.corpora.push_back(std::move(corpus));
  }
  return data;
}

SessionParams truth_params_for_corpus(const SyntheticTruth& truth, std::size_t t,
                                      const SessionCorpus& corpus) {
  if (t >= truth.params.size()) throw DimensionMismatch("no truth for this session position");
  const SessionParams& full = truth.params[t];
  std::unordered_map<std::string, Eigen::Index> term_index, speaker_index;
  for (std::size_t v = 0; v < truth.vocabulary.size(); ++v) {
    term_index.emplace(truth.vocabulary[v], static_cast<Eigen::Index>(v));
  }
  for (std::size_t s = 0; s < truth.speaker_ids.size(); ++s) {
    speaker_index.emplace(truth.speaker_ids[s], static_cast<Eigen::Index>(s));
  }
  if (full.theta.rows() != static_cast<Eigen::Index>(corpus.num_docs())) {
    throw DimensionMismatch("truth theta rows do not match corpus rows");
  }
  SessionParams p;
  p.theta = full.theta;
  p.beta.resize(full.beta.rows(), static_cast<Eigen::Index>(corpus.num_terms()));
  p.eta.resize(full.eta.rows(), static_cast<Eigen::Index>(corpus.num_terms()));
  for (std::size_t v = 0; v < corpus.num_terms(); ++v) {
    const auto it = term_index.find(corpus.vocabulary[v]);
    if (it == term_index.end()) throw DimensionMismatch("corpus term '" + corpus.vocabulary[v] + "' not in truth");
    p.beta.col(static_cast<Eigen::Index>(v)) = full.beta.col(it->second);
    p.eta.col(static_cast<Eigen::Index>(v)) = full.eta.col(it->second);
  }
  p.x.resize(static_cast<Eigen::Index>(corpus.num_speakers()));
  for (std::size_t s = 0; s < corpus.num_speakers(); ++s) {
    const auto it = speaker_index.find(corpus.speakers[s].id);
    if (it == speaker_index.end()) throw DimensionMismatch("corpus speaker '" + corpus.speakers[s].id + "' not in truth");
    p.x(static_cast<Eigen::Index>(s)) = full.x(it->second);
  }
  return p;
}

std::vector<std::size_t> greedy_topic_matching(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch("topic matrices differ in shape");
  const Eigen::Index K = a.rows();
  Matrix cos(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = 0; j < K; ++j) {
      cos(i, j) = cosine_similarity({a.row(i).data(), static_cast<std::size_t>(a.cols())},
                                    {b.row(j).data(), static_cast<std::size_t>(b.cols())});
    }
  }
  std::vector<std::size_t> assign(static_cast<std::size_t>(K), 0);
  std::vector<bool> row_done(static_cast<std::size_t>(K), false), col_done(static_cast<std::size_t>(K), false);
  for (Eigen::Index step = 0; step < K; ++step) {
    double best = -HUGE_VAL;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (row_done[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < K; ++j) {
        if (col_done[static_cast<std::size_t>(j)]) continue;
        if (cos(i, j) > best) {
          best = cos(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    row_done[static_cast<std::size_t>(bi)] = true;
    col_done[static_cast<std::size_t>(bj)] = true;
    assign[static_cast<std::size_t>(bi)] = static_cast<std::size_t>(bj);
  }
  return assign;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionMismatch("pearson: need two equal series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw ZeroVector("pearson: constant series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

RecoveryReport recovery_report(std::span<const SessionParams> fitted,
                               std::span<const SessionCorpus> corpora,
                               const SyntheticTruth& truth) {
  if (fitted.size() != corpora.size() || fitted.size() > truth.params.size()) {
    throw DimensionMismatch("recovery_report: fits, corpora and truth disagree in length");
  }
  RecoveryReport report;
  for (std::size_t t = 0; t < fitted.size(); ++t) {
    const SessionParams& fit = fitted[t];
    const SessionCorpus& corpus = corpora[t];
    const SessionParams tr = truth_params_for_corpus(truth, t, corpus);
    if (fit.beta.rows() != tr.beta.rows() || fit.beta.cols() != tr.beta.cols() ||
        fit.x.size() != tr.x.size()) {
      throw DimensionMismatch("fitted parameters do not match the truth for session " +
                              std::to_string(corpus.session));
    }
    SessionRecovery rec;
    rec.session = corpus.session;
    rec.topic_permutation = greedy_topic_matching(fit.beta, tr.beta);

    const std::span<const double> xh(fit.x.data(), static_cast<std::size_t>(fit.x.size()));
    const std::span<const double> xt(tr.x.data(), static_cast<std::size_t>(tr.x.size()));
    const double r = pearson_correlation(xh, xt);
    rec.sign = r < 0.0 ? -1 : 1;
    rec.x_correlation = std::abs(r);

    const auto V = static_cast<std::size_t>(fit.beta.cols());
    double beta_sum = 0.0, eta_sum = 0.0;
    for (Eigen::Index k = 0; k < fit.beta.rows(); ++k) {
      const auto j = static_cast<Eigen::Index>(rec.topic_permutation[static_cast<std::size_t>(k)]);
      beta_sum += cosine_similarity({fit.beta.row(k).data(), V}, {tr.beta.row(j).data(), V});
      const Vector aligned = rec.sign * fit.eta.row(k).transpose();
      eta_sum += cosine_similarity({aligned.data(), V}, {tr.eta.row(j).data(), V});
    }
    rec.mean_beta_cosine = beta_sum / static_cast<double>(fit.beta.rows());
    rec.mean_eta_cosine = eta_sum / static_cast<double>(fit.beta.rows());

    if (truth.scenario.gap > 0.0) {
      std::vector<Party> parties;
      for (const auto& sp : corpus.speakers) parties.push_back(sp.party);
      const double pi = partisanship(corpus.session, xh, parties).pi_bar;
      rec.partisanship_error = std::abs(pi - truth.scenario.gap) / truth.scenario.gap;
    }
    report.sessions.push_back(std::move(rec));
  }
  return report;
}

RecoveryReport recovery_report(const ChainResult& fit, std::span<const SessionCorpus> corpora,
                               const SyntheticTruth& truth) {
  std::vector<SessionParams> params;
  for (const auto& f : fit.fits) params.push_back(f.params);
  return recovery_report(params, corpora, truth);
}

}  // namespace tvtbip
