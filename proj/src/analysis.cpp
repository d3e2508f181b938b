#include "tvtbip/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample variance; zero for fewer than two values.
double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double z : v) ss += (z - m) * (z - m);
  return ss / static_cast<double>(v.size() - 1);
}

std::vector<double> standardize(const std::vector<double>& v) {
  const double m = mean_of(v);
  const double sd = std::sqrt(sample_variance(v));
  if (!(sd > 0.0)) throw InsufficientOverlap("series is constant over the overlap");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - m) / sd;
  return out;
}

}  // namespace

PartisanshipPoint partisanship(int session, std::span<const double> x,
                               std::span<const Party> parties) {
  if (x.size() != parties.size()) throw DimensionMismatch("partisanship: x and parties differ in length");
  std::vector<double> rep, dem;
  for (std::size_t s = 0; s < x.size(); ++s) {
    if (parties[s] == Party::R) rep.push_back(x[s]);
    if (parties[s] == Party::D) dem.push_back(x[s]);
  }
  if (rep.empty() || dem.empty()) {
    throw MissingParty("session " + std::to_string(session) + " lacks R or D speakers");
  }
  PartisanshipPoint p;
  p.session = session;
  p.n_R = rep.size();
  p.n_D = dem.size();
  p.pi_bar = std::abs(mean_of(rep) - mean_of(dem));
  const double se = std::sqrt(sample_variance(rep) / static_cast<double>(rep.size()) +
                              sample_variance(dem) / static_cast<double>(dem.size()));
  p.ci_low = std::max(0.0, p.pi_bar - 1.96 * se);
  p.ci_high = p.pi_bar + 1.96 * se;
  return p;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("cosine: lengths differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw ZeroVector("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> topic_stability(const Matrix& beta_t, const Matrix& beta_next,
                                    const VocabAlignment& alignment) {
  if (beta_t.rows() != beta_next.rows()) throw DimensionMismatch("topic counts differ");
  std::vector<double> out;
  std::vector<double> a, b;
  for (Eigen::Index k = 0; k < beta_t.rows(); ++k) {
    a.clear();
    b.clear();
    for (const auto& [next_idx, prev_idx] : alignment.carried) {
      const auto pi = static_cast<Eigen::Index>(prev_idx);
      const auto ni = static_cast<Eigen::Index>(next_idx);
      if (pi >= beta_t.cols() || ni >= beta_next.cols()) {
        throw DimensionMismatch("alignment index outside beta");
      }
      a.push_back(beta_t(k, pi));
      b.push_back(beta_next(k, ni));
    }
    out.push_back(cosine_similarity(a, b));
  }
  return out;
}

PolarDistribution polar_term_distribution(std::span<const double> beta_k,
                                          std::span<const double> eta_k, double x_value,
                                          const std::vector<std::string>& vocabulary,
                                          std::size_t top_n) {
  const std::size_t V = beta_k.size();
  if (eta_k.size() != V || vocabulary.size() != V) {
    throw DimensionMismatch("polar_term_distribution: lengths differ");
  }
  // Normalize in log space so large |x eta| cannot overflow.
  std::vector<double> logw(V);
  double top = -HUGE_VAL;
  for (std::size_t v = 0; v < V; ++v) {
    if (!(beta_k[v] > 0.0)) throw NonPositiveParam("beta must be positive");
    logw[v] = std::log(beta_k[v]) + x_value * eta_k[v];
    top = std::max(top, logw[v]);
  }
  PolarDistribution out;
  out.p.resize(static_cast<Eigen::Index>(V));
  double total = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    out.p(static_cast<Eigen::Index>(v)) = std::exp(logw[v] - top);
    total += out.p(static_cast<Eigen::Index>(v));
  }
  out.p /= total;

  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    const double pa = out.p(static_cast<Eigen::Index>(a));
    const double pb = out.p(static_cast<Eigen::Index>(b));
    return pa != pb ? pa > pb : vocabulary[a] < vocabulary[b];
  };
  const std::size_t n = std::min(top_n, V);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);
  for (std::size_t r = 0; r < n; ++r) {
    out.top.push_back({r + 1, vocabulary[order[r]], out.p(static_cast<Eigen::Index>(order[r]))});
  }
  return out;
}

std::vector<double> polarity_discordance(const Matrix& beta, const Matrix& eta) {
  if (beta.rows() != eta.rows() || beta.cols() != eta.cols()) throw DimensionMismatch("beta/eta shapes differ");
  std::vector<double> out;
  for (Eigen::Index k = 0; k < beta.rows(); ++k) {
    // Rescale both vectors by the same positive constant; cosine is unchanged.
    const double shift = eta.row(k).cwiseAbs().maxCoeff();
    std::vector<double> pos(static_cast<std::size_t>(beta.cols()));
    std::vector<double> neg(pos.size());
    for (Eigen::Index v = 0; v < beta.cols(); ++v) {
      pos[static_cast<std::size_t>(v)] = beta(k, v) * std::exp(eta(k, v) - shift);
      neg[static_cast<std::size_t>(v)] = beta(k, v) * std::exp(-eta(k, v) - shift);
    }
    out.push_back(cosine_similarity(pos, neg));
  }
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SpeakerSummary> speaker_summary(
    const std::map<std::string, std::map<int, double>>& x_by_session,
    const std::map<std::string, Party>& parties) {
  std::vector<SpeakerSummary> out;
  for (const auto& [id, series] : x_by_session) {
    if (series.empty()) throw Error("speaker " + id + " has no sessions");
    SpeakerSummary s;
    s.speaker_id = id;
    if (const auto it = parties.find(id); it != parties.end()) s.party = it->second;
    std::vector<double> values;
    for (const auto& [session, x] : series) {
      s.sessions.push_back(session);
      values.push_back(x);
    }
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.q1 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.q3 = quantile(values, 0.75);
    s.mean = mean_of(values);
    if (values.size() > 1) s.sd = std::sqrt(sample_variance(values));
    out.push_back(std::move(s));
  }
  return out;
}

ExternalCorrelation external_correlation(const std::map<int, double>& pi_series,
                                         const std::map<int, double>& external) {
  std::vector<int> sessions;
  std::vector<double> a, b;
  for (const auto& [session, value] : pi_series) {
    if (const auto it = external.find(session); it != external.end()) {
      sessions.push_back(session);
      a.push_back(value);
      b.push_back(it->second);
    }
  }
  if (sessions.size() < 3) {
    throw InsufficientOverlap("need at least 3 common sessions, found " + std::to_string(sessions.size()));
  }
  const auto za = standardize(a);
  const auto zb = standardize(b);
  ExternalCorrelation out;
  double dot = 0.0;
  for (std::size_t i = 0; i < za.size(); ++i) {
    dot += za[i] * zb[i];
    out.pairs.push_back({sessions[i], za[i], zb[i]});
  }
  out.r = std::clamp(dot / static_cast<double>(za.size() - 1), -1.0, 1.0);
  return out;
}

std::map<int, double> external_party_gap(
    const std::map<int, std::map<std::string, double>>& scores,
    const std::map<std::string, Party>& parties) {
  std::map<int, double> out;
  for (const auto& [session, by_speaker] : scores) {
    double sum_r = 0.0, sum_d = 0.0;
    std::size_t n_r = 0, n_d = 0;
    for (const auto& [id, score] : by_speaker) {
      const auto it = parties.find(id);
      if (it == parties.end()) continue;
      if (it->second == Party::R) {
        sum_r += score;
        ++n_r;
      } else if (it->second == Party::D) {
        sum_d += score;
        ++n_d;
      }
    }
    if (n_r > 0 && n_d > 0) out[session] = sum_r / static_cast<double>(n_r) - sum_d / static_cast<double>(n_d);
  }
  return out;
}

}  // namespace tvtbip
