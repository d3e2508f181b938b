#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tvtbip/corpus.hpp"
#include "tvtbip/model.hpp"

namespace tvtbip {

struct PartisanshipPoint {
  int session = 0;
  double pi_bar = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_R = 0;
  std::size_t n_D = 0;
};

// |mean_R - mean_D| over the speakers of one session with a normal-approximation
// 95% interval pi_bar +- 1.96 sqrt(s_R^2 / n_R + s_D^2 / n_D), clipped at zero.
// Independents and other parties are ignored. Throws MissingParty.
PartisanshipPoint partisanship(int session, std::span<const double> x,
                               std::span<const Party> parties);

// Throws ZeroVector if either argument has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Per-topic cosine between consecutive neutral topics over the carried terms.
std::vector<double> topic_stability(const Matrix& beta_t, const Matrix& beta_next,
                                    const VocabAlignment& alignment);

struct RankedTerm {
  std::size_t rank = 0;  // 1-based
  std::string term;
  double rate = 0.0;
};

struct PolarDistribution {
  Vector p;
  std::vector<RankedTerm> top;
};

// p_v proportional to beta_v exp(x eta_v); `top` holds the n largest, ties
// broken by term.
PolarDistribution polar_term_distribution(std::span<const double> beta_k,
                                          std::span<const double> eta_k, double x_value,
                                          const std::vector<std::string>& vocabulary,
                                          std::size_t top_n = 5);

// Per-topic cosine of beta_k * exp(eta_k) and beta_k * exp(-eta_k).
std::vector<double> polarity_discordance(const Matrix& beta, const Matrix& eta);

struct SpeakerSummary {
  std::string speaker_id;
  Party party = Party::Other;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::optional<double> sd;  // absent for a single session
  std::vector<int> sessions;
};

// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double prob);

// Five-number summary, mean, and sample SD of each speaker's ideal points.
std::vector<SpeakerSummary> speaker_summary(
    const std::map<std::string, std::map<int, double>>& x_by_session,
    const std::map<std::string, Party>& parties);

struct StandardizedPair {
  int session = 0;
  double model = 0.0;
  double external = 0.0;
};

struct ExternalCorrelation {
  double r = 0.0;
  std::vector<StandardizedPair> pairs;
};

// Pearson correlation of the two series over their common sessions after
// standardizing each to mean 0 and SD 1. Needs at least 3 common sessions.
ExternalCorrelation external_correlation(const std::map<int, double>& pi_series,
                                         const std::map<int, double>& external);

// Republican mean minus Democrat mean of per-speaker external scores.
std::map<int, double> external_party_gap(
    const std::map<int, std::map<std::string, double>>& scores,
    const std::map<std::string, Party>& parties);

}  // namespace tvtbip
