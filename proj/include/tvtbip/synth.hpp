#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tvtbip/chain.hpp"
#include "tvtbip/corpus.hpp"
#include "tvtbip/model.hpp"

namespace tvtbip {

struct Scenario {
  std::string name = "standard";
  int topics = 3;
  int terms = 200;
  int docs = 400;  // per session
  int speakers = 20;
  int sessions = 1;
  double gap = 2.0;     // polarization: parties sit at +-gap/2
  double drift = 0.0;   // SD of the per-session perturbation of log beta and eta
  double x_noise = 0.1;
  PriorConfig prior;
};

// Generating parameters. beta and eta span the full synthetic vocabulary;
// theta rows follow the rows of the generated corpus of the same session.
struct SyntheticTruth {
  Scenario scenario;
  std::vector<std::string> vocabulary;
  std::vector<std::string> speaker_ids;
  std::vector<Party> party_of;
  std::vector<SessionParams> params;
};

struct SyntheticData {
  std::vector<SessionCorpus> corpora;
  SyntheticTruth truth;
};

// One Poisson draw per rate; rates at or below 1e-300 give 0.
std::vector<std::int64_t> draw_counts(const Vector& rate, std::mt19937_64& rng);

// Draws theta, beta ~ Gamma(shape, rate), eta ~ N(0, 1), x = +-gap/2 by party
// (D positive) plus N(0, x_noise^2), then Poisson counts. Documents go to
// speakers round robin. Terms or documents without any count are left out of
// the corpus.
SyntheticData generate_corpus(const Scenario& scenario, std::uint64_t seed);

// Truth for session position t restricted to the corpus columns and speakers.
SessionParams truth_params_for_corpus(const SyntheticTruth& truth, std::size_t t,
                                      const SessionCorpus& corpus);

struct SessionRecovery {
  int session = 0;
  std::vector<std::size_t> topic_permutation;  // fitted topic k -> true topic
  double mean_beta_cosine = 0.0;
  double x_correlation = 0.0;  // after sign alignment
  int sign = 1;                // -1 when x_hat was flipped
  std::optional<double> partisanship_error;  // |pi_hat - gap| / gap
  double mean_eta_cosine = 0.0;
};

struct RecoveryReport {
  std::vector<SessionRecovery> sessions;
};

// Greedy cosine matching of fitted to true topics, sign-aligned Pearson
// correlation of ideal points and relative partisanship error.
RecoveryReport recovery_report(std::span<const SessionParams> fitted,
                               std::span<const SessionCorpus> corpora,
                               const SyntheticTruth& truth);

RecoveryReport recovery_report(const ChainResult& fit, std::span<const SessionCorpus> corpora,
                               const SyntheticTruth& truth);

// Greedy one-to-one assignment maximizing cosine between rows of a and b;
// result[k] is the row of b assigned to row k of a.
std::vector<std::size_t> greedy_topic_matching(const Matrix& a, const Matrix& b);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace tvtbip
