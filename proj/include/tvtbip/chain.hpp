#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tvtbip/corpus.hpp"
#include "tvtbip/inference.hpp"

namespace tvtbip {

struct ChainResult {
  std::vector<int> sessions;
  std::vector<SessionFit> fits;
  std::vector<VocabAlignment> alignments;  // alignments[t] links fits[t] -> fits[t + 1]
};

// Seed used for session position `index` of a chain; position 0 uses the
// master seed itself so a one-session chain equals a plain fit.
std::uint64_t session_seed(std::uint64_t master, std::size_t index);

// Initial state for the next session from the previous fit's posterior means:
// carried columns take log beta and eta, added columns take the log of the
// per-topic median carried beta and zero eta, theta comes from nmf_transform
// against those betas, x restarts at zero.
VariationalState carry_forward_init(const SessionFit& prev_fit,
                                    const std::vector<std::string>& prev_vocab,
                                    const SessionCorpus& next_corpus, const FitConfig& cfg);

// Called after each session is fitted (position in chain, corpus, fit).
using ChainObserver = std::function<void(std::size_t, const SessionCorpus&, const SessionFit&)>;

// Fits the sessions in order. Session errors are rethrown as SessionError.
ChainResult fit_chain(std::span<const SessionCorpus> corpora, const FitConfig& cfg,
                      const ChainObserver& observer = {});

}  // namespace tvtbip
