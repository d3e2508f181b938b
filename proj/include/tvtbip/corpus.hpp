#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tvtbip/text.hpp"

namespace tvtbip {

enum class Party { D, R, I, Other };

Party parse_party(std::string_view s);
std::string_view to_string(Party p);

struct SpeechRecord {
  std::string speech_id;
  int session = 1;
  std::string speaker_id;
  std::string speaker_name;
  Party party = Party::Other;
  std::string text;
};

struct CountEntry {
  std::int32_t col;
  std::int32_t count;
  bool operator==(const CountEntry&) const = default;
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  std::int32_t count;
};

// Compressed sparse rows of non-negative integer counts. Column indices are
// strictly increasing within a row and no stored count is zero.
class CountMatrix {
 public:
  CountMatrix() = default;

  // Duplicated (row, col) triplets are summed; zero counts are dropped.
  static CountMatrix from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<Triplet> triplets);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return entries_.size(); }

  std::span<const CountEntry> row(std::size_t i) const {
    return {entries_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  std::int64_t total() const;
  double mean() const;
  std::int32_t at(std::size_t i, std::size_t j) const;

  bool operator==(const CountMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<CountEntry> entries_;
};

struct Speaker {
  std::string id;
  Party party = Party::Other;
  bool operator==(const Speaker&) const = default;
};

// Document-term counts of one session. Rows are retained speeches, columns the
// lexicographically sorted vocabulary, and doc_speaker[i] indexes `speakers`.
struct SessionCorpus {
  int session = 1;
  std::vector<std::string> vocabulary;
  CountMatrix counts;
  std::vector<std::size_t> doc_speaker;
  std::vector<Speaker> speakers;

  std::size_t num_docs() const { return counts.rows(); }
  std::size_t num_terms() const { return counts.cols(); }
  std::size_t num_speakers() const { return speakers.size(); }

  // Throws DimensionMismatch when a structural invariant is broken.
  void validate() const;

  bool operator==(const SessionCorpus&) const = default;
};

struct FilterThresholds {
  int min_speeches = 24;
  int min_speakers = 10;
};

// Removes speakers with fewer than `min_speeches` speeches and bigrams used by
// fewer than `min_speakers` distinct speakers, alternating until neither
// filter changes anything. A speech counts toward its speaker while it still
// contains at least one retained bigram. Throws EmptyCorpus when nothing is
// left.
SessionCorpus build_session_corpus(std::span<const SpeechRecord> records,
                                   const FilterThresholds& thresholds,
                                   const Stopwords& stopwords);

// Row counts for the preprocessing summary table.
struct SessionSummary {
  int session = 0;
  std::size_t speakers_before = 0;
  std::size_t speakers_after = 0;
  std::size_t speeches_before = 0;
  std::size_t speeches_after = 0;

  double avg_speeches_before() const;
  double avg_speeches_after() const;
};

SessionSummary summarize_session(std::span<const SpeechRecord> records,
                                 const SessionCorpus& corpus);

struct VocabAlignment {
  std::map<std::size_t, std::size_t> carried;  // next index -> prev index
  std::vector<std::size_t> added;              // next indices, ascending
  std::vector<std::size_t> dropped;            // prev indices, ascending
};

VocabAlignment align_vocabulary(const std::vector<std::string>& prev,
                                const std::vector<std::string>& next);

// Reads the JSON-lines speech file. Records keep file order within a session.
std::map<int, std::vector<SpeechRecord>> load_corpus(const std::string& path);

}  // namespace tvtbip
