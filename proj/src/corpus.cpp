#include "tvtbip/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "tvtbip/errors.hpp"

namespace tvtbip {

Party parse_party(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "d" || lower == "democrat" || lower == "democratic") return Party::D;
  if (lower == "r" || lower == "republican") return Party::R;
  if (lower == "i" || lower == "independent") return Party::I;
  return Party::Other;
}

std::string_view to_string(Party p) {
  switch (p) {
    case Party::D: return "D";
    case Party::R: return "R";
    case Party::I: return "I";
    case Party::Other: return "other";
  }
  return "other";
}

CountMatrix CountMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                       std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CountMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(rows + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    const Triplet& t = triplets[k];
    if (t.row >= rows || t.col >= cols) {
      throw DimensionMismatch("count triplet outside matrix bounds");
    }
    std::int64_t sum = 0;
    std::size_t j = k;
    for (; j < triplets.size() && triplets[j].row == t.row && triplets[j].col == t.col; ++j) {
      if (triplets[j].count < 0) throw DimensionMismatch("negative count");
      sum += triplets[j].count;
    }
    if (sum > 0) {
      m.entries_.push_back({static_cast<std::int32_t>(t.col), static_cast<std::int32_t>(sum)});
      ++m.row_ptr_[t.row + 1];
    }
    k = j;
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  return m;
}

std::int64_t CountMatrix::total() const {
  std::int64_t sum = 0;
  for (const auto& e : entries_) sum += e.count;
  return sum;
}

double CountMatrix::mean() const {
  if (rows_ == 0 || cols_ == 0) return 0.0;
  return static_cast<double>(total()) / (static_cast<double>(rows_) * static_cast<double>(cols_));
}

std::int32_t CountMatrix::at(std::size_t i, std::size_t j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.begin(), r.end(), j, [](const CountEntry& e, std::size_t c) {
    return static_cast<std::size_t>(e.col) < c;
  });
  return (it != r.end() && static_cast<std::size_t>(it->col) == j) ? it->count : 0;
}

void SessionCorpus::validate() const {
  if (vocabulary.size() != counts.cols()) {
    throw DimensionMismatch("vocabulary size does not match count columns");
  }
  if (doc_speaker.size() != counts.rows()) {
    throw DimensionMismatch("doc_speaker size does not match count rows");
  }
  for (std::size_t v = 1; v < vocabulary.size(); ++v) {
    if (!(vocabulary[v - 1] < vocabulary[v])) {
      throw DimensionMismatch("vocabulary not strictly sorted at '" + vocabulary[v] + "'");
    }
  }
  std::vector<bool> used(counts.cols(), false);
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    if (counts.row(i).empty()) throw DimensionMismatch("all-zero document row");
    if (doc_speaker[i] >= speakers.size()) throw DimensionMismatch("doc_speaker out of range");
    for (const auto& e : counts.row(i)) used[static_cast<std::size_t>(e.col)] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) {
    throw DimensionMismatch("vocabulary column without any count");
  }
}

namespace {

struct TokenizedSpeech {
  std::size_t record;
  std::size_t speaker;
  std::vector<std::pair<std::size_t, std::int32_t>> bigrams;  // id, count
};

}  // namespace

SessionCorpus build_session_corpus(std::span<const SpeechRecord> records,
                                   const FilterThresholds& thresholds,
                                   const Stopwords& stopwords) {
  if (thresholds.min_speeches < 1 || thresholds.min_speakers < 1) {
    throw Error("filter thresholds must be >= 1");
  }
  if (records.empty()) throw EmptyCorpus(0);
  const int session = records.front().session;

  std::unordered_set<std::string> seen_ids;
  std::unordered_map<std::string, std::size_t> speaker_index;
  std::vector<Speaker> all_speakers;
  std::unordered_map<std::string, std::size_t> bigram_index;
  std::vector<std::string> bigram_text;
  std::vector<TokenizedSpeech> speeches;
  speeches.reserve(records.size());

  for (std::size_t r = 0; r < records.size(); ++r) {
    const SpeechRecord& rec = records[r];
    if (rec.session != session) throw Error("records span more than one session");
    if (!seen_ids.insert(rec.speech_id).second) throw DuplicateSpeechId(session, rec.speech_id);
    auto [it, inserted] = speaker_index.try_emplace(rec.speaker_id, all_speakers.size());
    if (inserted) all_speakers.push_back({rec.speaker_id, rec.party});

    std::unordered_map<std::size_t, std::int32_t> tally;
    for (auto& bg : extract_bigrams(tokenize(rec.text, stopwords))) {
      auto [bit, fresh] = bigram_index.try_emplace(bg, bigram_text.size());
      if (fresh) bigram_text.push_back(std::move(bg));
      ++tally[bit->second];
    }
    TokenizedSpeech ts{r, it->second, {tally.begin(), tally.end()}};
    std::sort(ts.bigrams.begin(), ts.bigrams.end());
    speeches.push_back(std::move(ts));
  }

  const std::size_t n_speakers = all_speakers.size();
  const std::size_t n_bigrams = bigram_text.size();
  std::vector<bool> speaker_on(n_speakers, true);
  std::vector<bool> bigram_on(n_bigrams, true);

  std::vector<std::vector<std::size_t>> speeches_of(n_speakers);
  for (std::size_t k = 0; k < speeches.size(); ++k) speeches_of[speeches[k].speaker].push_back(k);

  auto has_active_bigram = [&](const TokenizedSpeech& s) {
    return std::any_of(s.bigrams.begin(), s.bigrams.end(),
                       [&](const auto& b) { return bigram_on[b.first]; });
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t s = 0; s < n_speakers; ++s) {
      if (!speaker_on[s]) continue;
      const auto n = std::count_if(speeches_of[s].begin(), speeches_of[s].end(),
                                   [&](std::size_t k) { return has_active_bigram(speeches[k]); });
      if (n < thresholds.min_speeches) {
        speaker_on[s] = false;
        changed = true;
      }
    }
    std::vector<std::size_t> users(n_bigrams, 0);
    std::vector<std::size_t> last_speaker(n_bigrams, n_speakers);
    for (std::size_t s = 0; s < n_speakers; ++s) {
      if (!speaker_on[s]) continue;
      for (std::size_t k : speeches_of[s]) {
        for (const auto& [b, c] : speeches[k].bigrams) {
          if (last_speaker[b] != s) {
            last_speaker[b] = s;
            ++users[b];
          }
        }
      }
    }
    for (std::size_t b = 0; b < n_bigrams; ++b) {
      if (bigram_on[b] && users[b] < static_cast<std::size_t>(thresholds.min_speakers)) {
        bigram_on[b] = false;
        changed = true;
      }
    }
  }

  std::vector<std::size_t> vocab_ids;
  for (std::size_t b = 0; b < n_bigrams; ++b) {
    if (bigram_on[b]) vocab_ids.push_back(b);
  }
  std::sort(vocab_ids.begin(), vocab_ids.end(),
            [&](std::size_t a, std::size_t b) { return bigram_text[a] < bigram_text[b]; });
  std::vector<std::size_t> column_of(n_bigrams, 0);
  SessionCorpus corpus;
  corpus.session = session;
  for (std::size_t c = 0; c < vocab_ids.size(); ++c) {
    column_of[vocab_ids[c]] = c;
    corpus.vocabulary.push_back(bigram_text[vocab_ids[c]]);
  }

  std::vector<std::size_t> kept_speakers;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    if (speaker_on[s]) kept_speakers.push_back(s);
  }
  std::sort(kept_speakers.begin(), kept_speakers.end(), [&](std::size_t a, std::size_t b) {
    return all_speakers[a].id < all_speakers[b].id;
  });
  std::vector<std::size_t> new_speaker(n_speakers, 0);
  for (std::size_t j = 0; j < kept_speakers.size(); ++j) {
    new_speaker[kept_speakers[j]] = j;
    corpus.speakers.push_back(all_speakers[kept_speakers[j]]);
  }

  std::vector<Triplet> triplets;
  std::size_t row = 0;
  for (const auto& sp : speeches) {
    if (!speaker_on[sp.speaker] || !has_active_bigram(sp)) continue;
    for (const auto& [b, c] : sp.bigrams) {
      if (bigram_on[b]) triplets.push_back({row, column_of[b], c});
    }
    corpus.doc_speaker.push_back(new_speaker[sp.speaker]);
    ++row;
  }
  if (row == 0) throw EmptyCorpus(session);
  corpus.counts = CountMatrix::from_triplets(row, vocab_ids.size(), std::move(triplets));
  corpus.validate();
  return corpus;
}

double SessionSummary::avg_speeches_before() const {
  return speakers_before ? static_cast<double>(speeches_before) / static_cast<double>(speakers_before) : 0.0;
}

double SessionSummary::avg_speeches_after() const {
  return speakers_after ? static_cast<double>(speeches_after) / static_cast<double>(speakers_after) : 0.0;
}

SessionSummary summarize_session(std::span<const SpeechRecord> records,
                                 const SessionCorpus& corpus) {
  std::set<std::string> speakers;
  for (const auto& r : records) speakers.insert(r.speaker_id);
  return {corpus.session, speakers.size(), corpus.num_speakers(), records.size(), corpus.num_docs()};
}

VocabAlignment align_vocabulary(const std::vector<std::string>& prev,
                                const std::vector<std::string>& next) {
  VocabAlignment out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < prev.size() || j < next.size()) {
    if (j == next.size() || (i < prev.size() && prev[i] < next[j])) {
      out.dropped.push_back(i++);
    } else if (i == prev.size() || next[j] < prev[i]) {
      out.added.push_back(j++);
    } else {
      out.carried.emplace(j++, i++);
    }
  }
  return out;
}

namespace {

std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(line, std::string("missing key '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(line, std::string("key '") + key + "' must be a string");
}

}  // namespace

std::map<int, std::vector<SpeechRecord>> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path);
  std::map<int, std::vector<SpeechRecord>> sessions;
  std::map<int, std::unordered_set<std::string>> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, "invalid JSON");
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    SpeechRecord rec;
    rec.speech_id = require_string(obj, "speech_id", line_no);
    const auto sit = obj.find("session");
    if (sit == obj.end() || !sit->is_number_integer()) {
      throw ParseError(line_no, "key 'session' must be an integer");
    }
    rec.session = sit->get<int>();
    if (rec.session < 1) throw ParseError(line_no, "session must be >= 1");
    rec.speaker_id = require_string(obj, "speaker_id", line_no);
    rec.speaker_name = require_string(obj, "speaker_name", line_no);
    rec.party = parse_party(require_string(obj, "party", line_no));
    rec.text = require_string(obj, "text", line_no);
    if (!ids[rec.session].insert(rec.speech_id).second) {
      throw DuplicateSpeechId(rec.session, rec.speech_id);
    }
    sessions[rec.session].push_back(std::move(rec));
  }
  return sessions;
}

}  // namespace tvtbip
