#pragma once

#include <istream>
#include <map>
#include <string>

#include "tvtbip/corpus.hpp"
#include "tvtbip/inference.hpp"
#include "tvtbip/synth.hpp"

namespace tvtbip {

struct EvalThresholds {
  double min_correlation = 0.8;
  double min_beta_cosine = 0.8;
  double max_partisanship_error = 0.25;
};

struct RunConfig {
  FitConfig fit;
  FilterThresholds thresholds;
  Scenario scenario;
  EvalThresholds eval;
  std::string corpus;           // JSON-lines speeches for preprocess
  std::string corpus_dir;       // count matrices; defaults to <out>/corpus
  std::string out = "out";
  std::string stopwords;        // empty: built-in list
  std::string external_scores;  // optional CSV for report
};

using KeyValues = std::map<std::string, std::string>;

// `key = value` lines; '#' starts a comment. Throws ParseError.
KeyValues parse_key_values(std::istream& in);

// Throws Error on an unknown key or a malformed value.
void apply_key_values(RunConfig& cfg, const KeyValues& kv);

// Throws IoError if the file is missing.
RunConfig load_run_config(const std::string& path);

// Canonical `key=value` lines of every setting that affects results (paths and
// the worker count are left out), sorted by key.
std::string canonical_config(const RunConfig& cfg);

// 64-bit FNV-1a of canonical_config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

std::string resolved_corpus_dir(const RunConfig& cfg);

}  // namespace tvtbip
