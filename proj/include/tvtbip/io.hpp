#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvtbip/corpus.hpp"
#include "tvtbip/inference.hpp"
#include "tvtbip/model.hpp"
#include "tvtbip/synth.hpp"

namespace tvtbip {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "0.1.0";

// "tvtbip <version> config_hash=<hash> seed=<seed>"
std::string provenance(const std::string& config_hash, std::uint64_t seed);

// Serializes with every floating-point number written as %.17g. Non-finite
// numbers throw.
std::string dump_json(const Json& value);
std::string format_double(double v);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Rows of a CSV file without '#' comment lines; the first remaining line is the
// column header and is dropped.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json params_to_json(const SessionParams& p);
SessionParams params_from_json(const Json& j);
Json state_to_json(const VariationalState& s);
VariationalState state_from_json(const Json& j);

struct CorpusFiles {
  std::filesystem::path vocab;
  std::filesystem::path counts;
  std::filesystem::path speakers;
};

CorpusFiles corpus_files(const std::filesystem::path& dir, int session);

// Writes vocabulary, `row,col,count` triplets and `row,speaker_id,party`
// files, each starting with a '#' provenance line.
void write_session_corpus(const std::filesystem::path& dir, const SessionCorpus& corpus,
                          const std::string& header);
SessionCorpus read_session_corpus(const std::filesystem::path& dir, int session);

// Sessions with a vocabulary file in `dir`, ascending.
std::vector<int> list_corpus_sessions(const std::filesystem::path& dir);

Json truth_to_json(const SyntheticTruth& truth);
SyntheticTruth truth_from_json(const Json& j);

}  // namespace tvtbip
