#include "tvtbip/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace fs = std::filesystem;

namespace {

bool all_scalar_numbers(const Json& arr) {
  for (const auto& e : arr) {
    if (!e.is_number()) return false;
  }
  return true;
}

void dump_into(const Json& v, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : v.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += Json(key).dump();
        out += ": ";
        dump_into(value, depth + 1, out);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      if (all_scalar_numbers(v)) {
        out += "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out += ", ";
          dump_into(v[i], depth + 1, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_into(v[i], depth + 1, out);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(v.get<double>());
      return;
    default:
      out += v.dump();
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

long parse_long(const std::string& s, std::size_t line, const fs::path& path) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, path.string() + ": not an integer: '" + s + "'");
  }
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

std::string provenance(const std::string& config_hash, std::uint64_t seed) {
  return fmt::format("tvtbip {} config_hash={} seed={}", kArtifactVersion, config_hash, seed);
}

std::string format_double(double v) {
  if (!std::isfinite(v)) throw NonFinite("output");
  return fmt::format("{:.17g}", v);
}

std::string dump_json(const Json& value) {
  std::string out;
  dump_into(value, 0, out);
  out += "\n";
  return out;
}

Json read_json_file(const fs::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(1, path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw DimensionMismatch("matrix data does not match its shape");
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Json params_to_json(const SessionParams& p) {
  Json j;
  j["theta"] = matrix_to_json(p.theta);
  j["beta"] = matrix_to_json(p.beta);
  j["eta"] = matrix_to_json(p.eta);
  j["x"] = vector_to_json(p.x);
  return j;
}

SessionParams params_from_json(const Json& j) {
  SessionParams p;
  p.theta = matrix_from_json(j.at("theta"));
  p.beta = matrix_from_json(j.at("beta"));
  p.eta = matrix_from_json(j.at("eta"));
  p.x = vector_from_json(j.at("x"));
  p.validate();
  return p;
}

Json state_to_json(const VariationalState& s) {
  Json j;
  j["mu_theta"] = matrix_to_json(s.mu_theta);
  j["logsig_theta"] = matrix_to_json(s.logsig_theta);
  j["mu_beta"] = matrix_to_json(s.mu_beta);
  j["logsig_beta"] = matrix_to_json(s.logsig_beta);
  j["mu_eta"] = matrix_to_json(s.mu_eta);
  j["logsig_eta"] = matrix_to_json(s.logsig_eta);
  j["mu_x"] = vector_to_json(s.mu_x);
  j["logsig_x"] = vector_to_json(s.logsig_x);
  return j;
}

VariationalState state_from_json(const Json& j) {
  VariationalState s;
  s.mu_theta = matrix_from_json(j.at("mu_theta"));
  s.logsig_theta = matrix_from_json(j.at("logsig_theta"));
  s.mu_beta = matrix_from_json(j.at("mu_beta"));
  s.logsig_beta = matrix_from_json(j.at("logsig_beta"));
  s.mu_eta = matrix_from_json(j.at("mu_eta"));
  s.logsig_eta = matrix_from_json(j.at("logsig_eta"));
  s.mu_x = vector_from_json(j.at("mu_x"));
  s.logsig_x = vector_from_json(j.at("logsig_x"));
  return s;
}

CorpusFiles corpus_files(const fs::path& dir, int session) {
  const std::string stem = "session_" + std::to_string(session);
  return {dir / (stem + "_vocab.txt"), dir / (stem + "_counts.csv"),
          dir / (stem + "_speakers.csv")};
}

void write_session_corpus(const fs::path& dir, const SessionCorpus& corpus,
                          const std::string& header) {
  corpus.validate();
  const auto files = corpus_files(dir, corpus.session);

  std::string vocab = "# " + header + "\n";
  for (const auto& term : corpus.vocabulary) {
    if (term.find('\n') != std::string::npos) throw IoError("term contains a newline");
    vocab += term + "\n";
  }
  write_text_file(files.vocab, vocab);

  std::string counts = "# " + header + "\nrow,col,count\n";
  for (std::size_t i = 0; i < corpus.num_docs(); ++i) {
    for (const auto& e : corpus.counts.row(i)) {
      counts += fmt::format("{},{},{}\n", i, e.col, e.count);
    }
  }
  write_text_file(files.counts, counts);

  std::string speakers = "# " + header + "\nrow,speaker_id,party\n";
  for (std::size_t i = 0; i < corpus.num_docs(); ++i) {
    const auto& s = corpus.speakers[corpus.doc_speaker[i]];
    speakers += fmt::format("{},{},{}\n", i, csv_field(s.id), to_string(s.party));
  }
  write_text_file(files.speakers, speakers);
}

SessionCorpus read_session_corpus(const fs::path& dir, int session) {
  const auto files = corpus_files(dir, session);
  SessionCorpus corpus;
  corpus.session = session;
  {
    auto in = open_input(files.vocab);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '#') continue;
      corpus.vocabulary.push_back(line);
    }
  }

  const auto speaker_rows = read_csv_rows(files.speakers);
  std::map<std::string, Party> party_of;
  std::vector<std::string> doc_ids(speaker_rows.size());
  for (std::size_t r = 0; r < speaker_rows.size(); ++r) {
    const auto& f = speaker_rows[r];
    if (f.size() != 3) throw ParseError(r + 1, files.speakers.string() + ": expected 3 fields");
    if (parse_long(f[0], r + 1, files.speakers) != static_cast<long>(r)) {
      throw ParseError(r + 1, files.speakers.string() + ": rows out of order");
    }
    doc_ids[r] = f[1];
    party_of[f[1]] = parse_party(f[2]);
  }
  for (const auto& [id, party] : party_of) corpus.speakers.push_back({id, party});
  for (const auto& id : doc_ids) {
    const auto it = std::lower_bound(corpus.speakers.begin(), corpus.speakers.end(), id,
                                     [](const Speaker& s, const std::string& v) { return s.id < v; });
    corpus.doc_speaker.push_back(static_cast<std::size_t>(it - corpus.speakers.begin()));
  }

  std::vector<Triplet> triplets;
  const auto count_rows = read_csv_rows(files.counts);
  for (std::size_t r = 0; r < count_rows.size(); ++r) {
    const auto& f = count_rows[r];
    if (f.size() != 3) throw ParseError(r + 1, files.counts.string() + ": expected 3 fields");
    const long row = parse_long(f[0], r + 1, files.counts);
    const long col = parse_long(f[1], r + 1, files.counts);
    const long count = parse_long(f[2], r + 1, files.counts);
    if (row < 0 || static_cast<std::size_t>(row) >= doc_ids.size() || col < 0 ||
        static_cast<std::size_t>(col) >= corpus.vocabulary.size() || count < 0 ||
        count > std::numeric_limits<std::int32_t>::max()) {
      throw ParseError(r + 1, files.counts.string() + ": entry out of range");
    }
    triplets.push_back({static_cast<std::size_t>(row), static_cast<std::size_t>(col),
                        static_cast<std::int32_t>(count)});
  }
  corpus.counts = CountMatrix::from_triplets(doc_ids.size(), corpus.vocabulary.size(),
                                             std::move(triplets));
  corpus.validate();
  return corpus;
}

std::vector<int> list_corpus_sessions(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex pattern(R"(session_(\d+)_vocab\.txt)");
  std::vector<int> sessions;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) sessions.push_back(std::stoi(m[1].str()));
  }
  std::sort(sessions.begin(), sessions.end());
  return sessions;
}

Json truth_to_json(const SyntheticTruth& truth) {
  const auto& sc = truth.scenario;
  Json j;
  j["scenario"] = {{"name", sc.name},         {"topics", sc.topics},
                   {"terms", sc.terms},       {"docs", sc.docs},
                   {"speakers", sc.speakers}, {"sessions", sc.sessions},
                   {"gap", sc.gap},           {"drift", sc.drift},
                   {"x_noise", sc.x_noise},   {"gamma_shape", sc.prior.gamma_shape},
                   {"gamma_rate", sc.prior.gamma_rate}};
  j["vocabulary"] = truth.vocabulary;
  j["speaker_ids"] = truth.speaker_ids;
  Json parties = Json::array();
  for (Party p : truth.party_of) parties.push_back(std::string(to_string(p)));
  j["parties"] = parties;
  Json params = Json::array();
  for (const auto& p : truth.params) params.push_back(params_to_json(p));
  j["params"] = params;
  return j;
}

SyntheticTruth truth_from_json(const Json& j) {
  SyntheticTruth t;
  const auto& s = j.at("scenario");
  t.scenario.name = s.at("name").get<std::string>();
  t.scenario.topics = s.at("topics").get<int>();
  t.scenario.terms = s.at("terms").get<int>();
  t.scenario.docs = s.at("docs").get<int>();
  t.scenario.speakers = s.at("speakers").get<int>();
  t.scenario.sessions = s.at("sessions").get<int>();
  t.scenario.gap = s.at("gap").get<double>();
  t.scenario.drift = s.at("drift").get<double>();
  t.scenario.x_noise = s.at("x_noise").get<double>();
  t.scenario.prior.gamma_shape = s.at("gamma_shape").get<double>();
  t.scenario.prior.gamma_rate = s.at("gamma_rate").get<double>();
  t.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  t.speaker_ids = j.at("speaker_ids").get<std::vector<std::string>>();
  for (const auto& p : j.at("parties")) t.party_of.push_back(parse_party(p.get<std::string>()));
  for (const auto& p : j.at("params")) t.params.push_back(params_from_json(p));
  return t;
}

}  // namespace tvtbip
