#include "tvtbip/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>

#include <fmt/format.h>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
  }
  return out;
}

// One table drives parsing and the canonical dump so the two cannot drift.
struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;  // empty: not hashed
};

#define TVTBIP_NUM(KEY, EXPR, TYPE)                                                    \
  {                                                                                    \
    KEY, Field {                                                                       \
      [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<TYPE>(KEY, v); }, \
          [](const RunConfig& c) { return fmt::format("{}", c.EXPR); }                 \
    }                                                                                  \
  }

#define TVTBIP_REAL(KEY, EXPR)                                                           \
  {                                                                                      \
    KEY, Field {                                                                         \
      [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<double>(KEY, v); }, \
          [](const RunConfig& c) { return fmt::format("{:.17g}", c.EXPR); }              \
    }                                                                                    \
  }

#define TVTBIP_PATH(KEY, EXPR)                                        \
  {                                                                   \
    KEY, Field {                                                      \
      [](RunConfig& c, const std::string& v) { c.EXPR = v; }, nullptr \
    }                                                                 \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      TVTBIP_NUM("topics", fit.topics, int),
      TVTBIP_REAL("gamma_shape", fit.prior.gamma_shape),
      TVTBIP_REAL("gamma_rate", fit.prior.gamma_rate),
      TVTBIP_NUM("iters", fit.iters, long),
      TVTBIP_REAL("learning_rate", fit.learning_rate),
      TVTBIP_NUM("batch_size", fit.batch_size, int),
      TVTBIP_NUM("mc_samples", fit.mc_samples, int),
      TVTBIP_NUM("seed", fit.seed, std::uint64_t),
      TVTBIP_NUM("elbo_log_every", fit.elbo_log_every, int),
      {"workers",
       Field{[](RunConfig& c, const std::string& v) { c.fit.workers = parse_number<int>("workers", v); },
             nullptr}},
      TVTBIP_NUM("nmf_iters", fit.nmf_iters, int),
      TVTBIP_NUM("nmf_transform_iters", fit.nmf_transform_iters, int),
      TVTBIP_NUM("pairing_checks", fit.pairing_checks, int),
      TVTBIP_NUM("pairing_polish", fit.pairing_polish, int),
      TVTBIP_NUM("pairing_candidates", fit.pairing_candidates, int),
      TVTBIP_NUM("min_speeches", thresholds.min_speeches, int),
      TVTBIP_NUM("min_speakers", thresholds.min_speakers, int),
      {"scenario.name",
       Field{[](RunConfig& c, const std::string& v) { c.scenario.name = v; },
             [](const RunConfig& c) { return c.scenario.name; }}},
      TVTBIP_NUM("scenario.topics", scenario.topics, int),
      TVTBIP_NUM("scenario.terms", scenario.terms, int),
      TVTBIP_NUM("scenario.docs", scenario.docs, int),
      TVTBIP_NUM("scenario.speakers", scenario.speakers, int),
      TVTBIP_NUM("scenario.sessions", scenario.sessions, int),
      TVTBIP_REAL("scenario.gap", scenario.gap),
      TVTBIP_REAL("scenario.drift", scenario.drift),
      TVTBIP_REAL("scenario.x_noise", scenario.x_noise),
      TVTBIP_REAL("eval.min_correlation", eval.min_correlation),
      TVTBIP_REAL("eval.min_beta_cosine", eval.min_beta_cosine),
      TVTBIP_REAL("eval.max_partisanship_error", eval.max_partisanship_error),
      TVTBIP_PATH("corpus", corpus),
      TVTBIP_PATH("corpus_dir", corpus_dir),
      TVTBIP_PATH("out", out),
      TVTBIP_PATH("stopwords", stopwords),
      TVTBIP_PATH("external_scores", external_scores),
  };
  return table;
}

#undef TVTBIP_NUM
#undef TVTBIP_REAL
#undef TVTBIP_PATH

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply_key_values(RunConfig& cfg, const KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, value);
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(in));
  return cfg;
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (field.get) out += key + "=" + field.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical_config(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string resolved_corpus_dir(const RunConfig& cfg) {
  if (!cfg.corpus_dir.empty()) return cfg.corpus_dir;
  return (std::filesystem::path(cfg.out) / "corpus").string();
}

}  // namespace tvtbip
