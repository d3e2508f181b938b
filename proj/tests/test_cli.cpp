#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tvtbip/cli.hpp"
#include "tvtbip/config.hpp"
#include "tvtbip/errors.hpp"
#include "tvtbip/io.hpp"

using namespace tvtbip;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tvtbip_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  INFO("stderr: " << err.str());
  return code;
}

std::string speech_line(int id, int session, const std::string& speaker, const std::string& party,
                        const std::string& text) {
  return "{\"speech_id\":\"" + std::to_string(id) + "\",\"session\":" + std::to_string(session) +
         ",\"speaker_id\":\"" + speaker + "\",\"speaker_name\":\"" + speaker + "\",\"party\":\"" + party +
         "\",\"text\":\"" + text + "\"}\n";
}

std::string toy_corpus(bool both_parties = true) {
  std::string s;
  int id = 0;
  const char* texts[] = {"tax cuts help families", "health care costs rise", "tax cuts for families",
                         "border security matters", "health care for families"};
  for (int spk = 0; spk < 4; ++spk) {
    const std::string party = both_parties && spk % 2 ? "R" : "D";
    for (int i = 0; i < 5; ++i) s += speech_line(id++, 1, "sp" + std::to_string(spk), party, texts[(i + spk) % 5]);
  }
  return s;
}

int data_rows(const fs::path& csv) { return static_cast<int>(read_csv_rows(csv).size()); }

std::string tiny_sim_config(const fs::path& dir, int sessions, double gap, long iters) {
  const fs::path cfg = dir / "sim.cfg";
  spit(cfg, "# tiny scenario\n"
            "topics = 2\n"
            "iters = " + std::to_string(iters) + "\n"
            "batch_size = 32\n"
            "nmf_iters = 200\n"
            "elbo_log_every = 50\n"
            "scenario.topics = 2\n"
            "scenario.terms = 40\n"
            "scenario.docs = 80\n"
            "scenario.speakers = 8\n"
            "scenario.sessions = " + std::to_string(sessions) + "\n"
            "scenario.gap = " + std::to_string(gap) + "\n"
            "scenario.drift = 0.05\n"
            "out = " + (dir / "out").string() + "\n");
  return cfg.string();
}

}  // namespace

TEST_CASE("exit codes map from error types") {
  CHECK(exit_code_for(ParseError(3, "x")) == 2);
  CHECK(exit_code_for(IoError("x")) == 2);
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(DuplicateSpeechId(1, "a")) == 2);
  CHECK(exit_code_for(EmptyCorpus(1)) == 3);
  CHECK(exit_code_for(SessionError(2, "boom", true)) == 4);
  CHECK(exit_code_for(Diverged(10, "nan")) == 4);
  CHECK(exit_code_for(MissingParty("x")) == 5);
  CHECK(exit_code_for(InsufficientOverlap("x")) == 5);
  CHECK(exit_code_for(EvalFailure("x")) == 6);
  CHECK(exit_code_for(Error("x")) == 1);
}

TEST_CASE("config parsing and hashing") {
  std::istringstream in("topics = 7  # comment\n\nlearning_rate=0.5\nout = somewhere\n");
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(in));
  CHECK(cfg.fit.topics == 7);
  CHECK(cfg.fit.learning_rate == 0.5);
  CHECK(cfg.out == "somewhere");
  RunConfig other = cfg;
  other.out = "elsewhere";
  other.fit.workers = 8;
  CHECK(config_hash(cfg) == config_hash(other));
  other.fit.seed = 1;
  CHECK(config_hash(cfg) != config_hash(other));
  CHECK(config_hash(cfg).size() == 16);

  std::istringstream bad_line("no equals sign\n");
  CHECK_THROWS_AS(parse_key_values(bad_line), ParseError);
  CHECK_THROWS_AS(apply_key_values(cfg, {{"nonsense", "1"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, {{"topics", "three"}}), ConfigError);
}

TEST_CASE("preprocess writes corpora and the summary table") {
  const auto dir = fresh_dir("pre");
  spit(dir / "speeches.jsonl", toy_corpus());
  const auto out = dir / "out";
  REQUIRE(run({"preprocess", "--corpus", (dir / "speeches.jsonl").string(), "--out", out.string(),
               "--min-speeches", "1", "--min-speakers", "1"}) == 0);
  const auto summary = slurp(out / "preprocess_summary.csv");
  CHECK(summary.rfind("# tvtbip 0.1.0 config_hash=", 0) == 0);
  CHECK(summary.find(
            "session,speakers_before,speakers_after,speeches_before,speeches_after,avg_speeches_before,"
            "avg_speeches_after\n1,4,4,20,20,5.00,5.00\n") != std::string::npos);
  CHECK(fs::exists(out / "corpus" / "session_1_vocab.txt"));
  CHECK(fs::exists(out / "corpus" / "session_1_counts.csv"));
  CHECK(fs::exists(out / "corpus" / "session_1_speakers.csv"));
  const auto corpus = read_session_corpus(out / "corpus", 1);
  CHECK(corpus.num_docs() == 20);
  CHECK(corpus.num_speakers() == 4);
}

TEST_CASE("preprocess failures") {
  const auto dir = fresh_dir("prefail");
  CHECK(run({"preprocess", "--corpus", (dir / "missing.jsonl").string(), "--out", dir.string()}) == 2);
  CHECK(run({"preprocess", "--out", dir.string()}) == 2);
  spit(dir / "bad.jsonl", toy_corpus() + "{oops\n");
  CHECK(run({"preprocess", "--corpus", (dir / "bad.jsonl").string(), "--out", dir.string()}) == 2);
  spit(dir / "ok.jsonl", toy_corpus());
  CHECK(run({"preprocess", "--corpus", (dir / "ok.jsonl").string(), "--out", dir.string()}) == 3);
  CHECK(run({"preprocess", "--bogus-flag"}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"--help"}) == 0);
  spit(dir / "bad.cfg", "not_a_key = 1\n");
  CHECK(run({"fit", "--config", (dir / "bad.cfg").string()}) == 2);
}

TEST_CASE("simulate, fit, report and eval round trip") {
  const auto dir = fresh_dir("round");
  const auto cfg = tiny_sim_config(dir, 2, 2.0, 300);
  const auto out = dir / "out";
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "3"}) == 0);
  CHECK(fs::exists(out / "corpus" / "truth.json"));
  CHECK(list_corpus_sessions(out / "corpus") == std::vector<int>{1, 2});

  REQUIRE(run({"fit", "--config", cfg, "--seed", "3"}) == 0);
  const auto manifest = read_json_file(out / "manifest.json");
  REQUIRE(manifest.at("sessions").size() == 2);
  CHECK(manifest.at("sessions")[0].at("session") == 1);
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("alignments").size() == 1);
  CHECK(fs::exists(out / "fits" / "session_1_params.json"));
  CHECK(fs::exists(out / "fits" / "session_2_fit.json"));
  const auto fit_json = read_json_file(out / "fits" / "session_1_fit.json");
  CHECK(fit_json.at("elbo_trace").at("elbo").size() == 6);

  REQUIRE(run({"report", "--config", cfg, "--seed", "3"}) == 0);
  CHECK(data_rows(out / "report" / "partisanship.csv") == 2);
  CHECK(data_rows(out / "report" / "ideal_points.csv") == 16);
  CHECK(data_rows(out / "report" / "topic_stability.csv") == 2);
  CHECK(data_rows(out / "report" / "discordance.csv") == 4);
  CHECK(data_rows(out / "report" / "speaker_summary.csv") == 8);
  CHECK(data_rows(out / "report" / "top_terms.csv") == 2 * 2 * 3 * 5);
  CHECK_FALSE(fs::exists(out / "report" / "external_correlation.json"));

  std::string scores = "session,score\n";
  for (const auto& row : read_csv_rows(out / "report" / "partisanship.csv")) {
    scores += row[0] + "," + format_double(2.0 * std::stod(row[1]) + 5.0) + "\n";
  }
  // Two sessions are too few for a correlation.
  spit(dir / "scores.csv", scores);
  CHECK(run({"report", "--config", cfg, "--seed", "3", "--external-scores", (dir / "scores.csv").string()}) == 5);

  std::string out_text;
  CHECK(run({"eval", "--config", cfg, "--seed", "3", "--truth-as-fit"}, &out_text) == 0);
  CHECK(out_text.find("session 1: x_correlation 1.0000 mean_beta_cosine 1.0000") != std::string::npos);
  const auto rec = read_json_file(out / "recovery.json");
  CHECK(rec.at("passed") == true);
  CHECK(rec.at("sessions")[0].at("x_correlation").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("external correlation with affine scores is one") {
  const auto dir = fresh_dir("external");
  const auto cfg = tiny_sim_config(dir, 3, 2.0, 200);
  const auto out = dir / "out";
  REQUIRE(run({"simulate", "--config", cfg}) == 0);
  REQUIRE(run({"fit", "--config", cfg}) == 0);
  REQUIRE(run({"report", "--config", cfg}) == 0);
  std::string scores = "session,score\n";
  for (const auto& row : read_csv_rows(out / "report" / "partisanship.csv")) {
    scores += row[0] + "," + format_double(2.0 * std::stod(row[1]) + 5.0) + "\n";
  }
  spit(dir / "scores.csv", scores);
  REQUIRE(run({"report", "--config", cfg, "--external-scores", (dir / "scores.csv").string()}) == 0);
  const auto j = read_json_file(out / "report" / "external_correlation.json");
  CHECK(j.at("r").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j.at("sessions") == 3);
  CHECK(data_rows(out / "report" / "external_correlation.csv") == 3);
}

TEST_CASE("fit is byte-identical on rerun") {
  const auto dir = fresh_dir("determinism");
  const auto cfg = tiny_sim_config(dir, 1, 2.0, 300);
  REQUIRE(run({"simulate", "--config", cfg}) == 0);
  const auto corpus = (dir / "out" / "corpus").string();
  REQUIRE(run({"fit", "--config", cfg, "--workers", "1", "--out", (dir / "a").string(), "--corpus-dir", corpus}) == 0);
  REQUIRE(run({"fit", "--config", cfg, "--workers", "1", "--out", (dir / "b").string(), "--corpus-dir", corpus}) == 0);
  const auto a = slurp(dir / "a" / "fits" / "session_1_params.json");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(dir / "b" / "fits" / "session_1_params.json"));
  CHECK(slurp(dir / "a" / "fits" / "session_1_fit.json") == slurp(dir / "b" / "fits" / "session_1_fit.json"));
}

TEST_CASE("eval without polarization skips the partisanship metric") {
  const auto dir = fresh_dir("nogap");
  const auto cfg = tiny_sim_config(dir, 1, 0.0, 100);
  REQUIRE(run({"simulate", "--config", cfg}) == 0);
  REQUIRE(run({"eval", "--config", cfg, "--truth-as-fit"}) == 0);
  const auto rec = read_json_file(dir / "out" / "recovery.json");
  CHECK(rec.at("sessions")[0].at("partisanship_error").is_null());
}

TEST_CASE("eval of a barely trained fit fails with exit 6") {
  const auto dir = fresh_dir("evalfail");
  const auto cfg = tiny_sim_config(dir, 1, 2.0, 1);
  REQUIRE(run({"simulate", "--config", cfg}) == 0);
  REQUIRE(run({"fit", "--config", cfg}) == 0);
  CHECK(run({"eval", "--config", cfg}) == 6);
  const auto rec = read_json_file(dir / "out" / "recovery.json");
  CHECK(rec.at("passed") == false);
  CHECK_FALSE(rec.at("failures").empty());
}

TEST_CASE("report on a one-party corpus exits 5") {
  const auto dir = fresh_dir("oneparty");
  spit(dir / "speeches.jsonl", toy_corpus(false));
  const auto out = (dir / "out").string();
  REQUIRE(run({"preprocess", "--corpus", (dir / "speeches.jsonl").string(), "--out", out, "--min-speeches", "1",
               "--min-speakers", "1"}) == 0);
  REQUIRE(run({"fit", "--out", out, "--topics", "2", "--iters", "20", "--batch", "8"}) == 0);
  CHECK(run({"report", "--out", out}) == 5);
}

TEST_CASE("fit without corpora is an input error") {
  const auto dir = fresh_dir("nocorpus");
  CHECK(run({"fit", "--out", dir.string()}) == 2);
  CHECK(run({"report", "--out", dir.string()}) == 2);
}
