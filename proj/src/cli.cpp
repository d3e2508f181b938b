#include "tvtbip/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tvtbip/analysis.hpp"
#include "tvtbip/chain.hpp"
#include "tvtbip/io.hpp"
#include "tvtbip/text.hpp"

namespace tvtbip {
namespace fs = std::filesystem;

namespace {

std::string csv_header(const RunConfig& cfg) {
  return "# " + provenance(config_hash(cfg), cfg.fit.seed) + "\n";
}

Json json_header(const RunConfig& cfg) {
  Json j;
  j["artifact_version"] = kArtifactVersion;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.fit.seed;
  return j;
}

std::string session_stem(int session) { return "session_" + std::to_string(session); }

std::vector<SessionCorpus> load_corpora(const RunConfig& cfg) {
  const fs::path dir = resolved_corpus_dir(cfg);
  const auto sessions = list_corpus_sessions(dir);
  if (sessions.empty()) throw IoError("no session corpora in " + dir.string());
  std::vector<SessionCorpus> corpora;
  for (int s : sessions) corpora.push_back(read_session_corpus(dir, s));
  return corpora;
}

struct LoadedFits {
  std::vector<SessionCorpus> corpora;
  std::vector<SessionParams> params;
};

LoadedFits load_fits(const RunConfig& cfg) {
  const fs::path out = cfg.out;
  const Json manifest = read_json_file(out / "manifest.json");
  const fs::path corpus_dir = manifest.at("corpus_dir").get<std::string>();
  LoadedFits fits;
  for (const auto& entry : manifest.at("sessions")) {
    const int session = entry.at("session").get<int>();
    fits.corpora.push_back(read_session_corpus(corpus_dir, session));
    const Json pj = read_json_file(out / entry.at("params").get<std::string>());
    fits.params.push_back(params_from_json(pj.at("params")));
    if (fits.params.back().theta.rows() != static_cast<Eigen::Index>(fits.corpora.back().num_docs()) ||
        fits.params.back().terms() != fits.corpora.back().num_terms() ||
        fits.params.back().x.size() != static_cast<Eigen::Index>(fits.corpora.back().num_speakers())) {
      throw DimensionMismatch("fit of session " + std::to_string(session) +
                              " does not match its corpus");
    }
  }
  if (fits.params.empty()) throw IoError("manifest lists no sessions");
  return fits;
}

std::vector<Party> speaker_parties(const SessionCorpus& c) {
  std::vector<Party> out;
  for (const auto& s : c.speakers) out.push_back(s.party);
  return out;
}

std::span<const double> row_span(const Matrix& m, Eigen::Index k) {
  return {m.data() + k * m.cols(), static_cast<std::size_t>(m.cols())};
}

void write_external_correlation(const RunConfig& cfg, const fs::path& dir,
                                const std::map<int, double>& pi_series,
                                const std::map<std::string, Party>& parties) {
  const auto rows = read_csv_rows(cfg.external_scores);
  std::map<int, double> gap;
  std::map<int, std::map<std::string, double>> per_speaker;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = rows[r];
    try {
      if (f.size() == 2) {
        gap[std::stoi(f[0])] = std::stod(f[1]);
      } else if (f.size() == 3) {
        per_speaker[std::stoi(f[0])][f[1]] = std::stod(f[2]);
      } else {
        throw std::invalid_argument("field count");
      }
    } catch (const std::logic_error&) {
      throw ParseError(r + 1, cfg.external_scores + ": expected session,score or session,speaker_id,score");
    }
  }
  if (!per_speaker.empty()) {
    if (!gap.empty()) throw ParseError(1, cfg.external_scores + ": mixed row formats");
    gap = external_party_gap(per_speaker, parties);
  }
  const auto corr = external_correlation(pi_series, gap);
  std::string csv = csv_header(cfg) + "session,pi_bar_std,external_std\n";
  for (const auto& p : corr.pairs) {
    csv += fmt::format("{},{},{}\n", p.session, format_double(p.model), format_double(p.external));
  }
  write_text_file(dir / "external_correlation.csv", csv);
  Json j = json_header(cfg);
  j["r"] = corr.r;
  j["sessions"] = corr.pairs.size();
  write_text_file(dir / "external_correlation.json", dump_json(j));
}

void init_logging() {
  auto logger = spdlog::get("tvtbip");
  if (!logger) {
    logger = spdlog::stderr_color_mt("tvtbip");
    spdlog::set_default_logger(logger);
  }
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("TVTBIP_LOG"); env && *env) {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const EvalFailure*>(&e)) return kExitEvalFailed;
  if (dynamic_cast<const MissingParty*>(&e) || dynamic_cast<const InsufficientOverlap*>(&e)) {
    return kExitAnalysis;
  }
  if (const auto* se = dynamic_cast<const SessionError*>(&e)) {
    return se->diverged() ? kExitDiverged : kExitError;
  }
  if (dynamic_cast<const Diverged*>(&e)) return kExitDiverged;
  if (dynamic_cast<const EmptyCorpus*>(&e)) return kExitEmptyCorpus;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DuplicateSpeechId*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e)) {
    return kExitParse;
  }
  return kExitError;
}

void cmd_preprocess(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("preprocess needs a corpus (--corpus or corpus=)");
  if (cfg.thresholds.min_speeches < 1 || cfg.thresholds.min_speakers < 1) {
    throw ConfigError("thresholds must be at least 1");
  }
  const auto by_session = load_corpus(cfg.corpus);
  if (by_session.empty()) throw ParseError(1, cfg.corpus + ": no speeches");
  const Stopwords stopwords = cfg.stopwords.empty() ? default_stopwords() : load_stopwords(cfg.stopwords);
  const fs::path corpus_dir = resolved_corpus_dir(cfg);
  const std::string header = provenance(config_hash(cfg), cfg.fit.seed);

  std::string summary = csv_header(cfg) +
                        "session,speakers_before,speakers_after,speeches_before,speeches_after,"
                        "avg_speeches_before,avg_speeches_after\n";
  for (const auto& [session, records] : by_session) {
    const auto corpus = build_session_corpus(records, cfg.thresholds, stopwords);
    write_session_corpus(corpus_dir, corpus, header);
    const auto s = summarize_session(records, corpus);
    summary += fmt::format("{},{},{},{},{},{:.2f},{:.2f}\n", s.session, s.speakers_before,
                           s.speakers_after, s.speeches_before, s.speeches_after,
                           s.avg_speeches_before(), s.avg_speeches_after());
    spdlog::info("session {}: {} of {} speeches, {} terms", session, s.speeches_after,
                 s.speeches_before, corpus.num_terms());
  }
  write_text_file(fs::path(cfg.out) / "preprocess_summary.csv", summary);
}

void cmd_fit(const RunConfig& cfg) {
  const auto corpora = load_corpora(cfg);
  const fs::path out = cfg.out;
  const Json header = json_header(cfg);

  Json sessions = Json::array();
  auto observer = [&](std::size_t t, const SessionCorpus& corpus, const SessionFit& fit) {
    const std::string stem = session_stem(corpus.session);
    const std::string fit_rel = "fits/" + stem + "_fit.json";
    const std::string params_rel = "fits/" + stem + "_params.json";

    Json pj = header;
    pj["session"] = corpus.session;
    pj["session_seed"] = session_seed(cfg.fit.seed, t);
    pj["params"] = params_to_json(fit.params);
    write_text_file(out / params_rel, dump_json(pj));

    Json fj = header;
    fj["session"] = corpus.session;
    fj["session_seed"] = session_seed(cfg.fit.seed, t);
    fj["dims"] = {{"docs", corpus.num_docs()},
                  {"topics", fit.state.topics()},
                  {"terms", corpus.num_terms()},
                  {"speakers", corpus.num_speakers()}};
    fj["clamped"] = fit.clamped;
    std::vector<long> its;
    std::vector<double> elbos;
    for (const auto& e : fit.elbo_trace) {
      its.push_back(e.iteration);
      elbos.push_back(e.elbo);
    }
    fj["elbo_trace"] = {{"iteration", its}, {"elbo", elbos}};
    fj["variational"] = state_to_json(fit.state);
    write_text_file(out / fit_rel, dump_json(fj));

    sessions.push_back({{"session", corpus.session},
                        {"fit", fit_rel},
                        {"params", params_rel},
                        {"docs", corpus.num_docs()},
                        {"terms", corpus.num_terms()},
                        {"speakers", corpus.num_speakers()}});
  };
  const auto chain = fit_chain(corpora, cfg.fit, observer);

  Json manifest = header;
  manifest["corpus_dir"] = resolved_corpus_dir(cfg);
  manifest["topics"] = cfg.fit.topics;
  manifest["sessions"] = sessions;
  Json alignments = Json::array();
  for (std::size_t t = 0; t < chain.alignments.size(); ++t) {
    const auto& a = chain.alignments[t];
    alignments.push_back({{"from", chain.sessions[t]},
                          {"to", chain.sessions[t + 1]},
                          {"carried", a.carried.size()},
                          {"added", a.added.size()},
                          {"dropped", a.dropped.size()}});
  }
  manifest["alignments"] = alignments;
  write_text_file(out / "manifest.json", dump_json(manifest));
}

void cmd_report(const RunConfig& cfg) {
  const auto fits = load_fits(cfg);
  const fs::path dir = fs::path(cfg.out) / "report";
  const std::string head = csv_header(cfg);

  std::string ideal = head + "session,speaker_id,party,x_hat\n";
  std::string partisan = head + "session,pi_bar,ci_low,ci_high\n";
  std::string discord = head + "topic,session,cosine\n";
  std::string top = head + "session,topic,polarity,rank,term,rate\n";
  std::map<int, double> pi_series;
  std::map<std::string, std::map<int, double>> x_by_speaker;
  std::map<std::string, Party> parties;

  for (std::size_t t = 0; t < fits.params.size(); ++t) {
    const auto& c = fits.corpora[t];
    const auto& p = fits.params[t];
    std::vector<double> x(p.x.data(), p.x.data() + p.x.size());
    for (std::size_t s = 0; s < c.num_speakers(); ++s) {
      ideal += fmt::format("{},{},{},{}\n", c.session, c.speakers[s].id, to_string(c.speakers[s].party),
                           format_double(x[s]));
      x_by_speaker[c.speakers[s].id][c.session] = x[s];
      parties[c.speakers[s].id] = c.speakers[s].party;
    }
    const auto pt = partisanship(c.session, x, speaker_parties(c));
    pi_series[c.session] = pt.pi_bar;
    partisan += fmt::format("{},{},{},{}\n", c.session, format_double(pt.pi_bar),
                            format_double(pt.ci_low), format_double(pt.ci_high));

    const auto disc = polarity_discordance(p.beta, p.eta);
    for (std::size_t k = 0; k < disc.size(); ++k) {
      discord += fmt::format("{},{},{}\n", k + 1, c.session, format_double(disc[k]));
    }
    for (Eigen::Index k = 0; k < p.beta.rows(); ++k) {
      for (int polarity : {-1, 0, 1}) {
        const auto dist = polar_term_distribution(row_span(p.beta, k), row_span(p.eta, k),
                                                  polarity, c.vocabulary);
        for (const auto& term : dist.top) {
          top += fmt::format("{},{},{},{},{},{}\n", c.session, k + 1, polarity, term.rank,
                             term.term, format_double(term.rate));
        }
      }
    }
  }

  std::string stability = head + "topic,session_pair,cosine\n";
  for (std::size_t t = 0; t + 1 < fits.params.size(); ++t) {
    const auto& a = fits.corpora[t];
    const auto& b = fits.corpora[t + 1];
    const auto alignment = align_vocabulary(a.vocabulary, b.vocabulary);
    if (alignment.carried.empty()) {
      spdlog::warn("sessions {} and {} share no terms; stability skipped", a.session, b.session);
      continue;
    }
    const auto cos = topic_stability(fits.params[t].beta, fits.params[t + 1].beta, alignment);
    for (std::size_t k = 0; k < cos.size(); ++k) {
      stability += fmt::format("{},{}-{},{}\n", k + 1, a.session, b.session, format_double(cos[k]));
    }
  }

  std::string summary = head + "speaker_id,party,min,q1,median,mean,q3,max,sd,sessions,n_sessions\n";
  for (const auto& s : speaker_summary(x_by_speaker, parties)) {
    summary += fmt::format("{},{},{},{},{},{},{},{},{},{}-{},{}\n", s.speaker_id, to_string(s.party),
                           format_double(s.min), format_double(s.q1), format_double(s.median),
                           format_double(s.mean), format_double(s.q3), format_double(s.max),
                           s.sd ? format_double(*s.sd) : std::string(), s.sessions.front(),
                           s.sessions.back(), s.sessions.size());
  }

  if (!cfg.external_scores.empty()) write_external_correlation(cfg, dir, pi_series, parties);

  write_text_file(dir / "ideal_points.csv", ideal);
  write_text_file(dir / "partisanship.csv", partisan);
  write_text_file(dir / "topic_stability.csv", stability);
  write_text_file(dir / "discordance.csv", discord);
  write_text_file(dir / "top_terms.csv", top);
  write_text_file(dir / "speaker_summary.csv", summary);
}

void cmd_simulate(const RunConfig& cfg) {
  const auto data = generate_corpus(cfg.scenario, cfg.fit.seed);
  const fs::path corpus_dir = resolved_corpus_dir(cfg);
  const std::string header = provenance(config_hash(cfg), cfg.fit.seed);
  for (const auto& c : data.corpora) write_session_corpus(corpus_dir, c, header);
  Json j = json_header(cfg);
  j["truth"] = truth_to_json(data.truth);
  write_text_file(corpus_dir / "truth.json", dump_json(j));
}

RecoveryReport cmd_eval(const RunConfig& cfg, bool truth_as_fit) {
  const fs::path corpus_dir = resolved_corpus_dir(cfg);
  const SyntheticTruth truth = truth_from_json(read_json_file(corpus_dir / "truth.json").at("truth"));

  std::vector<SessionCorpus> corpora;
  std::vector<SessionParams> fitted;
  if (truth_as_fit) {
    corpora = load_corpora(cfg);
    for (std::size_t t = 0; t < corpora.size(); ++t) fitted.push_back(truth_params_for_corpus(truth, t, corpora[t]));
  } else {
    auto fits = load_fits(cfg);
    corpora = std::move(fits.corpora);
    fitted = std::move(fits.params);
  }
  const auto report = recovery_report(fitted, corpora, truth);

  Json sessions = Json::array();
  std::vector<std::string> failures;
  for (const auto& s : report.sessions) {
    Json js = {{"session", s.session},
               {"topic_permutation", s.topic_permutation},
               {"mean_beta_cosine", s.mean_beta_cosine},
               {"x_correlation", s.x_correlation},
               {"sign", s.sign},
               {"mean_eta_cosine", s.mean_eta_cosine}};
    js["partisanship_error"] = s.partisanship_error ? Json(*s.partisanship_error) : Json(nullptr);
    sessions.push_back(js);
    if (!(s.x_correlation >= cfg.eval.min_correlation)) {
      failures.push_back(fmt::format("session {}: x_correlation {:.4f} < {}", s.session, s.x_correlation,
                                     cfg.eval.min_correlation));
    }
    if (!(s.mean_beta_cosine >= cfg.eval.min_beta_cosine)) {
      failures.push_back(fmt::format("session {}: mean_beta_cosine {:.4f} < {}", s.session,
                                     s.mean_beta_cosine, cfg.eval.min_beta_cosine));
    }
    if (s.partisanship_error && !(*s.partisanship_error <= cfg.eval.max_partisanship_error)) {
      failures.push_back(fmt::format("session {}: partisanship_error {:.4f} > {}", s.session,
                                     *s.partisanship_error, cfg.eval.max_partisanship_error));
    }
  }
  Json j = json_header(cfg);
  j["truth_as_fit"] = truth_as_fit;
  j["sessions"] = sessions;
  j["passed"] = failures.empty();
  j["failures"] = failures;
  write_text_file(fs::path(cfg.out) / "recovery.json", dump_json(j));

  if (!failures.empty()) {
    std::string msg = "recovery thresholds failed:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw EvalFailure(msg);
  }
  return report;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-varying text-based ideal points"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> topics, batch, workers, min_speeches, min_speakers;
  std::optional<long> iters;
  std::optional<double> lr;
  std::optional<std::string> out_dir, external_scores, corpus, corpus_dir, stopwords;
  bool truth_as_fit = false;

  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--topics", topics, "number of topics");
  app.add_option("--iters", iters, "optimization steps per session");
  app.add_option("--batch", batch, "documents per step");
  app.add_option("--lr", lr, "Adam learning rate");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "gradient threads");
  app.add_option("--external-scores", external_scores, "CSV of external scores for report");
  app.add_option("--corpus", corpus, "JSON-lines speeches for preprocess");
  app.add_option("--corpus-dir", corpus_dir, "directory of session count matrices");
  app.add_option("--stopwords", stopwords, "stopword file, one token per line");
  app.add_option("--min-speeches", min_speeches, "minimum speeches per speaker");
  app.add_option("--min-speakers", min_speakers, "minimum distinct speakers per bigram");

  auto* pre = app.add_subcommand("preprocess", "build session count matrices from speeches");
  auto* fit = app.add_subcommand("fit", "fit the chained model to every session");
  auto* report = app.add_subcommand("report", "write analysis tables from the fits");
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic corpus with known truth");
  auto* eval = app.add_subcommand("eval", "score fits against the synthetic truth");
  eval->add_flag("--truth-as-fit", truth_as_fit, "score the generating parameters themselves");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitParse;
  }

  init_logging();
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.fit.seed = *seed;
    if (topics) cfg.fit.topics = *topics;
    if (iters) cfg.fit.iters = *iters;
    if (batch) cfg.fit.batch_size = *batch;
    if (lr) cfg.fit.learning_rate = *lr;
    if (workers) cfg.fit.workers = *workers;
    if (out_dir) cfg.out = *out_dir;
    if (external_scores) cfg.external_scores = *external_scores;
    if (corpus) cfg.corpus = *corpus;
    if (corpus_dir) cfg.corpus_dir = *corpus_dir;
    if (stopwords) cfg.stopwords = *stopwords;
    if (min_speeches) cfg.thresholds.min_speeches = *min_speeches;
    if (min_speakers) cfg.thresholds.min_speakers = *min_speakers;

    if (pre->parsed()) cmd_preprocess(cfg);
    if (fit->parsed()) cmd_fit(cfg);
    if (report->parsed()) cmd_report(cfg);
    if (simulate->parsed()) cmd_simulate(cfg);
    if (eval->parsed()) {
      const auto r = cmd_eval(cfg, truth_as_fit);
      for (const auto& s : r.sessions) {
        out << fmt::format("session {}: x_correlation {:.4f} mean_beta_cosine {:.4f}", s.session,
                           s.x_correlation, s.mean_beta_cosine);
        if (s.partisanship_error) out << fmt::format(" partisanship_error {:.4f}", *s.partisanship_error);
        out << "\n";
      }
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "tvtbip: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace tvtbip
