#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "tvtbip/config.hpp"
#include "tvtbip/errors.hpp"
#include "tvtbip/synth.hpp"

namespace tvtbip {

// Recovery metrics below the configured thresholds.
class EvalFailure : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitParse = 2,
  kExitEmptyCorpus = 3,
  kExitDiverged = 4,
  kExitAnalysis = 5,
  kExitEvalFailed = 6,
};

int exit_code_for(const std::exception& e);

// Output layout under cfg.out:
//   preprocess_summary.csv
//   corpus/session_<t>_{vocab.txt,counts.csv,speakers.csv}, corpus/truth.json
//   manifest.json, fits/session_<t>_{fit,params}.json
//   report/*.csv, recovery.json
void cmd_preprocess(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);
void cmd_simulate(const RunConfig& cfg);
// With truth_as_fit the generating parameters are scored instead of the fits.
RecoveryReport cmd_eval(const RunConfig& cfg, bool truth_as_fit = false);

// Parses `args` (without the program name), runs the command and returns the
// process exit code. Errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tvtbip
