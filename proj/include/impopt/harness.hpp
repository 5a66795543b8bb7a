#pragma once

#include <optional>
#include <string>
#include <vector>

#include "impopt/algorithms.hpp"
#include "impopt/problems.hpp"
#include "impopt/signals.hpp"
#include "impopt/synthesis.hpp"

namespace impopt::harness {

// One experiment entry: a gradient baseline (optionally step-size tuned) or a
// control-based method built from an internal-model signal spec.
struct AlgorithmConfig {
  std::string name;
  algorithms::AlgorithmKind kind = algorithms::AlgorithmKind::PrimalDual;
  signals::SignalSpec model;  // internal-model source, control kinds only
  double rho = 0.0;
  double alpha = 0.0;  // <= 0 selects the shared default 2/(lambda_lo+lambda_hi)
  double beta = 0.0;
  double gamma = 0.0;
  bool tune = false;  // grid-search the step sizes before the final run
};

struct ExperimentConfig {
  std::string name = "experiment";
  unsigned long long seed = 1;
  long horizon = 1000;
  problems::StreamRecipe stream;  // seed is overwritten by the field above
  std::vector<AlgorithmConfig> algorithms;
  std::string out_dir = ".";
  int verify_grid = 10000;  // spectral-grid density for synthesis reports
};

// Flat `key = value` text with `#` comments. Unknown keys, malformed values
// and constraint violations are all reported with the offending key and line.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Column-major image of one trace CSV.
struct TraceData {
  std::vector<long> k;
  std::vector<double> err_x;
  std::vector<double> err_w;
  std::vector<double> norm_e;
  std::vector<double> norm_f;
  std::vector<double> norm_fp;
  std::vector<int> active_flag;

  long rows() const { return static_cast<long>(k.size()); }
};

// Fixed header `k,err_x,err_w,norm_e,norm_f,norm_fp,active_flag`, 17
// significant digits so doubles survive a read-back bitwise.
void write_csv(const algorithms::TrackingTrace& trace, const std::string& path);
TraceData read_trace_csv(const std::string& path);

// Median of err_x over the final 10% of the horizon (at least one sample).
double asymptotic_error(const std::vector<double>& err_x);

// Logarithmic grid search (9 points per decade over [1e-4, 1]) minimizing the
// asymptotic error over a capped-horizon rehearsal; beta and gamma share one
// axis. Ties keep the first candidate in scan order.
struct TunedGains {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double rehearsal_err = 0.0;
};
TunedGains tune_step_sizes(const problems::QuadraticStream& stream,
                           const std::vector<problems::KktSolution>& oracle,
                           algorithms::AlgorithmKind kind, long horizon);

struct AlgorithmResult {
  std::string name;
  algorithms::AlgorithmKind kind = algorithms::AlgorithmKind::PrimalDual;
  bool ok = false;
  std::string error;  // synthesis / oracle / run failure, empty when ok
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double asymptotic_err = 0.0;
  std::string trace_file;   // file names relative to the output directory
  std::string report_file;  // synthesis report, control kinds only
  std::optional<synthesis::ControllerRealization> controller;
  std::optional<synthesis::StabilityReport> stability;
};

struct ExperimentResult {
  ExperimentConfig config;
  bool oracle_ok = false;
  std::string oracle_error;
  std::vector<AlgorithmResult> algorithms;
  std::string summary_file;
  std::string plot_file;

  // every algorithm ran and every synthesized controller passed its grid
  bool all_ok() const;
};

// Builds the stream and oracle, runs every configured algorithm (parallel
// workers capped by IMPOPT_THREADS), and writes one CSV per algorithm, one
// synthesis report per control-based algorithm, a summary table of asymptotic
// errors and selected step sizes, and a plot script. Synthesis and oracle
// failures are recorded in the summary while the other algorithms still run.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Standalone semilog-y tracking-error plot script (one series per trace,
// relative CSV paths). Throws when a referenced trace file is missing.
void emit_plot_script(const ExperimentResult& result, const std::string& path);

// Machine-readable `key = value` controller report for later re-verification.
struct SynthesisReportData {
  signals::Polynomial model;
  signals::Polynomial numerator;
  double tau = 1.0;
  double rho = 0.0;
  double lmi_margin = 0.0;
  synthesis::EigenInterval interval{0.0, 0.0};
};
void write_synthesis_report(const AlgorithmResult& result, const std::string& path);
SynthesisReportData read_synthesis_report(const std::string& path);

}  // namespace impopt::harness
