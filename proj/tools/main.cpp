#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "impopt/harness.hpp"
#include "impopt/signals.hpp"
#include "impopt/synthesis.hpp"

using namespace impopt;

namespace {

const std::map<std::string, signals::SignalKind> SIGNAL_KINDS = {
    {"constant", signals::SignalKind::Constant},
    {"sine", signals::SignalKind::Sine},
    {"triangle", signals::SignalKind::TriangularWave},
    {"multiharmonic", signals::SignalKind::MultiHarmonic},
};

void print_controller(const synthesis::ControllerRealization& ctrl,
                      const synthesis::StabilityReport& rep) {
  std::printf("model degree      %d\n", ctrl.model.degree());
  std::printf("model coeffs      ");
  for (size_t i = 0; i < ctrl.model.coeffs.size(); ++i)
    std::printf("%s%.12g", i ? ", " : "", ctrl.model.coeffs[i]);
  std::printf("\n");
  std::printf("tau               %.12g\n", ctrl.tau);
  std::printf("rho               %.12g\n", ctrl.rho);
  std::printf("gain row          ");
  for (long i = 0; i < ctrl.k.size(); ++i) std::printf("%s%.12g", i ? ", " : "", ctrl.k(i));
  std::printf("\n");
  std::printf("lmi margin        %.6e\n", ctrl.lmi_margin);
  std::printf("gain interval     [%.6e, %.6e]\n", ctrl.interval.lo, ctrl.interval.hi);
  std::printf("grid points       %d\n", rep.grid_size);
  std::printf("worst radius      %.12g at gain %.6e\n", rep.worst_radius, rep.worst_lambda);
  std::printf("verdict           %s\n", rep.pass ? "PASS" : "FAIL");
}

int cmd_synthesize(const std::string& model_kind, double model_omega, int harmonics, double lo,
                   double hi, double tau, double rho, int grid, const std::string& report_path) {
  signals::SignalSpec spec;
  spec.kind = SIGNAL_KINDS.at(model_kind);
  spec.omega = model_omega;
  spec.harmonics = harmonics;
  const auto model = signals::internal_model(spec);
  const synthesis::EigenInterval interval{lo, hi};
  synthesis::ControllerRealization ctrl;
  try {
    ctrl = synthesis::synthesize(model, interval, tau, rho);
  } catch (const synthesis::SynthesisFailure& e) {
    std::fprintf(stderr, "synthesis failed: %s (margin %.6e)\n", e.what(), e.margin);
    return 1;
  }
  const auto rep = synthesis::verify_robust_stability(ctrl, interval, grid);
  print_controller(ctrl, rep);
  if (!report_path.empty()) {
    harness::AlgorithmResult r;
    r.name = "controller";
    r.controller = ctrl;
    r.stability = rep;
    harness::write_synthesis_report(r, report_path);
    std::printf("report written    %s\n", report_path.c_str());
  }
  return rep.pass ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, bool seed_set,
            unsigned long long seed, int grid) {
  auto cfg = harness::parse_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed_set) cfg.seed = seed;
  cfg.verify_grid = grid;
  const auto result = harness::run_experiment(cfg);

  std::ifstream summary(std::filesystem::path(cfg.out_dir) / result.summary_file);
  std::cout << summary.rdbuf();
  for (const auto& r : result.algorithms) {
    if (!r.ok) std::fprintf(stderr, "algorithm %s failed: %s\n", r.name.c_str(), r.error.c_str());
    if (r.stability && !r.stability->pass)
      std::fprintf(stderr, "algorithm %s failed grid verification\n", r.name.c_str());
  }
  return result.all_ok() ? 0 : 1;
}

int cmd_verify(const std::string& report_path, bool lo_set, double lo, bool hi_set, double hi,
               int grid) {
  auto data = harness::read_synthesis_report(report_path);
  if (lo_set) data.interval.lo = lo;
  if (hi_set) data.interval.hi = hi;
  const auto ctrl = synthesis::make_realization(data.model, data.numerator, data.tau, data.rho);
  const auto rep = synthesis::verify_robust_stability(ctrl, data.interval, grid);
  std::printf("interval          [%.6e, %.6e]\n", data.interval.lo, data.interval.hi);
  std::printf("grid points       %d\n", rep.grid_size);
  std::printf("worst radius      %.12g at gain %.6e\n", rep.worst_radius, rep.worst_lambda);
  std::printf("verdict           %s\n", rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

int cmd_summarize(const std::vector<std::string>& traces) {
  std::printf("%-40s %-10s %s\n", "trace", "rows", "asymptotic_err_x");
  for (const auto& path : traces) {
    const auto data = harness::read_trace_csv(path);
    std::printf("%-40s %-10ld %.6e\n", path.c_str(), data.rows(),
                harness::asymptotic_error(data.err_x));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online constrained tracking: controller synthesis, simulation and verification"};
  app.require_subcommand(1);
  int rc = 0;

  std::vector<std::string> kind_names;
  for (const auto& [name, kind] : SIGNAL_KINDS) kind_names.push_back(name);

  auto* syn = app.add_subcommand("synthesize",
                                 "design a robust gain for an internal model over a gain interval");
  std::string model_kind;
  double model_omega = 0.0, lo = 0.0, hi = 0.0, tau = 1.0, rho = 0.0;
  int harmonics = 1, syn_grid = 10000;
  std::string report_path;
  syn->add_option("--model", model_kind, "internal model family")
      ->required()
      ->check(CLI::IsMember(kind_names));
  syn->add_option("--model-omega", model_omega, "model frequency in radians per step");
  syn->add_option("--harmonics", harmonics, "harmonic count for multiharmonic models");
  syn->add_option("--lo", lo, "lower end of the gain interval")->required();
  syn->add_option("--hi", hi, "upper end of the gain interval")->required();
  syn->add_option("--tau", tau, "dual preconditioning step");
  syn->add_option("--rho", rho, "anti-windup back-calculation gain");
  syn->add_option("--grid-size", syn_grid, "verification grid density");
  syn->add_option("--report", report_path, "write a machine-readable controller report here");
  syn->callback([&] {
    rc = cmd_synthesize(model_kind, model_omega, harmonics, lo, hi, tau, rho, syn_grid,
                        report_path);
  });

  auto* run = app.add_subcommand("run", "run an experiment config end to end");
  std::string config_path, out_dir;
  unsigned long long seed = 0;
  int run_grid = 10000;
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  auto* seed_opt = run->add_option("--seed", seed, "seed override");
  run->add_option("--grid-size", run_grid, "verification grid density for synthesis reports");
  run->callback([&] {
    rc = cmd_run(config_path, out_dir, seed_opt->count() > 0, seed, run_grid);
  });

  auto* ver = app.add_subcommand("verify", "re-certify a controller report on a gain interval");
  std::string verify_report;
  double vlo = 0.0, vhi = 0.0;
  int verify_grid = 10000;
  ver->add_option("--report", verify_report, "controller report to check")->required();
  auto* lo_opt = ver->add_option("--lo", vlo, "interval override, lower end");
  auto* hi_opt = ver->add_option("--hi", vhi, "interval override, upper end");
  ver->add_option("--grid-size", verify_grid, "verification grid density");
  ver->callback([&] {
    rc = cmd_verify(verify_report, lo_opt->count() > 0, vlo, hi_opt->count() > 0, vhi,
                    verify_grid);
  });

  auto* sum = app.add_subcommand("summarize", "asymptotic tracking errors of trace CSVs");
  std::vector<std::string> traces;
  sum->add_option("--trace", traces, "trace CSV (repeatable)")->required();
  sum->callback([&] { rc = cmd_summarize(traces); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
