// End-to-end acceptance gate. Prints one [PASS]/[FAIL] line per criterion and
// exits non-zero when any fails. The bundled configs are run once into a
// scratch directory and shared across every criterion that reads them; a
// second run of each config feeds the determinism check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "impopt/algorithms.hpp"
#include "impopt/harness.hpp"
#include "impopt/linalg.hpp"
#include "impopt/problems.hpp"
#include "impopt/signals.hpp"
#include "impopt/synthesis.hpp"
#include "impopt/util.hpp"

namespace fs = std::filesystem;
using namespace impopt;
using linalg::Matrix;
using linalg::Vector;

namespace {

// pinned tolerances and budgets, one block per criterion
constexpr double SPECTRUM_IMAG_TOL = 1e-8;        // 1: |Im(eigenvalue)|
constexpr double SPECTRUM_EDGE_TOL = 1e-8;        // 1: interval slack
constexpr double LEMMA_BUDGET_S = 10.0;           // 1
constexpr double IDENTITY_REL_TOL = 1e-9;         // 2
constexpr int IDENTITY_POINTS = 20;               // 2
constexpr double CANON_LO = 0.025;                // 3: canonical gain interval
constexpr double CANON_HI = 10.0;                 // 3
constexpr int GRID_POINTS = 10000;                // 3
constexpr double GRID_RADIUS_BAR = 1.0 - 1e-6;    // 3
constexpr double LMI_BUDGET_S = 60.0;             // 3
constexpr double TRACK_TOL = 1e-6;                // 4, 5: asymptotic err_x
constexpr double BASELINE_FACTOR = 100.0;         // 4
constexpr double SINE_BUDGET_S = 120.0;           // 4
constexpr double SLOPE_GUARD_FRACTION = 0.05;     // 5: window around kinks
constexpr double WINDOW_FRACTION = 0.2;           // 6: of the transition gap
constexpr double MEDIAN_FACTOR = 2.0;             // 6
constexpr double AGREE_TOL = 1e-8;                // 6: inactive-regime iterates
constexpr long INACTIVE_MIN_RUN = 40;             // 6: runs shorter than this
                                                  //    are all transient
constexpr long REDUCTION_STEPS = 10000;           // 7
constexpr double TIMEVAR_BUDGET_S = 300.0;        // 8
constexpr double FD_REL_TOL = 1e-6;               // 9
constexpr double FD_STEP = 1e-5;                  // 9: central-difference h
constexpr double ORACLE_RESIDUAL_BAR = 1e-9;      // 10
constexpr double PG_AGREE_TOL = 1e-8;             // 10
constexpr long PG_ITERATIONS = 1000000;           // 10
constexpr int PG_INSTANCES = 20;                  // 10

int failures = 0;

void report(int idx, const char* label, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", idx, label,
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string config_path(const std::string& name) {
  return std::string(IMPOPT_CONFIG_DIR) + "/" + name + ".cfg";
}

const char* const BUNDLE_NAMES[] = {"eq_sine", "eq_triangle", "ineq_triangle",
                                    "timevar", "nonquad"};

// one bundled config executed end to end
struct Bundle {
  bool ok = false;
  std::string error;
  harness::ExperimentResult result;
  double seconds = 0.0;
  fs::path dir;
};

Bundle run_bundle(const std::string& name, const fs::path& out) {
  Bundle b;
  b.dir = out;
  Timer t;
  try {
    auto cfg = harness::parse_config(config_path(name));
    cfg.out_dir = out.string();
    b.result = harness::run_experiment(cfg);
    b.ok = true;
  } catch (const std::exception& e) {
    b.error = e.what();
  }
  b.seconds = t.seconds();
  return b;
}

const harness::AlgorithmResult* find_alg(const harness::ExperimentResult& r,
                                         const std::string& name) {
  for (const auto& a : r.algorithms)
    if (a.name == name) return &a;
  return nullptr;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return (v.size() % 2 == 1) ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string slurp_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- criterion 1: saddle-spectrum containment on 100 seeded instances ------

bool criterion_spectrum(std::string& detail) {
  Timer t;
  double worst_imag = 0.0;
  double lo_margin = std::numeric_limits<double>::infinity();
  double hi_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    problems::StreamRecipe recipe;
    recipe.seed = 1000 + i;
    recipe.n = 5 + (i % 16);
    recipe.p = 1 + (i % 5);
    recipe.eig_lo = 0.5 + 0.25 * (i % 4);
    recipe.eig_hi = recipe.eig_lo + 1.0 + (i % 9);
    const auto stream = problems::make_stream(recipe);
    const auto bounds = stream.bounds();
    const double tau = synthesis::tau_select(bounds);
    const auto interval = synthesis::eigen_interval(bounds, tau);
    const Matrix a = stream.a_at(0);
    const Matrix g = stream.g_at(0);
    const int n = stream.n();
    const int p = stream.p();
    Matrix saddle = Matrix::Zero(n + p, n + p);
    saddle.topLeftCorner(n, n) = a;
    saddle.topRightCorner(n, p) = -tau * g.transpose();
    saddle.bottomLeftCorner(p, n) = g;
    const auto spectrum = linalg::general_eigenvalues(saddle);
    worst_imag = std::max(worst_imag, spectrum.max_imag);
    for (const auto& ev : spectrum.eigenvalues) {
      lo_margin = std::min(lo_margin, ev.real() - interval.lo);
      hi_margin = std::min(hi_margin, interval.hi - ev.real());
    }
  }
  const double sec = t.seconds();
  const bool pass = worst_imag <= SPECTRUM_IMAG_TOL && lo_margin >= -SPECTRUM_EDGE_TOL &&
                    hi_margin >= -SPECTRUM_EDGE_TOL && sec < LEMMA_BUDGET_S;
  detail = fmt("100 instances, max |Im| %.2e, edge margins %.2e / %.2e, %.2f s", worst_imag,
               lo_margin, hi_margin, sec);
  return pass;
}

// --- criterion 2: companion characteristic identities ----------------------

bool criterion_identities(std::string& detail) {
  util::Rng rng(7777);
  double worst_rel = 0.0;
  int models = 0;
  auto check_model = [&](const signals::Polynomial& p) {
    ++models;
    const int m = p.degree();
    signals::Polynomial c;
    c.coeffs.resize(m);
    for (auto& v : c.coeffs) v = rng.uniform(-1.0, 1.0);
    const auto cf = synthesis::companion_form(p, c);
    const Eigen::MatrixXcd f = cf.f.cast<std::complex<double>>();
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(m, m);
    for (int j = 0; j < IDENTITY_POINTS; ++j) {
      const std::complex<double> z = rng.on_circle(rng.uniform(1.25, 2.0));
      const double mu = rng.uniform(0.05, 10.0);
      const std::complex<double> det_open = (z * eye - f).determinant();
      const std::complex<double> want_open = p.eval(z);
      worst_rel = std::max(worst_rel, std::abs(det_open - want_open) /
                                          std::max(1e-30, std::abs(want_open)));
      const Matrix closed = cf.f + mu * (cf.cc * cf.k);
      const std::complex<double> det_closed =
          (z * eye - closed.cast<std::complex<double>>()).determinant();
      const std::complex<double> want_closed = p.eval(z) - mu * c.eval(z);
      worst_rel = std::max(worst_rel, std::abs(det_closed - want_closed) /
                                          std::max(1e-30, std::abs(want_closed)));
    }
  };
  check_model(signals::internal_model({signals::SignalKind::Constant, 0.0, 1.0, 1, {}}));
  for (int harmonics = 1; harmonics <= 6; ++harmonics)
    check_model(signals::internal_model(
        {signals::SignalKind::MultiHarmonic, 0.5, 1.0, harmonics, {}}));
  detail = fmt("%d models x %d points x 2 identities, worst rel err %.2e", models,
               IDENTITY_POINTS, worst_rel);
  return worst_rel <= IDENTITY_REL_TOL;
}

// --- criterion 3: certified designs grid-verify on the canonical interval --

bool criterion_grid(std::string& detail) {
  Timer t;
  const synthesis::EigenInterval interval{CANON_LO, CANON_HI};
  struct Candidate {
    const char* label;
    signals::SignalSpec spec;
  };
  const Candidate candidates[] = {
      {"integrator", {signals::SignalKind::Constant, 0.0, 1.0, 1, {}}},
      {"double-integrator", {signals::SignalKind::TriangularWave, 1e-4 * M_PI, 1.0, 1, {}}},
      {"oscillator", {signals::SignalKind::Sine, 1e-4 * M_PI, 1.0, 1, {}}},
  };
  bool pass = true;
  int successes = 0;
  std::string parts;
  for (const auto& cand : candidates) {
    const auto model = signals::internal_model(cand.spec);
    if (!parts.empty()) parts += "; ";
    try {
      const auto r = synthesis::synthesize(model, interval);
      const auto rep = synthesis::verify_robust_stability(r, interval, GRID_POINTS);
      const bool ok = rep.pass && rep.worst_radius <= GRID_RADIUS_BAR;
      pass = pass && ok;
      ++successes;
      parts += fmt("%s: margin %.1e, worst radius %.9f %s", cand.label, r.lmi_margin,
                   rep.worst_radius, ok ? "ok" : "GRID FAIL");
    } catch (const synthesis::SynthesisFailure& e) {
      // infeasible designs are reported, not certified; nothing to verify
      parts += fmt("%s: infeasible (margin %.1e)", cand.label, e.margin);
    }
  }
  const double sec = t.seconds();
  pass = pass && sec < LMI_BUDGET_S;
  detail = fmt("%d of 3 feasible, every success verified on %d points; %s; %.2f s", successes,
               GRID_POINTS, parts.c_str(), sec);
  return pass;
}

// --- criterion 4: sine stream, controller vs tuned baseline ----------------

bool criterion_sine(const Bundle& bundle, std::string& detail) {
  if (!bundle.ok) {
    detail = "bundle failed: " + bundle.error;
    return false;
  }
  const auto& r = bundle.result;
  const auto* control = find_alg(r, "control");
  const auto* pd = find_alg(r, "pd");
  if (!control || !pd) {
    detail = "missing algorithm entries";
    return false;
  }
  const bool pass = r.all_ok() && r.config.horizon >= 200000 &&
                    control->asymptotic_err <= TRACK_TOL &&
                    control->asymptotic_err * BASELINE_FACTOR <= pd->asymptotic_err &&
                    bundle.seconds < SINE_BUDGET_S;
  detail = fmt("controller %.3e, tuned baseline %.3e (factor %.1e), horizon %ld, %.1f s",
               control->asymptotic_err, pd->asymptotic_err,
               pd->asymptotic_err / std::max(control->asymptotic_err, 1e-300),
               r.config.horizon, bundle.seconds);
  return pass;
}

// --- criterion 5: triangle stream, exact tracking away from slope changes --

bool criterion_triangle(const Bundle& bundle, std::string& detail) {
  if (!bundle.ok) {
    detail = "bundle failed: " + bundle.error;
    return false;
  }
  const auto& r = bundle.result;
  const auto* control = find_alg(r, "control");
  if (!control || !control->ok) {
    detail = "controller run missing or failed";
    return false;
  }
  const auto trace = harness::read_trace_csv((bundle.dir / control->trace_file).string());
  const long horizon = trace.rows();
  const auto& spec = r.config.stream.b_signal;
  // slope changes show up as second-difference kinks of the drive wave; the
  // start counts as one (the controller starts at rest there)
  std::vector<long> breaks{0};
  double prev = signals::eval_wave(spec, 0);
  double curr = signals::eval_wave(spec, 1);
  for (long k = 1; k + 1 < horizon; ++k) {
    const double next = signals::eval_wave(spec, k + 1);
    if (std::abs((next - curr) - (curr - prev)) > 1e-9) breaks.push_back(k);
    prev = curr;
    curr = next;
  }
  const double period = 2.0 * M_PI / spec.omega;
  const long guard = std::lround(SLOPE_GUARD_FRACTION * period);
  double worst_outside = 0.0;
  double worst_inside = 0.0;
  for (long k = 0; k < horizon; ++k) {
    long dist = std::numeric_limits<long>::max();
    for (const long b : breaks) dist = std::min(dist, std::labs(k - b));
    auto& slot = dist > guard ? worst_outside : worst_inside;
    slot = std::max(slot, trace.err_x[static_cast<size_t>(k)]);
  }
  // a transient at the kinks is expected, not just tolerated
  const bool pass = r.all_ok() && worst_outside <= TRACK_TOL && worst_inside > TRACK_TOL;
  detail = fmt("%zu slope changes, guard %ld steps, worst err outside %.2e, inside %.2e",
               breaks.size(), guard, worst_outside, worst_inside);
  return pass;
}

// --- criterion 6: saturation handling around activations --------------------

bool criterion_antiwindup(const Bundle& bundle, std::string& detail) {
  if (!bundle.ok) {
    detail = "bundle failed: " + bundle.error;
    return false;
  }
  const auto& r = bundle.result;
  const auto* rho0 = find_alg(r, "rho0");
  const auto* rho1 = find_alg(r, "rho1");
  if (!rho0 || !rho1 || !rho0->ok || !rho1->ok) {
    detail = "saturated runs missing or failed";
    return false;
  }
  const auto t0 = harness::read_trace_csv((bundle.dir / rho0->trace_file).string());
  const auto t1 = harness::read_trace_csv((bundle.dir / rho1->trace_file).string());
  const long horizon = t0.rows();

  // windows after each inactive->active transition of the oracle active set
  std::vector<long> transitions;
  for (long k = 1; k < horizon; ++k)
    if (t0.active_flag[static_cast<size_t>(k)] > 0 &&
        t0.active_flag[static_cast<size_t>(k - 1)] == 0)
      transitions.push_back(k);
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < transitions.size(); ++j) {
    const long start = transitions[j];
    const long gap = (j + 1 < transitions.size() ? transitions[j + 1] : horizon) - start;
    const long len = std::max<long>(1, std::lround(WINDOW_FRACTION * gap));
    std::vector<double> w0, w1;
    for (long k = start; k < std::min(horizon, start + len); ++k) {
      w0.push_back(t0.err_x[static_cast<size_t>(k)]);
      w1.push_back(t1.err_x[static_cast<size_t>(k)]);
    }
    worst_ratio = std::min(worst_ratio, median(w0) / std::max(median(w1), 1e-300));
  }

  // iterate agreement while the constraint stays inactive: rerun the two
  // saturated variants directly so the iterates themselves are comparable
  const auto cfg = [&] {
    auto c = harness::parse_config(config_path("ineq_triangle"));
    return c;
  }();
  const auto stream = problems::make_stream(cfg.stream);
  const auto oracle = problems::oracle_trajectory(stream, cfg.horizon);
  const auto bounds = stream.bounds();
  const double tau = synthesis::tau_select(bounds);
  const auto interval = synthesis::eigen_interval(bounds, tau);
  const harness::AlgorithmConfig* ac0 = nullptr;
  const harness::AlgorithmConfig* ac1 = nullptr;
  for (const auto& a : cfg.algorithms) {
    if (a.name == "rho0") ac0 = &a;
    if (a.name == "rho1") ac1 = &a;
  }
  if (!ac0 || !ac1) {
    detail = "config lacks the two saturated entries";
    return false;
  }
  const auto model = signals::internal_model(ac0->model);
  algorithms::AlgorithmSpec s0{algorithms::AlgorithmKind::ImpAntiwindup, 0.0, 0.0, 0.0,
                               synthesis::synthesize(model, interval, tau, ac0->rho)};
  algorithms::AlgorithmSpec s1{algorithms::AlgorithmKind::ImpAntiwindup, 0.0, 0.0, 0.0,
                               synthesis::synthesize(model, interval, tau, ac1->rho)};
  const auto run0 = algorithms::run(s0, stream, cfg.horizon, oracle);
  const auto run1 = algorithms::run(s1, stream, cfg.horizon, oracle);
  double worst_agree = 0.0;
  long runs_checked = 0;
  long k = 0;
  while (k < cfg.horizon) {
    if (run0.active[static_cast<size_t>(k)] != 0) {
      ++k;
      continue;
    }
    long end = k;
    while (end < cfg.horizon && run0.active[static_cast<size_t>(end)] == 0) ++end;
    if (end - k >= INACTIVE_MIN_RUN) {
      ++runs_checked;
      for (long j = k + 3 * (end - k) / 4; j < end; ++j)
        worst_agree = std::max(
            worst_agree,
            (run0.xs[static_cast<size_t>(j)] - run1.xs[static_cast<size_t>(j)]).norm());
    }
    k = end;
  }

  const bool pass = r.all_ok() && !transitions.empty() && worst_ratio >= MEDIAN_FACTOR &&
                    runs_checked > 0 && worst_agree <= AGREE_TOL;
  detail = fmt("%zu activations, worst median ratio %.1e, %ld inactive regimes, "
               "iterate agreement %.2e",
               transitions.size(), worst_ratio, runs_checked, worst_agree);
  return pass;
}

// --- criterion 7: saturated stepper reduces exactly without inequalities ---

bool criterion_reduction(std::string& detail) {
  problems::StreamRecipe recipe;
  recipe.seed = 777;
  recipe.n = 6;
  recipe.p = 2;
  recipe.eig_lo = 1.0;
  recipe.eig_hi = 4.0;
  recipe.measured_bounds = true;
  recipe.b_signal = {signals::SignalKind::Sine, 0.21, 1.0, 1, {}};
  recipe.h_signal = {signals::SignalKind::Sine, 0.21, 0.7, 1, {}};
  const auto stream = problems::make_stream(recipe);
  const auto oracle = problems::oracle_trajectory(stream, REDUCTION_STEPS);
  const auto bounds = stream.bounds();
  const double tau = synthesis::tau_select(bounds);
  const auto interval = synthesis::eigen_interval(bounds, tau);
  const auto model = signals::internal_model(recipe.b_signal);
  // identical gains; the saturated variant also carries a back-calculation
  // weight that must stay inert without an inequality block
  const auto plain = synthesis::synthesize(model, interval, tau, 0.0);
  const auto saturated = synthesis::synthesize(model, interval, tau, 0.7);
  const auto run_eq =
      algorithms::run({algorithms::AlgorithmKind::ImpEquality, 0.0, 0.0, 0.0, plain}, stream,
                      REDUCTION_STEPS, oracle);
  const auto run_aw =
      algorithms::run({algorithms::AlgorithmKind::ImpAntiwindup, 0.0, 0.0, 0.0, saturated},
                      stream, REDUCTION_STEPS, oracle);
  double max_dev = 0.0;
  for (size_t k = 0; k < run_eq.xs.size(); ++k)
    max_dev = std::max(max_dev, (run_eq.xs[k] - run_aw.xs[k]).lpNorm<Eigen::Infinity>());
  bool columns_equal = true;
  for (size_t k = 0; k < run_eq.err_x.size(); ++k) {
    columns_equal = columns_equal && run_eq.err_x[k] == run_aw.err_x[k] &&
                    run_eq.err_w[k] == run_aw.err_w[k] &&
                    run_eq.norm_e[k] == run_aw.norm_e[k] &&
                    run_eq.norm_f[k] == run_aw.norm_f[k];
  }
  const bool pass = max_dev == 0.0 && columns_equal;
  detail = fmt("%ld steps, max |x_saturated - x_plain| = %.1e, recorded columns %s",
               REDUCTION_STEPS, max_dev, columns_equal ? "identical" : "DIFFER");
  return pass;
}

// --- criterion 8: model order sweep on the time-varying stream -------------

bool criterion_timevar(const Bundle& bundle, std::string& detail) {
  if (!bundle.ok) {
    detail = "bundle failed: " + bundle.error;
    return false;
  }
  const auto& r = bundle.result;
  const char* const names[] = {"L1", "L2", "L3", "L6"};
  double errs[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4; ++i) {
    const auto* a = find_alg(r, names[i]);
    if (!a || !a->ok) {
      detail = fmt("run %s missing or failed", names[i]);
      return false;
    }
    errs[i] = a->asymptotic_err;
  }
  const auto* pd = find_alg(r, "pd");
  if (!pd || !pd->ok) {
    detail = "tuned baseline missing or failed";
    return false;
  }
  const bool monotone = errs[0] >= errs[1] && errs[1] >= errs[2] && errs[2] >= errs[3];
  const bool pass = r.all_ok() && monotone && errs[3] < pd->asymptotic_err &&
                    bundle.seconds < TIMEVAR_BUDGET_S;
  detail = fmt("L1 %.3e >= L2 %.3e >= L3 %.3e >= L6 %.3e, baseline %.3e, %.1f s", errs[0],
               errs[1], errs[2], errs[3], pd->asymptotic_err, bundle.seconds);
  return pass;
}

// --- criterion 9: logistic gradient and ordering on the nonquadratic stream -

bool criterion_nonquad(const Bundle& bundle, std::string& detail) {
  if (!bundle.ok) {
    detail = "bundle failed: " + bundle.error;
    return false;
  }
  // central finite differences against the analytic gradient, multiplier-free
  const auto cfg = harness::parse_config(config_path("nonquad"));
  const auto stream = problems::make_stream(cfg.stream);
  util::Rng rng(313);
  double worst_rel = 0.0;
  const long ks[] = {0, 7, 131, 997, 4040};
  for (const long k : ks) {
    for (int rep = 0; rep < 3; ++rep) {
      Vector x(stream.n());
      for (int i = 0; i < stream.n(); ++i) x[i] = rng.uniform(-2.0, 2.0);
      const Vector w = Vector::Zero(stream.p());
      const auto grads = problems::lagrangian_gradients(stream, k, x, w, Vector());
      Vector fd(stream.n());
      for (int i = 0; i < stream.n(); ++i) {
        const double step = FD_STEP * std::max(1.0, std::abs(x[i]));
        Vector xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        fd[i] = (problems::nonquadratic_cost(stream, k, xp) -
                 problems::nonquadratic_cost(stream, k, xm)) /
                (2.0 * step);
      }
      worst_rel = std::max(worst_rel, (grads.e - fd).norm() / std::max(grads.e.norm(), 1e-12));
    }
  }
  const auto& r = bundle.result;
  const auto* l3 = find_alg(r, "L3");
  const auto* pd = find_alg(r, "pd");
  if (!l3 || !pd || !l3->ok || !pd->ok) {
    detail = "runs missing or failed";
    return false;
  }
  const bool pass =
      r.all_ok() && worst_rel <= FD_REL_TOL && l3->asymptotic_err < pd->asymptotic_err;
  detail = fmt("gradient vs central differences %.2e; L3 %.3e vs tuned baseline %.3e",
               worst_rel, l3->asymptotic_err, pd->asymptotic_err);
  return pass;
}

// --- criterion 10: oracle soundness ------------------------------------------

bool criterion_oracle(std::string& detail) {
  // every bundled stream's full trajectory stays within the residual bar
  double worst_residual = 0.0;
  for (const auto* name : BUNDLE_NAMES) {
    const auto cfg = harness::parse_config(config_path(name));
    const auto stream = problems::make_stream(cfg.stream);
    const auto trajectory = problems::oracle_trajectory(stream, cfg.horizon);
    for (const auto& sol : trajectory)
      worst_residual = std::max(worst_residual, sol.max_residual);
  }

  // cross-check the enumeration oracle against a long projected-gradient run
  // on the dual: minimize 1/2 nu' M nu + q' nu with the inequality multipliers
  // clamped at zero, then map back through the stationarity relation
  double worst_gap = 0.0;
  for (int i = 0; i < PG_INSTANCES; ++i) {
    problems::StreamRecipe recipe;
    recipe.seed = 9000 + i;
    recipe.n = 6 + 2 * (i % 4);
    recipe.p = i % 3;
    recipe.p_prime = 1 + (i % 3);
    recipe.eig_lo = 1.0;
    recipe.eig_hi = 6.0;
    recipe.sigma_lo = 0.8;
    recipe.sigma_hi = 0.8 + 0.2 * (i % 5);
    recipe.b_signal = {signals::SignalKind::Sine, 0.37, 1.0, 1, {}};
    if (recipe.p > 0) recipe.h_signal = {signals::SignalKind::Sine, 0.29, 0.6, 1, {}};
    recipe.hp_signal = {signals::SignalKind::TriangularWave, 0.23, 0.5, 1, {}};
    const auto stream = problems::make_stream(recipe);
    const long k = 17 + 13 * i;
    const auto sol = problems::inequality_oracle(stream, k);
    worst_residual = std::max(worst_residual, sol.max_residual);

    const Matrix a = stream.a_at(k);
    const Vector b = stream.b_at(k);
    const int p = stream.p();
    const int pp = stream.p_prime();
    const int m = p + pp;
    Matrix s(m, stream.n());
    Vector lift(m);
    if (p > 0) {
      s.topRows(p) = stream.g_at(k);
      lift.head(p) = stream.h_at(k);
    }
    s.bottomRows(pp) = stream.gp();
    lift.tail(pp) = stream.hp_at(k);
    const Eigen::LLT<Matrix> llt(a);
    const Matrix dual_hessian = s * llt.solve(s.transpose());
    const Vector dual_shift = s * llt.solve(b) + lift;
    const Eigen::SelfAdjointEigenSolver<Matrix> es(dual_hessian);
    const double eta = 1.0 / es.eigenvalues().maxCoeff();
    Vector nu = Vector::Zero(m);
    Vector grad(m);
    for (long it = 0; it < PG_ITERATIONS; ++it) {
      grad.noalias() = dual_hessian * nu;
      grad += dual_shift;
      nu.noalias() -= eta * grad;
      for (int j = p; j < m; ++j) nu[j] = std::max(0.0, nu[j]);
    }
    const Vector x_ref = -llt.solve(b + s.transpose() * nu);
    worst_gap = std::max(worst_gap, (x_ref - sol.x_star).norm());
  }

  const bool pass = worst_residual <= ORACLE_RESIDUAL_BAR && worst_gap <= PG_AGREE_TOL;
  detail = fmt("worst KKT residual %.1e over all bundled trajectories; projected-gradient "
               "reference gap %.1e over %d instances x %ld iterations",
               worst_residual, worst_gap, PG_INSTANCES, PG_ITERATIONS);
  return pass;
}

// --- criterion 11: byte-identical re-runs ------------------------------------

bool criterion_determinism(const std::map<std::string, Bundle>& first, const fs::path& root,
                           std::string& detail) {
  int files = 0;
  for (const auto* name : BUNDLE_NAMES) {
    const auto& a = first.at(name);
    if (!a.ok) {
      detail = fmt("first run of %s failed: %s", name, a.error.c_str());
      return false;
    }
    const Bundle b = run_bundle(name, root / "b" / name);
    if (!b.ok) {
      detail = fmt("second run of %s failed: %s", name, b.error.c_str());
      return false;
    }
    std::vector<fs::path> csvs;
    for (const auto& entry : fs::directory_iterator(a.dir))
      if (entry.path().extension() == ".csv") csvs.push_back(entry.path().filename());
    std::sort(csvs.begin(), csvs.end());
    if (csvs.empty()) {
      detail = fmt("%s produced no csv files", name);
      return false;
    }
    for (const auto& rel : csvs) {
      ++files;
      if (slurp_bytes(a.dir / rel) != slurp_bytes(b.dir / rel)) {
        detail = fmt("%s differs between runs", (b.dir / rel).string().c_str());
        return false;
      }
    }
  }
  detail = fmt("%d csv files across 5 configs byte-identical on re-run", files);
  return true;
}

}  // namespace

int main() {
  try {
    const fs::path root = fs::temp_directory_path() / "impopt_acceptance";
    std::error_code ec;
    fs::remove_all(root, ec);

    std::map<std::string, Bundle> bundles;
    for (const auto* name : BUNDLE_NAMES) {
      bundles[name] = run_bundle(name, root / "a" / name);
      const auto& b = bundles[name];
      std::printf("# bundle %s: %s (%.1f s)\n", name, b.ok ? "ok" : b.error.c_str(),
                  b.seconds);
      std::fflush(stdout);
    }

    std::string detail;
    report(1, "saddle-spectrum containment across 100 seeded instances",
           criterion_spectrum(detail), detail);
    report(2, "companion characteristic identities for harmonic models up to L=6",
           criterion_identities(detail), detail);
    report(3, "every certified design grid-verifies on the canonical interval",
           criterion_grid(detail), detail);
    report(4, "sine stream: controller err_x <= 1e-6 and 100x under tuned baseline",
           criterion_sine(bundles.at("eq_sine"), detail), detail);
    report(5, "triangle stream: exact tracking away from slope changes",
           criterion_triangle(bundles.at("eq_triangle"), detail), detail);
    report(6, "activation windows: back-calculation at least 2x better, inactive regimes agree",
           criterion_antiwindup(bundles.at("ineq_triangle"), detail), detail);
    report(7, "saturated stepper reduces exactly to the equality stepper without inequalities",
           criterion_reduction(detail), detail);
    report(8, "time-varying stream: err_x non-increasing in model order, L6 under baseline",
           criterion_timevar(bundles.at("timevar"), detail), detail);
    report(9, "logistic gradient matches finite differences, L3 under baseline",
           criterion_nonquad(bundles.at("nonquad"), detail), detail);
    report(10, "oracle KKT residuals within bar and projected-gradient cross-check",
           criterion_oracle(detail), detail);
    report(11, "re-running bundled configs reproduces every csv byte-identically",
           criterion_determinism(bundles, root, detail), detail);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 11 criteria passed\n");
  return 0;
}
