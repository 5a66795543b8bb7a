#include "impopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace impopt::harness {

namespace fs = std::filesystem;

namespace {

const char* const CSV_HEADER = "k,err_x,err_w,norm_e,norm_f,norm_fp,active_flag";
const long TUNING_HORIZON_CAP = 20000;  // rehearsal horizon for the grid search
const int TUNING_POINTS_PER_DECADE = 9;
const int TUNING_DECADES = 4;           // grid spans [1e-4, 1]
const double ASYMPTOTIC_TAIL = 0.1;     // fraction of the horizon the metric averages over

bool is_control_kind(algorithms::AlgorithmKind kind) {
  return kind == algorithms::AlgorithmKind::ImpEquality ||
         kind == algorithms::AlgorithmKind::ImpAntiwindup;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool safe_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.')
      return false;
  }
  return true;
}

// ---- config text ----------------------------------------------------------

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
  bool used = false;
};

// Flat key/value view of a config file that tracks consumption so leftovers
// can be reported as unknown keys with their line numbers.
class ConfigReader {
public:
  ConfigReader(const std::string& text, std::string origin) : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string stripped = trim(raw);
      if (stripped.empty()) continue;
      const size_t eq = stripped.find('=');
      if (eq == std::string::npos) fail_line(line, "expected `key = value`");
      Entry e;
      e.key = trim(stripped.substr(0, eq));
      e.value = trim(stripped.substr(eq + 1));
      e.line = line;
      if (e.key.empty()) fail_line(line, "empty key");
      if (e.value.empty()) fail_line(line, "key '" + e.key + "' has an empty value");
      for (const auto& prev : entries_) {
        if (prev.key == e.key) fail_line(line, "duplicate key '" + e.key + "'");
      }
      entries_.push_back(std::move(e));
    }
  }

  [[noreturn]] void fail_line(int line, const std::string& msg) const {
    throw std::invalid_argument(origin_ + ":" + std::to_string(line) + ": " + msg);
  }
  [[noreturn]] void fail(const Entry& e, const std::string& msg) const {
    fail_line(e.line, msg);
  }

  Entry* find(const std::string& key) {
    for (auto& e : entries_) {
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    }
    return nullptr;
  }
  bool has(const std::string& key) {
    return find(key) != nullptr;
  }

  std::string get_string(const std::string& key, const std::string& def) {
    const Entry* e = find(key);
    return e ? e->value : def;
  }
  double get_double(const std::string& key, double def) {
    const Entry* e = find(key);
    if (!e) return def;
    const char* s = e->value.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v))
      fail(*e, "key '" + key + "' expects a finite number, got '" + e->value + "'");
    return v;
  }
  long get_long(const std::string& key, long def) {
    const Entry* e = find(key);
    if (!e) return def;
    const char* s = e->value.c_str();
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0')
      fail(*e, "key '" + key + "' expects an integer, got '" + e->value + "'");
    return v;
  }
  unsigned long long get_seed(const std::string& key, unsigned long long def) {
    const Entry* e = find(key);
    if (!e) return def;
    const char* s = e->value.c_str();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || e->value[0] == '-')
      fail(*e, "key '" + key + "' expects a non-negative integer, got '" + e->value + "'");
    return v;
  }
  bool get_bool(const std::string& key, bool def) {
    const Entry* e = find(key);
    if (!e) return def;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    fail(*e, "key '" + key + "' expects true or false, got '" + e->value + "'");
  }

  // constraint violation attributed to the key's own line
  [[noreturn]] void violate(const std::string& key, const std::string& msg) {
    const Entry* e = find(key);
    if (e) fail(*e, msg);
    throw std::invalid_argument(origin_ + ": " + msg);
  }

  void finish() const {
    for (const auto& e : entries_) {
      if (!e.used) fail(e, "unknown key '" + e.key + "'");
    }
  }

private:
  std::vector<Entry> entries_;
  std::string origin_;
};

signals::SignalKind parse_signal_kind(ConfigReader& cfg, const std::string& key,
                                      const std::string& value) {
  if (value == "constant") return signals::SignalKind::Constant;
  if (value == "sine") return signals::SignalKind::Sine;
  if (value == "triangle") return signals::SignalKind::TriangularWave;
  if (value == "multiharmonic") return signals::SignalKind::MultiHarmonic;
  cfg.violate(key, "key '" + key +
                       "' expects constant, sine, triangle or multiharmonic, got '" + value + "'");
}

signals::SignalSpec parse_signal(ConfigReader& cfg, const std::string& prefix) {
  signals::SignalSpec spec;
  if (cfg.has(prefix + "_kind"))
    spec.kind = parse_signal_kind(cfg, prefix + "_kind", cfg.get_string(prefix + "_kind", ""));
  spec.omega = cfg.get_double(prefix + "_omega", 0.0);
  spec.amplitude = cfg.get_double(prefix + "_amplitude", 1.0);
  spec.harmonics = static_cast<int>(cfg.get_long(prefix + "_harmonics", 1));
  if (spec.harmonics < 1) cfg.violate(prefix + "_harmonics", prefix + "_harmonics must be >= 1");
  return spec;
}

algorithms::AlgorithmKind parse_algorithm_kind(ConfigReader& cfg, const std::string& key,
                                               const std::string& value) {
  if (value == "primal_dual") return algorithms::AlgorithmKind::PrimalDual;
  if (value == "projected_primal_dual") return algorithms::AlgorithmKind::ProjectedPrimalDual;
  if (value == "imp_equality") return algorithms::AlgorithmKind::ImpEquality;
  if (value == "imp_antiwindup") return algorithms::AlgorithmKind::ImpAntiwindup;
  cfg.violate(key, "key '" + key +
                       "' expects primal_dual, projected_primal_dual, imp_equality or "
                       "imp_antiwindup, got '" +
                       value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

AlgorithmConfig parse_algorithm(ConfigReader& cfg, const std::string& name) {
  const std::string prefix = "algorithm." + name + ".";
  AlgorithmConfig ac;
  ac.name = name;
  const std::string kind_key = prefix + "kind";
  if (!cfg.has(kind_key)) cfg.violate("algorithms", "algorithm '" + name + "' is missing " + kind_key);
  ac.kind = parse_algorithm_kind(cfg, kind_key, cfg.get_string(kind_key, ""));
  if (is_control_kind(ac.kind)) {
    const std::string model_key = prefix + "model";
    if (!cfg.has(model_key))
      cfg.violate(kind_key, "algorithm '" + name + "' needs " + model_key);
    ac.model.kind = parse_signal_kind(cfg, model_key, cfg.get_string(model_key, ""));
    ac.model.omega = cfg.get_double(prefix + "model_omega", 0.0);
    ac.model.harmonics = static_cast<int>(cfg.get_long(prefix + "model_harmonics", 1));
    ac.rho = cfg.get_double(prefix + "rho", 0.0);
    if (ac.rho < 0.0) cfg.violate(prefix + "rho", prefix + "rho must be >= 0");
    try {
      signals::internal_model(ac.model);
    } catch (const std::exception& e) {
      cfg.violate(model_key, "algorithm '" + name + "' model is not constructible: " + e.what());
    }
    for (const char* k : {"alpha", "beta", "gamma", "tune"}) {
      if (cfg.has(prefix + k))
        cfg.violate(prefix + k, prefix + k + " applies to baseline algorithms only");
    }
  } else {
    ac.alpha = cfg.get_double(prefix + "alpha", 0.0);
    ac.beta = cfg.get_double(prefix + "beta", 0.0);
    ac.gamma = cfg.get_double(prefix + "gamma", 0.0);
    ac.tune = cfg.get_bool(prefix + "tune", false);
    for (const char* k : {"model", "model_omega", "model_harmonics", "rho"}) {
      if (cfg.has(prefix + k))
        cfg.violate(prefix + k, prefix + k + " applies to control-based algorithms only");
    }
  }
  return ac;
}

ExperimentConfig parse_config_impl(const std::string& text, const std::string& origin,
                                   const std::string& default_name) {
  ConfigReader cfg(text, origin);
  ExperimentConfig out;

  out.name = cfg.get_string("name", default_name);
  if (!safe_name(out.name)) cfg.violate("name", "name must be a file-name-safe token");
  out.seed = cfg.get_seed("seed", 1);
  out.horizon = cfg.get_long("horizon", 1000);
  if (out.horizon < 1) cfg.violate("horizon", "horizon must be >= 1");
  out.out_dir = cfg.get_string("out_dir", ".");

  problems::StreamRecipe& r = out.stream;
  r.n = static_cast<int>(cfg.get_long("n", r.n));
  if (r.n < 1) cfg.violate("n", "n must be >= 1");
  r.p = static_cast<int>(cfg.get_long("p", r.p));
  if (r.p < 0) cfg.violate("p", "p must be >= 0");
  r.p_prime = static_cast<int>(cfg.get_long("p_prime", r.p_prime));
  if (r.p_prime < 0) cfg.violate("p_prime", "p_prime must be >= 0");
  r.eig_lo = cfg.get_double("eig_lo", r.eig_lo);
  r.eig_hi = cfg.get_double("eig_hi", r.eig_hi);
  if (!(r.eig_lo > 0.0)) cfg.violate("eig_lo", "eig_lo must be > 0");
  if (!(r.eig_hi >= r.eig_lo)) cfg.violate("eig_hi", "eig_hi must be >= eig_lo");
  r.sigma_lo = cfg.get_double("sigma_lo", r.sigma_lo);
  r.sigma_hi = cfg.get_double("sigma_hi", r.sigma_hi);
  if (!(r.sigma_lo > 0.0)) cfg.violate("sigma_lo", "sigma_lo must be > 0");
  if (!(r.sigma_hi >= r.sigma_lo)) cfg.violate("sigma_hi", "sigma_hi must be >= sigma_lo");
  r.measured_bounds = cfg.get_bool("measured_bounds", r.measured_bounds);
  r.time_varying = cfg.get_bool("time_varying", r.time_varying);
  r.tv_omega = cfg.get_double("tv_omega", r.tv_omega);
  r.tv_density = cfg.get_double("tv_density", r.tv_density);
  if (r.tv_density < 0.0 || r.tv_density > 1.0)
    cfg.violate("tv_density", "tv_density must lie in [0, 1]");
  r.nonquad = cfg.get_bool("nonquad", r.nonquad);
  r.nonquad_omega = cfg.get_double("nonquad_omega", r.nonquad_omega);
  r.b_signal = parse_signal(cfg, "b");
  r.h_signal = parse_signal(cfg, "h");
  r.hp_signal = parse_signal(cfg, "hp");

  if (cfg.has("algorithms")) {
    const std::string list = cfg.get_string("algorithms", "");
    for (const std::string& name : split_list(list)) {
      if (!safe_name(name))
        cfg.violate("algorithms", "algorithm name '" + name + "' is not a file-name-safe token");
      for (const auto& prev : out.algorithms) {
        if (prev.name == name) cfg.violate("algorithms", "duplicate algorithm '" + name + "'");
      }
      out.algorithms.push_back(parse_algorithm(cfg, name));
    }
  }

  cfg.finish();
  r.seed = out.seed;
  return out;
}

std::string path_stem(const std::string& path) {
  const fs::path p(path);
  const std::string stem = p.stem().string();
  return safe_name(stem) ? stem : "experiment";
}

// ---- numeric parsing for CSV read-back -------------------------------------

double parse_field_double(const std::string& field, const std::string& path, long line) {
  const char* s = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw std::runtime_error(path + ":" + std::to_string(line) + ": malformed number '" + field +
                             "'");
  return v;
}

long parse_field_long(const std::string& field, const std::string& path, long line) {
  const char* s = field.c_str();
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0')
    throw std::runtime_error(path + ":" + std::to_string(line) + ": malformed integer '" + field +
                             "'");
  return v;
}

// ---- experiment plumbing ---------------------------------------------------

int worker_cap() {
  if (const char* env = std::getenv("IMPOPT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(std::min<long>(v, 256));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

template <typename Fn>
void parallel_for(long count, int workers, Fn fn) {
  workers = static_cast<int>(std::min<long>(workers, count));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (long i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Job {
  AlgorithmResult res;
  algorithms::TrackingTrace trace;
  bool has_trace = false;
};

void run_one(const AlgorithmConfig& ac, const problems::QuadraticStream& stream,
             const std::vector<problems::KktSolution>& oracle, const ExperimentConfig& cfg,
             Job& job) {
  AlgorithmResult& r = job.res;
  algorithms::AlgorithmSpec spec;
  spec.kind = ac.kind;
  try {
    if (is_control_kind(ac.kind)) {
      const auto model = signals::internal_model(ac.model);
      const double tau = synthesis::tau_select(stream.bounds());
      const auto interval = synthesis::eigen_interval(stream.bounds(), tau);
      spec.controller = synthesis::synthesize(model, interval, tau, ac.rho);
      r.controller = spec.controller;
      r.stability = synthesis::verify_robust_stability(*spec.controller, interval, cfg.verify_grid);
    } else if (ac.tune) {
      const TunedGains tuned = tune_step_sizes(stream, oracle, ac.kind, cfg.horizon);
      spec.alpha = tuned.alpha;
      spec.beta = tuned.beta;
      spec.gamma = tuned.gamma;
    } else {
      spec.alpha = ac.alpha;
      spec.beta = ac.beta;
      spec.gamma = ac.gamma;
    }
    job.trace = algorithms::run(spec, stream, cfg.horizon, oracle);
    // the CSV carries errors and residual norms only; drop the iterates
    job.trace.xs.clear();
    job.trace.xs.shrink_to_fit();
    job.trace.x_stars.clear();
    job.trace.x_stars.shrink_to_fit();
    job.has_trace = true;
    r.alpha = job.trace.alpha;
    r.beta = job.trace.beta;
    r.gamma = job.trace.gamma;
    r.asymptotic_err = asymptotic_error(job.trace.err_x);
    r.ok = true;
  } catch (const synthesis::SynthesisFailure& e) {
    r.error = std::string("synthesis: ") + e.what();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
}

std::string kind_name(algorithms::AlgorithmKind kind) {
  switch (kind) {
    case algorithms::AlgorithmKind::PrimalDual: return "primal_dual";
    case algorithms::AlgorithmKind::ProjectedPrimalDual: return "projected_primal_dual";
    case algorithms::AlgorithmKind::ImpEquality: return "imp_equality";
    case algorithms::AlgorithmKind::ImpAntiwindup: return "imp_antiwindup";
  }
  return "?";
}

std::string metric_cell(bool present, double v) {
  if (!present) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

void write_summary(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_summary: cannot open " + path);
  const ExperimentConfig& cfg = result.config;
  out << "experiment = " << cfg.name << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "horizon = " << cfg.horizon << "\n";
  out << "oracle = " << (result.oracle_ok ? "ok" : "failed: " + result.oracle_error) << "\n";
  out << "\n";
  // asymptotic_err_x = median err_x over the final 10% of the horizon;
  // selected step sizes are recorded here for reproducibility
  char row[512];
  std::snprintf(row, sizeof row, "%-14s %-22s %-8s %-16s %-12s %-12s %-12s %-12s %-6s %s\n",
                "algorithm", "kind", "status", "asymptotic_err_x", "alpha", "beta", "gamma",
                "lmi_margin", "grid", "trace");
  out << row;
  for (const auto& r : result.algorithms) {
    const bool baseline = !is_control_kind(r.kind);
    const std::string grid =
        r.stability ? (r.stability->pass ? "PASS" : "FAIL") : std::string("-");
    std::snprintf(row, sizeof row, "%-14s %-22s %-8s %-16s %-12s %-12s %-12s %-12s %-6s %s\n",
                  r.name.c_str(), kind_name(r.kind).c_str(), r.ok ? "ok" : "failed",
                  metric_cell(r.ok, r.asymptotic_err).c_str(),
                  metric_cell(r.ok && baseline, r.alpha).c_str(),
                  metric_cell(r.ok && baseline, r.beta).c_str(),
                  metric_cell(r.ok && baseline, r.gamma).c_str(),
                  metric_cell(r.controller.has_value(), r.controller ? r.controller->lmi_margin : 0.0)
                      .c_str(),
                  grid.c_str(), r.trace_file.empty() ? "-" : r.trace_file.c_str());
    out << row;
    if (!r.ok) out << "  # " << r.name << ": " << r.error << "\n";
  }
  if (!out.flush()) throw std::runtime_error("write_summary: write failed: " + path);
}

}  // namespace

// ---- public API -------------------------------------------------------------

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("parse_config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_impl(text.str(), path, path_stem(path));
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  return parse_config_impl(text, origin, "experiment");
}

void write_csv(const algorithms::TrackingTrace& trace, const std::string& path) {
  const long h = trace.horizon();
  if (static_cast<long>(trace.err_w.size()) != h || static_cast<long>(trace.norm_e.size()) != h ||
      static_cast<long>(trace.norm_f.size()) != h || static_cast<long>(trace.norm_fp.size()) != h ||
      static_cast<long>(trace.active.size()) != h) {
    throw std::invalid_argument("write_csv: trace columns have mismatched lengths");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << CSV_HEADER << "\n";
  char row[512];
  for (long k = 0; k < h; ++k) {
    std::snprintf(row, sizeof row, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", k, trace.err_x[k],
                  trace.err_w[k], trace.norm_e[k], trace.norm_f[k], trace.norm_fp[k],
                  trace.active[k]);
    out << row;
  }
  if (!out.flush()) throw std::runtime_error("write_csv: write failed: " + path);
}

TraceData read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_trace_csv: empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != CSV_HEADER)
    throw std::runtime_error("read_trace_csv: unexpected header in " + path + ": " + line);
  TraceData data;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 7)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                               std::to_string(fields.size()));
    data.k.push_back(parse_field_long(fields[0], path, line_no));
    data.err_x.push_back(parse_field_double(fields[1], path, line_no));
    data.err_w.push_back(parse_field_double(fields[2], path, line_no));
    data.norm_e.push_back(parse_field_double(fields[3], path, line_no));
    data.norm_f.push_back(parse_field_double(fields[4], path, line_no));
    data.norm_fp.push_back(parse_field_double(fields[5], path, line_no));
    data.active_flag.push_back(static_cast<int>(parse_field_long(fields[6], path, line_no)));
  }
  return data;
}

double asymptotic_error(const std::vector<double>& err_x) {
  if (err_x.empty()) return std::numeric_limits<double>::quiet_NaN();
  const long h = static_cast<long>(err_x.size());
  const long count = std::max<long>(1, static_cast<long>(h * ASYMPTOTIC_TAIL));
  std::vector<double> tail(err_x.end() - count, err_x.end());
  std::sort(tail.begin(), tail.end());
  const size_t m = tail.size();
  return m % 2 ? tail[m / 2] : 0.5 * (tail[m / 2 - 1] + tail[m / 2]);
}

TunedGains tune_step_sizes(const problems::QuadraticStream& stream,
                           const std::vector<problems::KktSolution>& oracle,
                           algorithms::AlgorithmKind kind, long horizon) {
  if (is_control_kind(kind))
    throw std::invalid_argument("tune_step_sizes: step-size tuning applies to baselines only");
  const long rehearsal = std::min<long>(horizon, TUNING_HORIZON_CAP);
  if (static_cast<long>(oracle.size()) < rehearsal)
    throw std::invalid_argument("tune_step_sizes: oracle shorter than the rehearsal horizon");

  std::vector<double> grid;
  for (int i = 0; i <= TUNING_POINTS_PER_DECADE * TUNING_DECADES; ++i)
    grid.push_back(std::pow(10.0, -TUNING_DECADES + static_cast<double>(i) / TUNING_POINTS_PER_DECADE));
  const bool dual = stream.has_eq() || stream.has_ineq();
  const std::vector<double> dual_grid = dual ? grid : std::vector<double>{0.0};

  TunedGains best;
  best.rehearsal_err = std::numeric_limits<double>::infinity();
  for (double a : grid) {
    for (double s : dual_grid) {
      algorithms::AlgorithmSpec spec;
      spec.kind = kind;
      spec.alpha = a;
      spec.beta = s;
      spec.gamma = s;
      double err = std::numeric_limits<double>::infinity();
      try {
        err = asymptotic_error(algorithms::run(spec, stream, rehearsal, oracle).err_x);
      } catch (const std::exception&) {
        // divergent candidates simply lose the search
      }
      if (err < best.rehearsal_err) best = TunedGains{a, s, s, err};
    }
  }
  return best;
}

bool ExperimentResult::all_ok() const {
  if (!oracle_ok) return false;
  for (const auto& r : algorithms) {
    if (!r.ok) return false;
    if (r.stability && !r.stability->pass) return false;
  }
  return true;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.config = cfg;
  result.config.stream.seed = cfg.seed;
  if (cfg.horizon < 1) throw std::invalid_argument("run_experiment: horizon must be >= 1");
  if (!safe_name(cfg.name)) throw std::invalid_argument("run_experiment: unsafe experiment name");
  const fs::path out_dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  fs::create_directories(out_dir);

  const problems::QuadraticStream stream = problems::make_stream(result.config.stream);

  std::vector<problems::KktSolution> oracle;
  result.oracle_ok = true;
  try {
    oracle = problems::oracle_trajectory(stream, cfg.horizon);
  } catch (const std::exception& e) {
    result.oracle_ok = false;
    result.oracle_error = e.what();
  }

  std::vector<Job> jobs(cfg.algorithms.size());
  for (size_t i = 0; i < jobs.size(); ++i) {
    jobs[i].res.name = cfg.algorithms[i].name;
    jobs[i].res.kind = cfg.algorithms[i].kind;
  }
  if (result.oracle_ok) {
    parallel_for(static_cast<long>(jobs.size()), worker_cap(), [&](long i) {
      run_one(cfg.algorithms[i], stream, oracle, result.config, jobs[i]);
    });
  } else {
    for (auto& job : jobs) job.res.error = "oracle: " + result.oracle_error;
  }

  // serial writes in config order keep outputs deterministic
  for (auto& job : jobs) {
    AlgorithmResult& r = job.res;
    if (job.has_trace) {
      r.trace_file = cfg.name + "_" + r.name + ".csv";
      write_csv(job.trace, (out_dir / r.trace_file).string());
    }
    if (r.controller) {
      r.report_file = cfg.name + "_" + r.name + "_report.txt";
      write_synthesis_report(r, (out_dir / r.report_file).string());
    }
    result.algorithms.push_back(std::move(r));
  }

  result.summary_file = cfg.name + "_summary.txt";
  write_summary(result, (out_dir / result.summary_file).string());

  bool any_trace = false;
  for (const auto& r : result.algorithms) any_trace |= !r.trace_file.empty();
  if (any_trace) {
    result.plot_file = cfg.name + "_plot.py";
    emit_plot_script(result, (out_dir / result.plot_file).string());
  }
  return result;
}

void emit_plot_script(const ExperimentResult& result, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> series;
  const fs::path out_dir = result.config.out_dir.empty() ? fs::path(".")
                                                         : fs::path(result.config.out_dir);
  for (const auto& r : result.algorithms) {
    if (r.trace_file.empty()) continue;
    const fs::path trace = out_dir / r.trace_file;
    if (!fs::exists(trace))
      throw std::runtime_error("emit_plot_script: missing trace file: " + trace.string());
    series.emplace_back(r.name, r.trace_file);
  }
  if (series.empty()) throw std::invalid_argument("emit_plot_script: no traces to plot");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_plot_script: cannot open " + path);
  out << "#!/usr/bin/env python3\n";
  out << "# tracking-error comparison; CSV paths are relative to this script\n";
  out << "import csv\n";
  out << "import os\n";
  out << "import matplotlib\n";
  out << "matplotlib.use(\"Agg\")\n";
  out << "import matplotlib.pyplot as plt\n";
  out << "\n";
  out << "HERE = os.path.dirname(os.path.abspath(__file__))\n";
  out << "SERIES = [\n";
  for (const auto& [label, fname] : series)
    out << "    (\"" << label << "\", \"" << fname << "\"),\n";
  out << "]\n";
  out << "\n";
  out << "plt.figure(figsize=(8, 5))\n";
  out << "for label, fname in SERIES:\n";
  out << "    ks, errs = [], []\n";
  out << "    with open(os.path.join(HERE, fname), newline=\"\") as fh:\n";
  out << "        for row in csv.DictReader(fh):\n";
  out << "            ks.append(int(row[\"k\"]))\n";
  out << "            errs.append(max(float(row[\"err_x\"]), 1e-300))\n";
  out << "    plt.semilogy(ks, errs, label=label)\n";
  out << "plt.xlabel(\"k\")\n";
  out << "plt.ylabel(\"tracking error\")\n";
  out << "plt.grid(True, which=\"both\", alpha=0.3)\n";
  out << "plt.legend()\n";
  out << "plt.tight_layout()\n";
  out << "plt.savefig(os.path.join(HERE, \"" << result.config.name << "_tracking.png\"), dpi=150)\n";
  if (!out.flush()) throw std::runtime_error("emit_plot_script: write failed: " + path);
}

void write_synthesis_report(const AlgorithmResult& result, const std::string& path) {
  if (!result.controller)
    throw std::invalid_argument("write_synthesis_report: no controller in result");
  const synthesis::ControllerRealization& c = *result.controller;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_synthesis_report: cannot open " + path);
  out << "algorithm = " << result.name << "\n";
  out << "model_coeffs = ";
  for (size_t i = 0; i < c.model.coeffs.size(); ++i)
    out << (i ? "," : "") << format_double(c.model.coeffs[i]);
  out << "\n";
  out << "numerator_coeffs = ";
  for (long i = 0; i < c.k.size(); ++i) out << (i ? "," : "") << format_double(c.k(i));
  out << "\n";
  out << "tau = " << format_double(c.tau) << "\n";
  out << "rho = " << format_double(c.rho) << "\n";
  out << "lmi_margin = " << format_double(c.lmi_margin) << "\n";
  out << "interval_lo = " << format_double(c.interval.lo) << "\n";
  out << "interval_hi = " << format_double(c.interval.hi) << "\n";
  if (result.stability) {
    out << "grid_size = " << result.stability->grid_size << "\n";
    out << "worst_radius = " << format_double(result.stability->worst_radius) << "\n";
    out << "worst_gain = " << format_double(result.stability->worst_lambda) << "\n";
    out << "grid_verdict = " << (result.stability->pass ? "PASS" : "FAIL") << "\n";
  }
  if (!out.flush()) throw std::runtime_error("write_synthesis_report: write failed: " + path);
}

SynthesisReportData read_synthesis_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_synthesis_report: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  ConfigReader cfg(text.str(), path);
  SynthesisReportData data;
  for (const char* key : {"model_coeffs", "numerator_coeffs", "tau", "interval_lo", "interval_hi"}) {
    if (!cfg.has(key)) throw std::runtime_error("read_synthesis_report: missing key '" +
                                                std::string(key) + "' in " + path);
  }
  for (const std::string& field : split_list(cfg.get_string("model_coeffs", "")))
    data.model.coeffs.push_back(parse_field_double(field, path, 0));
  for (const std::string& field : split_list(cfg.get_string("numerator_coeffs", "")))
    data.numerator.coeffs.push_back(parse_field_double(field, path, 0));
  data.tau = cfg.get_double("tau", 1.0);
  data.rho = cfg.get_double("rho", 0.0);
  data.lmi_margin = cfg.get_double("lmi_margin", 0.0);
  data.interval.lo = cfg.get_double("interval_lo", 0.0);
  data.interval.hi = cfg.get_double("interval_hi", 0.0);
  // consume informational keys so finish() only flags true strangers
  cfg.get_string("algorithm", "");
  cfg.get_long("grid_size", 0);
  cfg.get_double("worst_radius", 0.0);
  cfg.get_double("worst_gain", 0.0);
  cfg.get_string("grid_verdict", "");
  cfg.finish();
  return data;
}

}  // namespace impopt::harness
