#include "impopt/synthesis.hpp"

#include <cmath>
#include <complex>

#include "impopt/util.hpp"

namespace impopt::synthesis {
namespace {

constexpr int VALIDATION_POINTS = 20;
constexpr double VALIDATION_RTOL = 1e-9;
constexpr double VALIDATION_RADIUS = 2.0;  // sample |z| for the identities
constexpr unsigned long long VALIDATION_SEED = 0x1d2c3b4a;
constexpr double TAU_SLACK = 1e-12;
constexpr double RADIUS_SLACK = 1e-6;  // spectral radii must stay below 1 - this
constexpr int SYNTH_VERIFY_GRID = 10000;

void check_interval(const EigenInterval& interval) {
  if (!(interval.lo > 0.0) || !(interval.hi >= interval.lo)) {
    throw std::invalid_argument("eigen interval must satisfy 0 < lo <= hi");
  }
}

void check_bounds(const problems::SpectralBounds& b) {
  if (!(b.lambda_lo > 0.0) || !(b.lambda_hi >= b.lambda_lo) || !(b.mu_lo > 0.0) ||
      !(b.mu_hi >= b.mu_lo)) {
    throw std::invalid_argument("spectral bounds must be positive and ordered");
  }
}

std::complex<double> eval_gain_poly(const RowVector& k, std::complex<double> z) {
  std::complex<double> acc(0.0, 0.0);
  for (int i = static_cast<int>(k.size()) - 1; i >= 0; --i) acc = acc * z + k(i);
  return acc;
}

// both characteristic-polynomial identities, via a determinant routine that
// shares nothing with the eigensolver used in grid verification
void validate_realization(const ControllerRealization& r) {
  const int m = r.model.degree();
  if (m < 1 || r.f.rows() != m || r.f.cols() != m || r.cc.size() != m || r.k.size() != m) {
    throw std::invalid_argument("realization dimensions do not match the model degree");
  }
  if (!r.model.monic()) throw std::invalid_argument("internal model must be monic");
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double want = i == m - 1 ? -r.model.coeffs[j] : (j == i + 1 ? 1.0 : 0.0);
      if (r.f(i, j) != want) throw std::invalid_argument("companion layout violated");
    }
    if (r.cc(i) != (i == m - 1 ? 1.0 : 0.0)) {
      throw std::invalid_argument("input column must be the last unit vector");
    }
  }
  if (!(r.tau > 0.0) || !(r.rho >= 0.0)) {
    throw std::invalid_argument("tau must be positive and rho nonnegative");
  }

  util::Rng rng(VALIDATION_SEED);
  linalg::ComplexMatrix shifted(m, m);
  for (int trial = 0; trial < VALIDATION_POINTS; ++trial) {
    const std::complex<double> z = rng.on_circle(VALIDATION_RADIUS);
    const double mu = rng.uniform(0.5, 2.0);

    shifted = -r.f.cast<std::complex<double>>();
    shifted.diagonal().array() += z;
    const std::complex<double> open = linalg::complex_det(shifted);
    const std::complex<double> p_z = r.model.eval(z);
    if (std::abs(open - p_z) > VALIDATION_RTOL * std::max(1.0, std::abs(p_z))) {
      throw std::invalid_argument("companion matrix does not realize the model polynomial");
    }

    shifted = -(r.f + mu * r.cc * r.k).cast<std::complex<double>>();
    shifted.diagonal().array() += z;
    const std::complex<double> closed = linalg::complex_det(shifted);
    const std::complex<double> want = p_z - mu * eval_gain_poly(r.k, z);
    if (std::abs(closed - want) > VALIDATION_RTOL * std::max(1.0, std::abs(want))) {
      throw std::invalid_argument("closed-loop characteristic identity violated");
    }
  }
}

}  // namespace

CompanionForm companion_form(const signals::Polynomial& p, const signals::Polynomial& c) {
  const int m = p.degree();
  if (m < 1) throw std::invalid_argument("model polynomial must have degree >= 1");
  if (!p.monic()) throw std::invalid_argument("model polynomial must be monic");
  if (c.degree() > m - 1) {
    throw std::invalid_argument("controller numerator must have degree <= model degree - 1");
  }
  CompanionForm out;
  out.f.setZero(m, m);
  for (int i = 0; i + 1 < m; ++i) out.f(i, i + 1) = 1.0;
  for (int j = 0; j < m; ++j) out.f(m - 1, j) = -p.coeffs[j];
  out.cc.setZero(m);
  out.cc(m - 1) = 1.0;
  out.k.setZero(m);
  for (int j = 0; j <= c.degree() && j < m; ++j) out.k(j) = c.coeffs[j];
  return out;
}

ControllerRealization make_realization(const signals::Polynomial& p,
                                       const signals::Polynomial& c, double tau, double rho) {
  CompanionForm cf = companion_form(p, c);
  ControllerRealization r;
  r.model = p;
  r.f = std::move(cf.f);
  r.cc = std::move(cf.cc);
  r.k = std::move(cf.k);
  r.tau = tau;
  r.rho = rho;
  validate_realization(r);
  return r;
}

double tau_select(const problems::SpectralBounds& b) {
  check_bounds(b);
  return b.lambda_lo / (4.0 * b.mu_hi);
}

EigenInterval eigen_interval(const problems::SpectralBounds& b, double tau) {
  check_bounds(b);
  if (!(tau > 0.0) || tau > b.lambda_lo / (4.0 * b.mu_hi) + TAU_SLACK) {
    throw std::invalid_argument(
        "tau must lie in (0, lambda_lo / (4 mu_hi)] for the saddle spectrum to stay real");
  }
  return {tau * b.mu_lo, b.lambda_hi};
}

ControllerRealization synthesize(const signals::Polynomial& p, const EigenInterval& interval,
                                 double tau, double rho) {
  signals::validate_internal_model(p);
  check_interval(interval);

  const CompanionForm cf = companion_form(p, signals::Polynomial{{0.0}});
  lmi::LmiInstance inst;
  inst.f = cf.f;
  inst.cc = cf.cc;
  inst.l_lo = interval.lo;
  inst.l_hi = interval.hi;
  const lmi::LmiOutcome out = lmi::solve_lmi(inst);
  const double ratio = interval.hi / interval.lo;
  if (!out.feasible) {
    throw SynthesisFailure("gain design infeasible at tolerance for interval ratio " +
                               std::to_string(ratio),
                           ratio, out.norm_margin);
  }

  // K = R Q^{-1}
  const Vector kt = linalg::solve(out.cert.q.transpose(), out.cert.r.transpose());
  signals::Polynomial c;
  c.coeffs.assign(kt.data(), kt.data() + kt.size());
  while (c.coeffs.size() > 1 && c.coeffs.back() == 0.0) c.coeffs.pop_back();

  ControllerRealization r = make_realization(p, c, tau, rho);
  r.lmi_margin = out.norm_margin;
  r.interval = interval;

  const StabilityReport report = verify_robust_stability(r, interval, SYNTH_VERIFY_GRID);
  if (!report.pass) {
    throw lmi::LmiNumericalError(
        "certified gain failed spectral-grid verification (worst radius " +
        std::to_string(report.worst_radius) + ")");
  }
  return r;
}

StabilityReport verify_robust_stability(const ControllerRealization& r,
                                        const EigenInterval& interval, int grid_size) {
  validate_realization(r);
  check_interval(interval);
  if (grid_size < 2) throw std::invalid_argument("grid_size must be at least 2");

  StabilityReport report;
  report.grid_size = grid_size;
  const Matrix outer = r.cc * r.k;
  for (int i = 0; i < grid_size; ++i) {
    const double frac = static_cast<double>(i) / (grid_size - 1);
    const double lambda = interval.lo * std::pow(interval.hi / interval.lo, frac);
    const Matrix closed = r.f + lambda * outer;
    const double radius = linalg::general_eigenvalues(closed).spectral_radius;
    if (radius > report.worst_radius) {
      report.worst_radius = radius;
      report.worst_lambda = lambda;
    }
  }
  report.pass = report.worst_radius <= 1.0 - RADIUS_SLACK;
  return report;
}

}  // namespace impopt::synthesis
