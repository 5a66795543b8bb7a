#include "impopt/signals.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace impopt::signals {

bool Polynomial::monic(double tol) const {
  return !coeffs.empty() && std::abs(coeffs.back() - 1.0) <= tol;
}

double Polynomial::eval(double z) const {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
  return acc;
}

std::complex<double> Polynomial::eval(std::complex<double> z) const {
  std::complex<double> acc(0.0, 0.0);
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
  return acc;
}

Polynomial multiply(const Polynomial& a, const Polynomial& b) {
  if (a.coeffs.empty() || b.coeffs.empty()) {
    throw std::invalid_argument("multiply: polynomials must be non-empty");
  }
  Polynomial out;
  out.coeffs.assign(a.coeffs.size() + b.coeffs.size() - 1, 0.0);
  for (size_t i = 0; i < a.coeffs.size(); ++i)
    for (size_t j = 0; j < b.coeffs.size(); ++j) out.coeffs[i + j] += a.coeffs[i] * b.coeffs[j];
  return out;
}

double triang(double t) {
  const double u = t / (2.0 * M_PI);
  return 4.0 * std::abs(u - std::floor(u + 0.75) + 0.25) - 1.0;
}

double eval_wave(const SignalSpec& spec, long k) {
  const double t = spec.omega * static_cast<double>(k);
  switch (spec.kind) {
    case SignalKind::Constant:
      return spec.amplitude;
    case SignalKind::Sine:
      return spec.amplitude * std::sin(t);
    case SignalKind::TriangularWave:
      return spec.amplitude * triang(t);
    case SignalKind::MultiHarmonic: {
      double acc = 1.0;
      for (int l = 1; l <= spec.harmonics; ++l) {
        acc += std::sin(static_cast<double>(l) * t) / static_cast<double>(l);
      }
      return spec.amplitude * acc;
    }
  }
  throw std::logic_error("eval_wave: unknown signal kind");
}

linalg::Vector eval_signal(const SignalSpec& spec, long k) {
  if (spec.direction.size() == 0) {
    throw std::invalid_argument("eval_signal: spec has no direction vector");
  }
  return eval_wave(spec, k) * spec.direction;
}

Polynomial internal_model(const SignalSpec& spec) {
  const Polynomial step{{-1.0, 1.0}};  // z - 1
  switch (spec.kind) {
    case SignalKind::Constant:
      return step;
    case SignalKind::Sine:
      return Polynomial{{1.0, -2.0 * std::cos(spec.omega), 1.0}};
    case SignalKind::TriangularWave:
      return multiply(step, step);
    case SignalKind::MultiHarmonic: {
      if (spec.harmonics < 1) {
        throw std::invalid_argument("internal_model: MultiHarmonic needs at least one harmonic");
      }
      Polynomial p = step;
      for (int l = 1; l <= spec.harmonics; ++l) {
        const double lw = static_cast<double>(l) * spec.omega;
        // l*omega == 0 (mod 2 pi) would collide with the constant root and
        // leave the harmonic unmodelled
        if (std::abs(std::sin(lw / 2.0)) < 1e-12) {
          throw std::invalid_argument("internal_model: harmonic " + std::to_string(l) +
                                      " is a multiple of 2 pi; the model would be degenerate");
        }
        p = multiply(p, Polynomial{{1.0, -2.0 * std::cos(lw), 1.0}});
      }
      return p;
    }
  }
  throw std::logic_error("internal_model: unknown signal kind");
}

void validate_internal_model(const Polynomial& p) {
  const int m = p.degree();
  if (m < 1) throw std::invalid_argument("internal model must have degree >= 1");
  if (!p.monic()) throw std::invalid_argument("internal model must be monic");

  linalg::Matrix f = linalg::Matrix::Zero(m, m);
  for (int i = 0; i + 1 < m; ++i) f(i, i + 1) = 1.0;
  for (int j = 0; j < m; ++j) f(m - 1, j) = -p.coeffs[j];
  const auto spec = linalg::general_eigenvalues(f);
  for (const auto& root : spec.eigenvalues) {
    if (std::abs(std::abs(root) - 1.0) > 1e-9) {
      throw std::invalid_argument("internal model has a root off the unit circle (|z| = " +
                                  std::to_string(std::abs(root)) + ")");
    }
  }
}

}  // namespace impopt::signals
