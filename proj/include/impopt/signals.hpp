#pragma once

#include <complex>
#include <vector>

#include "impopt/linalg.hpp"

namespace impopt::signals {

// Real polynomial with ascending coefficients: coeffs[i] multiplies z^i.
struct Polynomial {
  std::vector<double> coeffs;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
  bool monic(double tol = 1e-12) const;
  double eval(double z) const;
  std::complex<double> eval(std::complex<double> z) const;
};

Polynomial multiply(const Polynomial& a, const Polynomial& b);

enum class SignalKind { Constant, Sine, TriangularWave, MultiHarmonic };

// A scalar reference waveform scaled onto a fixed direction vector. omega is
// in radians per step; harmonics only matters for MultiHarmonic.
struct SignalSpec {
  SignalKind kind = SignalKind::Constant;
  double omega = 0.0;
  double amplitude = 1.0;
  int harmonics = 1;
  linalg::Vector direction;
};

// Triangular wave with period 2 pi and range [-1, 1]: zero at t = 0, rising
// with slope 2/pi until t = pi/2, with slope breaks at pi/2 + j pi.
double triang(double t);

// Scalar waveform value amplitude * wave(omega k). The MultiHarmonic profile
// is 1 + sum_{l=1..L} sin(l omega k) / l, a fixed mixture that exercises
// every root of its annihilating polynomial.
double eval_wave(const SignalSpec& spec, long k);

// eval_wave scaled onto the direction vector.
linalg::Vector eval_signal(const SignalSpec& spec, long k);

// Monic polynomial whose roots generate the signal class:
//   Constant        -> z - 1
//   Sine            -> z^2 - 2 cos(omega) z + 1
//   TriangularWave  -> (z - 1)^2
//   MultiHarmonic   -> (z - 1) prod_{l=1..L} (z^2 - 2 cos(l omega) z + 1)
// MultiHarmonic requires l*omega != 0 (mod 2 pi) for every l <= L, otherwise
// a harmonic degenerates onto the constant root and the spec is rejected.
Polynomial internal_model(const SignalSpec& spec);

// Checks that p is monic, has degree >= 1, and that all of its roots lie on
// the unit circle to within 1e-9 (roots are taken from the companion matrix).
// Throws std::invalid_argument otherwise.
void validate_internal_model(const Polynomial& p);

}  // namespace impopt::signals
