#pragma once

#include <stdexcept>
#include <string>

#include "impopt/linalg.hpp"
#include "impopt/lmi.hpp"
#include "impopt/problems.hpp"
#include "impopt/signals.hpp"

namespace impopt::synthesis {

using linalg::Matrix;
using linalg::RowVector;
using linalg::Vector;

// Closed-loop gain range the controller must stabilize.
struct EigenInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Companion realization of the internal model p together with the gain row
// holding the coefficients of the strictly proper controller numerator c.
// Layout: ones on the superdiagonal of F, last row (-p_0 ... -p_{m-1}),
// Cc the last unit vector, K = (c_0 ... c_{m-1}).
struct ControllerRealization {
  signals::Polynomial model;
  Matrix f;
  Vector cc;
  RowVector k;
  double tau = 1.0;
  double rho = 0.0;
  double lmi_margin = 0.0;        // normalized certificate margin (when synthesized)
  EigenInterval interval{0.0, 0.0};  // gain interval the design was certified on
};

// Gain design reported infeasible at the solver's certification tolerance.
class SynthesisFailure : public std::runtime_error {
public:
  SynthesisFailure(const std::string& what, double ratio, double margin_value)
      : std::runtime_error(what), interval_ratio(ratio), margin(margin_value) {}
  double interval_ratio;
  double margin;
};

struct CompanionForm {
  Matrix f;
  Vector cc;
  RowVector k;
};

// Companion pair of a monic p plus the zero-padded gain row of c
// (deg c <= deg p - 1; larger numerators are rejected as non-proper).
CompanionForm companion_form(const signals::Polynomial& p, const signals::Polynomial& c);

// Builds and validates a realization: structural layout plus the two
// characteristic-polynomial identities det(zI - F) = p(z) and
// det(zI - F - mu Cc K) = p(z) - mu c(z) at random complex sample points.
ControllerRealization make_realization(const signals::Polynomial& p,
                                       const signals::Polynomial& c, double tau, double rho);

// Largest step size for which the preconditioned saddle matrix keeps a real
// spectrum under the declared bounds: lambda_lo / (4 mu_hi).
double tau_select(const problems::SpectralBounds& b);

// Interval [tau mu_lo, lambda_hi] containing every eigenvalue of the saddle
// matrix [[A, -tau G^T], [G, 0]] for matrices consistent with the bounds.
EigenInterval eigen_interval(const problems::SpectralBounds& b, double tau);

// LMI-backed gain design over the interval; throws SynthesisFailure when the
// certificate problem is infeasible at tolerance. The returned realization
// has passed spectral-grid verification on its own interval.
ControllerRealization synthesize(const signals::Polynomial& p, const EigenInterval& interval,
                                 double tau = 1.0, double rho = 0.0);

struct StabilityReport {
  bool pass = false;
  double worst_radius = 0.0;
  double worst_lambda = 0.0;
  int grid_size = 0;
};

// Spectral radius of F + lambda Cc K on a log-spaced grid over the interval
// (endpoints always included); PASS iff every radius <= 1 - 1e-6.
StabilityReport verify_robust_stability(const ControllerRealization& r,
                                        const EigenInterval& interval, int grid_size);

}  // namespace impopt::synthesis
