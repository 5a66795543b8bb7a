#pragma once

#include <stdexcept>

#include "impopt/linalg.hpp"

namespace impopt::lmi {

using linalg::Matrix;
using linalg::RowVector;
using linalg::Vector;

// Two-vertex robust-stabilization feasibility problem: find P_lo, P_hi > 0
// (symmetric), Q, R such that for l in {l_lo, l_hi}
//   [ P        F Q + l Cc R          ]
//   [ (.)^T    Q + Q^T - P           ]  > 0
// with P = P_lo at l_lo and P_hi at l_hi. Feasibility certifies that
// F + l Cc (R Q^-1) is Schur stable for every l in [l_lo, l_hi].
struct LmiInstance {
  Matrix f;    // m x m companion matrix (ones on the superdiagonal)
  Vector cc;   // m x 1 input column (last unit vector)
  double l_lo = 0.0;
  double l_hi = 0.0;
};

struct LmiCertificate {
  Matrix p_lo;
  Matrix p_hi;
  Matrix q;
  RowVector r;
  double margin = 0.0;  // smallest eigenvalue over the two blocks (unnormalized)
};

struct LmiOutcome {
  bool feasible = false;
  LmiCertificate cert;      // populated only when feasible
  double norm_margin = 0.0; // worst block min-eigenvalue / block norm
  int outer_iterations = 0;
};

// Newton-step breakdown or non-finite state: distinct from a clean
// infeasible-at-tolerance verdict.
class LmiNumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Maximize the feasibility margin t with Block(l) - tI >= 0 at both interval
// endpoints by a log-det barrier method (deterministic, no randomness).
// Declares feasible iff the normalized margin is >= 1e-8; the returned
// certificate is independently re-verified before being handed out.
LmiOutcome solve_lmi(const LmiInstance& inst);

// Minimum eigenvalue of a symmetric matrix (diagnostic helper).
double psd_margin(const Matrix& m);

}  // namespace impopt::lmi
