#pragma once

#include <optional>
#include <vector>

#include "impopt/problems.hpp"
#include "impopt/synthesis.hpp"

namespace impopt::algorithms {

using linalg::Vector;

// entrywise max(v, 0); the saturation used on every inequality multiplier
Vector project_nonnegative(const Vector& v);

// Iterate of the gradient descent-ascent baselines: primal point, equality
// multipliers, saturated inequality multipliers, and the three step sizes.
struct PdState {
  Vector x;
  Vector w;
  Vector wp;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

// All-zero start; step sizes <= 0 fall back to 2 / (lambda_lo + lambda_hi).
PdState make_pd_state(const problems::QuadraticStream& stream, double alpha = 0.0,
                      double beta = 0.0, double gamma = 0.0);

// x' = x - alpha (A_k x + b_k + G_k^T w), w' = w + beta (G_k x - h_k), both
// from the same old iterate. Rejects streams with an inequality block.
void step_primal_dual(PdState& state, const problems::QuadraticStream& stream, long k);

// Same descent-ascent update extended with wp' = max(wp + gamma (G'x - h'_k), 0).
void step_projected_primal_dual(PdState& state, const problems::QuadraticStream& stream, long k);

// Dynamic controller state: one internal-model copy per primal coordinate
// (z, length n*m), per equality row (y, length p*m) and per inequality row
// (yp, length p'*m), plus the outputs and the residuals driving them.
// Invariants after every step: x = (K kron I) z, w = -tau (K kron I) y,
// v = -tau (K kron I) yp, wp = max(v, 0).
struct ImpState {
  Vector z;
  Vector y;
  Vector yp;
  Vector x;
  Vector w;
  Vector v;
  Vector wp;
  Vector e;
  Vector f;
  Vector fp;
};

// Controller at rest: all states and outputs zero, residuals evaluated at
// the zero iterate of step 0.
ImpState make_imp_state(const synthesis::ControllerRealization& ctrl,
                        const problems::QuadraticStream& stream);

// One step of the equality-constrained controller: advance z and y, read the
// outputs, then refresh (e, f) from the Lagrangian of the next step at the
// new iterate. Kronecker operators are applied blockwise, never formed.
void step_imp_equality(ImpState& state, const synthesis::ControllerRealization& ctrl,
                       const problems::QuadraticStream& stream, long k);

// Saturated variant: advance z, y, yp; read outputs x, w, v; saturate
// wp = max(v, 0); refresh residuals, with the back-calculation term
// rho (wp - v) added to the inequality channel. With p' = 0 the update
// reduces to step_imp_equality exactly (same operations in the same order).
void step_imp_antiwindup(ImpState& state, const synthesis::ControllerRealization& ctrl,
                         const problems::QuadraticStream& stream, long k);

enum class AlgorithmKind {
  PrimalDual,
  ProjectedPrimalDual,
  ImpEquality,
  ImpAntiwindup,
};

// What to run: baselines need step sizes (<= 0 means the default), the
// control-based kinds need a synthesized realization.
struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::PrimalDual;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  std::optional<synthesis::ControllerRealization> controller;
};

// Per-step record of a run against the oracle trajectory. All columns have
// one entry per step; active holds the oracle active-set size and
// active_changed flags steps where that set differs from the previous one.
struct TrackingTrace {
  std::vector<Vector> xs;
  std::vector<Vector> x_stars;
  std::vector<double> err_x;
  std::vector<double> err_w;
  std::vector<double> norm_e;
  std::vector<double> norm_f;
  std::vector<double> norm_fp;
  std::vector<int> active;
  std::vector<char> active_changed;
  double alpha = 0.0;  // step sizes actually used (baselines)
  double beta = 0.0;
  double gamma = 0.0;
  double max_oracle_residual = 0.0;

  long horizon() const { return static_cast<long>(err_x.size()); }
};

// Runs the chosen algorithm for `horizon` steps against a precomputed oracle
// trajectory (at least `horizon` long). The record at step k describes the
// iterate before the k-th update, so horizon = 1 reports the initial state.
// Throws std::runtime_error naming the step when an oracle entry exceeds the
// residual budget or an iterate stops being finite.
TrackingTrace run(const AlgorithmSpec& alg, const problems::QuadraticStream& stream,
                  long horizon, const std::vector<problems::KktSolution>& oracle);

}  // namespace impopt::algorithms
