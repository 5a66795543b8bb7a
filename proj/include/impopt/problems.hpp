#pragma once

#include <optional>
#include <vector>

#include "impopt/linalg.hpp"
#include "impopt/signals.hpp"

namespace impopt::problems {

using linalg::Matrix;
using linalg::Vector;

// Bounds available to the designer: eigenvalue range of the cost curvature
// and eigenvalue range of the constraint-preconditioned operator G A^-1 G^T.
struct SpectralBounds {
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  double mu_lo = 0.0;
  double mu_hi = 0.0;
};

// mu range derived from curvature bounds plus singular-value bounds of the
// constraint matrix: mu_lo = sigma_lo^2 / lambda_hi, mu_hi = sigma_hi^2 / lambda_lo.
SpectralBounds bounds_from_singular_values(double lambda_lo, double lambda_hi,
                                           double sigma_lo, double sigma_hi);

// Full description of an online problem stream:
//   minimize  1/2 x^T A_k x + b_k^T x  (+ gain_k * log(1 + exp(c^T x)))
//   subject to G_k x = h_k,  Gp x <= hp_k
// A_k = a1 + sin(tv_omega k) a2 when a2 is non-empty, likewise G_k. The
// b/h/hp signals carry their own direction vectors.
struct StreamDef {
  Matrix a1;
  Matrix a2;  // empty => fixed quadratic term
  Matrix g1;  // empty => no equality block
  Matrix g2;  // empty => fixed equality map
  Matrix gp;  // empty => no inequality block
  signals::SignalSpec b_spec;
  signals::SignalSpec h_spec;
  signals::SignalSpec hp_spec;
  double tv_omega = 0.0;
  Vector nonquad_c;  // empty => quadratic cost; otherwise unit vector
  double nonquad_omega = 0.0;
  SpectralBounds bounds;
};

// Deterministic recipe for generating a StreamDef from a seed. Directions
// left empty default to all-ones. The equality and inequality rows are drawn
// as one stacked block, so a recipe with (p, p') = (0, 2) produces the same
// two constraint rows as (p, p') = (2, 0) under the same seed.
struct StreamRecipe {
  unsigned long long seed = 1;
  int n = 10;
  int p = 0;
  int p_prime = 0;
  double eig_lo = 1.0;
  double eig_hi = 10.0;
  double sigma_lo = 1.0;
  double sigma_hi = 1.0;
  bool time_varying = false;
  double tv_omega = 0.5;
  double tv_density = 0.1;
  // declare bounds measured from the drawn matrices (sampled extremes plus a
  // 5% safety margin) instead of the worst-case singular-value formulas;
  // time-varying streams always measure
  bool measured_bounds = false;
  bool nonquad = false;
  double nonquad_omega = 0.5;
  signals::SignalSpec b_signal;
  signals::SignalSpec h_signal;
  signals::SignalSpec hp_signal;
};

class QuadraticStream {
public:
  // Validates dimensions, symmetry, stacked row rank, unit-norm logistic
  // direction, and that the declared bounds are honest on a sample of the
  // modulation range. Throws std::invalid_argument on violation.
  explicit QuadraticStream(StreamDef def);

  int n() const { return static_cast<int>(def_.a1.rows()); }
  int p() const { return static_cast<int>(def_.g1.rows()); }
  int p_prime() const { return static_cast<int>(def_.gp.rows()); }
  bool time_varying() const { return def_.a2.size() > 0 || def_.g2.size() > 0; }
  bool has_eq() const { return def_.g1.size() > 0; }
  bool has_ineq() const { return def_.gp.size() > 0; }
  bool has_nonquad() const { return def_.nonquad_c.size() > 0; }

  double modulation(long k) const;  // sin(tv_omega k), 0 when time-invariant

  Matrix a_at(long k) const;
  Vector b_at(long k) const;
  Matrix g_at(long k) const;
  Vector h_at(long k) const;
  const Matrix& gp() const { return def_.gp; }
  Vector hp_at(long k) const;

  // allocation-free accessors for hot loops
  void a_into(long k, Matrix& out) const;
  void g_into(long k, Matrix& out) const;
  double b_wave(long k) const { return signals::eval_wave(def_.b_spec, k); }
  double h_wave(long k) const { return signals::eval_wave(def_.h_spec, k); }
  double hp_wave(long k) const { return signals::eval_wave(def_.hp_spec, k); }
  const Vector& b_dir() const { return def_.b_spec.direction; }
  const Vector& h_dir() const { return def_.h_spec.direction; }
  const Vector& hp_dir() const { return def_.hp_spec.direction; }

  double nonquad_gain(long k) const;  // sin(nonquad_omega k)
  const Vector& nonquad_c() const { return def_.nonquad_c; }

  const SpectralBounds& bounds() const { return def_.bounds; }
  const StreamDef& def() const { return def_; }

private:
  StreamDef def_;
};

QuadraticStream make_stream(const StreamRecipe& recipe);

struct LagrangianGradients {
  Vector e;   // primal gradient
  Vector f;   // equality residual, empty when absent
  Vector fp;  // inequality residual, empty when absent
};

LagrangianGradients lagrangian_gradients(const QuadraticStream& stream, long k,
                                         const Vector& x, const Vector& w,
                                         const Vector& wp);

struct KktSolution {
  Vector x_star;
  Vector w_star;               // empty when no equality block
  Vector wp_star;              // empty when no inequality block
  std::vector<int> active_set; // indices of tight inequality rows
  double max_residual = 0.0;   // worst of the four KKT residuals
};

// Per-step optimizer of the equality-constrained problem (ignores any
// inequality block). Uses a direct saddle solve for quadratic costs and
// damped Newton (tolerance 1e-12) when the logistic term is present.
KktSolution kkt_equality_oracle(const QuadraticStream& stream, long k);

// Per-step optimizer with inequality constraints, by enumeration of active
// sets in increasing cardinality. Requires p + p' <= 20.
KktSolution inequality_oracle(const QuadraticStream& stream, long k);

// Cost value at x including the logistic term; its gradient is the
// e-component of lagrangian_gradients without the multiplier terms.
double nonquadratic_cost(const QuadraticStream& stream, long k, const Vector& x);

// Ground-truth trajectory for a whole run. Equivalent to calling the
// per-step oracle at every k but much faster: time-invariant quadratic
// streams reuse factorizations and per-active-set affine maps, the Newton
// path warm-starts from the previous step. max_residual is still validated
// per step.
std::vector<KktSolution> oracle_trajectory(const QuadraticStream& stream, long horizon);

}  // namespace impopt::problems
