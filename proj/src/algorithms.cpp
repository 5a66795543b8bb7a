#include "impopt/algorithms.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace impopt::algorithms {

namespace {

// oracle entries worse than this abort a run; the oracles themselves promise
// far better, so tripping it means the trace would be meaningless
constexpr double ORACLE_RESIDUAL_LIMIT = 1e-7;

using problems::QuadraticStream;
using synthesis::ControllerRealization;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("algorithms: " + msg);
}

double default_step(const QuadraticStream& stream) {
  const auto& b = stream.bounds();
  return 2.0 / (b.lambda_lo + b.lambda_hi);
}

// out = (gain kron I_block) v for a 1 x m gain row
Vector apply_gain(const linalg::RowVector& gain, const Vector& v, int block) {
  Vector out = gain(0) * v.head(block);
  for (int j = 1; j < gain.size(); ++j) out.noalias() += gain(j) * v.segment(j * block, block);
  return out;
}

// state' = (F kron I) state + (Cc kron I) r; Cc is the last unit vector, so
// the residual enters through the trailing block only
void advance_channel(const linalg::Matrix& f, Vector& state, const Vector& r, int block) {
  state = linalg::kron_apply(f, state, block);
  state.tail(block) += r;
}

void check_pd_dims(const PdState& s, const QuadraticStream& stream) {
  require(s.x.size() == stream.n(), "primal iterate dimension mismatch");
  require(s.w.size() == stream.p(), "equality multiplier dimension mismatch");
  require(s.wp.size() == stream.p_prime(), "inequality multiplier dimension mismatch");
}

void check_imp_dims(const ImpState& s, const ControllerRealization& ctrl,
                    const QuadraticStream& stream) {
  const long m = ctrl.f.rows();
  require(ctrl.cc.size() == m && ctrl.k.size() == m, "controller realization is inconsistent");
  require(s.z.size() == stream.n() * m, "primal channel state dimension mismatch");
  require(s.y.size() == stream.p() * m, "equality channel state dimension mismatch");
  require(s.yp.size() == stream.p_prime() * m, "inequality channel state dimension mismatch");
  require(s.e.size() == stream.n() && s.f.size() == stream.p() &&
              s.fp.size() == stream.p_prime(),
          "residual dimension mismatch");
}

}  // namespace

Vector project_nonnegative(const Vector& v) { return v.cwiseMax(0.0); }

PdState make_pd_state(const QuadraticStream& stream, double alpha, double beta, double gamma) {
  PdState s;
  s.x = Vector::Zero(stream.n());
  s.w = Vector::Zero(stream.p());
  s.wp = Vector::Zero(stream.p_prime());
  const double fallback = default_step(stream);
  s.alpha = alpha > 0.0 ? alpha : fallback;
  s.beta = beta > 0.0 ? beta : fallback;
  s.gamma = gamma > 0.0 ? gamma : fallback;
  return s;
}

void step_primal_dual(PdState& state, const QuadraticStream& stream, long k) {
  require(!stream.has_ineq(), "the plain primal-dual stepper handles equality-only streams");
  check_pd_dims(state, stream);
  const auto g = problems::lagrangian_gradients(stream, k, state.x, state.w, state.wp);
  if (stream.has_eq()) state.w += state.beta * g.f;
  state.x -= state.alpha * g.e;
}

void step_projected_primal_dual(PdState& state, const QuadraticStream& stream, long k) {
  check_pd_dims(state, stream);
  const auto g = problems::lagrangian_gradients(stream, k, state.x, state.w, state.wp);
  if (stream.has_eq()) state.w += state.beta * g.f;
  if (stream.has_ineq()) state.wp = project_nonnegative(state.wp + state.gamma * g.fp);
  state.x -= state.alpha * g.e;
}

ImpState make_imp_state(const ControllerRealization& ctrl, const QuadraticStream& stream) {
  const long m = ctrl.f.rows();
  ImpState s;
  s.z = Vector::Zero(stream.n() * m);
  s.y = Vector::Zero(stream.p() * m);
  s.yp = Vector::Zero(stream.p_prime() * m);
  s.x = Vector::Zero(stream.n());
  s.w = Vector::Zero(stream.p());
  s.v = Vector::Zero(stream.p_prime());
  s.wp = Vector::Zero(stream.p_prime());
  const auto g = problems::lagrangian_gradients(stream, 0, s.x, s.w, s.wp);
  s.e = g.e;
  s.f = g.f;
  s.fp = g.fp;
  return s;
}

void step_imp_equality(ImpState& state, const ControllerRealization& ctrl,
                       const QuadraticStream& stream, long k) {
  require(!stream.has_ineq(), "the equality stepper handles equality-only streams");
  check_imp_dims(state, ctrl, stream);
  const int n = stream.n();
  const int p = stream.p();

  advance_channel(ctrl.f, state.z, state.e, n);
  if (p > 0) advance_channel(ctrl.f, state.y, state.f, p);
  state.x = apply_gain(ctrl.k, state.z, n);
  if (p > 0) state.w = -ctrl.tau * apply_gain(ctrl.k, state.y, p);

  const auto g = problems::lagrangian_gradients(stream, k + 1, state.x, state.w, state.wp);
  state.e = g.e;
  state.f = g.f;
}

void step_imp_antiwindup(ImpState& state, const ControllerRealization& ctrl,
                         const QuadraticStream& stream, long k) {
  require(ctrl.rho >= 0.0, "back-calculation weight must be nonnegative");
  check_imp_dims(state, ctrl, stream);
  const int n = stream.n();
  const int p = stream.p();
  const int pp = stream.p_prime();

  advance_channel(ctrl.f, state.z, state.e, n);
  if (p > 0) advance_channel(ctrl.f, state.y, state.f, p);
  if (pp > 0) advance_channel(ctrl.f, state.yp, state.fp, pp);
  state.x = apply_gain(ctrl.k, state.z, n);
  if (p > 0) state.w = -ctrl.tau * apply_gain(ctrl.k, state.y, p);
  if (pp > 0) {
    state.v = -ctrl.tau * apply_gain(ctrl.k, state.yp, pp);
    state.wp = project_nonnegative(state.v);
  }

  const auto g = problems::lagrangian_gradients(stream, k + 1, state.x, state.w, state.wp);
  state.e = g.e;
  state.f = g.f;
  if (pp > 0) state.fp = g.fp + ctrl.rho * (state.wp - state.v);
}

TrackingTrace run(const AlgorithmSpec& alg, const QuadraticStream& stream, long horizon,
                  const std::vector<problems::KktSolution>& oracle) {
  if (horizon < 1) throw std::invalid_argument("run: horizon must be >= 1");
  if (static_cast<long>(oracle.size()) < horizon) {
    throw std::invalid_argument("run: oracle trajectory shorter than the horizon");
  }
  const bool control =
      alg.kind == AlgorithmKind::ImpEquality || alg.kind == AlgorithmKind::ImpAntiwindup;
  if (control && !alg.controller.has_value()) {
    throw std::invalid_argument("run: control-based algorithm needs a realization");
  }
  if ((alg.kind == AlgorithmKind::PrimalDual || alg.kind == AlgorithmKind::ImpEquality) &&
      stream.has_ineq()) {
    throw std::invalid_argument("run: chosen algorithm cannot handle an inequality block");
  }

  TrackingTrace tr;
  const double fallback = default_step(stream);
  tr.alpha = alg.alpha > 0.0 ? alg.alpha : fallback;
  tr.beta = alg.beta > 0.0 ? alg.beta : fallback;
  tr.gamma = alg.gamma > 0.0 ? alg.gamma : fallback;

  PdState pd;
  ImpState imp;
  if (control) {
    imp = make_imp_state(*alg.controller, stream);
  } else {
    pd = make_pd_state(stream, tr.alpha, tr.beta, tr.gamma);
  }

  tr.xs.reserve(horizon);
  tr.x_stars.reserve(horizon);
  tr.err_x.reserve(horizon);
  tr.err_w.reserve(horizon);
  tr.norm_e.reserve(horizon);
  tr.norm_f.reserve(horizon);
  tr.norm_fp.reserve(horizon);
  tr.active.reserve(horizon);
  tr.active_changed.reserve(horizon);

  for (long k = 0; k < horizon; ++k) {
    const auto& sol = oracle[k];
    if (!(sol.max_residual <= ORACLE_RESIDUAL_LIMIT)) {
      throw std::runtime_error("run: oracle failure at step " + std::to_string(k) +
                               " (residual " + std::to_string(sol.max_residual) + ")");
    }
    const Vector& x = control ? imp.x : pd.x;
    const Vector& w = control ? imp.w : pd.w;
    const Vector& wp = control ? imp.wp : pd.wp;

    const double ex = (x - sol.x_star).norm();
    if (!std::isfinite(ex)) {
      throw std::runtime_error("run: iterate diverged at step " + std::to_string(k));
    }
    double dw2 = 0.0;
    if (stream.has_eq()) dw2 += (w - sol.w_star).squaredNorm();
    if (stream.has_ineq()) dw2 += (wp - sol.wp_star).squaredNorm();

    if (control) {
      tr.norm_e.push_back(imp.e.norm());
      tr.norm_f.push_back(imp.f.norm());
      tr.norm_fp.push_back(imp.fp.norm());
    } else {
      const auto g = problems::lagrangian_gradients(stream, k, pd.x, pd.w, pd.wp);
      tr.norm_e.push_back(g.e.norm());
      tr.norm_f.push_back(g.f.norm());
      tr.norm_fp.push_back(g.fp.norm());
    }

    tr.xs.push_back(x);
    tr.x_stars.push_back(sol.x_star);
    tr.err_x.push_back(ex);
    tr.err_w.push_back(std::sqrt(dw2));
    tr.active.push_back(static_cast<int>(sol.active_set.size()));
    tr.active_changed.push_back(k > 0 && sol.active_set != oracle[k - 1].active_set ? 1 : 0);
    if (sol.max_residual > tr.max_oracle_residual) tr.max_oracle_residual = sol.max_residual;

    if (k + 1 < horizon) {
      switch (alg.kind) {
        case AlgorithmKind::PrimalDual:
          step_primal_dual(pd, stream, k);
          break;
        case AlgorithmKind::ProjectedPrimalDual:
          step_projected_primal_dual(pd, stream, k);
          break;
        case AlgorithmKind::ImpEquality:
          step_imp_equality(imp, *alg.controller, stream, k);
          break;
        case AlgorithmKind::ImpAntiwindup:
          step_imp_antiwindup(imp, *alg.controller, stream, k);
          break;
      }
    }
  }
  return tr;
}

}  // namespace impopt::algorithms
