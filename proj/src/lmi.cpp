#include "impopt/lmi.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace impopt::lmi {
namespace {

constexpr int MAX_ORDER = 16;
constexpr int N_BLOCKS = 4;          // lower pair: B(l) - tI > 0, upper pair: I - B(l) > 0
constexpr double BOX_LIMIT = 1e6;    // safety bound for P, Q, R entries
constexpr double T_BOX_LIMIT = 10.0; // the margin variable lives well inside [-10, 10]
constexpr double FEAS_NORM_MARGIN = 1e-8;
constexpr double GAP_STOP = 1e-11;   // absolute duality-gap proxy (blocks are norm-capped at 1)
constexpr double NEWTON_DEC_STOP = 1e-10;
constexpr double MU_SHRINK = 0.1;
constexpr double MU_START = 0.1;
constexpr int MAX_NEWTON_PER_STAGE = 160;
constexpr int MAX_STAGES = 48;
constexpr double ARMIJO_SLOPE = 0.01;
constexpr double MIN_STEP = 1e-18;
constexpr double INIT_NORM = 0.45;  // starting blocks are scaled to this spectral norm
constexpr double CERT_RECHECK_SLACK = 0.5;  // re-verified margin may shrink this much

// one symmetric entry of a coefficient matrix: value v at (r,c) and (c,r)
struct SymEntry {
  int r;
  int c;
  double v;
};

// directed expansion used for trace formulas
struct DirEntry {
  int r;
  int c;
  double v;
};

struct Structure {
  int m = 0;
  int dim = 0;        // 2m, block size
  int n_vars = 0;     // total decision variables including t
  int idx_q = 0;      // offset of Q variables
  int idx_r = 0;      // offset of R variables
  int idx_t = 0;      // offset of the margin variable
  double const_diag[N_BLOCKS] = {0.0, 0.0, 1.0, 1.0};
  // per block, per variable
  std::vector<std::vector<SymEntry>> sym[N_BLOCKS];
  std::vector<std::vector<DirEntry>> dir[N_BLOCKS];
};

int tri_index(int i, int j, int m) {
  // upper-triangular (i <= j) packing, row major
  return i * m - i * (i - 1) / 2 + (j - i);
}

Structure build_structure(const LmiInstance& inst) {
  const int m = static_cast<int>(inst.f.rows());
  Structure st;
  st.m = m;
  st.dim = 2 * m;
  const int tri = m * (m + 1) / 2;
  st.idx_q = 2 * tri;
  st.idx_r = st.idx_q + m * m;
  st.idx_t = st.idx_r + m;
  st.n_vars = st.idx_t + 1;
  for (int blk = 0; blk < N_BLOCKS; ++blk) {
    st.sym[blk].assign(st.n_vars, {});
    st.dir[blk].assign(st.n_vars, {});
  }
  const double lv[2] = {inst.l_lo, inst.l_hi};

  // affine block B(l) as symmetric entry lists per variable; vertex = 0, 1
  // P_lo entries live only at vertex 0, P_hi only at vertex 1
  for (int vx = 0; vx < 2; ++vx) {
    const int base = vx == 0 ? 0 : tri;
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        st.sym[vx][base + tri_index(i, j, m)] = {
            {i, j, 1.0},           // +P upper-left
            {m + i, m + j, -1.0},  // -P lower-right
        };
      }
    }
    // Q_{a b}: F Q in the upper-right block, Q + Q^T in the lower-right one
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        auto& lst = st.sym[vx][st.idx_q + a * m + b];
        for (int rr = 0; rr < m; ++rr) {
          const double coeff = inst.f(rr, a);
          if (coeff != 0.0) lst.push_back({rr, m + b, coeff});
        }
        lst.push_back({m + a, m + b, a == b ? 2.0 : 1.0});
      }
    }
    // R_b: l * Cc R in the upper-right block
    for (int b = 0; b < m; ++b) {
      auto& lst = st.sym[vx][st.idx_r + b];
      for (int rr = 0; rr < m; ++rr) {
        const double coeff = lv[vx] * inst.cc(rr);
        if (coeff != 0.0) lst.push_back({rr, m + b, coeff});
      }
    }
  }
  // lower blocks are B(l) - tI; upper blocks are I - B(l) (sign-flipped copy, no t)
  for (int vx = 0; vx < 2; ++vx) {
    for (int v = 0; v < st.n_vars; ++v) {
      for (const auto& e : st.sym[vx][v]) {
        st.sym[2 + vx][v].push_back({e.r, e.c, -e.v});
      }
    }
    for (int d = 0; d < st.dim; ++d) st.sym[vx][st.idx_t].push_back({d, d, -1.0});
  }
  // directed expansion
  for (int blk = 0; blk < N_BLOCKS; ++blk) {
    for (int v = 0; v < st.n_vars; ++v) {
      for (const auto& e : st.sym[blk][v]) {
        st.dir[blk][v].push_back({e.r, e.c, e.v});
        if (e.r != e.c) st.dir[blk][v].push_back({e.c, e.r, e.v});
      }
    }
  }
  return st;
}

void assemble_block(const Structure& st, const Vector& theta, int blk, Matrix& out) {
  out.setZero(st.dim, st.dim);
  out.diagonal().array() += st.const_diag[blk];
  for (int v = 0; v < st.n_vars; ++v) {
    const double tv = theta(v);
    if (tv == 0.0) continue;
    for (const auto& e : st.sym[blk][v]) {
      out(e.r, e.c) += e.v * tv;
      if (e.r != e.c) out(e.c, e.r) += e.v * tv;
    }
  }
}

double box_limit(const Structure& st, int v) {
  return v == st.idx_t ? T_BOX_LIMIT : BOX_LIMIT;
}

bool inside_box(const Structure& st, const Vector& theta) {
  for (int v = 0; v < st.n_vars; ++v) {
    if (std::abs(theta(v)) >= box_limit(st, v)) return false;
  }
  return true;
}

// strict feasibility check; fills Cholesky factors on success
bool strictly_feasible(const Structure& st, const Vector& theta,
                       Eigen::LLT<Matrix> llt[N_BLOCKS], Matrix& scratch) {
  if (!theta.allFinite() || !inside_box(st, theta)) return false;
  for (int blk = 0; blk < N_BLOCKS; ++blk) {
    assemble_block(st, theta, blk, scratch);
    llt[blk].compute(scratch);
    if (llt[blk].info() != Eigen::Success) return false;
    // Eigen's LLT can succeed on marginally indefinite input; insist on a
    // strictly positive diagonal of the factor
    const auto& d = llt[blk].matrixLLT();
    for (int i = 0; i < st.dim; ++i) {
      if (!(d(i, i) > 0.0) || !std::isfinite(d(i, i))) return false;
    }
  }
  return true;
}

double barrier_value(const Structure& st, const Vector& theta,
                     const Eigen::LLT<Matrix> llt[N_BLOCKS]) {
  double phi = 0.0;
  for (int blk = 0; blk < N_BLOCKS; ++blk) {
    const auto& d = llt[blk].matrixLLT();
    double logdet = 0.0;
    for (int i = 0; i < st.dim; ++i) logdet += std::log(d(i, i));
    phi -= 2.0 * logdet;
  }
  for (int v = 0; v < st.n_vars; ++v) {
    const double bl = box_limit(st, v);
    phi -= std::log(bl - theta(v)) + std::log(bl + theta(v));
  }
  return phi;
}

}  // namespace

double psd_margin(const Matrix& m) {
  return linalg::sym_eigenvalues(m).front();
}

LmiOutcome solve_lmi(const LmiInstance& inst) {
  const int m = static_cast<int>(inst.f.rows());
  if (m < 1 || m > MAX_ORDER || inst.f.cols() != m || inst.cc.size() != m) {
    throw std::invalid_argument("solve_lmi: bad instance dimensions");
  }
  if (!(inst.l_lo > 0.0) || !(inst.l_hi >= inst.l_lo)) {
    throw std::invalid_argument("solve_lmi: gain interval must satisfy 0 < l_lo <= l_hi");
  }
  for (int i = 0; i + 1 < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double want = j == i + 1 ? 1.0 : 0.0;
      if (inst.f(i, j) != want) {
        throw std::invalid_argument("solve_lmi: matrix is not in companion form");
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    const double want = i == m - 1 ? 1.0 : 0.0;
    if (inst.cc(i) != want) {
      throw std::invalid_argument("solve_lmi: input column must be the last unit vector");
    }
  }

  const Structure st = build_structure(inst);
  const int n = st.n_vars;
  const int dim = st.dim;

  // start from P = Q = s I, R = 0, scaled so both affine blocks sit strictly
  // inside the unit-norm cap, then drop t below their smallest eigenvalue
  Vector theta = Vector::Zero(n);
  for (int i = 0; i < m; ++i) {
    theta(tri_index(i, i, m)) = 1.0;
    theta(m * (m + 1) / 2 + tri_index(i, i, m)) = 1.0;
    theta(st.idx_q + i * m + i) = 1.0;
  }
  Matrix blocks[2] = {Matrix(dim, dim), Matrix(dim, dim)};
  {
    double norm = 0.0;
    double min_eig = 0.0;
    for (int vx = 0; vx < 2; ++vx) {
      assemble_block(st, theta, vx, blocks[vx]);
      const auto ev = linalg::sym_eigenvalues(blocks[vx]);
      norm = std::max(norm, std::max(std::abs(ev.front()), std::abs(ev.back())));
      min_eig = std::min(min_eig, ev.front());
    }
    const double s = INIT_NORM / std::max(norm, 1e-12);
    theta *= s;
    theta(st.idx_t) = s * min_eig - 0.05;
  }

  Eigen::LLT<Matrix> llt[N_BLOCKS] = {Eigen::LLT<Matrix>(dim), Eigen::LLT<Matrix>(dim),
                                      Eigen::LLT<Matrix>(dim), Eigen::LLT<Matrix>(dim)};
  Matrix scratch(dim, dim);
  if (!strictly_feasible(st, theta, llt, scratch)) {
    throw LmiNumericalError("solve_lmi: failed to construct a strictly feasible start");
  }

  Matrix sinv[N_BLOCKS] = {Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim),
                           Matrix(dim, dim)};
  Vector grad(n);
  Matrix hess(n, n);
  const Matrix eye = Matrix::Identity(dim, dim);

  // barrier terms weighting the duality-gap proxy
  const double nu = static_cast<double>(N_BLOCKS) * dim + 2.0 * n;
  double mu = MU_START;
  int outer = 0;

  for (int stage = 0; stage < MAX_STAGES; ++stage) {
    ++outer;
    for (int it = 0; it < MAX_NEWTON_PER_STAGE; ++it) {
      for (int blk = 0; blk < N_BLOCKS; ++blk) {
        sinv[blk] = llt[blk].solve(eye);
        if (!sinv[blk].allFinite()) {
          throw LmiNumericalError("solve_lmi: singular barrier state");
        }
      }
      // work with f/mu = -t/mu + phi
      grad.setZero();
      grad(st.idx_t) = -1.0 / mu;
      for (int v = 0; v < n; ++v) {
        for (int blk = 0; blk < N_BLOCKS; ++blk) {
          double tr = 0.0;
          for (const auto& e : st.dir[blk][v]) tr += e.v * sinv[blk](e.c, e.r);
          grad(v) -= tr;
        }
        const double bl = box_limit(st, v);
        grad(v) += 1.0 / (bl - theta(v)) - 1.0 / (bl + theta(v));
      }
      hess.setZero();
      for (int blk = 0; blk < N_BLOCKS; ++blk) {
        const Matrix& si = sinv[blk];
        for (int v = 0; v < n; ++v) {
          const auto& dv = st.dir[blk][v];
          if (dv.empty()) continue;
          for (int w = v; w < n; ++w) {
            const auto& dw = st.dir[blk][w];
            if (dw.empty()) continue;
            double acc = 0.0;
            for (const auto& a : dv) {
              for (const auto& b : dw) {
                acc += a.v * b.v * si(a.c, b.r) * si(b.c, a.r);
              }
            }
            hess(v, w) += acc;
          }
        }
      }
      for (int v = 0; v < n; ++v) {
        const double bl = box_limit(st, v);
        const double lo = bl + theta(v);
        const double hi = bl - theta(v);
        hess(v, v) += 1.0 / (lo * lo) + 1.0 / (hi * hi);
        for (int w = v + 1; w < n; ++w) hess(w, v) = hess(v, w);
      }

      Eigen::LDLT<Matrix> hfac(hess);
      Vector step = hfac.solve(-grad);
      // the barrier Hessian is positive definite in exact arithmetic but can
      // lose that numerically near the boundary; regularize until the step is
      // a descent direction
      double reg = 1e-12 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
      for (int tries = 0;
           (hfac.info() != Eigen::Success || !step.allFinite() || -grad.dot(step) <= 0.0) &&
           tries < 10;
           ++tries) {
        hess.diagonal().array() += reg;
        hfac.compute(hess);
        step = hfac.solve(-grad);
        reg *= 100.0;
      }
      if (!step.allFinite()) break;  // abandon the stage at the current center
      const double dec2 = -grad.dot(step);  // Newton decrement squared
      if (!(dec2 > 0.0) || 0.5 * dec2 <= NEWTON_DEC_STOP) break;

      const double f0 = -theta(st.idx_t) / mu + barrier_value(st, theta, llt);
      double s = 1.0;
      bool moved = false;
      Eigen::LLT<Matrix> trial[N_BLOCKS] = {Eigen::LLT<Matrix>(dim), Eigen::LLT<Matrix>(dim),
                                            Eigen::LLT<Matrix>(dim), Eigen::LLT<Matrix>(dim)};
      while (s >= MIN_STEP) {
        Vector cand = theta + s * step;
        if (strictly_feasible(st, cand, trial, scratch)) {
          const double f1 = -cand(st.idx_t) / mu + barrier_value(st, cand, trial);
          if (f1 <= f0 - ARMIJO_SLOPE * s * dec2) {
            theta.swap(cand);
            for (int blk = 0; blk < N_BLOCKS; ++blk) llt[blk] = trial[blk];
            moved = true;
            break;
          }
        }
        s *= 0.5;
      }
      if (!moved) break;  // line search stalled: accept current center
    }
    if (mu * nu < GAP_STOP) break;
    mu *= MU_SHRINK;
  }

  // Appraise the final point through the actual spectra of the affine blocks,
  // not the t variable.
  double min_eig = std::numeric_limits<double>::infinity();
  double max_norm = 0.0;
  for (int vx = 0; vx < 2; ++vx) {
    assemble_block(st, theta, vx, blocks[vx]);
    blocks[vx].diagonal().array() += theta(st.idx_t);  // undo -tI: raw affine block
    const auto ev = linalg::sym_eigenvalues(blocks[vx]);
    min_eig = std::min(min_eig, ev.front());
    max_norm = std::max(max_norm, std::max(std::abs(ev.front()), std::abs(ev.back())));
  }
  if (!std::isfinite(min_eig) || !std::isfinite(max_norm)) {
    throw LmiNumericalError("solve_lmi: non-finite terminal state");
  }

  LmiOutcome out;
  out.outer_iterations = outer;
  out.norm_margin = min_eig / std::max(max_norm, 1e-300);
  out.feasible = out.norm_margin >= FEAS_NORM_MARGIN;
  if (!out.feasible) return out;

  const int tri = m * (m + 1) / 2;
  LmiCertificate cert;
  cert.p_lo.setZero(m, m);
  cert.p_hi.setZero(m, m);
  cert.q.setZero(m, m);
  cert.r.setZero(m);
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      cert.p_lo(i, j) = cert.p_lo(j, i) = theta(tri_index(i, j, m));
      cert.p_hi(i, j) = cert.p_hi(j, i) = theta(tri + tri_index(i, j, m));
    }
    for (int j = 0; j < m; ++j) cert.q(i, j) = theta(st.idx_q + i * m + j);
    cert.r(i) = theta(st.idx_r + i);
  }
  cert.margin = min_eig;

  // Re-verify the certificate from scratch, trusting nothing from the solver
  // loop: rebuild both blocks directly from the certificate matrices.
  const double lv[2] = {inst.l_lo, inst.l_hi};
  double check_min = std::numeric_limits<double>::infinity();
  double check_norm = 0.0;
  for (int vx = 0; vx < 2; ++vx) {
    const Matrix& p = vx == 0 ? cert.p_lo : cert.p_hi;
    Matrix upper_right = inst.f * cert.q + lv[vx] * inst.cc * cert.r;
    Matrix full(dim, dim);
    full.topLeftCorner(m, m) = p;
    full.topRightCorner(m, m) = upper_right;
    full.bottomLeftCorner(m, m) = upper_right.transpose();
    full.bottomRightCorner(m, m) = cert.q + cert.q.transpose() - p;
    const auto ev = linalg::sym_eigenvalues(full);
    check_min = std::min(check_min, ev.front());
    check_norm = std::max(check_norm, std::max(std::abs(ev.front()), std::abs(ev.back())));
  }
  if (!(check_min / std::max(check_norm, 1e-300) >= CERT_RECHECK_SLACK * FEAS_NORM_MARGIN)) {
    throw LmiNumericalError("solve_lmi: certificate failed independent re-verification");
  }
  out.cert = cert;
  return out;
}

}  // namespace impopt::lmi
