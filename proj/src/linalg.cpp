#include "impopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace impopt::linalg {

namespace {

const double SYMMETRY_RTOL = 1e-10;
const double EIG_RESIDUAL_RTOL = 1e-8;
const double DET_RESIDUAL_RTOL = 1e-6;
const double SOLVE_RESIDUAL_RTOL = 1e-10;
const double COND_LIMIT = 1e12;
const int GENERAL_EIG_MAX_DIM = 512;

void require_square(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(who) + ": matrix must be square and non-empty");
  }
}

// log|det(m - lambda I)| via in-place complex LU with partial pivoting.
// Working in the log domain keeps the check usable when ||m||^n would
// overflow. Returns -inf for an exactly singular shifted matrix.
double shifted_logabsdet(const Matrix& m, std::complex<double> lambda) {
  const Eigen::Index n = m.rows();
  ComplexMatrix a = m.cast<std::complex<double>>();
  a.diagonal().array() -= lambda;
  double logdet = 0.0;
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    double best = std::abs(a(col, col));
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double cand = std::abs(a(r, col));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    if (best == 0.0) return -std::numeric_limits<double>::infinity();
    if (piv != col) a.row(piv).swap(a.row(col));
    logdet += std::log(best);
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const std::complex<double> factor = a(r, col) / a(col, col);
      a.row(r).tail(n - col - 1) -= factor * a.row(col).tail(n - col - 1);
      a(r, col) = 0.0;
    }
  }
  return logdet;
}

}  // namespace

std::vector<double> sym_eigenvalues(const Matrix& m) {
  require_square(m, "sym_eigenvalues");
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > SYMMETRY_RTOL * std::max(1.0, scale)) {
    throw std::invalid_argument("sym_eigenvalues: matrix is not symmetric (max |m - m^T| = " +
                                std::to_string(asym) + "); refusing to symmetrize");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("sym_eigenvalues: eigensolver did not converge");
  }

  // factorization residual check before trusting the output
  const double mnorm = m.norm();
  const double resid = (m * es.eigenvectors() - es.eigenvectors() * es.eigenvalues().asDiagonal()).norm();
  if (resid > EIG_RESIDUAL_RTOL * std::max(1.0, mnorm)) {
    throw std::runtime_error("sym_eigenvalues: residual " + std::to_string(resid) +
                             " exceeds tolerance for ||m|| = " + std::to_string(mnorm));
  }

  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + m.rows());
  std::sort(out.begin(), out.end());
  return out;
}

Spectrum general_eigenvalues(const Matrix& m) {
  require_square(m, "general_eigenvalues");
  if (m.rows() > GENERAL_EIG_MAX_DIM) {
    throw std::invalid_argument("general_eigenvalues: dimension " + std::to_string(m.rows()) +
                                " exceeds the supported cap of 512");
  }

  Eigen::EigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("general_eigenvalues: eigensolver did not converge");
  }

  const Eigen::Index n = m.rows();
  const double mnorm = m.norm();
  // each eigenvalue must nearly annihilate the determinant of the shifted
  // matrix; the LU determinant shares nothing with the QR iteration above
  const double logtol = std::log(DET_RESIDUAL_RTOL) +
                        static_cast<double>(n) * std::log(std::max(mnorm, 1e-300));
  Spectrum spec;
  spec.eigenvalues.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    const double logdet = shifted_logabsdet(m, lambda);
    if (mnorm > 0.0 && logdet > logtol) {
      throw std::runtime_error("general_eigenvalues: eigenvalue failed the determinant check (log|det| = " +
                               std::to_string(logdet) + ", allowed " + std::to_string(logtol) + ")");
    }
    spec.eigenvalues.push_back(lambda);
  }

  std::sort(spec.eigenvalues.begin(), spec.eigenvalues.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              if (a.real() != b.real()) return a.real() < b.real();
              return a.imag() < b.imag();
            });
  for (const auto& ev : spec.eigenvalues) {
    spec.max_imag = std::max(spec.max_imag, std::abs(ev.imag()));
    spec.spectral_radius = std::max(spec.spectral_radius, std::abs(ev));
  }
  return spec;
}

double cond_estimate_1norm(const Matrix& m) {
  require_square(m, "cond_estimate_1norm");
  Eigen::PartialPivLU<Matrix> lu(m);
  if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() == 0.0) {
    return std::numeric_limits<double>::infinity();
  }

  // Hager's estimator for ||m^-1||_1: walk toward the maximizing unit vector
  // with a few solve / transposed-solve rounds
  const Eigen::Index n = m.rows();
  Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  double est = 0.0;
  for (int iter = 0; iter < 5; ++iter) {
    const Vector y = lu.solve(x);
    est = y.lpNorm<1>();
    Vector xi(n);
    for (Eigen::Index i = 0; i < n; ++i) xi(i) = (y(i) >= 0.0) ? 1.0 : -1.0;
    const Vector z = lu.adjoint().solve(xi);
    Eigen::Index j;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (zmax <= z.dot(x)) break;
    x.setZero();
    x(j) = 1.0;
  }
  const double m1 = m.cwiseAbs().colwise().sum().maxCoeff();
  return m1 * est;
}

Vector solve(const Matrix& m, const Vector& rhs) {
  require_square(m, "solve");
  if (rhs.size() != m.rows()) {
    throw std::invalid_argument("solve: rhs length does not match matrix dimension");
  }

  const double cond = cond_estimate_1norm(m);
  if (!(cond < COND_LIMIT)) {
    throw SingularMatrixError("solve: matrix is singular or ill-conditioned (cond ~ " +
                              std::to_string(cond) + ")", cond);
  }

  Eigen::PartialPivLU<Matrix> lu(m);
  Vector x = lu.solve(rhs);
  const double mnorm = m.norm();
  const auto bound = [&](const Vector& sol) {
    return SOLVE_RESIDUAL_RTOL * (mnorm * sol.norm() + rhs.norm());
  };
  double resid = (m * x - rhs).norm();
  if (resid > bound(x)) {
    // one round of iterative refinement is normally plenty at cond < 1e12
    x += lu.solve(rhs - m * x);
    resid = (m * x - rhs).norm();
    if (resid > bound(x)) {
      throw std::runtime_error("solve: residual " + std::to_string(resid) +
                               " above tolerance even after refinement");
    }
  }
  return x;
}

Vector kron_apply(const Matrix& f, const Vector& v, int n) {
  require_square(f, "kron_apply");
  if (n <= 0) throw std::invalid_argument("kron_apply: block length must be positive");
  const Eigen::Index m = f.rows();
  if (v.size() != m * n) {
    throw std::invalid_argument("kron_apply: vector length must equal rows(f) * n");
  }
  // v viewed as an n x m matrix whose columns are the blocks; applying
  // (f kron I_n) is a single right-multiplication by f^T
  Eigen::Map<const Matrix> blocks(v.data(), n, m);
  Vector out(m * n);
  Eigen::Map<Matrix>(out.data(), n, m).noalias() = blocks * f.transpose();
  return out;
}

std::complex<double> complex_det(ComplexMatrix m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument("complex_det: matrix must be square and non-empty");
  }
  const Eigen::Index n = m.rows();
  std::complex<double> det(1.0, 0.0);
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    double best = std::abs(m(col, col));
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double cand = std::abs(m(r, col));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    if (best == 0.0) return {0.0, 0.0};
    if (piv != col) {
      m.row(piv).swap(m.row(col));
      det = -det;
    }
    det *= m(col, col);
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const std::complex<double> factor = m(r, col) / m(col, col);
      m.row(r).tail(n - col - 1) -= factor * m.row(col).tail(n - col - 1);
    }
  }
  return det;
}

}  // namespace impopt::linalg
