#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace impopt::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

// Thrown by solve() when the coefficient matrix is singular, or close enough
// to singular that the solution cannot be trusted.
class SingularMatrixError : public std::runtime_error {
public:
  SingularMatrixError(const std::string& what, double cond)
      : std::runtime_error(what), condition_estimate(cond) {}
  double condition_estimate;
};

struct Spectrum {
  // sorted by real part, then imaginary part, for reproducible output
  std::vector<std::complex<double>> eigenvalues;
  double max_imag = 0.0;        // largest |Im(lambda)|
  double spectral_radius = 0.0; // largest |lambda|
};

// Eigenvalues of a symmetric matrix, ascending. Rejects non-square input and
// matrices whose asymmetry exceeds 1e-10 relative to the largest entry; the
// result is checked against the factorization residual before returning.
std::vector<double> sym_eigenvalues(const Matrix& m);

// Eigenvalues of a general real square matrix (dimension capped at 512).
// Every returned eigenvalue is independently validated through the
// determinant residual |det(m - lambda I)|, evaluated by an LU routine that
// shares no code with the eigensolver.
Spectrum general_eigenvalues(const Matrix& m);

// Solve m x = rhs by LU with partial pivoting. Throws SingularMatrixError
// (carrying a 1-norm condition estimate) when the estimate exceeds 1e12.
// The returned x always satisfies
//   ||m x - rhs|| <= 1e-10 (||m|| ||x|| + ||rhs||).
Vector solve(const Matrix& m, const Vector& rhs);

// y = (f kron I_n) v without forming the Kronecker product: v is read as m
// stacked blocks of length n and the result's block i is sum_j f(i,j) v_j.
// Costs O(m^2 n).
Vector kron_apply(const Matrix& f, const Vector& v, int n);

// Determinant of a complex matrix by LU with partial pivoting (destructive
// on a local copy). Used for validation paths that must stay independent of
// the eigensolver.
std::complex<double> complex_det(ComplexMatrix m);

// 1-norm condition estimate for a square matrix (Hager-style estimate of
// ||m^-1||_1 through a handful of solves). Returns +inf for exactly singular
// input.
double cond_estimate_1norm(const Matrix& m);

}  // namespace impopt::linalg
