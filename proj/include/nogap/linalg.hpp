#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require_finite(const Matrix& a, const char* what);
void require_finite(const Vector& v, const char* what);

// Gaussian elimination with partial pivoting. Throws SingularMatrixError when
// a pivot falls below pivot_tol * max(1, max|A_ij|).
Vector solve_linear(const Matrix& a, const Vector& b, double pivot_tol = 1e-10);
Matrix solve_linear(const Matrix& a, const Matrix& b, double pivot_tol = 1e-10);

struct RowEchelon {
  Matrix reduced;               // reduced row echelon form
  std::vector<int> pivot_cols;  // column of each pivot row, in order
  std::vector<int> pivot_rows;  // original index of the row that supplied each pivot
  int rank() const { return static_cast<int>(pivot_cols.size()); }
};

// Row reduction with partial pivoting; entries below tol are treated as zero.
RowEchelon row_echelon(const Matrix& a, double tol);

int rank(const Matrix& a, double tol = 1e-9);

// Orthonormal basis (columns) of {z : A z = 0}. The column count is always
// cols(A) - rank(A, tol).
Matrix null_space_basis(const Matrix& a, double tol = 1e-9);

// Orthonormal basis of the row space of A.
Matrix row_space_basis(const Matrix& a, double tol = 1e-9);

// Indices of a maximal linearly independent subset of A's rows, chosen
// greedily in row order.
std::vector<int> independent_rows(const Matrix& a, double tol = 1e-9);

enum class Definiteness { positive, not_positive, degenerate };

struct DefinitenessResult {
  Definiteness verdict = Definiteness::positive;
  // Smallest pivot of the LDL^T factorization of basis^T Q basis; +inf for an
  // empty basis.
  double margin = std::numeric_limits<double>::infinity();
};

// Decides positivity of basis^T Q basis. Throws std::invalid_argument when Q
// is not symmetric to 1e-9.
DefinitenessResult pd_on_subspace(const Matrix& q, const Matrix& basis, double tol = 1e-10);

std::string to_string(Definiteness d);

}  // namespace nogap
