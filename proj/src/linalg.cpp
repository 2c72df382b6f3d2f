#include "nogap/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace nogap {

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite entry");
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite entry");
}

Matrix solve_linear(const Matrix& a, const Matrix& b, double pivot_tol) {
  if (a.rows() != a.cols()) throw std::invalid_argument("solve_linear: matrix is not square");
  if (b.rows() != a.rows()) throw std::invalid_argument("solve_linear: dimension mismatch");
  require_finite(a, "solve_linear");
  require_finite(b, "solve_linear");
  const Eigen::Index n = a.rows();
  Matrix lu = a;
  Matrix x = b;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    lu.col(k).tail(n - k).cwiseAbs().maxCoeff(&p);
    p += k;
    if (std::abs(lu(p, k)) < pivot_tol * scale) {
      throw SingularMatrixError("solve_linear: matrix is singular to tolerance (column " +
                                std::to_string(k) + ")");
    }
    if (p != k) {
      lu.row(p).swap(lu.row(k));
      x.row(p).swap(x.row(k));
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double m = lu(i, k) / lu(k, k);
      if (m == 0.0) continue;
      lu.row(i).tail(n - k) -= m * lu.row(k).tail(n - k);
      x.row(i) -= m * x.row(k);
    }
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    if (k + 1 < n) x.row(k) -= lu.row(k).tail(n - k - 1) * x.bottomRows(n - k - 1);
    x.row(k) /= lu(k, k);
  }
  return x;
}

Vector solve_linear(const Matrix& a, const Vector& b, double pivot_tol) {
  Matrix rhs = b;
  return solve_linear(a, rhs, pivot_tol).col(0);
}

RowEchelon row_echelon(const Matrix& a, double tol) {
  RowEchelon out;
  out.reduced = a;
  Matrix& r = out.reduced;
  std::vector<int> origin(static_cast<std::size_t>(a.rows()));
  for (std::size_t i = 0; i < origin.size(); ++i) origin[i] = static_cast<int>(i);
  Eigen::Index row = 0;
  for (Eigen::Index col = 0; col < r.cols() && row < r.rows(); ++col) {
    Eigen::Index p = row;
    const double best = r.col(col).tail(r.rows() - row).cwiseAbs().maxCoeff(&p);
    p += row;
    if (best <= tol) {
      r.col(col).tail(r.rows() - row).setZero();
      continue;
    }
    if (p != row) {
      r.row(p).swap(r.row(row));
      std::swap(origin[static_cast<std::size_t>(p)], origin[static_cast<std::size_t>(row)]);
    }
    r.row(row) /= r(row, col);
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      if (i != row && r(i, col) != 0.0) r.row(i) -= r(i, col) * r.row(row);
    }
    out.pivot_cols.push_back(static_cast<int>(col));
    out.pivot_rows.push_back(origin[static_cast<std::size_t>(row)]);
    ++row;
  }
  return out;
}

int rank(const Matrix& a, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("rank: tolerance must be positive");
  return row_echelon(a, tol).rank();
}

namespace {

// Modified Gram-Schmidt on the columns of v, dropping columns that collapse.
Matrix orthonormalize(const Matrix& v, double tol) {
  Matrix q(v.rows(), v.cols());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Vector c = v.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < k; ++i) c -= q.col(i).dot(c) * q.col(i);
    }
    const double nrm = c.norm();
    if (nrm <= tol) continue;
    q.col(k++) = c / nrm;
  }
  return q.leftCols(k);
}

}  // namespace

Matrix null_space_basis(const Matrix& a, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("null_space_basis: tolerance must be positive");
  const Eigen::Index n = a.cols();
  if (a.rows() == 0) return Matrix::Identity(n, n);
  const RowEchelon re = row_echelon(a, tol);
  std::vector<bool> is_pivot(static_cast<std::size_t>(n), false);
  for (int c : re.pivot_cols) is_pivot[static_cast<std::size_t>(c)] = true;
  Matrix raw(n, n - re.rank());
  Eigen::Index k = 0;
  for (Eigen::Index f = 0; f < n; ++f) {
    if (is_pivot[static_cast<std::size_t>(f)]) continue;
    Vector v = Vector::Zero(n);
    v(f) = 1.0;
    for (int i = 0; i < re.rank(); ++i) v(re.pivot_cols[static_cast<std::size_t>(i)]) = -re.reduced(i, f);
    raw.col(k++) = v;
  }
  return orthonormalize(raw, 1e-14);
}

Matrix row_space_basis(const Matrix& a, double tol) {
  if (a.rows() == 0) return Matrix(a.cols(), 0);
  const std::vector<int> rows = independent_rows(a, tol);
  Matrix sel(a.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) sel.col(static_cast<Eigen::Index>(i)) = a.row(rows[i]).transpose();
  return orthonormalize(sel, 1e-14);
}

std::vector<int> independent_rows(const Matrix& a, double tol) {
  // Row reduction of A^T picks pivot columns = independent rows of A in order.
  const RowEchelon re = row_echelon(a.transpose(), tol);
  return re.pivot_cols;
}

DefinitenessResult pd_on_subspace(const Matrix& q, const Matrix& basis, double tol) {
  if (q.rows() != q.cols()) throw std::invalid_argument("pd_on_subspace: Q is not square");
  if (basis.rows() != q.rows()) throw std::invalid_argument("pd_on_subspace: basis dimension mismatch");
  require_finite(q, "pd_on_subspace");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, q.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("pd_on_subspace: Q is not symmetric");
  }
  DefinitenessResult res;
  if (basis.cols() == 0) return res;
  Matrix r = basis.transpose() * q * basis;
  r = 0.5 * (r + r.transpose());
  const Eigen::Index k = r.rows();
  const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
  // LDL^T without pivoting: all pivots positive iff every leading minor is.
  Matrix l = Matrix::Identity(k, k);
  Vector d(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double s = r(j, j);
    for (Eigen::Index p = 0; p < j; ++p) s -= l(j, p) * l(j, p) * d(p);
    d(j) = s;
    res.margin = (j == 0) ? s : std::min(res.margin, s);
    if (s < -tol * scale) {
      res.verdict = Definiteness::not_positive;
      return res;
    }
    if (s <= tol * scale) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(r, Eigen::EigenvaluesOnly);
      res.verdict = eig.eigenvalues().minCoeff() < -tol * scale ? Definiteness::not_positive
                                                                 : Definiteness::degenerate;
      return res;
    }
    for (Eigen::Index i = j + 1; i < k; ++i) {
      double t = r(i, j);
      for (Eigen::Index p = 0; p < j; ++p) t -= l(i, p) * l(j, p) * d(p);
      l(i, j) = t / s;
    }
  }
  return res;
}

std::string to_string(Definiteness d) {
  switch (d) {
    case Definiteness::positive: return "positive";
    case Definiteness::not_positive: return "not_positive";
    case Definiteness::degenerate: return "degenerate";
  }
  return "?";
}

}  // namespace nogap
