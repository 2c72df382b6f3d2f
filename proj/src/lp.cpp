#include "nogap/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nogap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_row(Matrix& a, Vector& b, const Vector& row, double rhs) {
  const Eigen::Index m = a.rows();
  a.conservativeResize(m + 1, Eigen::NoChange);
  b.conservativeResize(m + 1);
  a.row(m) = row.transpose();
  b(m) = rhs;
}

// Standard form  A x = b, x >= 0, b >= 0, with x = [u; v; s] and z = u - v.
struct StandardForm {
  Matrix a;
  Vector b;
  Vector cost;
  Vector sign;                 // row flip applied to reach b >= 0
  std::vector<int> eq_origin;  // kept equality rows -> original index
  Eigen::Index n = 0;          // original variable count
  Eigen::Index m_eq = 0;
  Eigen::Index m_in = 0;
};

class RevisedSimplex {
 public:
  RevisedSimplex(const Matrix& a, const Vector& b, const Tolerances& tol)
      : a_(a), b_(b), tol_(tol), m_(a.rows()), cols_(a.cols()) {}

  enum class Outcome { optimal, unbounded };

  // Installs the artificial basis of phase I: columns cols_.. cols_+m_-1 are
  // identity columns appended implicitly.
  void start_artificial() {
    basis_.resize(static_cast<std::size_t>(m_));
    for (Eigen::Index i = 0; i < m_; ++i) basis_[static_cast<std::size_t>(i)] = static_cast<int>(cols_ + i);
    binv_ = Matrix::Identity(m_, m_);
    xb_ = b_;
  }

  Vector column(int j) const {
    if (j < cols_) return a_.col(j);
    Vector e = Vector::Zero(m_);
    e(j - cols_) = 1.0;
    return e;
  }

  // Runs simplex iterations for costs c (over all cols_ + m_ columns);
  // allowed[j] marks columns that may enter.
  Outcome iterate(const Vector& c, const std::vector<bool>& allowed, int& unbounded_col) {
    const int cap = static_cast<int>(50 * (m_ + cols_) + 1000);
    for (int it = 0;; ++it) {
      if (it > cap) throw LPStallError("lp_solve: iteration cap reached");
      if (++since_refactor_ >= 30) refactor();
      const Vector y = duals(c);
      int entering = -1;
      const double cscale = std::max(1.0, c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
      for (Eigen::Index j = 0; j < cols_ + m_; ++j) {
        if (!allowed[static_cast<std::size_t>(j)] || is_basic(static_cast<int>(j))) continue;
        const double reduced = c(j) - y.dot(column(static_cast<int>(j)));
        if (reduced < -1e-9 * cscale) {
          entering = static_cast<int>(j);
          break;
        }
      }
      if (entering < 0) return Outcome::optimal;
      const Vector dir = binv_ * column(entering);
      int leave_row = -1;
      double best = kInf;
      for (Eigen::Index i = 0; i < m_; ++i) {
        if (dir(i) <= tol_.pivot * 10.0) continue;
        const double ratio = std::max(0.0, xb_(i)) / dir(i);
        const int var = basis_[static_cast<std::size_t>(i)];
        if (ratio < best - 1e-12 ||
            (ratio <= best + 1e-12 && leave_row >= 0 && var < basis_[static_cast<std::size_t>(leave_row)])) {
          best = std::min(best, ratio);
          leave_row = static_cast<int>(i);
        }
      }
      if (leave_row < 0) {
        unbounded_col = entering;
        return Outcome::unbounded;
      }
      pivot(leave_row, entering, dir);
      ++iterations_;
    }
  }

  void pivot(int row, int entering, const Vector& dir) {
    const double p = dir(row);
    const double step = xb_(row) / p;
    xb_ -= step * dir;
    xb_(row) = step;
    const Vector prow = binv_.row(row) / p;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i == row) continue;
      if (dir(i) != 0.0) binv_.row(i) -= dir(i) * prow.transpose();
    }
    binv_.row(row) = prow.transpose();
    basis_[static_cast<std::size_t>(row)] = entering;
  }

  void refactor() {
    since_refactor_ = 0;
    if (m_ == 0) return;
    Matrix bm(m_, m_);
    for (Eigen::Index i = 0; i < m_; ++i) bm.col(i) = column(basis_[static_cast<std::size_t>(i)]);
    binv_ = solve_linear(bm, Matrix(Matrix::Identity(m_, m_)), 1e-14);
    xb_ = binv_ * b_;
  }

  Vector duals(const Vector& c) const {
    Vector cb(m_);
    for (Eigen::Index i = 0; i < m_; ++i) cb(i) = c(basis_[static_cast<std::size_t>(i)]);
    return binv_.transpose() * cb;
  }

  bool is_basic(int j) const { return std::find(basis_.begin(), basis_.end(), j) != basis_.end(); }

  Vector primal() const {
    Vector x = Vector::Zero(cols_ + m_);
    for (Eigen::Index i = 0; i < m_; ++i) x(basis_[static_cast<std::size_t>(i)]) = xb_(i);
    return x;
  }

  // Pivots remaining artificial variables out of the basis. The constraint
  // matrix has full row rank, so some structural column always qualifies.
  void expel_artificials() {
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < cols_) continue;
      const Vector row = binv_.row(i) * a_;
      int best = -1;
      double mag = 0.0;
      for (Eigen::Index j = 0; j < cols_; ++j) {
        if (is_basic(static_cast<int>(j))) continue;
        if (std::abs(row(j)) > mag) {
          mag = std::abs(row(j));
          best = static_cast<int>(j);
        }
      }
      if (best < 0 || mag < 1e-12) throw LPStallError("lp_solve: cannot remove artificial variable");
      pivot(static_cast<int>(i), best, binv_ * a_.col(best));
    }
    refactor();
  }

  int iterations() const { return iterations_; }
  const Matrix& binv() const { return binv_; }
  const std::vector<int>& basis() const { return basis_; }

 private:
  const Matrix& a_;
  const Vector& b_;
  const Tolerances& tol_;
  Eigen::Index m_;
  Eigen::Index cols_;
  std::vector<int> basis_;
  Matrix binv_;
  Vector xb_;
  int iterations_ = 0;
  int since_refactor_ = 0;
};

StandardForm to_standard(const LinearProgram& lp, const std::vector<int>& eq_keep) {
  StandardForm sf;
  sf.n = lp.num_vars();
  sf.m_eq = static_cast<Eigen::Index>(eq_keep.size());
  sf.m_in = lp.a_in.rows();
  sf.eq_origin = eq_keep;
  const Eigen::Index m = sf.m_eq + sf.m_in;
  const Eigen::Index cols = 2 * sf.n + sf.m_in;
  sf.a = Matrix::Zero(m, cols);
  sf.b = Vector::Zero(m);
  sf.sign = Vector::Ones(m);
  for (Eigen::Index i = 0; i < sf.m_eq; ++i) {
    const Eigen::Index r = eq_keep[static_cast<std::size_t>(i)];
    sf.a.row(i).head(sf.n) = lp.a_eq.row(r);
    sf.a.row(i).segment(sf.n, sf.n) = -lp.a_eq.row(r);
    sf.b(i) = lp.b_eq(r);
  }
  for (Eigen::Index k = 0; k < sf.m_in; ++k) {
    const Eigen::Index i = sf.m_eq + k;
    sf.a.row(i).head(sf.n) = lp.a_in.row(k);
    sf.a.row(i).segment(sf.n, sf.n) = -lp.a_in.row(k);
    sf.a(i, 2 * sf.n + k) = 1.0;
    sf.b(i) = lp.b_in(k);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sf.b(i) < 0.0) {
      sf.sign(i) = -1.0;
      sf.a.row(i) *= -1.0;
      sf.b(i) *= -1.0;
    }
  }
  sf.cost = Vector::Zero(cols);
  sf.cost.head(sf.n) = lp.c;
  sf.cost.segment(sf.n, sf.n) = -lp.c;
  return sf;
}

double max_violation(const LinearProgram& lp, const Vector& z) {
  double v = 0.0;
  if (lp.a_eq.rows() > 0) v = std::max(v, (lp.a_eq * z - lp.b_eq).cwiseAbs().maxCoeff());
  if (lp.a_in.rows() > 0) v = std::max(v, (lp.a_in * z - lp.b_in).maxCoeff());
  return v;
}

}  // namespace

void LinearProgram::add_eq(const Vector& row, double rhs) {
  if (row.size() != num_vars()) throw std::invalid_argument("LinearProgram::add_eq: dimension mismatch");
  append_row(a_eq, b_eq, row, rhs);
}

void LinearProgram::add_le(const Vector& row, double rhs) {
  if (row.size() != num_vars()) throw std::invalid_argument("LinearProgram::add_le: dimension mismatch");
  append_row(a_in, b_in, row, rhs);
}

void LinearProgram::add_box(double bound) {
  for (Eigen::Index i = 0; i < num_vars(); ++i) {
    Vector e = Vector::Zero(num_vars());
    e(i) = 1.0;
    add_le(e, bound);
    add_le(-e, bound);
  }
}

void LinearProgram::validate() const {
  const Eigen::Index n = num_vars();
  if (a_eq.cols() != n || a_in.cols() != n || a_eq.rows() != b_eq.size() || a_in.rows() != b_in.size()) {
    throw std::invalid_argument("LinearProgram: inconsistent dimensions");
  }
  require_finite(c, "LinearProgram objective");
  require_finite(a_eq, "LinearProgram equalities");
  require_finite(b_eq, "LinearProgram equalities");
  require_finite(a_in, "LinearProgram inequalities");
  require_finite(b_in, "LinearProgram inequalities");
}

std::string to_string(LPStatus s) {
  switch (s) {
    case LPStatus::optimal: return "optimal";
    case LPStatus::unbounded: return "unbounded";
    case LPStatus::infeasible: return "infeasible";
  }
  return "?";
}

LPResult lp_solve(const LinearProgram& lp, const Tolerances& tol) {
  lp.validate();
  const Eigen::Index n = lp.num_vars();
  LPResult res;
  res.dual_eq = Vector::Zero(lp.a_eq.rows());
  res.dual_in = Vector::Zero(lp.a_in.rows());

  // Redundant equality rows are pruned; an inconsistent redundancy is an
  // immediate infeasibility certificate.
  std::vector<int> eq_keep;
  if (lp.a_eq.rows() > 0) {
    eq_keep = independent_rows(lp.a_eq, tol.activity);
    std::sort(eq_keep.begin(), eq_keep.end());
    Matrix aug(lp.a_eq.rows(), n + 1);
    aug << lp.a_eq, lp.b_eq;
    if (rank(aug, tol.activity) > static_cast<int>(eq_keep.size())) {
      const Matrix left_null = null_space_basis(lp.a_eq.transpose(), tol.activity);
      for (Eigen::Index k = 0; k < left_null.cols(); ++k) {
        const double bb = lp.b_eq.dot(left_null.col(k));
        if (std::abs(bb) > tol.activity) {
          res.status = LPStatus::infeasible;
          res.optimum = kInf;
          res.dual_eq = bb > 0 ? Vector(-left_null.col(k)) : Vector(left_null.col(k));
          return res;
        }
      }
    }
  }

  const StandardForm sf = to_standard(lp, eq_keep);
  const Eigen::Index m = sf.a.rows();
  const Eigen::Index cols = sf.a.cols();
  if (m == 0) {
    // No constraints: bounded only if c = 0.
    if (n == 0 || lp.c.cwiseAbs().maxCoeff() <= 0.0) {
      res.status = LPStatus::optimal;
      res.optimum = 0.0;
      res.solution = Vector::Zero(n);
      return res;
    }
    res.status = LPStatus::unbounded;
    res.optimum = -kInf;
    res.ray = -lp.c;
    return res;
  }

  RevisedSimplex simplex(sf.a, sf.b, tol);
  simplex.start_artificial();
  Vector phase1 = Vector::Zero(cols + m);
  phase1.tail(m).setOnes();
  std::vector<bool> allowed(static_cast<std::size_t>(cols + m), true);
  int unb = -1;
  simplex.iterate(phase1, allowed, unb);
  simplex.refactor();
  const Vector x1 = simplex.primal();
  const double infeas = x1.tail(m).sum();
  if (infeas > tol.feasibility * (1.0 + sf.b.cwiseAbs().maxCoeff())) {
    const Vector y = simplex.duals(phase1);
    const Vector lam = -(sf.sign.array() * y.array()).matrix();
    res.status = LPStatus::infeasible;
    res.optimum = kInf;
    for (Eigen::Index i = 0; i < sf.m_eq; ++i) res.dual_eq(sf.eq_origin[static_cast<std::size_t>(i)]) = lam(i);
    res.dual_in = lam.tail(sf.m_in);
    res.iterations = simplex.iterations();
    return res;
  }

  simplex.expel_artificials();
  for (Eigen::Index j = cols; j < cols + m; ++j) allowed[static_cast<std::size_t>(j)] = false;
  Vector phase2 = Vector::Zero(cols + m);
  phase2.head(cols) = sf.cost;
  const auto outcome = simplex.iterate(phase2, allowed, unb);
  simplex.refactor();
  res.iterations = simplex.iterations();
  const Vector x = simplex.primal();
  const Vector z = x.head(n) - x.segment(n, n);

  if (outcome == RevisedSimplex::Outcome::unbounded) {
    const Vector dir = simplex.binv() * simplex.column(unb);
    Vector xr = Vector::Zero(cols + m);
    xr(unb) = 1.0;
    for (Eigen::Index i = 0; i < m; ++i) xr(simplex.basis()[static_cast<std::size_t>(i)]) -= dir(i);
    res.status = LPStatus::unbounded;
    res.optimum = -kInf;
    res.solution = z;
    res.ray = xr.head(n) - xr.segment(n, n);
    const double rn = res.ray.norm();
    if (rn > 0.0) res.ray /= rn;
    return res;
  }

  const Vector y = simplex.duals(phase2);
  const Vector lam = (sf.sign.array() * y.array()).matrix();
  for (Eigen::Index i = 0; i < sf.m_eq; ++i) res.dual_eq(sf.eq_origin[static_cast<std::size_t>(i)]) = lam(i);
  res.dual_in = lam.tail(sf.m_in);
  res.status = LPStatus::optimal;
  res.solution = z;
  res.optimum = lp.c.dot(z);
  res.primal_residual = std::max(0.0, max_violation(lp, z));
  const double dual_obj = lp.b_eq.dot(res.dual_eq) + lp.b_in.dot(res.dual_in);
  res.duality_gap = std::abs(res.optimum - dual_obj);
  const double scale = 1.0 + std::abs(res.optimum);
  const double data_scale = 1.0 + std::max(lp.b_eq.size() ? lp.b_eq.cwiseAbs().maxCoeff() : 0.0,
                                           lp.b_in.size() ? lp.b_in.cwiseAbs().maxCoeff() : 0.0);
  if (res.primal_residual > tol.feasibility * data_scale || res.duality_gap > tol.duality_gap * scale * data_scale) {
    throw LPStallError("lp_solve: certificate check failed (residual " + std::to_string(res.primal_residual) +
                       ", gap " + std::to_string(res.duality_gap) + ")");
  }
  return res;
}

namespace {

// Visits every k-subset of {0..m-1} in lexicographic order.
template <typename F>
void for_each_subset(int m, int k, F&& visit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  if (k > m) return;
  while (true) {
    visit(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

double binomial(int m, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (m - k + i) / i;
  return r;
}

}  // namespace

std::vector<Vector> vertex_enumerate(const Matrix& a_eq, const Vector& b_eq, const Matrix& a_in,
                                     const Vector& b_in, std::size_t max_vertices, const Tolerances& tol) {
  const Eigen::Index n = std::max(a_eq.cols(), a_in.cols());
  if ((a_eq.rows() > 0 && a_eq.cols() != n) || (a_in.rows() > 0 && a_in.cols() != n) ||
      a_eq.rows() != b_eq.size() || a_in.rows() != b_in.size()) {
    throw std::invalid_argument("vertex_enumerate: inconsistent dimensions");
  }
  if (n > 12 || a_eq.rows() + a_in.rows() > 40) throw ScaleError("vertex_enumerate: beyond desk scale");

  std::vector<int> keep;
  if (a_eq.rows() > 0) keep = independent_rows(a_eq, tol.activity);
  const int r = static_cast<int>(keep.size());
  const int k = static_cast<int>(n) - r;
  const int m_in = static_cast<int>(a_in.rows());
  std::vector<Vector> out;
  if (k < 0 || k > m_in) return out;
  if (binomial(m_in, k) > 5e6) throw ScaleError("vertex_enumerate: too many candidate bases");

  Matrix sys(n, n);
  Vector rhs(n);
  for (int i = 0; i < r; ++i) {
    sys.row(i) = a_eq.row(keep[static_cast<std::size_t>(i)]);
    rhs(i) = b_eq(keep[static_cast<std::size_t>(i)]);
  }
  const double eq_scale = 1.0 + (b_eq.size() ? b_eq.cwiseAbs().maxCoeff() : 0.0);
  const double in_scale = 1.0 + (b_in.size() ? b_in.cwiseAbs().maxCoeff() : 0.0);
  for_each_subset(m_in, k, [&](const std::vector<int>& subset) {
    for (int i = 0; i < k; ++i) {
      sys.row(r + i) = a_in.row(subset[static_cast<std::size_t>(i)]);
      rhs(r + i) = b_in(subset[static_cast<std::size_t>(i)]);
    }
    Vector z;
    try {
      z = solve_linear(sys, rhs, tol.pivot);
    } catch (const SingularMatrixError&) {
      return;
    }
    if (a_eq.rows() > 0 && (a_eq * z - b_eq).cwiseAbs().maxCoeff() > tol.feasibility * eq_scale) return;
    if (a_in.rows() > 0 && (a_in * z - b_in).maxCoeff() > tol.feasibility * in_scale) return;
    for (const Vector& v : out) {
      if ((v - z).cwiseAbs().maxCoeff() <= tol.dedup * (1.0 + v.cwiseAbs().maxCoeff())) return;
    }
    out.push_back(z);
    if (out.size() > max_vertices) throw ScaleError("vertex_enumerate: vertex count exceeds bound");
  });
  std::sort(out.begin(), out.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  return out;
}

}  // namespace nogap
