#include "nogap/cones.hpp"

#include "nogap/lp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nogap {

std::string to_string(Factor f) {
  switch (f) {
    case Factor::free: return "free";
    case Factor::nonpos: return "nonpos";
    case Factor::zero: return "zero";
  }
  return "?";
}

PolyhedralSet PolyhedralSet::product(std::vector<Factor> factors) {
  if (factors.empty()) throw std::invalid_argument("PolyhedralSet: empty product");
  PolyhedralSet k;
  k.dim_ = static_cast<int>(factors.size());
  k.is_product_ = true;
  k.factors_ = std::move(factors);
  const Eigen::Index n = k.dim_;
  const auto na = std::count(k.factors_.begin(), k.factors_.end(), Factor::nonpos);
  const auto nc = std::count(k.factors_.begin(), k.factors_.end(), Factor::zero);
  k.a_ = Matrix::Zero(na, n);
  k.c_ = Matrix::Zero(nc, n);
  k.b_ = Vector::Zero(na);
  k.e_ = Vector::Zero(nc);
  Eigen::Index ia = 0, ic = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (k.factors_[static_cast<std::size_t>(i)] == Factor::nonpos) k.a_(ia++, i) = 1.0;
    if (k.factors_[static_cast<std::size_t>(i)] == Factor::zero) k.c_(ic++, i) = 1.0;
  }
  return k;
}

PolyhedralSet PolyhedralSet::hform(Matrix a, Vector b, Matrix c, Vector e) {
  const Eigen::Index n = std::max(a.cols(), c.cols());
  if (n == 0) throw std::invalid_argument("PolyhedralSet: zero dimension");
  if (a.rows() == 0) a.resize(0, n);
  if (c.rows() == 0) c.resize(0, n);
  if (a.cols() != n || c.cols() != n || a.rows() != b.size() || c.rows() != e.size()) {
    throw std::invalid_argument("PolyhedralSet: dimension mismatch in H-form");
  }
  require_finite(a, "PolyhedralSet A");
  require_finite(b, "PolyhedralSet b");
  require_finite(c, "PolyhedralSet C");
  require_finite(e, "PolyhedralSet e");
  PolyhedralSet k;
  k.dim_ = static_cast<int>(n);
  k.a_ = std::move(a);
  k.b_ = std::move(b);
  k.c_ = std::move(c);
  k.e_ = std::move(e);
  return k;
}

PolyhedralSet PolyhedralSet::to_hform() const { return hform(a_, b_, c_, e_); }

bool PolyhedralSet::is_cone() const {
  return (b_.size() == 0 || b_.cwiseAbs().maxCoeff() == 0.0) && (e_.size() == 0 || e_.cwiseAbs().maxCoeff() == 0.0);
}

bool PolyhedralSet::empty() const {
  if (is_product_) return false;
  LinearProgram lp(dim_);
  for (Eigen::Index i = 0; i < a_.rows(); ++i) lp.add_le(a_.row(i).transpose(), b_(i));
  for (Eigen::Index i = 0; i < c_.rows(); ++i) lp.add_eq(c_.row(i).transpose(), e_(i));
  return lp_solve(lp).status == LPStatus::infeasible;
}

std::string PolyhedralSet::describe() const {
  std::ostringstream os;
  if (is_product_) {
    os << "product(";
    for (std::size_t i = 0; i < factors_.size(); ++i) os << (i ? "," : "") << to_string(factors_[i]);
    os << ")";
  } else {
    os << "hform(dim=" << dim_ << ", ineq=" << a_.rows() << ", eq=" << c_.rows() << ")";
  }
  return os.str();
}

void require_nonempty(const PolyhedralSet& k, const char* what) {
  if (k.empty()) throw std::invalid_argument(std::string(what) + ": set is empty");
}

namespace {

void check_dim(const PolyhedralSet& k, const Vector& y, const char* what) {
  if (y.size() != k.dim()) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(k.dim()) + ", got " +
                                std::to_string(y.size()));
  }
  require_finite(y, what);
}

double violation_of(const PolyhedralSet& k, const Vector& y) {
  double v = 0.0;
  if (k.a().rows() > 0) v = std::max(v, (k.a() * y - k.b()).maxCoeff());
  if (k.c().rows() > 0) v = std::max(v, (k.c() * y - k.e()).cwiseAbs().maxCoeff());
  return v;
}

// Primal active-set method for min 1/2 |z - y|^2 over the H-form.
Vector project_hform(const PolyhedralSet& k, const Vector& y) {
  const Eigen::Index n = k.dim();
  LinearProgram lp(n);
  for (Eigen::Index i = 0; i < k.a().rows(); ++i) lp.add_le(k.a().row(i).transpose(), k.b()(i));
  for (Eigen::Index i = 0; i < k.c().rows(); ++i) lp.add_eq(k.c().row(i).transpose(), k.e()(i));
  const LPResult start = lp_solve(lp);
  if (start.status == LPStatus::infeasible) throw std::invalid_argument("project: set is empty");
  Vector z = start.solution;

  const std::vector<int> eq_rows = independent_rows(k.c(), 1e-9);
  Matrix ceq(static_cast<Eigen::Index>(eq_rows.size()), n);
  for (std::size_t i = 0; i < eq_rows.size(); ++i) ceq.row(static_cast<Eigen::Index>(i)) = k.c().row(eq_rows[i]);

  std::vector<int> work;
  const double scale = 1.0 + y.cwiseAbs().maxCoeff() + z.cwiseAbs().maxCoeff();
  for (int iter = 0; iter < 2000; ++iter) {
    Matrix m(ceq.rows() + static_cast<Eigen::Index>(work.size()), n);
    m.topRows(ceq.rows()) = ceq;
    for (std::size_t i = 0; i < work.size(); ++i) m.row(ceq.rows() + static_cast<Eigen::Index>(i)) = k.a().row(work[i]);
    const Matrix basis = null_space_basis(m, 1e-10);
    const Vector p = basis * (basis.transpose() * (y - z));
    if (p.norm() <= 1e-13 * scale) {
      if (work.empty()) return z;
      // y - z = m^T lambda; inequality multipliers must be nonnegative
      const Vector lambda = m.transpose().completeOrthogonalDecomposition().solve(y - z);
      Eigen::Index worst = -1;
      double most = -1e-12 * scale;
      for (std::size_t i = 0; i < work.size(); ++i) {
        const double li = lambda(ceq.rows() + static_cast<Eigen::Index>(i));
        if (li < most) {
          most = li;
          worst = static_cast<Eigen::Index>(i);
        }
      }
      if (worst < 0) return z;
      work.erase(work.begin() + worst);
      continue;
    }
    double alpha = 1.0;
    int block = -1;
    for (Eigen::Index i = 0; i < k.a().rows(); ++i) {
      if (std::find(work.begin(), work.end(), static_cast<int>(i)) != work.end()) continue;
      const double ap = k.a().row(i).dot(p);
      if (ap <= 1e-14 * scale) continue;
      const double room = std::max(0.0, k.b()(i) - k.a().row(i).dot(z));
      if (room / ap < alpha) {
        alpha = room / ap;
        block = static_cast<int>(i);
      }
    }
    z += alpha * p;
    if (block >= 0) work.push_back(block);
  }
  throw LPStallError("project: active-set iteration limit reached");
}

}  // namespace

Vector project(const PolyhedralSet& k, const Vector& y) {
  check_dim(k, y, "project");
  if (k.is_product()) {
    Vector z = y;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      switch (k.factors()[static_cast<std::size_t>(i)]) {
        case Factor::free: break;
        case Factor::nonpos: z(i) = std::min(z(i), 0.0); break;
        case Factor::zero: z(i) = 0.0; break;
      }
    }
    return z;
  }
  return project_hform(k, y);
}

double distance(const PolyhedralSet& k, const Vector& y) {
  if (violation_of(k, y) <= 0.0) return 0.0;
  return (project(k, y) - y).norm();
}

ConeMembershipCertificate contains(const PolyhedralSet& k, const Vector& y, double tol) {
  check_dim(k, y, "contains");
  ConeMembershipCertificate cert;
  cert.violation = violation_of(k, y);
  cert.member = cert.violation <= tol;
  cert.nearest_point = cert.violation <= 0.0 ? y : project(k, y);
  return cert;
}

PolyhedralSet tangent_cone(const PolyhedralSet& k, const Vector& y, double tol) {
  check_dim(k, y, "tangent_cone");
  const double act = tol * (1.0 + y.cwiseAbs().maxCoeff());
  if (violation_of(k, y) > act) throw std::invalid_argument("tangent_cone: point is not in the set");
  if (k.is_product()) {
    std::vector<Factor> f = k.factors();
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] == Factor::nonpos && y(static_cast<Eigen::Index>(i)) < -act) f[i] = Factor::free;
    }
    return PolyhedralSet::product(std::move(f));
  }
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < k.a().rows(); ++i) {
    if (k.a().row(i).dot(y) - k.b()(i) >= -act) active.push_back(i);
  }
  Matrix a(static_cast<Eigen::Index>(active.size()), k.dim());
  for (std::size_t i = 0; i < active.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = k.a().row(active[i]);
  return PolyhedralSet::hform(a, Vector::Zero(a.rows()), k.c(), Vector::Zero(k.c().rows()));
}

PolyhedralSet second_order_tangent(const PolyhedralSet& k, const Vector& y, const Vector& d, double tol) {
  const PolyhedralSet t = tangent_cone(k, y, tol);
  check_dim(t, d, "second_order_tangent");
  if (violation_of(t, d) > tol * (1.0 + d.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("second_order_tangent: direction is not in the tangent cone");
  }
  return tangent_cone(t, d, tol);
}

namespace {

void add_unique(std::vector<Vector>& out, const Vector& r) {
  for (const Vector& q : out) {
    if ((q - r).cwiseAbs().maxCoeff() <= 1e-8) return;
  }
  out.push_back(r);
}

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

ConeGenerators cone_generators(const PolyhedralSet& cone, double tol) {
  if (!cone.is_cone()) throw std::invalid_argument("cone_generators: set is not a cone");
  const Eigen::Index n = cone.dim();
  ConeGenerators g;
  if (cone.is_product()) {
    std::vector<Eigen::Index> lin;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Factor f = cone.factors()[static_cast<std::size_t>(i)];
      if (f == Factor::free) lin.push_back(i);
      if (f == Factor::nonpos) g.rays.push_back(-Vector::Unit(n, i));
    }
    g.lineality = Matrix::Zero(n, static_cast<Eigen::Index>(lin.size()));
    for (std::size_t j = 0; j < lin.size(); ++j) g.lineality(lin[j], static_cast<Eigen::Index>(j)) = 1.0;
    return g;
  }
  const Matrix& a = cone.a();
  Matrix all(a.rows() + cone.c().rows(), n);
  all << a, cone.c();
  g.lineality = null_space_basis(all, tol);

  Matrix e(cone.c().rows() + g.lineality.cols(), n);
  e << cone.c(), g.lineality.transpose();
  const int re = rank(e, tol);
  const int need = static_cast<int>(n) - 1 - re;
  const int m = static_cast<int>(a.rows());
  if (need < 0 || need > m) return g;
  if (binomial(m, need) > 2e6) throw ScaleError("cone_generators: too many row subsets");

  std::vector<int> pick(static_cast<std::size_t>(need));
  for (int i = 0; i < need; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    Matrix s(e.rows() + need, n);
    s.topRows(e.rows()) = e;
    for (int i = 0; i < need; ++i) s.row(e.rows() + i) = a.row(pick[static_cast<std::size_t>(i)]);
    const Matrix nb = null_space_basis(s, tol);
    if (nb.cols() == 1) {
      for (double sign : {1.0, -1.0}) {
        const Vector r = sign * nb.col(0);
        if (a.rows() == 0 || (a * r).maxCoeff() <= tol) add_unique(g.rays, r);
      }
    }
    int i = need - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == m - need + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < need; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  std::sort(g.rays.begin(), g.rays.end(), [](const Vector& x, const Vector& y) {
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  return g;
}

}  // namespace nogap
