#include "nogap/bilevel.hpp"

#include "bilevel_internal.hpp"
#include "nogap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nogap {

namespace detail {

Vector values(const SmoothMapPtr& f, const Vector& z) { return f ? f->value(z) : Vector(0); }

Matrix jacobian(const SmoothMapPtr& f, const Vector& z) { return f ? f->jacobian(z) : Matrix(0, z.size()); }

Vector second_forms(const SmoothMapPtr& f, const Vector& z, const Vector& d) {
  return f ? f->second_form(z, d) : Vector(0);
}

Matrix weighted_hessian(const SmoothMapPtr& f, const Vector& z, const Vector& w) {
  Matrix out = Matrix::Zero(z.size(), z.size());
  if (!f) return out;
  for (int k = 0; k < f->out_dim(); ++k) {
    if (w(k) != 0.0) out += w(k) * f->hessian(z, k);
  }
  return out;
}

Matrix third_action(const SmoothMapPtr& f, const Vector& z, const Vector& d) {
  if (!f) return Matrix(0, z.size());
  if (f->has_third()) return f->third(z, d);
  return third_by_differences(*f, z, d);
}

Matrix sensitivity_rhs(const LowerData& ld, const Diag& W) {
  const Eigen::Index m = ld.Lyy.rows(), n = ld.Lyx.cols(), r = ld.Jyh.rows(), s = ld.Jyg.rows();
  Matrix rhs(m + r + s, n);
  rhs.topRows(m) = ld.Lyx;
  rhs.middleRows(m, r) = ld.Jxh;
  for (Eigen::Index i = 0; i < s; ++i) {
    rhs.row(m + r + i) = W[static_cast<std::size_t>(i)] ? Matrix::Zero(1, n) : Matrix(ld.Jxg.row(i));
  }
  return rhs;
}

SecondOrderTerms second_order_terms(const BilevelContext& ctx, const Vector& dz, const Vector& dmu,
                                    const Vector& dxi) {
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m;
  const Vector z = bp.z_star();
  SecondOrderTerms t;
  Vector grad = detail::third_action(bp.f, z, dz).row(0).transpose();
  if (bp.r() > 0) grad += detail::third_action(bp.h, z, dz).transpose() * ctx.kkt.mu;
  if (bp.s() > 0) grad += detail::third_action(bp.g, z, dz).transpose() * ctx.kkt.xi;
  t.q_c = grad.segment(n, m);
  for (int j = 0; j < bp.r(); ++j) {
    if (dmu(j) != 0.0) t.q_c += 2.0 * dmu(j) * (bp.h->hessian(z, j) * dz).segment(n, m);
  }
  for (int k = 0; k < bp.s(); ++k) {
    if (dxi(k) != 0.0) t.q_c += 2.0 * dxi(k) * (bp.g->hessian(z, k) * dz).segment(n, m);
  }
  t.q_d = second_forms(bp.h, z, dz);
  t.q_e = second_forms(bp.g, z, dz);
  return t;
}

double scale_of(const Vector& v) { return 1.0 + (v.size() ? v.cwiseAbs().maxCoeff() : 0.0); }

}  // namespace detail

using detail::scale_of;

Vector BilevelProblem::z_star() const { return join(x_star, y_star); }

Vector BilevelProblem::join(const Vector& x, const Vector& y) const {
  Vector z(x.size() + y.size());
  z << x, y;
  return z;
}

void BilevelProblem::validate(const Tolerances& tol) const {
  if (n <= 0 || m <= 0) throw std::invalid_argument("bilevel problem: n and m must be positive");
  if (x_star.size() != n || y_star.size() != m) throw std::invalid_argument("bilevel problem: reference point size");
  if (!F || !f) throw std::invalid_argument("bilevel problem: F and f are required");
  const std::pair<const char*, const SmoothMapPtr*> maps[] = {{"F", &F}, {"G", &G}, {"H", &H},
                                                             {"f", &f}, {"g", &g}, {"h", &h}};
  for (const auto& [name, ptr] : maps) {
    if (*ptr && (*ptr)->in_dim() != n + m) {
      throw std::invalid_argument(std::string("bilevel problem: ") + name + " must act on (x, y) of size " +
                                  std::to_string(n + m));
    }
  }
  if (F->out_dim() != 1 || f->out_dim() != 1) throw std::invalid_argument("bilevel problem: F and f must be scalar");
  const Vector z = z_star();
  require_finite(z, "bilevel reference point");
  const double feas = tol.feasibility * scale_of(z);
  if (r() > 0 && h->value(z).cwiseAbs().maxCoeff() > feas) {
    throw std::invalid_argument("bilevel problem: y* violates h(x*, y*) = 0");
  }
  if (s() > 0 && g->value(z).maxCoeff() > feas) {
    throw std::invalid_argument("bilevel problem: y* violates g(x*, y*) <= 0");
  }
  if (p() > 0 && H->value(z).cwiseAbs().maxCoeff() > feas) {
    throw std::invalid_argument("bilevel problem: (x*, y*) violates H = 0");
  }
  if (q() > 0 && G->value(z).maxCoeff() > feas) {
    throw std::invalid_argument("bilevel problem: (x*, y*) violates G <= 0");
  }
  if (mu_star && mu_star->size() != r()) throw std::invalid_argument("bilevel problem: mu* size");
  if (xi_star && xi_star->size() != s()) throw std::invalid_argument("bilevel problem: xi* size");
}

LowerData lower_data(const BilevelProblem& bp, const Vector& x, const KKTPoint& k) {
  const int n = bp.n, m = bp.m;
  const Vector z = bp.join(x, k.y);
  LowerData ld;
  const Matrix jf = bp.f->jacobian(z);
  const Matrix jh = detail::jacobian(bp.h, z);
  const Matrix jg = detail::jacobian(bp.g, z);
  ld.Jxh = jh.leftCols(n);
  ld.Jyh = jh.rightCols(m);
  ld.Jxg = jg.leftCols(n);
  ld.Jyg = jg.rightCols(m);
  ld.grad_y_L = jf.rightCols(m).transpose();
  if (bp.r() > 0) ld.grad_y_L += ld.Jyh.transpose() * k.mu;
  if (bp.s() > 0) ld.grad_y_L += ld.Jyg.transpose() * k.xi;
  Matrix hl = bp.f->hessian(z, 0);
  if (bp.r() > 0) hl += detail::weighted_hessian(bp.h, z, k.mu);
  if (bp.s() > 0) hl += detail::weighted_hessian(bp.g, z, k.xi);
  ld.Lyy = 0.5 * (hl.block(n, n, m, m) + hl.block(n, n, m, m).transpose());
  ld.Lyx = hl.block(n, 0, m, n);
  ld.h = detail::values(bp.h, z);
  ld.g = detail::values(bp.g, z);
  return ld;
}

namespace {

Vector residual_of(const LowerData& ld, const Vector& xi) {
  const Eigen::Index m = ld.grad_y_L.size(), r = ld.h.size(), s = ld.g.size();
  Vector out(m + r + s);
  out.head(m) = ld.grad_y_L;
  out.segment(m, r) = ld.h;
  for (Eigen::Index i = 0; i < s; ++i) out(m + r + i) = ld.g(i) - std::min(ld.g(i) + xi(i), 0.0);
  return out;
}

double sup_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::vector<int> active_lower(const BilevelProblem& bp, const Vector& z, const Tolerances& tol) {
  std::vector<int> out;
  if (bp.s() == 0) return out;
  const Vector g = bp.g->value(z);
  const double act = tol.feasibility * scale_of(z);
  for (int i = 0; i < bp.s(); ++i) {
    if (g(i) >= -act) out.push_back(i);
  }
  return out;
}

// Rows [Jyh; Jyg(rows)] of the lower constraint gradients in y.
Matrix lower_gradients(const BilevelProblem& bp, const Vector& z, const std::vector<int>& rows) {
  const Matrix jh = detail::jacobian(bp.h, z);
  const Matrix jg = detail::jacobian(bp.g, z);
  Matrix out(jh.rows() + static_cast<Eigen::Index>(rows.size()), bp.m);
  out.topRows(jh.rows()) = jh.rightCols(bp.m);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(jh.rows() + static_cast<Eigen::Index>(i)) = jg.row(rows[i]).rightCols(bp.m);
  }
  return out;
}

KKTPoint split_multipliers(const BilevelProblem& bp, const Vector& y, const Vector& v) {
  KKTPoint k;
  k.y = y;
  k.mu = v.head(bp.r());
  k.xi = v.tail(bp.s());
  return k;
}

}  // namespace

Vector kkt_residual(const BilevelProblem& bp, const Vector& x, const KKTPoint& k) {
  return residual_of(lower_data(bp, x, k), k.xi);
}

MultiplierPolytope multiplier_polytope(const BilevelProblem& bp, const Tolerances& tol) {
  const Vector z = bp.z_star();
  const int r = bp.r(), s = bp.s(), m = bp.m;
  MultiplierPolytope poly;
  poly.active = active_lower(bp, z, tol);
  const Matrix jh = detail::jacobian(bp.h, z);
  const Matrix jg = detail::jacobian(bp.g, z);
  const Vector grad_f = bp.f->jacobian(z).rightCols(m).transpose();

  std::vector<char> is_active(static_cast<std::size_t>(s), 0);
  for (int i : poly.active) is_active[static_cast<std::size_t>(i)] = 1;
  const int inactive = s - static_cast<int>(poly.active.size());

  poly.a_eq = Matrix::Zero(m + inactive, r + s);
  poly.b_eq = Vector::Zero(m + inactive);
  poly.a_eq.topLeftCorner(m, r) = jh.rightCols(m).transpose();
  poly.a_eq.block(0, r, m, s) = jg.rightCols(m).transpose();
  poly.b_eq.head(m) = -grad_f;
  int row = m;
  for (int i = 0; i < s; ++i) {
    if (!is_active[static_cast<std::size_t>(i)]) poly.a_eq(row++, r + i) = 1.0;
  }
  poly.a_in = Matrix::Zero(static_cast<Eigen::Index>(poly.active.size()), r + s);
  poly.b_in = Vector::Zero(poly.a_in.rows());
  for (std::size_t i = 0; i < poly.active.size(); ++i) poly.a_in(static_cast<Eigen::Index>(i), r + poly.active[i]) = -1.0;

  if (r + s == 0) {
    if (sup_norm(grad_f) > tol.kkt * scale_of(grad_f)) {
      throw NotKKTError("y* is not stationary for the unconstrained lower problem");
    }
    poly.vertices.push_back(Vector(0));
    return poly;
  }
  poly.vertices = vertex_enumerate(poly.a_eq, poly.b_eq, poly.a_in, poly.b_in, 64, tol);
  if (poly.vertices.empty()) {
    LinearProgram lp(r + s);
    for (Eigen::Index i = 0; i < poly.a_eq.rows(); ++i) lp.add_eq(poly.a_eq.row(i).transpose(), poly.b_eq(i));
    for (Eigen::Index i = 0; i < poly.a_in.rows(); ++i) lp.add_le(poly.a_in.row(i).transpose(), poly.b_in(i));
    if (lp_solve(lp, tol).status == LPStatus::optimal) {
      throw AssumptionError("multiplier set contains a line: gradients of h are dependent");
    }
    throw NotKKTError("no multiplier satisfies the lower KKT conditions at (x*, y*)");
  }
  return poly;
}

CQReport cq_report(const BilevelProblem& bp, std::uint64_t seed, const Tolerances& tol) {
  const Vector z = bp.z_star();
  const int m = bp.m, r = bp.r();
  CQReport cq;
  const MultiplierPolytope poly = multiplier_polytope(bp, tol);
  cq.active = poly.active;
  cq.vertices = poly.vertices;

  // MFCQ: independent h gradients plus a strictly decreasing direction.
  const Matrix grads = lower_gradients(bp, z, cq.active);
  const Matrix jyh = grads.topRows(r);
  const bool h_independent = r == 0 || rank(jyh, 1e-9) == r;
  cq.mfcq_witness = Vector::Zero(m);
  if (cq.active.empty()) {
    cq.mfcq = h_independent;
    cq.mfcq_slack = 1.0;
  } else {
    LinearProgram lp(m + 1);
    lp.c(m) = -1.0;
    for (int i = 0; i < r; ++i) {
      Vector row = Vector::Zero(m + 1);
      row.head(m) = jyh.row(i).transpose();
      lp.add_eq(row, 0.0);
    }
    for (std::size_t i = 0; i < cq.active.size(); ++i) {
      Vector row = Vector::Zero(m + 1);
      row.head(m) = grads.row(r + static_cast<Eigen::Index>(i)).transpose();
      row(m) = 1.0;
      lp.add_le(row, 0.0);
    }
    for (int j = 0; j < m; ++j) {
      Vector e = Vector::Zero(m + 1);
      e(j) = 1.0;
      lp.add_le(e, 1.0);
      lp.add_le(-e, 1.0);
    }
    Vector e = Vector::Zero(m + 1);
    e(m) = 1.0;
    lp.add_le(e, 1.0);
    const LPResult res = lp_solve(lp, tol);
    if (res.status == LPStatus::optimal) {
      cq.mfcq_slack = res.solution(m);
      cq.mfcq_witness = res.solution.head(m);
    }
    cq.mfcq = h_independent && cq.mfcq_slack > tol.certificate;
  }

  // LICQ
  cq.licq_rows = static_cast<int>(grads.rows());
  cq.licq_rank = rank(grads, 1e-9);
  cq.licq = cq.licq_rank == cq.licq_rows;

  // CRCQ: every subset of the active gradients keeps its rank near z*.
  const int rows = cq.licq_rows;
  if (rows <= 12) {
    const int subsets = 1 << rows;
    std::vector<int> ref_rank(static_cast<std::size_t>(subsets));
    auto subset_rank = [&](const Matrix& gm, int mask) {
      std::vector<int> idx;
      for (int b = 0; b < rows; ++b) {
        if (mask & (1 << b)) idx.push_back(b);
      }
      if (idx.empty()) return 0;
      Matrix sub(static_cast<Eigen::Index>(idx.size()), m);
      for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = gm.row(idx[i]);
      return rank(sub, 1e-7);
    };
    for (int mask = 0; mask < subsets; ++mask) ref_rank[static_cast<std::size_t>(mask)] = subset_rank(grads, mask);
    cq.crcq_samples = 32;
    cq.crcq_subsets = subsets;
    cq.crcq_consistent = true;
    const double radius = 1e-3 * scale_of(z);
    for (const Vector& zs : ball_points(z, radius, cq.crcq_samples, seed ^ 0xc3c3ULL)) {
      const Matrix gs = lower_gradients(bp, zs, cq.active);
      for (int mask = 1; mask < subsets && cq.crcq_consistent; ++mask) {
        if (subset_rank(gs, mask) != ref_rank[static_cast<std::size_t>(mask)]) cq.crcq_consistent = false;
      }
    }
  }

  // SSOSC at every multiplier vertex.
  cq.ssosc = !cq.vertices.empty();
  cq.ssosc_margin = std::numeric_limits<double>::infinity();
  for (const Vector& v : cq.vertices) {
    VertexSsosc vs;
    const KKTPoint k = split_multipliers(bp, bp.y_star, v);
    vs.mu = k.mu;
    vs.xi = k.xi;
    for (int i : cq.active) {
      if (k.xi(i) > tol.feasibility) vs.strongly_active.push_back(i);
    }
    const Matrix eqs = lower_gradients(bp, z, vs.strongly_active);
    const Matrix basis = eqs.rows() ? null_space_basis(eqs, 1e-9) : Matrix(Matrix::Identity(m, m));
    vs.result = pd_on_subspace(lower_data(bp, bp.x_star, k).Lyy, basis, tol.pivot);
    if (vs.result.verdict != Definiteness::positive) cq.ssosc = false;
    cq.ssosc_margin = std::min(cq.ssosc_margin, vs.result.margin);
    cq.ssosc_vertices.push_back(std::move(vs));
  }
  return cq;
}

KKTPoint reference_kkt(const BilevelProblem& bp, const Tolerances& tol) {
  KKTPoint k;
  k.y = bp.y_star;
  if (bp.mu_star || bp.xi_star) {
    k.mu = bp.mu_star.value_or(Vector::Zero(bp.r()));
    k.xi = bp.xi_star.value_or(Vector::Zero(bp.s()));
    if (k.xi.size() && k.xi.minCoeff() < -tol.kkt) throw NotKKTError("supplied xi* has a negative entry");
  } else {
    const MultiplierPolytope poly = multiplier_polytope(bp, tol);
    k = split_multipliers(bp, bp.y_star, poly.vertices.front());
  }
  k.residual = sup_norm(kkt_residual(bp, bp.x_star, k));
  if (k.residual > tol.kkt * scale_of(bp.z_star())) {
    std::ostringstream os;
    os << "KKT residual " << k.residual << " at the reference point exceeds " << tol.kkt;
    throw NotKKTError(os.str());
  }
  return k;
}

std::string to_string(const Diag& w) {
  std::string out = "[";
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(w[i]);
  }
  return out + "]";
}

std::vector<Diag> enumerate_W(const BilevelProblem& bp, const KKTPoint& k, const Tolerances& tol) {
  const int s = bp.s();
  Diag base(static_cast<std::size_t>(s), 0);
  std::vector<int> degenerate;
  if (s > 0) {
    const Vector zv = bp.g->value(bp.join(bp.x_star, k.y)) + k.xi;
    for (int i = 0; i < s; ++i) {
      if (zv(i) < -tol.degeneracy) base[static_cast<std::size_t>(i)] = 1;
      else if (std::abs(zv(i)) <= tol.degeneracy) degenerate.push_back(i);
    }
  }
  if (degenerate.size() > 16) {
    throw ScaleError(std::to_string(degenerate.size()) + " degenerate complementarity indices exceed the limit of 16");
  }
  std::vector<Diag> out;
  const std::size_t count = std::size_t{1} << degenerate.size();
  for (std::size_t mask = 0; mask < count; ++mask) {
    Diag w = base;
    for (std::size_t b = 0; b < degenerate.size(); ++b) {
      w[static_cast<std::size_t>(degenerate[b])] = (mask >> b) & 1U ? 1 : 0;
    }
    out.push_back(std::move(w));
  }
  return out;
}

Matrix sensitivity_matrix(const LowerData& ld, const Diag& W) {
  const Eigen::Index m = ld.Lyy.rows(), r = ld.Jyh.rows(), s = ld.Jyg.rows();
  Matrix a = Matrix::Zero(m + r + s, m + r + s);
  a.topLeftCorner(m, m) = ld.Lyy;
  a.block(0, m, m, r) = ld.Jyh.transpose();
  a.block(0, m + r, m, s) = ld.Jyg.transpose();
  a.block(m, 0, r, m) = ld.Jyh;
  for (Eigen::Index i = 0; i < s; ++i) {
    if (W[static_cast<std::size_t>(i)]) a(m + r + i, m + r + i) = -1.0;
    else a.block(m + r + i, 0, 1, m) = ld.Jyg.row(i);
  }
  return a;
}

bool SensitivityPiece::valid_for(const Vector& dx, double tol) const {
  if (valid_a.rows() == 0) return true;
  return ((valid_a * dx).array() <= tol).all();
}

SensitivityPiece assemble_sensitivity(const BilevelProblem& bp, const KKTPoint& k, const CQReport& cq,
                                      const Diag& W, const Tolerances& tol) {
  if (!cq.exact()) {
    throw AssumptionError(std::string("sensitivity system needs ") + (cq.ssosc ? "" : "SSOSC ") +
                          (cq.licq ? "" : "LICQ ") + "at the reference point");
  }
  const int m = bp.m, r = bp.r(), s = bp.s();
  const LowerData ld = lower_data(bp, bp.x_star, k);
  SensitivityPiece pc;
  pc.W = W;
  pc.A = sensitivity_matrix(ld, W);
  pc.rhs = detail::sensitivity_rhs(ld, W);
  try {
    pc.H = solve_linear(pc.A, pc.rhs, tol.pivot);
  } catch (const SingularMatrixError&) {
    throw SingularSensitivityError("A(x*, W) is singular for W = " + to_string(W));
  }
  if ((pc.A * pc.H - pc.rhs).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + pc.rhs.lpNorm<Eigen::Infinity>())) {
    throw SingularSensitivityError("A(x*, W) is ill-conditioned for W = " + to_string(W));
  }

  const Vector zv = ld.g + k.xi;
  const Matrix hy = pc.H.topRows(m);
  std::vector<Vector> rows;
  for (int i = 0; i < s; ++i) {
    if (std::abs(zv(i)) > tol.degeneracy) continue;
    // u_i = grad g_i . (d_x, y') + xi'_i with (y', mu', xi') = -H d_x.
    const Vector u = ld.Jxg.row(i).transpose() - hy.transpose() * ld.Jyg.row(i).transpose() -
                     pc.H.row(m + r + i).transpose();
    rows.push_back(W[static_cast<std::size_t>(i)] ? u : Vector(-u));
  }
  pc.valid_a.resize(static_cast<Eigen::Index>(rows.size()), bp.n);
  for (std::size_t i = 0; i < rows.size(); ++i) pc.valid_a.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return pc;
}

namespace {

// Multipliers with the least l1 stationarity residual at (x, y).
std::optional<KKTPoint> least_residual_multipliers(const BilevelProblem& bp, const Vector& x, const Vector& y,
                                                   const Tolerances& tol) {
  const int m = bp.m, r = bp.r(), s = bp.s();
  if (r + s == 0) return std::nullopt;
  const Vector z = bp.join(x, y);
  const Matrix jh = detail::jacobian(bp.h, z);
  const Matrix jg = detail::jacobian(bp.g, z);
  const Vector gv = detail::values(bp.g, z);
  const Vector grad_f = bp.f->jacobian(z).rightCols(m).transpose();
  const int nv = r + s + m;
  LinearProgram lp(nv);
  lp.c.tail(m).setOnes();
  for (int j = 0; j < m; ++j) {
    Vector row = Vector::Zero(nv);
    row.head(r) = jh.col(bp.n + j);
    row.segment(r, s) = jg.col(bp.n + j);
    row(r + s + j) = -1.0;
    lp.add_le(row, -grad_f(j));
    row.head(r + s) *= -1.0;
    lp.add_le(row, grad_f(j));
  }
  const double act = tol.feasibility * scale_of(z);
  for (int i = 0; i < s; ++i) {
    Vector row = Vector::Zero(nv);
    row(r + i) = 1.0;
    if (gv(i) < -act) lp.add_eq(row, 0.0);
    else lp.add_le(-row, 0.0);
  }
  const LPResult res = lp_solve(lp, tol);
  if (res.status != LPStatus::optimal) return std::nullopt;
  return split_multipliers(bp, y, res.solution.head(r + s));
}

}  // namespace

TrackResult kkt_track(const BilevelProblem& bp, const Vector& x, const KKTPoint& start, const TrackOptions& opt) {
  const int m = bp.m, r = bp.r(), s = bp.s();
  const int nv = m + r + s;
  if (x.size() != bp.n) throw std::invalid_argument("kkt_track: x has the wrong size");
  TrackResult out;
  KKTPoint cur = start;
  auto residual = [&](const KKTPoint& k) { return kkt_residual(bp, x, k); };
  Vector res = residual(cur);
  if (opt.reselect_multipliers) {
    if (auto alt = least_residual_multipliers(bp, x, cur.y, opt.tol)) {
      const Vector alt_res = residual(*alt);
      if (alt_res.norm() < res.norm()) {
        cur = *alt;
        res = alt_res;
      }
    }
  }
  auto pack = [&](const KKTPoint& k) {
    Vector v(nv);
    v << k.y, k.mu, k.xi;
    return v;
  };
  auto unpack = [&](const Vector& v) {
    KKTPoint k;
    k.y = v.head(m);
    k.mu = v.segment(m, r);
    k.xi = v.tail(s);
    return k;
  };
  const double target = opt.tol.newton;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    if (sup_norm(res) <= target) {
      cur.residual = sup_norm(res);
      out.point = cur;
      out.iterations = it;
      return out;
    }
    if (it == opt.max_iterations) break;
    const LowerData ld = lower_data(bp, x, cur);
    Diag W(static_cast<std::size_t>(s), 0);
    for (int i = 0; i < s; ++i) W[static_cast<std::size_t>(i)] = ld.g(i) + cur.xi(i) < 0.0 ? 1 : 0;
    const Matrix jac = sensitivity_matrix(ld, W);
    const Vector v = pack(cur);
    const double merit = res.norm();

    auto try_step = [&](const Vector& step) -> bool {
      double alpha = 1.0;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        const KKTPoint trial = unpack(v + alpha * step);
        const Vector tr = residual(trial);
        if (tr.allFinite() && tr.norm() <= (1.0 - 1e-4 * alpha) * merit) {
          cur = trial;
          res = tr;
          return true;
        }
      }
      return false;
    };

    bool moved = false;
    try {
      moved = try_step(solve_linear(jac, Vector(-res), opt.tol.pivot));
    } catch (const SingularMatrixError&) {
    }
    if (!moved) {
      const Matrix normal = jac.transpose() * jac + merit * Matrix::Identity(nv, nv);
      const Vector step = normal.ldlt().solve(-jac.transpose() * res);
      moved = try_step(step);
      ++out.lm_steps;
    }
    if (!moved) {
      throw TrackingError("kkt_track stalled with residual " + std::to_string(sup_norm(res)));
    }
  }
  throw TrackingError("kkt_track did not converge in " + std::to_string(opt.max_iterations) +
                      " iterations (residual " + std::to_string(sup_norm(res)) + ")");
}

BilevelContext analyze(const BilevelProblem& bp, std::uint64_t seed, const Tolerances& tol) {
  bp.validate(tol);
  BilevelContext ctx;
  ctx.problem = std::make_shared<const BilevelProblem>(bp);
  ctx.bp = ctx.problem.get();
  ctx.tol = tol;
  ctx.kkt = reference_kkt(bp, tol);
  ctx.ld = lower_data(bp, bp.x_star, ctx.kkt);
  ctx.cq = cq_report(bp, seed, tol);
  ctx.exact = ctx.cq.exact();
  if (!ctx.exact) {
    if (!ctx.cq.mfcq || !ctx.cq.ssosc || !ctx.cq.crcq_consistent) {
      ctx.fallback_reason = "lower-level MFCQ, SSOSC or CRCQ fails; the solution map is not certified";
    } else {
      ctx.fallback_reason = "LICQ fails; y' and y'' by numeric differencing of kkt_track";
    }
  } else {
    for (const Diag& w : enumerate_W(bp, ctx.kkt, tol)) {
      ctx.pieces.push_back(assemble_sensitivity(bp, ctx.kkt, ctx.cq, w, tol));
    }
  }
  const Vector z = bp.z_star();
  ctx.grad_F = bp.F->jacobian(z).row(0).transpose();
  ctx.hess_F = bp.F->hessian(z, 0);
  ctx.JG = detail::jacobian(bp.G, z);
  ctx.JH = detail::jacobian(bp.H, z);
  ctx.G_val = detail::values(bp.G, z);
  const double act = tol.feasibility * scale_of(z);
  for (int i = 0; i < bp.q(); ++i) {
    if (ctx.G_val(i) >= -act) ctx.active_G.push_back(i);
  }
  return ctx;
}

namespace {

void require_usable(const BilevelContext& ctx) {
  if (!ctx.exact && !(ctx.cq.mfcq && ctx.cq.ssosc && ctx.cq.crcq_consistent)) {
    throw AssumptionError(ctx.fallback_reason);
  }
}

bool same_triple(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + a.lpNorm<Eigen::Infinity>());
}

}  // namespace

FirstOrderJet solution_map_dd1(const BilevelContext& ctx, const Vector& dx) {
  const BilevelProblem& bp = *ctx.bp;
  require_usable(ctx);
  if (dx.size() != bp.n) throw std::invalid_argument("solution_map_dd1: d_x has the wrong size");
  FirstOrderJet jet;
  if (!ctx.exact) {
    jet.y1 = numeric_dd1(ctx, dx);
    jet.numeric = true;
    return jet;
  }
  const int m = bp.m, r = bp.r();
  const double tol = 1e-9 * scale_of(dx);
  Vector first;
  for (const SensitivityPiece& pc : ctx.pieces) {
    if (!pc.valid_for(dx, tol)) continue;
    const Vector t = -pc.H * dx;
    if (jet.accepting.empty()) {
      first = t;
    } else if (!same_triple(first, t)) {
      throw PieceConflictError("pieces " + to_string(jet.accepting.front()) + " and " + to_string(pc.W) +
                               " both accept d_x but disagree");
    }
    jet.accepting.push_back(pc.W);
  }
  if (jet.accepting.empty()) throw PieceConflictError("no sensitivity piece accepts d_x");
  jet.y1 = first.head(m);
  jet.mu1 = first.segment(m, r);
  jet.xi1 = first.tail(bp.s());
  return jet;
}

std::vector<SecondOrderPiece> second_order_pieces(const BilevelContext& ctx, const Vector& dx,
                                                  const FirstOrderJet& j1) {
  if (!ctx.exact) throw AssumptionError("second-order pieces need SSOSC and LICQ");
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m, r = bp.r(), s = bp.s();
  const LowerData& ld = ctx.ld;
  const Vector dz = bp.join(dx, j1.y1);
  const detail::SecondOrderTerms q = detail::second_order_terms(ctx, dz, j1.mu1, j1.xi1);

  const Vector zv = ld.g + ctx.kkt.xi;
  const Vector u = ld.Jxg * dx + ld.Jyg * j1.y1 + j1.xi1;
  const double utol = 1e-9 * scale_of(dz);
  Diag base(static_cast<std::size_t>(s), 0);
  std::vector<int> branch;
  for (int i = 0; i < s; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (zv(i) < -ctx.tol.degeneracy) base[si] = 1;
    else if (zv(i) > ctx.tol.degeneracy) base[si] = 0;
    else if (u(i) < -utol) base[si] = 1;
    else if (u(i) > utol) base[si] = 0;
    else branch.push_back(i);
  }
  if (branch.size() > 16) throw ScaleError("too many second-order branch indices");

  std::vector<SecondOrderPiece> out;
  const std::size_t count = std::size_t{1} << branch.size();
  for (std::size_t mask = 0; mask < count; ++mask) {
    SecondOrderPiece pc;
    pc.W = base;
    for (std::size_t b = 0; b < branch.size(); ++b) {
      pc.W[static_cast<std::size_t>(branch[b])] = (mask >> b) & 1U ? 1 : 0;
    }
    const Matrix a = sensitivity_matrix(ld, pc.W);
    const Matrix rhs = detail::sensitivity_rhs(ld, pc.W);
    Vector b0(m + r + s);
    b0 << q.q_c, q.q_d, q.q_e;
    for (int i = 0; i < s; ++i) {
      if (pc.W[static_cast<std::size_t>(i)]) b0(m + r + i) = 0.0;
    }
    Matrix sol;
    try {
      Matrix both(m + r + s, n + 1);
      both << rhs, b0;
      sol = -solve_linear(a, both, ctx.tol.pivot);
    } catch (const SingularMatrixError&) {
      throw SingularSensitivityError("A(x*, W) is singular for second-order W = " + to_string(pc.W));
    }
    pc.M = sol.leftCols(n);
    pc.c = sol.col(n);
    pc.region_a.resize(static_cast<Eigen::Index>(branch.size()), n);
    pc.region_b.resize(static_cast<Eigen::Index>(branch.size()));
    for (std::size_t b = 0; b < branch.size(); ++b) {
      const int i = branch[b];
      // v_i = q_e + grad g_i . (w_x, y'') + xi''_i, affine in w_x.
      const Vector coef = ld.Jxg.row(i).transpose() + pc.M.topRows(m).transpose() * ld.Jyg.row(i).transpose() +
                          pc.M.row(m + r + i).transpose();
      const double cst = q.q_e(i) + ld.Jyg.row(i).dot(pc.c.head(m)) + pc.c(m + r + i);
      const double sign = pc.W[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      pc.region_a.row(static_cast<Eigen::Index>(b)) = sign * coef.transpose();
      pc.region_b(static_cast<Eigen::Index>(b)) = -sign * cst;
    }
    out.push_back(std::move(pc));
  }
  return out;
}

SolutionMapJet solution_map_dd2(const BilevelContext& ctx, const Vector& dx, const Vector& wx) {
  const BilevelProblem& bp = *ctx.bp;
  if (wx.size() != bp.n) throw std::invalid_argument("solution_map_dd2: w_x has the wrong size");
  const FirstOrderJet j1 = solution_map_dd1(ctx, dx);
  SolutionMapJet jet;
  jet.d_x = dx;
  jet.w_x = wx;
  jet.y1 = j1.y1;
  jet.mu1 = j1.mu1;
  jet.xi1 = j1.xi1;
  jet.first_pieces = j1.accepting;
  if (j1.numeric) {
    jet.y2 = numeric_dd2(ctx, dx, wx);
    jet.numeric = true;
    return jet;
  }
  const int m = bp.m, r = bp.r();
  const double tol = 1e-9 * scale_of(wx) * scale_of(dx);
  Vector first;
  for (const SecondOrderPiece& pc : second_order_pieces(ctx, dx, j1)) {
    if (pc.region_a.rows() && ((pc.region_a * wx - pc.region_b).array() > tol).any()) continue;
    const Vector t = pc.M * wx + pc.c;
    if (jet.second_pieces.empty()) {
      first = t;
    } else if (!same_triple(first, t)) {
      throw PieceConflictError("second-order pieces " + to_string(jet.second_pieces.front()) + " and " +
                               to_string(pc.W) + " disagree");
    }
    jet.second_pieces.push_back(pc.W);
  }
  if (jet.second_pieces.empty()) throw PieceConflictError("no second-order piece accepts (d_x, w_x)");
  jet.y2 = first.head(m);
  jet.mu2 = first.segment(m, r);
  jet.xi2 = first.tail(bp.s());
  return jet;
}

namespace {

Vector tracked_y(const BilevelContext& ctx, const Vector& x) {
  return kkt_track(*ctx.bp, x, ctx.kkt, TrackOptions{50, true, ctx.tol}).point.y;
}

}  // namespace

Vector numeric_dd1(const BilevelContext& ctx, const Vector& dx) {
  const BilevelProblem& bp = *ctx.bp;
  if (dx.norm() == 0.0) return Vector::Zero(bp.m);
  // Difference quotients at t = 2^-8, 2^-9, 2^-10, extrapolated twice.
  Vector q[3];
  for (int k = 0; k < 3; ++k) {
    const double t = std::ldexp(1.0, -8 - k);
    q[k] = (tracked_y(ctx, bp.x_star + t * dx) - bp.y_star) / t;
  }
  const Vector r1 = 2.0 * q[1] - q[0];
  const Vector r2 = 2.0 * q[2] - q[1];
  return (4.0 * r2 - r1) / 3.0;
}

Vector numeric_dd2(const BilevelContext& ctx, const Vector& dx, const Vector& wx) {
  const BilevelProblem& bp = *ctx.bp;
  // phi(t) = y(x* + t d + t^2 w / 2) - y*; (phi(2t) - 2 phi(t)) / t^2 -> y''.
  auto phi = [&](double t) { return Vector(tracked_y(ctx, bp.x_star + t * dx + 0.5 * t * t * wx) - bp.y_star); };
  auto quotient = [&](double t) { return Vector((phi(2.0 * t) - 2.0 * phi(t)) / (t * t)); };
  // Q(t) = y'' + a t + b t^2 + ...; two Richardson levels.
  auto level1 = [&](double t) { return Vector(2.0 * quotient(0.5 * t) - quotient(t)); };
  const double t = std::ldexp(1.0, -6);
  return (4.0 * level1(0.5 * t) - level1(t)) / 3.0;
}

}  // namespace nogap
