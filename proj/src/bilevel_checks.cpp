#include "bilevel_internal.hpp"
#include "nogap/cones.hpp"
#include "nogap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nogap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using detail::scale_of;

// Linear rows collected before they become an LP or a cone.
struct Rows {
  int dim = 0;
  std::vector<Vector> eq, in;
  std::vector<double> beq, bin;

  explicit Rows(int d) : dim(d) {}
  void add_eq(const Vector& row, double rhs) {
    eq.push_back(row);
    beq.push_back(rhs);
  }
  void add_le(const Vector& row, double rhs) {
    in.push_back(row);
    bin.push_back(rhs);
  }
  void append(const Rows& o) {
    for (std::size_t i = 0; i < o.eq.size(); ++i) add_eq(o.eq[i], o.beq[i]);
    for (std::size_t i = 0; i < o.in.size(); ++i) add_le(o.in[i], o.bin[i]);
  }
  LinearProgram lp() const {
    LinearProgram out(dim);
    for (std::size_t i = 0; i < eq.size(); ++i) out.add_eq(eq[i], beq[i]);
    for (std::size_t i = 0; i < in.size(); ++i) out.add_le(in[i], bin[i]);
    return out;
  }
  // Homogeneous part as a cone {A d <= 0, C d = 0}.
  PolyhedralSet cone() const {
    Matrix a(static_cast<Eigen::Index>(in.size()), dim), c(static_cast<Eigen::Index>(eq.size()), dim);
    for (std::size_t i = 0; i < in.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = in[i].transpose();
    for (std::size_t i = 0; i < eq.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = eq[i].transpose();
    return PolyhedralSet::hform(a, Vector::Zero(a.rows()), c, Vector::Zero(c.rows()));
  }
};

Vector unit(int n, int i) {
  Vector e = Vector::Zero(n);
  e(i) = 1.0;
  return e;
}

void add_box(Rows& rows, int count, double bound) {
  for (int j = 0; j < count; ++j) {
    rows.add_le(unit(rows.dim, j), bound);
    rows.add_le(-unit(rows.dim, j), bound);
  }
}

int full_dim(const BilevelProblem& bp) { return bp.n + bp.m + bp.r() + bp.s(); }

bool degenerate(const BilevelContext& ctx, int i) {
  return std::abs(ctx.ld.g(i) + ctx.kkt.xi(i)) <= ctx.tol.degeneracy;
}

// The explicit SP reduction on one sensitivity piece: d_y = Dy d_x.
struct SpPiece {
  const SensitivityPiece* pc;
  Matrix Dy;

  Vector reduce(const BilevelContext& ctx, const Vector& row_z) const {
    const int n = ctx.bp->n, m = ctx.bp->m;
    return row_z.head(n) + Dy.transpose() * row_z.tail(m);
  }
};

SpPiece sp_piece(const BilevelContext& ctx, const SensitivityPiece& pc) {
  return SpPiece{&pc, -pc.H.topRows(ctx.bp->m)};
}

// Region, H and active-G rows of (SP_dx) on one piece.
Rows sp_tangent_rows(const BilevelContext& ctx, const SpPiece& sp) {
  Rows rows(ctx.bp->n);
  for (Eigen::Index i = 0; i < sp.pc->valid_a.rows(); ++i) rows.add_le(sp.pc->valid_a.row(i).transpose(), 0.0);
  for (int k = 0; k < ctx.bp->p(); ++k) rows.add_eq(sp.reduce(ctx, ctx.JH.row(k).transpose()), 0.0);
  for (int i : ctx.active_G) rows.add_le(sp.reduce(ctx, ctx.JG.row(i).transpose()), 0.0);
  return rows;
}

// Linearized lower KKT rows of (FP_d) in d = (d_x, d_y, d_mu, d_xi) for one W.
Rows fp_kkt_rows(const BilevelContext& ctx, const Diag& W) {
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m, r = bp.r(), s = bp.s();
  const LowerData& ld = ctx.ld;
  Rows rows(full_dim(bp));
  for (int j = 0; j < m; ++j) {
    Vector row(rows.dim);
    row << ld.Lyx.row(j).transpose(), ld.Lyy.row(j).transpose(), ld.Jyh.col(j), ld.Jyg.col(j);
    rows.add_eq(row, 0.0);
  }
  for (int i = 0; i < r; ++i) {
    Vector row = Vector::Zero(rows.dim);
    row.head(n) = ld.Jxh.row(i).transpose();
    row.segment(n, m) = ld.Jyh.row(i).transpose();
    rows.add_eq(row, 0.0);
  }
  for (int i = 0; i < s; ++i) {
    Vector grad = Vector::Zero(rows.dim);
    grad.head(n) = ld.Jxg.row(i).transpose();
    grad.segment(n, m) = ld.Jyg.row(i).transpose();
    const Vector dxi = unit(rows.dim, n + m + r + i);
    if (W[static_cast<std::size_t>(i)]) {
      rows.add_eq(dxi, 0.0);
      if (degenerate(ctx, i)) rows.add_le(grad + dxi, 0.0);
    } else {
      rows.add_eq(grad, 0.0);
      if (degenerate(ctx, i)) rows.add_le(-(grad + dxi), 0.0);
    }
  }
  return rows;
}

Rows fp_upper_rows(const BilevelContext& ctx) {
  const BilevelProblem& bp = *ctx.bp;
  const int nz = bp.n + bp.m;
  Rows rows(full_dim(bp));
  for (int k = 0; k < bp.p(); ++k) {
    Vector row = Vector::Zero(rows.dim);
    row.head(nz) = ctx.JH.row(k).transpose();
    rows.add_eq(row, 0.0);
  }
  for (int i : ctx.active_G) {
    Vector row = Vector::Zero(rows.dim);
    row.head(nz) = ctx.JG.row(i).transpose();
    rows.add_le(row, 0.0);
  }
  return rows;
}

Vector fp_objective(const BilevelContext& ctx) {
  Vector c = Vector::Zero(full_dim(*ctx.bp));
  c.head(ctx.bp->n + ctx.bp->m) = ctx.grad_F;
  return c;
}

void require_exact(const BilevelContext& ctx, const char* what) {
  if (!ctx.exact) throw AssumptionError(std::string(what) + " requires SSOSC and LICQ: " + ctx.fallback_reason);
}

// Unit d_x directions of the cones, rays and both signs of lineality.
void collect_generators(const PolyhedralSet& cone, int n, std::vector<Vector>& out) {
  const ConeGenerators g = cone_generators(cone, 1e-9);
  auto push = [&](const Vector& v) {
    const Vector dx = v.head(n);
    if (dx.norm() > 1e-12) out.push_back(dx.normalized());
  };
  for (const Vector& r : g.rays) push(r);
  for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) {
    push(g.lineality.col(j));
    push(-g.lineality.col(j));
  }
}

std::vector<Vector> sorted_unique(std::vector<Vector> v) {
  v = dedup_directions(v, 1e-8);
  std::sort(v.begin(), v.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  return v;
}

std::vector<Vector> sphere_or_signs(int n, int count, std::uint64_t seed) {
  if (n == 1) return {unit(1, 0), -unit(1, 0)};
  std::vector<Vector> dirs = sphere_directions(n, count, seed);
  for (int i = 0; i < n; ++i) {
    dirs.push_back(unit(n, i));
    dirs.push_back(-unit(n, i));
  }
  return dirs;
}

double member_tol(const BilevelContext& ctx) { return ctx.exact ? ctx.tol.certificate : 1e-6; }

}  // namespace

std::string to_string(BilevelForm f) { return f == BilevelForm::sp ? "sp" : "fp"; }

std::string to_string(SecondOrderMode m) { return m == SecondOrderMode::necessary ? "necessary" : "sufficient"; }

GmfcqReport gmfcq_check(const BilevelContext& ctx, BilevelForm form) {
  require_exact(ctx, "GMFCQ");
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, p = bp.p();
  const double tol = ctx.tol.certificate;
  GmfcqReport rep;
  rep.form = form;
  rep.holds = true;
  for (const SensitivityPiece& pc : ctx.pieces) {
    GmfcqPiece gp;
    gp.W = pc.W;
    Rows rows(0);
    if (form == BilevelForm::sp) {
      const SpPiece sp = sp_piece(ctx, pc);
      Matrix red(p, n);
      for (int k = 0; k < p; ++k) red.row(k) = sp.reduce(ctx, ctx.JH.row(k).transpose()).transpose();
      gp.rank_ok = p == 0 || rank(red, 1e-9) == p;
      rows = Rows(n + 1);
      for (int k = 0; k < p; ++k) {
        Vector row = Vector::Zero(n + 1);
        row.head(n) = red.row(k).transpose();
        rows.add_eq(row, 0.0);
      }
      for (int i : ctx.active_G) {
        Vector row = Vector::Zero(n + 1);
        row.head(n) = sp.reduce(ctx, ctx.JG.row(i).transpose());
        row(n) = 1.0;
        rows.add_le(row, 0.0);
      }
    } else {
      const int nf = full_dim(bp), nz = n + bp.m;
      Rows kkt = fp_kkt_rows(ctx, pc.W);
      // Rank of the stacked Jacobian: upper H rows over the lower KKT equalities.
      Matrix a(p + static_cast<Eigen::Index>(kkt.eq.size()), nf);
      a.setZero();
      for (int k = 0; k < p; ++k) a.row(k).head(nz) = ctx.JH.row(k);
      for (std::size_t i = 0; i < kkt.eq.size(); ++i) a.row(p + static_cast<Eigen::Index>(i)) = kkt.eq[i].transpose();
      gp.rank_ok = rank(a, 1e-9) == a.rows();
      rows = Rows(nf + 1);
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        Vector row = Vector::Zero(nf + 1);
        row.head(nf) = a.row(i).transpose();
        rows.add_eq(row, 0.0);
      }
      for (int i : ctx.active_G) {
        Vector row = Vector::Zero(nf + 1);
        row.head(nz) = ctx.JG.row(i).transpose();
        row(nf) = 1.0;
        rows.add_le(row, 0.0);
      }
    }
    const int dim = rows.dim - 1;
    if (ctx.active_G.empty()) {
      gp.direction_ok = true;
      gp.slack = kInf;
      gp.witness = Vector::Zero(dim);
    } else {
      add_box(rows, n, 1.0);
      rows.add_le(unit(rows.dim, dim), 1.0);
      LinearProgram lp = rows.lp();
      lp.c(dim) = -1.0;
      const LPResult res = lp_solve(lp, ctx.tol);
      if (res.status == LPStatus::optimal) {
        gp.slack = res.solution(dim);
        gp.witness = res.solution.head(dim);
      }
      gp.direction_ok = gp.slack > tol;
    }
    rep.holds = rep.holds && gp.rank_ok && gp.direction_ok;
    rep.pieces.push_back(std::move(gp));
  }
  return rep;
}

std::optional<Vector> fp_direction(const BilevelContext& ctx, const Vector& dx) {
  require_exact(ctx, "FP linearization");
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n;
  for (const SensitivityPiece& pc : ctx.pieces) {
    Rows rows = fp_kkt_rows(ctx, pc.W);
    for (int j = 0; j < n; ++j) rows.add_eq(unit(rows.dim, j), dx(j));
    // Sign rows hold up to roundoff in d_x.
    for (double& b : rows.bin) b += 1e-12 * scale_of(dx);
    const LPResult res = lp_solve(rows.lp(), ctx.tol);
    if (res.status == LPStatus::optimal) return Vector(res.solution.tail(rows.dim - n));
  }
  return std::nullopt;
}

bool sp_tangent_member(const BilevelContext& ctx, const Vector& dx) {
  const FirstOrderJet j1 = solution_map_dd1(ctx, dx);
  const Vector dz = ctx.bp->join(dx, j1.y1);
  const double tol = member_tol(ctx) * scale_of(dx);
  if (ctx.bp->p() > 0 && (ctx.JH * dz).cwiseAbs().maxCoeff() > tol) return false;
  for (int i : ctx.active_G) {
    if (ctx.JG.row(i).dot(dz) > tol) return false;
  }
  return true;
}

bool sp_critical_member(const BilevelContext& ctx, const Vector& dx) {
  if (!sp_tangent_member(ctx, dx)) return false;
  const FirstOrderJet j1 = solution_map_dd1(ctx, dx);
  return ctx.grad_F.dot(ctx.bp->join(dx, j1.y1)) <= member_tol(ctx) * scale_of(dx);
}

bool fp_tangent_member(const BilevelContext& ctx, const Vector& dx) {
  const std::optional<Vector> rest = fp_direction(ctx, dx);
  if (!rest) return false;
  const Vector dz = ctx.bp->join(dx, rest->head(ctx.bp->m));
  const double tol = ctx.tol.certificate * scale_of(dx);
  if (ctx.bp->p() > 0 && (ctx.JH * dz).cwiseAbs().maxCoeff() > tol) return false;
  for (int i : ctx.active_G) {
    if (ctx.JG.row(i).dot(dz) > tol) return false;
  }
  return true;
}

bool fp_critical_member(const BilevelContext& ctx, const Vector& dx) {
  if (!fp_tangent_member(ctx, dx)) return false;
  const Vector rest = *fp_direction(ctx, dx);
  return ctx.grad_F.dot(ctx.bp->join(dx, rest.head(ctx.bp->m))) <= ctx.tol.certificate * scale_of(dx);
}

BilevelFirstOrder first_order_check_bilevel(const BilevelContext& ctx, BilevelForm form, const CheckOptions& opt) {
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n;
  const double tol = opt.tol.certificate;
  BilevelFirstOrder rep;
  rep.form = form;
  rep.min_value = kInf;

  if (!ctx.exact) {
    if (form == BilevelForm::fp) {
      rep.applicable = false;
      rep.caveat = "FP form needs LICQ for the linearized KKT system; not applicable: " + ctx.fallback_reason;
      return rep;
    }
    if (!(ctx.cq.mfcq && ctx.cq.ssosc && ctx.cq.crcq_consistent)) {
      rep.applicable = false;
      rep.caveat = ctx.fallback_reason;
      return rep;
    }
    rep.numeric = true;
    for (const Vector& d : sphere_or_signs(n, opt.samples, opt.seed)) {
      if (!sp_tangent_member(ctx, d)) continue;
      rep.tangent_generators.push_back(d);
      const Vector dz = bp.join(d, numeric_dd1(ctx, d));
      const double v = ctx.grad_F.dot(dz);
      if (v < rep.min_value) {
        rep.min_value = v;
        rep.witness = d;
      }
      if (v <= member_tol(ctx)) rep.critical_generators.push_back(d);
    }
    rep.tangent_generators = sorted_unique(rep.tangent_generators);
    rep.critical_generators = sorted_unique(rep.critical_generators);
    if (rep.min_value < -tol) {
      rep.status = CheckStatus::violated;
    } else {
      rep.witness = Vector();
      if (n == 1) {
        rep.status = CheckStatus::holds;
        rep.exact = true;
        rep.caveat = "y' by numeric differencing of kkt_track; d_x = +1 and -1 cover R^1";
      } else {
        rep.caveat = "y' by numeric differencing of kkt_track on sampled directions";
      }
    }
    if (rep.min_value == kInf) rep.min_value = 0.0;
    return rep;
  }

  rep.exact = true;
  rep.pieces = static_cast<int>(ctx.pieces.size());
  std::vector<Vector> tangent, critical;
  for (const SensitivityPiece& pc : ctx.pieces) {
    Rows rows(0);
    Vector c;
    int dx_dim = n;
    if (form == BilevelForm::sp) {
      const SpPiece sp = sp_piece(ctx, pc);
      rows = sp_tangent_rows(ctx, sp);
      c = sp.reduce(ctx, ctx.grad_F);
    } else {
      rows = fp_kkt_rows(ctx, pc.W);
      rows.append(fp_upper_rows(ctx));
      c = fp_objective(ctx);
    }
    collect_generators(rows.cone(), dx_dim, tangent);
    Rows crit = rows;
    crit.add_le(c, 0.0);
    collect_generators(crit.cone(), dx_dim, critical);

    add_box(rows, n, 1.0);
    LinearProgram lp = rows.lp();
    lp.c = c;
    const LPResult res = lp_solve(lp, opt.tol);
    if (res.status != LPStatus::optimal) continue;
    if (res.optimum < rep.min_value) {
      rep.min_value = res.optimum;
      rep.witness = res.solution.head(n);
    }
  }
  rep.tangent_generators = sorted_unique(tangent);
  rep.critical_generators = sorted_unique(critical);
  if (rep.min_value < -tol) {
    rep.status = CheckStatus::violated;
  } else {
    rep.status = CheckStatus::holds;
    rep.witness = Vector();
  }
  return rep;
}

DualReport dual_multipliers(const BilevelContext& ctx, BilevelForm form) {
  require_exact(ctx, "dual multipliers");
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m, p = bp.p(), r = bp.r(), s = bp.s();
  const int a = static_cast<int>(ctx.active_G.size());
  const LowerData& ld = ctx.ld;
  DualReport rep;
  rep.form = form;
  rep.residual = kInf;
  for (const SensitivityPiece& pc : ctx.pieces) {
    rep.tested.push_back(pc.W);
    // Columns: lambda_H (p), lambda_G on the active set (a), then FP extras.
    const int nv = form == BilevelForm::sp ? p + a : p + a + m + r + s;
    Matrix eq;
    Vector rhs;
    if (form == BilevelForm::sp) {
      const SpPiece sp = sp_piece(ctx, pc);
      eq.resize(n, nv);
      for (int k = 0; k < p; ++k) eq.col(k) = sp.reduce(ctx, ctx.JH.row(k).transpose());
      for (int i = 0; i < a; ++i) eq.col(p + i) = sp.reduce(ctx, ctx.JG.row(ctx.active_G[static_cast<std::size_t>(i)]).transpose());
      rhs = -sp.reduce(ctx, ctx.grad_F);
    } else {
      Matrix iw = Matrix::Identity(s, s);
      for (int i = 0; i < s; ++i) iw(i, i) = pc.W[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
      const int rows = n + m + r + s;
      eq = Matrix::Zero(rows, nv);
      rhs = Vector::Zero(rows);
      for (int k = 0; k < p; ++k) eq.col(k).head(n + m) = ctx.JH.row(k).transpose();
      for (int i = 0; i < a; ++i) eq.col(p + i).head(n + m) = ctx.JG.row(ctx.active_G[static_cast<std::size_t>(i)]).transpose();
      const int cl = p + a, ch = cl + m, cg = ch + r;
      eq.block(0, cl, n, m) = ld.Lyx.transpose();
      eq.block(n, cl, m, m) = ld.Lyy;
      eq.block(0, ch, n, r) = ld.Jxh.transpose();
      eq.block(n, ch, m, r) = ld.Jyh.transpose();
      eq.block(0, cg, n, s) = ld.Jxg.transpose() * iw;
      eq.block(n, cg, m, s) = ld.Jyg.transpose() * iw;
      eq.block(n + m, cl, r, m) = ld.Jyh;
      eq.block(n + m + r, cl, s, m) = ld.Jyg;
      eq.block(n + m + r, cg, s, s) = -(Matrix::Identity(s, s) - iw);
      rhs.head(n + m) = -ctx.grad_F;
    }
    LinearProgram lp(nv);
    for (Eigen::Index i = 0; i < eq.rows(); ++i) lp.add_eq(eq.row(i).transpose(), rhs(i));
    for (int i = 0; i < a; ++i) lp.add_le(-unit(nv, p + i), 0.0);
    // Zero objective: a pure feasibility test.
    LPResult res;
    try {
      res = lp_solve(lp, ctx.tol);
    } catch (const LPStallError&) {
      continue;
    }
    if (res.status != LPStatus::optimal) continue;
    const double resid = (eq * res.solution - rhs).lpNorm<Eigen::Infinity>();
    rep.feasible_for.push_back(pc.W);
    if (!rep.feasible) {
      rep.feasible = true;
      rep.W = pc.W;
      rep.residual = resid;
      rep.lambda_H = res.solution.head(p);
      rep.lambda_G = Vector::Zero(bp.q());
      for (int i = 0; i < a; ++i) rep.lambda_G(ctx.active_G[static_cast<std::size_t>(i)]) = res.solution(p + i);
      if (form == BilevelForm::fp) {
        rep.lambda_L = res.solution.segment(p + a, m);
        rep.lambda_h = res.solution.segment(p + a + m, r);
        rep.lambda_g = res.solution.tail(s);
      }
    }
  }
  return rep;
}

namespace {

double lp_value(const LPResult& res, double constant) {
  switch (res.status) {
    case LPStatus::optimal: return res.optimum + constant;
    case LPStatus::unbounded: return -kInf;
    case LPStatus::infeasible: return kInf;
  }
  return kNaN;
}

// min over w_x of the SP second-order objective with y'' = My w + cy.
double sp_inner(const BilevelContext& ctx, const Vector& dtil, const std::vector<int>& ig1, const Matrix& My,
                const Vector& cy, const Matrix& region_a, const Vector& region_b, Vector* w_out) {
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m;
  const Vector z = bp.z_star();
  auto reduce = [&](const Vector& row) { return Vector(row.head(n) + My.transpose() * row.tail(m)); };
  auto offset = [&](const Vector& row) { return row.tail(m).dot(cy); };
  LinearProgram lp(n);
  lp.c = reduce(ctx.grad_F);
  const double constant = dtil.dot(ctx.hess_F * dtil) + offset(ctx.grad_F);
  const Vector qh = detail::second_forms(bp.H, z, dtil);
  const Vector qg = detail::second_forms(bp.G, z, dtil);
  for (int k = 0; k < bp.p(); ++k) {
    const Vector row = ctx.JH.row(k).transpose();
    lp.add_eq(reduce(row), -qh(k) - offset(row));
  }
  for (int i : ig1) {
    const Vector row = ctx.JG.row(i).transpose();
    lp.add_le(reduce(row), -qg(i) - offset(row));
  }
  for (Eigen::Index i = 0; i < region_a.rows(); ++i) lp.add_le(region_a.row(i).transpose(), region_b(i));
  const LPResult res = lp_solve(lp, ctx.tol);
  if (w_out && res.status == LPStatus::optimal) *w_out = res.solution;
  return lp_value(res, constant);
}

std::vector<int> second_active(const BilevelContext& ctx, const Vector& dz) {
  std::vector<int> out;
  const double tol = 1e-9 * scale_of(dz);
  for (int i : ctx.active_G) {
    if (std::abs(ctx.JG.row(i).dot(dz)) <= tol) out.push_back(i);
  }
  return out;
}

}  // namespace

double sp_second_order_value(const BilevelContext& ctx, const Vector& dx, BilevelDirection* out) {
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m;
  const FirstOrderJet j1 = solution_map_dd1(ctx, dx);
  const Vector dtil = bp.join(dx, j1.y1);
  const std::vector<int> ig1 = second_active(ctx, dtil);
  double best = kInf;
  Vector best_w;
  std::string best_piece;
  if (j1.numeric) {
    // y''(d; .) modelled as affine in w from w = 0 and w = +-e_j.
    const Vector base = numeric_dd2(ctx, dx, Vector::Zero(n));
    Matrix My(m, n);
    bool affine = true;
    for (int j = 0; j < n; ++j) {
      const Vector plus = numeric_dd2(ctx, dx, unit(n, j));
      const Vector minus = numeric_dd2(ctx, dx, -unit(n, j));
      My.col(j) = 0.5 * (plus - minus);
      if ((plus + minus - 2.0 * base).lpNorm<Eigen::Infinity>() > 1e-5 * scale_of(base)) affine = false;
    }
    best = affine ? sp_inner(ctx, dtil, ig1, My, base, Matrix(0, n), Vector(0), &best_w) : kNaN;
    best_piece = "numeric";
  } else {
    for (const SecondOrderPiece& pc : second_order_pieces(ctx, dx, j1)) {
      Vector w;
      const double v = sp_inner(ctx, dtil, ig1, pc.M.topRows(m), pc.c.head(m), pc.region_a, pc.region_b, &w);
      if (v < best) {
        best = v;
        best_w = w;
        best_piece = to_string(pc.W);
      }
    }
  }
  if (out) {
    out->d_x = dx;
    out->y1 = j1.y1;
    out->value = best;
    out->w_x = best_w;
    out->piece = best_piece;
    out->numeric = j1.numeric;
  }
  return best;
}

double fp_second_order_value(const BilevelContext& ctx, const Vector& dx, BilevelDirection* out) {
  require_exact(ctx, "FP second-order condition");
  const BilevelProblem& bp = *ctx.bp;
  const int n = bp.n, m = bp.m, r = bp.r(), s = bp.s();
  const int nf = full_dim(bp), nz = n + m;
  const LowerData& ld = ctx.ld;
  const std::optional<Vector> rest = fp_direction(ctx, dx);
  if (!rest) throw PieceConflictError("FP linearized system has no solution for d_x");
  const Vector dz = bp.join(dx, rest->head(m));
  const Vector dmu = rest->segment(m, r);
  const Vector dxi = rest->tail(s);
  const detail::SecondOrderTerms q = detail::second_order_terms(ctx, dz, dmu, dxi);
  const Vector z = bp.z_star();
  const Vector qh = detail::second_forms(bp.H, z, dz);
  const Vector qg = detail::second_forms(bp.G, z, dz);
  const std::vector<int> ig2 = second_active(ctx, dz);

  Rows base(nf);
  for (int j = 0; j < m; ++j) {
    Vector row(nf);
    row << ld.Lyx.row(j).transpose(), ld.Lyy.row(j).transpose(), ld.Jyh.col(j), ld.Jyg.col(j);
    base.add_eq(row, -q.q_c(j));
  }
  for (int i = 0; i < r; ++i) {
    Vector row = Vector::Zero(nf);
    row.head(n) = ld.Jxh.row(i).transpose();
    row.segment(n, m) = ld.Jyh.row(i).transpose();
    base.add_eq(row, -q.q_d(i));
  }
  for (int k = 0; k < bp.p(); ++k) {
    Vector row = Vector::Zero(nf);
    row.head(nz) = ctx.JH.row(k).transpose();
    base.add_eq(row, -qh(k));
  }
  for (int i : ig2) {
    Vector row = Vector::Zero(nf);
    row.head(nz) = ctx.JG.row(i).transpose();
    base.add_le(row, -qg(i));
  }

  // Projection rows: 1 = identity branch (w_xi = 0), 0 = zero branch (g'' = 0).
  const Vector zv = ld.g + ctx.kkt.xi;
  const Vector u = ld.Jxg * dx + ld.Jyg * dz.tail(m) + dxi;
  const double utol = 1e-9 * scale_of(dz);
  Diag forced(static_cast<std::size_t>(s), 0);
  std::vector<int> branch;
  for (int i = 0; i < s; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (zv(i) < -ctx.tol.degeneracy) forced[si] = 1;
    else if (zv(i) > ctx.tol.degeneracy) forced[si] = 0;
    else if (u(i) < -utol) forced[si] = 1;
    else if (u(i) > utol) forced[si] = 0;
    else branch.push_back(i);
  }
  double best = kInf;
  std::string best_piece;
  Vector best_w;
  const std::size_t count = std::size_t{1} << branch.size();
  for (std::size_t mask = 0; mask < count; ++mask) {
    Diag W = forced;
    for (std::size_t b = 0; b < branch.size(); ++b) W[static_cast<std::size_t>(branch[b])] = (mask >> b) & 1U ? 1 : 0;
    Rows rows = base;
    for (int i = 0; i < s; ++i) {
      Vector grad = Vector::Zero(nf);
      grad.head(n) = ld.Jxg.row(i).transpose();
      grad.segment(n, m) = ld.Jyg.row(i).transpose();
      const Vector wxi = unit(nf, n + m + r + i);
      const bool branched = std::find(branch.begin(), branch.end(), i) != branch.end();
      // v_i = q_e + grad g_i . w_z + w_xi
      if (W[static_cast<std::size_t>(i)]) {
        rows.add_eq(wxi, 0.0);
        if (branched) rows.add_le(grad + wxi, -q.q_e(i));
      } else {
        rows.add_eq(grad, -q.q_e(i));
        if (branched) rows.add_le(-(grad + wxi), q.q_e(i));
      }
    }
    LinearProgram lp = rows.lp();
    lp.c = fp_objective(ctx);
    const LPResult res = lp_solve(lp, ctx.tol);
    const double v = lp_value(res, dz.dot(ctx.hess_F * dz));
    if (v < best) {
      best = v;
      best_piece = to_string(W);
      if (res.status == LPStatus::optimal) best_w = res.solution.head(n);
    }
  }
  if (out) {
    out->d_x = dx;
    out->y1 = dz.tail(m);
    out->value = best;
    out->w_x = best_w;
    out->piece = best_piece;
  }
  return best;
}

std::vector<Vector> bilevel_critical_sample(const BilevelContext& ctx, const CheckOptions& opt) {
  const int n = ctx.bp->n;
  const BilevelFirstOrder fo = first_order_check_bilevel(ctx, BilevelForm::sp, opt);
  std::vector<Vector> cand = fo.critical_generators;
  if (ctx.exact) {
    Rng rng(opt.seed ^ 0x5bd1e995ULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::vector<Vector>& gens = fo.critical_generators;
    for (int k = 0; k < opt.samples / 2 && gens.size() >= 2; ++k) {
      Vector d = Vector::Zero(n);
      for (const Vector& g : gens) d += unif(rng) * g;
      if (d.norm() > 1e-9) cand.push_back(d.normalized());
    }
    for (const Vector& d : sphere_or_signs(n, opt.samples / 2, opt.seed)) cand.push_back(d);
  }
  std::vector<Vector> kept;
  for (const Vector& d : cand) {
    if (sp_critical_member(ctx, d)) kept.push_back(d);
  }
  return dedup_directions(kept, opt.tol.dedup);
}

BilevelSecondOrder second_order_check_bilevel(const BilevelContext& ctx, BilevelForm form, const CheckOptions& opt) {
  const int n = ctx.bp->n;
  const double tol = opt.tol.certificate;
  BilevelSecondOrder rep;
  rep.form = form;
  const BilevelFirstOrder fo = first_order_check_bilevel(ctx, form, opt);
  if (fo.status == CheckStatus::violated) {
    rep.verdict = SecondOrderClass::necessary_violated;
    rep.margin = -kInf;
    rep.caveat = "first-order condition fails";
    BilevelDirection w;
    w.d_x = fo.witness;
    w.value = -kInf;
    rep.witnesses.push_back(w);
    return rep;
  }
  if (!fo.applicable) {
    rep.applicable = false;
    rep.caveat = fo.caveat;
    return rep;
  }
  rep.numeric = !ctx.exact;

  std::vector<Vector> dirs;
  if (form == BilevelForm::sp) {
    dirs = bilevel_critical_sample(ctx, opt);
  } else {
    std::vector<Vector> cand = fo.critical_generators;
    for (const Vector& d : sphere_or_signs(n, opt.samples / 2, opt.seed)) cand.push_back(d);
    for (const Vector& d : cand) {
      if (fp_critical_member(ctx, d)) dirs.push_back(d);
    }
    dirs = dedup_directions(dirs, opt.tol.dedup);
  }
  if (n == 1) {
    rep.caveat = "d_x = +1 and -1 cover the unit sphere of R^1";
  } else {
    rep.caveat = "margin over " + std::to_string(dirs.size()) +
                 " tested unit critical directions (cone generators, seeded combinations, sphere samples)";
  }
  if (rep.numeric) rep.caveat += "; y' and y'' by numeric differencing of kkt_track";
  if (dirs.empty()) {
    rep.margin = kInf;
    rep.verdict = SecondOrderClass::certified;
    rep.caveat = "critical cone is {0}; growth holds vacuously";
    return rep;
  }
  rep.margin = kInf;
  bool unknown = false;
  for (const Vector& d : dirs) {
    BilevelDirection bd;
    if (form == BilevelForm::sp) sp_second_order_value(ctx, d, &bd);
    else fp_second_order_value(ctx, d, &bd);
    if (std::isnan(bd.value)) {
      unknown = true;
    } else {
      rep.margin = std::min(rep.margin, bd.value);
      if (bd.value <= tol) rep.witnesses.push_back(bd);
    }
    rep.directions.push_back(std::move(bd));
  }
  if (rep.margin < -tol) rep.verdict = SecondOrderClass::necessary_violated;
  else if (unknown) rep.verdict = SecondOrderClass::inconclusive;
  else if (rep.margin <= tol) rep.verdict = SecondOrderClass::degenerate;
  else rep.verdict = SecondOrderClass::certified;
  return rep;
}

GrowthReport growth_probe(const BilevelContext& ctx, double radius, int n, std::uint64_t seed,
                          double certified_margin) {
  const BilevelProblem& bp = *ctx.bp;
  if (!(radius > 0.0) || n <= 0) throw std::invalid_argument("growth_probe: radius and n must be positive");
  GrowthReport rep;
  rep.samples = n;
  const double f_star = bp.F->value(bp.z_star())(0);
  const double feas = 1e-10 * scale_of(bp.z_star());
  double gamma = kInf;
  const TrackOptions topt{50, true, ctx.tol};
  for (const Vector& x : ball_points(bp.x_star, radius, n, seed)) {
    const double dist = (x - bp.x_star).norm();
    if (dist < 1e-12) continue;
    KKTPoint k = ctx.kkt;
    try {
      // Continuation along the segment keeps Newton on the local branch.
      for (int step = 1; step <= 4; ++step) {
        k = kkt_track(bp, bp.x_star + (step / 4.0) * (x - bp.x_star), k, topt).point;
      }
    } catch (const TrackingError&) {
      ++rep.tracking_failures;
      continue;
    }
    const Vector z = bp.join(x, k.y);
    if (bp.q() > 0 && bp.G->value(z).maxCoeff() > feas) continue;
    if (bp.p() > 0 && bp.H->value(z).cwiseAbs().maxCoeff() > feas) continue;
    ++rep.feasible;
    const double diff = bp.F->value(z)(0) - f_star;
    if (diff <= 1e-14 * (1.0 + std::abs(f_star))) rep.violations.push_back(x);
    gamma = std::min(gamma, diff / (dist * dist));
  }
  if (rep.tracking_failures * 10 > n) {
    throw TrackingError("growth_probe: " + std::to_string(rep.tracking_failures) + " of " + std::to_string(n) +
                        " samples failed to track");
  }
  rep.gamma_hat = rep.feasible == 0 ? kInf : std::max(0.0, gamma);
  if (certified_margin > 0.0 && std::isfinite(certified_margin)) {
    rep.consistent_with_margin = rep.gamma_hat >= rep.margin_ratio * certified_margin;
  }
  return rep;
}

}  // namespace nogap
