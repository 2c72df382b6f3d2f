#include "nogap/nsopt.hpp"

#include "nogap/pieces.hpp"
#include "nogap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nogap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows of the polyhedral cone `t` pulled back through v = s z + c.
void add_pullback(LinearProgram& lp, const PolyhedralSet& t, const Matrix& s, const Vector& c) {
  for (Eigen::Index i = 0; i < t.a().rows(); ++i) {
    lp.add_le((t.a().row(i) * s).transpose(), t.b()(i) - t.a().row(i).dot(c));
  }
  for (Eigen::Index i = 0; i < t.c().rows(); ++i) {
    lp.add_eq((t.c().row(i) * s).transpose(), t.e()(i) - t.c().row(i).dot(c));
  }
}

void add_region(LinearProgram& lp, const LinearPiece& pc) {
  for (Eigen::Index i = 0; i < pc.region_a.rows(); ++i) lp.add_le(pc.region_a.row(i).transpose(), pc.region_b(i));
}

double scale_of(const Vector& v) { return 1.0 + (v.size() ? v.cwiseAbs().maxCoeff() : 0.0); }

}  // namespace

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::holds: return "holds";
    case CheckStatus::violated: return "violated";
    case CheckStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

std::string to_string(SecondOrderClass c) {
  switch (c) {
    case SecondOrderClass::certified: return "certified";
    case SecondOrderClass::degenerate: return "degenerate";
    case SecondOrderClass::necessary_violated: return "necessary_violated";
    case SecondOrderClass::inconclusive: return "inconclusive";
  }
  return "?";
}

std::string describe(SecondOrderClass c) {
  switch (c) {
    case SecondOrderClass::certified: return "sufficient condition certified on tested directions";
    case SecondOrderClass::degenerate: return "necessary holds, sufficient not certified";
    case SecondOrderClass::necessary_violated: return "second-order necessary condition violated";
    case SecondOrderClass::inconclusive: return "inconclusive";
  }
  return "?";
}

std::string to_string(MscqVerdict v) { return v == MscqVerdict::bounded ? "bounded" : "suspect"; }

void NonsmoothProgram::validate(double tol) const {
  if (!f || !G) throw std::invalid_argument("program: missing f or G");
  if (f->output_dim() != 1) throw std::invalid_argument("program: f must be scalar");
  if (f->input_dim() != x_star.size() || G->input_dim() != x_star.size()) {
    throw std::invalid_argument("program: x_star dimension does not match f and G");
  }
  if (G->output_dim() != K.dim()) throw std::invalid_argument("program: G and K dimensions differ");
  const double dist = distance(K, G->eval(x_star));
  if (dist > tol) {
    throw std::invalid_argument("program: G(x_star) is not in K (distance " + std::to_string(dist) + ")");
  }
}

PiecewiseExpr NonsmoothProgram::joint() const { return PiecewiseExpr(ex::stack({f->root(), G->root()}), dim()); }

bool linearized_tangent_member(const NonsmoothProgram& p, const Vector& d, double tol) {
  const Vector gx = p.G->eval(p.x_star);
  const PolyhedralSet t = tangent_cone(p.K, gx, 1e-9);
  const Vector g1 = p.G->dd1(p.x_star, d);
  return contains(t, g1, tol * scale_of(g1)).member;
}

FirstOrderReport first_order_check(const NonsmoothProgram& p, const CheckOptions& opt) {
  FirstOrderReport rep;
  const int n = p.dim();
  const int m = p.G->output_dim();
  const PiecewiseExpr joint = p.joint();
  const PolyhedralSet t = tangent_cone(p.K, p.G->eval(p.x_star), opt.tol.activity);
  const double tol = opt.tol.certificate;
  rep.min_value = kInf;

  std::vector<LinearPiece> pieces;
  if (opt.enumerate) {
    try {
      pieces = first_order_pieces(joint, p.x_star, opt.max_pieces, opt.tol.activity);
    } catch (const NotPiecewiseLinear& e) {
      rep.fallback_reason = e.what();
    } catch (const ScaleError& e) {
      rep.fallback_reason = e.what();
    }
  } else {
    rep.fallback_reason = "piece enumeration disabled";
  }

  if (!pieces.empty()) {
    rep.exact = true;
    rep.pieces = static_cast<int>(pieces.size());
    for (const LinearPiece& pc : pieces) {
      LinearProgram lp(n);
      lp.c = pc.slope.row(0).transpose();
      add_pullback(lp, t, pc.slope.bottomRows(m), pc.offset.tail(m));
      add_region(lp, pc);
      lp.add_box(1.0);
      LPResult r = lp_solve(lp, opt.tol);
      if (r.status != LPStatus::optimal) continue;
      const double value = r.optimum + pc.offset(0);
      if (value < rep.min_value) {
        rep.min_value = value;
        if (value < -tol) {
          const double len = r.solution.norm();
          rep.witness = r.solution / len;
          rep.witness_value = p.f->dd1(p.x_star, rep.witness)(0);
        }
      }
      rep.certificates.push_back(std::move(r));
    }
  } else {
    std::vector<Vector> dirs = sphere_directions(n, opt.samples, opt.seed);
    for (int i = 0; i < n; ++i) {
      dirs.push_back(Vector::Unit(n, i));
      dirs.push_back(-Vector::Unit(n, i));
    }
    for (const Vector& d : dirs) {
      if (!linearized_tangent_member(p, d, 1e-9)) continue;
      ++rep.directions;
      const Vector u = d / d.lpNorm<Eigen::Infinity>();
      const double value = p.f->dd1(p.x_star, u)(0);
      if (value < rep.min_value) {
        rep.min_value = value;
        rep.witness = d.normalized();
        rep.witness_value = p.f->dd1(p.x_star, rep.witness)(0);
      }
    }
  }
  if (rep.min_value == kInf) rep.min_value = 0.0;
  if (rep.min_value < -tol) {
    rep.status = CheckStatus::violated;
  } else {
    rep.witness = Vector();
    rep.witness_value = 0.0;
    rep.status = rep.exact ? CheckStatus::holds : CheckStatus::inconclusive;
  }
  return rep;
}

std::vector<Vector> critical_cone_sample(const NonsmoothProgram& p, const CheckOptions& opt) {
  const int n = p.dim();
  const int m = p.G->output_dim();
  const PiecewiseExpr joint = p.joint();
  const PolyhedralSet t = tangent_cone(p.K, p.G->eval(p.x_star), opt.tol.activity);
  const double tol = opt.tol.certificate;

  auto critical = [&](const Vector& d) {
    return linearized_tangent_member(p, d, 1e-9) && p.f->dd1(p.x_star, d)(0) <= tol;
  };

  std::vector<Vector> out;
  std::vector<std::vector<Vector>> piece_gens;
  std::vector<LinearPiece> pieces;
  if (opt.enumerate) {
    try {
      pieces = first_order_pieces(joint, p.x_star, opt.max_pieces, opt.tol.activity);
    } catch (const NotPiecewiseLinear&) {
    } catch (const ScaleError&) {
    }
  }
  for (const LinearPiece& pc : pieces) {
    const Matrix sg = pc.slope.bottomRows(m);
    Matrix a(pc.region_a.rows() + t.a().rows() + 1, n);
    a << pc.region_a, t.a() * sg, pc.slope.row(0);
    const Matrix c = t.c() * sg;
    const PolyhedralSet cone = PolyhedralSet::hform(a, Vector::Zero(a.rows()), c, Vector::Zero(c.rows()));
    const ConeGenerators g = cone_generators(cone, 1e-9);
    std::vector<Vector> gens = g.rays;
    for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) {
      gens.push_back(g.lineality.col(j));
      gens.push_back(-g.lineality.col(j));
    }
    for (const Vector& r : gens) out.push_back(r.normalized());
    piece_gens.push_back(std::move(gens));
  }

  Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int combos = opt.samples / 2;
  for (int k = 0; k < combos && !piece_gens.empty(); ++k) {
    const std::vector<Vector>& gens = piece_gens[static_cast<std::size_t>(k) % piece_gens.size()];
    if (gens.size() < 2) continue;
    Vector d = Vector::Zero(n);
    for (const Vector& r : gens) d += u(rng) * r;
    if (d.norm() > 1e-9) out.push_back(d.normalized());
  }
  for (const Vector& d : sphere_directions(n, opt.samples - combos, opt.seed)) out.push_back(d);

  std::vector<Vector> kept;
  for (const Vector& d : out) {
    if (critical(d)) kept.push_back(d);
  }
  return dedup_directions(kept, opt.tol.dedup);
}

DirectionVerdict second_order_value(const NonsmoothProgram& p, const Vector& d, const CheckOptions& opt) {
  const int n = p.dim();
  const int m = p.G->output_dim();
  const PiecewiseExpr joint = p.joint();
  DirectionVerdict v;
  v.d = d;
  const Vector gx = p.G->eval(p.x_star);
  const Vector g1 = joint.dd1(p.x_star, d);
  v.f_d1 = g1(0);
  const Vector gd = g1.tail(m);
  const double act = opt.tol.activity;
  v.in_tangent = contains(tangent_cone(p.K, gx, act), gd, act * scale_of(gd)).member;
  v.soc_value = kInf;
  if (!v.in_tangent) return v;
  // Roundoff in d must not make G'(x*;d) leave the tangent cone.
  const PolyhedralSet t2 = second_order_tangent(p.K, gx, gd, 10 * act * scale_of(d));

  std::vector<LinearPiece> pieces;
  try {
    pieces = second_order_pieces(joint, p.x_star, d, opt.max_pieces, act);
  } catch (const NotPiecewiseLinear& e) {
    v.soc_value = std::numeric_limits<double>::quiet_NaN();
    v.piece_id = "not piecewise linear";
    return v;
  }
  v.pieces = static_cast<int>(pieces.size());
  for (const LinearPiece& pc : pieces) {
    LinearProgram lp(n);
    lp.c = pc.slope.row(0).transpose();
    add_pullback(lp, t2, pc.slope.bottomRows(m), pc.offset.tail(m));
    add_region(lp, pc);
    LPResult r = lp_solve(lp, opt.tol);
    if (r.status == LPStatus::infeasible) continue;
    const double value = r.status == LPStatus::unbounded ? -kInf : r.optimum + pc.offset(0);
    if (value < v.soc_value || v.piece_id.empty()) {
      v.soc_value = value;
      v.piece_id = pc.signature();
      v.certificate = std::move(r);
    }
  }
  return v;
}

SweepReport sufficient_sweep(const NonsmoothProgram& p, const CheckOptions& opt) {
  SweepReport rep;
  const double tol = opt.tol.certificate;
  const std::vector<Vector> dirs = critical_cone_sample(p, opt);
  rep.caveat = "margin over " + std::to_string(dirs.size()) +
               " tested unit critical directions (piece-cone generators, seeded combinations, sphere samples)";
  if (dirs.empty()) {
    rep.margin = kInf;
    rep.verdict = SecondOrderClass::certified;
    rep.epi_probe = RegularityVerdict::consistent;
    rep.caveat = "critical cone is {0}; growth holds vacuously";
    return rep;
  }
  rep.margin = kInf;
  bool unknown = false;
  for (const Vector& d : dirs) {
    DirectionVerdict v = second_order_value(p, d, opt);
    if (std::isnan(v.soc_value)) {
      unknown = true;
    } else {
      rep.margin = std::min(rep.margin, v.soc_value);
      if (v.soc_value <= tol) rep.witnesses.push_back(v);
    }
    rep.verdicts.push_back(std::move(v));
  }
  if (rep.margin < -tol) rep.verdict = SecondOrderClass::necessary_violated;
  else if (unknown) rep.verdict = SecondOrderClass::inconclusive;
  else if (rep.margin <= tol) rep.verdict = SecondOrderClass::degenerate;
  else rep.verdict = SecondOrderClass::certified;

  // Epi-regularity of f is a hypothesis of the sufficient condition; probe it.
  rep.epi_probe = RegularityVerdict::consistent;
  const Vector w0 = Vector::Zero(p.dim());
  const std::size_t probes = std::min<std::size_t>(dirs.size(), 8);
  for (std::size_t i = 0; i < probes; ++i) {
    for (PathFamily fam : {PathFamily::constant_w, PathFamily::random_bounded}) {
      const RegularityVerdict r =
          regularity_probe(*p.f, p.x_star, dirs[i], w0, fam, RegularityMode::epi, opt.seed + i).verdict;
      if (r == RegularityVerdict::violated) rep.epi_probe = r;
      else if (r == RegularityVerdict::inconclusive && rep.epi_probe == RegularityVerdict::consistent) rep.epi_probe = r;
    }
  }
  return rep;
}

namespace {

bool feasible(const NonsmoothProgram& p, const Vector& z) {
  const Vector g = p.G->eval(z);
  return distance(p.K, g) <= 1e-12 * scale_of(g);
}

// Gauss-Newton restoration: project x onto the linearization of Psi at the
// current iterate. Jacobian columns come from dd1 along unit vectors.
Vector restoration(const NonsmoothProgram& p, const Vector& x) {
  const int n = p.dim();
  const PolyhedralSet k = p.K.to_hform();
  Vector z = x;
  for (int it = 0; it < 80 && !feasible(p, z); ++it) {
    const Vector g = p.G->eval(z);
    Matrix j(g.size(), n);
    for (int i = 0; i < n; ++i) j.col(i) = p.G->dd1(z, Vector::Unit(n, i));
    const Vector shift = g - j * z;
    const PolyhedralSet lin =
        PolyhedralSet::hform(k.a() * j, k.b() - k.a() * shift, k.c() * j, k.e() - k.c() * shift);
    try {
      z = project(lin, x);
    } catch (const std::exception&) {
      break;
    }
  }
  return z;
}

// Upper bound on d(x, Psi): the better of Gauss-Newton restoration and
// bisection along [x, x*], refined by a pattern search that only accepts
// feasible points closer to x.
double distance_to_feasible(const NonsmoothProgram& p, const Vector& x) {
  if (feasible(p, x)) return 0.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(p, x + mid * (p.x_star - x))) hi = mid;
    else lo = mid;
  }
  Vector z = x + hi * (p.x_star - x);
  const Vector r = restoration(p, x);
  if (feasible(p, r) && (r - x).norm() < (z - x).norm()) z = r;
  double best = (z - x).norm();
  double h = 0.5 * best;
  const int n = p.dim();
  int evals = 0;
  while (h > 1e-12 * (1 + x.norm()) && evals < 4000) {
    bool moved = false;
    std::vector<Vector> steps;
    if ((x - z).norm() > 0) steps.push_back((x - z).normalized());
    for (int i = 0; i < n; ++i) {
      steps.push_back(Vector::Unit(n, i));
      steps.push_back(-Vector::Unit(n, i));
    }
    for (const Vector& s : steps) {
      const Vector cand = z + h * s;
      ++evals;
      const double dist = (cand - x).norm();
      if (dist < best && feasible(p, cand)) {
        z = cand;
        best = dist;
        moved = true;
        break;
      }
    }
    if (!moved) h *= 0.5;
  }
  return best;
}

}  // namespace

MscqProbeReport mscq_probe(const NonsmoothProgram& p, double radius, int n, std::uint64_t seed) {
  if (!(radius > 0)) throw std::invalid_argument("mscq_probe: radius must be positive");
  MscqProbeReport rep;
  rep.radius = radius;
  constexpr int shells = 5;
  const int per = std::max(1, n / shells);
  const std::vector<Vector> dirs = sphere_directions(p.dim(), per, seed);
  for (int j = 0; j < shells; ++j) {
    const double r = std::ldexp(radius, -j);
    double top = 0.0;
    for (const Vector& u : dirs) {
      const Vector x = p.x_star + r * u;
      const double dg = distance(p.K, p.G->eval(x));
      if (dg <= 1e-10) continue;
      const double ratio = distance_to_feasible(p, x) / dg;
      rep.kappa.push_back(ratio);
      top = std::max(top, ratio);
    }
    rep.shell_radius.push_back(r);
    rep.shell_max.push_back(top);
    rep.max_ratio = std::max(rep.max_ratio, top);
  }
  // Bounded kappa cannot keep growing as the shells shrink.
  const double outer = rep.shell_max.front(), inner = rep.shell_max.back();
  rep.verdict = (inner > 4.0 * outer + 1e-9 || rep.max_ratio > 1e8) ? MscqVerdict::suspect : MscqVerdict::bounded;
  return rep;
}

}  // namespace nogap

namespace nogap {

GrowthReport growth_probe(const NonsmoothProgram& p, double radius, int n, std::uint64_t seed,
                          double certified_margin) {
  if (!(radius > 0.0) || n <= 0) throw std::invalid_argument("growth_probe: radius and n must be positive");
  GrowthReport rep;
  rep.samples = n;
  const double f_star = p.f->eval(p.x_star)(0);
  double gamma = std::numeric_limits<double>::infinity();
  for (const Vector& x : ball_points(p.x_star, radius, n, seed)) {
    const double dist = (x - p.x_star).norm();
    if (dist < 1e-12) continue;
    const Vector g = p.G->eval(x);
    if (distance(p.K, g) > 1e-10 * scale_of(g)) continue;
    ++rep.feasible;
    const double diff = p.f->eval(x)(0) - f_star;
    if (diff <= 1e-14 * (1.0 + std::abs(f_star))) rep.violations.push_back(x);
    gamma = std::min(gamma, diff / (dist * dist));
  }
  rep.gamma_hat = rep.feasible == 0 ? std::numeric_limits<double>::infinity() : std::max(0.0, gamma);
  if (certified_margin > 0.0 && std::isfinite(certified_margin)) {
    rep.consistent_with_margin = rep.gamma_hat >= rep.margin_ratio * certified_margin;
  }
  return rep;
}

}  // namespace nogap
