#include "doctest.h"

#include "bilevel_fixtures.hpp"
#include "nogap/cones.hpp"
#include "nogap/sampling.hpp"

#include <cmath>

using namespace nogap;
using namespace nogap::testing;

namespace {

// Closed-form lower solution of planar_fixture: the projection of x onto
// {y1 <= 0, y1 + y2 <= x1}.
Vector planar_y(const Vector& x) {
  Matrix a(2, 2);
  a << 1, 0, 1, 1;
  const PolyhedralSet k = PolyhedralSet::hform(a, vec({0, x(0)}), Matrix(0, 2), Vector(0));
  return project(k, x);
}

BilevelProblem with_upper(BilevelProblem bp, SmoothMapPtr G, SmoothMapPtr H) {
  bp.G = std::move(G);
  bp.H = std::move(H);
  return bp;
}

std::vector<BilevelProblem> exact_fixtures() {
  std::vector<BilevelProblem> out{qp_fixture(), degenerate_fixture(), curved_fixture(), planar_fixture()};
  out.push_back(with_upper(qp_fixture(), vpoly(2, {{{1, {0, 0}}, {-1, {1, 0}}}}), nullptr));
  out.push_back(lower_qp(vpoly(2, {{{1, {1, 0}}}}), 1.0));
  return out;
}

}  // namespace

TEST_SUITE("bilevel") {

TEST_CASE("multiplier polytopes") {
  const MultiplierPolytope a = multiplier_polytope(worked_example());
  REQUIRE(a.vertices.size() == 2);
  CHECK(a.vertices[0](0) == doctest::Approx(0.0));
  CHECK(a.vertices[0](1) == doctest::Approx(2.0));
  CHECK(a.vertices[1](0) == doctest::Approx(2.0));
  CHECK(a.vertices[1](1) == doctest::Approx(0.0));
  CHECK(a.active == std::vector<int>{0, 1});

  const MultiplierPolytope b = multiplier_polytope(qp_fixture());
  REQUIRE(b.vertices.size() == 1);
  CHECK(b.vertices[0](0) == doctest::Approx(2.0));

  BilevelProblem free = qp_fixture();
  free.g = nullptr;
  free.y_star = vec({1});
  const MultiplierPolytope c = multiplier_polytope(free);
  REQUIRE(c.vertices.size() == 1);
  CHECK(c.vertices[0].size() == 0);

  BilevelProblem off = qp_fixture();
  off.y_star = vec({-0.5});
  CHECK_THROWS_AS(multiplier_polytope(off), NotKKTError);
}

TEST_CASE("vertices satisfy KKT with exact complementarity") {
  for (const BilevelProblem& bp : {worked_example(), qp_fixture(), degenerate_fixture(), planar_fixture()}) {
    const MultiplierPolytope poly = multiplier_polytope(bp);
    for (const Vector& v : poly.vertices) {
      KKTPoint k;
      k.y = bp.y_star;
      k.mu = v.head(bp.r());
      k.xi = v.tail(bp.s());
      CHECK(kkt_residual(bp, bp.x_star, k).cwiseAbs().maxCoeff() <= 1e-8);
      const Vector g = bp.g->value(bp.z_star());
      for (int i = 0; i < bp.s(); ++i) {
        CHECK(k.xi(i) >= 0.0);
        if (g(i) < -1e-8) CHECK(k.xi(i) == 0.0);
      }
    }
  }
}

TEST_CASE("constraint qualifications") {
  const CQReport a = cq_report(worked_example());
  CHECK(a.mfcq);
  REQUIRE(a.mfcq_witness.size() == 1);
  CHECK(a.mfcq_witness(0) < 0.0);
  CHECK(!a.licq);
  CHECK(a.licq_rank == 1);
  CHECK(a.crcq_consistent);
  CHECK(a.ssosc);
  CHECK(a.ssosc_vertices.size() == 2);

  const CQReport b = cq_report(qp_fixture());
  CHECK(b.mfcq);
  CHECK(b.licq);
  CHECK(b.crcq_consistent);
  CHECK(b.ssosc);
  CHECK(b.exact());

  BilevelProblem parallel = degenerate_fixture();
  parallel.g = vpoly(2, {{{1, {0, 1}}}, {{2, {0, 1}}}});
  const CQReport c = cq_report(parallel);
  CHECK(!c.licq);
  CHECK(c.licq_rank == 1);
  CHECK(c.mfcq);

  // y^2 <= 0 at y = 0: no strictly decreasing direction, gradient rank drops nearby.
  BilevelProblem square = degenerate_fixture();
  square.g = vpoly(2, {{{1, {0, 2}}}});
  const CQReport d = cq_report(square);
  CHECK(!d.mfcq);
  CHECK(!d.crcq_consistent);
}

TEST_CASE("W enumeration") {
  const BilevelProblem qp = qp_fixture();
  const std::vector<Diag> a = enumerate_W(qp, reference_kkt(qp));
  REQUIRE(a.size() == 1);
  CHECK(a[0] == Diag{0});

  const BilevelProblem dg = degenerate_fixture();
  const std::vector<Diag> b = enumerate_W(dg, reference_kkt(dg));
  REQUIRE(b.size() == 2);
  CHECK(b[0] == Diag{0});
  CHECK(b[1] == Diag{1});

  const BilevelProblem cv = curved_fixture();
  const std::vector<Diag> c = enumerate_W(cv, reference_kkt(cv));
  REQUIRE(c.size() == 1);
  CHECK(c[0] == Diag{1});

  const BilevelProblem pl = planar_fixture();
  CHECK(enumerate_W(pl, reference_kkt(pl)).size() == 4);
}

TEST_CASE("sensitivity pieces by hand elimination") {
  const BilevelProblem dg = degenerate_fixture();
  const KKTPoint k = reference_kkt(dg);
  const CQReport cq = cq_report(dg);

  const SensitivityPiece w0 = assemble_sensitivity(dg, k, cq, Diag{0});
  Matrix a0(2, 2);
  a0 << 2, 1, 1, 0;
  CHECK((w0.A - a0).norm() == 0.0);
  CHECK(w0.H(0, 0) == doctest::Approx(0.0));
  CHECK(w0.H(1, 0) == doctest::Approx(-2.0));

  const SensitivityPiece w1 = assemble_sensitivity(dg, k, cq, Diag{1});
  Matrix a1(2, 2);
  a1 << 2, 1, 0, -1;
  CHECK((w1.A - a1).norm() == 0.0);
  CHECK(w1.H(0, 0) == doctest::Approx(-1.0));
  CHECK(w1.H(1, 0) == doctest::Approx(0.0));

  const BilevelProblem qp = qp_fixture();
  const SensitivityPiece q0 = assemble_sensitivity(qp, reference_kkt(qp), cq_report(qp), Diag{0});
  CHECK(q0.H(0, 0) == doctest::Approx(0.0));
  CHECK(q0.H(1, 0) == doctest::Approx(-2.0));
  CHECK((q0.A * q0.H - q0.rhs).norm() <= 1e-9);

  const BilevelProblem pe = worked_example();
  CHECK_THROWS_AS(assemble_sensitivity(pe, reference_kkt(pe), cq_report(pe), Diag{0, 0}), AssumptionError);
}

TEST_CASE("first-order sensitivity on the degenerate fixture") {
  const BilevelProblem dg = degenerate_fixture();
  const BilevelContext ctx = analyze(dg);
  REQUIRE(ctx.exact);
  for (double d : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
    const FirstOrderJet j = solution_map_dd1(ctx, vec({d}));
    CHECK(std::abs(j.y1(0) - std::min(d, 0.0)) <= 1e-9);
    // xi(x) = 2 max(x, 0) from stationarity of the oracle
    CHECK(std::abs(j.xi1(0) - 2.0 * std::max(d, 0.0)) <= 1e-9);
    if (d > 0) CHECK(j.accepting == std::vector<Diag>{Diag{0}});
    if (d < 0) CHECK(j.accepting == std::vector<Diag>{Diag{1}});
    if (d == 0) CHECK(j.accepting.size() == 2);
  }
}

TEST_CASE("first-order sensitivity matches the projection oracle") {
  const BilevelProblem pl = planar_fixture();
  const BilevelContext ctx = analyze(pl);
  REQUIRE(ctx.exact);
  for (const Vector& d : sphere_directions(2, 64, 11)) {
    const FirstOrderJet j = solution_map_dd1(ctx, d);
    // The oracle is piecewise linear and positively homogeneous.
    const Vector oracle = planar_y(d);
    CHECK((j.y1 - oracle).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("dd1 is positively homogeneous") {
  for (const BilevelProblem& bp : {degenerate_fixture(), planar_fixture(), qp_fixture()}) {
    const BilevelContext ctx = analyze(bp);
    for (const Vector& d : sphere_directions(bp.n, 16, 5)) {
      const FirstOrderJet a = solution_map_dd1(ctx, d);
      for (double t : {0.25, 3.0}) {
        const FirstOrderJet b = solution_map_dd1(ctx, t * d);
        CHECK((b.y1 - t * a.y1).lpNorm<Eigen::Infinity>() <= 1e-9);
        CHECK((b.xi1 - t * a.xi1).lpNorm<Eigen::Infinity>() <= 1e-9);
      }
    }
  }
}

TEST_CASE("accepting pieces agree on shared boundaries") {
  const BilevelContext ctx = analyze(planar_fixture());
  // Boundaries of the planar pieces: rays where two branch rows vanish.
  for (const Vector& d : {vec({0, 1}), vec({0, -1}), vec({1, 0}), vec({-1, 1})}) {
    const FirstOrderJet j = solution_map_dd1(ctx, d);
    CHECK(!j.accepting.empty());
  }
  const FirstOrderJet z = solution_map_dd1(ctx, Vector::Zero(2));
  CHECK(z.accepting.size() == 4);
  CHECK(z.y1.norm() == 0.0);
}

TEST_CASE("second-order sensitivity") {
  const BilevelContext dg = analyze(degenerate_fixture());
  CHECK(solution_map_dd2(dg, vec({1}), vec({0})).y2(0) == doctest::Approx(0.0));
  CHECK(solution_map_dd2(dg, vec({0}), vec({1})).y2(0) == doctest::Approx(0.0));
  CHECK(solution_map_dd2(dg, vec({0}), vec({-1})).y2(0) == doctest::Approx(-1.0));
  CHECK(solution_map_dd2(dg, vec({-1}), vec({2})).y2(0) == doctest::Approx(2.0));

  // y(x) = x^2: y'' = 2 d^2 + 2 x w = 2 d^2 at x = 0.
  const BilevelContext cv = analyze(curved_fixture());
  for (double d : {-1.0, 0.5, 2.0}) {
    const SolutionMapJet j = solution_map_dd2(cv, vec({d}), vec({0.7}));
    CHECK(j.y2(0) == doctest::Approx(2.0 * d * d).epsilon(1e-12));
    CHECK(std::abs(j.y2(0) - numeric_dd2(cv, vec({d}), vec({0.7}))(0)) <= 1e-5);
  }
}

TEST_CASE("second-order sensitivity matches parabolic quotients of the projection oracle") {
  const BilevelContext ctx = analyze(planar_fixture());
  int n = 0;
  for (const Vector& d : sphere_directions(2, 16, 3)) {
    for (const Vector& w : sphere_directions(2, 4, 9)) {
      const SolutionMapJet j = solution_map_dd2(ctx, d, w);
      const double t = 1e-4;
      const Vector q = 2.0 * (planar_y(t * d + 0.5 * t * t * w) - t * j.y1) / (t * t);
      CHECK((j.y2 - q).lpNorm<Eigen::Infinity>() <= 1e-5);
      ++n;
    }
  }
  CHECK(n == 64);
}

TEST_CASE("kkt tracking") {
  const BilevelProblem pe = worked_example();
  const KKTPoint k0 = reference_kkt(pe);
  const TrackResult a = kkt_track(pe, vec({0.5}), k0);
  CHECK(a.point.y(0) == doctest::Approx(0.5));
  CHECK(a.point.xi(0) == doctest::Approx(3.0));
  CHECK(a.point.xi(1) == doctest::Approx(0.0));
  CHECK(a.point.residual <= 1e-10);

  const TrackResult b = kkt_track(pe, vec({-0.5}), k0);
  CHECK(b.point.y(0) == doctest::Approx(0.5));
  CHECK(b.point.xi(0) == doctest::Approx(0.0));
  CHECK(b.point.xi(1) == doctest::Approx(3.0));

  const BilevelProblem dg = degenerate_fixture();
  const TrackResult c = kkt_track(dg, vec({-0.3}), reference_kkt(dg));
  CHECK(c.point.y(0) == doctest::Approx(-0.3));
  CHECK(c.point.xi(0) == doctest::Approx(0.0));

  TrackOptions few;
  few.max_iterations = 0;
  CHECK_THROWS_AS(kkt_track(pe, vec({0.5}), k0, few), TrackingError);
}

TEST_CASE("tracking differences converge to the directional derivative") {
  auto check = [](const BilevelProblem& bp, const Vector& d, const Vector& expected) {
    const BilevelContext ctx = analyze(bp);
    const Vector y1 = solution_map_dd1(ctx, d).y1;
    CHECK((y1 - expected).lpNorm<Eigen::Infinity>() <= 1e-9);
    std::vector<Vector> q;
    for (int k = 6; k <= 14; ++k) {
      const double t = std::ldexp(1.0, -k);
      const Vector y = kkt_track(bp, bp.x_star + t * d, ctx.kkt).point.y;
      q.push_back((y - bp.y_star) / t);
    }
    // Richardson on consecutive halvings.
    const Vector extrap = 2.0 * q.back() - q[q.size() - 2];
    CHECK((extrap - y1).lpNorm<Eigen::Infinity>() <= 1e-5);
  };
  check(qp_fixture(), vec({1}), vec({0}));
  check(qp_fixture(), vec({-1}), vec({0}));
  check(worked_example(), vec({1}), vec({-1}));
  check(worked_example(), vec({-1}), vec({-1}));
  check(curved_fixture(), vec({1}), vec({0}));
}

TEST_CASE("numeric fallback on the worked example") {
  const BilevelContext ctx = analyze(worked_example());
  CHECK(!ctx.exact);
  const FirstOrderJet j = solution_map_dd1(ctx, vec({0.5}));
  CHECK(j.numeric);
  CHECK(j.y1(0) == doctest::Approx(-0.5).epsilon(1e-9));
  const SolutionMapJet s = solution_map_dd2(ctx, vec({1}), vec({0.5}));
  CHECK(s.numeric);
  // y = 1 - |x| along x = t + t^2 w / 2 gives y'' = -w.
  CHECK(s.y2(0) == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK_THROWS_AS(gmfcq_check(ctx, BilevelForm::sp), AssumptionError);
}

TEST_CASE("GMFCQ") {
  const BilevelProblem qp = qp_fixture();
  SUBCASE("inactive upper constraint holds vacuously") {
    const BilevelProblem bp = with_upper(qp, vpoly(2, {{{1, {1, 0}}, {-2, {0, 0}}}}), nullptr);
    const BilevelContext ctx = analyze(bp);
    CHECK(ctx.active_G.empty());
    CHECK(gmfcq_check(ctx, BilevelForm::sp).holds);
    CHECK(gmfcq_check(ctx, BilevelForm::fp).holds);
  }
  SUBCASE("active upper constraint with a strict direction") {
    const BilevelProblem bp = with_upper(qp, vpoly(2, {{{1, {0, 0}}, {-1, {1, 0}}}}), nullptr);
    const BilevelContext ctx = analyze(bp);
    const GmfcqReport sp = gmfcq_check(ctx, BilevelForm::sp);
    REQUIRE(sp.pieces.size() == 1);
    CHECK(sp.holds);
    CHECK(sp.pieces[0].witness(0) == doctest::Approx(1.0));
    CHECK(gmfcq_check(ctx, BilevelForm::fp).holds);
  }
  SUBCASE("upper equality with full-rank reduced Jacobian") {
    const BilevelProblem bp = with_upper(qp, nullptr, vpoly(2, {{{1, {1, 0}}, {-1, {0, 0}}}}));
    const BilevelContext ctx = analyze(bp);
    const GmfcqReport sp = gmfcq_check(ctx, BilevelForm::sp);
    CHECK(sp.holds);
    CHECK(sp.pieces[0].rank_ok);
    CHECK(gmfcq_check(ctx, BilevelForm::fp).holds);
  }
  SUBCASE("equality that the lower response cancels") {
    // H = x - y at x* = 1 with y(x) = 0 near 1: reduced Jacobian 1. At the
    // degenerate fixture, H = y - x has reduced Jacobian 0 on the W = [1] piece.
    const BilevelProblem bp = with_upper(degenerate_fixture(), nullptr, vpoly(2, {{{1, {0, 1}}, {-1, {1, 0}}}}));
    const BilevelContext ctx = analyze(bp);
    const GmfcqReport sp = gmfcq_check(ctx, BilevelForm::sp);
    const GmfcqReport fp = gmfcq_check(ctx, BilevelForm::fp);
    CHECK(!sp.holds);
    CHECK(!fp.holds);
    REQUIRE(sp.pieces.size() == fp.pieces.size());
    for (std::size_t i = 0; i < sp.pieces.size(); ++i) CHECK(sp.pieces[i].rank_ok == fp.pieces[i].rank_ok);
  }
}

TEST_CASE("GMFCQ forms agree piece by piece") {
  for (const BilevelProblem& bp : exact_fixtures()) {
    const BilevelContext ctx = analyze(bp);
    const GmfcqReport sp = gmfcq_check(ctx, BilevelForm::sp);
    const GmfcqReport fp = gmfcq_check(ctx, BilevelForm::fp);
    CHECK(sp.holds == fp.holds);
    REQUIRE(sp.pieces.size() == fp.pieces.size());
    for (std::size_t i = 0; i < sp.pieces.size(); ++i) {
      CHECK(sp.pieces[i].rank_ok == fp.pieces[i].rank_ok);
      CHECK(sp.pieces[i].direction_ok == fp.pieces[i].direction_ok);
    }
  }
}

TEST_CASE("first-order checks") {
  const BilevelContext pe = analyze(worked_example());
  const BilevelFirstOrder a = first_order_check_bilevel(pe, BilevelForm::sp);
  CHECK(a.status == CheckStatus::holds);
  CHECK(a.numeric);
  REQUIRE(a.tangent_generators.size() == 1);
  CHECK(a.tangent_generators[0](0) == doctest::Approx(1.0));
  REQUIRE(a.critical_generators.size() == 1);
  CHECK(a.critical_generators[0](0) == doctest::Approx(1.0));
  CHECK(a.min_value == doctest::Approx(0.0));
  CHECK(first_order_check_bilevel(pe, BilevelForm::fp).status == CheckStatus::inconclusive);

  const BilevelContext qp = analyze(qp_fixture());
  for (BilevelForm form : {BilevelForm::sp, BilevelForm::fp}) {
    const BilevelFirstOrder b = first_order_check_bilevel(qp, form);
    CHECK(b.status == CheckStatus::holds);
    CHECK(b.exact);
    CHECK(b.critical_generators.size() == 2);
  }

  const BilevelProblem lin = lower_qp(vpoly(2, {{{1, {1, 0}}}}), 1.0);
  const BilevelContext lc = analyze(lin);
  for (BilevelForm form : {BilevelForm::sp, BilevelForm::fp}) {
    const BilevelFirstOrder c = first_order_check_bilevel(lc, form);
    CHECK(c.status == CheckStatus::violated);
    REQUIRE(c.witness.size() == 1);
    CHECK(c.witness(0) == doctest::Approx(-1.0));
  }
}

TEST_CASE("dual multipliers") {
  const BilevelContext qp = analyze(qp_fixture());
  for (BilevelForm form : {BilevelForm::sp, BilevelForm::fp}) {
    const DualReport d = dual_multipliers(qp, form);
    CHECK(d.feasible);
    CHECK(d.residual <= 1e-12);
  }
  const BilevelContext act = analyze(with_upper(qp_fixture(), vpoly(2, {{{1, {0, 0}}, {-1, {1, 0}}}}), nullptr));
  const DualReport e = dual_multipliers(act, BilevelForm::sp);
  CHECK(e.feasible);
  REQUIRE(e.lambda_G.size() == 1);
  CHECK(e.lambda_G(0) == doctest::Approx(0.0));
  CHECK(dual_multipliers(act, BilevelForm::fp).feasible);

  const BilevelContext lin = analyze(lower_qp(vpoly(2, {{{1, {1, 0}}}}), 1.0));
  CHECK(!dual_multipliers(lin, BilevelForm::sp).feasible);
  CHECK(!dual_multipliers(lin, BilevelForm::fp).feasible);
}

TEST_CASE("dual feasibility matches the primal verdict") {
  for (const BilevelProblem& bp : exact_fixtures()) {
    const BilevelContext ctx = analyze(bp);
    const bool primal = first_order_check_bilevel(ctx, BilevelForm::sp).status == CheckStatus::holds;
    const DualReport sp = dual_multipliers(ctx, BilevelForm::sp);
    const DualReport fp = dual_multipliers(ctx, BilevelForm::fp);
    CHECK(sp.feasible == primal);
    CHECK(fp.feasible == primal);
    CHECK(sp.feasible_for == fp.feasible_for);
  }
}

TEST_CASE("second-order values") {
  const BilevelContext pe = analyze(worked_example());
  BilevelDirection bd;
  CHECK(std::abs(sp_second_order_value(pe, vec({1}), &bd) - 4.0) <= 1e-6);
  CHECK(bd.numeric);
  CHECK(bd.y1(0) == doctest::Approx(-1.0));

  const BilevelContext qp = analyze(qp_fixture());
  CHECK(sp_second_order_value(qp, vec({1})) == doctest::Approx(2.0));
  CHECK(fp_second_order_value(qp, vec({-1})) == doctest::Approx(2.0));

  // F = x^2 + min(x, 0)^2 along the oracle.
  const BilevelContext dg = analyze(degenerate_fixture());
  CHECK(sp_second_order_value(dg, vec({1})) == doctest::Approx(2.0));
  CHECK(sp_second_order_value(dg, vec({-1})) == doctest::Approx(4.0));
  CHECK(fp_second_order_value(dg, vec({-1})) == doctest::Approx(4.0));

  // F = x^2 + y with y = x^2: F-hat = 2 x^2.
  const BilevelContext cv = analyze(curved_fixture());
  CHECK(sp_second_order_value(cv, vec({1})) == doctest::Approx(4.0));
  CHECK(fp_second_order_value(cv, vec({1})) == doctest::Approx(4.0));
}

TEST_CASE("second-order sweeps") {
  const BilevelContext pe = analyze(worked_example());
  const BilevelSecondOrder a = second_order_check_bilevel(pe, BilevelForm::sp);
  CHECK(a.verdict == SecondOrderClass::certified);
  CHECK(std::abs(a.margin - 4.0) <= 1e-6);
  CHECK(a.numeric);
  CHECK(second_order_check_bilevel(pe, BilevelForm::fp).verdict == SecondOrderClass::inconclusive);

  const BilevelContext qp = analyze(qp_fixture());
  const BilevelSecondOrder b = second_order_check_bilevel(qp, BilevelForm::sp);
  CHECK(b.verdict == SecondOrderClass::certified);
  CHECK(b.margin == doctest::Approx(2.0));

  BilevelProblem flat = qp_fixture();
  flat.F = vpoly(2, {{}});
  const BilevelContext fc = analyze(flat);
  const BilevelSecondOrder c = second_order_check_bilevel(fc, BilevelForm::sp);
  CHECK(c.verdict == SecondOrderClass::degenerate);
  CHECK(c.margin == doctest::Approx(0.0));
  CHECK(!c.witnesses.empty());

  const BilevelContext lin = analyze(lower_qp(vpoly(2, {{{1, {1, 0}}}}), 1.0));
  CHECK(second_order_check_bilevel(lin, BilevelForm::sp).verdict == SecondOrderClass::necessary_violated);
}

TEST_CASE("SP and FP forms agree") {
  for (const BilevelProblem& bp : exact_fixtures()) {
    const BilevelContext ctx = analyze(bp);
    CHECK(first_order_check_bilevel(ctx, BilevelForm::sp).status ==
          first_order_check_bilevel(ctx, BilevelForm::fp).status);
    for (const Vector& d : sphere_directions(bp.n, 256, 17)) {
      const bool sp = sp_critical_member(ctx, d);
      CHECK(sp == fp_critical_member(ctx, d));
      CHECK(sp_tangent_member(ctx, d) == fp_tangent_member(ctx, d));
      if (!sp) continue;
      const double a = sp_second_order_value(ctx, d);
      const double b = fp_second_order_value(ctx, d);
      if (std::isfinite(a) || std::isfinite(b)) CHECK(std::abs(a - b) <= 1e-7 * (1.0 + std::abs(a)));
      else CHECK(a == b);
    }
    const BilevelSecondOrder s = second_order_check_bilevel(ctx, BilevelForm::sp);
    const BilevelSecondOrder f = second_order_check_bilevel(ctx, BilevelForm::fp);
    CHECK(s.verdict == f.verdict);
  }
}

TEST_CASE("growth probes") {
  const BilevelContext pe = analyze(worked_example());
  const GrowthReport a = growth_probe(pe, 0.2, 200, 1, 4.0);
  CHECK(a.gamma_hat >= 1.0);
  CHECK(a.violations.empty());
  CHECK(a.feasible > 0);
  CHECK(a.consistent_with_margin);

  const BilevelContext qp = analyze(qp_fixture());
  const GrowthReport b = growth_probe(qp, 0.3, 200, 2, 2.0);
  CHECK(b.gamma_hat >= 0.9);
  CHECK(b.gamma_hat <= 1.1);

  BilevelProblem flat = qp_fixture();
  flat.F = vpoly(2, {{}});
  const BilevelContext fc = analyze(flat);
  const GrowthReport c = growth_probe(fc, 0.3, 50, 3);
  CHECK(c.gamma_hat == 0.0);
  CHECK(c.violations.size() == static_cast<std::size_t>(c.feasible));
}

}  // TEST_SUITE
