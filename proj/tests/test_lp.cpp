#include "doctest.h"

#include "nogap/lp.hpp"
#include "nogap/sampling.hpp"
#include "random_lp.hpp"

#include <cmath>

using namespace nogap;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_SUITE("lp") {

TEST_CASE("trivial programs") {
  LinearProgram a(1);
  a.c << 1;
  a.add_ge(vec({1}), 1);
  const LPResult r = lp_solve(a);
  CHECK(r.status == LPStatus::optimal);
  CHECK(r.optimum == doctest::Approx(1.0));

  LinearProgram b(1);
  b.c << -1;
  b.add_ge(vec({1}), 0);
  const LPResult u = lp_solve(b);
  CHECK(u.status == LPStatus::unbounded);
  CHECK(std::isinf(u.optimum));
  CHECK(b.c.dot(u.ray) < 0);

  LinearProgram c(1);
  c.add_le(vec({1}), -1);
  c.add_ge(vec({1}), 1);
  const LPResult inf = lp_solve(c);
  CHECK(inf.status == LPStatus::infeasible);
  // Farkas: y >= 0, A^T y = 0, b^T y < 0
  CHECK((c.a_in.transpose() * inf.dual_in).norm() <= 1e-9);
  CHECK(c.b_in.dot(inf.dual_in) < 0);
}

TEST_CASE("equalities with redundancy") {
  LinearProgram lp(2);
  lp.c << 1, 2;
  lp.add_eq(vec({1, 1}), 1);
  lp.add_eq(vec({2, 2}), 2);
  lp.add_ge(vec({1, 0}), 0);
  lp.add_ge(vec({0, 1}), 0);
  const LPResult r = lp_solve(lp);
  REQUIRE(r.status == LPStatus::optimal);
  CHECK(r.optimum == doctest::Approx(1.0));

  lp.add_eq(vec({1, 1}), 2);
  CHECK(lp_solve(lp).status == LPStatus::infeasible);
}

TEST_CASE("random LPs agree with vertex enumeration") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 6;
    const int m = trial % 7;
    const LinearProgram lp = testing::random_lp(rng, n, m);
    const LPResult r = lp_solve(lp);
    const auto verts = vertex_enumerate(lp.a_eq, lp.b_eq, lp.a_in, lp.b_in, 100000);
    REQUIRE(!verts.empty());
    double best = INFINITY;
    for (const Vector& v : verts) best = std::min(best, lp.c.dot(v));
    REQUIRE(r.status == LPStatus::optimal);
    CHECK(r.optimum == doctest::Approx(best).epsilon(1e-9));
    CHECK(r.duality_gap <= 1e-8 * (1 + std::abs(r.optimum)));
    // dual objective b^T y equals the optimum
    const double dual_obj = lp.b_eq.dot(r.dual_eq) + lp.b_in.dot(r.dual_in);
    CHECK(std::abs(dual_obj - r.optimum) <= 1e-8 * (1 + std::abs(r.optimum)));
    CHECK(r.dual_in.maxCoeff() <= 1e-12);
  }
}

TEST_CASE("vertex enumeration examples") {
  Matrix aeq(1, 2);
  aeq << 1, 1;
  Matrix ain(2, 2);
  ain << -1, 0, 0, -1;
  const auto v = vertex_enumerate(aeq, vec({2}), ain, vec({0, 0}), 10);
  REQUIRE(v.size() == 2);
  CHECK((v[0] - vec({0, 2})).norm() <= 1e-12);
  CHECK((v[1] - vec({2, 0})).norm() <= 1e-12);

  Matrix box(4, 2);
  box << 1, 0, -1, 0, 0, 1, 0, -1;
  CHECK(vertex_enumerate(Matrix(0, 2), Vector(0), box, vec({1, 0, 1, 0}), 10).size() == 4);

  Matrix line(2, 1);
  line << 1, -1;
  CHECK(vertex_enumerate(Matrix(0, 1), Vector(0), line, vec({-1, -1}), 10).empty());

  CHECK_THROWS_AS(vertex_enumerate(Matrix(0, 2), Vector(0), box, vec({1, 0, 1, 0}), 3), ScaleError);
}

TEST_CASE("degenerate program terminates under Bland's rule") {
  // Many constraints through one vertex.
  LinearProgram lp(3);
  lp.c << -1, -1, -1;
  for (int k = 0; k < 8; ++k) {
    lp.add_le(vec({1.0 + k, 1.0, 2.0 - 0.1 * k}), 0.0);
  }
  lp.add_box(1.0);
  const LPResult r = lp_solve(lp);
  CHECK(r.status == LPStatus::optimal);
  CHECK(r.primal_residual <= 1e-8);
}

}
