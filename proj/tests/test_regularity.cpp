#include "doctest.h"

#include "nogap/regularity.hpp"
#include "random_dag.hpp"

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

TEST_SUITE("regularity") {

TEST_CASE("abs along t^-1/2 paths has zero residual") {
  const PiecewiseExpr e(ex::abs(ex::var(0)), 1);
  const auto rep = regularity_probe(e, vec({0}), vec({1}), vec({-1}), PathFamily::t_inverse_sqrt, RegularityMode::gph);
  CHECK(rep.verdict == RegularityVerdict::consistent);
  for (double r : rep.residual_over_t2) CHECK(r == 0.0);
  CHECK(rep.t_grid.size() == 17);
  CHECK(rep.t_grid.front() == 1.0 / 16);
}

TEST_CASE("min at a tie along a constant path") {
  const PiecewiseExpr e(ex::min(ex::var(0, 2)), 2);
  const auto rep = regularity_probe(e, vec({0, 0}), vec({1, 0}), vec({0.3, -2}), PathFamily::constant_w,
                                    RegularityMode::gph);
  CHECK(rep.verdict == RegularityVerdict::consistent);
  for (double r : rep.residual_over_t2) CHECK(r == 0.0);
}

TEST_CASE("l2 at the origin is consistent") {
  const PiecewiseExpr e(ex::l2(ex::var(0, 2)), 2);
  const auto rep = regularity_probe(e, vec({0, 0}), vec({1, 0}), vec({0, 1}), PathFamily::constant_w,
                                    RegularityMode::gph);
  CHECK(rep.verdict == RegularityVerdict::consistent);
  // |t d + t^2/2 w| = t sqrt(1 + t^2/4): residual/t^2 = (sqrt(1+t^2/4) - 1)/t ~ t/8
  for (std::size_t k = 0; k + 1 < rep.t_grid.size(); ++k) {
    const double t = rep.t_grid[k];
    CHECK(rep.residual_over_t2[k] == doctest::Approx((std::sqrt(1 + t * t / 4) - 1) / t).epsilon(1e-3));
  }
}

TEST_CASE("random bounded paths on piecewise-affine DAGs") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    testing::DagOptions opt;
    opt.zero_offsets = true;
    opt.smooth_atoms = false;
    const ExprPtr e = testing::DagBuilder(seed, opt).build();
    const Vector d = vec({0.3, -1.0, 0.7});
    const auto rep = regularity_probe(*e, Vector::Zero(3), d, vec({1, 1, 1}), PathFamily::random_bounded,
                                      RegularityMode::gph, seed);
    CHECK(rep.verdict == RegularityVerdict::consistent);
  }
}

TEST_CASE("invalid paths are rejected") {
  const PiecewiseExpr e(ex::abs(ex::var(0)), 1);
  auto path = [](double t) { return vec({1.0 / t}); };
  CHECK_THROWS_AS(regularity_probe_path(e, vec({0}), vec({1}), path, RegularityMode::gph), InvalidProbePath);
}

TEST_CASE("residual classifier") {
  std::vector<double> flat(17, 0.5);
  CHECK(classify_residuals(flat, 0.0) == RegularityVerdict::violated);
  std::vector<double> decay;
  for (int k = 0; k < 17; ++k) decay.push_back(std::ldexp(1.0, -k - 4));
  CHECK(classify_residuals(decay, 0.0) == RegularityVerdict::consistent);
  std::vector<double> slow;
  for (int k = 0; k < 17; ++k) slow.push_back(1e-2 / (1 + k));
  CHECK(classify_residuals(slow, 0.0) == RegularityVerdict::inconclusive);
}

TEST_CASE("epi mode ignores upward residuals") {
  auto p = std::make_shared<Polynomial>(1, 1);
  p->add_term(0, 1.0, {3});
  const PiecewiseExpr e(ex::smooth(p, ex::var(0)), 1);
  const auto g = regularity_probe(e, vec({1}), vec({1}), vec({1}), PathFamily::constant_w, RegularityMode::gph);
  const auto ep = regularity_probe(e, vec({1}), vec({1}), vec({1}), PathFamily::constant_w, RegularityMode::epi);
  CHECK(g.verdict == RegularityVerdict::consistent);
  CHECK(ep.verdict == RegularityVerdict::consistent);
  for (std::size_t k = 0; k < g.t_grid.size(); ++k) CHECK(ep.residual_over_t2[k] <= g.residual_over_t2[k]);
}

}
