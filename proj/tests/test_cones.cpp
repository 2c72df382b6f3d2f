#include "doctest.h"

#include "nogap/cones.hpp"
#include "nogap/regularity.hpp"
#include "random_cones.hpp"

#include <cmath>

using namespace nogap;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

bool same_set(const PolyhedralSet& p, const PolyhedralSet& q) {
  for (const PolyhedralSet* s : {&p, &q}) {
    const PolyhedralSet& other = s == &p ? q : p;
    const ConeGenerators g = cone_generators(*s);
    for (const Vector& r : g.rays) {
      if (!contains(other, r).member) return false;
    }
    for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) {
      if (!contains(other, g.lineality.col(j)).member || !contains(other, Vector(-g.lineality.col(j))).member) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("cones") {

TEST_CASE("membership and distance") {
  const PolyhedralSet half = PolyhedralSet::nonpos(1);
  CHECK(contains(half, vec({-1})).member);
  CHECK(distance(half, vec({-1})) == 0.0);
  CHECK(distance(half, vec({2})) == doctest::Approx(2.0));
  const PolyhedralSet zk = PolyhedralSet::product({Factor::zero, Factor::nonpos});
  CHECK(distance(zk, vec({1, 1})) == doctest::Approx(std::sqrt(2.0)));
  // the same set in H-form goes through the active-set projection
  CHECK(distance(zk.to_hform(), vec({1, 1})) == doctest::Approx(std::sqrt(2.0)));
  const auto cert = contains(zk, vec({1, 1}));
  CHECK(!cert.member);
  CHECK(cert.violation == doctest::Approx(1.0));
  CHECK(cert.nearest_point.norm() == doctest::Approx(0.0));
}

TEST_CASE("H-form projection matches a brute-force oracle") {
  // Oracle: minimum over a fine grid of the triangle x, y >= 0, x + y <= 1.
  Matrix a(3, 2);
  a << -1, 0, 0, -1, 1, 1;
  const PolyhedralSet tri = PolyhedralSet::hform(a, vec({0, 0, 1}), Matrix(0, 2), Vector(0));
  Rng rng(1);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector y = vec({2 * n01(rng), 2 * n01(rng)});
    double best = INFINITY;
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; i + j <= steps; ++j) best = std::min(best, (vec({1.0 * i / steps, 1.0 * j / steps}) - y).norm());
    }
    CHECK(distance(tri, y) <= best + 1e-12);
    CHECK(distance(tri, y) >= best - 2.0 / steps);
  }
}

TEST_CASE("product and H-form agree on membership") {
  const PolyhedralSet p = PolyhedralSet::product({Factor::free, Factor::nonpos, Factor::zero});
  const PolyhedralSet h = p.to_hform();
  Rng rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    Vector y = vec({n01(rng), n01(rng), trial % 2 ? 0.0 : n01(rng)});
    CHECK(contains(p, y).member == contains(h, y).member);
    CHECK(distance(p, y) == doctest::Approx(distance(h, y)).epsilon(1e-9));
  }
}

TEST_CASE("empty sets are detected") {
  Matrix a(2, 1);
  a << 1, -1;
  const PolyhedralSet e = PolyhedralSet::hform(a, vec({-1, -1}), Matrix(0, 1), Vector(0));
  CHECK(e.empty());
  CHECK_THROWS_AS(require_nonempty(e, "K"), std::invalid_argument);
}

TEST_CASE("tangent cones") {
  const PolyhedralSet half = PolyhedralSet::nonpos(1);
  CHECK(tangent_cone(half, vec({0})).factors()[0] == Factor::nonpos);
  CHECK(tangent_cone(half, vec({-1})).factors()[0] == Factor::free);
  const PolyhedralSet t = tangent_cone(PolyhedralSet::nonpos(2), vec({0, -1}));
  CHECK(t.factors() == std::vector<Factor>{Factor::nonpos, Factor::free});
  CHECK_THROWS_AS(tangent_cone(half, vec({1})), std::invalid_argument);
}

TEST_CASE("second-order tangent sets") {
  const PolyhedralSet k2 = PolyhedralSet::nonpos(2);
  const PolyhedralSet t2 = second_order_tangent(k2, vec({0, 0}), vec({-1, 0}));
  CHECK(t2.factors() == std::vector<Factor>{Factor::free, Factor::nonpos});
  const PolyhedralSet z = PolyhedralSet::zero(1);
  CHECK(second_order_tangent(z, vec({0}), vec({0})).factors()[0] == Factor::zero);
  CHECK_THROWS_AS(second_order_tangent(k2, vec({0, 0}), vec({1, 0})), std::invalid_argument);

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = testing::random_cone_triple(seed);
    const Vector zero = Vector::Zero(tr.k.dim());
    CHECK(same_set(second_order_tangent(tr.k, tr.y, zero), tangent_cone(tr.k, tr.y)));
  }
}

TEST_CASE("cones are closed under positive scaling") {
  for (std::uint64_t seed = 30; seed < 50; ++seed) {
    const auto tr = testing::random_cone_triple(seed);
    for (const PolyhedralSet& c : {tangent_cone(tr.k, tr.y), second_order_tangent(tr.k, tr.y, tr.d)}) {
      const ConeGenerators g = cone_generators(c);
      for (const Vector& r : g.rays) {
        for (double s : {0.5, 3.0}) CHECK(contains(c, Vector(s * r)).member);
      }
    }
  }
}

TEST_CASE("generators pass the definitional test and non-members fail it") {
  int members = 0, outsiders = 0;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const auto tr = testing::random_cone_triple(seed);
    const PolyhedralSet t2 = second_order_tangent(tr.k, tr.y, tr.d);
    const ConeGenerators g = cone_generators(t2);
    std::vector<Vector> gens = g.rays;
    for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) {
      gens.push_back(g.lineality.col(j));
      gens.push_back(-g.lineality.col(j));
    }
    for (const Vector& w : gens) {
      CHECK(classify_residuals(testing::parabolic_distance(tr.k, tr.y, tr.d, w), 0.0) ==
            RegularityVerdict::consistent);
      ++members;
    }
    Rng rng(seed);
    std::normal_distribution<double> n01;
    for (int trial = 0, found = 0; trial < 50 && found == 0; ++trial) {
      Vector w(tr.k.dim());
      for (int i = 0; i < w.size(); ++i) w(i) = n01(rng);
      if (distance(t2, w) < 0.1) continue;
      CHECK(classify_residuals(testing::parabolic_distance(tr.k, tr.y, tr.d, w), 0.0) ==
            RegularityVerdict::violated);
      ++outsiders;
      ++found;
    }
  }
  CHECK(members > 50);
  CHECK(outsiders >= 20);
}

TEST_CASE("outer second-order regularity on parabolic sequences") {
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    const auto tr = testing::random_cone_triple(seed);
    const PolyhedralSet t2 = second_order_tangent(tr.k, tr.y, tr.d);
    Rng rng(seed);
    std::normal_distribution<double> n01;
    Vector v(tr.k.dim());
    for (int i = 0; i < v.size(); ++i) v(i) = n01(rng);
    double prev = INFINITY;
    for (int e = 4; e <= 12; e += 4) {
      const double t = std::ldexp(1.0, -e);
      // feasible point near the parabola, then recover w_k from it
      const Vector yk = project(tr.k, tr.y + t * tr.d + 0.5 * t * t * v);
      const Vector wk = 2.0 * (yk - tr.y - t * tr.d) / (t * t);
      if (t * wk.norm() > 1e-2) continue;
      const double dist = distance(t2, wk);
      CHECK(dist <= prev + 1e-6);
      prev = dist;
    }
    CHECK(prev <= 1e-6);
  }
}

}
