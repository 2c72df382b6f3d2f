#pragma once

// Seeded polyhedral triples (K, y, d) with y in K and d in T_K(y).

#include "nogap/cones.hpp"
#include "nogap/sampling.hpp"

#include <random>

namespace nogap::testing {

struct ConeTriple {
  PolyhedralSet k;
  Vector y;
  Vector d;
};

inline ConeTriple random_cone_triple(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> pick_n(2, 4);
  const int n = pick_n(rng);
  const int m = n + 2;
  const int ne = static_cast<int>(seed % 3 == 0);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = n01(rng);
  Matrix a(m, n), c(ne, n);
  Vector b(m);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
  for (int i = 0; i < c.size(); ++i) c.data()[i] = n01(rng);
  for (int i = 0; i < m; ++i) {
    const bool active = i < 2 + static_cast<int>(seed % 2);
    b(i) = a.row(i).dot(y) + (active ? 0.0 : 0.5 + std::abs(n01(rng)));
  }
  ConeTriple t{PolyhedralSet::hform(a, b, c, c * y), y, Vector::Zero(n)};
  // d: nonnegative combination of tangent generators, sometimes on a face
  const ConeGenerators g = cone_generators(tangent_cone(t.k, y));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const Vector& r : g.rays) {
    if (u(rng) < 0.6) t.d += u(rng) * r;
  }
  for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) t.d += n01(rng) * g.lineality.col(j);
  return t;
}

// dist(y + t d + t^2/2 w, K) / t^2 on t = 2^-k, k = 4..14. Finer t puts the
// distance itself below double precision of y.
inline std::vector<double> parabolic_distance(const PolyhedralSet& k, const Vector& y, const Vector& d,
                                              const Vector& w) {
  std::vector<double> out;
  for (int e = 4; e <= 14; ++e) {
    const double t = std::ldexp(1.0, -e);
    const double dist = distance(k, y + t * d + 0.5 * t * t * w);
    // roundoff floor of the projection
    out.push_back(std::max(0.0, dist - 1e-13 * (1 + y.norm())) / (t * t));
  }
  return out;
}

}  // namespace nogap::testing
