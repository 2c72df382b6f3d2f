#include "nogap/sampling.hpp"

#include <boost/random/sobol.hpp>

#include <cmath>
#include <numbers>

namespace nogap {

std::vector<Vector> sphere_directions(int dim, int count, std::uint64_t seed) {
  std::vector<Vector> out;
  if (dim <= 0 || count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  if (dim == 1) {
    for (int i = 0; i < count; ++i) out.push_back(Vector::Constant(1, i % 2 == 0 ? 1.0 : -1.0));
    return out;
  }
  const int pairs = (dim + 1) / 2;
  boost::random::sobol qrng(static_cast<std::size_t>(2 * pairs));
  Rng rng(seed);
  std::uniform_real_distribution<double> shift_dist(0.0, 1.0);
  std::vector<double> shift(static_cast<std::size_t>(2 * pairs));
  for (double& s : shift) s = shift_dist(rng);
  const double scale = 1.0 / (static_cast<double>(qrng.max()) + 1.0);
  while (static_cast<int>(out.size()) < count) {
    Vector z(2 * pairs);
    for (int k = 0; k < 2 * pairs; ++k) {
      double u = static_cast<double>(qrng()) * scale + shift[static_cast<std::size_t>(k)];
      u -= std::floor(u);
      z(k) = std::max(u, 1e-300);
    }
    Vector g(dim);
    for (int p = 0; p < pairs; ++p) {
      const double r = std::sqrt(-2.0 * std::log(z(2 * p)));
      const double th = 2.0 * std::numbers::pi * z(2 * p + 1);
      if (2 * p < dim) g(2 * p) = r * std::cos(th);
      if (2 * p + 1 < dim) g(2 * p + 1) = r * std::sin(th);
    }
    const double nrm = g.norm();
    if (nrm < 1e-12) continue;
    out.push_back(g / nrm);
  }
  return out;
}

std::vector<Vector> ball_points(const Vector& center, double radius, int count, std::uint64_t seed) {
  const int dim = static_cast<int>(center.size());
  std::vector<Vector> dirs = sphere_directions(dim, count, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(dirs.size());
  for (const Vector& d : dirs) {
    const double r = radius * std::pow(u01(rng), 1.0 / std::max(dim, 1));
    out.push_back(center + r * d);
  }
  return out;
}

std::vector<Vector> dedup_directions(const std::vector<Vector>& dirs, double tol) {
  std::vector<Vector> out;
  for (const Vector& d : dirs) {
    bool dup = false;
    for (const Vector& e : out) {
      if ((d - e).cwiseAbs().maxCoeff() <= tol) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(d);
  }
  return out;
}

}  // namespace nogap
