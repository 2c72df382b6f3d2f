#include "nogap/regularity.hpp"

#include "nogap/sampling.hpp"

#include <cmath>
#include <limits>

namespace nogap {

std::string to_string(PathFamily f) {
  switch (f) {
    case PathFamily::constant_w: return "constant_w";
    case PathFamily::t_inverse_sqrt: return "t_inverse_sqrt";
    case PathFamily::random_bounded: return "random_bounded";
  }
  return "?";
}

std::string to_string(RegularityMode m) { return m == RegularityMode::gph ? "gph" : "epi"; }

std::string to_string(RegularityVerdict v) {
  switch (v) {
    case RegularityVerdict::consistent: return "consistent";
    case RegularityVerdict::violated: return "violated";
    case RegularityVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

std::vector<double> ProbeGrid::values() const {
  if (k_min < 0 || k_max <= k_min) throw std::invalid_argument("probe grid must be strictly decreasing");
  std::vector<double> t;
  for (int k = k_min; k <= k_max; ++k) t.push_back(std::ldexp(1.0, -k));
  return t;
}

RegularityVerdict classify_residuals(const std::vector<double>& raw, double scale, bool envelope) {
  if (raw.size() < 2) return RegularityVerdict::inconclusive;
  std::vector<double> v = raw;
  if (envelope) {
    for (std::size_t k = v.size() - 1; k-- > 0;) v[k] = std::max(v[k], v[k + 1]);
  }
  const double unit = 1.0 + scale;
  const std::size_t half = v.size() / 2;
  bool decreasing = true;
  for (std::size_t k = half + 1; k < v.size(); ++k) {
    if (v[k] > v[k - 1] + 1e-9 * unit) decreasing = false;
  }
  const double last = v.back();
  if (decreasing && last < 1e-6 * unit) return RegularityVerdict::consistent;
  if (last > 1e-3 * unit && last >= 0.5 * v[half]) return RegularityVerdict::violated;
  return RegularityVerdict::inconclusive;
}

RegularityReport regularity_probe_path(const PiecewiseExpr& e, const Vector& x, const Vector& d,
                                       const std::function<Vector(double)>& path, RegularityMode mode,
                                       const ProbeGrid& grid) {
  const std::vector<double> ts = grid.values();
  std::vector<Vector> ws;
  ws.reserve(ts.size());
  for (double t : ts) {
    Vector w = path(t);
    if (w.size() != e.input_dim()) throw std::invalid_argument("regularity_probe: path dimension mismatch");
    require_finite(w, "regularity_probe path");
    ws.push_back(std::move(w));
  }
  const double head = ts.front() * ws.front().norm();
  const double tail = ts.back() * ws.back().norm();
  if (tail > 1e-8 && tail > 0.1 * head) {
    throw InvalidProbePath("path does not satisfy t*w(t) -> 0 (t*|w| = " + std::to_string(tail) +
                           " at the finest grid point)");
  }

  const Vector gx = e.eval(x);
  const Vector g1 = e.dd1(x, d);
  RegularityReport rep;
  rep.mode = mode;
  rep.t_grid = ts;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double t = ts[k];
    const Vector g2 = e.dd2(x, d, ws[k]);
    const Vector moved = e.eval(x + t * d + 0.5 * t * t * ws[k]);
    const Vector model = gx + t * g1 + 0.5 * t * t * g2;
    Vector r = moved - model;
    if (mode == RegularityMode::epi) r = r.cwiseMin(0.0);
    // Roundoff of the four evaluated terms is not o(t^2) evidence.
    const double floor = 256.0 * eps *
                         (moved.lpNorm<Eigen::Infinity>() + gx.lpNorm<Eigen::Infinity>() +
                          t * g1.lpNorm<Eigen::Infinity>() + t * t * g2.lpNorm<Eigen::Infinity>());
    rep.residual_over_t2.push_back(std::max(0.0, r.norm() - floor) / (t * t));
  }
  rep.verdict = classify_residuals(rep.residual_over_t2, gx.norm());
  return rep;
}

RegularityReport regularity_probe(const PiecewiseExpr& e, const Vector& x, const Vector& d, const Vector& w,
                                  PathFamily family, RegularityMode mode, std::uint64_t seed,
                                  const ProbeGrid& grid) {
  if (w.size() != e.input_dim()) throw std::invalid_argument("regularity_probe: w dimension mismatch");
  std::function<Vector(double)> path;
  switch (family) {
    case PathFamily::constant_w: path = [w](double) { return w; }; break;
    case PathFamily::t_inverse_sqrt: path = [w](double t) { return Vector(w / std::sqrt(t)); }; break;
    case PathFamily::random_bounded: {
      const std::vector<double> ts = grid.values();
      const auto pts = ball_points(Vector::Zero(w.size()), std::max(1.0, w.norm()), static_cast<int>(ts.size()), seed);
      path = [ts, pts](double t) {
        for (std::size_t k = 0; k < ts.size(); ++k) {
          if (ts[k] == t) return pts[k];
        }
        return pts.back();
      };
      break;
    }
  }
  RegularityReport rep = regularity_probe_path(e, x, d, path, mode, grid);
  rep.family = family;
  if (family == PathFamily::random_bounded) {
    rep.verdict = classify_residuals(rep.residual_over_t2, e.eval(x).norm(), true);
  }
  return rep;
}

}  // namespace nogap
