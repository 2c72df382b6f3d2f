#pragma once

#include "nogap/expr.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

enum class PathFamily { constant_w, t_inverse_sqrt, random_bounded };
enum class RegularityMode { gph, epi };
enum class RegularityVerdict { consistent, violated, inconclusive };

std::string to_string(PathFamily f);
std::string to_string(RegularityMode m);
std::string to_string(RegularityVerdict v);

// The probed path w(t) does not satisfy t * w(t) -> 0 on the grid.
struct InvalidProbePath : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RegularityReport {
  std::vector<double> t_grid;            // strictly decreasing
  std::vector<double> residual_over_t2;  // |r(t^2)| / t^2 after the roundoff floor
  RegularityVerdict verdict = RegularityVerdict::inconclusive;
  RegularityMode mode = RegularityMode::gph;
  PathFamily family = PathFamily::constant_w;
};

struct ProbeGrid {
  int k_min = 4;
  int k_max = 20;
  std::vector<double> values() const;  // t = 2^-k
};

// Residual of the parabolic expansion
//   g(x + t d + t^2/2 w(t)) = g(x) + t g'(x;d) + t^2/2 g''(x;d,w(t)) + r(t^2)
// along a family path. For constant_w the path is w; for t_inverse_sqrt it is
// t^(-1/2) w; for random_bounded each grid point draws a fresh point of the
// ball of radius max(1, |w|) from seed.
RegularityReport regularity_probe(const PiecewiseExpr& e, const Vector& x, const Vector& d, const Vector& w,
                                  PathFamily family, RegularityMode mode, std::uint64_t seed = 0,
                                  const ProbeGrid& grid = {});

// Same with an explicit path; used to probe arbitrary w(t).
RegularityReport regularity_probe_path(const PiecewiseExpr& e, const Vector& x, const Vector& d,
                                       const std::function<Vector(double)>& path, RegularityMode mode,
                                       const ProbeGrid& grid = {});

// consistent: non-increasing over the final half of the grid (absolute slack
// 1e-9 * (1 + scale)) and final value < 1e-6 * (1 + scale).
// violated: final value > 1e-3 * (1 + scale) without halving across the final half.
// With envelope set the test runs on the tail maxima sup_{j >= k} v_j, which
// is what a randomly redrawn path can be expected to make monotone.
RegularityVerdict classify_residuals(const std::vector<double>& residual_over_t2, double scale,
                                     bool envelope = false);

}  // namespace nogap
