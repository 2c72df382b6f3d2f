#pragma once

#include "nogap/cones.hpp"
#include "nogap/expr.hpp"
#include "nogap/lp.hpp"
#include "nogap/regularity.hpp"
#include "nogap/tolerances.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nogap {

// min f(x) s.t. G(x) in K, examined at x_star.
struct NonsmoothProgram {
  ExprPtr f;  // scalar
  ExprPtr G;  // m-vector
  PolyhedralSet K;
  Vector x_star;

  int dim() const { return static_cast<int>(x_star.size()); }
  // Throws std::invalid_argument on inconsistent dimensions or when
  // G(x_star) is farther than tol from K.
  void validate(double tol = 1e-8) const;
  // f stacked on top of G, so selection pieces are enumerated jointly.
  PiecewiseExpr joint() const;
};

enum class CheckStatus { holds, violated, inconclusive };
std::string to_string(CheckStatus s);

struct CheckOptions {
  int samples = 256;
  std::uint64_t seed = 0;
  bool enumerate = true;  // selection-piece LPs when dd1 is piecewise linear
  std::size_t max_pieces = 4096;
  Tolerances tol = default_tolerances();
};

bool linearized_tangent_member(const NonsmoothProgram& p, const Vector& d, double tol = 1e-9);

struct FirstOrderReport {
  CheckStatus status = CheckStatus::inconclusive;
  bool exact = false;            // every selection piece solved by LP
  std::string fallback_reason;   // why sampling was used instead
  int pieces = 0;
  int directions = 0;            // sampled directions inside the linearized cone
  double min_value = 0.0;        // min f'(x*; d) over the tested slice |d|_inf <= 1
  Vector witness;                // descent direction when violated
  double witness_value = 0.0;
  std::vector<LPResult> certificates;  // one per feasible piece
};

FirstOrderReport first_order_check(const NonsmoothProgram& p, const CheckOptions& opt = {});

// Unit directions of the critical cone: extreme rays and lineality of every
// piece cone, seeded nonnegative combinations, and sphere samples that pass
// the membership test.
std::vector<Vector> critical_cone_sample(const NonsmoothProgram& p, const CheckOptions& opt = {});

struct DirectionVerdict {
  Vector d;
  bool in_tangent = false;
  double f_d1 = 0.0;
  double soc_value = 0.0;  // +inf: no feasible w; -inf: inner LP unbounded; NaN: not computable
  LPResult certificate;    // LP of the minimizing piece
  std::string piece_id;
  int pieces = 0;
};

DirectionVerdict second_order_value(const NonsmoothProgram& p, const Vector& d, const CheckOptions& opt = {});

enum class SecondOrderClass { certified, degenerate, necessary_violated, inconclusive };
std::string to_string(SecondOrderClass c);
std::string describe(SecondOrderClass c);

struct SweepReport {
  SecondOrderClass verdict = SecondOrderClass::inconclusive;
  double margin = 0.0;  // +inf when the critical cone is {0}
  std::vector<DirectionVerdict> verdicts;
  std::vector<DirectionVerdict> witnesses;  // soc_value <= certificate tolerance
  RegularityVerdict epi_probe = RegularityVerdict::inconclusive;  // f along critical directions
  std::string caveat;
};

SweepReport sufficient_sweep(const NonsmoothProgram& p, const CheckOptions& opt = {});

enum class MscqVerdict { bounded, suspect };
std::string to_string(MscqVerdict v);

struct MscqProbeReport {
  std::vector<double> kappa;      // d(x, Psi) / d(G(x), K), upper bounds
  std::vector<double> shell_radius;
  std::vector<double> shell_max;  // largest ratio per shell
  double radius = 0.0;
  double max_ratio = 0.0;
  MscqVerdict verdict = MscqVerdict::bounded;
};

// Samples shells radius * 2^-j (j = 0..4) around x_star. d(x, Psi) is bounded
// above by bisection towards x_star followed by a feasible pattern search.
MscqProbeReport mscq_probe(const NonsmoothProgram& p, double radius, int n, std::uint64_t seed);

struct GrowthReport {
  double gamma_hat = 0.0;
  int samples = 0;
  int feasible = 0;
  int tracking_failures = 0;
  std::vector<Vector> violations;  // x with no quadratic growth
  double margin_ratio = 0.25;      // gamma_hat is compared against margin * ratio
  bool consistent_with_margin = true;
};

// Quadratic growth of f over feasible ball samples: the largest gamma with
// f(x) >= f(x*) + gamma |x - x*|^2 on every sampled x with G(x) in K.
GrowthReport growth_probe(const NonsmoothProgram& p, double radius, int n, std::uint64_t seed,
                          double certified_margin = 0.0);

}  // namespace nogap
