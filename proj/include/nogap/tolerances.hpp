#pragma once

#include <string>

namespace nogap {

// Every numeric threshold used by the toolkit lives here so a single
// --tol-scale knob (or a problem-file override block) moves them together.
struct Tolerances {
  double pivot = 1e-10;        // linear solves and simplex pivots
  double feasibility = 1e-8;   // LP primal feasibility, reference-point feasibility
  double dedup = 1e-8;         // vertex / direction deduplication
  double activity = 1e-9;      // active constraints of K and active min/max indices
  double degeneracy = 1e-7;    // |g_i + xi_i| below this is a kink of the projection
  double kkt = 1e-8;           // KKT residual accepted at the reference point
  double certificate = 1e-8;   // sign decisions on optimal values and margins
  double duality_gap = 1e-8;   // relative LP duality gap
  double newton = 1e-10;       // semismooth Newton residual target
  double equivalence = 1e-7;   // SP/FP agreement

  // Scales all thresholds by factor; factor must be positive.
  Tolerances scaled(double factor) const;

  // Returns the value of the named field, throws std::invalid_argument for
  // unknown names.
  double get(const std::string& name) const;
  void set(const std::string& name, double value);
};

const Tolerances& default_tolerances();

}  // namespace nogap
