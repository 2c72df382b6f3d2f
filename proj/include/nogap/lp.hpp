#pragma once

#include "nogap/linalg.hpp"
#include "nogap/tolerances.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

// min c^T z  s.t.  a_eq z = b_eq,  a_in z <= b_in,  z free.
struct LinearProgram {
  Vector c;
  Matrix a_eq;
  Vector b_eq;
  Matrix a_in;
  Vector b_in;

  explicit LinearProgram(Eigen::Index n = 0)
      : c(Vector::Zero(n)), a_eq(0, n), b_eq(0), a_in(0, n), b_in(0) {}

  Eigen::Index num_vars() const { return c.size(); }
  void add_eq(const Vector& row, double rhs);
  void add_le(const Vector& row, double rhs);
  void add_ge(const Vector& row, double rhs) { add_le(-row, -rhs); }
  // Appends -bound <= z_i <= bound for every variable.
  void add_box(double bound);
  void validate() const;
};

enum class LPStatus { optimal, unbounded, infeasible };
std::string to_string(LPStatus s);

struct LPResult {
  LPStatus status = LPStatus::infeasible;
  double optimum = 0.0;  // +inf when infeasible, -inf when unbounded
  Vector solution;
  // optimal:    c = a_eq^T y_eq + a_in^T y_in with y_in <= 0
  // infeasible: a_eq^T y_eq + a_in^T y_in = 0, y_in >= 0, b^T y < 0
  Vector dual_eq;
  Vector dual_in;
  // unbounded: a_eq r = 0, a_in r <= 0, c^T r < 0
  Vector ray;
  double primal_residual = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
};

struct LPStallError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two-phase revised simplex with an explicit dense basis inverse and Bland's
// anti-cycling rule. Throws LPStallError if the iteration cap is hit or the
// final certificate fails its residual checks.
LPResult lp_solve(const LinearProgram& lp, const Tolerances& tol = default_tolerances());

struct ScaleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All basic feasible solutions of {a_eq z = b_eq, a_in z <= b_in}, deduplicated
// at tol.dedup and sorted lexicographically. Throws ScaleError past desk scale
// (dimension > 12, more than 40 constraints) or when more than max_vertices
// vertices exist.
std::vector<Vector> vertex_enumerate(const Matrix& a_eq, const Vector& b_eq, const Matrix& a_in,
                                     const Vector& b_in, std::size_t max_vertices,
                                     const Tolerances& tol = default_tolerances());

}  // namespace nogap
