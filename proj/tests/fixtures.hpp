#pragma once

// Programmatic versions of the shipped problem files.

#include "nogap/nsopt.hpp"

#include <initializer_list>
#include <utility>

namespace nogap::testing {

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Scalar polynomial in n variables from (coef, exponents) terms.
inline SmoothMapPtr poly(int n, std::initializer_list<std::pair<double, std::vector<int>>> terms) {
  auto p = std::make_shared<Polynomial>(n, 1);
  for (const auto& [c, pw] : terms) p->add_term(0, c, pw);
  return p;
}

inline ExprPtr expr(NodePtr root, int n) { return std::make_shared<PiecewiseExpr>(std::move(root), n); }

// f = |x1| + x2^2, G = -x2, K = R_-, x* = 0.
inline NonsmoothProgram abs_fixture() {
  NonsmoothProgram p;
  p.f = expr(ex::sum({ex::abs(ex::var(0)), ex::smooth(poly(1, {{1.0, {2}}}), ex::var(1))}), 2);
  p.G = expr(ex::scale(-1.0, ex::var(1)), 2);
  p.K = PolyhedralSet::nonpos(1);
  p.x_star = Vector::Zero(2);
  return p;
}

// One-dimensional program with G = x, K = R_-, x* = 0.
inline NonsmoothProgram scalar_program(NodePtr f) {
  NonsmoothProgram p;
  p.f = expr(std::move(f), 1);
  p.G = expr(ex::var(0), 1);
  p.K = PolyhedralSet::nonpos(1);
  p.x_star = Vector::Zero(1);
  return p;
}

inline NonsmoothProgram descent_toy() { return scalar_program(ex::var(0)); }
inline NonsmoothProgram square_toy() { return scalar_program(ex::smooth(poly(1, {{1.0, {2}}}), ex::var(0))); }
inline NonsmoothProgram cubic_fixture() { return scalar_program(ex::smooth(poly(1, {{1.0, {3}}}), ex::var(0))); }

// G(x) = x^2, K = {0}: MSCQ fails at 0.
inline NonsmoothProgram squared_eq() {
  NonsmoothProgram p;
  p.f = expr(ex::var(0), 1);
  p.G = expr(ex::smooth(poly(1, {{1.0, {2}}}), ex::var(0)), 1);
  p.K = PolyhedralSet::zero(1);
  p.x_star = Vector::Zero(1);
  return p;
}

}  // namespace nogap::testing
