#pragma once

#include "nogap/expr.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

// Raised when a directional derivative is not piecewise affine in the free
// variable (an l2 atom of dimension > 1 at a point where both its value and
// its first-order argument vanish).
struct NotPiecewiseLinear : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PieceChoice {
  int node_id = 0;
  int component = 0;
  int index = 0;
  int arity = 0;
};

// On one selection piece a directional derivative is affine in the free
// variable z (z = d for first order, z = w for second order):
//   derivative = slope * z + offset   for all z with region_a * z <= region_b.
struct LinearPiece {
  Matrix slope;
  Vector offset;
  Matrix region_a;
  Vector region_b;
  std::vector<PieceChoice> choices;

  std::string signature() const;
  bool contains(const Vector& z, double tol) const;
};

// Selection pieces of d -> g'(x; d). Throws NotPiecewiseLinear, or ScaleError
// when more than max_pieces selections exist.
std::vector<LinearPiece> first_order_pieces(const PiecewiseExpr& e, const Vector& x,
                                            std::size_t max_pieces = 4096, double tie_tol = 1e-9);

// Selection pieces of w -> g''(x; d, w) for fixed d.
std::vector<LinearPiece> second_order_pieces(const PiecewiseExpr& e, const Vector& x, const Vector& d,
                                             std::size_t max_pieces = 4096, double tie_tol = 1e-9);

}  // namespace nogap
