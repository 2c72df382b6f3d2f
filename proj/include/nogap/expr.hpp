#pragma once

#include "nogap/linalg.hpp"
#include "nogap/smooth.hpp"

#include <memory>
#include <string>
#include <vector>

namespace nogap {

class PiecewiseExpr;

enum class NodeKind {
  constant,
  variable,  // slice x[begin, begin + out_dim)
  affine,    // matrix * arg + offset
  smooth,    // smooth map applied to arg
  abs,       // componentwise |.|
  min_zero,  // componentwise min(., 0), the projection onto the nonpositive orthant
  min,       // min over the components of arg
  max,       // max over the components of arg
  l1,
  l2,
  sum,
  scale,
  stack,     // concatenation of args
  compose,   // outer expression evaluated at arg
};

std::string to_string(NodeKind k);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

// Nodes are immutable once built, so a DAG can only be assembled bottom-up and
// is acyclic by construction.
struct Node {
  NodeKind kind = NodeKind::constant;
  int id = 0;  // unique per process, assigned at construction
  int out_dim = 0;
  std::vector<NodePtr> args;
  Vector offset;  // constant value, affine offset
  Matrix matrix;  // affine map
  int begin = 0;  // variable slice start
  double factor = 1.0;
  SmoothMapPtr smooth;
  std::shared_ptr<const PiecewiseExpr> outer;
};

// Node builders; each validates the dimensions of its arguments.
namespace ex {
NodePtr constant(const Vector& value);
NodePtr var(int begin, int len = 1);
NodePtr affine(const Matrix& a, const Vector& b, NodePtr arg);
NodePtr smooth(SmoothMapPtr map, NodePtr arg);
NodePtr abs(NodePtr arg);
NodePtr min_zero(NodePtr arg);
NodePtr min(NodePtr arg);
NodePtr max(NodePtr arg);
NodePtr l1(NodePtr arg);
NodePtr l2(NodePtr arg);
NodePtr sum(std::vector<NodePtr> args);
NodePtr scale(double factor, NodePtr arg);
NodePtr stack(std::vector<NodePtr> args);
NodePtr compose(std::shared_ptr<const PiecewiseExpr> outer, NodePtr arg);
}  // namespace ex

// Active index sets of one min/max node (or one component of a min_zero node,
// where index 0 is the argument and index 1 is the zero branch). Indices are
// 0-based and nested: at_x >= at_xd >= at_xdw.
struct ActiveRecord {
  int node_id = 0;
  NodeKind kind = NodeKind::min;
  int component = 0;
  std::vector<int> at_x;
  std::vector<int> at_xd;
  std::vector<int> at_xdw;
};

struct DirectionalJet {
  Vector value;
  Vector d1;  // g'(x; d)
  Vector d2;  // g''(x; d, w)
  std::vector<ActiveRecord> active_chain;
};

class PiecewiseExpr {
 public:
  PiecewiseExpr(NodePtr root, int input_dim);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return root_->out_dim; }
  const NodePtr& root() const { return root_; }

  Vector eval(const Vector& x) const;
  Vector dd1(const Vector& x, const Vector& d, double tie_tol = 1e-9) const;
  Vector dd2(const Vector& x, const Vector& d, const Vector& w, double tie_tol = 1e-9) const;
  DirectionalJet jet(const Vector& x, const Vector& d, const Vector& w, double tie_tol = 1e-9) const;
  std::vector<ActiveRecord> active_sets(const Vector& x, const Vector& d, const Vector& w,
                                        double tie_tol = 1e-9) const;

  // Product of local node Lipschitz moduli (2-norm) at x; bounds the modulus of
  // d -> g'(x;d) and of w -> g''(x;d,w).
  double lipschitz_estimate(const Vector& x) const;

  // True when the DAG has no nonsmooth atom.
  bool smooth_only() const;
  // True when every leaf path goes through affine/min/max/abs/l1/min_zero only.
  bool piecewise_affine() const;
  bool has_minmax() const;

 private:
  void check_dims(const Vector& v, const char* what) const;

  NodePtr root_;
  int input_dim_;
};

using ExprPtr = std::shared_ptr<const PiecewiseExpr>;

}  // namespace nogap
