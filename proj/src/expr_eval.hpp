#pragma once

// Shared node recursion behind PiecewiseExpr::jet and the selection-piece
// enumeration. Keeping both in one evaluator means the tie classification of
// active indices is identical for numeric jets and for piece forms.

#include "nogap/expr.hpp"
#include "nogap/pieces.hpp"

#include <unordered_map>
#include <vector>

namespace nogap::detail {

struct Jet {
  Vector v, d1, d2;
};

// Affine form slope * z + offset of the derivative at the evaluator's level.
struct Form {
  Matrix m;
  Vector c;
};

struct Value {
  Jet jet;
  Form form;
  double lip = 0.0;  // local Lipschitz modulus with respect to the root input
};

// Odometer over branch choices; arities are discovered during each run.
class Chooser {
 public:
  int choose(int arity) {
    if (pos_ < digits_.size()) return digits_[pos_++];
    digits_.push_back(0);
    arities_.push_back(arity);
    ++pos_;
    return 0;
  }
  bool advance() {
    pos_ = 0;
    while (!digits_.empty()) {
      if (digits_.back() + 1 < arities_.back()) {
        ++digits_.back();
        return true;
      }
      digits_.pop_back();
      arities_.pop_back();
    }
    return false;
  }

 private:
  std::vector<int> digits_;
  std::vector<int> arities_;
  std::size_t pos_ = 0;
};

class Evaluator {
 public:
  // level 0: numeric jets only; level 1/2: also affine forms of d1 (in d) or
  // of d2 (in w), branching through chooser at ties.
  Evaluator(int level, double tie, Chooser* chooser, std::vector<ActiveRecord>* active)
      : level_(level), tie_(tie), chooser_(chooser), active_(active) {}

  Value run(const PiecewiseExpr& e, const Vector& x, const Vector& d, const Vector& w);

  Matrix region_a() const;
  Vector region_b() const;
  const std::vector<PieceChoice>& choices() const { return choices_; }

 private:
  struct Context {
    const Value* input = nullptr;
    std::unordered_map<const Node*, Value> memo;
  };

  Value eval(const Node& n, Context& ctx);
  Value eval_uncached(const Node& n, Context& ctx);

  // Componentwise atoms return scalar jets plus a form row.
  struct Scalar {
    double v = 0, d1 = 0, d2 = 0;
    Eigen::RowVectorXd m;
    double c = 0;
  };
  Scalar abs_component(const Node& n, int comp, const Value& a);
  Scalar min_zero_component(const Node& n, int comp, const Value& a);
  Value minmax(const Node& n, const Value& a, bool is_min);
  Value l2(const Node& n, const Value& a);

  int branch(const Node& n, int comp, int arity);
  void add_region(const Eigen::RowVectorXd& row, double rhs);

  Eigen::Index nz() const { return nz_; }

  int level_;
  double tie_;
  Chooser* chooser_;
  std::vector<ActiveRecord>* active_;
  Eigen::Index nz_ = 0;
  std::vector<Eigen::RowVectorXd> region_rows_;
  std::vector<double> region_rhs_;
  std::vector<PieceChoice> choices_;
};

}  // namespace nogap::detail
