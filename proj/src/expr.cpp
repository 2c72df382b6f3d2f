#include "nogap/expr.hpp"

#include "expr_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace nogap {

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::constant: return "const";
    case NodeKind::variable: return "var";
    case NodeKind::affine: return "affine";
    case NodeKind::smooth: return "poly";
    case NodeKind::abs: return "abs";
    case NodeKind::min_zero: return "min0";
    case NodeKind::min: return "min";
    case NodeKind::max: return "max";
    case NodeKind::l1: return "l1";
    case NodeKind::l2: return "l2";
    case NodeKind::sum: return "sum";
    case NodeKind::scale: return "scale";
    case NodeKind::stack: return "stack";
    case NodeKind::compose: return "compose";
  }
  return "?";
}

namespace {

int next_id() {
  static std::atomic<int> counter{0};
  return ++counter;
}

std::shared_ptr<Node> make(NodeKind kind, int out_dim, std::vector<NodePtr> args = {}) {
  for (const NodePtr& a : args) {
    if (!a) throw std::invalid_argument(to_string(kind) + ": null argument");
  }
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->id = next_id();
  n->out_dim = out_dim;
  n->args = std::move(args);
  return n;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

}  // namespace

namespace ex {

NodePtr constant(const Vector& value) {
  if (value.size() == 0) throw std::invalid_argument("const: empty value");
  require_finite(value, "const");
  auto n = make(NodeKind::constant, static_cast<int>(value.size()));
  n->offset = value;
  return n;
}

NodePtr var(int begin, int len) {
  if (begin < 0 || len <= 0) throw std::invalid_argument("var: invalid slice");
  auto n = make(NodeKind::variable, len);
  n->begin = begin;
  return n;
}

NodePtr affine(const Matrix& a, const Vector& b, NodePtr arg) {
  if (!arg) throw std::invalid_argument("affine: null argument");
  if (a.cols() != arg->out_dim || a.rows() != b.size() || a.rows() == 0) {
    throw std::invalid_argument("affine: dimension mismatch");
  }
  require_finite(a, "affine");
  require_finite(b, "affine");
  auto n = make(NodeKind::affine, static_cast<int>(a.rows()), {std::move(arg)});
  n->matrix = a;
  n->offset = b;
  return n;
}

NodePtr smooth(SmoothMapPtr map, NodePtr arg) {
  if (!map || !arg) throw std::invalid_argument("smooth: null argument");
  if (map->in_dim() != arg->out_dim) throw std::invalid_argument("smooth: dimension mismatch");
  if (map->out_dim() <= 0) throw std::invalid_argument("smooth: empty output");
  auto n = make(NodeKind::smooth, map->out_dim(), {std::move(arg)});
  n->smooth = std::move(map);
  return n;
}

NodePtr abs(NodePtr arg) {
  const int d = arg ? arg->out_dim : 0;
  return make(NodeKind::abs, d, {std::move(arg)});
}

NodePtr min_zero(NodePtr arg) {
  const int d = arg ? arg->out_dim : 0;
  return make(NodeKind::min_zero, d, {std::move(arg)});
}

NodePtr min(NodePtr arg) { return make(NodeKind::min, 1, {std::move(arg)}); }
NodePtr max(NodePtr arg) { return make(NodeKind::max, 1, {std::move(arg)}); }
NodePtr l1(NodePtr arg) { return make(NodeKind::l1, 1, {std::move(arg)}); }
NodePtr l2(NodePtr arg) { return make(NodeKind::l2, 1, {std::move(arg)}); }

NodePtr sum(std::vector<NodePtr> args) {
  if (args.empty()) throw std::invalid_argument("sum: no arguments");
  for (const NodePtr& a : args) {
    if (!a || a->out_dim != args.front()->out_dim) throw std::invalid_argument("sum: dimension mismatch");
  }
  const int d = args.front()->out_dim;
  return make(NodeKind::sum, d, std::move(args));
}

NodePtr scale(double factor, NodePtr arg) {
  if (!std::isfinite(factor)) throw NonFiniteError("scale: non-finite factor");
  const int d = arg ? arg->out_dim : 0;
  auto n = make(NodeKind::scale, d, {std::move(arg)});
  n->factor = factor;
  return n;
}

NodePtr stack(std::vector<NodePtr> args) {
  if (args.empty()) throw std::invalid_argument("stack: no arguments");
  int d = 0;
  for (const NodePtr& a : args) {
    if (!a) throw std::invalid_argument("stack: null argument");
    d += a->out_dim;
  }
  return make(NodeKind::stack, d, std::move(args));
}

NodePtr compose(std::shared_ptr<const PiecewiseExpr> outer, NodePtr arg) {
  if (!outer || !arg) throw std::invalid_argument("compose: null argument");
  if (outer->input_dim() != arg->out_dim) throw std::invalid_argument("compose: dimension mismatch");
  auto n = make(NodeKind::compose, outer->output_dim(), {std::move(arg)});
  n->outer = std::move(outer);
  return n;
}

}  // namespace ex

namespace {

int max_variable_index(const Node& n) {
  int hi = -1;
  if (n.kind == NodeKind::variable) hi = n.begin + n.out_dim - 1;
  for (const NodePtr& a : n.args) hi = std::max(hi, max_variable_index(*a));
  return hi;
}

template <typename Pred>
bool any_node(const Node& n, Pred&& p) {
  if (p(n)) return true;
  for (const NodePtr& a : n.args) {
    if (any_node(*a, p)) return true;
  }
  if (n.kind == NodeKind::compose && any_node(*n.outer->root(), p)) return true;
  return false;
}

}  // namespace

PiecewiseExpr::PiecewiseExpr(NodePtr root, int input_dim) : root_(std::move(root)), input_dim_(input_dim) {
  if (!root_) throw std::invalid_argument("PiecewiseExpr: null root");
  if (input_dim_ <= 0) throw std::invalid_argument("PiecewiseExpr: input dimension must be positive");
  if (root_->out_dim <= 0) throw std::invalid_argument("PiecewiseExpr: output dimension must be positive");
  if (max_variable_index(*root_) >= input_dim_) {
    throw std::invalid_argument("PiecewiseExpr: variable slice exceeds input dimension");
  }
}

void PiecewiseExpr::check_dims(const Vector& v, const char* what) const {
  if (v.size() != input_dim_) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " + std::to_string(input_dim_) +
                                ", got " + std::to_string(v.size()));
  }
  require_finite(v, what);
}

Vector PiecewiseExpr::eval(const Vector& x) const {
  check_dims(x, "eval");
  const Vector z = Vector::Zero(input_dim_);
  detail::Evaluator ev(0, 1e-9, nullptr, nullptr);
  return ev.run(*this, x, z, z).jet.v;
}

DirectionalJet PiecewiseExpr::jet(const Vector& x, const Vector& d, const Vector& w, double tie_tol) const {
  check_dims(x, "jet (x)");
  check_dims(d, "jet (d)");
  check_dims(w, "jet (w)");
  DirectionalJet out;
  detail::Evaluator ev(0, tie_tol, nullptr, &out.active_chain);
  const detail::Value v = ev.run(*this, x, d, w);
  out.value = v.jet.v;
  out.d1 = v.jet.d1;
  out.d2 = v.jet.d2;
  return out;
}

Vector PiecewiseExpr::dd1(const Vector& x, const Vector& d, double tie_tol) const {
  return jet(x, d, Vector::Zero(input_dim_), tie_tol).d1;
}

Vector PiecewiseExpr::dd2(const Vector& x, const Vector& d, const Vector& w, double tie_tol) const {
  return jet(x, d, w, tie_tol).d2;
}

std::vector<ActiveRecord> PiecewiseExpr::active_sets(const Vector& x, const Vector& d, const Vector& w,
                                                     double tie_tol) const {
  return jet(x, d, w, tie_tol).active_chain;
}

double PiecewiseExpr::lipschitz_estimate(const Vector& x) const {
  check_dims(x, "lipschitz_estimate");
  const Vector z = Vector::Zero(input_dim_);
  detail::Evaluator ev(0, 1e-9, nullptr, nullptr);
  return ev.run(*this, x, z, z).lip;
}

bool PiecewiseExpr::smooth_only() const {
  return !any_node(*root_, [](const Node& n) {
    switch (n.kind) {
      case NodeKind::abs:
      case NodeKind::min_zero:
      case NodeKind::min:
      case NodeKind::max:
      case NodeKind::l1:
      case NodeKind::l2: return true;
      default: return false;
    }
  });
}

bool PiecewiseExpr::piecewise_affine() const {
  return !any_node(*root_, [](const Node& n) { return n.kind == NodeKind::smooth || n.kind == NodeKind::l2; });
}

bool PiecewiseExpr::has_minmax() const {
  return any_node(*root_, [](const Node& n) { return n.kind == NodeKind::min || n.kind == NodeKind::max; });
}

// ---------------------------------------------------------------------------
// Evaluator

namespace detail {

Value Evaluator::run(const PiecewiseExpr& e, const Vector& x, const Vector& d, const Vector& w) {
  nz_ = e.input_dim();
  Value input;
  input.jet = Jet{x, d, w};
  if (level_ > 0) {
    input.form.m = Matrix::Identity(nz_, nz_);
    input.form.c = Vector::Zero(nz_);
  }
  input.lip = 1.0;
  Context ctx;
  ctx.input = &input;
  return eval(*e.root(), ctx);
}

Matrix Evaluator::region_a() const {
  Matrix a(static_cast<Eigen::Index>(region_rows_.size()), nz_);
  for (std::size_t i = 0; i < region_rows_.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = region_rows_[i];
  return a;
}

Vector Evaluator::region_b() const {
  Vector b(static_cast<Eigen::Index>(region_rhs_.size()));
  for (std::size_t i = 0; i < region_rhs_.size(); ++i) b(static_cast<Eigen::Index>(i)) = region_rhs_[i];
  return b;
}

int Evaluator::branch(const Node& n, int comp, int arity) {
  if (!chooser_) throw std::logic_error("Evaluator: branching without a chooser");
  const int k = chooser_->choose(arity);
  choices_.push_back(PieceChoice{n.id, comp, k, arity});
  return k;
}

void Evaluator::add_region(const Eigen::RowVectorXd& row, double rhs) {
  region_rows_.push_back(row);
  region_rhs_.push_back(rhs);
}

Value Evaluator::eval(const Node& n, Context& ctx) {
  auto it = ctx.memo.find(&n);
  if (it != ctx.memo.end()) return it->second;
  Value v = eval_uncached(n, ctx);
  ctx.memo.emplace(&n, v);
  return v;
}

namespace {

Form zero_form(Eigen::Index rows, Eigen::Index nz) { return Form{Matrix::Zero(rows, nz), Vector::Zero(rows)}; }

}  // namespace

// |.| on one component. Sign is fixed by the value, then by d1 (second
// order), otherwise branched with the matching sign constraint on the form.
Evaluator::Scalar Evaluator::abs_component(const Node& n, int comp, const Value& a) {
  Scalar s;
  const double v = a.jet.v(comp), d1 = a.jet.d1(comp), d2 = a.jet.d2(comp);
  s.v = std::abs(v);
  if (v > tie_) {
    s.d1 = d1;
    s.d2 = d2;
  } else if (v < -tie_) {
    s.d1 = -d1;
    s.d2 = -d2;
  } else if (d1 > tie_) {
    s.d1 = d1;
    s.d2 = d2;
  } else if (d1 < -tie_) {
    s.d1 = -d1;
    s.d2 = -d2;
  } else {
    s.d1 = std::abs(d1);
    s.d2 = std::abs(d2);
  }
  if (level_ == 0) return s;
  double sign = 0.0;
  if (v > tie_) sign = 1.0;
  else if (v < -tie_) sign = -1.0;
  else if (level_ == 2 && d1 > tie_) sign = 1.0;
  else if (level_ == 2 && d1 < -tie_) sign = -1.0;
  const Eigen::RowVectorXd row = a.form.m.row(comp);
  const double off = a.form.c(comp);
  if (sign == 0.0) {
    sign = branch(n, comp, 2) == 0 ? 1.0 : -1.0;
    add_region(-sign * row, sign * off);  // sign * (row z + off) >= 0
  }
  s.m = sign * row;
  s.c = sign * off;
  return s;
}

// min(., 0) on one component; index 0 selects the argument, 1 the zero branch.
Evaluator::Scalar Evaluator::min_zero_component(const Node& n, int comp, const Value& a) {
  Scalar s;
  const double v = a.jet.v(comp), d1 = a.jet.d1(comp), d2 = a.jet.d2(comp);
  ActiveRecord rec;
  rec.node_id = n.id;
  rec.kind = NodeKind::min_zero;
  rec.component = comp;
  s.v = std::min(v, 0.0);
  if (v < -tie_) {
    rec.at_x = {0};
  } else if (v > tie_) {
    rec.at_x = {1};
  } else {
    rec.at_x = {0, 1};
  }
  // Among the active candidates the derivative values are (d1, 0) and (d2, 0).
  auto narrow = [&](const std::vector<int>& from, double arg_val) {
    double best = 0.0;
    bool first = true;
    for (int i : from) {
      const double val = i == 0 ? arg_val : 0.0;
      best = first ? val : std::min(best, val);
      first = false;
    }
    std::vector<int> out;
    for (int i : from) {
      if ((i == 0 ? arg_val : 0.0) <= best + tie_) out.push_back(i);
    }
    return std::make_pair(best, out);
  };
  auto [b1, xd] = narrow(rec.at_x, d1);
  auto [b2, xdw] = narrow(xd, d2);
  s.d1 = b1;
  s.d2 = b2;
  rec.at_xd = xd;
  rec.at_xdw = xdw;
  if (active_) active_->push_back(rec);
  if (level_ == 0) return s;

  const std::vector<int>& candidates = level_ == 1 ? rec.at_x : rec.at_xd;
  int pick = candidates.front();
  const Eigen::RowVectorXd row = a.form.m.row(comp);
  const double off = a.form.c(comp);
  if (candidates.size() > 1) {
    pick = branch(n, comp, 2);
    if (pick == 0) add_region(row, -off);  // row z + off <= 0
    else add_region(-row, off);            // row z + off >= 0
  }
  if (pick == 0) {
    s.m = row;
    s.c = off;
  } else {
    s.m = Eigen::RowVectorXd::Zero(nz_);
    s.c = 0.0;
  }
  return s;
}

Value Evaluator::minmax(const Node& n, const Value& a, bool is_min) {
  const Eigen::Index k = a.jet.v.size();
  const double sgn = is_min ? 1.0 : -1.0;  // work with sgn * values as a min
  ActiveRecord rec;
  rec.node_id = n.id;
  rec.kind = n.kind;
  auto select = [&](const std::vector<int>& from, const Vector& vals, double& best) {
    best = std::numeric_limits<double>::infinity();
    for (int i : from) best = std::min(best, sgn * vals(i));
    std::vector<int> out;
    for (int i : from) {
      if (sgn * vals(i) <= best + tie_) out.push_back(i);
    }
    return out;
  };
  std::vector<int> all(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = static_cast<int>(i);
  double b0 = 0, b1 = 0, b2 = 0;
  rec.at_x = select(all, a.jet.v, b0);
  rec.at_xd = select(rec.at_x, a.jet.d1, b1);
  rec.at_xdw = select(rec.at_xd, a.jet.d2, b2);
  Value out;
  out.jet = Jet{Vector::Constant(1, sgn * b0), Vector::Constant(1, sgn * b1), Vector::Constant(1, sgn * b2)};
  out.lip = a.lip;
  if (active_) active_->push_back(rec);
  if (level_ == 0) return out;

  const std::vector<int>& candidates = level_ == 1 ? rec.at_x : rec.at_xd;
  int pick = candidates.front();
  if (candidates.size() > 1) {
    pick = candidates[static_cast<std::size_t>(branch(n, 0, static_cast<int>(candidates.size())))];
    for (int j : candidates) {
      if (j == pick) continue;
      // sgn * (form_pick - form_j) <= 0
      add_region(sgn * (a.form.m.row(pick) - a.form.m.row(j)), sgn * (a.form.c(j) - a.form.c(pick)));
    }
  }
  out.form.m = a.form.m.row(pick);
  out.form.c = Vector::Constant(1, a.form.c(pick));
  return out;
}

Value Evaluator::l2(const Node& n, const Value& a) {
  const Vector& v = a.jet.v;
  const Vector& d1 = a.jet.d1;
  const Vector& d2 = a.jet.d2;
  const double nv = v.norm();
  Value out;
  out.lip = a.lip;
  double r1 = 0, r2 = 0;
  if (nv > tie_) {
    const Vector u = v / nv;
    r1 = u.dot(d1);
    r2 = (d1.squaredNorm() - r1 * r1) / nv + u.dot(d2);
  } else if (d1.norm() > tie_) {
    r1 = d1.norm();
    r2 = d1.dot(d2) / r1;
  } else {
    r1 = d1.norm();
    r2 = d2.norm();
  }
  out.jet = Jet{Vector::Constant(1, nv), Vector::Constant(1, r1), Vector::Constant(1, r2)};
  if (level_ == 0) return out;

  if (v.size() == 1) {
    // In one dimension the norm is |.| and stays piecewise affine.
    const Scalar s = abs_component(n, 0, a);
    out.form.m = s.m;
    out.form.c = Vector::Constant(1, s.c);
    return out;
  }
  if (nv > tie_) {
    const Vector u = v / nv;
    out.form.m = u.transpose() * a.form.m;
    double c = u.dot(a.form.c);
    if (level_ == 2) c += (d1.squaredNorm() - std::pow(u.dot(d1), 2)) / nv;
    out.form.c = Vector::Constant(1, c);
    return out;
  }
  if (level_ == 2 && d1.norm() > tie_) {
    const Vector u = d1 / d1.norm();
    out.form.m = u.transpose() * a.form.m;
    out.form.c = Vector::Constant(1, u.dot(a.form.c));
    return out;
  }
  throw NotPiecewiseLinear("l2 node " + std::to_string(n.id) + " is not piecewise affine at this point");
}

Value Evaluator::eval_uncached(const Node& n, Context& ctx) {
  Value out;
  switch (n.kind) {
    case NodeKind::constant: {
      const Eigen::Index k = n.out_dim;
      out.jet = Jet{n.offset, Vector::Zero(k), Vector::Zero(k)};
      if (level_ > 0) out.form = zero_form(k, nz_);
      out.lip = 0.0;
      return out;
    }
    case NodeKind::variable: {
      const Value& in = *ctx.input;
      const Eigen::Index b = n.begin, k = n.out_dim;
      if (b + k > in.jet.v.size()) throw std::invalid_argument("variable slice exceeds input dimension");
      out.jet = Jet{in.jet.v.segment(b, k), in.jet.d1.segment(b, k), in.jet.d2.segment(b, k)};
      if (level_ > 0) out.form = Form{in.form.m.middleRows(b, k), in.form.c.segment(b, k)};
      out.lip = in.lip;
      return out;
    }
    case NodeKind::affine: {
      const Value a = eval(*n.args[0], ctx);
      out.jet = Jet{n.matrix * a.jet.v + n.offset, n.matrix * a.jet.d1, n.matrix * a.jet.d2};
      if (level_ > 0) out.form = Form{n.matrix * a.form.m, n.matrix * a.form.c};
      out.lip = spectral_norm(n.matrix) * a.lip;
      return out;
    }
    case NodeKind::smooth: {
      const Value a = eval(*n.args[0], ctx);
      const Matrix j = n.smooth->jacobian(a.jet.v);
      const Vector q = n.smooth->second_form(a.jet.v, a.jet.d1);
      out.jet = Jet{n.smooth->value(a.jet.v), j * a.jet.d1, q + j * a.jet.d2};
      if (level_ == 1) out.form = Form{j * a.form.m, j * a.form.c};
      if (level_ == 2) out.form = Form{j * a.form.m, j * a.form.c + q};
      out.lip = spectral_norm(j) * a.lip;
      return out;
    }
    case NodeKind::abs:
    case NodeKind::min_zero: {
      const Value a = eval(*n.args[0], ctx);
      const Eigen::Index k = n.out_dim;
      out.jet = Jet{Vector(k), Vector(k), Vector(k)};
      if (level_ > 0) out.form = zero_form(k, nz_);
      for (Eigen::Index i = 0; i < k; ++i) {
        const Scalar s = n.kind == NodeKind::abs ? abs_component(n, static_cast<int>(i), a)
                                                 : min_zero_component(n, static_cast<int>(i), a);
        out.jet.v(i) = s.v;
        out.jet.d1(i) = s.d1;
        out.jet.d2(i) = s.d2;
        if (level_ > 0) {
          out.form.m.row(i) = s.m;
          out.form.c(i) = s.c;
        }
      }
      out.lip = a.lip;
      return out;
    }
    case NodeKind::min:
    case NodeKind::max: {
      const Value a = eval(*n.args[0], ctx);
      return minmax(n, a, n.kind == NodeKind::min);
    }
    case NodeKind::l1: {
      const Value a = eval(*n.args[0], ctx);
      out.jet = Jet{Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)};
      if (level_ > 0) out.form = zero_form(1, nz_);
      for (Eigen::Index i = 0; i < a.jet.v.size(); ++i) {
        const Scalar s = abs_component(n, static_cast<int>(i), a);
        out.jet.v(0) += s.v;
        out.jet.d1(0) += s.d1;
        out.jet.d2(0) += s.d2;
        if (level_ > 0) {
          out.form.m.row(0) += s.m;
          out.form.c(0) += s.c;
        }
      }
      out.lip = std::sqrt(static_cast<double>(a.jet.v.size())) * a.lip;
      return out;
    }
    case NodeKind::l2: {
      const Value a = eval(*n.args[0], ctx);
      return l2(n, a);
    }
    case NodeKind::sum: {
      bool first = true;
      for (const NodePtr& arg : n.args) {
        const Value a = eval(*arg, ctx);
        if (first) {
          out = a;
          first = false;
          continue;
        }
        out.jet.v += a.jet.v;
        out.jet.d1 += a.jet.d1;
        out.jet.d2 += a.jet.d2;
        if (level_ > 0) {
          out.form.m += a.form.m;
          out.form.c += a.form.c;
        }
        out.lip += a.lip;
      }
      return out;
    }
    case NodeKind::scale: {
      const Value a = eval(*n.args[0], ctx);
      const double s = n.factor;
      out.jet = Jet{s * a.jet.v, s * a.jet.d1, s * a.jet.d2};
      if (level_ > 0) out.form = Form{s * a.form.m, s * a.form.c};
      out.lip = std::abs(s) * a.lip;
      return out;
    }
    case NodeKind::stack: {
      const Eigen::Index k = n.out_dim;
      out.jet = Jet{Vector(k), Vector(k), Vector(k)};
      if (level_ > 0) out.form = zero_form(k, nz_);
      Eigen::Index row = 0;
      double lip2 = 0.0;
      for (const NodePtr& arg : n.args) {
        const Value a = eval(*arg, ctx);
        const Eigen::Index r = a.jet.v.size();
        out.jet.v.segment(row, r) = a.jet.v;
        out.jet.d1.segment(row, r) = a.jet.d1;
        out.jet.d2.segment(row, r) = a.jet.d2;
        if (level_ > 0) {
          out.form.m.middleRows(row, r) = a.form.m;
          out.form.c.segment(row, r) = a.form.c;
        }
        lip2 += a.lip * a.lip;
        row += r;
      }
      out.lip = std::sqrt(lip2);
      return out;
    }
    case NodeKind::compose: {
      const Value a = eval(*n.args[0], ctx);
      Value inner = a;
      inner.lip = 1.0;
      Context sub;
      sub.input = &inner;
      out = eval(*n.outer->root(), sub);
      out.lip *= a.lip;
      return out;
    }
  }
  throw std::logic_error("unknown node kind");
}

}  // namespace detail
}  // namespace nogap
