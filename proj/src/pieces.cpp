#include "nogap/pieces.hpp"

#include "expr_eval.hpp"
#include "nogap/lp.hpp"

#include <sstream>

namespace nogap {

std::string LinearPiece::signature() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) os << ',';
    os << choices[i].node_id << '.' << choices[i].component << '=' << choices[i].index;
  }
  return os.str();
}

bool LinearPiece::contains(const Vector& z, double tol) const {
  if (region_a.rows() == 0) return true;
  return ((region_a * z - region_b).array() <= tol).all();
}

namespace {

std::vector<LinearPiece> enumerate(int level, const PiecewiseExpr& e, const Vector& x, const Vector& d,
                                   std::size_t max_pieces, double tie) {
  const Vector zero = Vector::Zero(e.input_dim());
  detail::Chooser chooser;
  std::vector<LinearPiece> out;
  do {
    detail::Evaluator ev(level, tie, &chooser, nullptr);
    const detail::Value v = ev.run(e, x, level == 1 ? zero : d, zero);
    if (out.size() >= max_pieces) {
      throw ScaleError("selection pieces exceed the limit of " + std::to_string(max_pieces));
    }
    LinearPiece p;
    p.slope = v.form.m;
    p.offset = v.form.c;
    p.region_a = ev.region_a();
    p.region_b = ev.region_b();
    p.choices = ev.choices();
    out.push_back(std::move(p));
  } while (chooser.advance());
  return out;
}

}  // namespace

std::vector<LinearPiece> first_order_pieces(const PiecewiseExpr& e, const Vector& x, std::size_t max_pieces,
                                            double tie_tol) {
  if (x.size() != e.input_dim()) throw std::invalid_argument("first_order_pieces: dimension mismatch");
  return enumerate(1, e, x, x, max_pieces, tie_tol);
}

std::vector<LinearPiece> second_order_pieces(const PiecewiseExpr& e, const Vector& x, const Vector& d,
                                             std::size_t max_pieces, double tie_tol) {
  if (x.size() != e.input_dim() || d.size() != e.input_dim()) {
    throw std::invalid_argument("second_order_pieces: dimension mismatch");
  }
  return enumerate(2, e, x, d, max_pieces, tie_tol);
}

}  // namespace nogap
