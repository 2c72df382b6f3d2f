#include "nogap/smooth.hpp"

#include <cmath>
#include <sstream>

namespace nogap {

Matrix SmoothMap::third(const Vector&, const Vector&) const {
  throw ThirdOrderUnavailable(describe() + ": no analytic third-order action");
}

Vector SmoothMap::second_form(const Vector& x, const Vector& d) const {
  Vector out(out_dim());
  for (int k = 0; k < out_dim(); ++k) out(k) = d.dot(hessian(x, k) * d);
  return out;
}

Matrix third_by_differences(const SmoothMap& g, const Vector& x, const Vector& d, double step) {
  const int n = g.in_dim();
  Matrix out(g.out_dim(), n);
  auto central = [&](int a, double h) {
    Vector xp = x, xm = x;
    xp(a) += h;
    xm(a) -= h;
    return Vector((g.second_form(xp, d) - g.second_form(xm, d)) / (2.0 * h));
  };
  for (int a = 0; a < n; ++a) {
    out.col(a) = (4.0 * central(a, step / 2.0) - central(a, step)) / 3.0;
  }
  return out;
}

namespace {

// Coefficient and exponents of d^k/dx_{i1}..dx_{ik} applied to one monomial.
bool differentiate(double& coef, std::vector<int>& pow, int var) {
  const int p = pow[static_cast<std::size_t>(var)];
  if (p == 0) return false;
  coef *= p;
  --pow[static_cast<std::size_t>(var)];
  return true;
}

double eval_monomial(double coef, const std::vector<int>& pow, const Vector& x) {
  double v = coef;
  for (std::size_t i = 0; i < pow.size(); ++i) {
    if (pow[i] != 0) v *= std::pow(x(static_cast<Eigen::Index>(i)), pow[i]);
  }
  return v;
}

}  // namespace

Polynomial::Polynomial(int in_dim, int out_dim)
    : in_dim_(in_dim), components_(static_cast<std::size_t>(out_dim)) {
  if (in_dim <= 0 || out_dim < 0) throw std::invalid_argument("Polynomial: invalid dimensions");
}

Polynomial::Polynomial(int in_dim, std::vector<std::vector<Monomial>> components)
    : in_dim_(in_dim), components_(std::move(components)) {
  if (in_dim <= 0) throw std::invalid_argument("Polynomial: invalid input dimension");
  for (const auto& comp : components_) {
    for (const Monomial& m : comp) {
      if (static_cast<int>(m.pow.size()) != in_dim_) {
        throw std::invalid_argument("Polynomial: exponent vector length differs from input dimension");
      }
      for (int p : m.pow) {
        if (p < 0) throw std::invalid_argument("Polynomial: negative exponent");
      }
      if (!std::isfinite(m.coef)) throw NonFiniteError("Polynomial: non-finite coefficient");
    }
  }
}

Polynomial Polynomial::affine(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) throw std::invalid_argument("Polynomial::affine: dimension mismatch");
  Polynomial p(static_cast<int>(a.cols()), static_cast<int>(a.rows()));
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    if (b(k) != 0.0) p.add_term(static_cast<int>(k), b(k), std::vector<int>(static_cast<std::size_t>(a.cols()), 0));
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(k, j) == 0.0) continue;
      std::vector<int> pow(static_cast<std::size_t>(a.cols()), 0);
      pow[static_cast<std::size_t>(j)] = 1;
      p.add_term(static_cast<int>(k), a(k, j), pow);
    }
  }
  return p;
}

void Polynomial::add_term(int component, double coef, std::vector<int> pow) {
  if (component < 0 || component >= out_dim()) throw std::out_of_range("Polynomial::add_term: component");
  if (static_cast<int>(pow.size()) != in_dim_) throw std::invalid_argument("Polynomial::add_term: exponent length");
  components_[static_cast<std::size_t>(component)].push_back(Monomial{coef, std::move(pow)});
}

Vector Polynomial::value(const Vector& x) const {
  if (x.size() != in_dim_) throw std::invalid_argument("Polynomial::value: dimension mismatch");
  Vector out = Vector::Zero(out_dim());
  for (int k = 0; k < out_dim(); ++k) {
    for (const Monomial& m : components_[static_cast<std::size_t>(k)]) out(k) += eval_monomial(m.coef, m.pow, x);
  }
  return out;
}

Matrix Polynomial::jacobian(const Vector& x) const {
  if (x.size() != in_dim_) throw std::invalid_argument("Polynomial::jacobian: dimension mismatch");
  Matrix out = Matrix::Zero(out_dim(), in_dim_);
  for (int k = 0; k < out_dim(); ++k) {
    for (const Monomial& m : components_[static_cast<std::size_t>(k)]) {
      for (int j = 0; j < in_dim_; ++j) {
        double c = m.coef;
        std::vector<int> p = m.pow;
        if (differentiate(c, p, j)) out(k, j) += eval_monomial(c, p, x);
      }
    }
  }
  return out;
}

Matrix Polynomial::hessian(const Vector& x, int component) const {
  if (x.size() != in_dim_) throw std::invalid_argument("Polynomial::hessian: dimension mismatch");
  if (component < 0 || component >= out_dim()) throw std::out_of_range("Polynomial::hessian: component");
  Matrix out = Matrix::Zero(in_dim_, in_dim_);
  for (const Monomial& m : components_[static_cast<std::size_t>(component)]) {
    for (int i = 0; i < in_dim_; ++i) {
      for (int j = 0; j <= i; ++j) {
        double c = m.coef;
        std::vector<int> p = m.pow;
        if (!differentiate(c, p, i) || !differentiate(c, p, j)) continue;
        const double v = eval_monomial(c, p, x);
        out(i, j) += v;
        if (i != j) out(j, i) += v;
      }
    }
  }
  return out;
}

Matrix Polynomial::third(const Vector& x, const Vector& d) const {
  if (x.size() != in_dim_ || d.size() != in_dim_) throw std::invalid_argument("Polynomial::third: dimension mismatch");
  Matrix out = Matrix::Zero(out_dim(), in_dim_);
  for (int k = 0; k < out_dim(); ++k) {
    for (const Monomial& m : components_[static_cast<std::size_t>(k)]) {
      for (int a = 0; a < in_dim_; ++a) {
        for (int b = 0; b < in_dim_; ++b) {
          for (int c = 0; c < in_dim_; ++c) {
            if (d(b) == 0.0 || d(c) == 0.0) continue;
            double cf = m.coef;
            std::vector<int> p = m.pow;
            if (!differentiate(cf, p, a) || !differentiate(cf, p, b) || !differentiate(cf, p, c)) continue;
            out(k, a) += eval_monomial(cf, p, x) * d(b) * d(c);
          }
        }
      }
    }
  }
  return out;
}

std::string Polynomial::describe() const {
  std::ostringstream os;
  os << "poly(" << in_dim_ << "->" << out_dim() << ")";
  return os.str();
}

CallbackMap::CallbackMap(int in_dim, int out_dim, ValueFn value, JacobianFn jacobian, HessianFn hessian,
                         ThirdFn third, std::string name)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      value_(std::move(value)),
      jacobian_(std::move(jacobian)),
      hessian_(std::move(hessian)),
      third_(std::move(third)),
      name_(std::move(name)) {
  if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("CallbackMap: invalid dimensions");
  if (!value_ || !jacobian_ || !hessian_) throw std::invalid_argument("CallbackMap: missing callback");
}

Matrix CallbackMap::third(const Vector& x, const Vector& d) const {
  if (!third_) return SmoothMap::third(x, d);
  return third_(x, d);
}

}  // namespace nogap
