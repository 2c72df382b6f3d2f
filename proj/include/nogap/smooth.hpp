#pragma once

#include "nogap/linalg.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

struct ThirdOrderUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A C^2 (optionally C^3) map R^in -> R^out with analytic derivatives.
class SmoothMap {
 public:
  virtual ~SmoothMap() = default;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
  virtual Vector value(const Vector& x) const = 0;
  virtual Matrix jacobian(const Vector& x) const = 0;           // out x in
  virtual Matrix hessian(const Vector& x, int component) const = 0;  // in x in
  virtual bool has_third() const { return false; }
  // Row k is the gradient of d^T Hess g_k(x) d with respect to x.
  virtual Matrix third(const Vector& x, const Vector& d) const;
  virtual std::string describe() const = 0;

  // d^T Hess g_k(x) d stacked over components.
  Vector second_form(const Vector& x, const Vector& d) const;
};

using SmoothMapPtr = std::shared_ptr<const SmoothMap>;

// Richardson-extrapolated central differences of the Hessian callback.
Matrix third_by_differences(const SmoothMap& g, const Vector& x, const Vector& d, double step = 1e-4);

struct Monomial {
  double coef = 0.0;
  std::vector<int> pow;  // one exponent per input coordinate

  bool operator==(const Monomial&) const = default;
};

// Vector polynomial with explicit coefficient tables; every derivative is exact.
class Polynomial final : public SmoothMap {
 public:
  Polynomial(int in_dim, int out_dim);
  Polynomial(int in_dim, std::vector<std::vector<Monomial>> components);

  static Polynomial affine(const Matrix& a, const Vector& b);

  void add_term(int component, double coef, std::vector<int> pow);

  int in_dim() const override { return in_dim_; }
  int out_dim() const override { return static_cast<int>(components_.size()); }
  Vector value(const Vector& x) const override;
  Matrix jacobian(const Vector& x) const override;
  Matrix hessian(const Vector& x, int component) const override;
  bool has_third() const override { return true; }
  Matrix third(const Vector& x, const Vector& d) const override;
  std::string describe() const override;

  const std::vector<std::vector<Monomial>>& components() const { return components_; }

 private:
  int in_dim_;
  std::vector<std::vector<Monomial>> components_;
};

// Code-backed smooth map for API users; not representable in problem files.
class CallbackMap final : public SmoothMap {
 public:
  using ValueFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;
  using HessianFn = std::function<Matrix(const Vector&, int)>;
  using ThirdFn = std::function<Matrix(const Vector&, const Vector&)>;

  CallbackMap(int in_dim, int out_dim, ValueFn value, JacobianFn jacobian, HessianFn hessian,
              ThirdFn third = nullptr, std::string name = "callback");

  int in_dim() const override { return in_dim_; }
  int out_dim() const override { return out_dim_; }
  Vector value(const Vector& x) const override { return value_(x); }
  Matrix jacobian(const Vector& x) const override { return jacobian_(x); }
  Matrix hessian(const Vector& x, int component) const override { return hessian_(x, component); }
  bool has_third() const override { return static_cast<bool>(third_); }
  Matrix third(const Vector& x, const Vector& d) const override;
  std::string describe() const override { return name_; }

 private:
  int in_dim_;
  int out_dim_;
  ValueFn value_;
  JacobianFn jacobian_;
  HessianFn hessian_;
  ThirdFn third_;
  std::string name_;
};

}  // namespace nogap
