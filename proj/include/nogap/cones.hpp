#pragma once

#include "nogap/linalg.hpp"

#include <string>
#include <vector>

namespace nogap {

enum class Factor { free, nonpos, zero };
std::string to_string(Factor f);

// Either a product of primitive factors (R, R_-, {0}) or {y : A y <= b, C y = e}.
class PolyhedralSet {
 public:
  PolyhedralSet() = default;

  static PolyhedralSet product(std::vector<Factor> factors);
  static PolyhedralSet hform(Matrix a, Vector b, Matrix c, Vector e);
  static PolyhedralSet nonpos(int dim) { return product(std::vector<Factor>(static_cast<std::size_t>(dim), Factor::nonpos)); }
  static PolyhedralSet zero(int dim) { return product(std::vector<Factor>(static_cast<std::size_t>(dim), Factor::zero)); }
  static PolyhedralSet whole(int dim) { return product(std::vector<Factor>(static_cast<std::size_t>(dim), Factor::free)); }

  int dim() const { return dim_; }
  bool is_product() const { return is_product_; }
  const std::vector<Factor>& factors() const { return factors_; }

  // H-form data; for products these are the converted rows.
  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }
  const Matrix& c() const { return c_; }
  const Vector& e() const { return e_; }

  PolyhedralSet to_hform() const;
  bool is_cone() const;  // b = 0 and e = 0
  bool empty() const;    // decided by LP

  std::string describe() const;

 private:
  int dim_ = 0;
  bool is_product_ = false;
  std::vector<Factor> factors_;
  Matrix a_, c_;
  Vector b_, e_;
};

// Throws std::invalid_argument when K is empty.
void require_nonempty(const PolyhedralSet& k, const char* what);

struct ConeMembershipCertificate {
  bool member = false;
  double violation = 0.0;  // max constraint residual
  Vector nearest_point;
};

ConeMembershipCertificate contains(const PolyhedralSet& k, const Vector& y, double tol = 1e-9);

// Euclidean projection. Products clamp factor-wise; H-forms run a primal
// active-set method from an LP-feasible start.
Vector project(const PolyhedralSet& k, const Vector& y);
double distance(const PolyhedralSet& k, const Vector& y);

// T_K(y); throws std::invalid_argument when y is not in K to tol.
PolyhedralSet tangent_cone(const PolyhedralSet& k, const Vector& y, double tol = 1e-9);

// T^2_K(y; d) = T_{T_K(y)}(d); throws std::invalid_argument when d is not in T_K(y).
PolyhedralSet second_order_tangent(const PolyhedralSet& k, const Vector& y, const Vector& d, double tol = 1e-9);

// A closed cone {A v <= 0, C v = 0} written as span(lineality) + cone(rays).
struct ConeGenerators {
  Matrix lineality;          // orthonormal columns
  std::vector<Vector> rays;  // unit extreme rays of the pointed part
};

ConeGenerators cone_generators(const PolyhedralSet& cone, double tol = 1e-9);

}  // namespace nogap
