#pragma once

#include "nogap/bilevel.hpp"

namespace nogap::detail {

// Null maps stand for "no constraints of this kind".
Vector values(const SmoothMapPtr& f, const Vector& z);
Matrix jacobian(const SmoothMapPtr& f, const Vector& z);
Vector second_forms(const SmoothMapPtr& f, const Vector& z, const Vector& d);
Matrix weighted_hessian(const SmoothMapPtr& f, const Vector& z, const Vector& w);
Matrix third_action(const SmoothMapPtr& f, const Vector& z, const Vector& d);

Matrix sensitivity_rhs(const LowerData& ld, const Diag& W);

// Curvature terms of the second-order KKT rows along d = (d_z, d_mu, d_xi).
struct SecondOrderTerms {
  Vector q_c;  // m: d^T Hess(dL/dy_i) d
  Vector q_d;  // r: d_z^T Hess h_i d_z
  Vector q_e;  // s: d_z^T Hess g_i d_z
};

SecondOrderTerms second_order_terms(const BilevelContext& ctx, const Vector& dz, const Vector& dmu,
                                    const Vector& dxi);

double scale_of(const Vector& v);

}  // namespace nogap::detail
