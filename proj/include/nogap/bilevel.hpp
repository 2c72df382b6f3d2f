#pragma once

#include "nogap/linalg.hpp"
#include "nogap/lp.hpp"
#include "nogap/nsopt.hpp"
#include "nogap/smooth.hpp"
#include "nogap/tolerances.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

// min F(x,y) s.t. H(x,y) = 0, G(x,y) <= 0, y local solution of
//   min_y f(x,y) s.t. h(x,y) = 0, g(x,y) <= 0.
// Every map acts on z = (x, y). G, H, g, h may be null (no constraints).
struct BilevelProblem {
  int n = 0;  // upper variables
  int m = 0;  // lower variables
  SmoothMapPtr F, G, H;
  SmoothMapPtr f, g, h;
  Vector x_star;
  Vector y_star;
  std::optional<Vector> mu_star;  // lower multipliers, when supplied
  std::optional<Vector> xi_star;

  int p() const { return H ? H->out_dim() : 0; }
  int q() const { return G ? G->out_dim() : 0; }
  int r() const { return h ? h->out_dim() : 0; }
  int s() const { return g ? g->out_dim() : 0; }
  Vector z_star() const;
  Vector join(const Vector& x, const Vector& y) const;

  // Dimensions, reference feasibility (upper and lower) to tol.feasibility.
  void validate(const Tolerances& tol = default_tolerances()) const;
};

struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotKKTError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrackingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularSensitivityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Two accepting pieces returned different derivatives.
struct PieceConflictError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KKTPoint {
  Vector y;
  Vector mu;
  Vector xi;
  double residual = 0.0;  // sup-norm of F_KKT
};

// Lower-level derivative data at (x, y, mu, xi).
struct LowerData {
  Vector grad_y_L;
  Matrix Lyy, Lyx;  // m x m, m x n
  Matrix Jxh, Jyh;  // r x n, r x m
  Matrix Jxg, Jyg;  // s x n, s x m
  Vector h, g;
};

LowerData lower_data(const BilevelProblem& bp, const Vector& x, const KKTPoint& k);

// [grad_y L; h; g - min(g + xi, 0)].
Vector kkt_residual(const BilevelProblem& bp, const Vector& x, const KKTPoint& k);

struct MultiplierPolytope {
  Matrix a_eq;  // stationarity in (mu, xi)
  Vector b_eq;
  Matrix a_in;  // -xi <= 0, and xi_i = 0 off the active set
  Vector b_in;
  std::vector<int> active;      // I(y*) = {i : g_i = 0}
  std::vector<Vector> vertices; // stacked (mu, xi)
};

// Lambda(y*) with its vertices; at most 64. Throws NotKKTError when empty.
MultiplierPolytope multiplier_polytope(const BilevelProblem& bp, const Tolerances& tol = default_tolerances());

struct VertexSsosc {
  Vector mu, xi;
  std::vector<int> strongly_active;  // I+ = {i : g_i = 0, xi_i > 0}
  DefinitenessResult result;
};

struct CQReport {
  bool mfcq = false;
  Vector mfcq_witness;  // d_y
  double mfcq_slack = 0.0;
  bool licq = false;
  int licq_rank = 0;
  int licq_rows = 0;
  bool crcq_consistent = false;
  int crcq_samples = 0;
  int crcq_subsets = 0;
  bool ssosc = false;
  double ssosc_margin = 0.0;
  std::vector<VertexSsosc> ssosc_vertices;
  std::vector<int> active;
  std::vector<Vector> vertices;

  // SSOSC and LICQ: the exact piecewise sensitivity calculus applies.
  bool exact() const { return ssosc && licq; }
};

CQReport cq_report(const BilevelProblem& bp, std::uint64_t seed = 0, const Tolerances& tol = default_tolerances());

// Supplied multipliers when present, else the first polytope vertex.
KKTPoint reference_kkt(const BilevelProblem& bp, const Tolerances& tol = default_tolerances());

using Diag = std::vector<int>;  // 0/1 diagonal of W
std::string to_string(const Diag& w);

// B-subdifferential vertices of the projection at g + xi. Throws ScaleError
// past 16 degenerate indices.
std::vector<Diag> enumerate_W(const BilevelProblem& bp, const KKTPoint& k,
                              const Tolerances& tol = default_tolerances());

struct SensitivityPiece {
  Diag W;
  Matrix A;        // (m+r+s) square
  Matrix rhs;      // [Lyx; Jxh; (I-W) Jxg]
  Matrix H;        // A^{-1} rhs; the triple is -H d_x
  Matrix valid_a;  // piece applies to d_x with valid_a d_x <= 0
  bool valid_for(const Vector& dx, double tol) const;
};

Matrix sensitivity_matrix(const LowerData& ld, const Diag& W);

// Refuses with AssumptionError unless cq.exact().
SensitivityPiece assemble_sensitivity(const BilevelProblem& bp, const KKTPoint& k, const CQReport& cq,
                                      const Diag& W, const Tolerances& tol = default_tolerances());

struct TrackOptions {
  int max_iterations = 50;
  bool reselect_multipliers = true;  // LP for the least stationarity residual at the start
  Tolerances tol = default_tolerances();
};

struct TrackResult {
  KKTPoint point;
  int iterations = 0;
  int lm_steps = 0;
};

// Semismooth Newton on F_KKT(x; .) = 0 from start, Levenberg-Marquardt steps
// when the generalized Jacobian is singular. Throws TrackingError.
TrackResult kkt_track(const BilevelProblem& bp, const Vector& x, const KKTPoint& start,
                      const TrackOptions& opt = {});

// Everything derived once at the reference point.
struct BilevelContext {
  std::shared_ptr<const BilevelProblem> problem;  // owned copy
  const BilevelProblem* bp = nullptr;
  Tolerances tol;
  KKTPoint kkt;
  LowerData ld;
  CQReport cq;
  bool exact = false;
  std::string fallback_reason;  // why the numeric path is used
  std::vector<SensitivityPiece> pieces;
  // Upper data at z*.
  Vector grad_F;
  Matrix hess_F;
  Matrix JG, JH;  // q x (n+m), p x (n+m)
  Vector G_val;
  std::vector<int> active_G;
};

BilevelContext analyze(const BilevelProblem& bp, std::uint64_t seed = 0,
                       const Tolerances& tol = default_tolerances());

struct FirstOrderJet {
  Vector y1, mu1, xi1;
  std::vector<Diag> accepting;
  bool numeric = false;
};

FirstOrderJet solution_map_dd1(const BilevelContext& ctx, const Vector& dx);

struct SolutionMapJet {
  Vector d_x, w_x;
  Vector y1, mu1, xi1;
  Vector y2, mu2, xi2;
  std::vector<Diag> first_pieces;
  std::vector<Diag> second_pieces;
  bool numeric = false;
};

// For fixed d_x the second-order triple is affine in w_x on each piece:
// (y2; mu2; xi2) = M w_x + c where region_a w_x <= region_b.
struct SecondOrderPiece {
  Diag W;
  Matrix M;
  Vector c;
  Matrix region_a;
  Vector region_b;
};

std::vector<SecondOrderPiece> second_order_pieces(const BilevelContext& ctx, const Vector& dx,
                                                  const FirstOrderJet& j1);

SolutionMapJet solution_map_dd2(const BilevelContext& ctx, const Vector& dx, const Vector& wx);

// Numeric derivatives of the tracked solution map, valid without LICQ.
Vector numeric_dd1(const BilevelContext& ctx, const Vector& dx);
Vector numeric_dd2(const BilevelContext& ctx, const Vector& dx, const Vector& wx);

enum class BilevelForm { sp, fp };
std::string to_string(BilevelForm f);

struct GmfcqPiece {
  Diag W;
  bool rank_ok = false;
  bool direction_ok = false;
  Vector witness;  // d_x (SP) or (d_x, d_y, d_mu, d_xi) (FP)
  double slack = 0.0;
};

struct GmfcqReport {
  BilevelForm form = BilevelForm::sp;
  bool holds = false;
  std::vector<GmfcqPiece> pieces;
};

GmfcqReport gmfcq_check(const BilevelContext& ctx, BilevelForm form);

struct BilevelFirstOrder {
  BilevelForm form = BilevelForm::sp;
  CheckStatus status = CheckStatus::inconclusive;
  bool applicable = true;  // false: the form's hypotheses fail (FP without LICQ)
  bool exact = false;
  bool numeric = false;
  std::string caveat;
  double min_value = 0.0;  // over |d_x|_inf <= 1 in the tangent cone
  Vector witness;
  int pieces = 0;
  std::vector<Vector> tangent_generators;   // d_x
  std::vector<Vector> critical_generators;  // d_x
};

BilevelFirstOrder first_order_check_bilevel(const BilevelContext& ctx, BilevelForm form,
                                            const CheckOptions& opt = {});

bool sp_tangent_member(const BilevelContext& ctx, const Vector& dx);
bool sp_critical_member(const BilevelContext& ctx, const Vector& dx);
bool fp_tangent_member(const BilevelContext& ctx, const Vector& dx);
bool fp_critical_member(const BilevelContext& ctx, const Vector& dx);

// The FP linearized system at fixed d_x: returns (d_y, d_mu, d_xi) or nullopt.
std::optional<Vector> fp_direction(const BilevelContext& ctx, const Vector& dx);

struct DualReport {
  BilevelForm form = BilevelForm::sp;
  bool feasible = false;
  Diag W;
  Vector lambda_H, lambda_G, lambda_L, lambda_h, lambda_g;
  double residual = 0.0;
  std::vector<Diag> tested;
  std::vector<Diag> feasible_for;
};

DualReport dual_multipliers(const BilevelContext& ctx, BilevelForm form);

struct BilevelDirection {
  Vector d_x;
  Vector y1;
  double value = 0.0;  // inner optimum; +inf infeasible, -inf unbounded, NaN unknown
  Vector w_x;          // minimizer when finite
  std::string piece;
  bool numeric = false;
};

double sp_second_order_value(const BilevelContext& ctx, const Vector& dx, BilevelDirection* out = nullptr);
double fp_second_order_value(const BilevelContext& ctx, const Vector& dx, BilevelDirection* out = nullptr);

enum class SecondOrderMode { necessary, sufficient };
std::string to_string(SecondOrderMode m);

struct BilevelSecondOrder {
  BilevelForm form = BilevelForm::sp;
  SecondOrderClass verdict = SecondOrderClass::inconclusive;
  bool applicable = true;
  double margin = 0.0;
  bool numeric = false;
  std::vector<BilevelDirection> directions;
  std::vector<BilevelDirection> witnesses;
  std::string caveat;
};

// Critical directions (unit d_x) used by the second-order sweep.
std::vector<Vector> bilevel_critical_sample(const BilevelContext& ctx, const CheckOptions& opt = {});

BilevelSecondOrder second_order_check_bilevel(const BilevelContext& ctx, BilevelForm form,
                                              const CheckOptions& opt = {});


// Samples the ball, tracks y(x), keeps upper-feasible points and returns the
// largest gamma with F(x,y(x)) >= F* + gamma |x - x*|^2 on all of them.
GrowthReport growth_probe(const BilevelContext& ctx, double radius, int n, std::uint64_t seed,
                          double certified_margin = 0.0);

}  // namespace nogap
