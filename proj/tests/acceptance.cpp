// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "bilevel_fixtures.hpp"
#include "fixtures.hpp"
#include "nogap/cones.hpp"
#include "nogap/problem_file.hpp"
#include "nogap/regularity.hpp"
#include "random_cones.hpp"
#include "random_dag.hpp"
#include "random_lp.hpp"

#include <json.hpp>

#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace nogap;
using namespace nogap::testing;

namespace {

// Collects failed sub-checks; the first few are printed with the verdict.
struct Result {
  std::vector<std::string> failures;
  std::ostringstream info;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string str(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / (1.0 + b.norm()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string run_cli(const std::string& args, int* status) {
  const std::string cmd = std::string("\"") + NOGAP_CLI + "\" " + args + " 2>/dev/null";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    *status = -1;
    return out;
  }
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) out.append(buf, n);
  const int raw = pclose(pipe);
  *status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

bool same_vectors(std::vector<Vector> a, std::vector<Vector> b) {
  if (a.size() != b.size()) return false;
  for (const Vector& v : a) {
    bool found = false;
    for (const Vector& w : b) found = found || (v.size() == w.size() && v == w);
    if (!found) return false;
  }
  return true;
}

// Every tangent or critical generator is a positive multiple of (+1).
bool half_line(const std::vector<Vector>& gens) {
  if (gens.empty()) return false;
  for (const Vector& g : gens) {
    if (g.size() != 1 || !(g(0) > 0)) return false;
  }
  return true;
}

void worked_example_end_to_end(Result& r) {
  const std::string path = std::string(NOGAP_DATA_DIR) + "/paper_example.json";
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemFile pf = parse_problem(path);
  const BilevelContext ctx = analyze(*pf.bilevel, 0, pf.tol);
  const CQReport& cq = ctx.cq;
  r.expect(same_vectors(cq.vertices, {vec({0, 2}), vec({2, 0})}), "multiplier vertices {(0,2),(2,0)}");
  r.expect(cq.mfcq, "MFCQ holds");
  r.expect(cq.crcq_consistent, "CRCQ probe consistent");
  r.expect(cq.ssosc, "SSOSC holds");
  r.expect(!cq.licq, "LICQ fails");

  const BilevelFirstOrder fo = first_order_check_bilevel(ctx, BilevelForm::sp);
  r.expect(fo.status == CheckStatus::holds, "first order holds");
  r.expect(half_line(fo.tangent_generators), "tangent cone {d_x >= 0}");
  r.expect(half_line(fo.critical_generators), "critical cone {d_x >= 0}");
  r.expect(sp_tangent_member(ctx, vec({1})) && !sp_tangent_member(ctx, vec({-1})), "tangent membership");
  r.expect(sp_critical_member(ctx, vec({1})) && !sp_critical_member(ctx, vec({-1})), "critical membership");

  const BilevelSecondOrder so = second_order_check_bilevel(ctx, BilevelForm::sp);
  r.expect(so.verdict == SecondOrderClass::certified, "second-order sufficient certified");
  r.expect(std::abs(so.margin - 4.0) <= 1e-6, "margin 4 +- 1e-6, got " + str(so.margin));
  const double lib_time = seconds_since(t0);

  int status = 0;
  const auto t1 = std::chrono::steady_clock::now();
  const std::string out = run_cli("bilevel second \"" + path + "\" --json", &status);
  const double cli_time = seconds_since(t1);
  r.expect(status == 0, "cli exit code 0, got " + std::to_string(status));
  try {
    const nlohmann::json rep = nlohmann::json::parse(out);
    const nlohmann::json& c = rep.at("checks").at(0);
    r.expect(c.at("conclusion").get<std::string>().rfind("strict bi-local minimizer", 0) == 0,
             "verdict \"strict bi-local minimizer\"");
    r.expect(c.at("margin").is_number() && std::abs(c.at("margin").get<double>() - 4.0) <= 1e-6, "cli margin 4");
  } catch (const std::exception& e) {
    r.expect(false, std::string("cli report: ") + e.what());
  }
  r.expect(lib_time < 1.0 && cli_time < 1.0, "runtime < 1 s");
  r.info << "margin " << str(so.margin) << ", library " << str(lib_time) << " s, cli " << str(cli_time) << " s";
}

void degenerate_sensitivity(Result& r) {
  const ProblemFile pf = parse_problem(std::string(NOGAP_DATA_DIR) + "/degenerate_fixture.json");
  const BilevelContext ctx = analyze(*pf.bilevel);
  r.expect(ctx.exact, "exact sensitivity path");
  r.expect(ctx.pieces.size() == 2, "two W pieces");
  for (const SensitivityPiece& p : ctx.pieces) {
    r.expect(Eigen::FullPivLU<Matrix>(p.A).isInvertible(), "A invertible for W = " + to_string(p.W));
  }
  double worst = 0.0;
  for (double d : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
    const FirstOrderJet j = solution_map_dd1(ctx, vec({d}));
    worst = std::max(worst, std::abs(j.y1(0) - std::min(d, 0.0)));
    // y = min(x, 0) follows the active branch (W = 1) for d < 0 and the inactive one for d > 0
    if (d < 0) r.expect(j.accepting == std::vector<Diag>{Diag{1}}, "branch for d = " + str(d));
    if (d > 0) r.expect(j.accepting == std::vector<Diag>{Diag{0}}, "branch for d = " + str(d));
    if (d == 0) r.expect(j.accepting.size() == 2, "both branches at d = 0");
  }
  r.expect(worst <= 1e-9, "y' error " + str(worst));
  r.info << "max |y' - min(d,0)| = " << str(worst);
}

void tracking_vs_derivative(Result& r) {
  double worst = 0.0;
  auto run = [&](const BilevelProblem& bp, const char* name) {
    const BilevelContext ctx = analyze(bp);
    for (double s : {1.0, -1.0}) {
      const Vector d = vec({s});
      const Vector y1 = solution_map_dd1(ctx, d).y1;
      std::vector<Vector> q;
      for (int k = 6; k <= 14; ++k) {
        const double t = std::ldexp(1.0, -k);
        q.push_back((kkt_track(bp, bp.x_star + t * d, ctx.kkt).point.y - bp.y_star) / t);
      }
      const double err = (2.0 * q.back() - q[q.size() - 2] - y1).lpNorm<Eigen::Infinity>();
      worst = std::max(worst, err);
      r.expect(err <= 1e-5, std::string(name) + " d = " + str(s) + " error " + str(err));
    }
  };
  run(qp_fixture(), "qp");
  run(worked_example(), "worked example");
  r.info << "max Richardson error " << str(worst);
}

void sp_fp_equivalence(Result& r) {
  const std::vector<BilevelProblem> fixtures{qp_fixture(), degenerate_fixture(), curved_fixture(), planar_fixture()};
  int directions = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const BilevelProblem& bp = fixtures[i];
    const BilevelContext ctx = analyze(bp);
    const std::string tag = "fixture " + std::to_string(i);
    r.expect(ctx.exact, tag + " exact");
    r.expect(first_order_check_bilevel(ctx, BilevelForm::sp).status ==
                 first_order_check_bilevel(ctx, BilevelForm::fp).status,
             tag + " first-order verdicts");
    r.expect(dual_multipliers(ctx, BilevelForm::sp).feasible == dual_multipliers(ctx, BilevelForm::fp).feasible,
             tag + " dual feasibility");
    for (const Vector& d : sphere_directions(bp.n, 256, 17)) {
      ++directions;
      const bool sp = sp_critical_member(ctx, d);
      r.expect(sp == fp_critical_member(ctx, d), tag + " critical membership");
      if (!sp) continue;
      const double a = sp_second_order_value(ctx, d), b = fp_second_order_value(ctx, d);
      if (std::isfinite(a) || std::isfinite(b)) {
        const double e = std::abs(a - b) / (1.0 + std::abs(a));
        worst = std::max(worst, e);
        r.expect(e <= 1e-7, tag + " inner LP values");
      } else {
        r.expect(a == b, tag + " inner LP values");
      }
    }
    r.expect(second_order_check_bilevel(ctx, BilevelForm::sp).verdict ==
                 second_order_check_bilevel(ctx, BilevelForm::fp).verdict,
             tag + " second-order verdicts");
  }
  r.info << fixtures.size() << " fixtures, " << directions << " directions, max value gap " << str(worst);
}

void calculus_suite(Result& r) {
  double worst = 0.0, worst_h = 0.0;
  for (std::uint64_t seed = 1000; seed < 1200; ++seed) {
    DagOptions opt;
    opt.depth = 1 + static_cast<int>(seed % 4);
    opt.zero_offsets = seed % 2 == 0;
    const ExprPtr e = DagBuilder(seed, opt).build();
    Rng rng(seed * 7);
    std::normal_distribution<double> n01;
    Vector x = Vector::Zero(3), d(3), w(3);
    if (!opt.zero_offsets) for (int i = 0; i < 3; ++i) x(i) = n01(rng);
    for (int i = 0; i < 3; ++i) {
      d(i) = n01(rng);
      w(i) = n01(rng);
    }
    const Vector g1 = e->dd1(x, d), g2 = e->dd2(x, d, w);
    const double e1 = rel_err(g1, fd_first(*e, x, d)), e2 = rel_err(g2, fd_second(*e, x, d, w));
    worst = std::max({worst, e1, e2});
    r.expect(e1 <= 1e-4 && e2 <= 1e-4, "seed " + std::to_string(seed) + " dd error " + str(std::max(e1, e2)));
    for (double t : {0.5, 2.0, 10.0}) {
      const double h1 = (e->dd1(x, t * d) - t * g1).norm() / (1 + t * g1.norm());
      const double h2 = (e->dd2(x, t * d, t * t * w) - t * t * g2).norm() / (1 + t * t * g2.norm());
      worst_h = std::max({worst_h, h1, h2});
      r.expect(h1 <= 1e-9 && h2 <= 1e-9, "seed " + std::to_string(seed) + " homogeneity");
    }
  }
  // Piecewise-affine DAGs with kinks through the base point.
  int zero = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    DagOptions opt;
    opt.zero_offsets = true;
    opt.smooth_atoms = false;
    const ExprPtr e = DagBuilder(seed, opt).build();
    Rng rng(seed);
    std::normal_distribution<double> n01;
    Vector d(3), w(3);
    for (int i = 0; i < 3; ++i) {
      d(i) = n01(rng);
      w(i) = n01(rng);
    }
    const RegularityReport rep =
        regularity_probe(*e, Vector::Zero(3), d, w, PathFamily::constant_w, RegularityMode::gph);
    bool ok = true;
    for (std::size_t k = rep.t_grid.size() / 2; k < rep.t_grid.size(); ++k) ok = ok && rep.residual_over_t2[k] == 0.0;
    zero += ok;
    r.expect(ok, "seed " + std::to_string(seed) + " residual not zero");
  }
  r.info << "200 DAGs, max quotient error " << str(worst) << ", max homogeneity error " << str(worst_h) << ", "
         << zero << "/50 zero residuals";
}

void cone_suite(Result& r) {
  int members = 0, outsiders = 0;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const ConeTriple tr = random_cone_triple(seed);
    const PolyhedralSet t2 = second_order_tangent(tr.k, tr.y, tr.d);
    const ConeGenerators g = cone_generators(t2);
    std::vector<Vector> gens = g.rays;
    for (Eigen::Index j = 0; j < g.lineality.cols(); ++j) {
      gens.push_back(g.lineality.col(j));
      gens.push_back(-g.lineality.col(j));
    }
    for (const Vector& w : gens) {
      ++members;
      r.expect(classify_residuals(parabolic_distance(tr.k, tr.y, tr.d, w), 0.0) == RegularityVerdict::consistent,
               "generator fails, seed " + std::to_string(seed));
    }
    if (outsiders >= 20) continue;
    Rng rng(seed);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
      Vector w(tr.k.dim());
      for (int i = 0; i < w.size(); ++i) w(i) = n01(rng);
      if (distance(t2, w) < 0.1) continue;
      ++outsiders;
      r.expect(classify_residuals(parabolic_distance(tr.k, tr.y, tr.d, w), 0.0) == RegularityVerdict::violated,
               "non-member passes, seed " + std::to_string(seed));
      break;
    }
  }
  r.expect(outsiders == 20, "20 non-members, got " + std::to_string(outsiders));
  r.info << "50 triples, " << members << " generators, " << outsiders << " non-members";
}

void nonsmooth_no_gap(Result& r) {
  const std::string dir = NOGAP_DATA_DIR;
  const NonsmoothProgram cubic = *parse_problem(dir + "/cubic_fixture.json").program;
  const SweepReport c = sufficient_sweep(cubic);
  r.expect(c.verdict == SecondOrderClass::degenerate, "cubic verdict " + to_string(c.verdict));
  r.expect(describe(c.verdict) == "necessary holds, sufficient not certified", "cubic description");
  r.expect(std::abs(c.margin) <= 1e-12, "cubic inner value 0, got " + str(c.margin));

  const NonsmoothProgram p = *parse_problem(dir + "/abs_fixture.json").program;
  const SweepReport a = sufficient_sweep(p);
  r.expect(a.verdict == SecondOrderClass::certified, "abs certified");
  r.expect(std::abs(a.margin - 2.0) <= 1e-8, "abs margin 2 +- 1e-8, got " + str(a.margin));
  const double f0 = p.f->eval(p.x_star)(0);
  double gamma = INFINITY;
  const int steps = 40;
  for (int i = -steps; i <= steps; ++i) {
    for (int j = -steps; j <= steps; ++j) {
      const Vector x = p.x_star + vec({0.1 * i / steps, 0.1 * j / steps});
      const double rad = (x - p.x_star).norm();
      if (rad == 0 || rad > 0.1 || distance(p.K, p.G->eval(x)) > 0) continue;
      gamma = std::min(gamma, (p.f->eval(x)(0) - f0) / (rad * rad));
    }
  }
  r.expect(gamma >= 0.5, "grid gamma " + str(gamma));
  r.info << "cubic " << to_string(c.verdict) << ", abs margin " << str(a.margin) << ", grid gamma " << str(gamma);
}

void growth_probes(Result& r) {
  const GrowthReport a = growth_probe(analyze(worked_example()), 0.2, 200, 1, 4.0);
  r.expect(a.gamma_hat >= 1.0, "worked example gamma " + str(a.gamma_hat));
  r.expect(a.violations.empty(), "worked example violations");
  r.expect(a.feasible > 0, "worked example feasible samples");
  const GrowthReport b = growth_probe(analyze(qp_fixture()), 0.3, 200, 2, 2.0);
  r.expect(b.gamma_hat >= 0.9 && b.gamma_hat <= 1.1, "qp gamma " + str(b.gamma_hat));
  r.info << "worked example gamma " << str(a.gamma_hat) << " (" << a.feasible << " feasible), qp gamma " << str(b.gamma_hat);
}

void lp_engine(Result& r) {
  Rng rng(9001);
  double worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    const int m = std::min(trial % 7, 12 - 2 * n);  // box rows count against the 12
    const LinearProgram lp = random_lp(rng, n, m);
    const LPResult res = lp_solve(lp);
    const auto verts = vertex_enumerate(lp.a_eq, lp.b_eq, lp.a_in, lp.b_in, 100000);
    double best = INFINITY;
    for (const Vector& v : verts) best = std::min(best, lp.c.dot(v));
    const std::string tag = "lp " + std::to_string(trial);
    if (res.status != LPStatus::optimal) {
      r.expect(false, tag + " not optimal");
      continue;
    }
    r.expect(std::abs(res.optimum - best) <= 1e-9 * (1 + std::abs(best)), tag + " optimum");
    worst_gap = std::max(worst_gap, res.duality_gap);
    r.expect(res.duality_gap <= 1e-8, tag + " gap " + str(res.duality_gap));
  }
  r.info << "50 LPs, max duality gap " << str(worst_gap);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Result&)>>> criteria{
      {"worked example end to end", worked_example_end_to_end},
      {"sensitivity exactness, degenerate fixture", degenerate_sensitivity},
      {"tracking vs derivative", tracking_vs_derivative},
      {"SP/FP equivalence", sp_fp_equivalence},
      {"directional-derivative calculus", calculus_suite},
      {"cone oracle", cone_suite},
      {"nonsmooth no-gap behaviour", nonsmooth_no_gap},
      {"growth probes", growth_probes},
      {"LP engine", lp_engine},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      criteria[i].second(r);
    } catch (const std::exception& e) {
      r.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = r.failures.empty();
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << r.info.str();
    for (std::size_t k = 0; k < r.failures.size() && k < 5; ++k) std::cout << (k ? "; " : " | ") << r.failures[k];
    if (r.failures.size() > 5) std::cout << "; +" << r.failures.size() - 5 << " more";
    std::cout << "\n";
  }
  return failed;
}
