// nogap: first- and second-order optimality checks from problem files.
//
// Exit codes: 0 all requested conditions certified, 1 a condition failed
// with a witness, 2 inconclusive, 3 input error.

#include "nogap/bilevel.hpp"
#include "nogap/nsopt.hpp"
#include "nogap/problem_file.hpp"
#include "nogap/report.hpp"
#include "nogap/sampling.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace nogap;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailed = 1, kInconclusive = 2, kInput = 3 };

struct Settings {
  std::string command;
  std::string file;
  std::uint64_t seed = 0;
  int samples = 0;  // 0: command default
  double tol_scale = 1.0;
  bool json = false;
  std::string mode = "sufficient";
  std::string form = "sp";
  double radius = 0.1;
  std::vector<double> at;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A failure with a witness outranks an inconclusive result.
struct Outcome {
  int code = kOk;
  std::vector<std::string> lines;
  void fold(int c) {
    if (code == kFailed || c == kFailed) code = kFailed;
    else code = std::max(code, c);
  }
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(10) << (v == 0.0 ? 0.0 : v);
  return s.str();
}

std::string fmt(const Vector& v) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v(i));
  return out + ")";
}

int status_code(CheckStatus s) {
  switch (s) {
    case CheckStatus::holds: return kOk;
    case CheckStatus::violated: return kFailed;
    case CheckStatus::inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

int verdict_code(SecondOrderClass c, SecondOrderMode mode) {
  switch (c) {
    case SecondOrderClass::certified: return kOk;
    case SecondOrderClass::degenerate: return mode == SecondOrderMode::necessary ? kOk : kFailed;
    case SecondOrderClass::necessary_violated: return kFailed;
    case SecondOrderClass::inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

SecondOrderMode parse_mode(const std::string& m) {
  return m == "necessary" ? SecondOrderMode::necessary : SecondOrderMode::sufficient;
}

std::vector<BilevelForm> parse_forms(const std::string& f) {
  if (f == "sp") return {BilevelForm::sp};
  if (f == "fp") return {BilevelForm::fp};
  return {BilevelForm::sp, BilevelForm::fp};
}

const NonsmoothProgram& need_program(const ProblemFile& pf, const std::string& command) {
  if (!pf.program) throw InputError(command + " needs a nonsmooth_p problem, got " + to_string(pf.kind));
  return *pf.program;
}

const BilevelProblem& need_bilevel(const ProblemFile& pf, const std::string& command) {
  if (!pf.bilevel) throw InputError(command + " needs a bilevel problem, got " + to_string(pf.kind));
  return *pf.bilevel;
}

CheckOptions check_options(const Settings& s, const Tolerances& tol, int default_samples) {
  CheckOptions opt;
  opt.samples = s.samples > 0 ? s.samples : default_samples;
  opt.seed = s.seed;
  opt.tol = tol;
  return opt;
}

// ---------------------------------------------------------------------------
// nonsmooth_p commands

void check_first(const NonsmoothProgram& p, const CheckOptions& opt, json& checks, Outcome& out) {
  const FirstOrderReport r = first_order_check(p, opt);
  checks.push_back(report::to_json(r));
  out.fold(status_code(r.status));
  std::string line = "first order: " + to_string(r.status) + (r.exact ? " (exact, " + std::to_string(r.pieces) + (r.pieces == 1 ? " piece)" : " pieces)") : " (sampled)");
  if (r.status == CheckStatus::violated) line += "; descent direction d = " + fmt(r.witness) + ", f'(x*;d) = " + fmt(r.witness_value);
  out.lines.push_back(line);
  if (!r.fallback_reason.empty()) out.lines.push_back("  " + r.fallback_reason);
}

void check_second(const NonsmoothProgram& p, const CheckOptions& opt, SecondOrderMode mode, json& checks, Outcome& out) {
  check_first(p, opt, checks, out);
  if (out.code == kFailed) return;
  const SweepReport r = sufficient_sweep(p, opt);
  json j = report::to_json(r);
  j["mode"] = to_string(mode);
  checks.push_back(j);
  out.fold(verdict_code(r.verdict, mode));
  out.lines.push_back("second order (" + to_string(mode) + "): " + describe(r.verdict) + ", margin " + fmt(r.margin));
  for (const DirectionVerdict& w : r.witnesses) {
    out.lines.push_back("  witness d = " + fmt(w.d) + ", inner value " + fmt(w.soc_value));
  }
  out.lines.push_back("  " + r.caveat);
}

void probe_mscq(const NonsmoothProgram& p, const Settings& s, json& checks, Outcome& out) {
  const MscqProbeReport r = mscq_probe(p, s.radius, s.samples > 0 ? s.samples : 40, s.seed);
  checks.push_back(report::to_json(r));
  out.fold(r.verdict == MscqVerdict::bounded ? kOk : kInconclusive);
  out.lines.push_back("MSCQ probe: " + to_string(r.verdict) + ", max ratio d(x,Psi)/d(G(x),K) = " + fmt(r.max_ratio));
  if (r.verdict == MscqVerdict::suspect) out.lines.push_back("  ratios grow towards x*; kappa looks unbounded");
}

void probe_regularity(const NonsmoothProgram& p, const Settings& s, const Tolerances& tol, json& checks,
                      Outcome& out) {
  std::vector<Vector> dirs = critical_cone_sample(p, check_options(s, tol, 64));
  if (dirs.empty()) dirs = sphere_directions(p.dim(), 4, s.seed);
  const int keep = s.samples > 0 ? s.samples : 4;
  if (static_cast<int>(dirs.size()) > keep) dirs.resize(static_cast<std::size_t>(keep));
  const std::vector<Vector> ws = sphere_directions(p.dim(), 2, s.seed + 1);
  json probes = json::array();
  int violated = 0, inconclusive = 0;
  for (const Vector& d : dirs) {
    for (const Vector& w : ws) {
      for (PathFamily fam : {PathFamily::constant_w, PathFamily::t_inverse_sqrt, PathFamily::random_bounded}) {
        for (const auto& [name, e, mode] : {std::tuple{"f", p.f, RegularityMode::epi}, std::tuple{"G", p.G, RegularityMode::gph}}) {
          const RegularityReport r = regularity_probe(*e, p.x_star, d, w, fam, mode, s.seed);
          json j = report::to_json(r);
          j["map"] = name;
          j["d"] = report::vec(d);
          j["w"] = report::vec(w);
          probes.push_back(j);
          if (r.verdict == RegularityVerdict::violated) {
            if (violated++ == 0) out.lines.push_back("  violated: " + std::string(name) + " along d = " + fmt(d) + ", w = " + fmt(w) + ", path " + to_string(fam));
          }
          if (r.verdict == RegularityVerdict::inconclusive) ++inconclusive;
        }
      }
    }
  }
  checks.push_back({{"check", "regularity_probe"}, {"probes", probes}, {"violated", violated}, {"inconclusive", inconclusive}});
  out.fold(violated ? kFailed : inconclusive ? kInconclusive : kOk);
  out.lines.insert(out.lines.begin(), "regularity probe: " + std::to_string(probes.size()) + " probes, " +
                                          std::to_string(violated) + " violated, " + std::to_string(inconclusive) +
                                          " inconclusive (f epi, G gph)");
}

void growth_nonsmooth(const NonsmoothProgram& p, const Settings& s, const Tolerances& tol, json& checks, Outcome& out) {
  double margin = 0.0;
  const SweepReport sw = sufficient_sweep(p, check_options(s, tol, 256));
  if (sw.verdict == SecondOrderClass::certified) margin = sw.margin;
  const GrowthReport g = growth_probe(p, s.radius, s.samples > 0 ? s.samples : 200, s.seed, margin);
  json j = report::to_json(g);
  j["radius"] = report::num(s.radius);
  j["certified_margin"] = report::num(margin);
  checks.push_back(j);
  if (!g.violations.empty()) out.fold(kFailed);
  else if (g.feasible > 0 && g.gamma_hat > 0 && g.consistent_with_margin) out.fold(kOk);
  else out.fold(kInconclusive);
  out.lines.push_back("growth probe: gamma_hat = " + fmt(g.gamma_hat) + " over " + std::to_string(g.feasible) +
                      " feasible samples, radius " + fmt(s.radius));
  if (!g.violations.empty()) out.lines.push_back("  no growth at x = " + fmt(g.violations.front()));
}

// ---------------------------------------------------------------------------
// bilevel commands

json solution_map_json(const BilevelContext& ctx) {
  std::vector<Diag> ws;
  for (const SensitivityPiece& pc : ctx.pieces) ws.push_back(pc.W);
  json j{{"mode", ctx.exact ? "exact" : "numeric"}, {"W_tested", report::diags(ws)}};
  if (!ctx.exact) j["fallback_reason"] = ctx.fallback_reason;
  return j;
}

report::CqProvenance bilevel_provenance(const BilevelContext& ctx, json& checks) {
  if (!ctx.exact) return report::CqProvenance::assumed;
  const GmfcqReport g = gmfcq_check(ctx, BilevelForm::sp);
  checks.push_back(report::to_json(g));
  return g.holds ? report::CqProvenance::certified_via_gmfcq : report::CqProvenance::assumed;
}

void bilevel_first(const BilevelContext& ctx, const Settings& s, const CheckOptions& opt, json& checks, Outcome& out) {
  int applicable = 0;
  for (BilevelForm form : parse_forms(s.form)) {
    const BilevelFirstOrder r = first_order_check_bilevel(ctx, form, opt);
    checks.push_back(report::to_json(r));
    if (!r.applicable) {
      out.lines.push_back("first order (" + to_string(form) + "): not applicable; " + r.caveat);
      continue;
    }
    ++applicable;
    out.fold(status_code(r.status));
    std::string line = "first order (" + to_string(form) + "): " + to_string(r.status);
    if (r.status == CheckStatus::violated) line += "; descent direction d_x = " + fmt(r.witness);
    out.lines.push_back(line);
    std::string gens;
    for (const Vector& g : r.critical_generators) gens += " " + fmt(g);
    out.lines.push_back("  critical cone generators:" + (gens.empty() ? std::string(" none") : gens));
    if (!r.caveat.empty()) out.lines.push_back("  " + r.caveat);
  }
  if (applicable == 0) out.fold(kInconclusive);
}

void bilevel_second(const BilevelContext& ctx, const Settings& s, const CheckOptions& opt, json& checks, Outcome& out) {
  const SecondOrderMode mode = parse_mode(s.mode);
  int applicable = 0;
  for (BilevelForm form : parse_forms(s.form)) {
    const BilevelSecondOrder r = second_order_check_bilevel(ctx, form, opt);
    json j = report::to_json(r);
    j["mode"] = to_string(mode);
    if (!r.applicable) {
      checks.push_back(j);
      out.lines.push_back("second order (" + to_string(form) + "): not applicable; " + r.caveat);
      continue;
    }
    ++applicable;
    const std::string conclusion = r.verdict == SecondOrderClass::certified
                                       ? "strict bi-local minimizer (quadratic growth)"
                                       : describe(r.verdict);
    j["conclusion"] = conclusion;
    checks.push_back(j);
    out.fold(verdict_code(r.verdict, mode));
    out.lines.push_back("second order (" + to_string(form) + ", " + to_string(mode) + "): " + conclusion + ", margin " + fmt(r.margin));
    for (const BilevelDirection& d : r.directions) {
      out.lines.push_back("  d_x = " + fmt(d.d_x) + ": y' = " + fmt(d.y1) + ", value " + fmt(d.value));
    }
    for (const BilevelDirection& w : r.witnesses) out.lines.push_back("  witness d_x = " + fmt(w.d_x) + ", value " + fmt(w.value));
    if (!r.caveat.empty()) out.lines.push_back("  " + r.caveat);
  }
  if (applicable == 0) out.fold(kInconclusive);
}

void bilevel_dual(const BilevelContext& ctx, const Settings& s, const CheckOptions& opt, json& checks, Outcome& out) {
  if (!ctx.exact) {
    checks.push_back({{"check", "bilevel_dual"}, {"status", "not_applicable"}, {"reason", ctx.fallback_reason}});
    out.fold(kInconclusive);
    out.lines.push_back("dual multipliers: not applicable; " + ctx.fallback_reason);
    return;
  }
  for (BilevelForm form : parse_forms(s.form)) {
    const DualReport r = dual_multipliers(ctx, form);
    json j = report::to_json(r);
    if (r.feasible) {
      out.fold(kOk);
      out.lines.push_back("dual multipliers (" + to_string(form) + "): found for W = " + to_string(r.W) +
                          ", lambda_G = " + fmt(r.lambda_G) + ", lambda_H = " + fmt(r.lambda_H));
    } else {
      const BilevelFirstOrder fo = first_order_check_bilevel(ctx, form, opt);
      if (fo.status == CheckStatus::violated) {
        j["witness"] = report::vec(fo.witness);
        out.fold(kFailed);
        out.lines.push_back("dual multipliers (" + to_string(form) + "): none; descent direction d_x = " + fmt(fo.witness));
      } else {
        out.fold(kInconclusive);
        out.lines.push_back("dual multipliers (" + to_string(form) + "): none, but no primal descent direction was found");
      }
    }
    checks.push_back(j);
  }
}

void bilevel_track(const BilevelProblem& bp, const Settings& s, const Tolerances& tol, json& checks, Outcome& out) {
  if (static_cast<int>(s.at.size()) != bp.n) {
    throw InputError("--at needs " + std::to_string(bp.n) + " comma-separated values");
  }
  Vector x(bp.n);
  for (int i = 0; i < bp.n; ++i) x(i) = s.at[static_cast<std::size_t>(i)];
  KKTPoint k = reference_kkt(bp, tol);
  TrackOptions topt;
  topt.tol = tol;
  TrackResult r;
  int iterations = 0;
  for (int step = 1; step <= 4; ++step) {
    r = kkt_track(bp, bp.x_star + (step / 4.0) * (x - bp.x_star), k, topt);
    iterations += r.iterations;
    k = r.point;
  }
  r.iterations = iterations;
  json j = report::to_json(r);
  j["x"] = report::vec(x);
  checks.push_back(j);
  out.fold(kOk);
  out.lines.push_back("kkt track at x = " + fmt(x) + ": y = " + fmt(r.point.y) + ", mu = " + fmt(r.point.mu) +
                      ", xi = " + fmt(r.point.xi) + ", residual " + fmt(r.point.residual));
}

void bilevel_growth(const BilevelContext& ctx, const Settings& s, const CheckOptions& opt, json& checks, Outcome& out) {
  double margin = 0.0;
  const BilevelSecondOrder so = second_order_check_bilevel(ctx, BilevelForm::sp, opt);
  if (so.applicable && so.verdict == SecondOrderClass::certified) margin = so.margin;
  const GrowthReport g = growth_probe(ctx, s.radius, s.samples > 0 ? s.samples : 200, s.seed, margin);
  json j = report::to_json(g);
  j["radius"] = report::num(s.radius);
  j["certified_margin"] = report::num(margin);
  checks.push_back(j);
  if (!g.violations.empty()) out.fold(kFailed);
  else if (g.feasible > 0 && g.gamma_hat > 0 && g.consistent_with_margin) out.fold(kOk);
  else out.fold(kInconclusive);
  out.lines.push_back("growth probe: gamma_hat = " + fmt(g.gamma_hat) + " over " + std::to_string(g.feasible) +
                      " feasible samples, radius " + fmt(s.radius) + ", certified margin " + fmt(margin));
  if (!g.violations.empty()) out.lines.push_back("  no growth at x = " + fmt(g.violations.front()));
}

void bilevel_cq(const BilevelContext& ctx, const Settings& s, json& checks, Outcome& out, report::CqProvenance& prov) {
  const CQReport& cq = ctx.cq;
  auto mark = [](bool b) { return b ? "yes" : "no"; };
  out.lines.push_back(std::string("lower level: MFCQ ") + mark(cq.mfcq) + ", LICQ " + mark(cq.licq) + ", CRCQ probe " +
                      mark(cq.crcq_consistent) + ", SSOSC " + mark(cq.ssosc));
  std::string verts;
  for (const Vector& v : cq.vertices) verts += " " + fmt(v);
  out.lines.push_back("  multiplier vertices:" + verts);
  if (!(cq.mfcq && cq.crcq_consistent && cq.ssosc)) out.fold(kInconclusive);
  if (!ctx.exact) {
    out.lines.push_back("GMFCQ: not applicable; " + ctx.fallback_reason);
    return;
  }
  bool all = true;
  for (BilevelForm form : parse_forms(s.form)) {
    const GmfcqReport g = gmfcq_check(ctx, form);
    checks.push_back(report::to_json(g));
    all = all && g.holds;
    out.fold(g.holds ? kOk : kFailed);
    out.lines.push_back("GMFCQ (" + to_string(form) + "): " + (g.holds ? "holds" : "fails"));
    for (const GmfcqPiece& pc : g.pieces) {
      if (!pc.rank_ok || !pc.direction_ok) out.lines.push_back("  fails on W = " + to_string(pc.W));
    }
  }
  prov = all ? report::CqProvenance::certified_via_gmfcq : report::CqProvenance::assumed;
}

// ---------------------------------------------------------------------------

int run(const Settings& s) {
  ProblemFile pf;
  try {
    pf = parse_problem(s.file);
  } catch (const ProblemError& e) {
    for (const ProblemIssue& i : e.issues) std::cerr << s.file << ": " << to_string(i) << "\n";
    return kInput;
  }
  const Tolerances tol = pf.tol.scaled(s.tol_scale);
  report::RunInfo info{s.command, s.seed, s.samples, s.tol_scale, tol};
  json rep = report::header(pf, info);
  json checks = json::array();
  Outcome out;
  report::CqProvenance prov = report::CqProvenance::assumed;

  try {
    const std::string& c = s.command;
    if (c == "check-first") {
      check_first(need_program(pf, c), check_options(s, tol, 256), checks, out);
    } else if (c == "check-second") {
      check_second(need_program(pf, c), check_options(s, tol, 256), parse_mode(s.mode), checks, out);
    } else if (c == "probe-mscq") {
      probe_mscq(need_program(pf, c), s, checks, out);
      prov = report::CqProvenance::probed;
    } else if (c == "probe-regularity") {
      probe_regularity(need_program(pf, c), s, tol, checks, out);
    } else if (c == "check-cq") {
      if (pf.program) {
        probe_mscq(*pf.program, s, checks, out);
        prov = report::CqProvenance::probed;
      } else {
        const BilevelContext ctx = analyze(*pf.bilevel, s.seed, tol);
        rep["lower_level"] = report::to_json(ctx.cq);
        rep["solution_map"] = solution_map_json(ctx);
        bilevel_cq(ctx, s, checks, out, prov);
      }
    } else if (c == "probe-growth") {
      if (pf.program) {
        growth_nonsmooth(*pf.program, s, tol, checks, out);
      } else {
        const BilevelContext ctx = analyze(*pf.bilevel, s.seed, tol);
        rep["solution_map"] = solution_map_json(ctx);
        prov = bilevel_provenance(ctx, checks);
        bilevel_growth(ctx, s, check_options(s, tol, 256), checks, out);
      }
    } else if (c == "bilevel track") {
      bilevel_track(need_bilevel(pf, c), s, tol, checks, out);
    } else {
      const BilevelContext ctx = analyze(need_bilevel(pf, c), s.seed, tol);
      rep["lower_level"] = report::to_json(ctx.cq);
      rep["solution_map"] = solution_map_json(ctx);
      const CheckOptions opt = check_options(s, tol, 256);
      prov = bilevel_provenance(ctx, checks);
      if (c == "bilevel first") bilevel_first(ctx, s, opt, checks, out);
      else if (c == "bilevel second") bilevel_second(ctx, s, opt, checks, out);
      else if (c == "bilevel dual") bilevel_dual(ctx, s, opt, checks, out);
      else throw InputError("unknown command '" + c + "'");
    }
  } catch (const InputError& e) {
    std::cerr << "nogap: " << e.what() << "\n";
    return kInput;
  } catch (const NotKKTError& e) {
    std::cerr << "nogap: reference point is not a lower-level KKT point: " << e.what() << "\n";
    return kInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "nogap: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    // Hypotheses not met, tracking or LP failures: nothing was decided.
    std::cerr << "nogap: " << e.what() << "\n";
    rep["error"] = e.what();
    out.fold(kInconclusive);
    out.lines.push_back("inconclusive: " + std::string(e.what()));
  }

  rep["cq_provenance"] = report::to_string(prov);
  rep["checks"] = checks;
  rep["exit_code"] = out.code;
  rep["summary"] = out.lines;
  if (s.json) {
    std::cout << report::dump(rep);
  } else {
    std::cout << s.file << " [" << to_string(pf.kind) << "] " << s.command << "\n";
    for (const std::string& l : out.lines) std::cout << "  " << l << "\n";
    std::cout << "  CQ provenance: " << report::to_string(prov) << "\n";
    std::cout << "  exit " << out.code << "\n";
  }
  return out.code;
}

void add_common(CLI::App* cmd, Settings& s, bool second_order = false, bool forms = false, bool radius = false) {
  cmd->add_option("file", s.file, "problem file (JSON)")->required();
  cmd->add_option("--seed", s.seed, "seed for all sampling");
  cmd->add_option("--samples", s.samples, "direction or point samples (0: command default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol-scale", s.tol_scale, "multiplies every tolerance")->check(CLI::PositiveNumber);
  cmd->add_flag("--json", s.json, "emit the verification report as JSON");
  if (second_order) {
    cmd->add_option("--mode", s.mode, "necessary or sufficient")->check(CLI::IsMember({"necessary", "sufficient"}));
  }
  if (forms) cmd->add_option("--form", s.form, "sp, fp or both")->check(CLI::IsMember({"sp", "fp", "both"}));
  if (radius) cmd->add_option("--radius", s.radius, "probe radius")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nogap: no-gap first- and second-order optimality checks"};
  app.require_subcommand(1);
  Settings s;

  add_common(app.add_subcommand("check-first", "first-order stationarity of a nonsmooth program"), s);
  add_common(app.add_subcommand("check-second", "second-order conditions of a nonsmooth program"), s, true);
  add_common(app.add_subcommand("check-cq", "constraint qualifications (MSCQ probe, or lower CQs and GMFCQ)"), s, false, true, true);
  add_common(app.add_subcommand("probe-regularity", "second-order regularity probes of f and G"), s);
  add_common(app.add_subcommand("probe-mscq", "metric subregularity probe"), s, false, false, true);
  add_common(app.add_subcommand("probe-growth", "sampled quadratic growth"), s, false, false, true);

  CLI::App* bilevel = app.add_subcommand("bilevel", "bilevel checks");
  bilevel->require_subcommand(1);
  add_common(bilevel->add_subcommand("first", "first-order conditions"), s, false, true);
  add_common(bilevel->add_subcommand("second", "second-order conditions"), s, true, true);
  add_common(bilevel->add_subcommand("dual", "dual multipliers"), s, false, true);
  CLI::App* track = bilevel->add_subcommand("track", "lower-level KKT tracking");
  add_common(track, s);
  track->add_option("--at", s.at, "upper-level point x")->required()->delimiter(',')->expected(1, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInput;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    s.command = sub->get_name();
    for (CLI::App* leaf : sub->get_subcommands()) s.command += " " + leaf->get_name();
  }
  return run(s);
}
