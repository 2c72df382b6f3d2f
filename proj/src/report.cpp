#include "nogap/report.hpp"

#include <cmath>

namespace nogap::report {

json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v == 0.0 ? 0.0 : v;  // no negative zero
}

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

json mat(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

json diags(const std::vector<Diag>& ws) {
  json a = json::array();
  for (const Diag& w : ws) a.push_back(to_string(w));
  return a;
}

namespace {

json vecs(const std::vector<Vector>& vs) {
  json a = json::array();
  for (const Vector& v : vs) a.push_back(vec(v));
  return a;
}

json nums(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

}  // namespace

json to_json(const Tolerances& t) {
  return {{"pivot", num(t.pivot)},           {"feasibility", num(t.feasibility)}, {"dedup", num(t.dedup)},
          {"activity", num(t.activity)},     {"degeneracy", num(t.degeneracy)},   {"kkt", num(t.kkt)},
          {"certificate", num(t.certificate)}, {"duality_gap", num(t.duality_gap)}, {"newton", num(t.newton)},
          {"equivalence", num(t.equivalence)}};
}

json to_json(const LPResult& r) {
  json out{{"status", to_string(r.status)}, {"optimum", num(r.optimum)}};
  if (r.status == LPStatus::optimal) {
    out["solution"] = vec(r.solution);
    out["duality_gap"] = num(r.duality_gap);
  }
  if (r.status == LPStatus::unbounded) out["ray"] = vec(r.ray);
  if (r.status == LPStatus::infeasible) {
    out["farkas_eq"] = vec(r.dual_eq);
    out["farkas_in"] = vec(r.dual_in);
  }
  return out;
}

json to_json(const FirstOrderReport& r) {
  json out{{"check", "first_order"},
           {"status", to_string(r.status)},
           {"exact", r.exact},
           {"pieces", r.pieces},
           {"directions", r.directions},
           {"min_value", num(r.min_value)}};
  if (!r.fallback_reason.empty()) out["fallback_reason"] = r.fallback_reason;
  if (r.status == CheckStatus::violated) {
    out["witness"] = vec(r.witness);
    out["witness_value"] = num(r.witness_value);
  }
  json certs = json::array();
  for (const LPResult& c : r.certificates) certs.push_back(to_json(c));
  out["certificates"] = certs;
  return out;
}

json to_json(const DirectionVerdict& v) {
  json out{{"d", vec(v.d)},
           {"in_tangent", v.in_tangent},
           {"f_d1", num(v.f_d1)},
           {"value", num(v.soc_value)},
           {"piece", v.piece_id},
           {"pieces", v.pieces}};
  if (v.certificate.status == LPStatus::optimal && v.certificate.solution.size() > 0) {
    out["w"] = vec(v.certificate.solution);
  }
  return out;
}

json to_json(const SweepReport& r) {
  json dirs = json::array(), wit = json::array();
  for (const DirectionVerdict& v : r.verdicts) dirs.push_back(to_json(v));
  for (const DirectionVerdict& v : r.witnesses) wit.push_back(to_json(v));
  return {{"check", "second_order"},
          {"verdict", to_string(r.verdict)},
          {"description", describe(r.verdict)},
          {"margin", num(r.margin)},
          {"epi_regularity_probe", to_string(r.epi_probe)},
          {"caveat", r.caveat},
          {"directions", dirs},
          {"witnesses", wit}};
}

json to_json(const MscqProbeReport& r) {
  return {{"check", "mscq_probe"},
          {"verdict", to_string(r.verdict)},
          {"radius", num(r.radius)},
          {"max_ratio", num(r.max_ratio)},
          {"shell_radius", nums(r.shell_radius)},
          {"shell_max", nums(r.shell_max)},
          {"samples", r.kappa.size()},
          {"caveat", "d(x, Psi) is an upper bound from local search; MSCQ is probed, not proven"}};
}

json to_json(const RegularityReport& r) {
  return {{"mode", to_string(r.mode)},
          {"family", to_string(r.family)},
          {"verdict", to_string(r.verdict)},
          {"t", nums(r.t_grid)},
          {"residual_over_t2", nums(r.residual_over_t2)}};
}

json to_json(const CQReport& r) {
  json verts = json::array();
  for (const VertexSsosc& v : r.ssosc_vertices) {
    verts.push_back({{"mu", vec(v.mu)},
                     {"xi", vec(v.xi)},
                     {"strongly_active", v.strongly_active},
                     {"definiteness", to_string(v.result.verdict)},
                     {"margin", num(v.result.margin)}});
  }
  return {{"mfcq", r.mfcq},
          {"mfcq_witness", vec(r.mfcq_witness)},
          {"mfcq_slack", num(r.mfcq_slack)},
          {"licq", r.licq},
          {"licq_rank", r.licq_rank},
          {"licq_rows", r.licq_rows},
          {"crcq_probe", r.crcq_consistent},
          {"crcq_samples", r.crcq_samples},
          {"crcq_subsets", r.crcq_subsets},
          {"ssosc", r.ssosc},
          {"ssosc_margin", num(r.ssosc_margin)},
          {"ssosc_vertices", verts},
          {"active", r.active},
          {"multiplier_vertices", vecs(r.vertices)}};
}

json to_json(const GmfcqReport& r) {
  json pieces = json::array();
  for (const GmfcqPiece& p : r.pieces) {
    pieces.push_back({{"W", to_string(p.W)},
                      {"rank_ok", p.rank_ok},
                      {"direction_ok", p.direction_ok},
                      {"witness", vec(p.witness)},
                      {"slack", num(p.slack)}});
  }
  return {{"check", "gmfcq"}, {"form", to_string(r.form)}, {"holds", r.holds}, {"pieces", pieces}};
}

json to_json(const BilevelFirstOrder& r) {
  json out{{"check", "bilevel_first_order"},
           {"form", to_string(r.form)},
           {"status", r.applicable ? to_string(r.status) : "not_applicable"},
           {"applicable", r.applicable},
           {"exact", r.exact},
           {"numeric", r.numeric},
           {"caveat", r.caveat},
           {"min_value", num(r.min_value)},
           {"pieces", r.pieces},
           {"tangent_generators", vecs(r.tangent_generators)},
           {"critical_generators", vecs(r.critical_generators)}};
  if (r.status == CheckStatus::violated) out["witness"] = vec(r.witness);
  return out;
}

json to_json(const DualReport& r) {
  json out{{"check", "bilevel_dual"},
           {"form", to_string(r.form)},
           {"feasible", r.feasible},
           {"tested_W", diags(r.tested)},
           {"feasible_W", diags(r.feasible_for)}};
  if (r.feasible) {
    out["W"] = to_string(r.W);
    out["residual"] = num(r.residual);
    out["lambda_H"] = vec(r.lambda_H);
    out["lambda_G"] = vec(r.lambda_G);
    if (r.form == BilevelForm::fp) {
      out["lambda_L"] = vec(r.lambda_L);
      out["lambda_h"] = vec(r.lambda_h);
      out["lambda_g"] = vec(r.lambda_g);
    }
  }
  return out;
}

json to_json(const BilevelDirection& d) {
  json out{{"d_x", vec(d.d_x)}, {"y1", vec(d.y1)}, {"value", num(d.value)}, {"piece", d.piece}, {"numeric", d.numeric}};
  if (std::isfinite(d.value) && d.w_x.size() > 0) out["w_x"] = vec(d.w_x);
  return out;
}

json to_json(const BilevelSecondOrder& r) {
  json dirs = json::array(), wit = json::array();
  for (const BilevelDirection& d : r.directions) dirs.push_back(to_json(d));
  for (const BilevelDirection& d : r.witnesses) wit.push_back(to_json(d));
  return {{"check", "bilevel_second_order"},
          {"form", to_string(r.form)},
          {"verdict", r.applicable ? to_string(r.verdict) : "not_applicable"},
          {"applicable", r.applicable},
          {"margin", num(r.margin)},
          {"numeric", r.numeric},
          {"caveat", r.caveat},
          {"directions", dirs},
          {"witnesses", wit}};
}

json to_json(const GrowthReport& r) {
  return {{"check", "growth_probe"},
          {"gamma_hat", num(r.gamma_hat)},
          {"samples", r.samples},
          {"feasible", r.feasible},
          {"tracking_failures", r.tracking_failures},
          {"violations", vecs(r.violations)},
          {"margin_ratio", num(r.margin_ratio)},
          {"consistent_with_margin", r.consistent_with_margin}};
}

json to_json(const TrackResult& r) {
  return {{"check", "kkt_track"},
          {"y", vec(r.point.y)},
          {"mu", vec(r.point.mu)},
          {"xi", vec(r.point.xi)},
          {"residual", num(r.point.residual)},
          {"iterations", r.iterations},
          {"lm_steps", r.lm_steps}};
}

std::string to_string(CqProvenance p) {
  switch (p) {
    case CqProvenance::assumed: return "assumed";
    case CqProvenance::probed: return "probed";
    case CqProvenance::certified_via_gmfcq: return "certified-via-GMFCQ";
  }
  return "?";
}

json header(const ProblemFile& pf, const RunInfo& run) {
  const std::string canonical = serialize(pf).dump();
  return {{"report_version", "1"},
          {"problem", {{"kind", to_string(pf.kind)}, {"digest", "fnv1a64:" + fnv1a_hex(canonical)}}},
          {"command", run.command},
          {"seed", run.seed},
          {"samples", run.samples},
          {"tol_scale", num(run.tol_scale)},
          {"tolerances", to_json(run.tol)}};
}

std::string dump(const json& report) { return report.dump(2) + "\n"; }

}  // namespace nogap::report
