#pragma once

#include "nogap/bilevel.hpp"
#include "nogap/nsopt.hpp"
#include "nogap/problem_file.hpp"
#include "nogap/regularity.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace nogap::report {

using nlohmann::json;
using nogap::to_string;

// Non-finite values become the strings "inf", "-inf" and "nan".
json num(double v);
json vec(const Vector& v);
json mat(const Matrix& m);
json diags(const std::vector<Diag>& ws);

json to_json(const Tolerances& t);
json to_json(const LPResult& r);
json to_json(const FirstOrderReport& r);
json to_json(const DirectionVerdict& v);
json to_json(const SweepReport& r);
json to_json(const MscqProbeReport& r);
json to_json(const RegularityReport& r);
json to_json(const CQReport& r);
json to_json(const GmfcqReport& r);
json to_json(const BilevelFirstOrder& r);
json to_json(const DualReport& r);
json to_json(const BilevelDirection& d);
json to_json(const BilevelSecondOrder& r);
json to_json(const GrowthReport& r);
json to_json(const TrackResult& r);

enum class CqProvenance { assumed, probed, certified_via_gmfcq };
std::string to_string(CqProvenance p);

struct RunInfo {
  std::string command;
  std::uint64_t seed = 0;
  int samples = 0;
  double tol_scale = 1.0;
  Tolerances tol;
};

// Skeleton VerificationReport: problem digest, run settings and tolerances.
// Callers add "cq_provenance", "checks", "exit_code" and "summary".
json header(const ProblemFile& pf, const RunInfo& run);

// Two-space indented, sorted keys, trailing newline.
std::string dump(const json& report);

}  // namespace nogap::report
