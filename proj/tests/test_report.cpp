#include "doctest.h"

#include "fixtures.hpp"
#include "nogap/report.hpp"

#include <cmath>
#include <limits>

using namespace nogap;
using namespace nogap::testing;
namespace rp = nogap::report;

namespace {

const std::string kScalar = R"({
  "format_version": "1.0",
  "kind": "nonsmooth_p",
  "dim": 1,
  "expressions": {"f": {"op": "var", "index": 0}, "G": {"op": "var", "index": 0}},
  "sets": {"K": {"type": "product", "factors": ["nonpos"]}},
  "points": {"x_star": [0]}
})";

rp::RunInfo run() {
  rp::RunInfo r;
  r.command = "check-first";
  r.seed = 7;
  r.samples = 16;
  return r;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("non-finite numbers are strings") {
  CHECK(rp::num(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(rp::num(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(rp::num(std::nan("")) == "nan");
  CHECK(rp::num(-0.0).dump() == "0.0");
  CHECK(rp::num(1.5) == 1.5);
  CHECK(rp::vec(vec({1, -std::numeric_limits<double>::infinity()})).dump() == "[1.0,\"-inf\"]");
}

TEST_CASE("header keys are sorted and complete") {
  const ProblemFile pf = parse_problem_text(kScalar);
  const rp::json h = rp::header(pf, run());
  std::string prev;
  for (auto it = h.begin(); it != h.end(); ++it) {
    CHECK(prev < it.key());
    prev = it.key();
  }
  CHECK(h.at("problem").at("kind") == "nonsmooth_p");
  CHECK(h.at("seed") == 7);
  CHECK(h.at("tolerances").contains("duality_gap"));
  const std::string d = h.at("problem").at("digest");
  CHECK(d.rfind("fnv1a64:", 0) == 0);
  CHECK(d.size() == 8 + 16);
}

TEST_CASE("digest depends on content, not layout") {
  const ProblemFile a = parse_problem_text(kScalar);
  std::string flat;
  for (char c : kScalar) if (c != '\n') flat.push_back(c);
  const ProblemFile b = parse_problem_text(flat);
  CHECK(rp::header(a, run()).at("problem") == rp::header(b, run()).at("problem"));

  std::string moved = kScalar;
  moved.replace(moved.find("\"nonpos\""), 8, "\"zero\"");
  const ProblemFile c = parse_problem_text(moved);
  CHECK(rp::header(a, run()).at("problem").at("digest") != rp::header(c, run()).at("problem").at("digest"));
}

TEST_CASE("reports are reproducible") {
  const NonsmoothProgram p = abs_fixture();
  const ProblemFile pf = parse_problem_text(kScalar);
  auto once = [&] {
    rp::json r = rp::header(pf, run());
    r["checks"] = rp::json::array({rp::to_json(first_order_check(p)), rp::to_json(sufficient_sweep(p))});
    return rp::dump(r);
  };
  const std::string a = once();
  CHECK(a == once());
  CHECK(a.back() == '\n');
  CHECK(a.find("\"margin\": 2.0") != std::string::npos);
}

}  // TEST_SUITE
