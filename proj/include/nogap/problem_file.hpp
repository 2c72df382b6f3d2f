#pragma once

#include "nogap/bilevel.hpp"
#include "nogap/nsopt.hpp"
#include "nogap/tolerances.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogap {

inline constexpr const char* kFormatVersion = "1.0";

struct ProblemIssue {
  std::string pointer;  // JSON pointer of the offending value, "" for syntax errors
  int line = 0;         // 1-based; 0 when unknown
  int column = 0;
  std::string message;
};

std::string to_string(const ProblemIssue& issue);

// Parse or schema failure; carries every issue found.
struct ProblemError : std::runtime_error {
  explicit ProblemError(std::vector<ProblemIssue> issues);
  std::vector<ProblemIssue> issues;
};

enum class ProblemKind { nonsmooth_p, bilevel };
std::string to_string(ProblemKind k);

struct ProblemFile {
  std::string format_version = kFormatVersion;
  ProblemKind kind = ProblemKind::nonsmooth_p;
  std::string description;
  std::optional<NonsmoothProgram> program;
  std::optional<BilevelProblem> bilevel;
  std::map<std::string, ExprPtr> expressions;      // every named nonsmooth expression
  std::map<std::string, double> tolerance_overrides;
  Tolerances tol;                                  // defaults with the overrides applied
};

ProblemFile parse_problem_text(const std::string& text);
// Throws ProblemError, including when the file cannot be read.
ProblemFile parse_problem(const std::string& path);

// Canonical JSON form; keys are sorted. Polynomial maps only.
nlohmann::json serialize(const ProblemFile& pf);

// Line and column (1-based) of the value at pointer in text, or of its
// deepest existing ancestor.
std::pair<int, int> locate(const std::string& text, const std::string& pointer);

// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace nogap
