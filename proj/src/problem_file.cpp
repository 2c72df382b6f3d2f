#include "nogap/problem_file.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

namespace nogap {

using nlohmann::json;

std::string to_string(const ProblemIssue& issue) {
  std::string out;
  if (issue.line > 0) out += "line " + std::to_string(issue.line) + ", column " + std::to_string(issue.column) + ": ";
  if (!issue.pointer.empty()) out += issue.pointer + ": ";
  return out + issue.message;
}

namespace {

std::string join_issues(const std::vector<ProblemIssue>& issues) {
  std::string out;
  for (const ProblemIssue& i : issues) {
    if (!out.empty()) out += "\n";
    out += to_string(i);
  }
  return out;
}

}  // namespace

ProblemError::ProblemError(std::vector<ProblemIssue> list)
    : std::runtime_error(join_issues(list)), issues(std::move(list)) {}

std::string to_string(ProblemKind k) { return k == ProblemKind::bilevel ? "bilevel" : "nonsmooth_p"; }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Locating pointers in the raw text.

namespace {

struct Scanner {
  const std::string& s;
  std::size_t pos = 0;

  void ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r')) ++pos;
  }
  std::string string() {
    std::string out;
    ++pos;  // opening quote
    while (pos < s.size() && s[pos] != '"') {
      if (s[pos] == '\\' && pos + 1 < s.size()) {
        out += s[pos + 1];
        pos += 2;
      } else {
        out += s[pos++];
      }
    }
    ++pos;
    return out;
  }
  void skip() {
    ws();
    if (pos >= s.size()) return;
    const char c = s[pos];
    if (c == '"') {
      string();
    } else if (c == '{' || c == '[') {
      int depth = 0;
      while (pos < s.size()) {
        const char d = s[pos];
        if (d == '"') {
          string();
          continue;
        }
        if (d == '{' || d == '[') ++depth;
        if (d == '}' || d == ']') --depth;
        ++pos;
        if (depth == 0) return;
      }
    } else {
      while (pos < s.size() && s[pos] != ',' && s[pos] != '}' && s[pos] != ']') ++pos;
    }
  }
  // Position of the value reached by tokens[k..], or of the deepest ancestor.
  std::size_t find(const std::vector<std::string>& tokens, std::size_t k) {
    ws();
    const std::size_t here = pos;
    if (k == tokens.size() || pos >= s.size()) return here;
    if (s[pos] == '{') {
      ++pos;
      while (true) {
        ws();
        if (pos >= s.size() || s[pos] != '"') return here;
        const std::string key = string();
        ws();
        if (pos >= s.size() || s[pos] != ':') return here;
        ++pos;
        if (key == tokens[k]) return find(tokens, k + 1);
        skip();
        ws();
        if (pos >= s.size() || s[pos] != ',') return here;
        ++pos;
      }
    }
    if (s[pos] == '[') {
      std::size_t index = 0;
      try {
        index = std::stoul(tokens[k]);
      } catch (const std::exception&) {
        return here;
      }
      ++pos;
      for (std::size_t i = 0;; ++i) {
        ws();
        if (pos >= s.size() || s[pos] == ']') return here;
        if (i == index) return find(tokens, k + 1);
        skip();
        ws();
        if (pos >= s.size() || s[pos] != ',') return here;
        ++pos;
      }
    }
    return here;
  }
};

std::pair<int, int> line_column(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::pair<int, int> locate(const std::string& text, const std::string& pointer) {
  std::vector<std::string> tokens;
  std::size_t i = 1;
  while (!pointer.empty() && i <= pointer.size()) {
    const std::size_t next = pointer.find('/', i);
    std::string tok = pointer.substr(i, next == std::string::npos ? std::string::npos : next - i);
    std::string un;
    for (std::size_t k = 0; k < tok.size(); ++k) {
      if (tok[k] == '~' && k + 1 < tok.size()) {
        un += tok[k + 1] == '1' ? '/' : '~';
        ++k;
      } else {
        un += tok[k];
      }
    }
    tokens.push_back(un);
    if (next == std::string::npos) break;
    i = next + 1;
  }
  Scanner sc{text};
  return line_column(text, sc.find(tokens, 0));
}

// ---------------------------------------------------------------------------
// Parsing.

namespace {

struct SchemaFailure {
  std::string pointer;
  std::string message;
};

[[noreturn]] void fail(const std::string& ptr, const std::string& msg) { throw SchemaFailure{ptr, msg}; }

std::string child(const std::string& ptr, const std::string& key) {
  std::string esc;
  for (char c : key) {
    if (c == '~') esc += "~0";
    else if (c == '/') esc += "~1";
    else esc += c;
  }
  return ptr + "/" + esc;
}

std::string child(const std::string& ptr, std::size_t i) { return ptr + "/" + std::to_string(i); }

void expect_object(const json& j, const std::string& ptr, const std::set<std::string>& allowed,
                   const std::set<std::string>& required) {
  if (!j.is_object()) fail(ptr, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) fail(child(ptr, k), "unknown key '" + k + "'");
  }
  for (const std::string& k : required) {
    if (!j.contains(k)) fail(ptr, "missing key '" + k + "'");
  }
}

double number(const json& j, const std::string& ptr) {
  if (!j.is_number()) fail(ptr, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& ptr, int lo = 0) {
  if (!j.is_number_integer()) fail(ptr, "expected an integer");
  const long long v = j.get<long long>();
  if (v < lo || v > 1000000) fail(ptr, "integer out of range");
  return static_cast<int>(v);
}

std::string text(const json& j, const std::string& ptr) {
  if (!j.is_string()) fail(ptr, "expected a string");
  return j.get<std::string>();
}

Vector vector_of(const json& j, const std::string& ptr) {
  if (!j.is_array()) fail(ptr, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], child(ptr, i));
  return v;
}

Matrix matrix_of(const json& j, const std::string& ptr, int cols) {
  if (!j.is_array()) fail(ptr, "expected an array of rows");
  Matrix a(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_of(j[r], child(ptr, r));
    if (row.size() != cols) fail(child(ptr, r), "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    a.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return a;
}

std::shared_ptr<Polynomial> polynomial(const json& comps, const std::string& ptr, int in_dim) {
  if (!comps.is_array() || comps.empty()) fail(ptr, "expected a nonempty array of components");
  auto p = std::make_shared<Polynomial>(in_dim, static_cast<int>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string cp = child(ptr, k);
    expect_object(comps[k], cp, {"coef", "pow"}, {"coef", "pow"});
    const Vector coef = vector_of(comps[k]["coef"], child(cp, "coef"));
    const json& pw = comps[k]["pow"];
    const std::string pp = child(cp, "pow");
    if (!pw.is_array() || pw.size() != static_cast<std::size_t>(coef.size())) {
      fail(pp, "expected one exponent row per coefficient");
    }
    for (std::size_t t = 0; t < pw.size(); ++t) {
      const std::string tp = child(pp, t);
      if (!pw[t].is_array() || pw[t].size() != static_cast<std::size_t>(in_dim)) {
        fail(tp, "expected " + std::to_string(in_dim) + " exponents");
      }
      std::vector<int> e;
      for (std::size_t v = 0; v < pw[t].size(); ++v) e.push_back(integer(pw[t][v], child(tp, v), 0));
      p->add_term(static_cast<int>(k), coef(static_cast<Eigen::Index>(t)), e);
    }
  }
  return p;
}

class ExprReader {
 public:
  ExprReader(const json& block, std::string ptr, int dim) : block_(block), ptr_(std::move(ptr)), dim_(dim) {}

  NodePtr named(const std::string& name) {
    if (auto it = memo_.find(name); it != memo_.end()) return it->second;
    if (!block_.contains(name)) return nullptr;
    if (!open_.insert(name).second) fail(child(ptr_, name), "reference cycle through '" + name + "'");
    NodePtr n = node(block_[name], child(ptr_, name), dim_, true);
    open_.erase(name);
    memo_[name] = n;
    return n;
  }

 private:
  NodePtr node(const json& j, const std::string& ptr, int dim, bool top) {
    if (!j.is_object() || !j.contains("op")) fail(ptr, "expected an expression object with an 'op' key");
    const std::string op = text(j["op"], child(ptr, "op"));
    auto arg = [&](bool optional) -> NodePtr {
      if (!j.contains("arg")) {
        if (optional) return ex::var(0, dim);
        fail(ptr, "missing key 'arg'");
      }
      return node(j["arg"], child(ptr, "arg"), dim, top);
    };
    try {
      if (op == "const") {
        expect_object(j, ptr, {"op", "value"}, {"value"});
        return ex::constant(vector_of(j["value"], child(ptr, "value")));
      }
      if (op == "var") {
        expect_object(j, ptr, {"op", "index", "len"}, {"index"});
        const int index = integer(j["index"], child(ptr, "index"));
        const int len = j.contains("len") ? integer(j["len"], child(ptr, "len"), 1) : 1;
        if (index + len > dim) fail(ptr, "variable slice exceeds the input dimension " + std::to_string(dim));
        return ex::var(index, len);
      }
      if (op == "affine") {
        expect_object(j, ptr, {"op", "matrix", "offset", "arg"}, {"matrix"});
        NodePtr a = arg(true);
        const Matrix m = matrix_of(j["matrix"], child(ptr, "matrix"), a->out_dim);
        const Vector b = j.contains("offset") ? vector_of(j["offset"], child(ptr, "offset")) : Vector::Zero(m.rows());
        return ex::affine(m, b, a);
      }
      if (op == "poly") {
        expect_object(j, ptr, {"op", "components", "arg"}, {"components"});
        NodePtr a = arg(true);
        return ex::smooth(polynomial(j["components"], child(ptr, "components"), a->out_dim), a);
      }
      if (op == "abs" || op == "min0" || op == "min" || op == "max" || op == "l1" || op == "l2") {
        expect_object(j, ptr, {"op", "arg"}, {"arg"});
        NodePtr a = arg(false);
        if (op == "abs") return ex::abs(a);
        if (op == "min0") return ex::min_zero(a);
        if (op == "min") return ex::min(a);
        if (op == "max") return ex::max(a);
        if (op == "l1") return ex::l1(a);
        return ex::l2(a);
      }
      if (op == "sum" || op == "stack") {
        expect_object(j, ptr, {"op", "args"}, {"args"});
        const json& as = j["args"];
        if (!as.is_array() || as.empty()) fail(child(ptr, "args"), "expected a nonempty array");
        std::vector<NodePtr> args;
        for (std::size_t i = 0; i < as.size(); ++i) args.push_back(node(as[i], child(child(ptr, "args"), i), dim, top));
        return op == "sum" ? ex::sum(args) : ex::stack(args);
      }
      if (op == "scale") {
        expect_object(j, ptr, {"op", "factor", "arg"}, {"factor", "arg"});
        return ex::scale(number(j["factor"], child(ptr, "factor")), arg(false));
      }
      if (op == "compose") {
        expect_object(j, ptr, {"op", "outer", "arg"}, {"outer", "arg"});
        NodePtr a = arg(false);
        NodePtr outer = node(j["outer"], child(ptr, "outer"), a->out_dim, false);
        return ex::compose(std::make_shared<PiecewiseExpr>(outer, a->out_dim), a);
      }
      if (op == "ref") {
        expect_object(j, ptr, {"op", "name"}, {"name"});
        const std::string name = text(j["name"], child(ptr, "name"));
        if (!top) fail(ptr, "references are not allowed inside 'outer'");
        NodePtr n = named(name);
        if (!n) fail(child(ptr, "name"), "unknown expression '" + name + "'");
        return n;
      }
    } catch (const std::invalid_argument& e) {
      fail(ptr, e.what());
    }
    fail(child(ptr, "op"), "unknown atom '" + op + "'");
  }

  const json& block_;
  std::string ptr_;
  int dim_;
  std::map<std::string, NodePtr> memo_;
  std::set<std::string> open_;
};

PolyhedralSet set_of(const json& j, const std::string& ptr) {
  if (!j.is_object() || !j.contains("type")) fail(ptr, "expected a set object with a 'type' key");
  const std::string type = text(j["type"], child(ptr, "type"));
  if (type == "product") {
    expect_object(j, ptr, {"type", "factors"}, {"factors"});
    const json& fs = j["factors"];
    if (!fs.is_array() || fs.empty()) fail(child(ptr, "factors"), "expected a nonempty array");
    std::vector<Factor> out;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const std::string f = text(fs[i], child(child(ptr, "factors"), i));
      if (f == "free") out.push_back(Factor::free);
      else if (f == "nonpos") out.push_back(Factor::nonpos);
      else if (f == "zero") out.push_back(Factor::zero);
      else fail(child(child(ptr, "factors"), i), "unknown factor '" + f + "'");
    }
    return PolyhedralSet::product(out);
  }
  if (type == "hform") {
    expect_object(j, ptr, {"type", "dim", "A", "b", "C", "e"}, {"dim"});
    const int dim = integer(j["dim"], child(ptr, "dim"), 1);
    const Matrix a = j.contains("A") ? matrix_of(j["A"], child(ptr, "A"), dim) : Matrix(0, dim);
    const Vector b = j.contains("b") ? vector_of(j["b"], child(ptr, "b")) : Vector(0);
    const Matrix c = j.contains("C") ? matrix_of(j["C"], child(ptr, "C"), dim) : Matrix(0, dim);
    const Vector e = j.contains("e") ? vector_of(j["e"], child(ptr, "e")) : Vector(0);
    if (a.rows() != b.size()) fail(child(ptr, "b"), "expected one entry per row of A");
    if (c.rows() != e.size()) fail(child(ptr, "e"), "expected one entry per row of C");
    try {
      return PolyhedralSet::hform(a, b, c, e);
    } catch (const std::invalid_argument& ex) {
      fail(ptr, ex.what());
    }
  }
  fail(child(ptr, "type"), "unknown set type '" + type + "'");
}

SmoothMapPtr smooth_of(const json& j, const std::string& ptr, int in_dim) {
  if (!j.is_object() || !j.contains("op")) fail(ptr, "expected a map object with an 'op' key");
  const std::string op = text(j["op"], child(ptr, "op"));
  if (op == "poly") {
    expect_object(j, ptr, {"op", "components"}, {"components"});
    return polynomial(j["components"], child(ptr, "components"), in_dim);
  }
  if (op == "affine") {
    expect_object(j, ptr, {"op", "matrix", "offset"}, {"matrix"});
    const Matrix a = matrix_of(j["matrix"], child(ptr, "matrix"), in_dim);
    const Vector b = j.contains("offset") ? vector_of(j["offset"], child(ptr, "offset")) : Vector::Zero(a.rows());
    if (b.size() != a.rows()) fail(child(ptr, "offset"), "expected one entry per row of the matrix");
    return std::make_shared<Polynomial>(Polynomial::affine(a, b));
  }
  fail(child(ptr, "op"), "bilevel maps must be 'poly' or 'affine', got '" + op + "'");
}

class Collector {
 public:
  template <class Fn>
  void run(Fn&& fn) {
    try {
      fn();
    } catch (const SchemaFailure& f) {
      issues.push_back({f.pointer, 0, 0, f.message});
    }
  }
  std::vector<ProblemIssue> issues;
};

}  // namespace

ProblemFile parse_problem_text(const std::string& src) {
  json doc;
  try {
    doc = json::parse(src);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(src, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (const auto p = msg.find("] "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ProblemError({{"", line, col, msg}});
  }

  ProblemFile pf;
  Collector c;
  bool header_ok = false;
  c.run([&] {
    expect_object(doc, "", {"format_version", "kind", "description", "dim", "n", "m", "expressions", "sets", "points",
                            "tolerances"},
                  {"format_version", "kind", "expressions", "points"});
    pf.format_version = text(doc["format_version"], "/format_version");
    if (pf.format_version != kFormatVersion) {
      fail("/format_version", "unsupported format version '" + pf.format_version + "' (expected " + kFormatVersion + ")");
    }
    const std::string kind = text(doc["kind"], "/kind");
    if (kind == "nonsmooth_p") pf.kind = ProblemKind::nonsmooth_p;
    else if (kind == "bilevel") pf.kind = ProblemKind::bilevel;
    else fail("/kind", "unknown kind '" + kind + "'");
    if (doc.contains("description")) pf.description = text(doc["description"], "/description");
    header_ok = true;
  });
  if (!header_ok) {
    for (ProblemIssue& i : c.issues) std::tie(i.line, i.column) = locate(src, i.pointer);
    throw ProblemError(c.issues);
  }

  c.run([&] {
    if (!doc.contains("tolerances")) return;
    expect_object(doc["tolerances"], "/tolerances", {"pivot", "feasibility", "dedup", "activity", "degeneracy", "kkt",
                                                     "certificate", "duality_gap", "newton", "equivalence"},
                  {});
    for (const auto& [k, v] : doc["tolerances"].items()) {
      const double x = number(v, child("/tolerances", k));
      if (!(x > 0.0)) fail(child("/tolerances", k), "tolerances must be positive");
      pf.tolerance_overrides[k] = x;
      pf.tol.set(k, x);
    }
  });

  if (pf.kind == ProblemKind::nonsmooth_p) {
    NonsmoothProgram p;
    int dim = 0;
    c.run([&] {
      if (doc.contains("n") || doc.contains("m")) fail("", "keys 'n' and 'm' belong to bilevel problems; use 'dim'");
      if (!doc.contains("dim")) fail("", "missing key 'dim'");
      dim = integer(doc["dim"], "/dim", 1);
    });
    if (dim > 0) {
      c.run([&] {
        const json& block = doc["expressions"];
        if (!block.is_object()) fail("/expressions", "expected an object");
        if (!block.contains("f")) fail("/expressions", "missing expression 'f'");
        if (!block.contains("G")) fail("/expressions", "missing expression 'G'");
        ExprReader reader(block, "/expressions", dim);
        for (const auto& [name, v] : block.items()) {
          pf.expressions[name] = std::make_shared<PiecewiseExpr>(reader.named(name), dim);
        }
        p.f = pf.expressions["f"];
        p.G = pf.expressions["G"];
        if (p.f->output_dim() != 1) fail("/expressions/f", "f must be scalar");
      });
      c.run([&] {
        if (!doc.contains("sets")) fail("", "missing key 'sets'");
        expect_object(doc["sets"], "/sets", {"K"}, {"K"});
        p.K = set_of(doc["sets"]["K"], "/sets/K");
      });
      c.run([&] {
        expect_object(doc["points"], "/points", {"x_star"}, {"x_star"});
        p.x_star = vector_of(doc["points"]["x_star"], "/points/x_star");
        if (p.x_star.size() != dim) fail("/points/x_star", "expected " + std::to_string(dim) + " entries");
      });
    }
    if (c.issues.empty()) {
      c.run([&] {
        if (p.G->output_dim() != p.K.dim()) {
          fail("/sets/K", "K has dimension " + std::to_string(p.K.dim()) + " but G has " + std::to_string(p.G->output_dim()) + " outputs");
        }
        try {
          p.validate(pf.tol.feasibility);
        } catch (const std::invalid_argument& e) {
          fail("/points/x_star", std::string("infeasible reference point: ") + e.what());
        }
      });
      pf.program = p;
    }
  } else {
    BilevelProblem bp;
    c.run([&] {
      if (doc.contains("dim")) fail("/dim", "bilevel problems use 'n' and 'm'");
      if (doc.contains("sets")) fail("/sets", "bilevel problems take no set block");
      if (!doc.contains("n") || !doc.contains("m")) fail("", "missing key 'n' or 'm'");
      bp.n = integer(doc["n"], "/n", 1);
      bp.m = integer(doc["m"], "/m", 1);
    });
    if (bp.n > 0 && bp.m > 0) {
      c.run([&] {
        expect_object(doc["expressions"], "/expressions", {"F", "G", "H", "f", "g", "h"}, {"F", "f"});
        const json& b = doc["expressions"];
        const int in = bp.n + bp.m;
        bp.F = smooth_of(b["F"], "/expressions/F", in);
        bp.f = smooth_of(b["f"], "/expressions/f", in);
        if (b.contains("G")) bp.G = smooth_of(b["G"], "/expressions/G", in);
        if (b.contains("H")) bp.H = smooth_of(b["H"], "/expressions/H", in);
        if (b.contains("g")) bp.g = smooth_of(b["g"], "/expressions/g", in);
        if (b.contains("h")) bp.h = smooth_of(b["h"], "/expressions/h", in);
        if (bp.F->out_dim() != 1) fail("/expressions/F", "F must be scalar");
        if (bp.f->out_dim() != 1) fail("/expressions/f", "f must be scalar");
      });
      c.run([&] {
        expect_object(doc["points"], "/points", {"x_star", "y_star", "mu_star", "xi_star"}, {"x_star", "y_star"});
        const json& pts = doc["points"];
        bp.x_star = vector_of(pts["x_star"], "/points/x_star");
        bp.y_star = vector_of(pts["y_star"], "/points/y_star");
        if (bp.x_star.size() != bp.n) fail("/points/x_star", "expected " + std::to_string(bp.n) + " entries");
        if (bp.y_star.size() != bp.m) fail("/points/y_star", "expected " + std::to_string(bp.m) + " entries");
        if (pts.contains("mu_star")) bp.mu_star = vector_of(pts["mu_star"], "/points/mu_star");
        if (pts.contains("xi_star")) bp.xi_star = vector_of(pts["xi_star"], "/points/xi_star");
      });
    }
    if (c.issues.empty()) {
      c.run([&] {
        try {
          bp.validate(pf.tol);
        } catch (const std::invalid_argument& e) {
          fail("/points", std::string("infeasible reference point: ") + e.what());
        }
      });
      pf.bilevel = bp;
    }
  }

  if (!c.issues.empty()) {
    for (ProblemIssue& i : c.issues) std::tie(i.line, i.column) = locate(src, i.pointer);
    throw ProblemError(c.issues);
  }
  return pf;
}

ProblemFile parse_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProblemError({{"", 0, 0, "cannot open '" + path + "'"}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_problem_text(ss.str());
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

const Polynomial& as_polynomial(const SmoothMapPtr& map) {
  const auto* p = dynamic_cast<const Polynomial*>(map.get());
  if (!p) throw std::invalid_argument("serialize: only polynomial maps can be written ('" + map->describe() + "')");
  return *p;
}

json components(const Polynomial& p) {
  json comps = json::array();
  for (const auto& terms : p.components()) {
    json coef = json::array(), pow = json::array();
    for (const Monomial& t : terms) {
      coef.push_back(t.coef);
      pow.push_back(t.pow);
    }
    comps.push_back({{"coef", coef}, {"pow", pow}});
  }
  return comps;
}

struct NodeWriter {
  std::map<const Node*, std::string> names;
  std::string self;

  json write(const NodePtr& n, bool top) const {
    if (top) {
      if (auto it = names.find(n.get()); it != names.end() && it->second != self) {
        return {{"op", "ref"}, {"name", it->second}};
      }
    }
    auto arg = [&] { return write(n->args.at(0), top); };
    switch (n->kind) {
      case NodeKind::constant: return {{"op", "const"}, {"value", to_json(n->offset)}};
      case NodeKind::variable: return {{"op", "var"}, {"index", n->begin}, {"len", n->out_dim}};
      case NodeKind::affine: return {{"op", "affine"}, {"matrix", to_json(n->matrix)}, {"offset", to_json(n->offset)}, {"arg", arg()}};
      case NodeKind::smooth: return {{"op", "poly"}, {"components", components(as_polynomial(n->smooth))}, {"arg", arg()}};
      case NodeKind::abs: return {{"op", "abs"}, {"arg", arg()}};
      case NodeKind::min_zero: return {{"op", "min0"}, {"arg", arg()}};
      case NodeKind::min: return {{"op", "min"}, {"arg", arg()}};
      case NodeKind::max: return {{"op", "max"}, {"arg", arg()}};
      case NodeKind::l1: return {{"op", "l1"}, {"arg", arg()}};
      case NodeKind::l2: return {{"op", "l2"}, {"arg", arg()}};
      case NodeKind::scale: return {{"op", "scale"}, {"factor", n->factor}, {"arg", arg()}};
      case NodeKind::sum:
      case NodeKind::stack: {
        json args = json::array();
        for (const NodePtr& a : n->args) args.push_back(write(a, top));
        return {{"op", n->kind == NodeKind::sum ? "sum" : "stack"}, {"args", args}};
      }
      case NodeKind::compose:
        return {{"op", "compose"}, {"outer", write(n->outer->root(), false)}, {"arg", arg()}};
    }
    throw std::logic_error("serialize: unknown node kind");
  }
};

json write_set(const PolyhedralSet& k) {
  if (k.is_product()) {
    json fs = json::array();
    for (Factor f : k.factors()) fs.push_back(to_string(f));
    return {{"type", "product"}, {"factors", fs}};
  }
  json out{{"type", "hform"}, {"dim", k.dim()}};
  if (k.a().rows() > 0) {
    out["A"] = to_json(k.a());
    out["b"] = to_json(k.b());
  }
  if (k.c().rows() > 0) {
    out["C"] = to_json(k.c());
    out["e"] = to_json(k.e());
  }
  return out;
}

}  // namespace

json serialize(const ProblemFile& pf) {
  json out;
  out["format_version"] = pf.format_version;
  out["kind"] = to_string(pf.kind);
  if (!pf.description.empty()) out["description"] = pf.description;
  if (!pf.tolerance_overrides.empty()) out["tolerances"] = pf.tolerance_overrides;
  if (pf.kind == ProblemKind::nonsmooth_p) {
    if (!pf.program) throw std::invalid_argument("serialize: no program");
    const NonsmoothProgram& p = *pf.program;
    std::map<std::string, ExprPtr> exprs = pf.expressions;
    exprs.emplace("f", p.f);
    exprs.emplace("G", p.G);
    NodeWriter w;
    for (const auto& [name, e] : exprs) w.names.emplace(e->root().get(), name);
    json block = json::object();
    for (const auto& [name, e] : exprs) {
      w.self = name;
      block[name] = w.write(e->root(), true);
    }
    out["dim"] = p.dim();
    out["expressions"] = block;
    out["sets"] = {{"K", write_set(p.K)}};
    out["points"] = {{"x_star", to_json(p.x_star)}};
  } else {
    if (!pf.bilevel) throw std::invalid_argument("serialize: no bilevel problem");
    const BilevelProblem& bp = *pf.bilevel;
    json block = json::object();
    const std::pair<const char*, const SmoothMapPtr*> maps[] = {{"F", &bp.F}, {"G", &bp.G}, {"H", &bp.H},
                                                               {"f", &bp.f}, {"g", &bp.g}, {"h", &bp.h}};
    for (const auto& [name, ptr] : maps) {
      if (*ptr) block[name] = {{"op", "poly"}, {"components", components(as_polynomial(*ptr))}};
    }
    out["n"] = bp.n;
    out["m"] = bp.m;
    out["expressions"] = block;
    json pts{{"x_star", to_json(bp.x_star)}, {"y_star", to_json(bp.y_star)}};
    if (bp.mu_star) pts["mu_star"] = to_json(*bp.mu_star);
    if (bp.xi_star) pts["xi_star"] = to_json(*bp.xi_star);
    out["points"] = pts;
  }
  return out;
}

}  // namespace nogap
