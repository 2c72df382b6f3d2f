#include "nogap/tolerances.hpp"

#include <stdexcept>

namespace nogap {

namespace {

template <typename Self>
auto field(Self& t, const std::string& name) -> decltype(&t.pivot) {
  if (name == "pivot") return &t.pivot;
  if (name == "feasibility") return &t.feasibility;
  if (name == "dedup") return &t.dedup;
  if (name == "activity") return &t.activity;
  if (name == "degeneracy") return &t.degeneracy;
  if (name == "kkt") return &t.kkt;
  if (name == "certificate") return &t.certificate;
  if (name == "duality_gap") return &t.duality_gap;
  if (name == "newton") return &t.newton;
  if (name == "equivalence") return &t.equivalence;
  throw std::invalid_argument("unknown tolerance '" + name + "'");
}

}  // namespace

Tolerances Tolerances::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("tolerance scale must be positive");
  Tolerances t = *this;
  for (double* v : {&t.pivot, &t.feasibility, &t.dedup, &t.activity, &t.degeneracy, &t.kkt,
                    &t.certificate, &t.duality_gap, &t.newton, &t.equivalence}) {
    *v *= factor;
  }
  return t;
}

double Tolerances::get(const std::string& name) const { return *field(*this, name); }

void Tolerances::set(const std::string& name, double value) {
  if (!(value > 0.0)) throw std::invalid_argument("tolerance '" + name + "' must be positive");
  *field(*this, name) = value;
}

const Tolerances& default_tolerances() {
  static const Tolerances t{};
  return t;
}

}  // namespace nogap
