#pragma once

// Independent oracles for the store tests: a full-scan match filter and a
// reference literal comparator, both implemented without touching the store's
// own index or comparator code paths.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "triplekit/rdf.hpp"
#include "triplekit/store.hpp"

namespace tktest {

struct Quad {
  triplekit::rdf::Triple triple;
  std::string source;
  auto operator<=>(const Quad&) const = default;
};

inline std::vector<Quad> full_scan(const triplekit::store::Store& st) {
  std::vector<Quad> out;
  triplekit::store::MatchIterator it = st.match({});
  while (const triplekit::store::TripleRecord* r = it.next())
    out.push_back(Quad{st.record_triple(*r), std::string(st.resolve_source(r->source))});
  std::sort(out.begin(), out.end());
  return out;
}

// --- term-level pattern, evaluated independently of the store ---------------

struct OraclePattern {
  std::optional<triplekit::rdf::Term> s;
  std::optional<triplekit::rdf::Iri> p;
  // object: exact term, or one of the literal query forms
  std::optional<triplekit::rdf::Term> o_exact;
  std::optional<std::string> o_prefix;
  std::optional<std::pair<double, double>> o_range;
  std::optional<std::string> o_case_insensitive;
};

inline std::string oracle_fold(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::optional<double> oracle_numeric(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  for (char c : s)
    if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') return std::nullopt;
  return v;
}

inline bool oracle_matches(const Quad& q, const OraclePattern& p) {
  using triplekit::rdf::Literal;
  if (p.s && !(q.triple.subject == *p.s)) return false;
  if (p.p && !(q.triple.predicate == *p.p)) return false;
  if (p.o_exact && !(q.triple.object == *p.o_exact)) return false;
  const Literal* lit = std::get_if<Literal>(&q.triple.object);
  if (p.o_prefix) {
    if (!lit) return false;
    std::string fl = oracle_fold(lit->lexical), fp = oracle_fold(*p.o_prefix);
    if (fl.rfind(fp, 0) != 0) return false;
  }
  if (p.o_range) {
    if (!lit) return false;
    auto v = oracle_numeric(lit->lexical);
    if (!v || *v < p.o_range->first || *v > p.o_range->second) return false;
  }
  if (p.o_case_insensitive) {
    if (!lit) return false;
    if (oracle_fold(lit->lexical) != oracle_fold(*p.o_case_insensitive)) return false;
  }
  return true;
}

inline std::vector<Quad> oracle_match(const std::vector<Quad>& all, const OraclePattern& p) {
  std::vector<Quad> out;
  for (const Quad& q : all)
    if (oracle_matches(q, p)) out.push_back(q);
  std::sort(out.begin(), out.end());
  return out;
}

// Reference literal comparator: numerics first by value; case-insensitive;
// uppercase-first tiebreak (AaBb); then kind and qualifier.
inline bool reference_literal_less(const triplekit::rdf::Literal& a,
                                   const triplekit::rdf::Literal& b) {
  auto an = oracle_numeric(a.lexical), bn = oracle_numeric(b.lexical);
  if (an.has_value() != bn.has_value()) return an.has_value();
  if (an && bn && *an != *bn) return *an < *bn;
  if (!an && !bn) {
    std::string fa = oracle_fold(a.lexical), fb = oracle_fold(b.lexical);
    if (fa != fb) return fa < fb;
  }
  if (a.lexical != b.lexical) return a.lexical < b.lexical;
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  return a.qualifier < b.qualifier;
}

} // namespace tktest
