#pragma once

// Test oracle: RDF graph isomorphism under bijective blank-node renaming.
// Backtracking over bnode assignments; intended for small test graphs.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "triplekit/rdf.hpp"

namespace tktest {

inline std::vector<std::string> bnode_ids(const std::vector<triplekit::rdf::Triple>& g) {
  std::set<std::string> ids;
  for (const auto& t : g) {
    if (auto* b = std::get_if<triplekit::rdf::BNode>(&t.subject)) ids.insert(b->id);
    if (auto* b = std::get_if<triplekit::rdf::BNode>(&t.object)) ids.insert(b->id);
  }
  return {ids.begin(), ids.end()};
}

inline bool graph_isomorphic(std::vector<triplekit::rdf::Triple> a,
                             std::vector<triplekit::rdf::Triple> b) {
  using triplekit::rdf::BNode;
  using triplekit::rdf::Term;
  using triplekit::rdf::Triple;
  if (a.size() != b.size()) return false;
  std::vector<std::string> ba = bnode_ids(a), bb = bnode_ids(b);
  if (ba.size() != bb.size()) return false;

  std::sort(b.begin(), b.end());
  std::vector<int> perm(bb.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);

  auto apply = [&](const Term& t, const std::map<std::string, std::string>& m) -> Term {
    if (auto* bn = std::get_if<BNode>(&t)) return BNode{m.at(bn->id)};
    return t;
  };

  do {
    std::map<std::string, std::string> m;
    for (size_t i = 0; i < ba.size(); ++i) m[ba[i]] = bb[perm[i]];
    std::vector<Triple> mapped;
    mapped.reserve(a.size());
    for (const Triple& t : a)
      mapped.push_back(Triple{apply(t.subject, m), t.predicate, apply(t.object, m)});
    std::sort(mapped.begin(), mapped.end());
    if (mapped == b) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

} // namespace tktest
