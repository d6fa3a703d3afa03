#pragma once

#include <compare>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "triplekit/error.hpp"

namespace triplekit::rdf {

struct Iri {
  std::string value;
  auto operator<=>(const Iri&) const = default;
};

// Blank node.  Generated ids are "__" + source name + "#" + counter.
struct BNode {
  std::string id;
  auto operator<=>(const BNode&) const = default;
};

enum class LiteralKind { Plain, Lang, Typed };

struct Literal {
  LiteralKind kind = LiteralKind::Plain;
  std::string lexical;
  std::string qualifier;  // language tag (lowercased) or datatype IRI

  static Literal plain(std::string text);
  static Literal lang(std::string langtag, std::string text);
  static Literal typed(std::string datatype, std::string text);
  auto operator<=>(const Literal&) const = default;
};

using Term = std::variant<Iri, BNode, Literal>;

struct Triple {
  Term subject;    // Iri or BNode
  Iri predicate;
  Term object;

  auto operator<=>(const Triple&) const = default;
};

inline bool is_literal(const Term& t) { return std::holds_alternative<Literal>(t); }
inline bool is_bnode(const Term& t) { return std::holds_alternative<BNode>(t); }
inline bool is_iri(const Term& t) { return std::holds_alternative<Iri>(t); }

// N-Triples-like debug rendering.
std::string term_debug(const Term& t);
std::string triple_debug(const Triple& t);

namespace ns {
inline constexpr std::string_view rdf = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
inline constexpr std::string_view rdfs = "http://www.w3.org/2000/01/rdf-schema#";
inline constexpr std::string_view xml = "http://www.w3.org/XML/1998/namespace";

std::string rdf_type();
std::string rdf_property();
std::string rdfs_resource();
std::string rdfs_class();
std::string rdfs_subclassof();
std::string rdfs_subpropertyof();
} // namespace ns

struct Location {
  std::string source;
  int line = 0;
};

class RdfError : public Error {
public:
  using Error::Error;
};

// Raised for RDF/XML constructs outside the supported subset; the message
// names the offending element or attribute.
class UnsupportedConstruct : public RdfError {
public:
  using RdfError::RdfError;
};

struct ReadOptions {
  std::string base;  // base IRI for resolving relative references; empty = none
};

std::vector<Triple> load_rdf(std::string_view document, const std::string& source_name,
                             const ReadOptions& opts = {});
std::vector<Triple> load_rdf(std::istream& document, const std::string& source_name,
                             const ReadOptions& opts = {});

using DescriptionAction = std::function<void(std::vector<Triple> batch, const Location& where)>;

// Streams the document one top-level description at a time; memory use is
// bounded by the largest description.
void process_rdf(std::string_view document, const std::string& source_name,
                 const DescriptionAction& action, const ReadOptions& opts = {});
void process_rdf(std::istream& document, const std::string& source_name,
                 const DescriptionAction& action, const ReadOptions& opts = {});

void write_rdf_xml(std::ostream& out, std::span<const Triple> triples);
std::string write_rdf_xml(std::span<const Triple> triples);

} // namespace triplekit::rdf
