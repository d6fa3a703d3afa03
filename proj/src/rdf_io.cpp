#include "triplekit/rdf.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "triplekit/markup.hpp"

namespace triplekit::rdf {

Literal Literal::plain(std::string text) { return Literal{LiteralKind::Plain, std::move(text), {}}; }

Literal Literal::lang(std::string langtag, std::string text) {
  if (langtag.empty()) throw RdfError("empty language tag");
  std::transform(langtag.begin(), langtag.end(), langtag.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return Literal{LiteralKind::Lang, std::move(text), std::move(langtag)};
}

Literal Literal::typed(std::string datatype, std::string text) {
  return Literal{LiteralKind::Typed, std::move(text), std::move(datatype)};
}

namespace ns {
std::string rdf_type() { return std::string(rdf) + "type"; }
std::string rdf_property() { return std::string(rdf) + "Property"; }
std::string rdfs_resource() { return std::string(rdfs) + "Resource"; }
std::string rdfs_class() { return std::string(rdfs) + "Class"; }
std::string rdfs_subclassof() { return std::string(rdfs) + "subClassOf"; }
std::string rdfs_subpropertyof() { return std::string(rdfs) + "subPropertyOf"; }
} // namespace ns

namespace {

std::string escape_ntriples(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

} // namespace

std::string term_debug(const Term& t) {
  if (const Iri* i = std::get_if<Iri>(&t)) return "<" + i->value + ">";
  if (const BNode* b = std::get_if<BNode>(&t)) return "_:" + b->id;
  const Literal& l = std::get<Literal>(t);
  std::string out = "\"" + escape_ntriples(l.lexical) + "\"";
  if (l.kind == LiteralKind::Lang) out += "@" + l.qualifier;
  if (l.kind == LiteralKind::Typed) out += "^^<" + l.qualifier + ">";
  return out;
}

std::string triple_debug(const Triple& t) {
  return term_debug(t.subject) + " " + term_debug(Term(t.predicate)) + " " + term_debug(t.object) +
         " .";
}

// ---------------------------------------------------------------------------
// IRI resolution (RFC 3986 subset: scheme detection, merge, dot-segments)

namespace {

bool has_scheme(std::string_view ref) {
  if (ref.empty() || !std::isalpha(static_cast<unsigned char>(ref[0]))) return false;
  for (size_t i = 1; i < ref.size(); ++i) {
    char c = ref[i];
    if (c == ':') return true;
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.')
      return false;
  }
  return false;
}

std::string remove_dot_segments(std::string in) {
  std::string out;
  while (!in.empty()) {
    if (in.rfind("../", 0) == 0) {
      in.erase(0, 3);
    } else if (in.rfind("./", 0) == 0) {
      in.erase(0, 2);
    } else if (in.rfind("/./", 0) == 0) {
      in.erase(0, 2);
    } else if (in == "/.") {
      in = "/";
    } else if (in.rfind("/../", 0) == 0 || in == "/..") {
      in = in == "/.." ? "/" : in.substr(3);
      size_t slash = out.find_last_of('/');
      out.erase(slash == std::string::npos ? 0 : slash);
    } else if (in == "." || in == "..") {
      in.clear();
    } else {
      size_t next = in.find('/', 1);
      out += in.substr(0, next);
      in.erase(0, next == std::string::npos ? in.size() : next);
    }
  }
  return out;
}

struct IriParts {
  std::string scheme, authority, path, query, fragment;
  bool has_authority = false, has_query = false, has_fragment = false;
};

IriParts split_iri_parts(std::string_view s) {
  IriParts p;
  size_t pos = s.find('#');
  if (pos != std::string_view::npos) {
    p.has_fragment = true;
    p.fragment = std::string(s.substr(pos + 1));
    s = s.substr(0, pos);
  }
  pos = s.find('?');
  if (pos != std::string_view::npos) {
    p.has_query = true;
    p.query = std::string(s.substr(pos + 1));
    s = s.substr(0, pos);
  }
  if (has_scheme(s)) {
    pos = s.find(':');
    p.scheme = std::string(s.substr(0, pos));
    s = s.substr(pos + 1);
  }
  if (s.rfind("//", 0) == 0) {
    pos = s.find('/', 2);
    p.has_authority = true;
    if (pos == std::string_view::npos) {
      p.authority = std::string(s.substr(2));
      s = std::string_view();
    } else {
      p.authority = std::string(s.substr(2, pos - 2));
      s = s.substr(pos);
    }
  }
  p.path = std::string(s);
  return p;
}

std::string join_iri(const IriParts& p) {
  std::string out;
  if (!p.scheme.empty()) out += p.scheme + ":";
  if (p.has_authority) out += "//" + p.authority;
  out += p.path;
  if (p.has_query) out += "?" + p.query;
  if (p.has_fragment) out += "#" + p.fragment;
  return out;
}

std::string resolve_iri(const std::string& ref, const std::string& base) {
  if (has_scheme(ref)) return ref;
  if (base.empty())
    throw RdfError("relative IRI reference '" + ref + "' but no base IRI was supplied");
  IriParts r = split_iri_parts(ref);
  IriParts b = split_iri_parts(base);
  IriParts t;
  if (r.has_authority) {
    t = r;
    t.scheme = b.scheme;
  } else {
    t.scheme = b.scheme;
    t.has_authority = b.has_authority;
    t.authority = b.authority;
    if (r.path.empty()) {
      t.path = b.path;
      t.has_query = r.has_query || b.has_query;
      t.query = r.has_query ? r.query : b.query;
    } else if (r.path[0] == '/') {
      t.path = remove_dot_segments(r.path);
      t.has_query = r.has_query;
      t.query = r.query;
    } else {
      size_t slash = b.path.find_last_of('/');
      std::string merged =
          (b.has_authority && b.path.empty())
              ? "/" + r.path
              : (slash == std::string::npos ? r.path : b.path.substr(0, slash + 1) + r.path);
      t.path = remove_dot_segments(merged);
      t.has_query = r.has_query;
      t.query = r.query;
    }
  }
  t.has_fragment = r.has_fragment;
  t.fragment = r.fragment;
  return join_iri(t);
}

// ---------------------------------------------------------------------------
// Reading

using markup::AttrList;
using markup::Element;
using markup::MarkupNode;

const std::string kRdfNs(ns::rdf);

bool is_ws(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

struct NsFrame {
  std::vector<std::pair<std::string, std::string>> prefixes;
  std::optional<std::string> default_ns;
  std::optional<std::string> lang;
};

class NsEnv {
public:
  void push(const AttrList& attrs) {
    NsFrame f;
    for (const auto& [name, value] : attrs) {
      if (name == "xmlns") {
        f.default_ns = value.to_text();
      } else if (name.rfind("xmlns:", 0) == 0) {
        f.prefixes.emplace_back(name.substr(6), value.to_text());
      } else if (name == "xml:lang") {
        f.lang = value.to_text();
      } else if (name == "xml:base") {
        throw UnsupportedConstruct("xml:base is not supported");
      }
    }
    frames_.push_back(std::move(f));
  }

  void pop() { frames_.pop_back(); }

  std::string lookup_prefix(const std::string& prefix) const {
    if (prefix == "xml") return std::string(ns::xml);
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it)
      for (const auto& [p, iri] : it->prefixes)
        if (p == prefix) return iri;
    throw RdfError("undeclared namespace prefix '" + prefix + "'");
  }

  std::string default_ns() const {
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it)
      if (it->default_ns) return *it->default_ns;
    return {};
  }

  // Expands an element or attribute QName to a full IRI.  Unprefixed names
  // resolve against the default namespace (the paper's examples rely on
  // unprefixed property attributes).
  std::string expand(const std::string& qname, const char* what) const {
    size_t colon = qname.find(':');
    if (colon == std::string::npos) {
      std::string d = default_ns();
      if (d.empty())
        throw RdfError("cannot resolve unprefixed " + std::string(what) + " '" + qname +
                       "': no default namespace");
      return d + qname;
    }
    return lookup_prefix(qname.substr(0, colon)) + qname.substr(colon + 1);
  }

  std::string lang() const {
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it)
      if (it->lang) return *it->lang;
    return {};
  }

private:
  std::vector<NsFrame> frames_;
};

bool is_xmlns_or_xml(const std::string& name) {
  return name == "xmlns" || name.rfind("xmlns:", 0) == 0 || name.rfind("xml:", 0) == 0;
}

class Converter {
public:
  Converter(std::string source_name, ReadOptions opts, NsEnv& env,
            std::function<void(Triple)> sink)
      : source_(std::move(source_name)), opts_(std::move(opts)), env_(env),
        sink_(std::move(sink)) {}

  void convert_description(const MarkupNode& node) {
    const Element& e = node.element();
    env_.push(e.attributes);
    Term subject = determine_subject(e);
    emit_node_body(e, subject);
    env_.pop();
  }

private:
  void emit(Term s, std::string p, Term o) {
    sink_(Triple{std::move(s), Iri{std::move(p)}, std::move(o)});
  }

  std::string fresh_bnode() {
    return "__" + source_ + "#" + std::to_string(++bnode_counter_);
  }

  Term bnode_for_label(const std::string& label) {
    auto [it, inserted] = labelled_.try_emplace(label);
    if (inserted) it->second = fresh_bnode();
    return BNode{it->second};
  }

  std::string resolve(const std::string& ref) const { return resolve_iri(ref, opts_.base); }

  // The element's own namespace frame must already be pushed.
  Term determine_subject(const Element& e) {
    std::optional<std::string> about, node_id;
    for (const auto& [name, value] : e.attributes) {
      if (is_xmlns_or_xml(name)) continue;
      std::string full = env_.expand(name, "attribute");
      if (full == kRdfNs + "about")
        about = value.to_text();
      else if (full == kRdfNs + "nodeID")
        node_id = value.to_text();
      else
        check_supported_attr(full);
    }
    if (about && node_id)
      throw RdfError("both rdf:about and rdf:nodeID on one node element");
    if (about) return Iri{resolve(*about)};
    if (node_id) return bnode_for_label(*node_id);
    return BNode{fresh_bnode()};
  }

  void check_supported_attr(const std::string& full) {
    static const char* rejected[] = {"ID",        "parseType", "aboutEach",
                                     "aboutEachPrefix", "bagID",     "li"};
    for (const char* r : rejected)
      if (full == kRdfNs + r)
        throw UnsupportedConstruct("rdf:" + std::string(r) + " is not supported");
  }

  void emit_node_body(const Element& e, const Term& subject) {
    std::string ename = env_.expand(e.tag, "element");
    check_node_element_name(ename);
    if (ename != kRdfNs + "Description") emit(subject, ns::rdf_type(), Iri{ename});
    // property attributes, in document order
    for (const auto& [name, value] : e.attributes) {
      if (is_xmlns_or_xml(name)) continue;
      std::string full = env_.expand(name, "attribute");
      if (full == kRdfNs + "about" || full == kRdfNs + "nodeID") continue;
      check_supported_attr(full);
      if (full == kRdfNs + "type") {
        emit(subject, ns::rdf_type(), Iri{resolve(value.to_text())});
        continue;
      }
      if (full.rfind(kRdfNs, 0) == 0)
        throw UnsupportedConstruct("unsupported rdf attribute '" + full + "'");
      emit(subject, full, make_literal(value.to_text(), {}));
    }
    // property elements
    for (const MarkupNode& child : e.children) {
      if (child.is_text()) {
        if (!is_ws(child.text().content))
          throw RdfError("unexpected text content inside a node element");
        continue;
      }
      if (child.is_pi()) continue;
      property_element(child.element(), subject);
    }
  }

  void check_node_element_name(const std::string& full) {
    if (full == kRdfNs + "RDF" || full == kRdfNs + "li")
      throw UnsupportedConstruct("'" + full + "' cannot be used as a node element");
  }

  Term make_literal(std::string text, const std::string& datatype) {
    if (!datatype.empty()) return Literal::typed(datatype, std::move(text));
    std::string lang = env_.lang();
    if (!lang.empty()) return Literal::lang(lang, std::move(text));
    return Literal::plain(std::move(text));
  }

  void property_element(const Element& p, const Term& subject) {
    env_.push(p.attributes);
    std::string pname = env_.expand(p.tag, "element");
    if (pname == kRdfNs + "li")
      throw UnsupportedConstruct("rdf:li is not supported");
    if (pname == kRdfNs + "Description" || pname == kRdfNs + "RDF")
      throw RdfError("'" + pname + "' cannot be used as a property element");

    std::optional<std::string> resource, node_id, datatype;
    for (const auto& [name, value] : p.attributes) {
      if (is_xmlns_or_xml(name)) continue;
      std::string full = env_.expand(name, "attribute");
      check_supported_attr(full);
      if (full == kRdfNs + "resource")
        resource = value.to_text();
      else if (full == kRdfNs + "nodeID")
        node_id = value.to_text();
      else if (full == kRdfNs + "datatype")
        datatype = value.to_text();
      else
        throw UnsupportedConstruct("attribute '" + name + "' on property element '" + p.tag +
                                   "' is not supported");
    }
    if (resource && node_id) throw RdfError("both rdf:resource and rdf:nodeID on '" + p.tag + "'");

    std::vector<const Element*> nested;
    std::string text;
    bool has_text = false;
    for (const MarkupNode& c : p.children) {
      if (c.is_text()) {
        text += c.text().content;
        has_text = true;
      } else if (c.is_element()) {
        nested.push_back(&c.element());
      }
    }

    if (resource || node_id) {
      if (!nested.empty() || (has_text && !is_ws(text)))
        throw RdfError("property element '" + p.tag + "' with rdf:resource/rdf:nodeID has content");
      Term object = resource ? Term(Iri{resolve(*resource)}) : bnode_for_label(*node_id);
      emit(subject, pname, std::move(object));
    } else if (nested.size() == 1 && (!has_text || is_ws(text))) {
      if (datatype) throw RdfError("rdf:datatype on a property element with a node element value");
      const Element& inner = *nested[0];
      env_.push(inner.attributes);
      Term object = determine_subject(inner);
      emit(subject, pname, object);
      emit_node_body(inner, object);
      env_.pop();
    } else if (nested.empty()) {
      emit(subject, pname, make_literal(std::move(text), datatype.value_or("")));
    } else if (nested.size() > 1) {
      throw RdfError("property element '" + p.tag + "' contains multiple node elements");
    } else {
      throw RdfError("property element '" + p.tag + "' mixes text and element content");
    }
    env_.pop();
  }

  std::string source_;
  ReadOptions opts_;
  NsEnv& env_;
  std::function<void(Triple)> sink_;
  int bnode_counter_ = 0;
  std::map<std::string, std::string> labelled_;
};

template <typename Source>
void process_rdf_impl(Source&& document, const std::string& source_name,
                      const DescriptionAction& action, const ReadOptions& opts) {
  NsEnv env;
  int depth = 0;
  bool root_seen = false;

  std::vector<Triple> batch;
  Converter conv(source_name, opts, env, [&](Triple t) { batch.push_back(std::move(t)); });

  markup::EventHandlers h;
  h.on_begin = [&](const std::string& tag, const AttrList& attrs, int) -> markup::BeginAction {
    if (depth == 0) {
      if (root_seen) throw RdfError("multiple top-level elements");
      env.push(attrs);
      std::string full = env.expand(tag, "element");
      if (full != kRdfNs + "RDF")
        throw UnsupportedConstruct("expected rdf:RDF root element, found '" + tag + "'");
      root_seen = true;
      depth = 1;
      return markup::BeginAction::Events;
    }
    return markup::BeginAction::Capture;
  };
  h.on_end = [&](const std::string&) {
    if (depth == 1) {
      env.pop();
      depth = 0;
    }
  };
  h.on_text = [&](const std::string& t) {
    if (!is_ws(t)) throw RdfError("unexpected text outside node elements");
  };
  h.on_subtree = [&](MarkupNode node, int line) {
    batch.clear();
    conv.convert_description(node);
    action(std::move(batch), Location{source_name, line});
    batch.clear();
  };

  markup::ParseOptions popts;
  popts.mode = markup::ParseMode::Xml;
  popts.source_name = source_name;
  markup::parse_events(std::forward<Source>(document), popts, h);
  if (!root_seen) throw RdfError("missing rdf:RDF root element");
}

} // namespace

void process_rdf(std::string_view document, const std::string& source_name,
                 const DescriptionAction& action, const ReadOptions& opts) {
  process_rdf_impl(document, source_name, action, opts);
}

void process_rdf(std::istream& document, const std::string& source_name,
                 const DescriptionAction& action, const ReadOptions& opts) {
  process_rdf_impl(document, source_name, action, opts);
}

std::vector<Triple> load_rdf(std::string_view document, const std::string& source_name,
                             const ReadOptions& opts) {
  std::vector<Triple> all;
  process_rdf(
      document, source_name,
      [&](std::vector<Triple> batch, const Location&) {
        for (Triple& t : batch) all.push_back(std::move(t));
      },
      opts);
  return all;
}

std::vector<Triple> load_rdf(std::istream& document, const std::string& source_name,
                             const ReadOptions& opts) {
  std::vector<Triple> all;
  process_rdf(
      document, source_name,
      [&](std::vector<Triple> batch, const Location&) {
        for (Triple& t : batch) all.push_back(std::move(t));
      },
      opts);
  return all;
}

// ---------------------------------------------------------------------------
// Writing

namespace {

bool ncname_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
         static_cast<unsigned char>(c) >= 0x80;
}

bool ncname_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
         static_cast<unsigned char>(c) >= 0x80;
}

// Splits an IRI into a namespace part and a valid NCName local part.
std::pair<std::string, std::string> split_for_qname(const std::string& iri) {
  if (iri.empty()) throw RdfError("empty predicate IRI");
  size_t split = iri.size();
  while (split > 0 && ncname_char(iri[split - 1])) --split;
  while (split < iri.size() && !ncname_start(iri[split])) ++split;
  if (split == 0 || split == iri.size())
    throw RdfError("cannot derive an XML name from IRI '" + iri + "'");
  return {iri.substr(0, split), iri.substr(split)};
}

} // namespace

void write_rdf_xml(std::ostream& out, std::span<const Triple> triples) {
  using markup::quote_attribute;
  using markup::quote_text;

  std::vector<std::pair<std::string, std::string>> nss;  // prefix -> namespace IRI
  auto prefix_for = [&](const std::string& ns_iri) -> std::string {
    if (ns_iri == kRdfNs) return "rdf";
    for (const auto& [p, iri] : nss)
      if (iri == ns_iri) return p;
    std::string p = "ns" + std::to_string(nss.size() + 1);
    nss.emplace_back(p, ns_iri);
    return p;
  };

  std::map<std::string, std::string> bnode_label;
  auto label_for = [&](const std::string& id) -> std::string {
    auto [it, inserted] = bnode_label.try_emplace(id);
    if (inserted) it->second = "b" + std::to_string(bnode_label.size());
    return it->second;
  };

  struct Group {
    Term subject;
    std::vector<const Triple*> props;
  };
  std::vector<Group> groups;
  for (const Triple& t : triples) {
    if (is_literal(t.subject)) throw RdfError("literal subject in triple: " + triple_debug(t));
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.subject == t.subject; });
    if (it == groups.end()) {
      groups.push_back(Group{t.subject, {}});
      it = std::prev(groups.end());
    }
    it->props.push_back(&t);
    prefix_for(split_for_qname(t.predicate.value).first);
  }

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<rdf:RDF xmlns:rdf=\"" << kRdfNs << '"';
  for (const auto& [p, iri] : nss)
    out << "\n         xmlns:" << p << "=\"" << quote_attribute(iri) << '"';
  if (groups.empty()) {
    out << "/>\n";
    return;
  }
  out << ">\n";

  for (const Group& g : groups) {
    out << "  <rdf:Description ";
    if (const Iri* iri = std::get_if<Iri>(&g.subject))
      out << "rdf:about=\"" << quote_attribute(iri->value) << '"';
    else
      out << "rdf:nodeID=\"" << label_for(std::get<BNode>(g.subject).id) << '"';
    out << ">\n";
    for (const Triple* t : g.props) {
      auto [ns_iri, local] = split_for_qname(t->predicate.value);
      std::string qname = prefix_for(ns_iri) + ":" + local;
      out << "    <" << qname;
      if (const Iri* o = std::get_if<Iri>(&t->object)) {
        out << " rdf:resource=\"" << quote_attribute(o->value) << "\"/>\n";
      } else if (const BNode* b = std::get_if<BNode>(&t->object)) {
        out << " rdf:nodeID=\"" << label_for(b->id) << "\"/>\n";
      } else {
        const Literal& l = std::get<Literal>(t->object);
        if (l.kind == LiteralKind::Lang)
          out << " xml:lang=\"" << quote_attribute(l.qualifier) << '"';
        if (l.kind == LiteralKind::Typed)
          out << " rdf:datatype=\"" << quote_attribute(l.qualifier) << '"';
        out << '>' << quote_text(l.lexical) << "</" << qname << ">\n";
      }
    }
    out << "  </rdf:Description>\n";
  }
  out << "</rdf:RDF>\n";
}

std::string write_rdf_xml(std::span<const Triple> triples) {
  std::ostringstream out;
  write_rdf_xml(out, triples);
  return out.str();
}

} // namespace triplekit::rdf
