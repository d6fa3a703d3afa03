#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "triplekit/error.hpp"

namespace triplekit::markup {

// Scalar attribute value: text, or a number when numeric conversion is on.
// Numbers keep their exact value; conversion only happens when re-serializing
// the number reproduces the source text (lossless-or-skip).
struct AttrScalar {
  enum class Kind { Text, Int, Float };
  Kind kind = Kind::Text;
  std::string text;  // valid for Text
  std::int64_t ival = 0;
  double fval = 0.0;

  static AttrScalar make_text(std::string t);
  static AttrScalar make_int(std::int64_t v);
  static AttrScalar make_float(double v);

  // Canonical textual form (decimal for numbers).
  std::string to_text() const;
  bool operator==(const AttrScalar& o) const;
};

// Attribute value: a single scalar, or a whitespace-split list for declared
// multi-value attributes.
struct AttrValue {
  std::vector<AttrScalar> items;
  bool multi = false;

  static AttrValue atomic(std::string text);
  static AttrValue scalar(AttrScalar s);

  bool is_multi() const { return multi; }
  const AttrScalar& single() const { return items.front(); }
  std::string to_text() const;  // space-joined for multi values
  bool operator==(const AttrValue& o) const;
};

using AttrList = std::vector<std::pair<std::string, AttrValue>>;

struct MarkupNode;
using NodeList = std::vector<MarkupNode>;

struct Element {
  std::string tag;
  AttrList attributes;
  NodeList children;
};

struct Text {
  std::string content;
};

struct ProcInstr {
  std::string content;
};

// Canonical document-tree node.  Equality is structural; attribute order is
// not significant.
struct MarkupNode {
  std::variant<Element, Text, ProcInstr> value;

  MarkupNode() : value(Text{}) {}
  MarkupNode(Element e) : value(std::move(e)) {}
  MarkupNode(Text t) : value(std::move(t)) {}
  MarkupNode(ProcInstr p) : value(std::move(p)) {}

  bool is_element() const { return std::holds_alternative<Element>(value); }
  bool is_text() const { return std::holds_alternative<Text>(value); }
  bool is_pi() const { return std::holds_alternative<ProcInstr>(value); }
  Element& element() { return std::get<Element>(value); }
  const Element& element() const { return std::get<Element>(value); }
  const Text& text() const { return std::get<Text>(value); }
  const ProcInstr& pi() const { return std::get<ProcInstr>(value); }

  bool operator==(const MarkupNode& o) const;
};

// Convenience builders, mostly for tests and generator code.
MarkupNode elem(std::string tag, AttrList attrs = {}, NodeList children = {});
MarkupNode text(std::string content);

// Attribute lookup; returns nullptr when absent.
const AttrValue* find_attribute(const Element& e, std::string_view name);

enum class ParseMode { Xml, HtmlSubset };

struct ParseOptions {
  ParseMode mode = ParseMode::Xml;
  bool convert_numbers = false;
  std::string source_name = "input";
  // Attribute names whose values are whitespace-split into lists.
  std::set<std::string> multi_value_attributes;
};

class ParseError : public Error {
public:
  ParseError(const std::string& message, int line)
      : Error(message + " at line " + std::to_string(line)), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

// Streaming event interface.  on_begin may return Capture to receive the
// element's complete subtree through on_subtree; nested events (and the
// element's end event) are suppressed in that case.
enum class BeginAction { Events, Capture };

struct EventHandlers {
  std::function<BeginAction(const std::string& tag, const AttrList& attrs, int line)> on_begin;
  std::function<void(const std::string& tag)> on_end;
  std::function<void(const std::string& content)> on_text;
  std::function<void(const std::string& content)> on_pi;
  std::function<void(MarkupNode node, int line)> on_subtree;
};

NodeList parse_tree(std::string_view source, const ParseOptions& opts = {});
NodeList parse_tree(std::istream& source, const ParseOptions& opts = {});
void parse_events(std::string_view source, const ParseOptions& opts, const EventHandlers& handlers);
void parse_events(std::istream& source, const ParseOptions& opts, const EventHandlers& handlers);

enum class Layout { Compact, Indented };

std::string serialize(std::span<const MarkupNode> nodes, Layout layout = Layout::Compact);
std::string serialize(const MarkupNode& node, Layout layout = Layout::Compact);
void serialize(std::ostream& out, std::span<const MarkupNode> nodes, Layout layout = Layout::Compact);

// Quoting primitives.  The result is safe to embed in element content
// (quote_text) or inside a double-quoted attribute value (quote_attribute).
std::string quote_text(std::string_view s);
std::string quote_attribute(std::string_view s);

} // namespace triplekit::markup
