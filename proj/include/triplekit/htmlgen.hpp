#pragma once

#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "triplekit/markup.hpp"

namespace triplekit::htmlgen {

struct HtmlSpec;
using SpecList = std::vector<HtmlSpec>;
using Generator = std::function<SpecList()>;
using HtmlAttrs = std::vector<std::pair<std::string, markup::AttrScalar>>;

struct TextLeaf {
  std::string text;
};

struct Tag {
  std::string name;
  HtmlAttrs attributes;
  SpecList body;
};

// Embedded generator rule; expanded in place at render time.  The name is
// used in error messages only.
struct RuleCall {
  std::string name;
  Generator generate;
};

struct HtmlSpec {
  std::variant<TextLeaf, Tag, RuleCall> value;

  HtmlSpec(TextLeaf t) : value(std::move(t)) {}
  HtmlSpec(Tag t) : value(std::move(t)) {}
  HtmlSpec(RuleCall r) : value(std::move(r)) {}
};

HtmlSpec text(std::string content);
HtmlSpec tag(std::string name, HtmlAttrs attributes = {}, SpecList body = {});
HtmlSpec tag(std::string name, SpecList body);
HtmlSpec rule(std::string name, Generator generate);

struct HtmlToken {
  enum class Kind { Open, Close, Text };
  Kind kind;
  std::string tag;                                            // Open/Close
  std::vector<std::pair<std::string, std::string>> attributes;  // Open
  std::string text;                                           // Text, already quoted
};

using TokenStream = std::vector<HtmlToken>;

// Expands the spec into a balanced token stream.  Rule expansion is eager;
// text is quoted exactly once, here.
TokenStream render(const HtmlSpec& spec);
TokenStream render(const SpecList& specs);

// Serializes a balanced token stream to markup text.  Adjacent open/close
// pairs collapse to the self-closing form.
std::string tokens_to_text(const TokenStream& tokens);

// Single-call convenience used by the service layer.
std::string to_text(const HtmlSpec& spec);

} // namespace triplekit::htmlgen
