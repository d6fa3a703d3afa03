#include "triplekit/htmlgen.hpp"

#include <sstream>

namespace triplekit::htmlgen {

namespace {

bool is_void_element(const std::string& tag) {
  return tag == "br" || tag == "img" || tag == "hr" || tag == "input";
}

void check_name(const std::string& name, const std::string& path) {
  if (name.empty()) throw Error("invalid tag or attribute name at " + path);
  for (char c : name) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '<' || c == '>' || c == '&' ||
        c == '"' || c == '\'' || c == '=' || c == '/')
      throw Error("invalid tag or attribute name '" + name + "' at " + path);
  }
}

class Renderer {
public:
  explicit Renderer(TokenStream& out) : out_(out) {}

  void emit(const HtmlSpec& spec) {
    std::visit([&](const auto& v) { emit_node(v); }, spec.value);
  }

private:
  void emit_node(const TextLeaf& t) {
    out_.push_back({HtmlToken::Kind::Text, {}, {}, markup::quote_text(t.text)});
  }

  void emit_node(const Tag& t) {
    path_.push_back(t.name);
    check_name(t.name, path());
    if (is_void_element(t.name) && !t.body.empty())
      throw Error("void element <" + t.name + "> takes no content (at " + path() + ")");
    HtmlToken open{HtmlToken::Kind::Open, t.name, {}, {}};
    for (const auto& [name, val] : t.attributes) {
      check_name(name, path());
      open.attributes.emplace_back(name, val.to_text());
    }
    out_.push_back(std::move(open));
    for (const HtmlSpec& child : t.body) emit(child);
    out_.push_back({HtmlToken::Kind::Close, t.name, {}, {}});
    path_.pop_back();
  }

  void emit_node(const RuleCall& r) {
    path_.push_back("\\" + r.name);
    SpecList expansion;
    try {
      expansion = r.generate();
    } catch (const std::exception& e) {
      throw Error("generator failed at " + path() + ": " + e.what());
    }
    path_.pop_back();
    for (const HtmlSpec& s : expansion) emit(s);
  }

  std::string path() const {
    std::string p;
    for (const std::string& s : path_) {
      if (!p.empty()) p += " > ";
      p += s;
    }
    return p;
  }

  TokenStream& out_;
  std::vector<std::string> path_;
};

} // namespace

HtmlSpec text(std::string content) { return HtmlSpec(TextLeaf{std::move(content)}); }

HtmlSpec tag(std::string name, HtmlAttrs attributes, SpecList body) {
  return HtmlSpec(Tag{std::move(name), std::move(attributes), std::move(body)});
}

HtmlSpec tag(std::string name, SpecList body) {
  return HtmlSpec(Tag{std::move(name), {}, std::move(body)});
}

HtmlSpec rule(std::string name, Generator generate) {
  return HtmlSpec(RuleCall{std::move(name), std::move(generate)});
}

TokenStream render(const HtmlSpec& spec) {
  TokenStream out;
  Renderer(out).emit(spec);
  return out;
}

TokenStream render(const SpecList& specs) {
  TokenStream out;
  Renderer r(out);
  for (const HtmlSpec& s : specs) r.emit(s);
  return out;
}

std::string tokens_to_text(const TokenStream& tokens) {
  std::ostringstream out;
  std::vector<const HtmlToken*> stack;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const HtmlToken& t = tokens[i];
    switch (t.kind) {
      case HtmlToken::Kind::Open: {
        bool empty = i + 1 < tokens.size() && tokens[i + 1].kind == HtmlToken::Kind::Close &&
                     tokens[i + 1].tag == t.tag;
        out << '<' << t.tag;
        for (const auto& [name, val] : t.attributes)
          out << ' ' << name << "=\"" << markup::quote_attribute(val) << '"';
        if (empty) {
          out << "/>";
          ++i;  // consume the matching close
        } else {
          out << '>';
          stack.push_back(&t);
        }
        break;
      }
      case HtmlToken::Kind::Close:
        if (stack.empty() || stack.back()->tag != t.tag)
          throw Error("unbalanced token stream at close(" + t.tag + ")");
        stack.pop_back();
        out << "</" << t.tag << '>';
        break;
      case HtmlToken::Kind::Text:
        out << t.text;
        break;
    }
  }
  if (!stack.empty())
    throw Error("unbalanced token stream: open(" + stack.back()->tag + ") never closed");
  return out.str();
}

std::string to_text(const HtmlSpec& spec) { return tokens_to_text(render(spec)); }

} // namespace triplekit::htmlgen
