#include "triplekit/markup.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace triplekit::markup {

namespace {

std::string format_double(double v) {
  std::array<char, 40> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

bool is_ascii_space(int c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

} // namespace

AttrScalar AttrScalar::make_text(std::string t) {
  AttrScalar s;
  s.kind = Kind::Text;
  s.text = std::move(t);
  return s;
}

AttrScalar AttrScalar::make_int(std::int64_t v) {
  AttrScalar s;
  s.kind = Kind::Int;
  s.ival = v;
  return s;
}

AttrScalar AttrScalar::make_float(double v) {
  AttrScalar s;
  s.kind = Kind::Float;
  s.fval = v;
  return s;
}

std::string AttrScalar::to_text() const {
  switch (kind) {
    case Kind::Text: return text;
    case Kind::Int: return std::to_string(ival);
    case Kind::Float: return format_double(fval);
  }
  return {};
}

bool AttrScalar::operator==(const AttrScalar& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case Kind::Text: return text == o.text;
    case Kind::Int: return ival == o.ival;
    case Kind::Float: return fval == o.fval;
  }
  return false;
}

AttrValue AttrValue::atomic(std::string text) {
  AttrValue v;
  v.items.push_back(AttrScalar::make_text(std::move(text)));
  return v;
}

AttrValue AttrValue::scalar(AttrScalar s) {
  AttrValue v;
  v.items.push_back(std::move(s));
  return v;
}

std::string AttrValue::to_text() const {
  if (!multi && items.size() == 1) return items.front().to_text();
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ' ';
    out += items[i].to_text();
  }
  return out;
}

bool AttrValue::operator==(const AttrValue& o) const {
  return multi == o.multi && items == o.items;
}

bool MarkupNode::operator==(const MarkupNode& o) const {
  if (value.index() != o.value.index()) return false;
  if (is_text()) return text().content == o.text().content;
  if (is_pi()) return pi().content == o.pi().content;
  const Element& a = element();
  const Element& b = o.element();
  if (a.tag != b.tag) return false;
  if (a.attributes.size() != b.attributes.size()) return false;
  // Attribute order is not significant.
  for (const auto& [name, val] : a.attributes) {
    const AttrValue* bv = find_attribute(b, name);
    if (!bv || !(*bv == val)) return false;
  }
  return a.children == b.children;
}

MarkupNode elem(std::string tag, AttrList attrs, NodeList children) {
  return MarkupNode(Element{std::move(tag), std::move(attrs), std::move(children)});
}

MarkupNode text(std::string content) { return MarkupNode(Text{std::move(content)}); }

const AttrValue* find_attribute(const Element& e, std::string_view name) {
  for (const auto& [n, v] : e.attributes)
    if (n == name) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Input {
public:
  explicit Input(std::string_view s) : sv_(s) {}
  explicit Input(std::istream& in) : in_(&in) {}

  int peek() {
    if (peeked_ == -2) peeked_ = fetch();
    return peeked_;
  }

  int get() {
    int c = peek();
    peeked_ = -2;
    if (c == '\n') ++line_;
    return c;
  }

  int line() const { return line_; }

private:
  int fetch() {
    if (in_) {
      int c = in_->rdbuf()->sbumpc();
      return c == std::char_traits<char>::eof() ? -1 : (c & 0xFF);
    }
    if (pos_ >= sv_.size()) return -1;
    return static_cast<unsigned char>(sv_[pos_++]);
  }

  std::string_view sv_;
  size_t pos_ = 0;
  std::istream* in_ = nullptr;
  int peeked_ = -2;
  int line_ = 1;
};

bool is_name_start(int c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' || c >= 0x80;
}

bool is_name_char(int c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// HTML-subset canonicalization tables.  Fixed and small; no DTD engine.
bool html_auto_closable(std::string_view tag) {
  return tag == "p" || tag == "li" || tag == "tr" || tag == "td" || tag == "th" || tag == "tbody";
}

bool html_start_closes(std::string_view open, std::string_view start) {
  if (open == "p")
    return start == "p" || start == "li" || start == "ul" || start == "ol" || start == "div" ||
           start == "table" || start == "tr" || start == "td" || start == "th" ||
           start == "blockquote" || start == "pre" ||
           (start.size() == 2 && start[0] == 'h' && start[1] >= '1' && start[1] <= '6');
  if (open == "li") return start == "li";
  if (open == "tr") return start == "tr";
  if (open == "td" || open == "th") return start == "td" || start == "th" || start == "tr";
  return false;
}

bool html_void_element(std::string_view tag) {
  return tag == "br" || tag == "hr" || tag == "img" || tag == "input" || tag == "meta" ||
         tag == "link" || tag == "area" || tag == "col" || tag == "base" || tag == "param";
}

// Lossless-or-skip numeric conversion: convert only when the canonical
// rendering of the number reproduces the source text exactly.
std::optional<AttrScalar> try_number(const std::string& t) {
  if (t.empty()) return std::nullopt;
  size_t i = (t[0] == '+' || t[0] == '-') ? 1 : 0;
  if (i >= t.size()) return std::nullopt;
  bool digits = false, dot = false, exp = false;
  for (size_t j = i; j < t.size(); ++j) {
    char c = t[j];
    if (c >= '0' && c <= '9') {
      digits = true;
    } else if (c == '.' && !dot && !exp) {
      dot = true;
    } else if ((c == 'e' || c == 'E') && digits && !exp) {
      exp = true;
      if (j + 1 < t.size() && (t[j + 1] == '+' || t[j + 1] == '-')) ++j;
    } else {
      return std::nullopt;
    }
  }
  if (!digits) return std::nullopt;
  if (!dot && !exp) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
    if (std::to_string(v) != t) return std::nullopt;
    return AttrScalar::make_int(v);
  }
  double v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
  if (format_double(v) != t) return std::nullopt;
  return AttrScalar::make_float(v);
}

class TreeBuilder {
public:
  void begin(const std::string& tag, AttrList attrs) {
    stack_.push_back(Element{tag, std::move(attrs), {}});
  }

  void end() {
    Element e = std::move(stack_.back());
    stack_.pop_back();
    append(MarkupNode(std::move(e)));
  }

  void add_text(std::string t) { append(MarkupNode(Text{std::move(t)})); }
  void add_pi(std::string p) { append(MarkupNode(ProcInstr{std::move(p)})); }

  bool at_top() const { return stack_.empty(); }
  NodeList take() { return std::move(result_); }

private:
  void append(MarkupNode n) {
    if (stack_.empty())
      result_.push_back(std::move(n));
    else
      stack_.back().children.push_back(std::move(n));
  }

  std::vector<Element> stack_;
  NodeList result_;
};

// Routes canonical parser events to either a tree builder or user handlers,
// handling subtree capture for the mixed mode.
class Dispatcher {
public:
  Dispatcher(TreeBuilder* tree, const EventHandlers* handlers)
      : tree_(tree), handlers_(handlers) {}

  void begin(const std::string& tag, AttrList attrs, int line) {
    if (capture_) {
      capture_->begin(tag, std::move(attrs));
      ++capture_depth_;
      return;
    }
    if (tree_) {
      tree_->begin(tag, std::move(attrs));
      return;
    }
    BeginAction act = BeginAction::Events;
    if (handlers_->on_begin) act = handlers_->on_begin(tag, attrs, line);
    if (act == BeginAction::Capture) {
      capture_.emplace();
      capture_->begin(tag, std::move(attrs));
      capture_depth_ = 1;
      capture_line_ = line;
    }
  }

  void end(const std::string& tag) {
    if (capture_) {
      capture_->end();
      if (--capture_depth_ == 0) {
        NodeList nodes = capture_->take();
        capture_.reset();
        if (handlers_->on_subtree)
          handlers_->on_subtree(std::move(nodes.front()), capture_line_);
      }
      return;
    }
    if (tree_)
      tree_->end();
    else if (handlers_->on_end)
      handlers_->on_end(tag);
  }

  void text(std::string t) {
    if (capture_) {
      capture_->add_text(std::move(t));
      return;
    }
    if (tree_)
      tree_->add_text(std::move(t));
    else if (handlers_->on_text)
      handlers_->on_text(t);
  }

  void pi(std::string p) {
    if (capture_) {
      capture_->add_pi(std::move(p));
      return;
    }
    if (tree_)
      tree_->add_pi(std::move(p));
    else if (handlers_->on_pi)
      handlers_->on_pi(p);
  }

private:
  TreeBuilder* tree_;
  const EventHandlers* handlers_;
  std::optional<TreeBuilder> capture_;
  int capture_depth_ = 0;
  int capture_line_ = 0;
};

class Parser {
public:
  Parser(Input in, const ParseOptions& opts, Dispatcher& sink)
      : in_(in), opts_(opts), html_(opts.mode == ParseMode::HtmlSubset), sink_(sink) {}

  void run() {
    skip_bom();
    for (;;) {
      int c = in_.peek();
      if (c < 0) break;
      if (c == '<') {
        flush_text();
        in_.get();
        dispatch_markup();
      } else {
        consume_text_char();
      }
    }
    flush_text();
    at_eof();
  }

private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, in_.line()); }

  void skip_bom() {
    if (in_.peek() == 0xEF) {
      in_.get();
      if (in_.get() != 0xBB || in_.get() != 0xBF) fail("bad encoding: stray BOM byte");
    }
  }

  // --- text content ------------------------------------------------------

  void consume_text_char() {
    int c = in_.get();
    if (c == '&') {
      decode_entity(text_);
    } else if (c >= 0x80) {
      consume_utf8_tail(text_, c);
    } else {
      text_ += static_cast<char>(c);
    }
  }

  void consume_utf8_tail(std::string& out, int first) {
    int need;
    if ((first & 0xE0) == 0xC0)
      need = 1;
    else if ((first & 0xF0) == 0xE0)
      need = 2;
    else if ((first & 0xF8) == 0xF0)
      need = 3;
    else
      fail("bad encoding: invalid UTF-8 lead byte");
    out += static_cast<char>(first);
    for (int i = 0; i < need; ++i) {
      int c = in_.get();
      if (c < 0x80 || c > 0xBF) fail("bad encoding: truncated UTF-8 sequence");
      out += static_cast<char>(c);
    }
  }

  void decode_entity(std::string& out) {
    std::string name;
    int c = in_.peek();
    if (c == '#') {
      in_.get();
      std::uint32_t cp = 0;
      bool hex = false, any = false;
      if (in_.peek() == 'x' || in_.peek() == 'X') {
        hex = true;
        in_.get();
      }
      for (;;) {
        int d = in_.peek();
        int v;
        if (d >= '0' && d <= '9')
          v = d - '0';
        else if (hex && d >= 'a' && d <= 'f')
          v = d - 'a' + 10;
        else if (hex && d >= 'A' && d <= 'F')
          v = d - 'A' + 10;
        else
          break;
        in_.get();
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
        any = true;
        if (cp > 0x10FFFF) fail("bad entity: character reference out of range");
      }
      if (!any || in_.get() != ';') fail("bad entity: malformed character reference");
      if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF)) fail("bad entity: invalid code point");
      append_utf8(out, cp);
      return;
    }
    while (is_name_char(in_.peek())) name += static_cast<char>(in_.get());
    if (in_.get() != ';') fail("bad entity: expected ';'");
    if (name == "amp")
      out += '&';
    else if (name == "lt")
      out += '<';
    else if (name == "gt")
      out += '>';
    else if (name == "quot")
      out += '"';
    else if (name == "apos")
      out += '\'';
    else
      fail("bad entity: unknown entity '&" + name + ";'");
  }

  void flush_text() {
    if (text_.empty()) return;
    std::string t = std::move(text_);
    text_.clear();
    if (stack_.empty() && html_ &&
        std::all_of(t.begin(), t.end(), [](char c) { return is_ascii_space(c); }))
      return;  // ignore inter-element whitespace outside the root (lenient mode)
    sink_.text(std::move(t));
  }

  // --- markup ------------------------------------------------------------

  void dispatch_markup() {
    int c = in_.peek();
    if (c == '/') {
      in_.get();
      parse_end_tag();
    } else if (c == '?') {
      in_.get();
      parse_pi();
    } else if (c == '!') {
      in_.get();
      parse_declaration();
    } else {
      parse_start_tag();
    }
  }

  std::string parse_name() {
    int c = in_.peek();
    if (!is_name_start(c)) fail("expected a name");
    std::string name;
    for (;;) {
      c = in_.peek();
      if (c >= 0x80) {
        in_.get();
        consume_utf8_tail(name, c);
      } else if (is_name_char(c)) {
        name += static_cast<char>(in_.get());
      } else {
        break;
      }
    }
    if (html_)
      std::transform(name.begin(), name.end(), name.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return name;
  }

  void skip_ws() {
    while (is_ascii_space(in_.peek())) in_.get();
  }

  AttrValue build_attr_value(const std::string& name, std::string raw) {
    bool multi = html_ && opts_.multi_value_attributes.count(name) > 0;
    auto convert = [&](std::string piece) {
      if (opts_.convert_numbers) {
        if (auto n = try_number(piece)) return *n;
      }
      return AttrScalar::make_text(std::move(piece));
    };
    AttrValue v;
    if (multi) {
      v.multi = true;
      size_t i = 0;
      while (i < raw.size()) {
        while (i < raw.size() && is_ascii_space(raw[i])) ++i;
        size_t j = i;
        while (j < raw.size() && !is_ascii_space(raw[j])) ++j;
        if (j > i) v.items.push_back(convert(raw.substr(i, j - i)));
        i = j;
      }
    } else {
      v.items.push_back(convert(std::move(raw)));
    }
    return v;
  }

  std::string parse_attr_value_raw() {
    int q = in_.peek();
    std::string val;
    if (q == '"' || q == '\'') {
      in_.get();
      for (;;) {
        int c = in_.get();
        if (c < 0) fail("unexpected end of input in attribute value");
        if (c == q) break;
        if (c == '<') fail("'<' not allowed in attribute value");
        if (c == '&') {
          decode_entity(val);
        } else if (c >= 0x80) {
          consume_utf8_tail(val, c);
        } else if (c == '\n' || c == '\r' || c == '\t') {
          val += ' ';  // XML attribute-value normalization
        } else {
          val += static_cast<char>(c);
        }
      }
      return val;
    }
    if (!html_) fail("expected quoted attribute value");
    for (;;) {
      int c = in_.peek();
      if (c < 0 || is_ascii_space(c) || c == '>') break;
      if (c == '/') break;
      in_.get();
      if (c == '&')
        decode_entity(val);
      else if (c >= 0x80)
        consume_utf8_tail(val, c);
      else
        val += static_cast<char>(c);
    }
    if (val.empty()) fail("empty unquoted attribute value");
    return val;
  }

  void parse_start_tag() {
    int line = in_.line();
    std::string tag = parse_name();
    AttrList attrs;
    bool self_close = false;
    for (;;) {
      skip_ws();
      int c = in_.peek();
      if (c < 0) fail("unexpected end of input in start tag");
      if (c == '>') {
        in_.get();
        break;
      }
      if (c == '/') {
        in_.get();
        if (in_.get() != '>') fail("expected '>' after '/'");
        self_close = true;
        break;
      }
      std::string aname = parse_name();
      skip_ws();
      std::string raw;
      if (in_.peek() == '=') {
        in_.get();
        skip_ws();
        raw = parse_attr_value_raw();
      } else if (html_) {
        raw = aname;  // SGML boolean attribute shorthand
      } else {
        fail("expected '=' after attribute name '" + aname + "'");
      }
      for (const auto& [n, v] : attrs)
        if (n == aname) fail("duplicate attribute '" + aname + "'");
      attrs.emplace_back(aname, build_attr_value(aname, std::move(raw)));
    }
    open_element(tag, std::move(attrs), self_close, line);
  }

  void open_element(const std::string& tag, AttrList attrs, bool self_close, int line) {
    if (html_) {
      while (!stack_.empty() && html_start_closes(stack_.back(), tag)) close_top();
      if (tag == "tr" && !stack_.empty() && stack_.back() == "table") {
        sink_.begin("tbody", {}, line);
        stack_.push_back("tbody");
      }
      if (tag == "td" || tag == "th") {
        if (!find_attr(attrs, "rowspan"))
          attrs.emplace_back("rowspan", build_attr_value("rowspan", "1"));
        if (!find_attr(attrs, "colspan"))
          attrs.emplace_back("colspan", build_attr_value("colspan", "1"));
      }
      if (html_void_element(tag)) {
        sink_.begin(tag, std::move(attrs), line);
        sink_.end(tag);
        return;
      }
    }
    sink_.begin(tag, std::move(attrs), line);
    if (self_close) {
      sink_.end(tag);
    } else {
      stack_.push_back(tag);
    }
  }

  static bool find_attr(const AttrList& attrs, std::string_view name) {
    return std::any_of(attrs.begin(), attrs.end(),
                       [&](const auto& a) { return a.first == name; });
  }

  void close_top() {
    sink_.end(stack_.back());
    stack_.pop_back();
  }

  void parse_end_tag() {
    std::string tag = parse_name();
    skip_ws();
    if (in_.get() != '>') fail("expected '>' in end tag");
    if (html_) {
      if (html_void_element(tag)) return;  // spurious end tag for a void element
      while (!stack_.empty() && stack_.back() != tag && html_auto_closable(stack_.back()))
        close_top();
    }
    if (stack_.empty() || stack_.back() != tag)
      fail("unbalanced end tag '</" + tag + ">'");
    close_top();
  }

  void parse_pi() {
    std::string content;
    for (;;) {
      int c = in_.get();
      if (c < 0) fail("unexpected end of input in processing instruction");
      if (c == '?' && in_.peek() == '>') {
        in_.get();
        break;
      }
      if (c >= 0x80)
        consume_utf8_tail(content, c);
      else
        content += static_cast<char>(c);
    }
    sink_.pi(std::move(content));
  }

  void parse_declaration() {
    if (in_.peek() == '-') {
      in_.get();
      if (in_.get() != '-') fail("malformed comment");
      int dashes = 0;
      for (;;) {
        int c = in_.get();
        if (c < 0) fail("unexpected end of input in comment");
        if (c == '-') {
          ++dashes;
        } else if (c == '>' && dashes >= 2) {
          return;
        } else {
          dashes = 0;
        }
      }
    }
    // <!DOCTYPE ...> is tolerated and skipped, including an internal subset.
    std::string kw;
    while (is_name_char(in_.peek())) kw += static_cast<char>(in_.get());
    if (kw != "DOCTYPE" && kw != "doctype") fail("unsupported declaration '<!" + kw + "'");
    int depth = 0;
    for (;;) {
      int c = in_.get();
      if (c < 0) fail("unexpected end of input in DOCTYPE");
      if (c == '[')
        ++depth;
      else if (c == ']')
        --depth;
      else if (c == '>' && depth == 0)
        return;
    }
  }

  void at_eof() {
    if (html_)
      while (!stack_.empty() && html_auto_closable(stack_.back())) close_top();
    if (!stack_.empty()) fail("unexpected end of input: unclosed element '" + stack_.back() + "'");
  }

  Input in_;
  const ParseOptions& opts_;
  bool html_;
  Dispatcher& sink_;
  std::vector<std::string> stack_;
  std::string text_;
};

NodeList parse_tree_impl(Input in, const ParseOptions& opts) {
  TreeBuilder tb;
  Dispatcher d(&tb, nullptr);
  Parser p(in, opts, d);
  p.run();
  return tb.take();
}

void parse_events_impl(Input in, const ParseOptions& opts, const EventHandlers& handlers) {
  Dispatcher d(nullptr, &handlers);
  Parser p(in, opts, d);
  p.run();
}

} // namespace

NodeList parse_tree(std::string_view source, const ParseOptions& opts) {
  return parse_tree_impl(Input(source), opts);
}

NodeList parse_tree(std::istream& source, const ParseOptions& opts) {
  return parse_tree_impl(Input(source), opts);
}

void parse_events(std::string_view source, const ParseOptions& opts, const EventHandlers& handlers) {
  parse_events_impl(Input(source), opts, handlers);
}

void parse_events(std::istream& source, const ParseOptions& opts, const EventHandlers& handlers) {
  parse_events_impl(Input(source), opts, handlers);
}

// ---------------------------------------------------------------------------
// Serialization

std::string quote_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string quote_attribute(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

void check_name(const std::string& name, const char* what) {
  if (name.empty()) throw Error(std::string("invalid-name: empty ") + what);
  for (char c : name) {
    if (is_ascii_space(c) || c == '<' || c == '>' || c == '&' || c == '"' || c == '\'' ||
        c == '=' || c == '/' || c == '?' || c == '!')
      throw Error(std::string("invalid-name: '") + name + "' is not a valid " + what);
  }
}

bool has_text_child(const Element& e) {
  return std::any_of(e.children.begin(), e.children.end(),
                     [](const MarkupNode& n) { return n.is_text(); });
}

void write_node(std::ostream& out, const MarkupNode& n, Layout layout, int depth);

void write_children(std::ostream& out, const Element& e, Layout layout, int depth) {
  bool inline_children = layout == Layout::Compact || has_text_child(e);
  for (const MarkupNode& c : e.children) {
    if (!inline_children) {
      out << '\n';
      for (int i = 0; i < (depth + 1) * 2; ++i) out << ' ';
    }
    write_node(out, c, inline_children ? Layout::Compact : layout, depth + 1);
  }
  if (!inline_children) {
    out << '\n';
    for (int i = 0; i < depth * 2; ++i) out << ' ';
  }
}

void write_node(std::ostream& out, const MarkupNode& n, Layout layout, int depth) {
  if (n.is_text()) {
    out << quote_text(n.text().content);
    return;
  }
  if (n.is_pi()) {
    out << "<?" << n.pi().content << "?>";
    return;
  }
  const Element& e = n.element();
  check_name(e.tag, "tag name");
  out << '<' << e.tag;
  for (const auto& [name, val] : e.attributes) {
    check_name(name, "attribute name");
    out << ' ' << name << "=\"" << quote_attribute(val.to_text()) << '"';
  }
  if (e.children.empty()) {
    out << "/>";
    return;
  }
  out << '>';
  write_children(out, e, layout, depth);
  out << "</" << e.tag << '>';
}

} // namespace

void serialize(std::ostream& out, std::span<const MarkupNode> nodes, Layout layout) {
  bool first = true;
  for (const MarkupNode& n : nodes) {
    if (!first && layout == Layout::Indented) out << '\n';
    write_node(out, n, layout, 0);
    first = false;
  }
}

std::string serialize(std::span<const MarkupNode> nodes, Layout layout) {
  std::ostringstream out;
  serialize(out, nodes, layout);
  return out.str();
}

std::string serialize(const MarkupNode& node, Layout layout) {
  return serialize(std::span<const MarkupNode>(&node, 1), layout);
}

} // namespace triplekit::markup
