#include "triplekit/query.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace triplekit::query {

Slot Slot::variable(std::string name) {
  Slot s;
  s.is_var = true;
  s.var = std::move(name);
  return s;
}

Slot Slot::constant(rdf::Term t) {
  Slot s;
  s.term = std::move(t);
  return s;
}

// ---------------------------------------------------------------------------
// Tokenizer + parser

namespace {

struct Token {
  enum class Kind { Ident, Var, Iri, String, Number, Punct, Op, End };
  Kind kind = Kind::End;
  std::string text;
  int line = 1, col = 1;
};

bool ident_start(int c) { return std::isalpha(c) || c == '_'; }
bool ident_char(int c) { return std::isalnum(c) || c == '_' || c == '-'; }

class Lexer {
public:
  explicit Lexer(std::string_view s) : s_(s) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_ws();
      Token t;
      t.line = line_;
      t.col = col_;
      if (pos_ >= s_.size()) {
        t.kind = Token::Kind::End;
        out.push_back(t);
        return out;
      }
      char c = s_[pos_];
      if (c == '<') {
        t.kind = Token::Kind::Iri;
        advance();
        while (pos_ < s_.size() && s_[pos_] != '>') t.text += take();
        if (pos_ >= s_.size()) fail("unterminated IRI", t);
        advance();  // '>'
      } else if (c == '"') {
        t.kind = Token::Kind::String;
        advance();
        for (;;) {
          if (pos_ >= s_.size()) fail("unterminated string", t);
          char d = take();
          if (d == '"') break;
          if (d == '\\') {
            if (pos_ >= s_.size()) fail("dangling escape", t);
            char e = take();
            switch (e) {
              case 'n': t.text += '\n'; break;
              case 't': t.text += '\t'; break;
              case '"': t.text += '"'; break;
              case '\\': t.text += '\\'; break;
              default: fail("unknown escape", t);
            }
          } else {
            t.text += d;
          }
        }
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < s_.size() &&
                  std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
        t.kind = Token::Kind::Number;
        if (c == '-') t.text += take();
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
          t.text += take();
      } else if (ident_start(static_cast<unsigned char>(c))) {
        while (pos_ < s_.size() && ident_char(static_cast<unsigned char>(s_[pos_])))
          t.text += take();
        // prefixed name: ident ':' ident, without intervening space
        if (pos_ + 1 < s_.size() && s_[pos_] == ':' &&
            ident_start(static_cast<unsigned char>(s_[pos_ + 1]))) {
          t.text += take();  // ':'
          while (pos_ < s_.size() && ident_char(static_cast<unsigned char>(s_[pos_])))
            t.text += take();
          t.kind = Token::Kind::Ident;
        } else {
          t.kind = (std::isupper(static_cast<unsigned char>(t.text[0])) || t.text[0] == '_')
                       ? Token::Kind::Var
                       : Token::Kind::Ident;
        }
      } else if (c == '(' || c == ')' || c == ',' || c == '=') {
        if (c == '=' ) {
          t.kind = Token::Kind::Op;
          t.text = "=";
          advance();
        } else {
          t.kind = Token::Kind::Punct;
          t.text = c;
          advance();
        }
      } else if (c == '!' || c == '<' || c == '>') {
        t.kind = Token::Kind::Op;
        t.text += take();
        if (pos_ < s_.size() && s_[pos_] == '=') t.text += take();
        if (t.text == "!") fail("expected '!='", t);
      } else {
        fail(std::string("unexpected character '") + c + "'", t);
      }
      out.push_back(std::move(t));
    }
  }

private:
  [[noreturn]] void fail(const std::string& msg, const Token& t) {
    throw QueryError(msg, t.line, t.col);
  }

  void skip_ws() {
    while (pos_ < s_.size() &&
           (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r'))
      advance();
  }

  char take() {
    char c = s_[pos_];
    advance();
    return c;
  }

  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

bool keyword_is(const Token& t, std::string_view kw) {
  if (t.kind != Token::Kind::Ident && t.kind != Token::Kind::Var) return false;
  if (t.text.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i)
    if (std::toupper(static_cast<unsigned char>(t.text[i])) != kw[i]) return false;
  return true;
}

bool is_keyword(const Token& t) {
  for (const char* kw : {"SELECT", "WHERE", "FILTER", "DISTINCT", "LIMIT", "USING"})
    if (keyword_is(t, kw)) return true;
  return false;
}

class Parser {
public:
  Parser(std::vector<Token> tokens, std::string entailment)
      : tokens_(std::move(tokens)), entailment_(std::move(entailment)) {}

  Query run() {
    Query q;
    q.entailment = entailment_;
    if (!EntailmentRegistry::global().known(entailment_))
      throw QueryError("unknown entailment '" + entailment_ + "'");

    while (keyword_is(peek(), "USING")) {
      next();
      Token name = expect(Token::Kind::Ident, "namespace prefix");
      Token eq = next();
      if (eq.text != "=") fail(eq, "expected '=' in USING clause");
      Token iri = expect(Token::Kind::Iri, "namespace IRI");
      prefixes_[name.text] = iri.text;
    }

    Token sel = next();
    if (!keyword_is(sel, "SELECT")) fail(sel, "expected SELECT");
    q.projected.push_back(variable());
    while (peek().text == "," && peek().kind == Token::Kind::Punct) {
      next();
      q.projected.push_back(variable());
    }

    Token where = next();
    if (!keyword_is(where, "WHERE")) fail(where, "expected WHERE");
    q.patterns.push_back(pattern(q.patterns.size()));
    while (peek().kind == Token::Kind::Punct && peek().text == ",") {
      next();
      q.patterns.push_back(pattern(q.patterns.size()));
    }

    while (keyword_is(peek(), "FILTER")) {
      next();
      q.filters.push_back(filter());
    }
    if (keyword_is(peek(), "DISTINCT")) {
      next();
      q.distinct = true;
    }
    if (keyword_is(peek(), "LIMIT")) {
      next();
      Token n = expect(Token::Kind::Number, "limit count");
      q.limit = std::stoull(n.text);
    }
    Token end = next();
    if (end.kind != Token::Kind::End) fail(end, "unexpected trailing input");

    validate(q);
    return q;
  }

private:
  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    std::string at = t.kind == Token::Kind::End ? "end of input" : "'" + t.text + "'";
    throw QueryError(msg + ", found " + at, t.line, t.col);
  }

  const Token& peek() const { return tokens_[pos_]; }
  Token next() { return tokens_[pos_ >= tokens_.size() - 1 ? pos_ : pos_++]; }

  Token expect(Token::Kind kind, const std::string& what) {
    Token t = next();
    if (t.kind != kind) fail(t, "expected " + what);
    return t;
  }

  std::string variable() {
    Token t = next();
    if (t.kind != Token::Kind::Var || is_keyword(t)) fail(t, "expected a variable");
    return t.text;
  }

  Slot term_slot() {
    Token t = next();
    switch (t.kind) {
      case Token::Kind::Var:
        if (is_keyword(t)) fail(t, "expected a term");
        return Slot::variable(t.text);
      case Token::Kind::Iri:
        return Slot::constant(rdf::Iri{t.text});
      case Token::Kind::Ident: {
        if (is_keyword(t)) fail(t, "expected a term");
        std::size_t colon = t.text.find(':');
        if (colon != std::string::npos) {
          std::string prefix = t.text.substr(0, colon);
          auto it = prefixes_.find(prefix);
          if (it == prefixes_.end())
            throw QueryError("undeclared prefix '" + prefix + "'", t.line, t.col);
          return Slot::constant(rdf::Iri{it->second + t.text.substr(colon + 1)});
        }
        return Slot::constant(rdf::Iri{t.text});
      }
      case Token::Kind::String:
        return Slot::constant(rdf::Literal::plain(t.text));
      case Token::Kind::Number:
        return Slot::constant(rdf::Literal::plain(t.text));
      default:
        fail(t, "expected a term");
    }
  }

  PatternExpr pattern(std::size_t index) {
    Token open = next();
    if (open.kind != Token::Kind::Punct || open.text != "(")
      fail(open, "expected '(' to start a pattern");
    PatternExpr p;
    p.text_index = index;
    p.subject = term_slot();
    comma();
    p.predicate = term_slot();
    comma();
    p.object = term_slot();
    Token close = next();
    if (close.kind != Token::Kind::Punct || close.text != ")")
      fail(close, "expected ')' to close the pattern");
    if (!p.predicate.is_var && !rdf::is_iri(p.predicate.term))
      throw QueryError("pattern predicate must be an IRI or a variable", open.line, open.col);
    if (!p.subject.is_var && rdf::is_literal(p.subject.term))
      throw QueryError("pattern subject cannot be a literal", open.line, open.col);
    return p;
  }

  void comma() {
    Token t = next();
    if (t.kind != Token::Kind::Punct || t.text != ",") fail(t, "expected ','");
  }

  FilterExpr filter() {
    FilterExpr f;
    f.lhs = term_slot();
    Token op = next();
    if (op.kind != Token::Kind::Op) fail(op, "expected a comparison operator");
    if (op.text == "=")
      f.op = FilterExpr::Op::Eq;
    else if (op.text == "!=")
      f.op = FilterExpr::Op::Ne;
    else if (op.text == "<")
      f.op = FilterExpr::Op::Lt;
    else if (op.text == "<=")
      f.op = FilterExpr::Op::Le;
    else if (op.text == ">")
      f.op = FilterExpr::Op::Gt;
    else if (op.text == ">=")
      f.op = FilterExpr::Op::Ge;
    else
      fail(op, "unknown comparison operator");
    f.rhs = term_slot();
    return f;
  }

  void validate(const Query& q) {
    std::set<std::string> pattern_vars;
    for (const PatternExpr& p : q.patterns)
      for (const Slot* s : {&p.subject, &p.predicate, &p.object})
        if (s->is_var) pattern_vars.insert(s->var);
    for (const std::string& v : q.projected)
      if (!pattern_vars.count(v))
        throw QueryError("projected variable '" + v + "' does not occur in any pattern");
    for (const FilterExpr& f : q.filters)
      for (const Slot* s : {&f.lhs, &f.rhs})
        if (s->is_var && !pattern_vars.count(s->var))
          throw QueryError("filter variable '" + s->var + "' does not occur in any pattern");
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::string entailment_;
  std::map<std::string, std::string> prefixes_;
};

} // namespace

Query parse_query(std::string_view text, const std::string& entailment) {
  return Parser(Lexer(text).run(), entailment).run();
}

// ---------------------------------------------------------------------------
// Entailment modules

namespace {

// Streams store matches for a term-level pattern through the sink.
bool match_store(const store::Store& st, const std::optional<rdf::Term>& s,
                 const std::optional<rdf::Iri>& p, const std::optional<rdf::Term>& o,
                 const Entailment::Sink& sink) {
  store::Store::PatternBuild pb = st.build_pattern(s, p, o);
  if (!pb.matchable) return true;
  store::MatchIterator it = st.match(pb.pattern);
  while (const store::TripleRecord* r = it.next())
    if (!sink(st.record_triple(*r))) return false;
  return true;
}

bool store_has(const store::Store& st, const rdf::Term& s, const rdf::Iri& p,
               const rdf::Term& o) {
  bool found = false;
  match_store(st, s, p, o, [&](const rdf::Triple&) {
    found = true;
    return false;
  });
  return found;
}

// Reflexive-transitive closure downward over the predicate hierarchy.
std::vector<std::string> subproperties_of(const store::Store& st, const std::string& iri) {
  std::vector<std::string> out{iri};
  std::set<std::string> visited{iri};
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto h = st.lookup(out[i]);
    if (!h) continue;
    for (store::Handle child : st.subproperty_children(*h)) {
      std::string text(st.resolve(child));
      if (visited.insert(text).second) out.push_back(std::move(text));
    }
  }
  return out;
}

class RawEntailment : public Entailment {
public:
  bool enumerate(const store::Store& st, const Pattern& pat, const Sink& sink) const override {
    if (!pat.p) return match_store(st, pat.s, std::nullopt, pat.o, sink);
    for (const std::string& q : subproperties_of(st, pat.p->value))
      if (!match_store(st, pat.s, rdf::Iri{q}, pat.o, sink)) return false;
    return true;
  }
};

class RdfEntailment : public Entailment {
public:
  bool enumerate(const store::Store& st, const Pattern& pat, const Sink& sink) const override {
    if (!raw_.enumerate(st, pat, sink)) return false;

    const rdf::Iri type{rdf::ns::rdf_type()};
    const rdf::Term property{rdf::Iri{rdf::ns::rdf_property()}};
    const rdf::Term resource{rdf::Iri{rdf::ns::rdfs_resource()}};
    if (pat.p && !(pat.p->value == type.value)) return true;

    // every predicate in use is an rdf:Property, unless stated explicitly
    if (!pat.o || *pat.o == property) {
      for (store::Handle h : st.predicates_in_use()) {
        rdf::Term s = rdf::Iri{std::string(st.resolve(h))};
        if (pat.s && !(*pat.s == s)) continue;
        if (store_has(st, s, type, std::get<rdf::Iri>(property))) continue;
        if (!sink(rdf::Triple{s, type, property})) return false;
      }
    }
    // every subject is an rdfs:Resource, unless stated explicitly
    if (!pat.o || *pat.o == resource) {
      bool stopped = false;
      st.each_subject([&](store::Handle h) {
        if (stopped) return;
        std::string text(st.resolve(h));
        rdf::Term s = text.rfind("__", 0) == 0 ? rdf::Term(rdf::BNode{text})
                                               : rdf::Term(rdf::Iri{text});
        if (pat.s && !(*pat.s == s)) return;
        if (store_has(st, s, type, std::get<rdf::Iri>(resource))) return;
        if (!sink(rdf::Triple{s, type, resource})) stopped = true;
      });
      if (stopped) return false;
    }
    return true;
  }

private:
  RawEntailment raw_;
};

class RdfsEntailment : public Entailment {
public:
  bool enumerate(const store::Store& st, const Pattern& pat, const Sink& sink) const override {
    const std::string type = rdf::ns::rdf_type();
    const std::string subc = rdf::ns::rdfs_subclassof();
    const std::string subp = rdf::ns::rdfs_subpropertyof();
    if (pat.p) {
      if (pat.p->value == type) return enumerate_type(st, pat, sink);
      if (pat.p->value == subc) return enumerate_closure(st, subc, pat, sink);
      if (pat.p->value == subp) return enumerate_closure(st, subp, pat, sink);
      return raw_.enumerate(st, pat, sink);
    }
    // free predicate: union of the raw triples and every derived closure,
    // deduplicated
    std::set<rdf::Triple> seen;
    auto dedup = [&](const rdf::Triple& t) {
      if (!seen.insert(t).second) return true;
      return sink(t);
    };
    if (!raw_.enumerate(st, pat, dedup)) return false;
    Pattern tp = pat;
    tp.p = rdf::Iri{type};
    if (!enumerate_type(st, tp, dedup)) return false;
    Pattern cp = pat;
    cp.p = rdf::Iri{subc};
    if (!enumerate_closure(st, subc, cp, dedup)) return false;
    Pattern pp = pat;
    pp.p = rdf::Iri{subp};
    return enumerate_closure(st, subp, pp, dedup);
  }

private:
  // upward closure over an edge predicate, cycle-safe, reflexive
  std::vector<rdf::Term> closure_up(const store::Store& st, const std::string& edge,
                                    const rdf::Term& start) const {
    std::vector<rdf::Term> out{start};
    std::set<rdf::Term> visited{start};
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (rdf::is_literal(out[i])) continue;
      match_store(st, out[i], rdf::Iri{edge}, std::nullopt, [&](const rdf::Triple& t) {
        if (!rdf::is_literal(t.object) && visited.insert(t.object).second)
          out.push_back(t.object);
        return true;
      });
    }
    return out;
  }

  std::vector<rdf::Term> closure_down(const store::Store& st, const std::string& edge,
                                      const rdf::Term& start) const {
    std::vector<rdf::Term> out{start};
    std::set<rdf::Term> visited{start};
    for (std::size_t i = 0; i < out.size(); ++i) {
      match_store(st, std::nullopt, rdf::Iri{edge}, out[i], [&](const rdf::Triple& t) {
        if (visited.insert(t.subject).second) out.push_back(t.subject);
        return true;
      });
    }
    return out;
  }

  bool enumerate_type(const store::Store& st, const Pattern& pat, const Sink& sink) const {
    const rdf::Iri type{rdf::ns::rdf_type()};
    const std::string subc = rdf::ns::rdfs_subclassof();
    if (pat.s) {
      std::vector<rdf::Term> base_classes;
      Pattern bp;
      bp.s = pat.s;
      bp.p = type;
      raw_.enumerate(st, bp, [&](const rdf::Triple& t) {
        base_classes.push_back(t.object);
        return true;
      });
      std::set<rdf::Term> emitted;
      for (const rdf::Term& c0 : base_classes)
        for (const rdf::Term& c : closure_up(st, subc, c0)) {
          if (!emitted.insert(c).second) continue;
          if (pat.o && !(*pat.o == c)) continue;
          if (!sink(rdf::Triple{*pat.s, type, c})) return false;
        }
      return true;
    }
    if (pat.o) {
      // subjects typed by any subclass of the requested class
      std::set<rdf::Term> emitted;
      for (const rdf::Term& c : closure_down(st, subc, *pat.o)) {
        Pattern bp;
        bp.p = type;
        bp.o = c;
        bool stop = false;
        raw_.enumerate(st, bp, [&](const rdf::Triple& t) {
          if (emitted.insert(t.subject).second) {
            if (!sink(rdf::Triple{t.subject, type, *pat.o})) {
              stop = true;
              return false;
            }
          }
          return true;
        });
        if (stop) return false;
      }
      return true;
    }
    // both free
    std::set<std::pair<rdf::Term, rdf::Term>> emitted;
    Pattern bp;
    bp.p = type;
    std::vector<rdf::Triple> base_triples;
    raw_.enumerate(st, bp, [&](const rdf::Triple& t) {
      base_triples.push_back(t);
      return true;
    });
    for (const rdf::Triple& t : base_triples)
      for (const rdf::Term& c : closure_up(st, subc, t.object)) {
        if (!emitted.insert({t.subject, c}).second) continue;
        if (!sink(rdf::Triple{t.subject, type, c})) return false;
      }
    return true;
  }

  // universe of terms that participate in the closure of an edge predicate
  std::vector<rdf::Term> closure_universe(const store::Store& st, const std::string& edge) const {
    std::set<rdf::Term> u;
    match_store(st, std::nullopt, rdf::Iri{edge}, std::nullopt, [&](const rdf::Triple& t) {
      u.insert(t.subject);
      if (!rdf::is_literal(t.object)) u.insert(t.object);
      return true;
    });
    if (edge == rdf::ns::rdfs_subclassof()) {
      match_store(st, std::nullopt, rdf::Iri{rdf::ns::rdf_type()}, std::nullopt,
                  [&](const rdf::Triple& t) {
                    if (!rdf::is_literal(t.object)) u.insert(t.object);
                    return true;
                  });
    }
    return {u.begin(), u.end()};
  }

  bool in_universe(const store::Store& st, const std::string& edge, const rdf::Term& t) const {
    for (const rdf::Term& u : closure_universe(st, edge))
      if (u == t) return true;
    return false;
  }

  bool enumerate_closure(const store::Store& st, const std::string& edge, const Pattern& pat,
                         const Sink& sink) const {
    const rdf::Iri ep{edge};
    if (pat.s) {
      if (!in_universe(st, edge, *pat.s)) return true;
      std::set<rdf::Term> emitted;
      for (const rdf::Term& super : closure_up(st, edge, *pat.s)) {
        if (!emitted.insert(super).second) continue;
        if (pat.o && !(*pat.o == super)) continue;
        if (!sink(rdf::Triple{*pat.s, ep, super})) return false;
      }
      return true;
    }
    if (pat.o) {
      if (rdf::is_literal(*pat.o) || !in_universe(st, edge, *pat.o)) return true;
      std::set<rdf::Term> emitted;
      for (const rdf::Term& sub : closure_down(st, edge, *pat.o)) {
        if (!emitted.insert(sub).second) continue;
        if (!sink(rdf::Triple{sub, ep, *pat.o})) return false;
      }
      return true;
    }
    std::set<std::pair<rdf::Term, rdf::Term>> emitted;
    for (const rdf::Term& u : closure_universe(st, edge))
      for (const rdf::Term& super : closure_up(st, edge, u)) {
        if (!emitted.insert({u, super}).second) continue;
        if (!sink(rdf::Triple{u, ep, super})) return false;
      }
    return true;
  }

  RawEntailment raw_;
};

} // namespace

EntailmentRegistry& EntailmentRegistry::global() {
  static EntailmentRegistry* reg = [] {
    auto* r = new EntailmentRegistry();
    r->register_module("raw", std::make_shared<RawEntailment>());
    r->register_module("rdf", std::make_shared<RdfEntailment>());
    r->register_module("rdfs", std::make_shared<RdfsEntailment>());
    return r;
  }();
  return *reg;
}

void EntailmentRegistry::register_module(const std::string& name,
                                         std::shared_ptr<const Entailment> module) {
  std::lock_guard lk(mutex_);
  for (auto& [n, m] : modules_) {
    if (n == name) {
      m = std::move(module);
      return;
    }
  }
  modules_.emplace_back(name, std::move(module));
}

std::shared_ptr<const Entailment> EntailmentRegistry::find(const std::string& name) const {
  std::lock_guard lk(mutex_);
  for (const auto& [n, m] : modules_)
    if (n == name) return m;
  throw QueryError("unknown entailment '" + name + "'");
}

bool EntailmentRegistry::known(const std::string& name) const {
  std::lock_guard lk(mutex_);
  for (const auto& [n, m] : modules_)
    if (n == name) return true;
  return false;
}

std::vector<std::string> EntailmentRegistry::names() const {
  std::lock_guard lk(mutex_);
  std::vector<std::string> out;
  for (const auto& [n, m] : modules_) out.push_back(n);
  return out;
}

std::shared_ptr<const Entailment> entailment(const std::string& name) {
  return EntailmentRegistry::global().find(name);
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

struct StatsSnapshot {
  double total = 0;
  double distinct_subjects = 1;
  double distinct_objects = 1;
  double predicate_count = 1;
  std::map<std::string, double> per_predicate;

  explicit StatsSnapshot(const store::Store& st) {
    store::Statistics s = st.statistics();
    total = static_cast<double>(s.triple_count);
    distinct_subjects = std::max<double>(1, static_cast<double>(s.distinct_subjects));
    distinct_objects = std::max<double>(1, static_cast<double>(s.distinct_objects));
    predicate_count = std::max<double>(1, static_cast<double>(s.per_predicate.size()));
    for (const auto& [p, n] : s.per_predicate) per_predicate[p] = static_cast<double>(n);
  }
};

void slot_vars(const PatternExpr& p, std::set<std::string>& out) {
  for (const Slot* s : {&p.subject, &p.predicate, &p.object})
    if (s->is_var) out.insert(s->var);
}

bool slot_is_bound(const Slot& s, const std::set<std::string>& bound) {
  return !s.is_var || bound.count(s.var) > 0;
}

// Estimated result count: triple_count scaled by a selectivity factor per
// bound position.
double estimate_pattern(const PatternExpr& p, const std::set<std::string>& bound,
                        const StatsSnapshot& stats) {
  if (stats.total == 0) return 0;
  double est = stats.total;
  if (slot_is_bound(p.subject, bound)) est *= 1.0 / stats.distinct_subjects;
  if (!p.predicate.is_var) {
    auto it = stats.per_predicate.find(std::get<rdf::Iri>(p.predicate.term).value);
    double count = it == stats.per_predicate.end() ? 0.0 : it->second;
    est *= count / stats.total;
  } else if (bound.count(p.predicate.var)) {
    est *= 1.0 / stats.predicate_count;
  }
  if (slot_is_bound(p.object, bound)) est *= 1.0 / stats.distinct_objects;
  return est;
}

double sequence_cost(const std::vector<std::size_t>& order,
                     const std::vector<PatternExpr>& patterns, std::set<std::string> bound,
                     const StatsSnapshot& stats) {
  double cost = 0, rows = 1;
  for (std::size_t idx : order) {
    double est = estimate_pattern(patterns[idx], bound, stats);
    rows *= std::max(est, 1e-9);
    cost += rows;
    slot_vars(patterns[idx], bound);
  }
  return cost;
}

struct OptResult {
  std::vector<std::size_t> order;
  std::uint64_t candidates = 1;
};

class PlanSearch {
public:
  PlanSearch(const std::vector<PatternExpr>& patterns, const StatsSnapshot& stats, bool split)
      : patterns_(patterns), stats_(stats), split_(split) {}

  OptResult optimize_set(const std::vector<std::size_t>& idxs,
                         const std::set<std::string>& bound) {
    std::vector<std::vector<std::size_t>> groups = split_groups(idxs, bound);
    if (groups.size() == 1) return optimize_group(groups[0], bound);
    OptResult result;
    result.candidates = 1;
    // groups are variable-disjoint; order them by first appearance in the
    // query text and optimize each separately
    std::sort(groups.begin(), groups.end(), [&](const auto& a, const auto& b) {
      return *std::min_element(a.begin(), a.end()) < *std::min_element(b.begin(), b.end());
    });
    std::set<std::string> b = bound;
    for (const auto& g : groups) {
      OptResult r = optimize_group(g, b);
      result.candidates *= r.candidates;
      for (std::size_t idx : r.order) {
        result.order.push_back(idx);
        slot_vars(patterns_[idx], b);
      }
    }
    return result;
  }

private:
  OptResult optimize_group(const std::vector<std::size_t>& idxs,
                           const std::set<std::string>& bound) {
    if (idxs.size() == 1) return OptResult{{idxs[0]}, 1};
    OptResult best;
    double best_cost = 0;
    std::uint64_t total_candidates = 0;
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      std::size_t head = idxs[i];
      std::vector<std::size_t> rest;
      for (std::size_t j = 0; j < idxs.size(); ++j)
        if (j != i) rest.push_back(idxs[j]);
      std::set<std::string> b = bound;
      slot_vars(patterns_[head], b);
      OptResult tail = optimize_set(rest, b);
      total_candidates += tail.candidates;
      std::vector<std::size_t> order{head};
      order.insert(order.end(), tail.order.begin(), tail.order.end());
      double cost = sequence_cost(order, patterns_, bound, stats_);
      if (best.order.empty() || cost < best_cost) {
        best.order = std::move(order);
        best_cost = cost;
      }
    }
    best.candidates = total_candidates;
    return best;
  }

  // Partition into connected components linked by shared unbound variables.
  std::vector<std::vector<std::size_t>> split_groups(const std::vector<std::size_t>& idxs,
                                                     const std::set<std::string>& bound) {
    if (!split_) return {idxs};
    std::vector<std::set<std::string>> unbound(idxs.size());
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      std::set<std::string> vars;
      slot_vars(patterns_[idxs[i]], vars);
      for (const std::string& v : vars)
        if (!bound.count(v)) unbound[i].insert(v);
    }
    std::vector<int> comp(idxs.size(), -1);
    int ncomp = 0;
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      if (comp[i] != -1) continue;
      comp[i] = ncomp;
      std::vector<std::size_t> work{i};
      while (!work.empty()) {
        std::size_t a = work.back();
        work.pop_back();
        for (std::size_t b = 0; b < idxs.size(); ++b) {
          if (comp[b] != -1) continue;
          bool shares = std::any_of(unbound[a].begin(), unbound[a].end(),
                                    [&](const std::string& v) { return unbound[b].count(v); });
          if (shares) {
            comp[b] = ncomp;
            work.push_back(b);
          }
        }
      }
      ++ncomp;
    }
    std::vector<std::vector<std::size_t>> groups(ncomp);
    for (std::size_t i = 0; i < idxs.size(); ++i) groups[comp[i]].push_back(idxs[i]);
    return groups;
  }

  const std::vector<PatternExpr>& patterns_;
  const StatsSnapshot& stats_;
  bool split_;
};

void attach_filters(QueryPlan& plan, const Query& q) {
  std::vector<bool> attached(q.filters.size(), false);
  std::set<std::string> bound;
  for (PlanStep& step : plan.steps) {
    slot_vars(step.pattern, bound);
    for (std::size_t f = 0; f < q.filters.size(); ++f) {
      if (attached[f]) continue;
      const FilterExpr& fe = q.filters[f];
      bool ready = true;
      for (const Slot* s : {&fe.lhs, &fe.rhs})
        if (s->is_var && !bound.count(s->var)) ready = false;
      if (ready) {
        step.filters_after.push_back(fe);
        attached[f] = true;
      }
    }
  }
}

} // namespace

QueryPlan optimize(const Query& q, const store::Store& st, const OptimizeOptions& opts) {
  StatsSnapshot stats(st);
  PlanSearch search(q.patterns, stats, opts.enable_splitting);
  std::vector<std::size_t> idxs(q.patterns.size());
  for (std::size_t i = 0; i < idxs.size(); ++i) idxs[i] = i;
  OptResult r = search.optimize_set(idxs, {});

  QueryPlan plan;
  plan.entailment = q.entailment;
  plan.projected = q.projected;
  plan.distinct = q.distinct;
  plan.limit = q.limit;
  plan.candidates_evaluated = r.candidates;
  std::set<std::string> bound;
  for (std::size_t idx : r.order) {
    PlanStep step;
    step.pattern = q.patterns[idx];
    step.estimated_results = estimate_pattern(q.patterns[idx], bound, stats);
    slot_vars(q.patterns[idx], bound);
    plan.steps.push_back(std::move(step));
  }
  plan.estimated_cost = sequence_cost(r.order, q.patterns, {}, stats);
  attach_filters(plan, q);
  return plan;
}

QueryPlan manual_plan(const Query& q, const std::vector<std::size_t>& order) {
  QueryPlan plan;
  plan.entailment = q.entailment;
  plan.projected = q.projected;
  plan.distinct = q.distinct;
  plan.limit = q.limit;
  plan.candidates_evaluated = 1;
  for (std::size_t idx : order) {
    PlanStep step;
    step.pattern = q.patterns.at(idx);
    plan.steps.push_back(std::move(step));
  }
  attach_filters(plan, q);
  return plan;
}

// ---------------------------------------------------------------------------
// Executor

namespace {

class Bindings {
public:
  const rdf::Term* find(const std::string& var) const {
    for (const auto& [v, t] : env_)
      if (v == var) return &t;
    return nullptr;
  }

  std::size_t mark() const { return env_.size(); }
  void undo(std::size_t mark) { env_.resize(mark); }
  void bind(const std::string& var, rdf::Term t) { env_.emplace_back(var, std::move(t)); }

private:
  std::vector<std::pair<std::string, rdf::Term>> env_;
};

// numeric comparison value for filters
std::optional<double> filter_numeric(const rdf::Term& t) {
  if (const rdf::Literal* l = std::get_if<rdf::Literal>(&t))
    return store::numeric_value(*l);
  return std::nullopt;
}

// nullopt = type error, which fails the row silently
std::optional<bool> eval_filter(const FilterExpr& f, const Bindings& env) {
  auto resolve = [&](const Slot& s) -> const rdf::Term* {
    if (!s.is_var) return &s.term;
    return env.find(s.var);
  };
  const rdf::Term* a = resolve(f.lhs);
  const rdf::Term* b = resolve(f.rhs);
  if (!a || !b) return std::nullopt;

  if (f.op == FilterExpr::Op::Eq || f.op == FilterExpr::Op::Ne) {
    bool eq;
    std::optional<double> na = filter_numeric(*a), nb = filter_numeric(*b);
    if (na && nb)
      eq = *na == *nb;
    else
      eq = *a == *b;
    return f.op == FilterExpr::Op::Eq ? eq : !eq;
  }

  const rdf::Literal* la = std::get_if<rdf::Literal>(a);
  const rdf::Literal* lb = std::get_if<rdf::Literal>(b);
  if (!la || !lb) return std::nullopt;  // ordering a resource is a type error
  std::optional<double> na = store::numeric_value(*la), nb = store::numeric_value(*lb);
  int cmp;
  if (na && nb)
    cmp = *na < *nb ? -1 : (*na > *nb ? 1 : 0);
  else if (!na && !nb)
    cmp = la->lexical.compare(lb->lexical) < 0 ? -1 : (la->lexical == lb->lexical ? 0 : 1);
  else
    return std::nullopt;  // mixed numeric and text
  switch (f.op) {
    case FilterExpr::Op::Lt: return cmp < 0;
    case FilterExpr::Op::Le: return cmp <= 0;
    case FilterExpr::Op::Gt: return cmp > 0;
    case FilterExpr::Op::Ge: return cmp >= 0;
    default: return std::nullopt;
  }
}

class Executor {
public:
  Executor(const QueryPlan& plan, const store::Store& st,
           const std::function<bool(const BindingRow&)>& on_row, ExecStats* stats)
      : plan_(plan), st_(st), on_row_(on_row), stats_(stats),
        oracle_(entailment(plan.entailment)) {}

  void run() {
    if (plan_.steps.empty()) {
      emit();
      return;
    }
    step(0);
  }

private:
  // returns false to stop the whole execution
  bool step(std::size_t depth) {
    if (depth == plan_.steps.size()) return emit();
    const PlanStep& ps = plan_.steps[depth];

    Entailment::Pattern pat;
    bool pruned = false;
    auto instantiate = [&](const Slot& s) -> std::optional<rdf::Term> {
      if (!s.is_var) return s.term;
      if (const rdf::Term* t = env_.find(s.var)) return *t;
      return std::nullopt;
    };
    pat.s = instantiate(ps.pattern.subject);
    if (pat.s && rdf::is_literal(*pat.s)) pruned = true;  // literal subjects match nothing
    std::optional<rdf::Term> pterm = instantiate(ps.pattern.predicate);
    if (pterm) {
      if (const rdf::Iri* iri = std::get_if<rdf::Iri>(&*pterm))
        pat.p = *iri;
      else
        pruned = true;
    }
    pat.o = instantiate(ps.pattern.object);
    if (pruned) return true;

    bool keep_going = true;
    oracle_->enumerate(st_, pat, [&](const rdf::Triple& t) {
      if (stats_) ++stats_->rows_touched;
      std::size_t mark = env_.mark();
      if (bind(ps.pattern.subject, t.subject) && bind(ps.pattern.predicate, t.predicate) &&
          bind(ps.pattern.object, t.object) && pass_filters(ps)) {
        if (!step(depth + 1)) {
          keep_going = false;
          env_.undo(mark);
          return false;
        }
      }
      env_.undo(mark);
      return true;
    });
    return keep_going;
  }

  bool bind(const Slot& slot, const rdf::Term& value) {
    if (!slot.is_var) return true;  // oracle already honored the constant
    if (const rdf::Term* bound = env_.find(slot.var)) return *bound == value;
    env_.bind(slot.var, value);
    return true;
  }

  bool pass_filters(const PlanStep& ps) {
    for (const FilterExpr& f : ps.filters_after) {
      std::optional<bool> v = eval_filter(f, env_);
      if (!v || !*v) return false;
    }
    return true;
  }

  bool emit() {
    BindingRow row;
    for (const std::string& var : plan_.projected) {
      const rdf::Term* t = env_.find(var);
      row.values.push_back(t ? *t : rdf::Term(rdf::Iri{""}));
    }
    if (plan_.distinct && !distinct_.insert(row).second) return true;
    ++emitted_;
    bool more = on_row_(row);
    if (plan_.limit && emitted_ >= *plan_.limit) return false;
    return more;
  }

  const QueryPlan& plan_;
  const store::Store& st_;
  const std::function<bool(const BindingRow&)>& on_row_;
  ExecStats* stats_;
  std::shared_ptr<const Entailment> oracle_;
  Bindings env_;
  std::set<BindingRow> distinct_;
  std::uint64_t emitted_ = 0;
};

} // namespace

void execute(const QueryPlan& plan, const store::Store& st,
             const std::function<bool(const BindingRow&)>& on_row, ExecStats* stats) {
  Executor(plan, st, on_row, stats).run();
}

ResultSet execute(const QueryPlan& plan, const store::Store& st, ExecStats* stats) {
  ResultSet rs;
  rs.columns = plan.projected;
  execute(plan, st,
          [&](const BindingRow& row) {
            rs.rows.push_back(row);
            return true;
          },
          stats);
  return rs;
}

ResultSet run_query(const store::Store& st, std::string_view text, const std::string& ent) {
  Query q = parse_query(text, ent);
  QueryPlan plan = optimize(q, st);
  return execute(plan, st);
}

} // namespace triplekit::query
