#include "triplekit/persist.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

namespace triplekit::persist {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// varint + snapshot codec

namespace {

void put_varint(std::ostream& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.put(static_cast<char>((v & 0x7F) | 0x80));
    v >>= 7;
  }
  out.put(static_cast<char>(v));
}

void put_u32le(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64le(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class SnapshotReader {
public:
  SnapshotReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& what) {
    throw LoadError("corrupt snapshot " + name_ + " at offset " + std::to_string(offset_) + ": " +
                    what);
  }

  int byte() {
    int c = in_.get();
    if (c == EOF) fail("unexpected end of file");
    ++offset_;
    return c;
  }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    int shift = 0;
    for (;;) {
      int c = byte();
      v |= static_cast<std::uint64_t>(c & 0x7F) << shift;
      if (!(c & 0x80)) return v;
      shift += 7;
      if (shift > 63) fail("varint overflow");
    }
  }

  std::uint32_t u32le() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64le() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  std::string string() {
    std::uint64_t len = varint();
    std::string s(len, '\0');
    for (std::uint64_t i = 0; i < len; ++i) s[i] = static_cast<char>(byte());
    return s;
  }

  bool at_eof() {
    ++offset_;
    return in_.get() == EOF;
  }

private:
  std::istream& in_;
  std::string name_;
  std::uint64_t offset_ = 0;
};

void put_string(std::ostream& out, std::string_view s) {
  put_varint(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string_view term_text(const rdf::Term& t) {
  if (const rdf::Iri* i = std::get_if<rdf::Iri>(&t)) return i->value;
  return std::get<rdf::BNode>(t).id;
}

rdf::Term text_term(std::string text) {
  if (text.rfind("__", 0) == 0) return rdf::BNode{std::move(text)};
  return rdf::Iri{std::move(text)};
}

} // namespace

void write_snapshot(std::ostream& out, std::string_view source,
                    std::span<const SourceTriple> triples) {
  out.write(kSnapshotMagic, 4);
  put_u32le(out, kSnapshotVersion);
  put_string(out, source);

  // string table, indices in first-appearance order
  std::vector<std::string> table;
  std::map<std::string, std::uint64_t, std::less<>> index;
  auto idx = [&](std::string_view s) {
    auto it = index.find(s);
    if (it != index.end()) return it->second;
    table.emplace_back(s);
    return index.emplace(std::string(s), table.size() - 1).first->second;
  };
  struct Enc {
    std::uint64_t s, p;
    int okind;
    std::uint64_t o1 = 0, o2 = 0;
    std::uint32_t line;
  };
  std::vector<Enc> encs;
  encs.reserve(triples.size());
  for (const SourceTriple& st : triples) {
    Enc e{};
    e.s = idx(term_text(st.triple.subject));
    e.p = idx(st.triple.predicate.value);
    if (rdf::is_literal(st.triple.object)) {
      const rdf::Literal& l = std::get<rdf::Literal>(st.triple.object);
      switch (l.kind) {
        case rdf::LiteralKind::Plain:
          e.okind = 1;
          e.o1 = idx(l.lexical);
          break;
        case rdf::LiteralKind::Lang:
          e.okind = 2;
          e.o1 = idx(l.qualifier);
          e.o2 = idx(l.lexical);
          break;
        case rdf::LiteralKind::Typed:
          e.okind = 3;
          e.o1 = idx(l.qualifier);
          e.o2 = idx(l.lexical);
          break;
      }
    } else {
      e.okind = 0;
      e.o1 = idx(term_text(st.triple.object));
    }
    e.line = st.line;
    encs.push_back(e);
  }

  put_varint(out, table.size());
  for (const std::string& s : table) put_string(out, s);
  put_varint(out, encs.size());
  for (const Enc& e : encs) {
    put_varint(out, e.s);
    put_varint(out, e.p);
    out.put(static_cast<char>(e.okind));
    put_varint(out, e.o1);
    if (e.okind == 2 || e.okind == 3) put_varint(out, e.o2);
    put_varint(out, e.line);
  }
  put_u64le(out, encs.size());
}

SnapshotData read_snapshot(std::istream& in, const std::string& name_for_errors) {
  SnapshotReader r(in, name_for_errors);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.byte());
  if (std::memcmp(magic, kSnapshotMagic, 4) != 0) r.fail("bad magic");
  std::uint32_t version = r.u32le();
  if (version != kSnapshotVersion)
    r.fail("unsupported version " + std::to_string(version));

  SnapshotData data;
  data.source = r.string();
  std::uint64_t nstrings = r.varint();
  std::vector<std::string> table;
  table.reserve(nstrings);
  for (std::uint64_t i = 0; i < nstrings; ++i) table.push_back(r.string());
  auto str = [&](std::uint64_t i) -> const std::string& {
    if (i >= table.size()) r.fail("string index out of range");
    return table[i];
  };

  std::uint64_t ntriples = r.varint();
  data.triples.reserve(ntriples);
  for (std::uint64_t i = 0; i < ntriples; ++i) {
    SourceTriple st;
    st.triple.subject = text_term(str(r.varint()));
    st.triple.predicate = rdf::Iri{str(r.varint())};
    int okind = r.byte();
    switch (okind) {
      case 0: st.triple.object = text_term(str(r.varint())); break;
      case 1: st.triple.object = rdf::Literal::plain(str(r.varint())); break;
      case 2: {
        std::string lang = str(r.varint());
        st.triple.object = rdf::Literal::lang(lang, str(r.varint()));
        break;
      }
      case 3: {
        std::string dt = str(r.varint());
        st.triple.object = rdf::Literal::typed(dt, str(r.varint()));
        break;
      }
      default: r.fail("bad object kind " + std::to_string(okind));
    }
    st.line = static_cast<std::uint32_t>(r.varint());
    data.triples.push_back(std::move(st));
  }
  std::uint64_t trailer = r.u64le();
  if (trailer != ntriples) r.fail("trailing record count mismatch");
  if (!r.at_eof()) r.fail("trailing bytes after record count");
  return data;
}

// ---------------------------------------------------------------------------
// journal codec

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

std::string encode_term(const rdf::Term& t) {
  if (rdf::is_literal(t)) {
    const rdf::Literal& l = std::get<rdf::Literal>(t);
    switch (l.kind) {
      case rdf::LiteralKind::Plain: return "plain(" + quote(l.lexical) + ")";
      case rdf::LiteralKind::Lang:
        return "lang(" + quote(l.qualifier) + ", " + quote(l.lexical) + ")";
      case rdf::LiteralKind::Typed:
        return "type(" + quote(l.qualifier) + ", " + quote(l.lexical) + ")";
    }
  }
  return quote(term_text(t));
}

std::string encode_triple_args(const rdf::Triple& t) {
  return encode_term(t.subject) + ", " + quote(t.predicate.value) + ", " + encode_term(t.object);
}

// minimal term reader for the journal grammar
class TermParser {
public:
  explicit TermParser(std::string_view s) : s_(s) {}

  struct Node {
    std::string functor;            // empty for leaves
    std::vector<Node> args;         // functor terms
    std::string text;               // quoted string leaf
    std::int64_t number = 0;        // integer leaf
    bool is_string = false, is_number = false;
  };

  Node parse_line() {
    Node n = term();
    ws();
    expect('.');
    ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& what) {
    throw LoadError("bad journal record (column " + std::to_string(pos_ + 1) + "): " + what);
  }

  void ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Node term() {
    ws();
    if (pos_ >= s_.size()) fail("unexpected end of line");
    char c = s_[pos_];
    if (c == '"') return string_leaf();
    if (c == '-' || (c >= '0' && c <= '9')) return number_leaf();
    if (!std::isalpha(static_cast<unsigned char>(c)) && c != '_') fail("expected a term");
    Node n;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      n.functor += s_[pos_++];
    ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      for (;;) {
        n.args.push_back(term());
        ws();
        if (pos_ < s_.size() && s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        expect(')');
        break;
      }
    }
    return n;
  }

  Node string_leaf() {
    Node n;
    n.is_string = true;
    ++pos_;  // opening quote
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("dangling escape");
        char e = s_[pos_++];
        switch (e) {
          case 'n': n.text += '\n'; break;
          case 'r': n.text += '\r'; break;
          case 't': n.text += '\t'; break;
          case '"': n.text += '"'; break;
          case '\\': n.text += '\\'; break;
          default: fail("unknown escape");
        }
      } else {
        n.text += c;
      }
    }
    expect('"');
    return n;
  }

  Node number_leaf() {
    Node n;
    n.is_number = true;
    std::size_t start = pos_;
    if (s_[pos_] == '-') ++pos_;
    while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') ++pos_;
    if (pos_ == start) fail("expected a number");
    n.number = std::stoll(std::string(s_.substr(start, pos_ - start)));
    return n;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

rdf::Term node_to_term(const TermParser::Node& n) {
  if (n.is_string) return text_term(n.text);
  if (n.functor == "plain" && n.args.size() == 1) return rdf::Literal::plain(n.args[0].text);
  if (n.functor == "lang" && n.args.size() == 2)
    return rdf::Literal::lang(n.args[0].text, n.args[1].text);
  if (n.functor == "type" && n.args.size() == 2)
    return rdf::Literal::typed(n.args[0].text, n.args[1].text);
  throw LoadError("bad journal term '" + n.functor + "'");
}

rdf::Triple node_to_triple(const TermParser::Node& s, const TermParser::Node& p,
                           const TermParser::Node& o) {
  if (!p.is_string) throw LoadError("journal predicate must be a string");
  return rdf::Triple{node_to_term(s), rdf::Iri{p.text}, node_to_term(o)};
}

} // namespace

std::string encode_journal_record(const JournalRecord& rec) {
  std::ostringstream out;
  switch (rec.kind) {
    case JournalRecord::Kind::Begin:
      out << "begin(" << rec.txn << ", " << rec.time << ").";
      break;
    case JournalRecord::Kind::End:
      out << "end(" << rec.txn << ").";
      break;
    case JournalRecord::Kind::Assert:
      out << "assert(" << encode_triple_args(rec.triple) << ", " << rec.line << ").";
      break;
    case JournalRecord::Kind::Retract:
      out << "retract(" << encode_triple_args(rec.triple) << ").";
      break;
    case JournalRecord::Kind::Update:
      out << "update(triple(" << encode_triple_args(rec.triple) << "), triple("
          << encode_triple_args(rec.new_triple) << ")).";
      break;
  }
  return out.str();
}

JournalRecord parse_journal_record(std::string_view line) {
  TermParser parser(line);
  TermParser::Node n = parser.parse_line();
  JournalRecord rec;
  auto need = [&](std::size_t arity) {
    if (n.args.size() != arity)
      throw LoadError("journal record '" + n.functor + "' expects " + std::to_string(arity) +
                      " arguments");
  };
  if (n.functor == "begin") {
    need(2);
    rec.kind = JournalRecord::Kind::Begin;
    rec.txn = static_cast<std::uint64_t>(n.args[0].number);
    rec.time = n.args[1].number;
  } else if (n.functor == "end") {
    need(1);
    rec.kind = JournalRecord::Kind::End;
    rec.txn = static_cast<std::uint64_t>(n.args[0].number);
  } else if (n.functor == "assert") {
    need(4);
    rec.kind = JournalRecord::Kind::Assert;
    rec.triple = node_to_triple(n.args[0], n.args[1], n.args[2]);
    rec.line = static_cast<std::uint32_t>(n.args[3].number);
  } else if (n.functor == "retract") {
    need(3);
    rec.kind = JournalRecord::Kind::Retract;
    rec.triple = node_to_triple(n.args[0], n.args[1], n.args[2]);
  } else if (n.functor == "update") {
    need(2);
    rec.kind = JournalRecord::Kind::Update;
    const auto& ot = n.args[0];
    const auto& nt = n.args[1];
    if (ot.functor != "triple" || ot.args.size() != 3 || nt.functor != "triple" ||
        nt.args.size() != 3)
      throw LoadError("update record expects two triple/3 terms");
    rec.triple = node_to_triple(ot.args[0], ot.args[1], ot.args[2]);
    rec.new_triple = node_to_triple(nt.args[0], nt.args[1], nt.args[2]);
  } else {
    throw LoadError("unknown journal record '" + n.functor + "'");
  }
  return rec;
}

// ---------------------------------------------------------------------------
// filenames

std::string encode_source_filename(std::string_view source) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : source) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    }
  }
  return out;
}

std::string decode_source_filename(std::string_view filename) {
  std::string out;
  for (std::size_t i = 0; i < filename.size(); ++i) {
    if (filename[i] == '%' && i + 2 < filename.size()) {
      auto hexval = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
      };
      int hi = hexval(filename[i + 1]), lo = hexval(filename[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += filename[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

struct Persistence::Impl {
  store::Store& store;
  Options opts;
  fs::path dir;
  bool is_attached = false;
  store::MonitorId monitor_id = 0;

  // per-transaction buffered journal lines, keyed by source
  std::mutex buffer_mutex;
  std::map<std::string, std::vector<std::string>> txn_buffer;

  Impl(store::Store& s, Options o) : store(s), opts(std::move(o)) {
    if (!opts.clock)
      opts.clock = [] {
        return static_cast<std::int64_t>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
      };
  }

  fs::path snapshot_path(std::string_view source) const {
    return dir / (encode_source_filename(source) + std::string(kSnapshotExt));
  }
  fs::path journal_path(std::string_view source) const {
    return dir / (encode_source_filename(source) + std::string(kJournalExt));
  }

  void append_journal(const std::string& source, const std::vector<std::string>& lines,
                      std::uint64_t txn_id) {
    fs::path path = journal_path(source);
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error("cannot open journal " + path.string());
    std::string block;
    block += encode_journal_record({JournalRecord::Kind::Begin, txn_id, opts.clock()}) + "\n";
    for (const std::string& l : lines) block += l + "\n";
    JournalRecord end;
    end.kind = JournalRecord::Kind::End;
    end.txn = txn_id;
    block += encode_journal_record(end) + "\n";
    ssize_t n = ::write(fd, block.data(), block.size());
    if (n != static_cast<ssize_t>(block.size())) {
      ::close(fd);
      throw Error("short write to journal " + path.string());
    }
    if (opts.fsync) ::fsync(fd);
    ::close(fd);
  }

  void on_event(const store::Event& ev) {
    using store::EventType;
    std::lock_guard lk(buffer_mutex);
    switch (ev.type) {
      case EventType::Assert: {
        JournalRecord r;
        r.kind = JournalRecord::Kind::Assert;
        r.triple = *ev.triple;
        r.line = ev.line;
        txn_buffer[ev.source].push_back(encode_journal_record(r));
        break;
      }
      case EventType::Retract: {
        JournalRecord r;
        r.kind = JournalRecord::Kind::Retract;
        r.triple = *ev.triple;
        txn_buffer[ev.source].push_back(encode_journal_record(r));
        break;
      }
      case EventType::Update: {
        JournalRecord r;
        r.kind = JournalRecord::Kind::Update;
        r.triple = *ev.triple;
        r.new_triple = *ev.new_triple;
        txn_buffer[ev.source].push_back(encode_journal_record(r));
        break;
      }
      case EventType::TxnEnd: {
        for (const auto& [source, lines] : txn_buffer) append_journal(source, lines, ev.txn_id);
        txn_buffer.clear();
        break;
      }
      default:
        break;
    }
  }

  void replay_assert(const rdf::Triple& t, const std::string& source, std::uint32_t line) {
    store.assert_triple(t, source, line);
  }

  void replay_retract(const rdf::Triple& t, const std::string& source) {
    store::Store::PatternBuild pb =
        store.build_pattern(t.subject, t.predicate, t.object, source);
    if (pb.matchable) store.retract_triples(pb.pattern);
  }

  // Replays one source's journal; returns warnings for skipped partial tails.
  std::vector<std::string> replay_journal(const std::string& source, const fs::path& path) {
    std::vector<std::string> warnings;
    std::ifstream in(path, std::ios::binary);
    if (!in) return warnings;

    struct Pending {
      std::vector<JournalRecord> records;
      bool open = false;
    } txn;

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }

    auto commit_pending = [&] {
      store.with_transaction([&] {
        for (const JournalRecord& r : txn.records) {
          switch (r.kind) {
            case JournalRecord::Kind::Assert: replay_assert(r.triple, source, r.line); break;
            case JournalRecord::Kind::Retract: replay_retract(r.triple, source); break;
            case JournalRecord::Kind::Update:
              replay_retract(r.triple, source);
              replay_assert(r.new_triple, source, 0);
              break;
            default: break;
          }
        }
        return true;
      });
      txn = Pending{};
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
      JournalRecord rec;
      try {
        rec = parse_journal_record(lines[i]);
      } catch (const LoadError& e) {
        // a bad line followed by parseable content is corruption; a bad tail
        // is a partial write and is skipped
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
          try {
            (void)parse_journal_record(lines[j]);
            throw LoadError("corrupt journal " + path.string() + " at line " +
                            std::to_string(i + 1) + ": " + e.what());
          } catch (const LoadError& inner) {
            if (std::string(inner.what()).rfind("corrupt journal", 0) == 0) throw;
          }
        }
        warnings.push_back("journal " + path.string() + ": skipped unparseable tail at line " +
                           std::to_string(i + 1));
        txn = Pending{};
        return warnings;
      }
      switch (rec.kind) {
        case JournalRecord::Kind::Begin:
          txn = Pending{};
          txn.open = true;
          break;
        case JournalRecord::Kind::End:
          if (txn.open) commit_pending();
          break;
        default:
          if (txn.open) txn.records.push_back(std::move(rec));
          break;
      }
    }
    if (txn.open)
      warnings.push_back("journal " + path.string() +
                         ": ignored partial trailing transaction");
    return warnings;
  }

  void load_snapshot_file(const std::string& source, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    SnapshotData data = read_snapshot(in, path.string());
    store.with_transaction([&] {
      for (const SourceTriple& st : data.triples) store.assert_triple(st.triple, source, st.line);
      return true;
    });
  }
};

Persistence::Persistence(store::Store& store, Options opts)
    : impl_(std::make_unique<Impl>(store, std::move(opts))) {}

Persistence::~Persistence() {
  if (impl_->is_attached) detach();
}

std::vector<std::string> Persistence::attach(const std::filesystem::path& directory) {
  Impl& im = *impl_;
  if (im.is_attached) throw Error("already attached to " + im.dir.string());
  if (!fs::is_directory(directory))
    throw Error("persistence directory does not exist: " + directory.string());
  im.dir = directory;

  std::vector<std::string> warnings;
  std::map<std::string, std::pair<fs::path, fs::path>> sources;  // source -> (snap, journal)
  for (const fs::directory_entry& ent : fs::directory_iterator(directory)) {
    if (!ent.is_regular_file()) continue;
    std::string name = ent.path().filename().string();
    if (name.size() > kSnapshotExt.size() &&
        name.ends_with(kSnapshotExt)) {
      std::string src = decode_source_filename(name.substr(0, name.size() - kSnapshotExt.size()));
      sources[src].first = ent.path();
    } else if (name.size() > kJournalExt.size() && name.ends_with(kJournalExt)) {
      std::string src = decode_source_filename(name.substr(0, name.size() - kJournalExt.size()));
      sources[src].second = ent.path();
    }
  }

  for (const auto& [source, paths] : sources) {
    if (!paths.first.empty()) im.load_snapshot_file(source, paths.first);
    if (!paths.second.empty()) {
      std::vector<std::string> w = im.replay_journal(source, paths.second);
      warnings.insert(warnings.end(), w.begin(), w.end());
    }
  }

  im.monitor_id = im.store.monitor([imp = impl_.get()](const store::Event& ev) { imp->on_event(ev); },
                                   mask_of(store::EventType::Assert) |
                                       mask_of(store::EventType::Retract) |
                                       mask_of(store::EventType::Update) |
                                       mask_of(store::EventType::TxnEnd));
  im.is_attached = true;
  return warnings;
}

void Persistence::save_snapshot(std::string_view source) {
  Impl& im = *impl_;
  if (!im.is_attached) throw Error("not attached");

  // read snapshot of this source's triples
  std::vector<SourceTriple> triples;
  store::Store::PatternBuild pb =
      im.store.build_pattern(std::nullopt, std::nullopt, std::nullopt, std::string(source));
  if (pb.matchable) {
    store::MatchIterator it = im.store.match(pb.pattern);
    while (const store::TripleRecord* r = it.next())
      triples.push_back(SourceTriple{im.store.record_triple(*r), r->line});
  }

  fs::path final_path = im.snapshot_path(source);
  fs::path tmp_path = final_path;
  tmp_path += ".tmp";
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write snapshot " + tmp_path.string());
    write_snapshot(out, source, triples);
    if (!out) throw Error("write failure on " + tmp_path.string());
  }
  if (im.opts.fsync) {
    int fd = ::open(tmp_path.c_str(), O_RDONLY);
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }
  fs::rename(tmp_path, final_path);
  // journal restarts from the new snapshot
  std::ofstream trunc(im.journal_path(source), std::ios::binary | std::ios::trunc);
}

void Persistence::detach() {
  Impl& im = *impl_;
  if (!im.is_attached) return;
  im.store.unmonitor(im.monitor_id);
  im.is_attached = false;
  im.txn_buffer.clear();
}

bool Persistence::attached() const { return impl_->is_attached; }

const std::filesystem::path& Persistence::directory() const { return impl_->dir; }

VerifyReport verify_directory(const std::filesystem::path& directory) {
  store::Store scratch;
  persist::Persistence p(scratch);
  VerifyReport report;
  report.warnings = p.attach(directory);
  report.triples = scratch.triple_count();
  std::set<std::string> sources;
  store::MatchIterator it = scratch.match({});
  while (const store::TripleRecord* r = it.next())
    sources.insert(std::string(scratch.resolve_source(r->source)));
  report.sources = sources.size();
  return report;
}

} // namespace triplekit::persist
