#include "triplekit/persist.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support/store_oracle.hpp"

using namespace triplekit;
using namespace triplekit::persist;
using rdf::BNode;
using rdf::Iri;
using rdf::Literal;
using rdf::Triple;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("tk_persist_" + tag + "_" +
                                              std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Options test_options() {
  Options o;
  o.fsync = false;  // tmpfs tests don't need it
  o.clock = [] { return 1000000; };
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Triple t3(std::string s, std::string p, rdf::Term o) {
  return Triple{Iri{std::move(s)}, Iri{std::move(p)}, std::move(o)};
}

std::mt19937& rng() {
  static std::mt19937 gen(0xBEEF);
  return gen;
}

std::vector<SourceTriple> random_source_triples(int n) {
  std::uniform_int_distribution<int> idx(0, 25), kind(0, 4);
  std::vector<SourceTriple> out;
  for (int i = 0; i < n; ++i) {
    rdf::Term o;
    switch (kind(rng())) {
      case 0: o = Iri{"http://x/o" + std::to_string(idx(rng()))}; break;
      case 1: o = BNode{"__s#" + std::to_string(idx(rng()))}; break;
      case 2: o = Literal::plain(std::to_string(idx(rng())) + ".5"); break;
      case 3: o = Literal::lang("en", "word " + std::to_string(idx(rng()))); break;
      default: o = Literal::typed("http://t/dt", "v\"\n" + std::to_string(idx(rng()))); break;
    }
    out.push_back(SourceTriple{
        t3("http://x/s" + std::to_string(idx(rng())), "http://x/p" + std::to_string(idx(rng()) % 5), o),
        static_cast<std::uint32_t>(i + 1)});
  }
  return out;
}

} // namespace

TEST_CASE("snapshot bytes match the golden file") {
  std::vector<SourceTriple> ts = {
      {t3("http://x/s", "http://x/p", Iri{"http://x/o"}), 1},
      {t3("http://x/s", "http://x/p", Literal::plain("text")), 2},
      {{BNode{"__golden#1"}, Iri{"http://x/p"}, Literal::lang("en", "hallo")}, 3},
      {t3("http://x/s", "http://x/n", Literal::typed("http://t/dt", "4.5")), 4},
  };
  std::ostringstream out(std::ios::binary);
  write_snapshot(out, "golden", ts);
  CHECK(out.str() == slurp(fs::path(TK_GOLDEN_DIR) / "snapshot_v1.tkq"));
}

TEST_CASE("golden snapshot decodes to the original triples") {
  std::ifstream in(fs::path(TK_GOLDEN_DIR) / "snapshot_v1.tkq", std::ios::binary);
  SnapshotData data = read_snapshot(in, "golden.tkq");
  CHECK(data.source == "golden");
  REQUIRE(data.triples.size() == 4);
  CHECK(data.triples[0].triple.predicate.value == "http://x/p");
  CHECK(data.triples[2].triple.subject == rdf::Term(BNode{"__golden#1"}));
  CHECK(data.triples[3].triple.object ==
        rdf::Term(Literal::typed("http://t/dt", "4.5")));
}

TEST_CASE("journal grammar matches the golden file and round-trips") {
  std::string golden = slurp(fs::path(TK_GOLDEN_DIR) / "journal_v1.tkj");
  std::istringstream in(golden);
  std::string line;
  std::ostringstream rebuilt;
  int records = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    JournalRecord rec = parse_journal_record(line);
    rebuilt << encode_journal_record(rec) << "\n";
    ++records;
  }
  CHECK(records == 8);
  CHECK(rebuilt.str() == golden);
}

TEST_CASE("snapshot round trip over random triple sets") {
  for (int round = 0; round < 30; ++round) {
    std::vector<SourceTriple> ts = random_source_triples(40);
    std::ostringstream out(std::ios::binary);
    write_snapshot(out, "rt", ts);
    std::istringstream in(out.str());
    SnapshotData back = read_snapshot(in, "rt");
    CHECK(back.source == "rt");
    CHECK(back.triples == ts);
  }
}

TEST_CASE("corrupt snapshots report file and offset") {
  std::vector<SourceTriple> ts = random_source_triples(5);
  std::ostringstream out(std::ios::binary);
  write_snapshot(out, "c", ts);
  std::string bytes = out.str();

  // bad magic
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream in1(bad);
  CHECK_THROWS_WITH_AS(read_snapshot(in1, "c.tkq"), doctest::Contains("c.tkq"), LoadError);

  // truncation
  std::istringstream in2(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_snapshot(in2, "c.tkq"), LoadError);

  // trailer mismatch
  std::string trailer = bytes;
  trailer[trailer.size() - 8] ^= 1;
  std::istringstream in3(trailer);
  CHECK_THROWS_WITH_AS(read_snapshot(in3, "c.tkq"), doctest::Contains("trailing"), LoadError);
}

TEST_CASE("attach to an empty directory yields an empty store") {
  fs::path dir = fresh_dir("empty");
  store::Store st;
  Persistence p(st, test_options());
  CHECK(p.attach(dir).empty());
  CHECK(st.triple_count() == 0);
  fs::remove_all(dir);
}

TEST_CASE("attach on a missing directory is an error") {
  store::Store st;
  Persistence p(st, test_options());
  CHECK_THROWS_AS(p.attach("/nonexistent/tk_dir"), Error);
}

TEST_CASE("state survives a restart via the journal") {
  fs::path dir = fresh_dir("restart");
  std::vector<tktest::Quad> before;
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    st.with_transaction([&] {
      for (int i = 0; i < 100; ++i)
        st.assert_triple(t3("http://x/s" + std::to_string(i), "http://x/p",
                            Literal::plain("v" + std::to_string(i))),
                         "http://src/a", i + 1);
      return true;
    });
    st.with_transaction([&] {
      store::TriplePattern pat;
      pat.subject = *st.lookup("http://x/s7");
      st.retract_triples(pat);
      return true;
    });
    before = tktest::full_scan(st);
  }
  {
    store::Store st2;
    Persistence p2(st2, test_options());
    CHECK(p2.attach(dir).empty());
    CHECK(tktest::full_scan(st2) == before);
  }
  fs::remove_all(dir);
}

TEST_CASE("snapshot save truncates the journal and reload matches") {
  fs::path dir = fresh_dir("snap");
  std::vector<tktest::Quad> before;
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    st.with_transaction([&] {
      for (const SourceTriple& t : random_source_triples(60))
        st.assert_triple(t.triple, "http://src/a", t.line);
      return true;
    });
    p.save_snapshot("http://src/a");
    before = tktest::full_scan(st);
    fs::path jnl = dir / (encode_source_filename("http://src/a") + std::string(kJournalExt));
    CHECK(fs::file_size(jnl) == 0);
  }
  {
    store::Store st2;
    Persistence p2(st2, test_options());
    p2.attach(dir);
    CHECK(tktest::full_scan(st2) == before);
  }
  fs::remove_all(dir);
}

TEST_CASE("snapshot of a source with no triples is header plus zero count") {
  fs::path dir = fresh_dir("zerosnap");
  store::Store st;
  Persistence p(st, test_options());
  p.attach(dir);
  p.save_snapshot("http://src/none");
  fs::path snap = dir / (encode_source_filename("http://src/none") + std::string(kSnapshotExt));
  std::ifstream in(snap, std::ios::binary);
  SnapshotData data = read_snapshot(in, snap.string());
  CHECK(data.source == "http://src/none");
  CHECK(data.triples.empty());
  fs::remove_all(dir);
}

TEST_CASE("partial trailing transaction is skipped with a warning") {
  fs::path dir = fresh_dir("partial");
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    st.assert_triple(t3("http://x/a", "http://x/p", Iri{"http://x/o"}), "src", 1);
  }
  fs::path jnl = dir / (encode_source_filename("src") + std::string(kJournalExt));
  {
    // append a begin + assert without an end, as a crash would leave it
    std::ofstream out(jnl, std::ios::binary | std::ios::app);
    out << "begin(9, 1000000).\n";
    out << "assert(\"http://x/lost\", \"http://x/p\", \"http://x/o\", 1).\n";
  }
  store::Store st2;
  Persistence p2(st2, test_options());
  std::vector<std::string> warnings = p2.attach(dir);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("partial trailing transaction") != std::string::npos);
  CHECK(st2.triple_count() == 1);
  CHECK_FALSE(st2.lookup("http://x/lost").has_value());
  fs::remove_all(dir);
}

TEST_CASE("a truncated trailing record is skipped, mid-file corruption is an error") {
  fs::path dir = fresh_dir("tail");
  fs::path jnl = dir / (encode_source_filename("s") + std::string(kJournalExt));
  {
    std::ofstream out(jnl, std::ios::binary);
    out << "begin(1, 5).\n";
    out << "assert(\"http://x/a\", \"http://x/p\", \"http://x/o\", 1).\n";
    out << "end(1).\n";
    out << "begin(2, 6).\n";
    out << "assert(\"http://x/b\", \"http://x/p\", \"htt";  // torn write
  }
  {
    store::Store st;
    Persistence p(st, test_options());
    std::vector<std::string> warnings = p.attach(dir);
    CHECK(warnings.size() == 1);
    CHECK(st.triple_count() == 1);
  }
  {
    // corruption in the middle (valid records follow the bad line)
    {
      std::ofstream out(jnl, std::ios::binary);
      out << "begin(1, 5).\n";
      out << "garbage here\n";
      out << "end(1).\n";
    }
    store::Store st;
    Persistence p(st, test_options());
    CHECK_THROWS_AS(p.attach(dir), LoadError);
  }
  fs::remove_all(dir);
}

TEST_CASE("detach stops journalling and is idempotent") {
  fs::path dir = fresh_dir("detach");
  store::Store st;
  Persistence p(st, test_options());
  p.attach(dir);
  st.assert_triple(t3("http://x/a", "http://x/p", Iri{"http://x/o"}), "src", 1);
  p.detach();
  p.detach();  // no-op
  st.assert_triple(t3("http://x/b", "http://x/p", Iri{"http://x/o"}), "src", 2);

  store::Store st2;
  Persistence p2(st2, test_options());
  p2.attach(dir);
  CHECK(st2.triple_count() == 1);  // the write after detach was not journalled
  CHECK(st2.lookup("http://x/a").has_value());
  CHECK_FALSE(st2.lookup("http://x/b").has_value());
  fs::remove_all(dir);
}

TEST_CASE("attach, detach, attach reproduces the same state") {
  fs::path dir = fresh_dir("cycle");
  std::vector<tktest::Quad> state;
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    for (const SourceTriple& t : random_source_triples(30))
      st.assert_triple(t.triple, "http://src/x", t.line);
    state = tktest::full_scan(st);
    p.detach();
    Persistence p2(st, test_options());
    p2.attach(dir);  // re-attach replays into a store that already has the data
    CHECK(tktest::full_scan(st) == state);
  }
  fs::remove_all(dir);
}

TEST_CASE("multi-source transactions journal to each source") {
  fs::path dir = fresh_dir("multisrc");
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    st.with_transaction([&] {
      st.assert_triple(t3("http://x/a", "http://x/p", Iri{"http://x/o"}), "http://src/1", 1);
      st.assert_triple(t3("http://x/b", "http://x/p", Iri{"http://x/o"}), "http://src/2", 1);
      return true;
    });
  }
  CHECK(fs::exists(dir / (encode_source_filename("http://src/1") + std::string(kJournalExt))));
  CHECK(fs::exists(dir / (encode_source_filename("http://src/2") + std::string(kJournalExt))));
  store::Store st2;
  Persistence p2(st2, test_options());
  p2.attach(dir);
  CHECK(st2.triple_count() == 2);
  fs::remove_all(dir);
}

TEST_CASE("crash simulation: truncating the journal keeps transactions atomic") {
  fs::path dir = fresh_dir("crash");
  std::vector<std::vector<tktest::Quad>> checkpoints;
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    checkpoints.push_back(tktest::full_scan(st));
    for (int txn = 0; txn < 10; ++txn) {
      st.with_transaction([&] {
        st.assert_triple(t3("http://x/s" + std::to_string(txn), "http://x/p",
                            Literal::plain("v" + std::to_string(txn))),
                         "src", 1);
        st.assert_triple(t3("http://x/s" + std::to_string(txn), "http://x/q",
                            Iri{"http://x/o"}),
                         "src", 2);
        return true;
      });
      checkpoints.push_back(tktest::full_scan(st));
    }
  }
  fs::path jnl = dir / (encode_source_filename("src") + std::string(kJournalExt));
  std::string full = slurp(jnl);

  // cut at every line boundary; recovery must land exactly on a checkpoint
  for (std::size_t pos = 0; pos <= full.size(); ++pos) {
    if (pos != full.size() && full[pos] != '\n') continue;
    std::string prefix = full.substr(0, pos == full.size() ? pos : pos + 1);
    {
      std::ofstream out(jnl, std::ios::binary | std::ios::trunc);
      out << prefix;
    }
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    std::vector<tktest::Quad> got = tktest::full_scan(st);
    bool is_checkpoint = false;
    for (const auto& cp : checkpoints)
      if (cp == got) {
        is_checkpoint = true;
        break;
      }
    CHECK(is_checkpoint);
  }
  fs::remove_all(dir);
}

TEST_CASE("verify_directory reports sources and triples") {
  fs::path dir = fresh_dir("verify");
  {
    store::Store st;
    Persistence p(st, test_options());
    p.attach(dir);
    st.assert_triple(t3("http://x/a", "http://x/p", Iri{"http://x/o"}), "http://src/1", 1);
    st.assert_triple(t3("http://x/b", "http://x/p", Iri{"http://x/o"}), "http://src/2", 1);
    p.save_snapshot("http://src/1");
  }
  VerifyReport report = verify_directory(dir);
  CHECK(report.sources == 2);
  CHECK(report.triples == 2);
  CHECK(report.warnings.empty());
  fs::remove_all(dir);
}

TEST_CASE("source filename encoding round-trips") {
  for (const char* s : {"http://example.org/data?x=1&y=2", "plain", "with space", "100%"}) {
    CHECK(decode_source_filename(encode_source_filename(s)) == s);
  }
  // encoded names contain no path separators
  CHECK(encode_source_filename("http://a/b").find('/') == std::string::npos);
}
