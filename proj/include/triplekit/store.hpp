#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "triplekit/error.hpp"
#include "triplekit/rdf.hpp"

namespace triplekit::store {

// Opaque handle for an interned resource text; stable for the store's
// lifetime.  intern is injective, resolve(intern(x)) == x.
using Handle = std::uint32_t;

class PermissionError : public Error {
public:
  using Error::Error;
};

// --- events ----------------------------------------------------------------

enum class EventType : unsigned {
  Assert = 1u << 0,
  Retract = 1u << 1,
  Update = 1u << 2,
  NewLiteral = 1u << 3,
  OldLiteral = 1u << 4,
  TxnBegin = 1u << 5,
  TxnEnd = 1u << 6,
  FileLoad = 1u << 7,
};

using EventMask = unsigned;
inline constexpr EventMask kAllEvents = 0xFFu;
inline EventMask mask_of(EventType t) { return static_cast<EventMask>(t); }

struct Event {
  EventType type;
  std::uint64_t txn_id = 0;
  // Assert/Retract/Update
  std::optional<rdf::Triple> triple;
  std::optional<rdf::Triple> new_triple;  // Update only
  std::string source;                     // Assert/Retract/Update/FileLoad
  std::uint32_t line = 0;
  // NewLiteral/OldLiteral
  std::optional<rdf::Literal> literal;
};

using MonitorFn = std::function<void(const Event&)>;
using MonitorId = std::uint64_t;

// --- records and patterns ----------------------------------------------------

struct ObjectRef {
  enum class Kind : std::uint8_t { Resource, Literal };
  Kind kind = Kind::Resource;
  std::uint32_t id = 0;

  std::uint64_t packed() const {
    return (static_cast<std::uint64_t>(kind) << 32) | id;
  }
  friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

// Number of maintained link chains: full list, S, P(root), O, SP, PO.
inline constexpr int kChainCount = 6;
enum Chain { kChainAll = 0, kChainS = 1, kChainP = 2, kChainO = 3, kChainSP = 4, kChainPO = 5 };

struct TripleRecord {
  Handle subject = 0;
  std::uint32_t predicate = 0;  // predicate table index
  ObjectRef object;
  std::uint32_t source = 0;  // source table index
  std::uint32_t line = 0;
  std::uint32_t flags = 0;  // bit 0: erased
  TripleRecord* next[kChainCount] = {};
  TripleRecord* prev_all = nullptr;
  // staged literal value, owned by the pending transaction until commit
  const rdf::Literal* staged_literal = nullptr;

  bool erased() const { return flags & 1u; }
};

struct LiteralQuery {
  enum class Kind { Exact, Prefix, Range, CaseInsensitive };
  Kind kind = Kind::Exact;
  rdf::Literal exact;  // Exact
  std::string text;    // Prefix / CaseInsensitive
  double lo = 0, hi = 0;  // Range

  static LiteralQuery exact_value(rdf::Literal l);
  static LiteralQuery prefix(std::string text);
  static LiteralQuery range(double lo, double hi);
  static LiteralQuery case_insensitive(std::string text);
};

using ObjectPattern = std::variant<Handle, LiteralQuery>;  // Handle = resource

struct TriplePattern {
  std::optional<Handle> subject;
  std::optional<Handle> predicate;
  std::optional<ObjectPattern> object;
  // restrict to one source (used by unload / per-source scans)
  std::optional<std::uint32_t> source;
};

struct StoredLiteral {
  rdf::Literal value;
  std::optional<double> numeric;
  std::uint32_t use_count = 0;
};

struct PredicateInfo {
  Handle iri = 0;
  Handle root_iri = 0;
  std::uint64_t triple_count = 0;
  std::vector<Handle> parents;
};

struct IndexStats {
  std::string name;
  std::size_t buckets = 0;
  std::size_t entries = 0;
};

struct Statistics {
  std::uint64_t triple_count = 0;
  std::uint64_t distinct_subjects = 0;
  std::uint64_t distinct_objects = 0;
  std::vector<std::pair<std::string, std::uint64_t>> per_predicate;
  std::vector<IndexStats> chains;
};

// Total order over literals: numerics first by value, then non-numerics
// case-insensitively, ties case-preserving with uppercase first (AaBb).
int compare_literals(const rdf::Literal& a, std::optional<double> a_num, const rdf::Literal& b,
                     std::optional<double> b_num);
int compare_literals(const rdf::Literal& a, const rdf::Literal& b);
std::optional<double> numeric_value(const rdf::Literal& l);

class Store;

// Yields the live records matching a pattern.  Holds read access for its
// lifetime; records obtained from next() are valid while the iterator is
// open.
class MatchIterator {
public:
  MatchIterator(MatchIterator&& o) noexcept;
  MatchIterator& operator=(MatchIterator&&) = delete;
  ~MatchIterator();

  const TripleRecord* next();

private:
  friend class Store;
  MatchIterator(const Store* store, TriplePattern pattern);

  const Store* store_;
  TriplePattern pattern_;
  int phase_ = 0;  // 0 = chain walk, 1 = staged records, 2 = done
  const TripleRecord* cursor_ = nullptr;
  Chain chain_ = kChainAll;
  std::vector<std::uint32_t> literal_candidates_;  // candidate-driven object scan
  std::size_t candidate_pos_ = 0;
  std::optional<ObjectRef> candidate_restrict_;
  std::size_t staged_pos_ = 0;
  bool overlay_ = false;
  bool released_ = false;
};

class Store {
public:
  Store();
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // --- interning ---------------------------------------------------------
  Handle intern(std::string_view text);
  std::optional<Handle> lookup(std::string_view text) const;
  std::string_view resolve(Handle h) const;

  std::uint32_t intern_source(std::string_view text);
  std::optional<std::uint32_t> lookup_source(std::string_view text) const;
  std::string_view resolve_source(std::uint32_t id) const;

  // --- write operations (run inside a transaction; calls outside one are
  // wrapped in an implicit transaction) -----------------------------------
  void assert_triple(const rdf::Triple& t, std::string_view source, std::uint32_t line);
  std::size_t retract_triples(const TriplePattern& pattern);
  void update_triple(const rdf::Triple& old_triple, const rdf::Triple& new_triple);
  void add_subproperty(Handle property, Handle super);
  void emit_file_load(std::string_view source);

  // Runs body as a transaction.  Nesting places a mark in the action list;
  // an outer commit applies everything atomically.  Returning false or
  // throwing discards the actions staged since the transaction began.
  bool with_transaction(const std::function<bool()>& body);

  // --- read operations -----------------------------------------------------
  MatchIterator match(const TriplePattern& pattern) const;
  std::vector<rdf::Triple> match_triples(const TriplePattern& pattern) const;

  std::vector<StoredLiteral> literal_search_prefix(std::string_view prefix) const;
  std::vector<StoredLiteral> literal_search_range(double lo, double hi) const;
  std::vector<StoredLiteral> literal_search_case_exact(std::string_view text) const;
  std::vector<StoredLiteral> all_literals() const;

  Statistics statistics() const;
  std::uint64_t triple_count() const;
  std::uint64_t predicate_triple_count(Handle predicate) const;
  std::uint64_t distinct_subject_count() const;
  std::uint64_t distinct_object_count() const;

  std::optional<PredicateInfo> predicate_info(Handle predicate) const;
  std::vector<Handle> predicates_in_use() const;
  std::vector<Handle> subproperty_children(Handle property) const;
  void each_subject(const std::function<void(Handle)>& fn) const;

  // Term/record conversions (valid while a read pin or iterator is held).
  rdf::Term object_term(const TripleRecord& rec) const;
  rdf::Triple record_triple(const TripleRecord& rec) const;
  Handle predicate_handle(std::uint32_t predicate_id) const;

  // Builds a store-level pattern from term-level components; unseen terms
  // yield an unmatchable pattern (reported via the bool flag).
  struct PatternBuild {
    TriplePattern pattern;
    bool matchable = true;
  };
  PatternBuild build_pattern(const std::optional<rdf::Term>& s, const std::optional<rdf::Iri>& p,
                             const std::optional<rdf::Term>& o,
                             const std::optional<std::string>& source = std::nullopt) const;

  // --- monitors ------------------------------------------------------------
  MonitorId monitor(MonitorFn fn, EventMask mask);
  void unmonitor(MonitorId id);

  // test hook: forces hash-table resizing regardless of load
  void force_chain_resize();

private:
  friend class MatchIterator;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace triplekit::store
