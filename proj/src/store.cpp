#include "triplekit/store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <condition_variable>
#include <thread>
#include <tuple>
#include <unordered_set>

namespace triplekit::store {

namespace {

std::string ascii_fold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ull;
  x ^= x >> 33;
  return x;
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull);
}

int cmp3(int a, int b) { return a < b ? -1 : (a > b ? 1 : 0); }

int cmp_str(const std::string& a, const std::string& b) {
  int c = a.compare(b);
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

bool term_is_bnode_text(std::string_view t) { return t.rfind("__", 0) == 0; }

} // namespace

std::optional<double> numeric_value(const rdf::Literal& l) {
  const std::string& t = l.lexical;
  if (t.empty()) return std::nullopt;
  bool digit = false;
  for (char c : t) {
    if (c >= '0' && c <= '9')
      digit = true;
    else if (c != '+' && c != '-' && c != '.' && c != 'e' && c != 'E')
      return std::nullopt;
  }
  if (!digit) return std::nullopt;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (*begin == '+') ++begin;  // from_chars rejects a leading plus
  double v = 0;
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

int compare_literals(const rdf::Literal& a, std::optional<double> an, const rdf::Literal& b,
                     std::optional<double> bn) {
  if (an && bn) {
    if (*an < *bn) return -1;
    if (*an > *bn) return 1;
  } else if (an) {
    return -1;  // numerics precede all non-numerics
  } else if (bn) {
    return 1;
  } else {
    int c = cmp_str(ascii_fold(a.lexical), ascii_fold(b.lexical));
    if (c) return c;
  }
  // ties: case-preserving bytes (uppercase sorts first), then kind, qualifier
  if (int c = cmp_str(a.lexical, b.lexical)) return c;
  if (int c = cmp3(static_cast<int>(a.kind), static_cast<int>(b.kind))) return c;
  return cmp_str(a.qualifier, b.qualifier);
}

int compare_literals(const rdf::Literal& a, const rdf::Literal& b) {
  return compare_literals(a, numeric_value(a), b, numeric_value(b));
}

LiteralQuery LiteralQuery::exact_value(rdf::Literal l) {
  LiteralQuery q;
  q.kind = Kind::Exact;
  q.exact = std::move(l);
  return q;
}

LiteralQuery LiteralQuery::prefix(std::string text) {
  LiteralQuery q;
  q.kind = Kind::Prefix;
  q.text = std::move(text);
  return q;
}

LiteralQuery LiteralQuery::range(double lo, double hi) {
  if (lo > hi) throw Error("invalid literal range: lo > hi");
  LiteralQuery q;
  q.kind = Kind::Range;
  q.lo = lo;
  q.hi = hi;
  return q;
}

LiteralQuery LiteralQuery::case_insensitive(std::string text) {
  LiteralQuery q;
  q.kind = Kind::CaseInsensitive;
  q.text = std::move(text);
  return q;
}

// ---------------------------------------------------------------------------

namespace {

class InternTable {
public:
  std::uint32_t intern(std::string_view text) {
    {
      std::shared_lock lk(mutex_);
      auto it = index_.find(text);
      if (it != index_.end()) return it->second;
    }
    std::unique_lock lk(mutex_);
    auto it = index_.find(text);
    if (it != index_.end()) return it->second;
    texts_.emplace_back(text);
    std::uint32_t id = static_cast<std::uint32_t>(texts_.size() - 1);
    index_.emplace(texts_.back(), id);
    return id;
  }

  std::optional<std::uint32_t> lookup(std::string_view text) const {
    std::shared_lock lk(mutex_);
    auto it = index_.find(text);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::string_view resolve(std::uint32_t id) const {
    std::shared_lock lk(mutex_);
    if (id >= texts_.size()) throw Error("unknown handle " + std::to_string(id));
    return texts_[id];
  }

private:
  struct SvHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  struct SvEq {
    using is_transparent = void;
    bool operator()(std::string_view a, std::string_view b) const { return a == b; }
  };
  std::deque<std::string> texts_;
  std::unordered_map<std::string_view, std::uint32_t, SvHash, SvEq> index_;
  mutable std::shared_mutex mutex_;
};

struct LiteralEntry {
  rdf::Literal value;
  std::optional<double> numeric;
  std::string fold;
  std::uint32_t use_count = 0;
  bool live = false;
};

struct PredicateEntry {
  Handle iri = 0;
  std::vector<std::uint32_t> parents;  // subPropertyOf edges, as predicate ids
  std::vector<std::uint32_t> children;
  std::uint32_t root = 0;
  std::uint64_t triple_count = 0;
};

struct NumericBound {
  double v;
};
struct TextBound {
  std::string fold;
};

struct HashTable {
  std::vector<TripleRecord*> buckets;
  std::size_t entries = 0;
};

struct Action {
  enum class Kind { Assert, Retract, Update, FileLoad, AddSubproperty };
  Kind kind;
  TripleRecord* rec = nullptr;
  TripleRecord* new_rec = nullptr;   // Update
  std::string file_source;           // FileLoad
  std::uint32_t sub = 0, super = 0;  // AddSubproperty (predicate ids)
};

} // namespace

struct Store::Impl {
  explicit Impl(Store* owner) : store(owner), literal_order(LitCmp{this}) {
    for (HashTable& t : tables) t.buckets.assign(16, nullptr);
  }

  ~Impl() {
    for (TripleRecord* r : arena) delete r;
  }

  struct LitCmp {
    using is_transparent = void;
    Impl* impl;

    bool operator()(std::uint32_t a, std::uint32_t b) const {
      const LiteralEntry& ea = impl->literals[a];
      const LiteralEntry& eb = impl->literals[b];
      if (ea.numeric && eb.numeric) {
        if (*ea.numeric != *eb.numeric) return *ea.numeric < *eb.numeric;
      } else if (ea.numeric.has_value() != eb.numeric.has_value()) {
        return ea.numeric.has_value();
      } else {
        if (int c = cmp_str(ea.fold, eb.fold)) return c < 0;
      }
      if (int c = cmp_str(ea.value.lexical, eb.value.lexical)) return c < 0;
      if (int c = cmp3(static_cast<int>(ea.value.kind), static_cast<int>(eb.value.kind)))
        return c < 0;
      return cmp_str(ea.value.qualifier, eb.value.qualifier) < 0;
    }
    bool operator()(std::uint32_t a, const NumericBound& b) const {
      const LiteralEntry& ea = impl->literals[a];
      return ea.numeric ? *ea.numeric < b.v : false;
    }
    bool operator()(const NumericBound& b, std::uint32_t a) const {
      const LiteralEntry& ea = impl->literals[a];
      return ea.numeric ? b.v < *ea.numeric : true;
    }
    bool operator()(std::uint32_t a, const TextBound& b) const {
      const LiteralEntry& ea = impl->literals[a];
      return ea.numeric ? true : ea.fold < b.fold;
    }
    bool operator()(const TextBound& b, std::uint32_t a) const {
      const LiteralEntry& ea = impl->literals[a];
      return ea.numeric ? false : b.fold < ea.fold;
    }
  };

  Store* store;
  InternTable resources;
  InternTable sources;

  // predicates
  std::deque<PredicateEntry> predicates;
  std::unordered_map<Handle, std::uint32_t> predicate_by_handle;
  mutable std::shared_mutex pred_mutex;

  // literal table
  std::deque<LiteralEntry> literals;
  std::vector<std::uint32_t> free_literal_ids;
  std::map<std::tuple<int, std::string, std::string>, std::uint32_t> literal_index;
  std::set<std::uint32_t, LitCmp> literal_order;

  // records
  std::unordered_set<TripleRecord*> arena;
  TripleRecord* all_head = nullptr;
  std::uint64_t triple_count = 0;
  HashTable tables[5];  // S, P, O, SP, PO

  std::unordered_map<Handle, std::uint64_t> subject_uses;
  std::unordered_map<std::uint64_t, std::uint64_t> object_uses;

  // reader gate
  mutable std::mutex gate_mutex;
  mutable std::condition_variable gate_cv;
  mutable int active_readers = 0;
  bool commit_pending = false;

  // transaction state (guarded by writer_mutex)
  std::recursive_mutex writer_mutex;
  std::vector<Action> actions;
  std::vector<std::size_t> marks;
  std::unordered_set<const TripleRecord*> pending_retracts;
  std::vector<std::unique_ptr<rdf::Literal>> staged_literals;
  std::uint64_t txn_counter = 0;
  std::vector<Action> followup;

  // monitors
  std::mutex monitor_mutex;
  std::vector<std::tuple<MonitorId, EventMask, MonitorFn>> monitors;
  MonitorId next_monitor_id = 1;

  // --- per-thread state ------------------------------------------------------
  struct TlState {
    int read_depth = 0;
    int open_iterators = 0;
    int txn_depth = 0;
    bool in_commit = false;
  };
  static TlState& tl(const Impl* impl) {
    thread_local std::unordered_map<const Impl*, TlState> m;
    return m[impl];
  }

  void acquire_read() const {
    TlState& t = tl(this);
    if (t.read_depth++ == 0 && !t.in_commit) {
      std::unique_lock lk(gate_mutex);
      gate_cv.wait(lk, [&] { return !commit_pending; });
      ++active_readers;
    }
  }

  void release_read() const {
    TlState& t = tl(this);
    if (--t.read_depth == 0 && !t.in_commit) {
      std::lock_guard lk(gate_mutex);
      --active_readers;
      gate_cv.notify_all();
    }
  }

  struct ReadPin {
    const Impl* impl;
    explicit ReadPin(const Impl* i) : impl(i) { impl->acquire_read(); }
    ~ReadPin() { impl->release_read(); }
    ReadPin(const ReadPin&) = delete;
  };

  bool owns_txn() const { return tl(this).txn_depth > 0; }

  void check_write_allowed() const {
    if (tl(this).open_iterators > 0)
      throw PermissionError("write attempted while a match iterator is open in this context");
  }

  // Runs a staging function inside the current transaction, an implicit one,
  // or the follow-up list when called from a monitor during commit.
  template <typename F>
  void run_write(F&& f) {
    check_write_allowed();
    if (tl(this).in_commit || owns_txn()) {
      f();
      return;
    }
    store->with_transaction([&] {
      f();
      return true;
    });
  }

  void stage(Action a) {
    if (tl(this).in_commit) {
      followup.push_back(std::move(a));
      return;
    }
    actions.push_back(std::move(a));
  }

  // --- predicates --------------------------------------------------------------
  std::uint32_t intern_predicate(Handle h) {
    {
      std::shared_lock lk(pred_mutex);
      auto it = predicate_by_handle.find(h);
      if (it != predicate_by_handle.end()) return it->second;
    }
    std::unique_lock lk(pred_mutex);
    auto it = predicate_by_handle.find(h);
    if (it != predicate_by_handle.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(predicates.size());
    predicates.push_back(PredicateEntry{h, {}, {}, id, 0});
    predicate_by_handle.emplace(h, id);
    return id;
  }

  std::optional<std::uint32_t> lookup_predicate(Handle h) const {
    std::shared_lock lk(pred_mutex);
    auto it = predicate_by_handle.find(h);
    if (it == predicate_by_handle.end()) return std::nullopt;
    return it->second;
  }

  std::uint32_t root_of(std::uint32_t pred_id) const { return predicates[pred_id].root; }

  // Deterministic root: follow the lowest-numbered parent; in a cycle the
  // lowest member id wins.
  std::uint32_t compute_root(std::uint32_t start) const {
    std::vector<std::uint32_t> path;
    std::uint32_t cur = start;
    for (;;) {
      const PredicateEntry& e = predicates[cur];
      if (e.parents.empty()) return cur;
      auto seen = std::find(path.begin(), path.end(), cur);
      if (seen != path.end()) return *std::min_element(seen, path.end());
      path.push_back(cur);
      cur = *std::min_element(e.parents.begin(), e.parents.end());
    }
  }

  // Recomputes roots for the weakly connected component around seed and
  // immediately rehashes records whose predicate root changed.  Runs during
  // commit, with readers drained.
  void reroot_component(std::uint32_t seed) {
    std::vector<std::uint32_t> component;
    std::unordered_set<std::uint32_t> visited;
    std::vector<std::uint32_t> work{seed};
    while (!work.empty()) {
      std::uint32_t n = work.back();
      work.pop_back();
      if (!visited.insert(n).second) continue;
      component.push_back(n);
      const PredicateEntry& e = predicates[n];
      for (std::uint32_t p : e.parents) work.push_back(p);
      for (std::uint32_t c : e.children) work.push_back(c);
    }
    std::unordered_map<std::uint32_t, std::uint32_t> old_roots;
    for (std::uint32_t n : component) {
      std::uint32_t nr = compute_root(n);
      if (nr != predicates[n].root) old_roots.emplace(n, predicates[n].root);
    }
    if (old_roots.empty()) return;

    std::vector<TripleRecord*> affected;
    for (TripleRecord* r = all_head; r; r = r->next[kChainAll])
      if (old_roots.count(r->predicate)) affected.push_back(r);
    for (TripleRecord* r : affected) {
      std::uint32_t old_root = old_roots.at(r->predicate);
      unlink_hash(kChainP, hash_p(old_root), r);
      unlink_hash(kChainSP, hash_sp(r->subject, old_root), r);
      unlink_hash(kChainPO, hash_po(old_root, r->object), r);
    }
    for (auto& [n, unused] : old_roots) predicates[n].root = compute_root(n);
    for (TripleRecord* r : affected) {
      std::uint32_t root = root_of(r->predicate);
      link_hash(kChainP, hash_p(root), r);
      link_hash(kChainSP, hash_sp(r->subject, root), r);
      link_hash(kChainPO, hash_po(root, r->object), r);
    }
  }

  void add_edge(std::uint32_t sub, std::uint32_t super) {
    PredicateEntry& e = predicates[sub];
    if (std::find(e.parents.begin(), e.parents.end(), super) != e.parents.end()) return;
    e.parents.push_back(super);
    predicates[super].children.push_back(sub);
    reroot_component(sub);
  }

  void remove_edge(std::uint32_t sub, std::uint32_t super) {
    PredicateEntry& e = predicates[sub];
    auto it = std::find(e.parents.begin(), e.parents.end(), super);
    if (it == e.parents.end()) return;
    e.parents.erase(it);
    auto& ch = predicates[super].children;
    ch.erase(std::find(ch.begin(), ch.end(), sub));
    reroot_component(sub);
  }

  // --- hashing ------------------------------------------------------------------
  std::uint64_t hash_s(Handle s) const { return mix64(s); }
  std::uint64_t hash_p(std::uint32_t root) const { return mix64(root + 0x1000000ull); }
  std::uint64_t hash_o(const ObjectRef& o) const { return mix64(o.packed() + 0x2000000ull); }
  std::uint64_t hash_sp(Handle s, std::uint32_t root) const { return mix64(s, root); }
  std::uint64_t hash_po(std::uint32_t root, const ObjectRef& o) const {
    return mix64(root + 0x3000000ull, o.packed());
  }

  std::uint64_t chain_key(Chain c, const TripleRecord* r) const {
    switch (c) {
      case kChainS: return hash_s(r->subject);
      case kChainP: return hash_p(root_of(r->predicate));
      case kChainO: return hash_o(r->object);
      case kChainSP: return hash_sp(r->subject, root_of(r->predicate));
      case kChainPO: return hash_po(root_of(r->predicate), r->object);
      default: throw Error("bad chain");
    }
  }

  void link_hash(Chain c, std::uint64_t key, TripleRecord* r) {
    HashTable& t = tables[c - 1];
    std::size_t idx = key & (t.buckets.size() - 1);
    r->next[c] = t.buckets[idx];
    t.buckets[idx] = r;
    ++t.entries;
  }

  void unlink_hash(Chain c, std::uint64_t key, TripleRecord* r) {
    HashTable& t = tables[c - 1];
    std::size_t idx = key & (t.buckets.size() - 1);
    TripleRecord** p = &t.buckets[idx];
    while (*p && *p != r) p = &(*p)->next[c];
    if (!*p) throw Error("internal: record missing from its index chain");
    *p = r->next[c];
    r->next[c] = nullptr;
    --t.entries;
  }

  void maybe_resize(Chain c) {
    HashTable& t = tables[c - 1];
    if (t.entries <= t.buckets.size() * 4) return;  // doubles past average chain length 4
    resize_table(c, t.buckets.size() * 2);
  }

  void resize_table(Chain c, std::size_t new_size) {
    HashTable& t = tables[c - 1];
    t.buckets.assign(new_size, nullptr);
    std::size_t entries = 0;
    for (TripleRecord* r = all_head; r; r = r->next[kChainAll]) {
      std::uint64_t key = chain_key(c, r);
      std::size_t idx = key & (t.buckets.size() - 1);
      r->next[c] = t.buckets[idx];
      t.buckets[idx] = r;
      ++entries;
    }
    t.entries = entries;
  }

  void link_record(TripleRecord* r) {
    r->next[kChainAll] = all_head;
    r->prev_all = nullptr;
    if (all_head) all_head->prev_all = r;
    all_head = r;
    link_hash(kChainS, hash_s(r->subject), r);
    link_hash(kChainP, hash_p(root_of(r->predicate)), r);
    link_hash(kChainO, hash_o(r->object), r);
    link_hash(kChainSP, hash_sp(r->subject, root_of(r->predicate)), r);
    link_hash(kChainPO, hash_po(root_of(r->predicate), r->object), r);
    for (Chain c : {kChainS, kChainP, kChainO, kChainSP, kChainPO}) maybe_resize(c);
    ++triple_count;
    ++predicates[r->predicate].triple_count;
    ++subject_uses[r->subject];
    ++object_uses[r->object.packed()];
  }

  void unlink_record(TripleRecord* r) {
    if (r->prev_all)
      r->prev_all->next[kChainAll] = r->next[kChainAll];
    else
      all_head = r->next[kChainAll];
    if (r->next[kChainAll]) r->next[kChainAll]->prev_all = r->prev_all;
    unlink_hash(kChainS, hash_s(r->subject), r);
    unlink_hash(kChainP, hash_p(root_of(r->predicate)), r);
    unlink_hash(kChainO, hash_o(r->object), r);
    unlink_hash(kChainSP, hash_sp(r->subject, root_of(r->predicate)), r);
    unlink_hash(kChainPO, hash_po(root_of(r->predicate), r->object), r);
    --triple_count;
    --predicates[r->predicate].triple_count;
    if (--subject_uses[r->subject] == 0) subject_uses.erase(r->subject);
    auto it = object_uses.find(r->object.packed());
    if (--it->second == 0) object_uses.erase(it);
    r->flags |= 1u;
  }

  // --- literals --------------------------------------------------------------------
  std::optional<std::uint32_t> find_literal(const rdf::Literal& l) const {
    auto it =
        literal_index.find(std::make_tuple(static_cast<int>(l.kind), l.qualifier, l.lexical));
    if (it == literal_index.end()) return std::nullopt;
    return it->second;
  }

  std::pair<std::uint32_t, bool> intern_literal(const rdf::Literal& l) {
    if (auto id = find_literal(l)) {
      ++literals[*id].use_count;
      return {*id, false};
    }
    std::uint32_t id;
    if (!free_literal_ids.empty()) {
      id = free_literal_ids.back();
      free_literal_ids.pop_back();
    } else {
      literals.emplace_back();
      id = static_cast<std::uint32_t>(literals.size() - 1);
    }
    LiteralEntry& e = literals[id];
    e.value = l;
    e.numeric = numeric_value(l);
    e.fold = ascii_fold(l.lexical);
    e.use_count = 1;
    e.live = true;
    literal_index.emplace(std::make_tuple(static_cast<int>(l.kind), l.qualifier, l.lexical), id);
    literal_order.insert(id);
    return {id, true};
  }

  bool release_literal(std::uint32_t id) {
    LiteralEntry& e = literals[id];
    if (--e.use_count > 0) return false;
    literal_order.erase(id);
    literal_index.erase(
        std::make_tuple(static_cast<int>(e.value.kind), e.value.qualifier, e.value.lexical));
    e.live = false;
    free_literal_ids.push_back(id);
    return true;
  }

  // --- record/term conversion --------------------------------------------------------
  rdf::Term subject_term(Handle h) const {
    std::string text(resources.resolve(h));
    if (term_is_bnode_text(text)) return rdf::BNode{std::move(text)};
    return rdf::Iri{std::move(text)};
  }

  rdf::Term object_term(const TripleRecord& r) const {
    if (r.staged_literal) return *r.staged_literal;
    if (r.object.kind == ObjectRef::Kind::Resource) return subject_term(r.object.id);
    return literals[r.object.id].value;
  }

  rdf::Triple record_triple(const TripleRecord& r) const {
    return rdf::Triple{subject_term(r.subject),
                       rdf::Iri{std::string(resources.resolve(predicates[r.predicate].iri))},
                       object_term(r)};
  }

  const rdf::Literal* record_literal(const TripleRecord& r) const {
    if (r.staged_literal) return r.staged_literal;
    if (r.object.kind == ObjectRef::Kind::Literal) return &literals[r.object.id].value;
    return nullptr;
  }

  // --- pattern evaluation ----------------------------------------------------
  bool literal_matches(const rdf::Literal& l, const LiteralQuery& q) const {
    switch (q.kind) {
      case LiteralQuery::Kind::Exact:
        return l == q.exact;
      case LiteralQuery::Kind::Prefix: {
        std::string fp = ascii_fold(q.text);
        std::string fl = ascii_fold(l.lexical);
        return fl.compare(0, fp.size(), fp) == 0;
      }
      case LiteralQuery::Kind::Range: {
        std::optional<double> v = numeric_value(l);
        return v && *v >= q.lo && *v <= q.hi;
      }
      case LiteralQuery::Kind::CaseInsensitive:
        return ascii_fold(l.lexical) == ascii_fold(q.text);
    }
    return false;
  }

  bool record_matches(const TripleRecord& r, const TriplePattern& p) const {
    if (p.subject && r.subject != *p.subject) return false;
    if (p.predicate && predicates[r.predicate].iri != *p.predicate) return false;
    if (p.source && r.source != *p.source) return false;
    if (p.object) {
      if (const Handle* h = std::get_if<Handle>(&*p.object)) {
        if (r.staged_literal || r.object.kind != ObjectRef::Kind::Resource || r.object.id != *h)
          return false;
      } else {
        const rdf::Literal* l = record_literal(r);
        if (!l || !literal_matches(*l, std::get<LiteralQuery>(*p.object))) return false;
      }
    }
    return true;
  }

  // Finds a live (or staged, in the owning transaction) record with equal
  // subject, predicate, object and source.
  const TripleRecord* find_same(Handle s, std::uint32_t pred_id, const TripleRecord& probe,
                                std::uint32_t source) const {
    auto same_object = [&](const TripleRecord& r) {
      const rdf::Literal* pl = probe.staged_literal
                                   ? probe.staged_literal
                                   : (probe.object.kind == ObjectRef::Kind::Literal
                                          ? &literals[probe.object.id].value
                                          : nullptr);
      const rdf::Literal* rl = record_literal(r);
      if (pl || rl) return pl && rl && *pl == *rl;
      return r.object == probe.object;
    };
    std::uint64_t key = hash_sp(s, root_of(pred_id));
    const HashTable& t = tables[kChainSP - 1];
    for (TripleRecord* r = t.buckets[key & (t.buckets.size() - 1)]; r; r = r->next[kChainSP]) {
      if (r->subject == s && r->predicate == pred_id && r->source == source && same_object(*r) &&
          !pending_retracts.count(r))
        return r;
    }
    if (owns_txn()) {
      for (const Action& a : actions) {
        const TripleRecord* r = a.kind == Action::Kind::Assert
                                    ? a.rec
                                    : (a.kind == Action::Kind::Update ? a.new_rec : nullptr);
        if (r && r->subject == s && r->predicate == pred_id && r->source == source &&
            same_object(*r) && !pending_retracts.count(r))
          return r;
      }
    }
    return nullptr;
  }

  // --- events -----------------------------------------------------------------------
  void fire(const Event& ev) {
    std::vector<std::tuple<MonitorId, EventMask, MonitorFn>> snapshot;
    {
      std::lock_guard lk(monitor_mutex);
      snapshot = monitors;
    }
    for (auto& [id, mask, fn] : snapshot) {
      if (!(mask & mask_of(ev.type))) continue;
      try {
        fn(ev);
      } catch (const std::exception&) {
        // monitor errors never roll back the committed transaction
      }
    }
  }

  Event triple_event(EventType type, const TripleRecord& r, std::uint64_t txn) const {
    Event ev;
    ev.type = type;
    ev.txn_id = txn;
    ev.triple = record_triple(r);
    ev.source = std::string(sources.resolve(r.source));
    ev.line = r.line;
    return ev;
  }

  // --- commit ----------------------------------------------------------------------
  void maybe_hierarchy_add(const TripleRecord* r) {
    if (r->object.kind != ObjectRef::Kind::Resource) return;
    if (resources.resolve(predicates[r->predicate].iri) != rdf::ns::rdfs_subpropertyof()) return;
    add_edge(intern_predicate(r->subject), intern_predicate(r->object.id));
  }

  void maybe_hierarchy_remove(const TripleRecord* r) {
    if (r->object.kind != ObjectRef::Kind::Resource) return;
    if (resources.resolve(predicates[r->predicate].iri) != rdf::ns::rdfs_subpropertyof()) return;
    if (auto sub = lookup_predicate(r->subject))
      if (auto sup = lookup_predicate(r->object.id)) remove_edge(*sub, *sup);
  }

  void bind_staged_literal(TripleRecord* r, std::uint64_t txn_id) {
    if (!r->staged_literal) return;
    auto [id, fresh] = intern_literal(*r->staged_literal);
    r->object = ObjectRef{ObjectRef::Kind::Literal, id};
    r->staged_literal = nullptr;
    if (fresh) {
      Event ev;
      ev.type = EventType::NewLiteral;
      ev.txn_id = txn_id;
      ev.literal = literals[id].value;
      fire(ev);
    }
  }

  void apply_assert(TripleRecord* r, std::uint64_t txn_id) {
    bind_staged_literal(r, txn_id);
    link_record(r);
    maybe_hierarchy_add(r);
    fire(triple_event(EventType::Assert, *r, txn_id));
  }

  void release_object_literal(const TripleRecord* r, std::uint64_t txn_id) {
    if (r->object.kind != ObjectRef::Kind::Literal) return;
    rdf::Literal dropped = literals[r->object.id].value;
    if (release_literal(r->object.id)) {
      Event ev;
      ev.type = EventType::OldLiteral;
      ev.txn_id = txn_id;
      ev.literal = std::move(dropped);
      fire(ev);
    }
  }

  void apply_retract(TripleRecord* r, std::uint64_t txn_id) {
    Event ev = triple_event(EventType::Retract, *r, txn_id);
    maybe_hierarchy_remove(r);
    unlink_record(r);
    fire(ev);
    release_object_literal(r, txn_id);
    arena.erase(r);
    delete r;
  }

  void apply_update(TripleRecord* old_rec, TripleRecord* new_rec, std::uint64_t txn_id) {
    Event ev = triple_event(EventType::Update, *old_rec, txn_id);
    bind_staged_literal(new_rec, txn_id);
    ev.new_triple = record_triple(*new_rec);
    maybe_hierarchy_remove(old_rec);
    unlink_record(old_rec);
    link_record(new_rec);
    maybe_hierarchy_add(new_rec);
    fire(ev);
    release_object_literal(old_rec, txn_id);
    arena.erase(old_rec);
    delete old_rec;
  }

  void apply_actions(std::uint64_t txn_id) {
    Event begin;
    begin.type = EventType::TxnBegin;
    begin.txn_id = txn_id;
    fire(begin);
    for (Action& a : actions) {
      switch (a.kind) {
        case Action::Kind::Assert: apply_assert(a.rec, txn_id); break;
        case Action::Kind::Retract: apply_retract(a.rec, txn_id); break;
        case Action::Kind::Update: apply_update(a.rec, a.new_rec, txn_id); break;
        case Action::Kind::FileLoad: {
          Event ev;
          ev.type = EventType::FileLoad;
          ev.txn_id = txn_id;
          ev.source = a.file_source;
          fire(ev);
          break;
        }
        case Action::Kind::AddSubproperty: add_edge(a.sub, a.super); break;
      }
    }
    Event end;
    end.type = EventType::TxnEnd;
    end.txn_id = txn_id;
    fire(end);
  }

  void commit() {
    while (!actions.empty()) {
      std::uint64_t txn_id = ++txn_counter;
      {
        std::unique_lock lk(gate_mutex);
        commit_pending = true;
        gate_cv.wait(lk, [&] { return active_readers == 0; });
      }
      tl(this).in_commit = true;
      try {
        apply_actions(txn_id);
      } catch (...) {
        tl(this).in_commit = false;
        std::lock_guard lk(gate_mutex);
        commit_pending = false;
        gate_cv.notify_all();
        throw;
      }
      tl(this).in_commit = false;
      {
        std::lock_guard lk(gate_mutex);
        commit_pending = false;
        gate_cv.notify_all();
      }
      actions.clear();
      pending_retracts.clear();
      staged_literals.clear();
      // monitor modifications batched during the commit form the next
      // transaction
      actions = std::move(followup);
      followup.clear();
    }
    pending_retracts.clear();
    staged_literals.clear();
  }

  void rollback_to_mark() {
    std::size_t mark = marks.back();
    for (std::size_t i = actions.size(); i-- > mark;) {
      Action& a = actions[i];
      switch (a.kind) {
        case Action::Kind::Assert:
          arena.erase(a.rec);
          delete a.rec;
          break;
        case Action::Kind::Retract:
          pending_retracts.erase(a.rec);
          break;
        case Action::Kind::Update:
          pending_retracts.erase(a.rec);
          arena.erase(a.new_rec);
          delete a.new_rec;
          break;
        default:
          break;
      }
    }
    actions.resize(mark);
  }
};

// ---------------------------------------------------------------------------
// MatchIterator

MatchIterator::MatchIterator(const Store* store, TriplePattern pattern)
    : store_(store), pattern_(std::move(pattern)) {
  const Store::Impl* impl = store_->impl_.get();
  impl->acquire_read();
  ++Store::Impl::tl(impl).open_iterators;

  overlay_ = impl->owns_txn() && !impl->actions.empty();

  std::optional<std::uint32_t> pred_id;
  if (pattern_.predicate) {
    pred_id = impl->lookup_predicate(*pattern_.predicate);
    if (!pred_id) {
      phase_ = overlay_ ? 1 : 2;  // unknown predicate: nothing committed can match
      return;
    }
  }

  const Handle* ores = pattern_.object ? std::get_if<Handle>(&*pattern_.object) : nullptr;
  const LiteralQuery* olit =
      pattern_.object ? std::get_if<LiteralQuery>(&*pattern_.object) : nullptr;

  std::optional<ObjectRef> oref;
  if (ores) {
    oref = ObjectRef{ObjectRef::Kind::Resource, *ores};
  } else if (olit && olit->kind == LiteralQuery::Kind::Exact) {
    if (auto lid = impl->find_literal(olit->exact)) {
      oref = ObjectRef{ObjectRef::Kind::Literal, *lid};
    } else {
      phase_ = overlay_ ? 1 : 2;  // literal not present in the table
      return;
    }
  }

  auto bucket_head = [&](Chain c, std::uint64_t key) -> const TripleRecord* {
    const HashTable& t = impl->tables[c - 1];
    return t.buckets[key & (t.buckets.size() - 1)];
  };

  const bool s = pattern_.subject.has_value();
  if (s && pred_id) {
    chain_ = kChainSP;  // fully instantiated queries also land here (+,+,-)
    cursor_ = bucket_head(kChainSP, impl->hash_sp(*pattern_.subject, impl->root_of(*pred_id)));
  } else if (s) {
    chain_ = kChainS;  // +,-,+ falls back to the S chain with object filtering
    cursor_ = bucket_head(kChainS, impl->hash_s(*pattern_.subject));
  } else if (pred_id && oref) {
    chain_ = kChainPO;
    cursor_ = bucket_head(kChainPO, impl->hash_po(impl->root_of(*pred_id), *oref));
  } else if (pred_id) {
    chain_ = kChainP;
    cursor_ = bucket_head(kChainP, impl->hash_p(impl->root_of(*pred_id)));
  } else if (oref) {
    chain_ = kChainO;
    cursor_ = bucket_head(kChainO, impl->hash_o(*oref));
  } else if (olit) {
    // literal-table driven: candidates in table order, each via its O chain
    chain_ = kChainO;
    for (std::uint32_t id : impl->literal_order)
      if (impl->literal_matches(impl->literals[id].value, *olit))
        literal_candidates_.push_back(id);
    cursor_ = nullptr;
  } else {
    chain_ = kChainAll;
    cursor_ = impl->all_head;
  }
}

MatchIterator::MatchIterator(MatchIterator&& o) noexcept
    : store_(o.store_), pattern_(std::move(o.pattern_)), phase_(o.phase_), cursor_(o.cursor_),
      chain_(o.chain_), literal_candidates_(std::move(o.literal_candidates_)),
      candidate_pos_(o.candidate_pos_), candidate_restrict_(o.candidate_restrict_),
      staged_pos_(o.staged_pos_), overlay_(o.overlay_), released_(o.released_) {
  o.released_ = true;
}

MatchIterator::~MatchIterator() {
  if (released_) return;
  const Store::Impl* impl = store_->impl_.get();
  --Store::Impl::tl(impl).open_iterators;
  impl->release_read();
}

const TripleRecord* MatchIterator::next() {
  const Store::Impl* impl = store_->impl_.get();
  for (;;) {
    if (phase_ == 0) {
      while (!cursor_ && candidate_pos_ < literal_candidates_.size()) {
        ObjectRef oref{ObjectRef::Kind::Literal, literal_candidates_[candidate_pos_++]};
        const HashTable& t = impl->tables[kChainO - 1];
        cursor_ = t.buckets[impl->hash_o(oref) & (t.buckets.size() - 1)];
        candidate_restrict_ = oref;
      }
      if (!cursor_) {
        phase_ = overlay_ ? 1 : 2;
        continue;
      }
      const TripleRecord* r = cursor_;
      cursor_ = cursor_->next[chain_];
      if (candidate_restrict_ && !(r->object == *candidate_restrict_)) continue;
      if (overlay_ && impl->pending_retracts.count(r)) continue;
      if (impl->record_matches(*r, pattern_)) return r;
      continue;
    }
    if (phase_ == 1) {
      const auto& actions = impl->actions;
      while (staged_pos_ < actions.size()) {
        const Action& a = actions[staged_pos_++];
        const TripleRecord* r = a.kind == Action::Kind::Assert
                                    ? a.rec
                                    : (a.kind == Action::Kind::Update ? a.new_rec : nullptr);
        if (!r || impl->pending_retracts.count(r)) continue;
        if (impl->record_matches(*r, pattern_)) return r;
      }
      phase_ = 2;
      continue;
    }
    return nullptr;
  }
}

// ---------------------------------------------------------------------------
// Store

Store::Store() : impl_(std::make_unique<Impl>(this)) {}
Store::~Store() = default;

Handle Store::intern(std::string_view text) { return impl_->resources.intern(text); }

std::optional<Handle> Store::lookup(std::string_view text) const {
  return impl_->resources.lookup(text);
}

std::string_view Store::resolve(Handle h) const { return impl_->resources.resolve(h); }

std::uint32_t Store::intern_source(std::string_view text) { return impl_->sources.intern(text); }

std::optional<std::uint32_t> Store::lookup_source(std::string_view text) const {
  return impl_->sources.lookup(text);
}

std::string_view Store::resolve_source(std::uint32_t id) const {
  return impl_->sources.resolve(id);
}

bool Store::with_transaction(const std::function<bool()>& body) {
  Impl& im = *impl_;
  std::unique_lock lk(im.writer_mutex);
  Impl::TlState& tls = Impl::tl(&im);
  ++tls.txn_depth;
  im.marks.push_back(im.actions.size());
  bool ok = false;
  try {
    ok = body();
  } catch (...) {
    im.rollback_to_mark();
    im.marks.pop_back();
    --tls.txn_depth;
    throw;
  }
  if (!ok) {
    im.rollback_to_mark();
    im.marks.pop_back();
    --tls.txn_depth;
    return false;
  }
  im.marks.pop_back();
  if (--tls.txn_depth == 0) im.commit();
  return true;
}

void Store::assert_triple(const rdf::Triple& t, std::string_view source, std::uint32_t line) {
  if (rdf::is_literal(t.subject)) throw Error("literal subject in assert");
  Impl& im = *impl_;
  im.run_write([&] {
    Handle s = im.resources.intern(rdf::is_iri(t.subject) ? std::get<rdf::Iri>(t.subject).value
                                                          : std::get<rdf::BNode>(t.subject).id);
    std::uint32_t pred = im.intern_predicate(im.resources.intern(t.predicate.value));
    std::uint32_t src = im.sources.intern(source);

    auto* rec = new TripleRecord();
    rec->subject = s;
    rec->predicate = pred;
    rec->source = src;
    rec->line = line;
    if (rdf::is_literal(t.object)) {
      im.staged_literals.push_back(
          std::make_unique<rdf::Literal>(std::get<rdf::Literal>(t.object)));
      rec->staged_literal = im.staged_literals.back().get();
    } else {
      Handle o = im.resources.intern(rdf::is_iri(t.object) ? std::get<rdf::Iri>(t.object).value
                                                           : std::get<rdf::BNode>(t.object).id);
      rec->object = ObjectRef{ObjectRef::Kind::Resource, o};
    }
    if (im.find_same(s, pred, *rec, src)) {
      delete rec;  // duplicate (s,p,o,source) is a no-op
      return;
    }
    im.arena.insert(rec);
    Action a;
    a.kind = Action::Kind::Assert;
    a.rec = rec;
    im.stage(std::move(a));
  });
}

std::size_t Store::retract_triples(const TriplePattern& pattern) {
  Impl& im = *impl_;
  std::size_t count = 0;
  im.run_write([&] {
    std::vector<TripleRecord*> victims;
    {
      MatchIterator it(this, pattern);
      while (const TripleRecord* r = it.next()) victims.push_back(const_cast<TripleRecord*>(r));
    }
    for (TripleRecord* r : victims) {
      if (im.pending_retracts.count(r)) continue;
      im.pending_retracts.insert(r);
      Action a;
      a.kind = Action::Kind::Retract;
      a.rec = r;
      im.stage(std::move(a));
      ++count;
    }
  });
  return count;
}

void Store::update_triple(const rdf::Triple& old_triple, const rdf::Triple& new_triple) {
  if (rdf::is_literal(new_triple.subject)) throw Error("literal subject in update");
  Impl& im = *impl_;
  im.run_write([&] {
    PatternBuild pb = build_pattern(old_triple.subject, old_triple.predicate, old_triple.object);
    TripleRecord* target = nullptr;
    if (pb.matchable) {
      MatchIterator it(this, pb.pattern);
      target = const_cast<TripleRecord*>(it.next());
    }
    if (!target) throw Error("update: no live triple matches " + rdf::triple_debug(old_triple));

    auto* rec = new TripleRecord();
    rec->subject = im.resources.intern(rdf::is_iri(new_triple.subject)
                                           ? std::get<rdf::Iri>(new_triple.subject).value
                                           : std::get<rdf::BNode>(new_triple.subject).id);
    rec->predicate = im.intern_predicate(im.resources.intern(new_triple.predicate.value));
    rec->source = target->source;
    rec->line = target->line;
    if (rdf::is_literal(new_triple.object)) {
      im.staged_literals.push_back(
          std::make_unique<rdf::Literal>(std::get<rdf::Literal>(new_triple.object)));
      rec->staged_literal = im.staged_literals.back().get();
    } else {
      rec->object = ObjectRef{ObjectRef::Kind::Resource,
                              im.resources.intern(rdf::is_iri(new_triple.object)
                                                      ? std::get<rdf::Iri>(new_triple.object).value
                                                      : std::get<rdf::BNode>(new_triple.object).id)};
    }
    im.arena.insert(rec);
    im.pending_retracts.insert(target);
    Action a;
    a.kind = Action::Kind::Update;
    a.rec = target;
    a.new_rec = rec;
    im.stage(std::move(a));
  });
}

void Store::add_subproperty(Handle property, Handle super) {
  Impl& im = *impl_;
  im.run_write([&] {
    Action a;
    a.kind = Action::Kind::AddSubproperty;
    a.sub = im.intern_predicate(property);
    a.super = im.intern_predicate(super);
    im.stage(std::move(a));
  });
}

void Store::emit_file_load(std::string_view source) {
  Impl& im = *impl_;
  im.run_write([&] {
    Action a;
    a.kind = Action::Kind::FileLoad;
    a.file_source = std::string(source);
    im.stage(std::move(a));
  });
}

MatchIterator Store::match(const TriplePattern& pattern) const {
  return MatchIterator(this, pattern);
}

std::vector<rdf::Triple> Store::match_triples(const TriplePattern& pattern) const {
  std::vector<rdf::Triple> out;
  MatchIterator it = match(pattern);
  while (const TripleRecord* r = it.next()) out.push_back(impl_->record_triple(*r));
  return out;
}

std::vector<StoredLiteral> Store::literal_search_prefix(std::string_view prefix) const {
  Impl::ReadPin pin(impl_.get());
  std::vector<StoredLiteral> out;
  std::string fp = ascii_fold(prefix);
  // numerics precede the text section and are not ordered by text: scan them;
  // the text section is a bounded ordered walk
  for (std::uint32_t id : impl_->literal_order) {
    const LiteralEntry& e = impl_->literals[id];
    if (!e.numeric) break;
    if (e.fold.rfind(fp, 0) == 0) out.push_back({e.value, e.numeric, e.use_count});
  }
  for (auto it = impl_->literal_order.lower_bound(TextBound{fp});
       it != impl_->literal_order.end(); ++it) {
    const LiteralEntry& e = impl_->literals[*it];
    if (e.fold.rfind(fp, 0) != 0) break;
    out.push_back({e.value, e.numeric, e.use_count});
  }
  return out;
}

std::vector<StoredLiteral> Store::literal_search_range(double lo, double hi) const {
  if (lo > hi) throw Error("invalid literal range: lo > hi");
  Impl::ReadPin pin(impl_.get());
  std::vector<StoredLiteral> out;
  for (auto it = impl_->literal_order.lower_bound(NumericBound{lo});
       it != impl_->literal_order.end(); ++it) {
    const LiteralEntry& e = impl_->literals[*it];
    if (!e.numeric || *e.numeric > hi) break;
    out.push_back({e.value, e.numeric, e.use_count});
  }
  return out;
}

std::vector<StoredLiteral> Store::literal_search_case_exact(std::string_view text) const {
  Impl::ReadPin pin(impl_.get());
  std::vector<StoredLiteral> out;
  std::string fp = ascii_fold(text);
  for (std::uint32_t id : impl_->literal_order) {
    const LiteralEntry& e = impl_->literals[id];
    if (!e.numeric) break;
    if (e.value.lexical == text) out.push_back({e.value, e.numeric, e.use_count});
  }
  for (auto it = impl_->literal_order.lower_bound(TextBound{fp});
       it != impl_->literal_order.end(); ++it) {
    const LiteralEntry& e = impl_->literals[*it];
    if (e.fold != fp) break;
    if (e.value.lexical == text) out.push_back({e.value, e.numeric, e.use_count});
  }
  return out;
}

std::vector<StoredLiteral> Store::all_literals() const {
  Impl::ReadPin pin(impl_.get());
  std::vector<StoredLiteral> out;
  for (std::uint32_t id : impl_->literal_order) {
    const LiteralEntry& e = impl_->literals[id];
    out.push_back({e.value, e.numeric, e.use_count});
  }
  return out;
}

Statistics Store::statistics() const {
  Impl::ReadPin pin(impl_.get());
  Statistics st;
  st.triple_count = impl_->triple_count;
  st.distinct_subjects = impl_->subject_uses.size();
  st.distinct_objects = impl_->object_uses.size();
  {
    std::shared_lock lk(impl_->pred_mutex);
    for (const PredicateEntry& e : impl_->predicates)
      if (e.triple_count > 0)
        st.per_predicate.emplace_back(std::string(impl_->resources.resolve(e.iri)),
                                      e.triple_count);
  }
  static const char* names[5] = {"S", "P", "O", "SP", "PO"};
  for (int i = 0; i < 5; ++i)
    st.chains.push_back(
        IndexStats{names[i], impl_->tables[i].buckets.size(), impl_->tables[i].entries});
  return st;
}

std::uint64_t Store::triple_count() const {
  Impl::ReadPin pin(impl_.get());
  return impl_->triple_count;
}

std::uint64_t Store::predicate_triple_count(Handle predicate) const {
  Impl::ReadPin pin(impl_.get());
  auto id = impl_->lookup_predicate(predicate);
  return id ? impl_->predicates[*id].triple_count : 0;
}

std::uint64_t Store::distinct_subject_count() const {
  Impl::ReadPin pin(impl_.get());
  return impl_->subject_uses.size();
}

std::uint64_t Store::distinct_object_count() const {
  Impl::ReadPin pin(impl_.get());
  return impl_->object_uses.size();
}

std::optional<PredicateInfo> Store::predicate_info(Handle predicate) const {
  Impl::ReadPin pin(impl_.get());
  auto id = impl_->lookup_predicate(predicate);
  if (!id) return std::nullopt;
  const PredicateEntry& e = impl_->predicates[*id];
  PredicateInfo info;
  info.iri = e.iri;
  info.root_iri = impl_->predicates[e.root].iri;
  info.triple_count = e.triple_count;
  for (std::uint32_t p : e.parents) info.parents.push_back(impl_->predicates[p].iri);
  return info;
}

std::vector<Handle> Store::predicates_in_use() const {
  Impl::ReadPin pin(impl_.get());
  std::shared_lock lk(impl_->pred_mutex);
  std::vector<Handle> out;
  for (const PredicateEntry& e : impl_->predicates)
    if (e.triple_count > 0) out.push_back(e.iri);
  return out;
}

std::vector<Handle> Store::subproperty_children(Handle property) const {
  Impl::ReadPin pin(impl_.get());
  auto id = impl_->lookup_predicate(property);
  std::vector<Handle> out;
  if (!id) return out;
  for (std::uint32_t c : impl_->predicates[*id].children) out.push_back(impl_->predicates[c].iri);
  return out;
}

void Store::each_subject(const std::function<void(Handle)>& fn) const {
  Impl::ReadPin pin(impl_.get());
  for (const auto& [h, n] : impl_->subject_uses) fn(h);
}

rdf::Term Store::object_term(const TripleRecord& rec) const { return impl_->object_term(rec); }

rdf::Triple Store::record_triple(const TripleRecord& rec) const {
  return impl_->record_triple(rec);
}

Handle Store::predicate_handle(std::uint32_t predicate_id) const {
  return impl_->predicates[predicate_id].iri;
}

Store::PatternBuild Store::build_pattern(const std::optional<rdf::Term>& s,
                                         const std::optional<rdf::Iri>& p,
                                         const std::optional<rdf::Term>& o,
                                         const std::optional<std::string>& source) const {
  PatternBuild out;
  if (s) {
    if (rdf::is_literal(*s)) throw Error("literal subject in pattern");
    std::string_view text =
        rdf::is_iri(*s) ? std::get<rdf::Iri>(*s).value : std::get<rdf::BNode>(*s).id;
    auto h = impl_->resources.lookup(text);
    if (!h) {
      out.matchable = false;
      return out;
    }
    out.pattern.subject = *h;
  }
  if (p) {
    auto h = impl_->resources.lookup(p->value);
    if (!h) {
      out.matchable = false;
      return out;
    }
    out.pattern.predicate = *h;
  }
  if (o) {
    if (rdf::is_literal(*o)) {
      out.pattern.object = LiteralQuery::exact_value(std::get<rdf::Literal>(*o));
    } else {
      std::string_view text =
          rdf::is_iri(*o) ? std::get<rdf::Iri>(*o).value : std::get<rdf::BNode>(*o).id;
      auto h = impl_->resources.lookup(text);
      if (!h) {
        out.matchable = false;
        return out;
      }
      out.pattern.object = *h;
    }
  }
  if (source) {
    auto id = impl_->sources.lookup(*source);
    if (!id) {
      out.matchable = false;
      return out;
    }
    out.pattern.source = *id;
  }
  return out;
}

MonitorId Store::monitor(MonitorFn fn, EventMask mask) {
  std::lock_guard lk(impl_->monitor_mutex);
  MonitorId id = impl_->next_monitor_id++;
  impl_->monitors.emplace_back(id, mask, std::move(fn));
  return id;
}

void Store::unmonitor(MonitorId id) {
  std::lock_guard lk(impl_->monitor_mutex);
  auto& ms = impl_->monitors;
  ms.erase(
      std::remove_if(ms.begin(), ms.end(), [&](const auto& m) { return std::get<0>(m) == id; }),
      ms.end());
}

void Store::force_chain_resize() {
  Impl& im = *impl_;
  std::unique_lock lk(im.writer_mutex);
  {
    std::unique_lock g(im.gate_mutex);
    im.commit_pending = true;
    im.gate_cv.wait(g, [&] { return im.active_readers == 0; });
  }
  for (Chain c : {kChainS, kChainP, kChainO, kChainSP, kChainPO})
    im.resize_table(c, im.tables[c - 1].buckets.size() * 2);
  {
    std::lock_guard g(im.gate_mutex);
    im.commit_pending = false;
    im.gate_cv.notify_all();
  }
}

} // namespace triplekit::store
