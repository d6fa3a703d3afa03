#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triplekit/error.hpp"
#include "triplekit/rdf.hpp"
#include "triplekit/store.hpp"

namespace triplekit::persist {

class LoadError : public Error {
public:
  using Error::Error;
};

// --- quick-load snapshot format ("TKQL") -------------------------------------
//
//   magic "TKQL" | u32le version | source name | string table | triples |
//   u64le trailing record count
//
// Strings are varint length + UTF-8 bytes; triples reference string-table
// indices.  No host-dependent fields, so files decode identically on any
// byte order and word size.

inline constexpr char kSnapshotMagic[4] = {'T', 'K', 'Q', 'L'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SourceTriple {
  rdf::Triple triple;
  std::uint32_t line = 1;
  bool operator==(const SourceTriple&) const = default;
};

struct SnapshotData {
  std::string source;
  std::vector<SourceTriple> triples;
};

void write_snapshot(std::ostream& out, std::string_view source,
                    std::span<const SourceTriple> triples);
SnapshotData read_snapshot(std::istream& in, const std::string& name_for_errors);

// --- journal -----------------------------------------------------------------
//
// One record per line, in a neutral term syntax with quoted strings:
//
//   begin(3, 1723298000).
//   assert("s", "p", plain("x"), 12).
//   retract("s", "p", "o").
//   update(triple("s", "p", "o"), triple("s", "p", "o2")).
//   end(3).
//
// Resources (including blank nodes) are bare quoted strings; literals use
// plain/1, lang/2 and type/2.

struct JournalRecord {
  enum class Kind { Begin, End, Assert, Retract, Update };
  Kind kind = Kind::Begin;
  std::uint64_t txn = 0;
  std::int64_t time = 0;  // Begin only
  rdf::Triple triple;     // Assert/Retract/Update (old)
  rdf::Triple new_triple; // Update
  std::uint32_t line = 0; // Assert
};

std::string encode_journal_record(const JournalRecord& rec);
JournalRecord parse_journal_record(std::string_view line);

std::string encode_source_filename(std::string_view source);
std::string decode_source_filename(std::string_view filename);

inline constexpr std::string_view kSnapshotExt = ".tkq";
inline constexpr std::string_view kJournalExt = ".tkj";

struct Options {
  bool fsync = true;
  std::function<std::int64_t()> clock;  // journal timestamps; defaults to wall time
};

// Durable storage per source: a binary snapshot plus a textual journal,
// maintained through a store monitor while attached.
class Persistence {
public:
  explicit Persistence(store::Store& store, Options opts = {});
  ~Persistence();
  Persistence(const Persistence&) = delete;
  Persistence& operator=(const Persistence&) = delete;

  // Loads all sources found in the directory (snapshot, then journal replay,
  // one store transaction per journalled transaction), then starts
  // journalling subsequent commits.  Returns warnings for skipped partial
  // trailing transactions.
  std::vector<std::string> attach(const std::filesystem::path& directory);

  // Atomically replaces the snapshot for one source and truncates its
  // journal.
  void save_snapshot(std::string_view source);

  void detach();
  bool attached() const;
  const std::filesystem::path& directory() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct VerifyReport {
  std::uint64_t sources = 0;
  std::uint64_t triples = 0;
  std::vector<std::string> warnings;
};

// Loads a persistence directory into a scratch store and reports on it.
VerifyReport verify_directory(const std::filesystem::path& directory);

} // namespace triplekit::persist
