#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "triplekit/http.hpp"
#include "triplekit/persist.hpp"
#include "triplekit/query.hpp"
#include "triplekit/store.hpp"

namespace triplekit::service {

struct ServiceConfig {
  int port = 8080;  // 0 picks an ephemeral port
  int workers = 4;
  std::optional<std::filesystem::path> db_dir;
  std::string default_entailment = "rdfs";
  bool admin = true;
};

// The assembled server: machine endpoints POST /query, POST /load,
// POST /unload and GET /statistics, plus the human-centred admin pages.
class Service {
public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;

  int port() const;
  store::Store& store();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Result-table XML schema (fixed): <resulttable> with <columns><col>…</col>
// …</columns> and one <row> of <cell kind="iri|bnode|literal" [lang|datatype]>
// per answer.  Written by direct emission with the markup quoting primitives.
void write_result_cell(std::ostream& out, const rdf::Term& value);

} // namespace triplekit::service
