#include "triplekit/service.hpp"

#include <set>
#include <sstream>

#include "doctest.h"
#include "support/graph_iso.hpp"

using namespace triplekit;
using namespace triplekit::service;
using http::ClientConnection;
using http::Headers;

namespace {

const std::string kArt = "http://example.org/art#";

std::string bnode_document() {
  return "<rdf:RDF xmlns:rdf=\"http://www.w3.org/1999/02/22-rdf-syntax-ns#\"\n"
         "         xmlns=\"" + kArt + "\">\n"
         "  <rdf:Description rdf:about=\"http://example.org/paintings/night-watch\">\n"
         "    <dimension>\n"
         "       <Dimension width=\"45\" height=\"50\"/>\n"
         "    </dimension>\n"
         "  </rdf:Description>\n"
         "</rdf:RDF>\n";
}

std::string entailment_document() {
  return "<rdf:RDF xmlns:rdf=\"http://www.w3.org/1999/02/22-rdf-syntax-ns#\"\n"
         "         xmlns:rdfs=\"http://www.w3.org/2000/01/rdf-schema#\"\n"
         "         xmlns=\"http://example.org/people#\">\n"
         "  <rdf:Description rdf:about=\"http://example.org/people#mary\">\n"
         "    <rdf:type rdf:resource=\"http://example.org/people#woman\"/>\n"
         "  </rdf:Description>\n"
         "  <rdfs:Class rdf:about=\"http://example.org/people#woman\">\n"
         "    <rdfs:subClassOf rdf:resource=\"http://example.org/people#human\"/>\n"
         "  </rdfs:Class>\n"
         "  <rdfs:Class rdf:about=\"http://example.org/people#human\"/>\n"
         "</rdf:RDF>\n";
}

struct Fixture {
  Service service;

  Fixture() : service(make_config()) {}

  static ServiceConfig make_config() {
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.workers = 3;
    cfg.default_entailment = "rdfs";
    return cfg;
  }

  ClientConnection connect() { return ClientConnection("127.0.0.1", service.port()); }

  ClientConnection::SimpleResponse post_form(
      ClientConnection& c, const std::string& path,
      std::span<const std::pair<std::string, std::string>> params) {
    return c.request("POST", path, {}, http::form_encode(params),
                     "application/x-www-form-urlencoded");
  }
};

std::string mary_query() {
  return "USING rdf = <http://www.w3.org/1999/02/22-rdf-syntax-ns#> "
         "SELECT X WHERE (<http://example.org/people#mary>, rdf:type, X)";
}

} // namespace

TEST_CASE("load, statistics and unload round trip") {
  Fixture fx;
  ClientConnection c = fx.connect();

  auto load = c.request("POST", "/load?source=paintings", {}, bnode_document(),
                        "application/rdf+xml");
  REQUIRE(load.status == 200);
  CHECK(load.body.find("triples=\"4\"") != std::string::npos);

  auto stats = c.request("GET", "/statistics");
  REQUIRE(stats.status == 200);
  CHECK(stats.body.find("<triples>4</triples>") != std::string::npos);
  CHECK(stats.body.find("paintings") != std::string::npos);

  auto unload = c.request("POST", "/unload?source=paintings");
  REQUIRE(unload.status == 200);
  CHECK(unload.body.find("triples=\"4\"") != std::string::npos);
  auto stats2 = c.request("GET", "/statistics");
  CHECK(stats2.body.find("<triples>0</triples>") != std::string::npos);

  // unloading an unknown source removes nothing and succeeds
  auto unload2 = c.request("POST", "/unload?source=unknown");
  CHECK(unload2.status == 200);
  CHECK(unload2.body.find("triples=\"0\"") != std::string::npos);
}

TEST_CASE("load failure rolls the transaction back") {
  Fixture fx;
  ClientConnection c = fx.connect();
  std::string bad = bnode_document();
  bad += "<trailing-garbage>";  // malformed tail
  auto r = c.request("POST", "/load?source=bad", {}, bad, "application/rdf+xml");
  CHECK(r.status == 400);
  auto stats = c.request("GET", "/statistics");
  CHECK(stats.body.find("<triples>0</triples>") != std::string::npos);
  CHECK(fx.service.store().triple_count() == 0);
}

TEST_CASE("query in the result-table XML format") {
  Fixture fx;
  ClientConnection c = fx.connect();
  REQUIRE(c.request("POST", "/load?source=people", {}, entailment_document(),
                    "application/rdf+xml")
              .status == 200);

  std::pair<std::string, std::string> params[] = {
      {"query", mary_query()}, {"entailment", "rdfs"}, {"format", "xml"}};
  auto r = fx.post_form(c, "/query", params);
  REQUIRE(r.status == 200);
  CHECK(r.headers.get("Content-Type") == "application/xml");
  CHECK(r.body.find("<resulttable>") == 0);
  CHECK(r.body.find("<columns><col>X</col></columns>") != std::string::npos);
  CHECK(r.body.find("<cell kind=\"iri\">http://example.org/people#woman</cell>") !=
        std::string::npos);
  CHECK(r.body.find("<cell kind=\"iri\">http://example.org/people#human</cell>") !=
        std::string::npos);

  // raw entailment yields only the stated type
  std::pair<std::string, std::string> raw_params[] = {
      {"query", mary_query()}, {"entailment", "raw"}, {"format", "xml"}};
  auto raw = fx.post_form(c, "/query", raw_params);
  CHECK(raw.body.find("woman") != std::string::npos);
  CHECK(raw.body.find("human") == std::string::npos);

  // the emitted XML reparses cleanly
  CHECK_NOTHROW(markup::parse_tree(r.body));
}

TEST_CASE("query results agree between xml and html formats") {
  Fixture fx;
  ClientConnection c = fx.connect();
  REQUIRE(c.request("POST", "/load?source=people", {}, entailment_document(),
                    "application/rdf+xml")
              .status == 200);

  std::pair<std::string, std::string> xml_params[] = {{"query", mary_query()},
                                                      {"format", "xml"}};
  std::pair<std::string, std::string> html_params[] = {{"query", mary_query()},
                                                       {"format", "html"}};
  auto xml = fx.post_form(c, "/query", xml_params);
  auto html = fx.post_form(c, "/query", html_params);
  REQUIRE(xml.status == 200);
  REQUIRE(html.status == 200);

  // extract cell values from both representations, in order
  auto extract = [](const std::string& body, const std::string& open,
                    const std::string& close) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = body.find(open, pos)) != std::string::npos) {
      std::size_t start = body.find('>', pos) + 1;
      std::size_t end = body.find(close, start);
      out.push_back(body.substr(start, end - start));
      pos = end;
    }
    return out;
  };
  std::vector<std::string> xml_cells = extract(xml.body, "<cell", "</cell>");
  std::vector<std::string> html_cells = extract(html.body, "<td", "</td>");
  CHECK(xml_cells == html_cells);
  CHECK(xml_cells.size() == 2);
}

TEST_CASE("rdfxml format returns the matched subgraph") {
  Fixture fx;
  ClientConnection c = fx.connect();
  REQUIRE(c.request("POST", "/load?source=paintings", {}, bnode_document(),
                    "application/rdf+xml")
              .status == 200);
  std::pair<std::string, std::string> params[] = {
      {"query", "USING a = <" + kArt + "> SELECT X, Y WHERE (X, a:width, Y)"},
      {"entailment", "raw"},
      {"format", "rdfxml"}};
  auto r = fx.post_form(c, "/query", params);
  REQUIRE(r.status == 200);
  CHECK(r.headers.get("Content-Type") == "application/rdf+xml");
  std::vector<rdf::Triple> back = rdf::load_rdf(r.body, "reply");
  REQUIRE(back.size() == 1);
  CHECK(back[0].predicate.value == kArt + "width");
}

TEST_CASE("malformed queries give a 400 error document naming the position") {
  Fixture fx;
  ClientConnection c = fx.connect();
  std::pair<std::string, std::string> params[] = {{"query", "SELECT WHERE"}};
  auto r = fx.post_form(c, "/query", params);
  CHECK(r.status == 400);
  CHECK(r.body.find("<error") != std::string::npos);
  CHECK(r.body.find("line=\"1\"") != std::string::npos);
  CHECK(r.body.find("column=\"8\"") != std::string::npos);

  std::pair<std::string, std::string> bad_ent[] = {{"query", "SELECT X WHERE (a, b, X)"},
                                                   {"entailment", "nope2"}};
  auto r2 = fx.post_form(c, "/query", bad_ent);
  CHECK(r2.status == 400);
  CHECK(r2.body.find("entailment") != std::string::npos);
}

TEST_CASE("admin pages render, reparse cleanly, and round-trip through endpoints") {
  Fixture fx;
  ClientConnection c = fx.connect();
  REQUIRE(c.request("POST", "/load?source=people", {}, entailment_document(),
                    "application/rdf+xml")
              .status == 200);

  const char* pages[] = {"/admin", "/admin/query", "/admin/load", "/admin/sources",
                         "/admin/statistics"};
  for (const char* page : pages) {
    CAPTURE(page);
    auto r = c.request("GET", page);
    REQUIRE(r.status == 200);
    CHECK(r.headers.get("Content-Type") == "text/html");
    // crawl-and-parse: every admin page is well-formed markup
    markup::ParseOptions po;
    po.mode = markup::ParseMode::HtmlSubset;
    CHECK_NOTHROW(markup::parse_tree(r.body, po));
  }

  // the admin query form posts to the machine endpoint with format=html
  std::pair<std::string, std::string> params[] = {
      {"query", mary_query()}, {"entailment", "rdfs"}, {"format", "html"}};
  auto r = fx.post_form(c, "/query", params);
  REQUIRE(r.status == 200);
  CHECK(r.body.find("<td>http://example.org/people#woman</td>") != std::string::npos);
  CHECK(r.body.find("<td>http://example.org/people#human</td>") != std::string::npos);

  // the sources page lists the loaded source with an unload form
  auto sources = c.request("GET", "/admin/sources");
  CHECK(sources.body.find("people") != std::string::npos);
  CHECK(sources.body.find("action=\"/unload\"") != std::string::npos);
}

TEST_CASE("load/unload leave the store state unchanged") {
  Fixture fx;
  ClientConnection c = fx.connect();
  REQUIRE(c.request("POST", "/load?source=base", {}, entailment_document(),
                    "application/rdf+xml")
              .status == 200);
  std::uint64_t before = fx.service.store().triple_count();
  REQUIRE(c.request("POST", "/load?source=tmp", {}, bnode_document(), "application/rdf+xml")
              .status == 200);
  REQUIRE(c.request("POST", "/unload?source=tmp").status == 200);
  CHECK(fx.service.store().triple_count() == before);
}

TEST_CASE("session demo and forbidden routes") {
  Fixture fx;
  ClientConnection c = fx.connect();
  auto first = c.request("GET", "/demo/session");
  REQUIRE(first.status == 200);
  CHECK(first.body.find("visit 1") != std::string::npos);
  std::string cookie_line = first.headers.get("Set-Cookie").value_or("");
  Headers h;
  h.add("Cookie", cookie_line.substr(0, cookie_line.find(';')));
  auto second = c.request("GET", "/demo/session", h);
  CHECK(second.body.find("visit 2") != std::string::npos);

  CHECK(c.request("GET", "/private").status == 403);
  CHECK(c.request("GET", "/nowhere").status == 404);
}

TEST_CASE("persistence directory wiring: state survives a service restart") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / ("tk_service_db_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  {
    ServiceConfig cfg = Fixture::make_config();
    cfg.db_dir = dir;
    Service svc(cfg);
    ClientConnection c("127.0.0.1", svc.port());
    REQUIRE(c.request("POST", "/load?source=people", {}, entailment_document(),
                      "application/rdf+xml")
                .status == 200);
  }
  {
    ServiceConfig cfg = Fixture::make_config();
    cfg.db_dir = dir;
    Service svc(cfg);
    ClientConnection c("127.0.0.1", svc.port());
    auto stats = c.request("GET", "/statistics");
    CHECK(stats.body.find("<triples>4</triples>") != std::string::npos);
    std::pair<std::string, std::string> params[] = {{"query", mary_query()}, {"format", "xml"}};
    auto r = c.request("POST", "/query", {},
                       http::form_encode(params), "application/x-www-form-urlencoded");
    CHECK(r.body.find("woman") != std::string::npos);
    CHECK(r.body.find("human") != std::string::npos);
  }
  fs::remove_all(dir);
}
