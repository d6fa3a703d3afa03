#include "triplekit/service.hpp"

#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "triplekit/htmlgen.hpp"
#include "triplekit/rdf.hpp"

namespace triplekit::service {

using http::ParamSpec;
using http::ReplyCondition;
using http::Request;
using markup::quote_attribute;
using markup::quote_text;

void write_result_cell(std::ostream& out, const rdf::Term& value) {
  if (const rdf::Iri* iri = std::get_if<rdf::Iri>(&value)) {
    out << "<cell kind=\"iri\">" << quote_text(iri->value) << "</cell>";
  } else if (const rdf::BNode* b = std::get_if<rdf::BNode>(&value)) {
    out << "<cell kind=\"bnode\">" << quote_text(b->id) << "</cell>";
  } else {
    const rdf::Literal& l = std::get<rdf::Literal>(value);
    out << "<cell kind=\"literal\"";
    if (l.kind == rdf::LiteralKind::Lang) out << " lang=\"" << quote_attribute(l.qualifier) << '"';
    if (l.kind == rdf::LiteralKind::Typed)
      out << " datatype=\"" << quote_attribute(l.qualifier) << '"';
    out << '>' << quote_text(l.lexical) << "</cell>";
  }
}

namespace {

// plain cell text for the HTML format; must agree with the XML cells
std::string cell_text(const rdf::Term& value) {
  if (const rdf::Iri* iri = std::get_if<rdf::Iri>(&value)) return iri->value;
  if (const rdf::BNode* b = std::get_if<rdf::BNode>(&value)) return b->id;
  return std::get<rdf::Literal>(value).lexical;
}

struct QueryParams {
  std::string text;
  std::string entailment;
  std::string format;
};

} // namespace

struct Service::Impl {
  ServiceConfig config;
  store::Store store;
  std::unique_ptr<persist::Persistence> persistence;
  std::unique_ptr<http::Server> server;

  explicit Impl(ServiceConfig cfg) : config(std::move(cfg)) {
    if (config.db_dir) {
      persistence = std::make_unique<persist::Persistence>(store);
      std::filesystem::create_directories(*config.db_dir);
      persistence->attach(*config.db_dir);
    }
    http::ServerOptions opts;
    opts.workers = config.workers;
    server = std::make_unique<http::Server>(
        config.port, [this](Request& req, std::ostream& out) { return dispatch(req, out); },
        opts);
  }

  // --- shared bits -----------------------------------------------------------

  [[noreturn]] void reply_error_xml(std::ostream& out, int status, const std::string& message,
                                    int line = 0, int column = 0) {
    std::ostringstream body;
    body << "<error";
    if (line) body << " line=\"" << line << "\" column=\"" << column << "\"";
    body << '>' << quote_text(message) << "</error>\n";
    out << "Status: " << status << "\nContent-type: application/xml\n\n" << body.str();
    throw Done{};
  }

  struct Done {};  // handler finished after writing a full CGI reply

  std::string entailment_param(const Request& req) {
    std::string name = req.param("entailment").value_or(config.default_entailment);
    if (!query::EntailmentRegistry::global().known(name)) return "";
    return name;
  }

  std::vector<std::pair<std::string, std::uint64_t>> source_counts() {
    std::map<std::string, std::uint64_t> counts;
    store::MatchIterator it = store.match({});
    while (const store::TripleRecord* r = it.next())
      ++counts[std::string(store.resolve_source(r->source))];
    return {counts.begin(), counts.end()};
  }

  // --- machine endpoints -------------------------------------------------------

  void handle_query(Request& req, std::ostream& out) {
    ParamSpec specs[] = {
        ParamSpec("query"),
        ParamSpec("entailment").opt().fallback(config.default_entailment),
        ParamSpec("format").opt().fallback("xml").choices({"xml", "rdfxml", "html"}),
    };
    http::Params params = http::http_parameters(req, specs);
    const std::string& entailment = params.at("entailment").text;
    if (!query::EntailmentRegistry::global().known(entailment))
      reply_error_xml(out, 400, "unknown entailment '" + entailment + "'");

    query::Query q;
    try {
      q = query::parse_query(params.at("query").text, entailment);
    } catch (const query::QueryError& e) {
      reply_error_xml(out, 400, e.what(), e.line(), e.column());
    }
    const std::string& format = params.at("format").text;
    if (format == "xml") {
      query_xml(q, out);
    } else if (format == "html") {
      query_html(q, out);
    } else {
      query_rdfxml(q, out);
    }
  }

  void query_xml(const query::Query& q, std::ostream& out) {
    query::QueryPlan plan = query::optimize(q, store);
    out << "Content-type: application/xml\n\n";
    // direct emission: rows stream out as they are produced
    out << "<resulttable>\n<columns>";
    for (const std::string& c : plan.projected) out << "<col>" << quote_text(c) << "</col>";
    out << "</columns>\n";
    query::execute(plan, store, [&](const query::BindingRow& row) {
      out << "<row>";
      for (const rdf::Term& v : row.values) write_result_cell(out, v);
      out << "</row>\n";
      return true;
    });
    out << "</resulttable>\n";
  }

  void query_html(const query::Query& q, std::ostream& out) {
    query::QueryPlan plan = query::optimize(q, store);
    query::ResultSet rs = query::execute(plan, store);
    using namespace htmlgen;
    SpecList header_cells;
    for (const std::string& c : rs.columns) header_cells.push_back(tag("th", {text(c)}));
    HtmlSpec table =
        tag("table", {{"border", markup::AttrScalar::make_int(1)}},
            {tag("tr", std::move(header_cells)),
             rule("rows", [&]() {
               SpecList rows;
               for (const query::BindingRow& row : rs.rows) {
                 SpecList cells;
                 for (const rdf::Term& v : row.values)
                   cells.push_back(tag("td", {text(cell_text(v))}));
                 rows.push_back(tag("tr", std::move(cells)));
               }
               return rows;
             })});
    HtmlSpec page = tag("html", {tag("head", {tag("title", {text("query results")})}),
                                 tag("body", {tag("h1", {text("Query results")}), table})});
    out << "Content-type: text/html\n\n" << to_text(page) << "\n";
  }

  void query_rdfxml(const query::Query& q, std::ostream& out) {
    // construct-style: instantiate the query's patterns with every solution
    query::Query all = q;
    all.projected.clear();
    std::set<std::string> vars;
    for (const query::PatternExpr& p : q.patterns)
      for (const query::Slot* s : {&p.subject, &p.predicate, &p.object})
        if (s->is_var && vars.insert(s->var).second) all.projected.push_back(s->var);
    query::QueryPlan plan = query::optimize(all, store);
    std::set<rdf::Triple> triples;
    query::execute(plan, store, [&](const query::BindingRow& row) {
      std::map<std::string, rdf::Term> env;
      for (std::size_t i = 0; i < all.projected.size(); ++i)
        env[all.projected[i]] = row.values[i];
      for (const query::PatternExpr& p : q.patterns) {
        auto resolve = [&](const query::Slot& s) {
          return s.is_var ? env.at(s.var) : s.term;
        };
        rdf::Term pred = resolve(p.predicate);
        if (!rdf::is_iri(pred)) continue;
        triples.insert(rdf::Triple{resolve(p.subject), std::get<rdf::Iri>(pred),
                                   resolve(p.object)});
      }
      return true;
    });
    std::vector<rdf::Triple> list(triples.begin(), triples.end());
    out << "Content-type: application/rdf+xml\n\n";
    rdf::write_rdf_xml(out, list);
  }

  void handle_load(Request& req, std::ostream& out) {
    ParamSpec specs[] = {ParamSpec("source")};
    http::Params params = http::http_parameters(req, specs);
    const std::string& source = params.at("source").text;
    // admin form posts the document as a form field; machines send the raw body
    std::string document = req.param("document").value_or(req.body);

    std::size_t count = 0;
    try {
      store.with_transaction([&] {
        rdf::process_rdf(document, source,
                         [&](std::vector<rdf::Triple> batch, const rdf::Location& where) {
                           for (const rdf::Triple& t : batch) {
                             store.assert_triple(t, where.source,
                                                 static_cast<std::uint32_t>(where.line));
                             ++count;
                           }
                         });
        store.emit_file_load(source);
        return true;
      });
    } catch (const Error& e) {
      reply_error_xml(out, 400, e.what());
    }
    out << "Content-type: application/xml\n\n";
    out << "<loaded source=\"" << quote_attribute(source) << "\" triples=\"" << count
        << "\"/>\n";
  }

  void handle_unload(Request& req, std::ostream& out) {
    ParamSpec specs[] = {ParamSpec("source")};
    http::Params params = http::http_parameters(req, specs);
    const std::string& source = params.at("source").text;
    std::size_t removed = 0;
    store.with_transaction([&] {
      store::Store::PatternBuild pb =
          store.build_pattern(std::nullopt, std::nullopt, std::nullopt, source);
      if (pb.matchable) removed = store.retract_triples(pb.pattern);
      return true;
    });
    out << "Content-type: application/xml\n\n";
    out << "<unloaded source=\"" << quote_attribute(source) << "\" triples=\"" << removed
        << "\"/>\n";
  }

  void handle_statistics(std::ostream& out) {
    store::Statistics st = store.statistics();
    out << "Content-type: application/xml\n\n";
    out << "<statistics>\n";
    out << "<triples>" << st.triple_count << "</triples>\n";
    out << "<subjects>" << st.distinct_subjects << "</subjects>\n";
    out << "<objects>" << st.distinct_objects << "</objects>\n";
    out << "<predicates>\n";
    for (const auto& [iri, n] : st.per_predicate)
      out << "<predicate count=\"" << n << "\">" << quote_text(iri) << "</predicate>\n";
    out << "</predicates>\n";
    out << "<indexes>\n";
    for (const store::IndexStats& c : st.chains)
      out << "<index name=\"" << c.name << "\" buckets=\"" << c.buckets << "\" entries=\""
          << c.entries << "\"/>\n";
    out << "</indexes>\n";
    out << "<sources>\n";
    for (const auto& [name, n] : source_counts())
      out << "<source triples=\"" << n << "\">" << quote_text(name) << "</source>\n";
    out << "</sources>\n";
    out << "</statistics>\n";
  }

  // --- admin pages ---------------------------------------------------------------

  htmlgen::HtmlSpec admin_frame(const std::string& title, htmlgen::SpecList body) {
    using namespace htmlgen;
    SpecList content = {
        tag("h1", {text(title)}),
        tag("p", {tag("a", {{"href", markup::AttrScalar::make_text("/admin")}}, {text("overview")}),
                  text(" | "),
                  tag("a", {{"href", markup::AttrScalar::make_text("/admin/query")}},
                      {text("query")}),
                  text(" | "),
                  tag("a", {{"href", markup::AttrScalar::make_text("/admin/load")}},
                      {text("load")}),
                  text(" | "),
                  tag("a", {{"href", markup::AttrScalar::make_text("/admin/sources")}},
                      {text("sources")}),
                  text(" | "),
                  tag("a", {{"href", markup::AttrScalar::make_text("/admin/statistics")}},
                      {text("statistics")})})};
    for (HtmlSpec& s : body) content.push_back(std::move(s));
    return tag("html", {tag("head", {tag("title", {text(title)})}),
                        tag("body", std::move(content))});
  }

  void reply_page(std::ostream& out, const htmlgen::HtmlSpec& page) {
    out << "Content-type: text/html\n\n" << htmlgen::to_text(page) << "\n";
  }

  void admin_overview(std::ostream& out) {
    using namespace htmlgen;
    store::Statistics st = store.statistics();
    SpecList body;
    body.push_back(tag("p", {text("Triple store with " + std::to_string(st.triple_count) +
                                  " triples over " + std::to_string(source_counts().size()) +
                                  " sources.")}));
    reply_page(out, admin_frame("Server administration", std::move(body)));
  }

  void admin_query_form(std::ostream& out) {
    using namespace htmlgen;
    auto attr = [](const char* n, const char* v) {
      return std::pair<std::string, markup::AttrScalar>(n, markup::AttrScalar::make_text(v));
    };
    SpecList entail_options;
    for (const std::string& name : query::EntailmentRegistry::global().names()) {
      HtmlAttrs oattrs = {attr("value", name.c_str())};
      if (name == config.default_entailment) oattrs.push_back(attr("selected", "selected"));
      entail_options.push_back(tag("option", oattrs, {text(name)}));
    }
    HtmlSpec form = tag(
        "form", {attr("method", "post"), attr("action", "/query")},
        {tag("p", {text("Query:")}),
         tag("textarea", {attr("name", "query"), attr("rows", "6"), attr("cols", "70")},
             {text("SELECT X WHERE (S, P, X)")}),
         tag("p", {text("Entailment: "),
                   tag("select", {attr("name", "entailment")}, std::move(entail_options)),
                   tag("input", {attr("type", "hidden"), attr("name", "format"),
                                 attr("value", "html")}),
                   text(" "),
                   tag("input", {attr("type", "submit"), attr("value", "Run query")})})});
    reply_page(out, admin_frame("Interactive query", {std::move(form)}));
  }

  void admin_load_form(std::ostream& out) {
    using namespace htmlgen;
    auto attr = [](const char* n, const char* v) {
      return std::pair<std::string, markup::AttrScalar>(n, markup::AttrScalar::make_text(v));
    };
    HtmlSpec form =
        tag("form", {attr("method", "post"), attr("action", "/load")},
            {tag("p", {text("Source name: "),
                       tag("input", {attr("type", "text"), attr("name", "source")})}),
             tag("p", {text("RDF/XML document:")}),
             tag("textarea", {attr("name", "document"), attr("rows", "12"), attr("cols", "70")},
                 {text("")}),
             tag("p", {tag("input", {attr("type", "submit"), attr("value", "Load")})})});
    reply_page(out, admin_frame("Load a document", {std::move(form)}));
  }

  void admin_sources(std::ostream& out) {
    using namespace htmlgen;
    auto attr = [](const char* n, const std::string& v) {
      return std::pair<std::string, markup::AttrScalar>(n, markup::AttrScalar::make_text(v));
    };
    SpecList rows;
    rows.push_back(tag("tr", {tag("th", {text("source")}), tag("th", {text("triples")}),
                              tag("th", {text("action")})}));
    for (const auto& [name, n] : source_counts()) {
      HtmlSpec unload_form =
          tag("form", {attr("method", "post"), attr("action", "/unload")},
              {tag("input", {attr("type", "hidden"), attr("name", "source"), attr("value", name)}),
               tag("input", {attr("type", "submit"), attr("value", "unload")})});
      rows.push_back(tag("tr", {tag("td", {text(name)}),
                                tag("td", {text(std::to_string(n))}),
                                tag("td", {std::move(unload_form)})}));
    }
    HtmlSpec table = tag("table", {{"border", markup::AttrScalar::make_int(1)}}, std::move(rows));
    reply_page(out, admin_frame("Sources", {std::move(table)}));
  }

  void admin_statistics(std::ostream& out) {
    using namespace htmlgen;
    store::Statistics st = store.statistics();
    SpecList rows;
    rows.push_back(tag("tr", {tag("th", {text("predicate")}), tag("th", {text("triples")})}));
    for (const auto& [iri, n] : st.per_predicate)
      rows.push_back(
          tag("tr", {tag("td", {text(iri)}), tag("td", {text(std::to_string(n))})}));
    SpecList body;
    body.push_back(tag("p", {text("Triples: " + std::to_string(st.triple_count) +
                                  ", subjects: " + std::to_string(st.distinct_subjects) +
                                  ", objects: " + std::to_string(st.distinct_objects))}));
    body.push_back(tag("table", {{"border", markup::AttrScalar::make_int(1)}}, std::move(rows)));
    reply_page(out, admin_frame("Statistics", std::move(body)));
  }

  void demo_session(Request& req, std::ostream& out) {
    http::SessionPtr session = http::session_of(req);
    int visits = 0;
    if (auto v = session->get("visits")) visits = std::atoi(v->c_str());
    session->put("visits", std::to_string(++visits));
    out << "Content-type: text/plain\n\nsession " << session->id() << " visit " << visits
        << "\n";
  }

  // --- dispatch --------------------------------------------------------------------

  bool dispatch(Request& req, std::ostream& out) {
    try {
      if (req.method == "POST" && req.path == "/query") {
        handle_query(req, out);
      } else if (req.method == "POST" && req.path == "/load") {
        handle_load(req, out);
      } else if (req.method == "POST" && req.path == "/unload") {
        handle_unload(req, out);
      } else if (req.method == "GET" && req.path == "/statistics") {
        handle_statistics(out);
      } else if (req.method == "GET" && req.path == "/demo/session") {
        demo_session(req, out);
      } else if (req.method == "GET" && req.path == "/private") {
        throw ReplyCondition::forbidden(req.path);
      } else if (config.admin && req.method == "GET" && req.path == "/admin") {
        admin_overview(out);
      } else if (config.admin && req.method == "GET" && req.path == "/admin/query") {
        admin_query_form(out);
      } else if (config.admin && req.method == "GET" && req.path == "/admin/load") {
        admin_load_form(out);
      } else if (config.admin && req.method == "GET" && req.path == "/admin/sources") {
        admin_sources(out);
      } else if (config.admin && req.method == "GET" && req.path == "/admin/statistics") {
        admin_statistics(out);
      } else if (req.method == "GET" && req.path == "/") {
        throw ReplyCondition::moved("/admin");
      } else {
        return false;  // 404
      }
    } catch (const Done&) {
      // an error document was already written
    }
    return true;
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::port() const { return impl_->server->port(); }

store::Store& Service::store() { return impl_->store; }

void Service::stop() { impl_->server->stop(); }

} // namespace triplekit::service
