#ifndef TRIPLEKIT_H
#define TRIPLEKIT_H

/* C API for the triplekit RDF toolkit.
 *
 * All functions return TK_OK (0) on success or a nonzero error code; the
 * message for the most recent failure on the calling thread is available
 * from tk_last_error().  Strings returned through char** out-parameters are
 * owned by the caller and released with tk_free().
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define TK_OK 0
#define TK_ERROR 1  /* generic failure */
#define TK_EINVAL 2 /* invalid argument */
#define TK_EPARSE 3 /* parse error in markup, RDF or query text */
#define TK_EIO 4    /* file or network error */

const char* tk_last_error(void);
void tk_free(char* text);

/* --- markup ---------------------------------------------------------------- */

/* Parses text (XML, or the canonicalizing HTML subset when html_mode is
 * nonzero) and returns the canonical serialization. */
int tk_canon(const char* text, int html_mode, int indented, char** out);

/* --- RDF/XML ----------------------------------------------------------------- */

/* Parses an RDF/XML document and returns the triples, one N-Triples-like
 * line each.  base_iri may be NULL. */
int tk_rdf_parse(const char* document, const char* source_name, const char* base_iri,
                 char** ntriples_out);

/* Parses a document and writes it back as RDF/XML. */
int tk_rdf_roundtrip(const char* document, const char* source_name, const char* base_iri,
                     char** rdfxml_out);

/* --- triple store ------------------------------------------------------------ */

typedef struct tk_store tk_store;

tk_store* tk_store_new(void);
void tk_store_free(tk_store* store);

/* Loads an RDF/XML document into the store under the given source name, as
 * one transaction. */
int tk_store_load_rdf(tk_store* store, const char* document, const char* source);

int tk_store_triple_count(tk_store* store, unsigned long long* count_out);

/* Runs a query ("SELECT ... WHERE ..." syntax) under the named entailment
 * (raw, rdf or rdfs) and returns the result table as XML. */
int tk_store_query(tk_store* store, const char* query, const char* entailment, char** xml_out);

/* --- persistence -------------------------------------------------------------- */

int tk_store_attach(tk_store* store, const char* directory);
int tk_store_detach(tk_store* store);
int tk_store_snapshot(tk_store* store, const char* source);

/* Loads a persistence directory into a scratch store and reports on it. */
int tk_db_verify(const char* directory, char** report_out);

/* --- server -------------------------------------------------------------------- */

typedef struct tk_server tk_server;

typedef struct tk_serve_options {
  int port;                /* 0 picks an ephemeral port */
  int workers;             /* 0 means the default pool size */
  const char* db_dir;      /* NULL for a memory-only store */
  const char* entailment;  /* default entailment; NULL means "rdfs" */
  int admin;               /* nonzero serves the admin pages */
} tk_serve_options;

tk_server* tk_serve(const tk_serve_options* options);
int tk_server_port(tk_server* server);
int tk_server_stop(tk_server* server);
void tk_server_free(tk_server* server);

#ifdef __cplusplus
}
#endif

#endif /* TRIPLEKIT_H */
