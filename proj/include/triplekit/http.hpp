#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "triplekit/error.hpp"
#include "triplekit/markup.hpp"

namespace triplekit::http {

class HttpError : public Error {
public:
  using Error::Error;
};

// non-2xx reply after redirects, on the client side
class StatusError : public HttpError {
public:
  StatusError(int status, const std::string& url)
      : HttpError("HTTP status " + std::to_string(status) + " for " + url), status_(status) {}
  int status() const { return status_; }

private:
  int status_;
};

class TimeoutError : public HttpError {
public:
  using HttpError::HttpError;
};

class UnsupportedMediaError : public HttpError {
public:
  using HttpError::HttpError;
};

// Typed replies raised by handlers; each maps to exactly one status code.
struct ReplyCondition {
  enum class Kind { Forbidden, Moved, NotFound, ServerError, BadRequest };
  Kind kind;
  std::string arg;  // url or message

  int status() const {
    switch (kind) {
      case Kind::Forbidden: return 403;
      case Kind::Moved: return 301;
      case Kind::NotFound: return 404;
      case Kind::ServerError: return 500;
      case Kind::BadRequest: return 400;
    }
    return 500;
  }

  static ReplyCondition forbidden(std::string url) { return {Kind::Forbidden, std::move(url)}; }
  static ReplyCondition moved(std::string url) { return {Kind::Moved, std::move(url)}; }
  static ReplyCondition not_found(std::string url) { return {Kind::NotFound, std::move(url)}; }
  static ReplyCondition server_error(std::string m) { return {Kind::ServerError, std::move(m)}; }
  static ReplyCondition bad_request(std::string m) { return {Kind::BadRequest, std::move(m)}; }
};

const char* status_text(int status);

// Header map with case-insensitive names.
class Headers {
public:
  void add(std::string name, std::string value);
  void set(std::string name, std::string value);
  std::optional<std::string> get(std::string_view name) const;
  std::vector<std::string> all(std::string_view name) const;
  bool contains(std::string_view name) const { return get(name).has_value(); }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// percent-encoding and form codecs
std::string url_decode(std::string_view s, bool plus_as_space);
std::string url_encode(std::string_view s);
std::string form_encode(std::span<const std::pair<std::string, std::string>> params);
std::vector<std::pair<std::string, std::string>> parse_form(std::string_view body);

// --- sessions ----------------------------------------------------------------

class Session {
public:
  Session(std::string id, std::chrono::seconds timeout);

  const std::string& id() const { return id_; }
  std::chrono::steady_clock::time_point created() const { return created_; }
  std::chrono::steady_clock::time_point last_access() const { return last_access_; }
  std::chrono::seconds timeout() const { return timeout_; }

  void put(const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& key) const;
  void erase(const std::string& key);

private:
  friend class SessionManager;
  std::string id_;
  std::chrono::steady_clock::time_point created_, last_access_;
  std::chrono::seconds timeout_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> data_;
};

using SessionPtr = std::shared_ptr<Session>;

struct SessionOptions {
  std::chrono::seconds timeout{3600};
  std::string cookie_name = "tk_session";
  std::string path = "/";
};

class SessionManager {
public:
  // returns the live session for the id, or nullptr when absent/expired
  SessionPtr find(const std::string& id, std::chrono::seconds timeout);
  SessionPtr create(std::chrono::seconds timeout);

private:
  std::mutex mutex_;
  std::map<std::string, SessionPtr> sessions_;
};

// --- server -------------------------------------------------------------------

struct Request {
  std::string method;
  std::string path;          // percent-decoded, without the query string
  std::string query_string;  // raw
  std::string version;
  Headers headers;
  std::string body;
  std::vector<std::pair<std::string, std::string>> params;  // GET query + POST form
  std::string peer;

  std::optional<std::string> param(std::string_view name) const;
  std::optional<std::string> cookie(std::string_view name) const;

  // set by the framework; session_of uses them
  Headers response_extra;
  SessionManager* session_manager = nullptr;
};

// Binds (or creates) the request's session; a new session adds a Set-Cookie
// header to the reply.
SessionPtr session_of(Request& request, const SessionOptions& opts = {});

// --- form parameters -----------------------------------------------------------

struct ParamSpec {
  std::string name;
  bool optional = false;
  bool integer = false;
  std::optional<std::size_t> min_length;
  std::vector<std::string> one_of;
  std::optional<std::string> default_value;

  ParamSpec(std::string n) : name(std::move(n)) {}
  ParamSpec& opt() { optional = true; return *this; }
  ParamSpec& as_integer() { integer = true; return *this; }
  ParamSpec& min_len(std::size_t n) { min_length = n; return *this; }
  ParamSpec& choices(std::vector<std::string> v) { one_of = std::move(v); return *this; }
  ParamSpec& fallback(std::string v) { default_value = std::move(v); return *this; }
};

struct ParamValue {
  std::string text;
  std::optional<std::int64_t> number;  // set for integer params
};

using Params = std::map<std::string, ParamValue>;

// Fetches and type-checks parameters, transparently for GET and POST form
// requests.  Violations raise a 400-class ReplyCondition naming the
// parameter; absent optional parameters are simply missing from the result.
Params http_parameters(const Request& request, std::span<const ParamSpec> specs);

// CGI-style handler: write header lines, a blank line, then the document
// content.  Returning false raises a 404 existence error; a thrown
// ReplyCondition maps to its status; any other exception maps to 500.
using Handler = std::function<bool(Request&, std::ostream&)>;

struct ServerOptions {
  int workers = 4;
  bool keep_alive = true;
  std::chrono::seconds read_timeout{30};
  std::size_t max_body = 64ull * 1024 * 1024;
};

class Server {
public:
  Server(int port, Handler handler, ServerOptions opts = {});
  ~Server();
  Server(const Server&) = delete;

  int port() const;
  void stop();
  int alive_workers() const;
  SessionManager& sessions();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Server> serve(int port, Handler handler, ServerOptions opts = {});

// --- client -------------------------------------------------------------------

struct ClientOptions {
  std::chrono::milliseconds timeout{30000};
  int max_redirects = 5;
  std::vector<std::pair<std::string, std::string>> headers;
};

struct OpenResult {
  int status = 0;
  Headers headers;
  std::unique_ptr<std::istream> body;  // read to EOF, then discard
};

// GET with redirect handling; non-2xx after redirects throws StatusError.
OpenResult http_open(const std::string& url, const ClientOptions& opts = {});

using ContentValue = std::variant<std::string, markup::NodeList>;
using ContentHandler =
    std::function<ContentValue(std::istream& body, const std::string& content_type)>;

// MIME-type handlers; built-ins cover text/* (as text) and XML/HTML (parsed
// into a document tree).  Prefixes ending in '/' match by prefix.
class ContentHandlerRegistry {
public:
  static ContentHandlerRegistry& global();
  void register_handler(std::string type_or_prefix, ContentHandler handler);
  const ContentHandler* find(std::string_view content_type) const;

private:
  mutable std::mutex mutex_;
  std::vector<std::pair<std::string, ContentHandler>> handlers_;
};

ContentValue http_get(const std::string& url, const ClientOptions& opts = {});
ContentValue http_post(const std::string& url, std::string_view body, const std::string& content_type,
                       const ClientOptions& opts = {});

// One reusable connection; used for keep-alive request sequences.
class ClientConnection {
public:
  ClientConnection(const std::string& host, int port,
                   std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~ClientConnection();
  ClientConnection(const ClientConnection&) = delete;

  struct SimpleResponse {
    int status = 0;
    Headers headers;
    std::string body;
  };

  // keep_alive=false sends Connection: close
  SimpleResponse request(const std::string& method, const std::string& target,
                         const Headers& headers = {}, std::string_view body = {},
                         const std::string& content_type = {}, bool keep_alive = true);
  bool alive() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace triplekit::http
