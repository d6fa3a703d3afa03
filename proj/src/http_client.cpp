#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <istream>
#include <sstream>

#include "triplekit/http.hpp"

namespace triplekit::http {

namespace {

struct Url {
  std::string host;
  int port = 80;
  std::string target;  // path + query
};

Url parse_url(const std::string& url) {
  if (url.rfind("http://", 0) != 0)
    throw HttpError("only absolute http:// URLs are supported: " + url);
  Url u;
  std::string rest = url.substr(7);
  std::size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  u.target = slash == std::string::npos ? "/" : rest.substr(slash);
  std::size_t colon = hostport.find(':');
  if (colon == std::string::npos) {
    u.host = hostport;
  } else {
    u.host = hostport.substr(0, colon);
    u.port = std::atoi(hostport.c_str() + colon + 1);
  }
  if (u.host.empty()) throw HttpError("URL has no host: " + url);
  return u;
}

std::string resolve_location(const Url& base, const std::string& location) {
  if (location.rfind("http://", 0) == 0) return location;
  std::string prefix = "http://" + base.host +
                       (base.port == 80 ? "" : ":" + std::to_string(base.port));
  if (!location.empty() && location[0] == '/') return prefix + location;
  std::string dir = base.target.substr(0, base.target.find_last_of('/') + 1);
  return prefix + dir + location;
}

int connect_with_timeout(const std::string& host, int port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port_text = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res) != 0 || !res)
    throw HttpError("cannot resolve host " + host);
  int fd = ::socket(res->ai_family, SOCK_STREAM | SOCK_NONBLOCK, 0);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw HttpError("cannot create socket");
  }
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0 && errno == EINPROGRESS) {
    pollfd p{fd, POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) {
      ::close(fd);
      throw TimeoutError("connect to " + host + " timed out");
    }
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) rc = -1;
  }
  if (rc < 0 && errno != EINPROGRESS) {
    ::close(fd);
    throw HttpError("cannot connect to " + host + ":" + port_text);
  }
  // back to blocking; timeouts are handled via poll before each read
  int flags = 0;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &flags, sizeof flags);
  return fd;
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    pollfd p{fd, POLLOUT, 0};
    if (::poll(&p, 1, 30000) <= 0) return false;
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Buffered reading with a per-operation timeout.
class Reader {
public:
  Reader(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {}

  int fill() {
    pollfd p{fd_, POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
    if (rc == 0) throw TimeoutError("read timed out");
    if (rc < 0) return -1;
    char buf[8192];
    ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) return -1;
    buffer_.append(buf, static_cast<std::size_t>(n));
    return static_cast<int>(n);
  }

  std::optional<std::string> read_line() {
    for (;;) {
      std::size_t nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (fill() < 0) return std::nullopt;
    }
  }

  bool read_exact(std::size_t n, std::string& out) {
    while (buffer_.size() < n)
      if (fill() < 0) return false;
    out = buffer_.substr(0, n);
    buffer_.erase(0, n);
    return true;
  }

  // reads whatever remains until the peer closes
  std::string read_to_eof() {
    while (fill() >= 0) {
    }
    std::string out = std::move(buffer_);
    buffer_.clear();
    return out;
  }

  std::string take_buffer() {
    std::string out = std::move(buffer_);
    buffer_.clear();
    return out;
  }

private:
  int fd_;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

struct ResponseHead {
  int status = 0;
  Headers headers;
};

ResponseHead read_head(Reader& reader) {
  std::optional<std::string> status_line = reader.read_line();
  if (!status_line) throw HttpError("connection closed before a response arrived");
  ResponseHead head;
  std::istringstream sl(*status_line);
  std::string version;
  sl >> version >> head.status;
  if (version.rfind("HTTP/", 0) != 0 || head.status == 0)
    throw HttpError("malformed status line: " + *status_line);
  for (;;) {
    std::optional<std::string> line = reader.read_line();
    if (!line) throw HttpError("connection closed inside response headers");
    if (line->empty()) break;
    std::size_t colon = line->find(':');
    if (colon == std::string::npos) continue;
    std::size_t vs = line->find_first_not_of(' ', colon + 1);
    head.headers.add(line->substr(0, colon), vs == std::string::npos ? "" : line->substr(vs));
  }
  return head;
}

std::string ci_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string read_body(Reader& reader, const ResponseHead& head) {
  std::optional<std::string> te = head.headers.get("Transfer-Encoding");
  if (te && ci_lower(*te) == "chunked") {
    std::string body;
    for (;;) {
      std::optional<std::string> sz = reader.read_line();
      if (!sz) throw HttpError("connection closed inside chunked body");
      std::size_t n = std::strtoul(sz->c_str(), nullptr, 16);
      if (n == 0) {
        reader.read_line();
        return body;
      }
      std::string chunk;
      if (!reader.read_exact(n, chunk)) throw HttpError("connection closed inside a chunk");
      body += chunk;
      reader.read_line();
    }
  }
  if (std::optional<std::string> cl = head.headers.get("Content-Length")) {
    std::string body;
    if (!reader.read_exact(std::strtoul(cl->c_str(), nullptr, 10), body))
      throw HttpError("connection closed inside the response body");
    return body;
  }
  return reader.read_to_eof();
}

// Owns the socket and presents the (already fully read) body as a stream.
// Responses are bounded in our use; a body stream keeps the http_open
// contract of "read to EOF, then discard".
class OwnedBody : public std::istringstream {
public:
  explicit OwnedBody(std::string body) : std::istringstream(std::move(body)) {}
};

struct Exchange {
  ResponseHead head;
  std::string body;
};

Exchange one_request(const Url& u, const std::string& method, const Headers& extra,
                     std::string_view body, const std::string& content_type,
                     const ClientOptions& opts) {
  int fd = connect_with_timeout(u.host, u.port, opts.timeout);
  std::ostringstream req;
  req << method << ' ' << u.target << " HTTP/1.1\r\n";
  req << "Host: " << u.host << "\r\n";
  for (const auto& [n, v] : opts.headers) req << n << ": " << v << "\r\n";
  for (const auto& [n, v] : extra) req << n << ": " << v << "\r\n";
  if (!content_type.empty()) req << "Content-Type: " << content_type << "\r\n";
  if (!body.empty() || method == "POST") req << "Content-Length: " << body.size() << "\r\n";
  req << "Connection: close\r\n\r\n";
  if (!send_all(fd, req.str()) || !send_all(fd, body)) {
    ::close(fd);
    throw HttpError("cannot send request to " + u.host);
  }
  Exchange ex;
  try {
    Reader reader(fd, opts.timeout);
    ex.head = read_head(reader);
    ex.body = read_body(reader, ex.head);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  return ex;
}

Exchange request_following_redirects(const std::string& url, const std::string& method,
                                     std::string_view body, const std::string& content_type,
                                     const ClientOptions& opts, std::string* final_url) {
  std::string current = url;
  std::string cur_method = method;
  std::string cur_body(body);
  std::string cur_type = content_type;
  for (int hop = 0; hop <= opts.max_redirects; ++hop) {
    Url u = parse_url(current);
    Exchange ex = one_request(u, cur_method, {}, cur_body, cur_type, opts);
    if (ex.head.status >= 300 && ex.head.status < 400) {
      std::optional<std::string> loc = ex.head.headers.get("Location");
      if (!loc) throw HttpError("redirect without Location from " + current);
      current = resolve_location(u, *loc);
      if (ex.head.status != 307 && ex.head.status != 308) {
        cur_method = "GET";
        cur_body.clear();
        cur_type.clear();
      }
      continue;
    }
    if (final_url) *final_url = current;
    return ex;
  }
  throw HttpError("too many redirects for " + url);
}

} // namespace

OpenResult http_open(const std::string& url, const ClientOptions& opts) {
  std::string final_url;
  Exchange ex = request_following_redirects(url, "GET", {}, {}, opts, &final_url);
  if (ex.head.status < 200 || ex.head.status >= 300)
    throw StatusError(ex.head.status, final_url);
  OpenResult out;
  out.status = ex.head.status;
  out.headers = ex.head.headers;
  out.body = std::make_unique<OwnedBody>(std::move(ex.body));
  return out;
}

// ---------------------------------------------------------------------------
// content handlers

ContentHandlerRegistry& ContentHandlerRegistry::global() {
  static ContentHandlerRegistry* reg = [] {
    auto* r = new ContentHandlerRegistry();
    r->register_handler("text/html", [](std::istream& in, const std::string&) -> ContentValue {
      markup::ParseOptions po;
      po.mode = markup::ParseMode::HtmlSubset;
      return markup::parse_tree(in, po);
    });
    r->register_handler("application/xml", [](std::istream& in, const std::string&) -> ContentValue {
      return markup::parse_tree(in);
    });
    r->register_handler("text/xml", [](std::istream& in, const std::string&) -> ContentValue {
      return markup::parse_tree(in);
    });
    r->register_handler("application/rdf+xml",
                        [](std::istream& in, const std::string&) -> ContentValue {
                          return markup::parse_tree(in);
                        });
    r->register_handler("text/", [](std::istream& in, const std::string&) -> ContentValue {
      std::ostringstream out;
      out << in.rdbuf();
      return out.str();
    });
    return r;
  }();
  return *reg;
}

void ContentHandlerRegistry::register_handler(std::string type_or_prefix, ContentHandler handler) {
  std::lock_guard lk(mutex_);
  handlers_.emplace_back(std::move(type_or_prefix), std::move(handler));
}

const ContentHandler* ContentHandlerRegistry::find(std::string_view content_type) const {
  std::lock_guard lk(mutex_);
  // exact matches take precedence over prefix entries
  for (const auto& [t, h] : handlers_)
    if (t == content_type) return &h;
  for (const auto& [t, h] : handlers_)
    if (!t.empty() && t.back() == '/' && content_type.rfind(t, 0) == 0) return &h;
  return nullptr;
}

namespace {

ContentValue dispatch_content(Exchange ex, const std::string& url) {
  if (ex.head.status < 200 || ex.head.status >= 300) throw StatusError(ex.head.status, url);
  std::string type = ex.head.headers.get("Content-Type").value_or("application/octet-stream");
  std::size_t semi = type.find(';');
  if (semi != std::string::npos) type = type.substr(0, semi);
  while (!type.empty() && type.back() == ' ') type.pop_back();
  const ContentHandler* handler = ContentHandlerRegistry::global().find(type);
  if (!handler) throw UnsupportedMediaError("no content handler for '" + type + "'");
  std::istringstream body(std::move(ex.body));
  return (*handler)(body, type);
}

} // namespace

ContentValue http_get(const std::string& url, const ClientOptions& opts) {
  std::string final_url;
  Exchange ex = request_following_redirects(url, "GET", {}, {}, opts, &final_url);
  return dispatch_content(std::move(ex), final_url);
}

ContentValue http_post(const std::string& url, std::string_view body,
                       const std::string& content_type, const ClientOptions& opts) {
  std::string final_url;
  Exchange ex = request_following_redirects(url, "POST", body, content_type, opts, &final_url);
  return dispatch_content(std::move(ex), final_url);
}

// ---------------------------------------------------------------------------
// reusable connection

struct ClientConnection::Impl {
  int fd = -1;
  std::string host;
  int port;
  std::chrono::milliseconds timeout;
  bool open = false;
};

ClientConnection::ClientConnection(const std::string& host, int port,
                                   std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->host = host;
  impl_->port = port;
  impl_->timeout = timeout;
  impl_->fd = connect_with_timeout(host, port, timeout);
  impl_->open = true;
}

ClientConnection::~ClientConnection() {
  if (impl_ && impl_->fd >= 0) ::close(impl_->fd);
}

bool ClientConnection::alive() const { return impl_->open; }

ClientConnection::SimpleResponse ClientConnection::request(const std::string& method,
                                                           const std::string& target,
                                                           const Headers& headers,
                                                           std::string_view body,
                                                           const std::string& content_type,
                                                           bool keep_alive) {
  if (!impl_->open) throw HttpError("connection is closed");
  std::ostringstream req;
  req << method << ' ' << target << " HTTP/1.1\r\n";
  req << "Host: " << impl_->host << "\r\n";
  for (const auto& [n, v] : headers) req << n << ": " << v << "\r\n";
  if (!content_type.empty()) req << "Content-Type: " << content_type << "\r\n";
  if (!body.empty() || method == "POST") req << "Content-Length: " << body.size() << "\r\n";
  req << "Connection: " << (keep_alive ? "keep-alive" : "close") << "\r\n\r\n";
  if (!send_all(impl_->fd, req.str()) || !send_all(impl_->fd, body)) {
    impl_->open = false;
    throw HttpError("cannot send request");
  }
  Reader reader(impl_->fd, impl_->timeout);
  SimpleResponse out;
  ResponseHead head = read_head(reader);
  out.status = head.status;
  out.headers = head.headers;
  out.body = read_body(reader, head);
  std::optional<std::string> conn = head.headers.get("Connection");
  if (!keep_alive || (conn && ci_lower(*conn) == "close")) {
    ::close(impl_->fd);
    impl_->fd = -1;
    impl_->open = false;
  }
  return out;
}

} // namespace triplekit::http
