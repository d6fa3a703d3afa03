#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <ostream>
#include <sstream>
#include <thread>

#include "triplekit/http.hpp"

namespace triplekit::http {

namespace {

constexpr std::size_t kBufferedBodyLimit = 64 * 1024;  // above this, chunked transfer
constexpr int kPollSliceMs = 100;

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::string ci_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Buffered reader over a socket with a deadline and a stop flag.
class Conn {
public:
  Conn(int fd, const std::atomic<bool>& stop) : fd_(fd), stop_(stop) {}

  // -1 eof/error, -2 timeout/stop
  int fill(std::chrono::steady_clock::time_point deadline) {
    while (!stop_) {
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, kPollSliceMs);
      if (rc > 0) {
        char buf[8192];
        ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n <= 0) return -1;
        buffer_.append(buf, static_cast<std::size_t>(n));
        return static_cast<int>(n);
      }
      if (rc < 0 && errno != EINTR) return -1;
      if (std::chrono::steady_clock::now() >= deadline) return -2;
    }
    return -2;
  }

  // reads one CRLF/LF-terminated line; nullopt on eof/timeout
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      std::size_t nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buffer_.size() > 64 * 1024) return std::nullopt;  // header line too long
      if (fill(deadline) < 0) return std::nullopt;
    }
  }

  bool read_exact(std::size_t n, std::string& out,
                  std::chrono::steady_clock::time_point deadline) {
    while (buffer_.size() < n)
      if (fill(deadline) < 0) return false;
    out = buffer_.substr(0, n);
    buffer_.erase(0, n);
    return true;
  }

  bool buffer_empty() const { return buffer_.empty(); }
  int fd() const { return fd_; }

private:
  int fd_;
  const std::atomic<bool>& stop_;
  std::string buffer_;
};

// Captures CGI-style handler output: header lines up to a blank line, then
// the document content.  Small bodies are buffered and sent with a
// Content-Length; larger ones switch to chunked transfer mid-stream.
class CgiCapture : public std::streambuf {
public:
  CgiCapture(int fd, bool keep_alive) : fd_(fd), keep_alive_(keep_alive) {}

  std::ostream& stream() {
    if (!out_) out_.emplace(this);
    return *out_;
  }

  bool response_started() const { return response_started_; }
  bool io_failed() const { return io_failed_; }

  // Completes the response; extra headers (Set-Cookie etc.) are merged in.
  bool finish(const Headers& extra) {
    if (!headers_done_) {
      // handler produced no blank line; treat everything as headers-less body
      body_ = std::move(raw_);
      raw_.clear();
      headers_done_ = true;
    }
    if (!response_started_) {
      std::ostringstream head;
      head << "HTTP/1.1 " << status_ << ' ' << status_text(status_) << "\r\n";
      bool have_type = false;
      for (const auto& [n, v] : cgi_headers_) {
        if (ci_lower(n) == "content-type") have_type = true;
        head << n << ": " << v << "\r\n";
      }
      if (!have_type) head << "Content-Type: text/plain\r\n";
      for (const auto& [n, v] : extra) head << n << ": " << v << "\r\n";
      head << "Content-Length: " << body_.size() << "\r\n";
      head << "Connection: " << (keep_alive_ ? "keep-alive" : "close") << "\r\n\r\n";
      if (!send_all(fd_, head.str()) || !send_all(fd_, body_)) io_failed_ = true;
      return !io_failed_;
    }
    flush_chunk();
    if (!send_all(fd_, "0\r\n\r\n")) io_failed_ = true;
    return !io_failed_;
  }

  void merge_extra_before_start(const Headers& extra) { pending_extra_ = &extra; }

private:
  int_type overflow(int_type ch) override {
    if (ch == traits_type::eof()) return ch;
    char c = static_cast<char>(ch);
    if (!headers_done_) {
      raw_ += c;
      scan_headers();
    } else {
      body_ += c;
      if (body_.size() > kBufferedBodyLimit) begin_chunked();
    }
    return ch;
  }

  std::streamsize xsputn(const char* s, std::streamsize count) override {
    for (std::streamsize i = 0; i < count; ++i) overflow(traits_type::to_int_type(s[i]));
    return count;
  }

  void scan_headers() {
    // look for the first blank line (\n\n or \r\n\r\n)
    std::size_t pos = raw_.find("\n\n");
    std::size_t len = 2;
    std::size_t pos2 = raw_.find("\r\n\r\n");
    if (pos2 != std::string::npos && (pos == std::string::npos || pos2 < pos)) {
      pos = pos2;
      len = 4;
    }
    if (pos == std::string::npos) return;
    std::string header_block = raw_.substr(0, pos);
    body_ = raw_.substr(pos + len);
    raw_.clear();
    headers_done_ = true;
    std::istringstream in(header_block);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::size_t colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string name = line.substr(0, colon);
      std::size_t vs = line.find_first_not_of(' ', colon + 1);
      std::string value = vs == std::string::npos ? "" : line.substr(vs);
      if (ci_lower(name) == "status") {
        status_ = std::atoi(value.c_str());
        if (status_ == 0) status_ = 200;
      } else {
        cgi_headers_.emplace_back(std::move(name), std::move(value));
      }
    }
  }

  void begin_chunked() {
    if (response_started_) {
      flush_chunk();
      return;
    }
    std::ostringstream head;
    head << "HTTP/1.1 " << status_ << ' ' << status_text(status_) << "\r\n";
    bool have_type = false;
    for (const auto& [n, v] : cgi_headers_) {
      if (ci_lower(n) == "content-type") have_type = true;
      head << n << ": " << v << "\r\n";
    }
    if (!have_type) head << "Content-Type: text/plain\r\n";
    if (pending_extra_)
      for (const auto& [n, v] : *pending_extra_) head << n << ": " << v << "\r\n";
    head << "Transfer-Encoding: chunked\r\n";
    head << "Connection: " << (keep_alive_ ? "keep-alive" : "close") << "\r\n\r\n";
    if (!send_all(fd_, head.str())) io_failed_ = true;
    response_started_ = true;
    flush_chunk();
  }

  void flush_chunk() {
    if (body_.empty() || io_failed_) {
      body_.clear();
      return;
    }
    char size_line[32];
    std::snprintf(size_line, sizeof size_line, "%zx\r\n", body_.size());
    if (!send_all(fd_, size_line) || !send_all(fd_, body_) || !send_all(fd_, "\r\n"))
      io_failed_ = true;
    body_.clear();
  }

  int fd_;
  bool keep_alive_;
  bool headers_done_ = false;
  bool response_started_ = false;
  bool io_failed_ = false;
  int status_ = 200;
  std::string raw_, body_;
  std::vector<std::pair<std::string, std::string>> cgi_headers_;
  const Headers* pending_extra_ = nullptr;
  std::optional<std::ostream> out_;
};

void send_error(int fd, int status, const std::string& detail, bool keep_alive,
                const Headers& extra, const std::string& location = {}) {
  std::string body = "<html><head><title>" + std::to_string(status) + " " +
                     status_text(status) + "</title></head><body><h1>" +
                     std::to_string(status) + " " + status_text(status) + "</h1><p>" +
                     markup::quote_text(detail) + "</p></body></html>\n";
  std::ostringstream head;
  head << "HTTP/1.1 " << status << ' ' << status_text(status) << "\r\n";
  head << "Content-Type: text/html\r\n";
  if (!location.empty()) head << "Location: " << location << "\r\n";
  for (const auto& [n, v] : extra) head << n << ": " << v << "\r\n";
  head << "Content-Length: " << body.size() << "\r\n";
  head << "Connection: " << (keep_alive ? "keep-alive" : "close") << "\r\n\r\n";
  send_all(fd, head.str());
  send_all(fd, body);
}

} // namespace

struct Server::Impl {
  Handler handler;
  ServerOptions opts;
  int listen_fd = -1;
  int port = 0;
  std::atomic<bool> stop{false};
  std::atomic<int> alive_workers{0};
  std::thread acceptor;
  std::vector<std::thread> workers;
  SessionManager sessions;

  std::mutex queue_mutex;
  std::condition_variable queue_cv;
  std::deque<int> queue;
  static constexpr std::size_t kQueueLimit = 128;

  void accept_loop() {
    while (!stop) {
      pollfd p{listen_fd, POLLIN, 0};
      int rc = ::poll(&p, 1, kPollSliceMs);
      if (rc <= 0) continue;
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) continue;
      int flag = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &flag, sizeof flag);
      std::lock_guard lk(queue_mutex);
      if (queue.size() >= kQueueLimit) {
        ::close(fd);  // bounded accept queue
        continue;
      }
      queue.push_back(fd);
      queue_cv.notify_one();
    }
  }

  void worker_loop() {
    ++alive_workers;
    while (!stop) {
      int fd = -1;
      {
        std::unique_lock lk(queue_mutex);
        queue_cv.wait_for(lk, std::chrono::milliseconds(kPollSliceMs),
                          [&] { return stop || !queue.empty(); });
        if (stop) break;
        if (queue.empty()) continue;
        fd = queue.front();
        queue.pop_front();
      }
      try {
        handle_connection(fd);
      } catch (...) {
        // connection-level failures never take a worker down
      }
      ::close(fd);
    }
    --alive_workers;
  }

  // Reads one request; returns false when the connection should close.
  bool read_request(Conn& conn, Request& req, int* error_status) {
    auto deadline = std::chrono::steady_clock::now() + opts.read_timeout;
    std::optional<std::string> line = conn.read_line(deadline);
    if (!line || line->empty()) return false;

    std::istringstream rl(*line);
    std::string target;
    if (!(rl >> req.method >> target >> req.version) ||
        req.version.rfind("HTTP/", 0) != 0) {
      *error_status = 400;
      return false;
    }
    std::size_t q = target.find('?');
    if (q != std::string::npos) {
      req.query_string = target.substr(q + 1);
      target = target.substr(0, q);
    }
    req.path = url_decode(target, false);

    for (;;) {
      std::optional<std::string> h = conn.read_line(deadline);
      if (!h) return false;
      if (h->empty()) break;
      std::size_t colon = h->find(':');
      if (colon == std::string::npos) {
        *error_status = 400;
        return false;
      }
      std::string name = h->substr(0, colon);
      std::size_t vs = h->find_first_not_of(' ', colon + 1);
      req.headers.add(std::move(name), vs == std::string::npos ? "" : h->substr(vs));
    }

    // body: identity via Content-Length, or chunked
    std::optional<std::string> te = req.headers.get("Transfer-Encoding");
    if (te && ci_lower(*te) == "chunked") {
      for (;;) {
        std::optional<std::string> sz = conn.read_line(deadline);
        if (!sz) return false;
        std::size_t n = std::strtoul(sz->c_str(), nullptr, 16);
        if (n == 0) {
          conn.read_line(deadline);  // trailing CRLF
          break;
        }
        if (req.body.size() + n > opts.max_body) {
          *error_status = 413;
          return false;
        }
        std::string chunk;
        if (!conn.read_exact(n, chunk, deadline)) return false;
        req.body += chunk;
        conn.read_line(deadline);  // chunk CRLF
      }
    } else if (std::optional<std::string> cl = req.headers.get("Content-Length")) {
      std::size_t n = std::strtoul(cl->c_str(), nullptr, 10);
      if (n > opts.max_body) {
        *error_status = 413;
        return false;
      }
      if (!conn.read_exact(n, req.body, deadline)) return false;
    }

    // parameters: GET query string plus POST form bodies
    req.params = parse_form(req.query_string);
    std::optional<std::string> ct = req.headers.get("Content-Type");
    if (ct && ci_lower(*ct).rfind("application/x-www-form-urlencoded", 0) == 0) {
      for (auto& kv : parse_form(req.body)) req.params.push_back(std::move(kv));
    }
    return true;
  }

  void handle_connection(int fd) {
    Conn conn(fd, stop);
    bool keep_going = true;
    while (keep_going && !stop) {
      Request req;
      req.session_manager = &sessions;
      {
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        if (::getpeername(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0) {
          char buf[INET_ADDRSTRLEN] = {};
          ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
          req.peer = buf;
        }
      }

      int error_status = 0;
      if (!read_request(conn, req, &error_status)) {
        if (error_status) send_error(fd, error_status, "malformed request", false, {});
        return;
      }

      bool keep_alive = opts.keep_alive;
      if (req.version == "HTTP/1.0") {
        std::optional<std::string> c = req.headers.get("Connection");
        keep_alive = keep_alive && c && ci_lower(*c) == "keep-alive";
      } else if (std::optional<std::string> c = req.headers.get("Connection")) {
        if (ci_lower(*c) == "close") keep_alive = false;
      }

      CgiCapture capture(fd, keep_alive);
      capture.merge_extra_before_start(req.response_extra);
      bool ok = true;
      std::optional<ReplyCondition> condition;
      bool unexpected = false;
      std::string detail;
      try {
        ok = handler(req, capture.stream());
      } catch (const ReplyCondition& rc) {
        condition = rc;
      } catch (const std::exception& e) {
        unexpected = true;
        detail = e.what();
      } catch (...) {
        unexpected = true;
      }

      if (capture.response_started()) {
        // headers are on the wire; on error we can only abort the connection
        if (condition || unexpected || !ok) return;
        if (!capture.finish(req.response_extra)) return;
      } else if (condition) {
        std::string location =
            condition->kind == ReplyCondition::Kind::Moved ? condition->arg : "";
        send_error(fd, condition->status(), condition->arg, keep_alive, req.response_extra,
                   location);
      } else if (unexpected) {
        send_error(fd, 500, detail, keep_alive, req.response_extra);
      } else if (!ok) {
        send_error(fd, 404, req.path + " does not exist", keep_alive, req.response_extra);
      } else {
        if (!capture.finish(req.response_extra)) return;
      }
      keep_going = keep_alive;
    }
  }
};

Server::Server(int port, Handler handler, ServerOptions opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  impl_->opts = opts;

  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw HttpError("cannot create server socket");
  int flag = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &flag, sizeof flag);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    throw HttpError("cannot bind port " + std::to_string(port));
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    throw HttpError("cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->port = ntohs(addr.sin_port);
  impl_->listen_fd = fd;

  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
  for (int i = 0; i < opts.workers; ++i)
    impl_->workers.emplace_back([this] { impl_->worker_loop(); });
  while (impl_->alive_workers < opts.workers) std::this_thread::yield();
}

Server::~Server() { stop(); }

void Server::stop() {
  if (!impl_ || impl_->stop.exchange(true)) return;
  impl_->queue_cv.notify_all();
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  for (std::thread& t : impl_->workers)
    if (t.joinable()) t.join();
  if (impl_->listen_fd >= 0) ::close(impl_->listen_fd);
  std::lock_guard lk(impl_->queue_mutex);
  for (int fd : impl_->queue) ::close(fd);
  impl_->queue.clear();
}

int Server::port() const { return impl_->port; }
int Server::alive_workers() const { return impl_->alive_workers; }
SessionManager& Server::sessions() { return impl_->sessions; }

std::unique_ptr<Server> serve(int port, Handler handler, ServerOptions opts) {
  return std::make_unique<Server>(port, std::move(handler), opts);
}

} // namespace triplekit::http
