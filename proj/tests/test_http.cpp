#include "triplekit/http.hpp"

#include <sys/socket.h>
#include <netinet/in.h>
#include <arpa/inet.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"

using namespace triplekit;
using namespace triplekit::http;

namespace {

// Routing handler covering every status-mapping branch.
bool test_handler(Request& req, std::ostream& out) {
  if (req.path == "/ok") {
    out << "Content-type: text/plain\n\nok";
    return true;
  }
  if (req.path == "/echo-method") {
    out << "Content-type: text/plain\n\n" << req.method << " " << req.path;
    return true;
  }
  if (req.path == "/echo") {
    std::string type = req.headers.get("Content-Type").value_or("text/plain");
    out << "Content-type: " << type << "\n\n" << req.body;
    return true;
  }
  if (req.path == "/xml") {
    out << "Content-type: application/xml\n\n<doc><v a=\"1\">x</v></doc>";
    return true;
  }
  if (req.path == "/big") {
    out << "Content-type: text/plain\n\n";
    for (int i = 0; i < 30000; ++i) out << "0123456789";  // 300 KB, forces chunked
    return true;
  }
  if (req.path == "/redirect") {
    throw ReplyCondition::moved("/ok");
  }
  if (req.path == "/private") {
    throw ReplyCondition::forbidden(req.path);
  }
  if (req.path == "/boom") {
    throw std::runtime_error("handler exploded");
  }
  if (req.path == "/fail") {
    return false;  // 404 existence error
  }
  if (req.path == "/params") {
    ParamSpec specs[] = {
        ParamSpec("title").opt(),
        ParamSpec("name").min_len(2),
        ParamSpec("age").as_integer(),
        ParamSpec("mode").opt().choices({"a", "b"}),
        ParamSpec("lang").opt().fallback("en"),
    };
    Params p = http_parameters(req, specs);
    out << "Content-type: text/plain\n\n";
    out << "name=" << p.at("name").text << ";age=" << *p.at("age").number
        << ";lang=" << p.at("lang").text << ";title=" << (p.count("title") ? "yes" : "no");
    return true;
  }
  if (req.path == "/session") {
    SessionOptions so;
    so.timeout = std::chrono::seconds(2);
    SessionPtr s = session_of(req, so);
    int count = 0;
    if (auto v = s->get("count")) count = std::atoi(v->c_str());
    ++count;
    s->put("count", std::to_string(count));
    out << "Content-type: text/plain\n\n" << s->id() << ":" << count;
    return true;
  }
  if (req.path == "/headers") {
    out << "Content-type: text/plain\nX-Extra: custom\nStatus: 201 Created\n\nmade";
    return true;
  }
  return false;
}

struct Fixture {
  std::unique_ptr<Server> server;
  int port;

  Fixture() {
    ServerOptions opts;
    opts.workers = 4;
    opts.read_timeout = std::chrono::seconds(5);
    server = serve(0, test_handler, opts);
    port = server->port();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::string slurp(std::istream& in) {
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

} // namespace

TEST_CASE("CGI-style handler reply: 200 with the document content") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  auto r = c.request("GET", "/ok");
  CHECK(r.status == 200);
  CHECK(r.body == "ok");
  CHECK(r.headers.get("Content-Type") == "text/plain");
}

TEST_CASE("status mapping is total: 403, 404, 500, 301, handler 404") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  CHECK(c.request("GET", "/private").status == 403);
  CHECK(c.request("GET", "/fail").status == 404);
  CHECK(c.request("GET", "/no-such-route").status == 404);
  CHECK(c.request("GET", "/boom").status == 500);
  auto moved = c.request("GET", "/redirect");
  CHECK(moved.status == 301);
  CHECK(moved.headers.get("Location") == "/ok");
}

TEST_CASE("handler-emitted Status and extra headers pass through") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  auto r = c.request("GET", "/headers");
  CHECK(r.status == 201);
  CHECK(r.headers.get("X-Extra") == "custom");
  CHECK(r.body == "made");
}

TEST_CASE("large bodies switch to chunked transfer and arrive whole") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  auto r = c.request("GET", "/big");
  CHECK(r.status == 200);
  CHECK(r.headers.get("Transfer-Encoding") == "chunked");
  CHECK(r.body.size() == 300000);
}

TEST_CASE("form parameters: conversion, validation, defaults") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  auto ok = c.request("GET", "/params?name=mary&age=3");
  CHECK(ok.status == 200);
  CHECK(ok.body == "name=mary;age=3;lang=en;title=no");

  // POST form body works identically
  auto post = c.request("POST", "/params", {}, "name=mary&age=44&title=dr",
                        "application/x-www-form-urlencoded");
  CHECK(post.status == 200);
  CHECK(post.body == "name=mary;age=44;lang=en;title=yes");

  CHECK(c.request("GET", "/params?name=m&age=3").status == 400);     // length >= 2
  CHECK(c.request("GET", "/params?name=mary&age=old").status == 400);  // integer
  CHECK(c.request("GET", "/params?age=3").status == 400);              // missing required
  CHECK(c.request("GET", "/params?name=mary&age=1&mode=z").status == 400);  // one_of
}

TEST_CASE("parameter decoding: percent escapes and plus-as-space round trip") {
  Fixture fx;
  std::mt19937 gen(123);
  std::uniform_int_distribution<int> len(0, 20), ch(0, 255);
  for (int i = 0; i < 50; ++i) {
    std::string value;
    for (int j = 0, n = len(gen); j < n; ++j) value += static_cast<char>(ch(gen));
    std::pair<std::string, std::string> kv[] = {{"name", "xx"}, {"age", "1"}, {"title", value}};
    std::string form = form_encode(kv);
    auto parsed = parse_form(form);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[2].second == value);
  }
}

TEST_CASE("sessions: cookie replay binds the same session, timeout discards it") {
  Fixture fx;
  ClientConnection c("127.0.0.1", fx.port);
  auto first = c.request("GET", "/session");
  REQUIRE(first.status == 200);
  std::string cookie_line = first.headers.get("Set-Cookie").value_or("");
  REQUIRE(cookie_line.find("tk_session=") == 0);
  std::string cookie = cookie_line.substr(0, cookie_line.find(';'));
  std::string sid = first.body.substr(0, first.body.find(':'));
  CHECK(first.body == sid + ":1");

  Headers with_cookie;
  with_cookie.add("Cookie", cookie);
  auto second = c.request("GET", "/session", with_cookie);
  CHECK(second.body == sid + ":2");
  CHECK_FALSE(second.headers.get("Set-Cookie").has_value());  // bound, no new cookie

  std::this_thread::sleep_for(std::chrono::milliseconds(2100));
  auto third = c.request("GET", "/session", with_cookie);
  std::string sid3 = third.body.substr(0, third.body.find(':'));
  CHECK(sid3 != sid);                      // expired: a fresh session
  CHECK(third.body == sid3 + ":1");        // with an empty bag
  CHECK(third.headers.get("Set-Cookie").has_value());
}

TEST_CASE("concurrent requests on one session see a consistent bag") {
  Fixture fx;
  ClientConnection c0("127.0.0.1", fx.port);
  auto first = c0.request("GET", "/session");
  std::string cookie_line = first.headers.get("Set-Cookie").value_or("");
  std::string cookie = cookie_line.substr(0, cookie_line.find(';'));

  constexpr int kThreads = 4, kEach = 25;
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&] {
      ClientConnection c("127.0.0.1", fx.port);
      Headers h;
      h.add("Cookie", cookie);
      for (int i = 0; i < kEach; ++i) {
        auto r = c.request("GET", "/session", h);
        if (r.status != 200) ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(failures == 0);
  Headers h;
  h.add("Cookie", cookie);
  auto last = c0.request("GET", "/session", h);
  // 1 initial + kThreads*kEach concurrent + this one
  CHECK(last.body.substr(last.body.find(':') + 1) == std::to_string(kThreads * kEach + 2));
}

TEST_CASE("http_open: 200 stream, redirect following, error statuses") {
  Fixture fx;
  OpenResult r = http_open(fx.base() + "/ok");
  CHECK(r.status == 200);
  CHECK(slurp(*r.body) == "ok");

  OpenResult redirected = http_open(fx.base() + "/redirect");
  CHECK(redirected.status == 200);
  CHECK(slurp(*redirected.body) == "ok");

  try {
    http_open(fx.base() + "/no-such-route");
    FAIL("expected StatusError");
  } catch (const StatusError& e) {
    CHECK(e.status() == 404);
  }
}

TEST_CASE("http_get parses XML replies into a document tree") {
  Fixture fx;
  ContentValue v = http_get(fx.base() + "/xml");
  REQUIRE(std::holds_alternative<markup::NodeList>(v));
  const markup::NodeList& doc = std::get<markup::NodeList>(v);
  REQUIRE(doc.size() == 1);
  CHECK(doc[0].element().tag == "doc");
  CHECK(doc[0].element().children[0].element().tag == "v");
}

TEST_CASE("http_post echoes text and unsupported media types are typed errors") {
  Fixture fx;
  ContentValue v = http_post(fx.base() + "/echo", "abc", "text/plain");
  REQUIRE(std::holds_alternative<std::string>(v));
  CHECK(std::get<std::string>(v) == "abc");

  CHECK_THROWS_AS(http_post(fx.base() + "/echo", "x", "application/octet-stream"),
                  UnsupportedMediaError);
}

TEST_CASE("keep-alive: many requests on one connection beat close-per-request") {
  Fixture fx;
  constexpr int kRequests = 200;
  auto t0 = std::chrono::steady_clock::now();
  {
    ClientConnection c("127.0.0.1", fx.port);
    for (int i = 0; i < kRequests; ++i) {
      auto r = c.request("GET", "/ok");
      REQUIRE(r.status == 200);
    }
  }
  auto keep_alive_time = std::chrono::steady_clock::now() - t0;

  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < kRequests; ++i) {
    ClientConnection c("127.0.0.1", fx.port);
    auto r = c.request("GET", "/ok", {}, {}, {}, /*keep_alive=*/false);
    REQUIRE(r.status == 200);
  }
  auto close_time = std::chrono::steady_clock::now() - t0;
  CHECK(keep_alive_time < close_time);
}

TEST_CASE("malformed requests do not kill pool workers") {
  ServerOptions opts;
  opts.workers = 3;
  opts.read_timeout = std::chrono::seconds(1);
  auto server = serve(0, test_handler, opts);
  int port = server->port();
  CHECK(server->alive_workers() == 3);

  std::mt19937 gen(7);
  std::uniform_int_distribution<int> len(1, 64), ch(1, 255);
  for (int i = 0; i < 40; ++i) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    std::string garbage;
    for (int j = 0, n = len(gen); j < n; ++j) garbage += static_cast<char>(ch(gen));
    garbage += "\r\n\r\n";
    (void)::send(fd, garbage.data(), garbage.size(), MSG_NOSIGNAL);
    ::close(fd);
  }
  // a well-formed request still succeeds and the pool is intact
  ClientConnection c("127.0.0.1", port);
  CHECK(c.request("GET", "/ok").status == 200);
  CHECK(server->alive_workers() == 3);
}

TEST_CASE("requests of one session may be served by different workers") {
  // connections are dispatched to pool workers; with more live connections
  // than one, at least two workers serve traffic
  Fixture fx;
  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      ClientConnection c("127.0.0.1", fx.port);
      for (int i = 0; i < 20; ++i)
        if (c.request("GET", "/ok").status == 200) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 80);
}
