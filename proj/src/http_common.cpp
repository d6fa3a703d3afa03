#include "triplekit/http.hpp"

#include <algorithm>
#include <cctype>
#include <random>

namespace triplekit::http {

namespace {

bool iequal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

} // namespace

const char* status_text(int status) {
  switch (status) {
    case 200: return "OK";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 400: return "Bad Request";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 408: return "Request Timeout";
    case 411: return "Length Required";
    case 413: return "Payload Too Large";
    case 415: return "Unsupported Media Type";
    case 500: return "Internal Server Error";
    case 501: return "Not Implemented";
    default: return "Status";
  }
}

void Headers::add(std::string name, std::string value) {
  entries_.emplace_back(std::move(name), std::move(value));
}

void Headers::set(std::string name, std::string value) {
  for (auto& [n, v] : entries_) {
    if (iequal(n, name)) {
      v = std::move(value);
      return;
    }
  }
  add(std::move(name), std::move(value));
}

std::optional<std::string> Headers::get(std::string_view name) const {
  for (const auto& [n, v] : entries_)
    if (iequal(n, name)) return v;
  return std::nullopt;
}

std::vector<std::string> Headers::all(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& [n, v] : entries_)
    if (iequal(n, name)) out.push_back(v);
  return out;
}

std::string url_decode(std::string_view s, bool plus_as_space) {
  std::string out;
  out.reserve(s.size());
  auto hexval = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '%' && i + 2 < s.size()) {
      int hi = hexval(s[i + 1]), lo = hexval(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    if (plus_as_space && c == '+') {
      out += ' ';
      continue;
    }
    out += c;
  }
  return out;
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    }
  }
  return out;
}

std::string form_encode(std::span<const std::pair<std::string, std::string>> params) {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += '&';
    out += url_encode(k);
    out += '=';
    out += url_encode(v);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_form(std::string_view body) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t amp = body.find('&', pos);
    std::string_view piece =
        body.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
    if (!piece.empty()) {
      std::size_t eq = piece.find('=');
      if (eq == std::string_view::npos) {
        out.emplace_back(url_decode(piece, true), "");
      } else {
        out.emplace_back(url_decode(piece.substr(0, eq), true),
                         url_decode(piece.substr(eq + 1), true));
      }
    }
    if (amp == std::string_view::npos) break;
    pos = amp + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// sessions

Session::Session(std::string id, std::chrono::seconds timeout)
    : id_(std::move(id)), created_(std::chrono::steady_clock::now()), last_access_(created_),
      timeout_(timeout) {}

void Session::put(const std::string& key, std::string value) {
  std::lock_guard lk(mutex_);
  data_[key] = std::move(value);
}

std::optional<std::string> Session::get(const std::string& key) const {
  std::lock_guard lk(mutex_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

void Session::erase(const std::string& key) {
  std::lock_guard lk(mutex_);
  data_.erase(key);
}

namespace {

// 128 bits from the system's cryptographic randomness source, url-safe base64
std::string random_session_id() {
  static const char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::random_device rd;
  std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  std::string out;
  for (int i = 0; i < 11; ++i) {
    out += alphabet[hi & 0x3F];
    hi >>= 6;
  }
  for (int i = 0; i < 11; ++i) {
    out += alphabet[lo & 0x3F];
    lo >>= 6;
  }
  return out;
}

} // namespace

SessionPtr SessionManager::find(const std::string& id, std::chrono::seconds timeout) {
  std::lock_guard lk(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  SessionPtr s = it->second;
  auto now = std::chrono::steady_clock::now();
  if (now - s->last_access_ > timeout) {
    sessions_.erase(it);  // timed-out sessions are simply discarded
    return nullptr;
  }
  s->last_access_ = now;
  return s;
}

SessionPtr SessionManager::create(std::chrono::seconds timeout) {
  std::lock_guard lk(mutex_);
  for (;;) {
    std::string id = random_session_id();
    if (sessions_.count(id)) continue;
    SessionPtr s = std::make_shared<Session>(id, timeout);
    sessions_[id] = s;
    return s;
  }
}

// ---------------------------------------------------------------------------
// request helpers

std::optional<std::string> Request::param(std::string_view name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  return std::nullopt;
}

std::optional<std::string> Request::cookie(std::string_view name) const {
  for (const std::string& line : headers.all("Cookie")) {
    std::size_t pos = 0;
    while (pos < line.size()) {
      std::size_t semi = line.find(';', pos);
      std::string_view piece(line.data() + pos,
                             (semi == std::string::npos ? line.size() : semi) - pos);
      while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
      std::size_t eq = piece.find('=');
      if (eq != std::string_view::npos && piece.substr(0, eq) == name)
        return std::string(piece.substr(eq + 1));
      if (semi == std::string::npos) break;
      pos = semi + 1;
    }
  }
  return std::nullopt;
}

SessionPtr session_of(Request& request, const SessionOptions& opts) {
  if (!request.session_manager)
    throw HttpError("session_of: request has no session manager (server not running?)");
  if (std::optional<std::string> id = request.cookie(opts.cookie_name)) {
    if (SessionPtr s = request.session_manager->find(*id, opts.timeout)) return s;
  }
  SessionPtr s = request.session_manager->create(opts.timeout);
  request.response_extra.add("Set-Cookie",
                             opts.cookie_name + "=" + s->id() + "; Path=" + opts.path);
  return s;
}

// ---------------------------------------------------------------------------
// form parameters

Params http_parameters(const Request& request, std::span<const ParamSpec> specs) {
  Params out;
  for (const ParamSpec& spec : specs) {
    std::optional<std::string> raw = request.param(spec.name);
    if (!raw) {
      if (spec.default_value) {
        raw = *spec.default_value;
      } else if (spec.optional) {
        continue;
      } else {
        throw ReplyCondition::bad_request("missing parameter '" + spec.name + "'");
      }
    }
    ParamValue value;
    value.text = *raw;
    if (spec.integer) {
      const std::string& t = value.text;
      std::size_t i = (!t.empty() && (t[0] == '+' || t[0] == '-')) ? 1 : 0;
      if (i >= t.size() ||
          !std::all_of(t.begin() + static_cast<std::ptrdiff_t>(i), t.end(),
                       [](unsigned char c) { return std::isdigit(c); }))
        throw ReplyCondition::bad_request("parameter '" + spec.name + "' must be an integer");
      value.number = std::stoll(t);
    }
    if (spec.min_length && value.text.size() < *spec.min_length)
      throw ReplyCondition::bad_request("parameter '" + spec.name + "' must have length >= " +
                                        std::to_string(*spec.min_length));
    if (!spec.one_of.empty() &&
        std::find(spec.one_of.begin(), spec.one_of.end(), value.text) == spec.one_of.end())
      throw ReplyCondition::bad_request("parameter '" + spec.name + "' has an unknown value");
    out[spec.name] = std::move(value);
  }
  return out;
}

} // namespace triplekit::http
