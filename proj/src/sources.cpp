#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "viso/stream.h"

namespace viso::stream {

using nlohmann::json;

namespace {

// Sleeps in short slices so a stop request is noticed promptly.
void interruptible_sleep(Clock& clock, double ms, const std::stop_token& stop) {
  while (ms > 0 && !stop.stop_requested()) {
    const double slice = std::min(ms, 20.0);
    clock.sleep_ms(slice);
    ms -= slice;
  }
}

// Returns false when the pipeline wants the source to stop.
bool handle_line(std::string_view line, const std::string& source, SourceContext& ctx) {
  if (line.find_first_not_of(" \t\r") == std::string_view::npos) return true;
  RawComment c;
  try {
    c = parse_comment(json::parse(line), source);
  } catch (const json::exception& e) {
    ctx.dead_letter(std::string(line), std::string("malformed JSON: ") + e.what());
    return true;
  } catch (const Error& e) {
    ctx.dead_letter(std::string(line), e.what());
    return true;
  }
  return ctx.emit(std::move(c));
}

}  // namespace

//===----------------------------------------------------------------------===//
// Replay
//===----------------------------------------------------------------------===//

ReplaySource::ReplaySource(std::filesystem::path path, double rate_per_sec, std::string name)
    : path_(std::move(path)), rate_(rate_per_sec), name_(std::move(name)) {
  if (rate_ < 0) throw Error("replay rate must be >= 0");
  if (!std::filesystem::exists(path_)) throw Error("replay file not found: " + path_.string());
}

void ReplaySource::run(SourceContext& ctx) {
  std::ifstream in(path_);
  if (!in) throw Error("cannot open replay file: " + path_.string());
  const double start = ctx.clock->mono_ms();
  std::uint64_t n = 0;
  std::string line;
  while (!ctx.stop.stop_requested() && std::getline(in, line)) {
    if (rate_ > 0) {
      const double due = start + static_cast<double>(n) * 1000.0 / rate_;
      const double now = ctx.clock->mono_ms();
      if (due > now) interruptible_sleep(*ctx.clock, due - now, ctx.stop);
    }
    ++n;
    if (!handle_line(line, name_, ctx)) return;
  }
}

//===----------------------------------------------------------------------===//
// TCP
//===----------------------------------------------------------------------===//

TcpSource::TcpSource(const std::string& host, std::uint16_t port, std::string name) : name_(std::move(name)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
    throw Error("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw Error(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const int rc = ::bind(listen_fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error("cannot listen on " + host + ":" + port_str + ": " + why);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpSource::~TcpSource() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpSource::run(SourceContext& ctx) {
  std::map<int, std::string> clients;  // fd -> unterminated bytes
  auto drop = [&](int fd) {
    ::close(fd);
    clients.erase(fd);
  };
  bool keep_going = true;
  while (keep_going && !ctx.stop.stop_requested()) {
    std::vector<pollfd> fds{{listen_fd_, POLLIN, 0}};
    for (const auto& [fd, buf] : clients) fds.push_back({fd, POLLIN, 0});
    const int ready = ::poll(fds.data(), fds.size(), 20);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    if (fds[0].revents & POLLIN) {
      int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
      if (fd >= 0) clients.emplace(fd, std::string());
    }
    for (std::size_t i = 1; i < fds.size() && keep_going; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const int fd = fds[i].fd;
      char chunk[65536];
      const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
      auto& buf = clients[fd];
      if (n <= 0) {
        if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
        // Peer closed: a final unterminated line still counts.
        if (!buf.empty()) keep_going = handle_line(buf, name_, ctx);
        drop(fd);
        continue;
      }
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (auto nl = buf.find('\n', start); nl != std::string::npos && keep_going;
           nl = buf.find('\n', start)) {
        keep_going = handle_line(std::string_view(buf).substr(start, nl - start), name_, ctx);
        start = nl + 1;
      }
      buf.erase(0, start);
      if (buf.size() > kMaxLineBytes) {
        ctx.dead_letter(buf.substr(0, 256), "line exceeds " + std::to_string(kMaxLineBytes) + " bytes");
        drop(fd);
      }
    }
  }
  for (auto& [fd, buf] : clients) ::close(fd);
}

//===----------------------------------------------------------------------===//
// HTTP poll
//===----------------------------------------------------------------------===//

HttpPollSource::HttpPollSource(HttpPollConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw Error("http_poll requires base_url");
  if (cfg_.interval_ms <= 0) throw Error("http_poll interval must be > 0");
  if (cfg_.max_results <= 0) throw Error("http_poll max_results must be > 0");
}

namespace {

// Flat {"id","text",...} or a commentThread resource with the text under
// snippet.topLevelComment.snippet.
RawComment parse_item(const json& item, const std::string& source, std::int64_t now) {
  if (item.is_object() && item.contains("snippet") && !item.contains("text")) {
    const auto& inner = item.at("snippet").at("topLevelComment").at("snippet");
    RawComment c;
    c.id = item.at("id").get<std::string>();
    if (c.id.empty()) throw Error("empty id");
    c.text = inner.contains("textOriginal") ? inner.at("textOriginal").get<std::string>()
                                            : inner.at("textDisplay").get<std::string>();
    c.source = source;
    c.fetched_at = now;
    return c;
  }
  RawComment c = parse_comment(item, source);
  if (c.fetched_at == 0) c.fetched_at = now;
  return c;
}

}  // namespace

void HttpPollSource::run(SourceContext& ctx) {
  httplib::Client client(cfg_.base_url);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  std::string page_token;
  for (std::size_t poll = 0; !ctx.stop.stop_requested() && (cfg_.max_polls == 0 || poll < cfg_.max_polls);
       ++poll) {
    if (poll > 0) interruptible_sleep(*ctx.clock, static_cast<double>(cfg_.interval_ms), ctx.stop);
    if (ctx.stop.stop_requested()) return;

    httplib::Params params{{"maxResults", std::to_string(cfg_.max_results)},
                           {"textFormat", cfg_.text_format}};
    if (!cfg_.api_key.empty()) params.emplace("key", cfg_.api_key);
    if (!page_token.empty()) params.emplace("pageToken", page_token);
    auto res = client.Get(cfg_.path, params, httplib::Headers{});
    if (!res) {
      spdlog::warn("http_poll {}: request failed: {}", cfg_.base_url, httplib::to_string(res.error()));
      continue;
    }
    if (res->status != 200) {
      spdlog::warn("http_poll {}: status {}", cfg_.base_url, res->status);
      continue;
    }
    json page;
    try {
      page = json::parse(res->body);
      if (!page.is_object() || !page.contains("items") || !page.at("items").is_array()) {
        throw Error("page has no 'items' array");
      }
    } catch (const std::exception& e) {
      ctx.dead_letter(res->body.substr(0, 4096), std::string("malformed page: ") + e.what());
      continue;
    }
    page_token = page.value("nextPageToken", std::string());
    const std::int64_t now = ctx.clock->wall_ms();
    for (const auto& item : page.at("items")) {
      RawComment c;
      try {
        c = parse_item(item, cfg_.name, now);
      } catch (const std::exception& e) {
        ctx.dead_letter(item.dump(), std::string("malformed item: ") + e.what());
        continue;
      }
      if (!seen_.insert(c.id).second) continue;
      if (!ctx.emit(std::move(c))) return;
    }
  }
}

//===----------------------------------------------------------------------===//
// Factory
//===----------------------------------------------------------------------===//

std::unique_ptr<Source> open_source(const json& config) {
  try {
    const auto kind = config.at("kind").get<std::string>();
    if (kind == "replay") {
      return std::make_unique<ReplaySource>(config.at("path").get<std::string>(), config.value("rate", 0.0),
                                            config.value("name", std::string("replay")));
    }
    if (kind == "tcp") {
      return std::make_unique<TcpSource>(config.value("host", std::string("127.0.0.1")),
                                         config.value("port", std::uint16_t{0}),
                                         config.value("name", std::string("tcp")));
    }
    if (kind == "http_poll") {
      HttpPollConfig c;
      c.base_url = config.at("base_url").get<std::string>();
      c.path = config.value("path", c.path);
      c.interval_ms = config.value("interval_ms", c.interval_ms);
      c.max_results = config.value("max_results", c.max_results);
      c.text_format = config.value("text_format", c.text_format);
      c.max_polls = config.value("max_polls", c.max_polls);
      c.name = config.value("name", c.name);
      if (const char* key = std::getenv("VISO_API_KEY")) c.api_key = key;
      return std::make_unique<HttpPollSource>(std::move(c));
    }
    throw Error("unknown source kind: " + kind);
  } catch (const json::exception& e) {
    throw Error(std::string("bad source config: ") + e.what());
  }
}

}  // namespace viso::stream
