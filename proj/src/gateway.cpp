#include "viso/gateway.h"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "viso/utf8.h"

namespace viso::gateway {

using nlohmann::json;

std::string_view action_name(Action a) { return a == Action::kKeep ? "keep" : "delete"; }

Action parse_action(std::string_view s) {
  if (s == "keep") return Action::kKeep;
  if (s == "delete") return Action::kDelete;
  throw Error("invalid action '" + std::string(s) + "': expected keep or delete");
}

json ModerationDecision::to_json() const {
  return {{"comment_id", comment_id},
          {"action", action_name(action)},
          {"moderator", moderator},
          {"decided_at", decided_at}};
}

ModerationDecision ModerationDecision::from_json(const json& j) {
  if (!j.is_object()) throw Error("decision must be a JSON object");
  ModerationDecision d;
  if (!j.contains("comment_id") || !j["comment_id"].is_string() || j["comment_id"].get<std::string>().empty()) {
    throw Error("comment_id must be a non-empty string");
  }
  d.comment_id = j["comment_id"].get<std::string>();
  if (!j.contains("action") || !j["action"].is_string()) throw Error("action must be a string");
  d.action = parse_action(j["action"].get<std::string>());
  if (j.contains("moderator")) {
    if (!j["moderator"].is_string()) throw Error("moderator must be a string");
    d.moderator = j["moderator"].get<std::string>();
  }
  if (j.contains("decided_at")) {
    if (!j["decided_at"].is_number_integer() || j["decided_at"].get<std::int64_t>() < 0) {
      throw Error("decided_at must be a non-negative integer");
    }
    d.decided_at = j["decided_at"].get<std::int64_t>();
  }
  return d;
}

//===----------------------------------------------------------------------===//
// DecisionLog
//===----------------------------------------------------------------------===//

DecisionLog::DecisionLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep < content.size()) {
      spdlog::warn("decision log {}: dropping a partial last line", path_.string());
      std::filesystem::resize_file(path_, keep);
    }
    std::istringstream lines(content.substr(0, keep));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      try {
        auto d = ModerationDecision::from_json(json::parse(line));
        current_[d.comment_id] = d;
        ++lines_;
      } catch (const std::exception& e) {
        throw Error("corrupt decision log " + path_.string() + ": " + e.what());
      }
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open decision log " + path_.string() + ": " + std::strerror(errno));
  writer_ = std::jthread([this](std::stop_token st) { writer_loop(st); });
}

DecisionLog::~DecisionLog() {
  writer_.request_stop();
  work_cv_.notify_all();
  if (writer_.joinable()) writer_.join();
  if (fd_ >= 0) ::close(fd_);
}

void DecisionLog::append(const ModerationDecision& d) {
  auto p = std::make_shared<Pending>();
  p->line = d.to_json().dump() + "\n";
  p->decision = d;
  std::unique_lock lock(mu_);
  queue_.push_back(p);
  work_cv_.notify_one();
  done_cv_.wait(lock, [&] { return p->done; });
  if (!p->error.empty()) throw Error(p->error);
}

void DecisionLog::writer_loop(std::stop_token st) {
  std::unique_lock lock(mu_);
  while (true) {
    work_cv_.wait(lock, [&] { return st.stop_requested() || !queue_.empty(); });
    if (queue_.empty()) return;
    auto p = queue_.front();
    queue_.pop_front();
    lock.unlock();
    std::size_t off = 0;
    std::string error;
    while (off < p->line.size()) {
      const ssize_t n = ::write(fd_, p->line.data() + off, p->line.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        error = std::string("decision log write failed: ") + std::strerror(errno);
        break;
      }
      off += static_cast<std::size_t>(n);
    }
    lock.lock();
    if (error.empty()) {
      current_[p->decision.comment_id] = p->decision;
      ++lines_;
    }
    p->error = std::move(error);
    p->done = true;
    done_cv_.notify_all();
  }
}

std::optional<ModerationDecision> DecisionLog::current(const std::string& comment_id) const {
  std::lock_guard lock(mu_);
  auto it = current_.find(comment_id);
  if (it == current_.end()) return std::nullopt;
  return it->second;
}

std::size_t DecisionLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

//===----------------------------------------------------------------------===//
// Event feed
//===----------------------------------------------------------------------===//

Subscription::Subscription(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("subscriber buffer must be >= 1");
}

void Subscription::push(std::string data) {
  std::lock_guard lock(mu_);
  if (closed_) return;
  if (items_.size() == capacity_) {
    items_.pop_front();
    ++pending_gap_;
    ++total_dropped_;
  }
  items_.push_back(std::move(data));
  cv_.notify_one();
}

Subscription::Event Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty() || pending_gap_ > 0; });
  Event ev;
  if (pending_gap_ > 0) {
    ev.kind = Event::Kind::kGap;
    ev.dropped = pending_gap_;
    pending_gap_ = 0;
  } else if (!items_.empty()) {
    ev.kind = Event::Kind::kRow;
    ev.data = std::move(items_.front());
    items_.pop_front();
  } else if (closed_) {
    ev.kind = Event::Kind::kClosed;
  }
  return ev;
}

void Subscription::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

std::uint64_t Subscription::total_dropped() const {
  std::lock_guard lock(mu_);
  return total_dropped_;
}

std::shared_ptr<Subscription> EventHub::subscribe() {
  auto s = std::make_shared<Subscription>(capacity_);
  std::lock_guard lock(mu_);
  subs_.push_back(s);
  return s;
}

void EventHub::unsubscribe(const std::shared_ptr<Subscription>& s) {
  s->close();
  std::lock_guard lock(mu_);
  std::erase(subs_, s);
}

void EventHub::publish(const std::string& data) {
  std::lock_guard lock(mu_);
  for (auto& s : subs_) s->push(data);
}

void EventHub::close_all() {
  std::lock_guard lock(mu_);
  for (auto& s : subs_) s->close();
  subs_.clear();
}

std::size_t EventHub::subscribers() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

//===----------------------------------------------------------------------===//
// Stats
//===----------------------------------------------------------------------===//

json StatsSnapshot::to_json() const {
  json counts = json::object();
  for (Label l : kAllLabels) counts[std::string(label_name(l))] = label_counts[label_index(l)];
  return {{"label_counts", counts},
          {"total", total},
          {"dead_letters", dead_letters},
          {"mean_latency_ms", mean_latency_ms},
          {"uptime_s", uptime_s}};
}

StatsCollector::StatsCollector(stream::Clock* clock) : clock_(clock), started_(clock->mono_ms()) {}

void StatsCollector::record(const stream::SinkRow& row) {
  std::lock_guard lock(mu_);
  ++s_.label_counts[label_index(row.prediction.label)];
  ++s_.total;
  latency_sum_ += row.prediction.latency_ms;
  s_.mean_latency_ms = latency_sum_ / static_cast<double>(s_.total);
}

void StatsCollector::record_dead_letter() {
  std::lock_guard lock(mu_);
  ++s_.dead_letters;
}

StatsSnapshot StatsCollector::snapshot() const {
  std::lock_guard lock(mu_);
  StatsSnapshot out = s_;
  out.uptime_s = (clock_->mono_ms() - started_) / 1000.0;
  return out;
}

//===----------------------------------------------------------------------===//
// Gateway
//===----------------------------------------------------------------------===//

namespace {

void reply_error(httplib::Response& res, int status, const std::string& msg) {
  res.status = status;
  res.set_content(json{{"error", msg}}.dump(), "application/json");
}

std::shared_ptr<stream::Clock> or_system(std::shared_ptr<stream::Clock> c) {
  return c ? std::move(c) : std::make_shared<stream::SystemClock>();
}

}  // namespace

Gateway::Gateway(GatewayOptions opt, std::shared_ptr<const Classifier> classifier,
                 std::shared_ptr<stream::Clock> clock)
    : opt_(std::move(opt)),
      classifier_(std::move(classifier)),
      clock_(or_system(std::move(clock))),
      server_(std::make_unique<httplib::Server>()),
      hub_(opt_.subscriber_buffer),
      stats_(clock_.get()) {
  if (opt_.heartbeat_ms <= 0) throw Error("heartbeat_ms must be > 0");
  if (opt_.decision_log.empty()) throw Error("gateway requires a decision log path");
  decisions_ = std::make_unique<DecisionLog>(opt_.decision_log);
  routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::attach(stream::Pipeline& pipeline) {
  pipeline.on_row([this](const stream::SinkRow& row) { publish_row(row); });
  pipeline.on_dead_letter([this](const stream::DeadLetter&) { publish_dead_letter(); });
}

void Gateway::preload_sink(const std::filesystem::path& sink_path) {
  std::ifstream in(sink_path);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto row = stream::SinkRow::from_json(json::parse(line));
      {
        std::lock_guard lock(ids_mu_);
        if (!ids_.insert(row.record.comment.id).second) continue;
      }
      stats_.record(row);
      ++n;
    } catch (const std::exception&) {
      break;  // partial tail; the sink repairs it on open
    }
  }
  spdlog::info("gateway: loaded {} existing rows from {}", n, sink_path.string());
}

void Gateway::publish_row(const stream::SinkRow& row) {
  {
    std::lock_guard lock(ids_mu_);
    ids_.insert(row.record.comment.id);
  }
  stats_.record(row);
  hub_.publish(row.to_json().dump());
}

void Gateway::publish_dead_letter() { stats_.record_dead_letter(); }

bool Gateway::known(const std::string& id) const {
  std::lock_guard lock(ids_mu_);
  return ids_.contains(id);
}

void Gateway::routes() {
  auto& s = *server_;

  s.Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return reply_error(res, 400, "body must be JSON");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return reply_error(res, 400, "text must be a string");
    }
    const auto text = body["text"].get<std::string>();
    if (text.empty()) return reply_error(res, 400, "text must be non-empty");
    if (utf8::length(text) > opt_.max_text_chars) {
      return reply_error(res, 413, "text exceeds " + std::to_string(opt_.max_text_chars) + " characters");
    }
    if (!classifier_) return reply_error(res, 503, "model not loaded");
    const std::string id = body.value("id", std::string());
    Prediction p;
    try {
      p = classifier_->classify(id, text);
    } catch (const std::exception& e) {
      return reply_error(res, 500, e.what());
    }
    json out = {{"label", label_name(p.label)},
                {"label_code", p.code()},
                {"probs", p.probs},
                {"latency_ms", p.latency_ms},
                {"empty_input", p.empty_input},
                {"model_version", classifier_->version()}};
    res.set_content(out.dump(), "application/json");
  });

  s.Post("/v1/decisions", [this](const httplib::Request& req, httplib::Response& res) {
    ModerationDecision d;
    try {
      d = ModerationDecision::from_json(json::parse(req.body));
    } catch (const json::exception&) {
      return reply_error(res, 400, "body must be JSON");
    } catch (const Error& e) {
      return reply_error(res, 400, e.what());
    }
    if (!known(d.comment_id)) return reply_error(res, 404, "unknown comment_id '" + d.comment_id + "'");
    if (d.decided_at == 0) d.decided_at = clock_->wall_ms();
    try {
      decisions_->append(d);
    } catch (const Error& e) {
      return reply_error(res, 500, e.what());
    }
    res.status = 201;
    res.set_content(d.to_json().dump(), "application/json");
  });

  s.Get("/v1/decisions/:id", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    auto d = decisions_->current(id);
    if (!d) return reply_error(res, 404, "no decision for '" + id + "'");
    res.set_content(d->to_json().dump(), "application/json");
  });

  s.Get("/v1/stream", [this](const httplib::Request&, httplib::Response& res) {
    auto sub = hub_.subscribe();
    const auto heartbeat = std::chrono::milliseconds(opt_.heartbeat_ms);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [sub, heartbeat](std::size_t, httplib::DataSink& sink) {
          // Short slices so a vanished client is noticed between heartbeats.
          constexpr std::chrono::milliseconds kSlice(200);
          Subscription::Event ev;
          for (auto waited = std::chrono::milliseconds(0); waited < heartbeat; waited += kSlice) {
            ev = sub->next(std::min(kSlice, heartbeat - waited));
            if (ev.kind != Subscription::Event::Kind::kTimeout) break;
            if (!sink.is_writable()) return false;
          }
          std::string frame;
          switch (ev.kind) {
            case Subscription::Event::Kind::kRow:
              frame = "data: " + ev.data + "\n\n";
              break;
            case Subscription::Event::Kind::kGap:
              frame = "event: gap\ndata: " + json{{"dropped", ev.dropped}}.dump() + "\n\n";
              break;
            case Subscription::Event::Kind::kTimeout:
              frame = ": heartbeat\n\n";
              break;
            case Subscription::Event::Kind::kClosed:
              sink.done();
              return true;
          }
          return sink.write(frame.data(), frame.size());
        },
        [this, sub](bool) { hub_.unsubscribe(sub); });
  });

  s.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(stats_.snapshot().to_json().dump(), "application/json");
  });

  s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    json out = {{"status", "ok"},
                {"model_loaded", classifier_ != nullptr},
                {"model_version", classifier_ ? classifier_->version() : std::string()},
                {"uptime_s", stats_.snapshot().uptime_s}};
    res.set_content(out.dump(), "application/json");
  });
}

int Gateway::start(const std::string& host, int port) {
  if (server_thread_.joinable()) throw Error("gateway already started");
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind gateway to " + host + ":" + std::to_string(port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("gateway listening on {}:{}", host, bound);
  return bound;
}

void Gateway::stop() {
  hub_.close_all();
  if (server_thread_.joinable()) {
    server_->stop();
    server_thread_.join();
  }
}

//===----------------------------------------------------------------------===//
// Configuration
//===----------------------------------------------------------------------===//

ServeConfig ServeConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    ServeConfig c;
    c.model_path = resolve(j.at("model_path").get<std::string>());
    c.embeddings_path = resolve(j.at("embeddings_path").get<std::string>());
    const json res = j.value("resources", json{{"dir", "data"}});
    if (res.contains("dir")) {
      c.resources = ResourcePaths::in_directory(resolve(res.at("dir").get<std::string>()));
    }
    if (res.contains("lexicon")) c.resources.lexicon = resolve(res["lexicon"].get<std::string>());
    if (res.contains("teencode")) c.resources.teencode = resolve(res["teencode"].get<std::string>());
    if (res.contains("stopwords")) c.resources.stopwords = resolve(res["stopwords"].get<std::string>());
    if (res.contains("protected")) {
      c.resources.protected_lexicon = resolve(res["protected"].get<std::string>());
    }
    if (c.resources.lexicon.empty() || c.resources.teencode.empty() || c.resources.stopwords.empty() ||
        c.resources.protected_lexicon.empty()) {
      throw Error("resources must give dir or all of lexicon, teencode, stopwords, protected");
    }
    c.source = j.value("source", json());
    if (c.source.is_object() && c.source.contains("path")) {
      c.source["path"] = resolve(c.source["path"].get<std::string>()).string();
    }
    if (j.contains("sink")) c.sink_path = resolve(j["sink"].get<std::string>());
    if (j.contains("dead_letter")) c.dead_letter_path = resolve(j["dead_letter"].get<std::string>());
    if (j.contains("decision_log")) c.decision_log = resolve(j["decision_log"].get<std::string>());
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.queue_cap = j.value("queue_cap", c.queue_cap);
    c.batch_interval_ms = j.value("batch_interval_ms", c.batch_interval_ms);
    c.max_batch = j.value("max_batch", c.max_batch);
    c.heartbeat_ms = j.value("heartbeat_ms", c.heartbeat_ms);
    if (c.port < 0 || c.port > 65535) throw Error("port out of range");
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("bad serve config: ") + e.what());
  }
}

ServeConfig ServeConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::shared_ptr<TextCnnClassifier> load_textcnn_classifier(const std::filesystem::path& model_path,
                                                           const std::filesystem::path& embeddings_path,
                                                           const ResourcePaths& resources) {
  auto pre = std::make_shared<const Preprocessor>(Preprocessor::load(resources));
  auto table = std::make_shared<const embed::EmbeddingTable>(embed::EmbeddingTable::load(embeddings_path));
  auto params = textcnn::load_checkpoint(model_path, table->dim());
  return std::make_shared<TextCnnClassifier>(std::move(pre), std::move(table), std::move(params));
}

}  // namespace viso::gateway
