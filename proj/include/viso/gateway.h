#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "viso/pipeline.h"
#include "viso/stream.h"

namespace httplib {
class Server;
}

// HTTP moderation gateway: on-demand classification, a server-sent event
// feed of sink rows, moderator decisions and running statistics.
namespace viso::gateway {

enum class Action { kKeep, kDelete };

std::string_view action_name(Action a);
// Throws Error for anything but "keep" or "delete".
Action parse_action(std::string_view s);

struct ModerationDecision {
  std::string comment_id;
  Action action = Action::kKeep;
  std::string moderator;
  std::int64_t decided_at = 0;  // UTC ms

  nlohmann::json to_json() const;
  static ModerationDecision from_json(const nlohmann::json& j);
};

// Append-only JSONL decision log with a single writer thread. append()
// returns once the line is on disk; the latest decision per id is kept in
// memory and rebuilt from the file on open.
class DecisionLog {
 public:
  explicit DecisionLog(std::filesystem::path path);
  ~DecisionLog();
  DecisionLog(const DecisionLog&) = delete;
  DecisionLog& operator=(const DecisionLog&) = delete;

  void append(const ModerationDecision& d);
  std::optional<ModerationDecision> current(const std::string& comment_id) const;
  std::size_t lines() const;

 private:
  struct Pending {
    std::string line;
    ModerationDecision decision;
    bool done = false;
    std::string error;
  };
  void writer_loop(std::stop_token st);

  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::condition_variable work_cv_, done_cv_;
  std::deque<std::shared_ptr<Pending>> queue_;
  std::unordered_map<std::string, ModerationDecision> current_;
  std::size_t lines_ = 0;
  std::jthread writer_;
};

// One subscriber's view of the event feed. Holds at most capacity events;
// when full the oldest is dropped and counted, and the next read reports
// the gap before resuming.
class Subscription {
 public:
  struct Event {
    enum class Kind { kRow, kGap, kTimeout, kClosed } kind = Kind::kTimeout;
    std::string data;          // SinkRow JSON for kRow
    std::uint64_t dropped = 0;  // for kGap
  };

  explicit Subscription(std::size_t capacity);

  void push(std::string data);
  Event next(std::chrono::milliseconds timeout);
  void close();
  std::uint64_t total_dropped() const;

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> items_;
  std::uint64_t pending_gap_ = 0;
  std::uint64_t total_dropped_ = 0;
  bool closed_ = false;
};

class EventHub {
 public:
  explicit EventHub(std::size_t subscriber_capacity = 256) : capacity_(subscriber_capacity) {}

  std::shared_ptr<Subscription> subscribe();
  void unsubscribe(const std::shared_ptr<Subscription>& s);
  void publish(const std::string& data);
  void close_all();
  std::size_t subscribers() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

struct StatsSnapshot {
  std::array<std::uint64_t, kNumClasses> label_counts{};
  std::uint64_t total = 0;
  std::uint64_t dead_letters = 0;
  double mean_latency_ms = 0.0;
  double uptime_s = 0.0;

  nlohmann::json to_json() const;
};

class StatsCollector {
 public:
  explicit StatsCollector(stream::Clock* clock);
  void record(const stream::SinkRow& row);
  void record_dead_letter();
  StatsSnapshot snapshot() const;

 private:
  stream::Clock* clock_;
  double started_;
  mutable std::mutex mu_;
  StatsSnapshot s_;
  double latency_sum_ = 0.0;
};

struct GatewayOptions {
  std::size_t max_text_chars = 10000;  // code points
  std::int64_t heartbeat_ms = 15000;
  std::size_t subscriber_buffer = 256;
  std::filesystem::path decision_log;
};

class Gateway {
 public:
  // classifier may be null: /v1/classify then answers 503.
  Gateway(GatewayOptions opt, std::shared_ptr<const Classifier> classifier,
          std::shared_ptr<stream::Clock> clock = nullptr);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Routes pipeline rows and dead letters into the feed and stats.
  void attach(stream::Pipeline& pipeline);
  // Makes ids already in an existing sink file known and counted.
  void preload_sink(const std::filesystem::path& sink_path);

  void publish_row(const stream::SinkRow& row);
  void publish_dead_letter();

  // Binds (port 0 = any free port), serves on a background thread and
  // returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  EventHub& hub() { return hub_; }
  StatsSnapshot stats() const { return stats_.snapshot(); }
  bool known(const std::string& id) const;

 private:
  void routes();

  GatewayOptions opt_;
  std::shared_ptr<const Classifier> classifier_;
  std::shared_ptr<stream::Clock> clock_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  EventHub hub_;
  StatsCollector stats_;
  std::unique_ptr<DecisionLog> decisions_;
  mutable std::mutex ids_mu_;
  std::unordered_set<std::string> ids_;
};

// JSON config used by `serve`:
//   {model_path, embeddings_path, resources:{dir | lexicon,teencode,stopwords,protected},
//    source, sink, dead_letter, decision_log, host, port, queue_cap,
//    batch_interval_ms, max_batch, heartbeat_ms}
struct ServeConfig {
  std::filesystem::path model_path;
  std::filesystem::path embeddings_path;
  ResourcePaths resources;
  nlohmann::json source;  // open_source() config, null = no stream
  std::filesystem::path sink_path = "sink.jsonl";
  std::filesystem::path dead_letter_path;
  std::filesystem::path decision_log = "decisions.jsonl";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t queue_cap = 1024;
  std::int64_t batch_interval_ms = 1000;
  std::size_t max_batch = 256;
  std::int64_t heartbeat_ms = 15000;

  static ServeConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServeConfig load(const std::filesystem::path& path);
};

// Loads preprocessing resources, embeddings and a checkpoint into the
// classifier shared by predict, stream and the gateway.
std::shared_ptr<TextCnnClassifier> load_textcnn_classifier(const std::filesystem::path& model_path,
                                                           const std::filesystem::path& embeddings_path,
                                                           const ResourcePaths& resources);

}  // namespace viso::gateway
