#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "viso/pipeline.h"
#include "viso/types.h"

// Micro-batch streaming engine: sources feed a bounded queue, a batcher
// groups records per tick, the classify stage turns each batch into sink
// rows and a single writer appends them to an idempotent JSONL file.
namespace viso::stream {

struct StreamRecord {
  RawComment comment;
  std::int64_t ingest_ts = 0;  // UTC ms
  std::uint64_t seq = 0;       // per-source, starts at 1
};

struct MicroBatch {
  std::uint64_t batch_id = 0;
  std::vector<StreamRecord> records;
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;
};

struct SinkRow {
  StreamRecord record;
  Prediction prediction;
  std::string model_version;

  nlohmann::json to_json() const;
  static SinkRow from_json(const nlohmann::json& j);
};

struct DeadLetter {
  std::string key;  // record id when known, otherwise source + raw payload
  std::string source;
  std::string raw;
  std::string reason;
  std::int64_t ts = 0;

  nlohmann::json to_json() const;
};

// Builds a RawComment from a wire object {"id","text","source","fetched_at"}.
// Missing source falls back to default_source, missing fetched_at to 0.
// Throws Error describing the first problem.
RawComment parse_comment(const nlohmann::json& j, std::string_view default_source);

//===----------------------------------------------------------------------===//
// Time
//===----------------------------------------------------------------------===//

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t wall_ms() = 0;  // UTC
  virtual double mono_ms() = 0;
  virtual void sleep_ms(double ms) = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t wall_ms() override;
  double mono_ms() override;
  void sleep_ms(double ms) override;
};

// Time only moves when advance() or sleep_ms() is called.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
  std::int64_t wall_ms() override { return now_.load(); }
  double mono_ms() override { return static_cast<double>(now_.load()); }
  void sleep_ms(double ms) override { advance(static_cast<std::int64_t>(ms)); }
  void advance(std::int64_t ms) { now_ += ms; }

 private:
  std::atomic<std::int64_t> now_;
};

//===----------------------------------------------------------------------===//
// Queues and batching
//===----------------------------------------------------------------------===//

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error("queue capacity must be >= 1");
  }

  // Blocks while full. False once the queue is closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  // Waits up to timeout. nullopt on timeout or when closed and drained.
  std::optional<T> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool drained() const {
    std::lock_guard lock(mu_);
    return closed_ && items_.empty();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Groups records into batches. A batch is released when max_batch records
// are buffered or when a tick of interval_ms ends with a non-empty buffer.
class MicroBatcher {
 public:
  MicroBatcher(std::int64_t interval_ms, std::size_t max_batch, std::int64_t now_ms);

  std::optional<MicroBatch> add(StreamRecord r, std::int64_t now_ms);
  std::optional<MicroBatch> tick(std::int64_t now_ms);
  std::optional<MicroBatch> flush(std::int64_t now_ms);

  std::int64_t next_tick() const { return tick_start_ + interval_ms_; }

 private:
  std::optional<MicroBatch> release(std::int64_t now_ms);

  std::int64_t interval_ms_;
  std::size_t max_batch_;
  std::int64_t tick_start_;
  std::uint64_t next_id_ = 1;
  std::vector<StreamRecord> buffer_;
};

// One row per classified record, in batch order. Records whose
// classification throws go to dead_letters instead. With a clock, latency is
// measured on it rather than by the classifier.
std::vector<SinkRow> process_batch(const MicroBatch& batch, const Classifier& classifier,
                                   std::vector<DeadLetter>* dead_letters, Clock* clock = nullptr);

//===----------------------------------------------------------------------===//
// Sinks
//===----------------------------------------------------------------------===//

// Raw write hook so tests can inject short writes, errors and crashes.
// Same contract as ::write.
using WriteFn = std::function<long(int fd, const char* data, std::size_t len)>;

struct SinkOptions {
  int max_retries = 3;
  double initial_backoff_ms = 5.0;
  bool fsync = false;
  WriteFn write;  // empty = ::write
};

class SinkError : public Error {
 public:
  using Error::Error;
};

// Append-only JSONL keyed by one string field. Reopening an existing file
// loads the keys already present and drops a trailing partial line, so a
// replay after a crash never duplicates a key.
class JsonlSink {
 public:
  JsonlSink(std::filesystem::path path, std::string key_field, SinkOptions options = {},
            Clock* clock = nullptr);
  ~JsonlSink();
  JsonlSink(const JsonlSink&) = delete;
  JsonlSink& operator=(const JsonlSink&) = delete;

  // Writes objects whose key is new, as one flush. Returns how many were
  // written. Throws SinkError once retries are exhausted.
  std::size_t append(const std::vector<nlohmann::json>& objects);

  bool contains(const std::string& key) const { return keys_.contains(key); }
  std::size_t size() const { return keys_.size(); }
  const std::filesystem::path& path() const { return path_; }
  // Bytes dropped from a partial last line when the file was opened.
  std::size_t recovered_bytes() const { return recovered_bytes_; }

 private:
  void write_all(const std::string& data);

  std::filesystem::path path_;
  std::string key_field_;
  SinkOptions options_;
  Clock* clock_;
  std::unique_ptr<Clock> owned_clock_;
  int fd_ = -1;
  bool fd_broken_ = false;
  std::unordered_set<std::string> keys_;
  std::size_t recovered_bytes_ = 0;
};

//===----------------------------------------------------------------------===//
// Sources
//===----------------------------------------------------------------------===//

struct SourceContext {
  // Blocks under backpressure; false when the pipeline is shutting down.
  std::function<bool(RawComment)> emit;
  std::function<void(std::string raw, std::string reason)> dead_letter;
  std::stop_token stop;
  Clock* clock = nullptr;
};

class Source {
 public:
  virtual ~Source() = default;
  virtual std::string name() const = 0;
  // Runs until the input is exhausted or stop is requested.
  virtual void run(SourceContext& ctx) = 0;
};

// JSONL file, one comment per line. rate_per_sec = 0 means no pacing.
class ReplaySource final : public Source {
 public:
  ReplaySource(std::filesystem::path path, double rate_per_sec = 0.0, std::string name = "replay");
  std::string name() const override { return name_; }
  void run(SourceContext& ctx) override;

 private:
  std::filesystem::path path_;
  double rate_;
  std::string name_;
};

// Newline-delimited JSON over TCP. Binds in the constructor so port() is
// known before run(); port 0 picks a free port.
class TcpSource final : public Source {
 public:
  TcpSource(const std::string& host, std::uint16_t port, std::string name = "tcp");
  ~TcpSource() override;
  std::string name() const override { return name_; }
  std::uint16_t port() const { return port_; }
  void run(SourceContext& ctx) override;

  static constexpr std::size_t kMaxLineBytes = 1 << 20;

 private:
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::string name_;
};

struct HttpPollConfig {
  std::string base_url;          // e.g. "http://127.0.0.1:8081"
  std::string path = "/comments";
  std::int64_t interval_ms = 1000;
  int max_results = 100;
  std::string text_format = "plainText";
  std::string api_key;           // sent as ?key=; empty = omitted
  std::size_t max_polls = 0;     // 0 = until stopped
  std::string name = "http_poll";
};

// Polls a JSON endpoint returning {"items":[...], "nextPageToken"?}. Items
// are flat comment objects or YouTube-style commentThread resources. Each
// id is emitted once.
class HttpPollSource final : public Source {
 public:
  explicit HttpPollSource(HttpPollConfig cfg);
  std::string name() const override { return cfg_.name; }
  void run(SourceContext& ctx) override;

 private:
  HttpPollConfig cfg_;
  std::unordered_set<std::string> seen_;
};

// Reads the kind and its settings from a JSON object:
//   {"kind":"replay","path":...,"rate":...}
//   {"kind":"tcp","host":...,"port":...}
//   {"kind":"http_poll","base_url":...,"path":...,"interval_ms":...,
//    "max_results":...,"text_format":...,"max_polls":...}
// For http_poll the api key comes from VISO_API_KEY.
std::unique_ptr<Source> open_source(const nlohmann::json& config);

//===----------------------------------------------------------------------===//
// Pipeline
//===----------------------------------------------------------------------===//

struct PipelineConfig {
  std::size_t queue_cap = 1024;
  std::int64_t batch_interval_ms = 1000;
  std::size_t max_batch = 256;
  std::filesystem::path sink_path;
  std::filesystem::path dead_letter_path;  // empty = keep in memory only
  SinkOptions sink_options;
};

struct PipelineStats {
  std::uint64_t ingested = 0;
  std::uint64_t written = 0;
  std::uint64_t skipped_duplicates = 0;
  std::uint64_t dead_letters = 0;
  std::uint64_t batches = 0;
  std::size_t max_in_flight = 0;
};

class Pipeline {
 public:
  using RowObserver = std::function<void(const SinkRow&)>;
  using DeadLetterObserver = std::function<void(const DeadLetter&)>;

  Pipeline(PipelineConfig cfg, std::shared_ptr<const Classifier> classifier,
           std::shared_ptr<Clock> clock = nullptr);
  ~Pipeline();

  void add_source(std::unique_ptr<Source> source);
  // Called on the writer thread after each row is durably appended.
  void on_row(RowObserver fn) { row_observers_.push_back(std::move(fn)); }
  void on_dead_letter(DeadLetterObserver fn) { dl_observers_.push_back(std::move(fn)); }

  void start();
  // Asks sources to stop, then drains everything already ingested.
  void stop();
  // The signalling half of stop(); returns at once and is safe from any
  // thread.
  void request_stop();
  // True once the writer has drained and exited.
  bool finished() const { return finished_.load(); }
  // Waits until every source has finished on its own and the pipeline has
  // drained. Throws the sink error if the pipeline halted.
  void wait();

  PipelineStats stats() const;
  std::vector<DeadLetter> dead_letters() const;
  bool halted() const { return halted_.load(); }

 private:
  void source_loop(Source& src, std::stop_token st);
  void batch_loop();
  void writer_loop();
  void acquire_slot(std::stop_token st, bool* ok);
  void release_slots(std::size_t n);
  void record_dead_letter(DeadLetter dl);
  void halt(const std::string& why);

  PipelineConfig cfg_;
  std::shared_ptr<const Classifier> classifier_;
  std::shared_ptr<Clock> clock_;
  std::vector<std::unique_ptr<Source>> sources_;
  std::vector<RowObserver> row_observers_;
  std::vector<DeadLetterObserver> dl_observers_;

  BoundedQueue<StreamRecord> ingest_;
  struct SinkItem {
    std::vector<SinkRow> rows;
    std::vector<DeadLetter> dead_letters;
    std::size_t slots = 0;  // in-flight slots released once written
  };

  BoundedQueue<SinkItem> to_sink_;
  std::unique_ptr<JsonlSink> sink_;
  std::unique_ptr<JsonlSink> dl_sink_;

  std::vector<std::jthread> source_threads_;
  std::jthread batch_thread_, writer_thread_;
  std::atomic<std::size_t> sources_running_{0};
  std::stop_source stop_;

  mutable std::mutex mu_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
  PipelineStats stats_;
  std::vector<DeadLetter> dead_letters_;
  std::string error_;
  std::atomic<bool> halted_{false};
  std::atomic<bool> finished_{false};
  bool started_ = false;
  bool joined_ = false;
};

}  // namespace viso::stream
