#include "viso/stream.h"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace viso::stream {

using nlohmann::json;

//===----------------------------------------------------------------------===//
// Records
//===----------------------------------------------------------------------===//

json SinkRow::to_json() const {
  return json{
      {"id", record.comment.id},
      {"text", record.comment.text},
      {"source", record.comment.source},
      {"fetched_at", record.comment.fetched_at},
      {"ingest_ts", record.ingest_ts},
      {"seq", record.seq},
      {"label", label_name(prediction.label)},
      {"label_code", prediction.code()},
      {"probs", prediction.probs},
      {"model_version", model_version},
      {"latency_ms", prediction.latency_ms},
      {"empty_input", prediction.empty_input},
  };
}

SinkRow SinkRow::from_json(const json& j) {
  try {
    SinkRow r;
    r.record.comment.id = j.at("id").get<std::string>();
    r.record.comment.text = j.at("text").get<std::string>();
    r.record.comment.source = j.at("source").get<std::string>();
    r.record.comment.fetched_at = j.at("fetched_at").get<std::int64_t>();
    r.record.ingest_ts = j.at("ingest_ts").get<std::int64_t>();
    r.record.seq = j.at("seq").get<std::uint64_t>();
    const double code = j.at("label_code").get<double>();
    if (code != 0.0 && code != 1.0 && code != 2.0) throw Error("label_code out of range");
    r.prediction.label = label_from_index(static_cast<std::size_t>(code));
    r.prediction.probs = j.at("probs").get<std::array<double, kNumClasses>>();
    r.prediction.latency_ms = j.at("latency_ms").get<double>();
    r.prediction.empty_input = j.value("empty_input", false);
    r.model_version = j.at("model_version").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("bad sink row: ") + e.what());
  }
}

json DeadLetter::to_json() const {
  return json{{"key", key}, {"source", source}, {"raw", raw}, {"reason", reason}, {"ts", ts}};
}

RawComment parse_comment(const json& j, std::string_view default_source) {
  if (!j.is_object()) throw Error("not a JSON object");
  RawComment c;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw Error("missing string field 'id'");
  c.id = id->get<std::string>();
  if (c.id.empty()) throw Error("empty id");
  auto text = j.find("text");
  if (text == j.end() || !text->is_string()) throw Error("missing string field 'text'");
  c.text = text->get<std::string>();
  auto src = j.find("source");
  if (src != j.end() && !src->is_null()) {
    if (!src->is_string()) throw Error("field 'source' must be a string");
    c.source = src->get<std::string>();
  } else {
    c.source = std::string(default_source);
  }
  auto ts = j.find("fetched_at");
  if (ts != j.end() && !ts->is_null()) {
    if (!ts->is_number_integer()) throw Error("field 'fetched_at' must be an integer");
    c.fetched_at = ts->get<std::int64_t>();
    if (c.fetched_at < 0) throw Error("negative fetched_at");
  }
  return c;
}

//===----------------------------------------------------------------------===//
// Clock
//===----------------------------------------------------------------------===//

std::int64_t SystemClock::wall_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

double SystemClock::mono_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_ms(double ms) {
  if (ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

//===----------------------------------------------------------------------===//
// Batching
//===----------------------------------------------------------------------===//

MicroBatcher::MicroBatcher(std::int64_t interval_ms, std::size_t max_batch, std::int64_t now_ms)
    : interval_ms_(interval_ms), max_batch_(max_batch), tick_start_(now_ms) {
  if (interval_ms <= 0) throw Error("batch interval must be > 0");
  if (max_batch == 0) throw Error("max_batch must be >= 1");
}

std::optional<MicroBatch> MicroBatcher::add(StreamRecord r, std::int64_t now_ms) {
  buffer_.push_back(std::move(r));
  if (buffer_.size() >= max_batch_) return release(now_ms);
  return std::nullopt;
}

std::optional<MicroBatch> MicroBatcher::tick(std::int64_t now_ms) {
  if (now_ms < tick_start_ + interval_ms_) return std::nullopt;
  auto out = buffer_.empty() ? std::nullopt : release(now_ms);
  tick_start_ += ((now_ms - tick_start_) / interval_ms_) * interval_ms_;
  return out;
}

std::optional<MicroBatch> MicroBatcher::flush(std::int64_t now_ms) {
  if (buffer_.empty()) return std::nullopt;
  return release(now_ms);
}

std::optional<MicroBatch> MicroBatcher::release(std::int64_t now_ms) {
  MicroBatch b;
  b.batch_id = next_id_++;
  b.window_start = tick_start_;
  b.window_end = now_ms;
  b.records = std::move(buffer_);
  buffer_.clear();
  return b;
}

std::vector<SinkRow> process_batch(const MicroBatch& batch, const Classifier& classifier,
                                   std::vector<DeadLetter>* dead_letters, Clock* clock) {
  std::vector<SinkRow> rows;
  rows.reserve(batch.records.size());
  const std::string version = classifier.version();
  for (const auto& rec : batch.records) {
    try {
      const double start = clock ? clock->mono_ms() : 0.0;
      SinkRow row{rec, classifier.classify(rec.comment.id, rec.comment.text), version};
      if (clock) row.prediction.latency_ms = std::max(0.0, clock->mono_ms() - start);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      if (!dead_letters) throw;
      dead_letters->push_back({rec.comment.id, rec.comment.source, rec.comment.text,
                               std::string("classification failed: ") + e.what(),
                               clock ? clock->wall_ms() : rec.ingest_ts});
    }
  }
  return rows;
}

//===----------------------------------------------------------------------===//
// Pipeline
//===----------------------------------------------------------------------===//

namespace {
constexpr auto kPoll = std::chrono::milliseconds(20);
}

Pipeline::Pipeline(PipelineConfig cfg, std::shared_ptr<const Classifier> classifier,
                   std::shared_ptr<Clock> clock)
    : cfg_(std::move(cfg)),
      classifier_(std::move(classifier)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      ingest_(cfg_.queue_cap),
      to_sink_(cfg_.queue_cap) {
  if (!classifier_) throw Error("pipeline requires a classifier");
  if (cfg_.sink_path.empty()) throw Error("pipeline requires a sink path");
  sink_ = std::make_unique<JsonlSink>(cfg_.sink_path, "id", cfg_.sink_options, clock_.get());
  if (!cfg_.dead_letter_path.empty()) {
    dl_sink_ = std::make_unique<JsonlSink>(cfg_.dead_letter_path, "key", cfg_.sink_options, clock_.get());
  }
  // Fail fast on a bad batching configuration.
  MicroBatcher probe(cfg_.batch_interval_ms, cfg_.max_batch, 0);
}

Pipeline::~Pipeline() {
  if (started_ && !joined_) {
    try {
      stop();
    } catch (const std::exception& e) {
      spdlog::error("pipeline shutdown: {}", e.what());
    }
  }
}

void Pipeline::add_source(std::unique_ptr<Source> source) {
  if (started_) throw Error("cannot add a source to a running pipeline");
  sources_.push_back(std::move(source));
}

void Pipeline::start() {
  if (started_) throw Error("pipeline already started");
  if (sources_.empty()) throw Error("pipeline has no sources");
  started_ = true;
  sources_running_ = sources_.size();
  writer_thread_ = std::jthread([this] { writer_loop(); });
  batch_thread_ = std::jthread([this] { batch_loop(); });
  for (auto& s : sources_) {
    source_threads_.emplace_back([this, src = s.get()] { source_loop(*src, stop_.get_token()); });
  }
}

void Pipeline::acquire_slot(std::stop_token st, bool* ok) {
  std::unique_lock lock(mu_);
  while (in_flight_ >= cfg_.queue_cap) {
    if (st.stop_requested() || halted_) {
      *ok = false;
      return;
    }
    slot_cv_.wait_for(lock, kPoll);
  }
  if (halted_) {
    *ok = false;
    return;
  }
  ++in_flight_;
  stats_.max_in_flight = std::max(stats_.max_in_flight, in_flight_);
  *ok = true;
}

void Pipeline::release_slots(std::size_t n) {
  if (n == 0) return;
  {
    std::lock_guard lock(mu_);
    in_flight_ -= n;
  }
  slot_cv_.notify_all();
}

void Pipeline::source_loop(Source& src, std::stop_token st) {
  std::uint64_t seq = 0;
  SourceContext ctx;
  ctx.stop = st;
  ctx.clock = clock_.get();
  ctx.emit = [&](RawComment c) {
    if (st.stop_requested()) return false;
    bool ok = false;
    acquire_slot(st, &ok);
    if (!ok) return false;
    StreamRecord r{std::move(c), clock_->wall_ms(), ++seq};
    {
      std::lock_guard lock(mu_);
      ++stats_.ingested;
    }
    if (!ingest_.push(std::move(r))) {
      release_slots(1);
      return false;
    }
    return true;
  };
  ctx.dead_letter = [&](std::string raw, std::string reason) {
    DeadLetter dl{src.name() + ":" + raw, src.name(), std::move(raw), std::move(reason), clock_->wall_ms()};
    to_sink_.push({{}, {std::move(dl)}, 0});
  };
  try {
    src.run(ctx);
  } catch (const std::exception& e) {
    spdlog::error("source '{}' failed: {}", src.name(), e.what());
    std::lock_guard lock(mu_);
    if (error_.empty()) error_ = "source '" + src.name() + "' failed: " + e.what();
  }
  if (--sources_running_ == 0) ingest_.close();
}

void Pipeline::batch_loop() {
  MicroBatcher batcher(cfg_.batch_interval_ms, cfg_.max_batch, clock_->wall_ms());
  auto dispatch = [&](std::optional<MicroBatch> mb) {
    if (!mb) return;
    std::vector<DeadLetter> dls;
    auto rows = process_batch(*mb, *classifier_, &dls, clock_.get());
    {
      std::lock_guard lock(mu_);
      ++stats_.batches;
    }
    to_sink_.push({std::move(rows), std::move(dls), mb->records.size()});
  };
  for (;;) {
    const auto until_tick = batcher.next_tick() - clock_->wall_ms();
    const auto wait = std::chrono::milliseconds(std::clamp<std::int64_t>(until_tick, 1, kPoll.count()));
    if (auto rec = ingest_.pop(wait)) {
      dispatch(batcher.add(std::move(*rec), clock_->wall_ms()));
    } else if (ingest_.drained()) {
      dispatch(batcher.flush(clock_->wall_ms()));
      break;
    }
    dispatch(batcher.tick(clock_->wall_ms()));
  }
  to_sink_.close();
}

void Pipeline::record_dead_letter(DeadLetter dl) {
  if (dl_sink_ && !halted_) {
    try {
      dl_sink_->append({dl.to_json()});
    } catch (const SinkError& e) {
      halt(e.what());
    }
  }
  {
    std::lock_guard lock(mu_);
    ++stats_.dead_letters;
    dead_letters_.push_back(dl);
  }
  for (auto& fn : dl_observers_) fn(dl);
}

void Pipeline::halt(const std::string& why) {
  spdlog::error("pipeline halted: {}", why);
  {
    std::lock_guard lock(mu_);
    if (error_.empty()) error_ = why;
  }
  halted_ = true;
  stop_.request_stop();
  slot_cv_.notify_all();
}

void Pipeline::writer_loop() {
  for (;;) {
    auto item = to_sink_.pop(kPoll);
    if (!item) {
      if (to_sink_.drained()) break;
      continue;
    }
    auto& rows = item->rows;
    for (auto& dl : item->dead_letters) record_dead_letter(std::move(dl));
    if (!rows.empty() && !halted_) {
      std::vector<nlohmann::json> fresh;
      std::vector<const SinkRow*> fresh_rows;
      std::unordered_set<std::string> batch_ids;
      for (const auto& r : rows) {
        const auto& id = r.record.comment.id;
        if (sink_->contains(id) || !batch_ids.insert(id).second) continue;
        fresh.push_back(r.to_json());
        fresh_rows.push_back(&r);
      }
      try {
        sink_->append(fresh);
        {
          std::lock_guard lock(mu_);
          stats_.written += fresh.size();
          stats_.skipped_duplicates += rows.size() - fresh.size();
        }
        for (const auto* r : fresh_rows) {
          for (auto& fn : row_observers_) fn(*r);
        }
      } catch (const SinkError& e) {
        halt(e.what());
      }
    }
    release_slots(item->slots);
  }
  finished_ = true;
}

void Pipeline::request_stop() {
  stop_.request_stop();
  slot_cv_.notify_all();
}

void Pipeline::stop() {
  request_stop();
  wait();
}

void Pipeline::wait() {
  if (!started_) throw Error("pipeline not started");
  if (!joined_) {
    for (auto& t : source_threads_) t.join();
    batch_thread_.join();
    writer_thread_.join();
    joined_ = true;
  }
  std::lock_guard lock(mu_);
  if (!error_.empty()) {
    if (halted_) throw SinkError(error_);
    throw Error(error_);
  }
}

PipelineStats Pipeline::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<DeadLetter> Pipeline::dead_letters() const {
  std::lock_guard lock(mu_);
  return dead_letters_;
}

}  // namespace viso::stream
