#include "viso/stream.h"

#include <fstream>
#include <map>
#include <set>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <httplib.h>

namespace viso::stream {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Label chosen from the text length; probabilities depend on the text only.
class StubClassifier : public Classifier {
 public:
  Prediction classify(std::string_view, std::string_view text) const override {
    if (text == "boom") throw Error("stub failure");
    Prediction p;
    p.label = label_from_index(text.size() % 3);
    p.probs = {0.2, 0.3, 0.5};
    p.probs[label_index(p.label)] = 0.6;
    p.probs[(label_index(p.label) + 1) % 3] = 0.25;
    p.probs[(label_index(p.label) + 2) % 3] = 0.15;
    return p;
  }
  std::string version() const override { return "stub-1"; }
};

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("viso_stream_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

StreamRecord Rec(std::string id, std::uint64_t seq, std::string text = "x") {
  return {{std::move(id), std::move(text), "t", 0}, 0, seq};
}

std::vector<json> ReadJsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

void WriteReplay(const fs::path& p, std::size_t n, const std::string& prefix = "c") {
  std::ofstream out(p);
  for (std::size_t i = 0; i < n; ++i) {
    out << json{{"id", prefix + std::to_string(i)}, {"text", "comment " + std::to_string(i * 7 % 13)},
                {"source", "replay"}, {"fetched_at", 1000 + i}}
               .dump()
        << '\n';
  }
}

//===----------------------------------------------------------------------===//

TEST(ParseCommentTest, ValidAndInvalid) {
  auto c = parse_comment(json{{"id", "a"}, {"text", "hi"}}, "tcp");
  EXPECT_EQ(c.source, "tcp");
  EXPECT_EQ(c.fetched_at, 0);
  EXPECT_THROW(parse_comment(json{{"text", "hi"}}, "t"), Error);
  EXPECT_THROW(parse_comment(json{{"id", ""}, {"text", "hi"}}, "t"), Error);
  EXPECT_THROW(parse_comment(json{{"id", "a"}, {"text", 3}}, "t"), Error);
  EXPECT_THROW(parse_comment(json{{"id", "a"}, {"text", "x"}, {"fetched_at", -1}}, "t"), Error);
  EXPECT_THROW(parse_comment(json::array(), "t"), Error);
}

TEST(SinkRowTest, JsonRoundTrip) {
  SinkRow r{Rec("a", 3, "xin chào"), {}, "m1"};
  r.prediction.label = Label::kHate;
  r.prediction.probs = {0.1, 0.2, 0.7};
  r.prediction.latency_ms = 0.25;
  auto j = r.to_json();
  EXPECT_EQ(j["label_code"], 2.0);
  EXPECT_EQ(j["label"], "HATE");
  auto back = SinkRow::from_json(j);
  EXPECT_EQ(back.record.comment.text, "xin chào");
  EXPECT_EQ(back.prediction.probs, r.prediction.probs);
  EXPECT_EQ(back.record.seq, 3u);
  j["label_code"] = 1.5;
  EXPECT_THROW(SinkRow::from_json(j), Error);
}

TEST(MicroBatcherTest, OneTickOneBatch) {
  MicroBatcher b(1000, 100, 0);
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(b.add(Rec("r" + std::to_string(i), i + 1), i * 10));
  EXPECT_FALSE(b.tick(999));
  auto batch = b.tick(1000);
  ASSERT_TRUE(batch);
  EXPECT_EQ(batch->records.size(), 5u);
  EXPECT_EQ(batch->batch_id, 1u);
  EXPECT_EQ(batch->window_start, 0);
  EXPECT_EQ(batch->window_end, 1000);
}

TEST(MicroBatcherTest, EmptyTickEmitsNothing) {
  MicroBatcher b(100, 10, 0);
  EXPECT_FALSE(b.tick(100));
  EXPECT_FALSE(b.tick(250));
  EXPECT_EQ(b.next_tick(), 300);
  b.add(Rec("a", 1), 260);
  auto batch = b.tick(300);
  ASSERT_TRUE(batch);
  EXPECT_EQ(batch->batch_id, 1u);
}

TEST(MicroBatcherTest, MaxBatchSplits) {
  MicroBatcher b(1000, 2, 0);
  std::vector<std::size_t> sizes;
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 5; ++i) {
    if (auto batch = b.add(Rec("r" + std::to_string(i), i + 1), 1)) {
      sizes.push_back(batch->records.size());
      ids.push_back(batch->batch_id);
    }
  }
  if (auto batch = b.tick(1000)) {
    sizes.push_back(batch->records.size());
    ids.push_back(batch->batch_id);
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_EQ(ids, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(MicroBatcherTest, BadConfig) {
  EXPECT_THROW(MicroBatcher(0, 1, 0), Error);
  EXPECT_THROW(MicroBatcher(10, 0, 0), Error);
}

TEST(ProcessBatchTest, RowsMatchRecordsAndFailuresDeadLetter) {
  StubClassifier clf;
  MicroBatch b;
  b.records = {Rec("a", 1, "hello"), Rec("b", 2, "boom"), Rec("c", 3, "hi")};
  std::vector<DeadLetter> dl;
  ManualClock clock;
  auto rows = process_batch(b, clf, &dl, &clock);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].record.comment.id, "a");
  EXPECT_EQ(rows[1].record.comment.id, "c");
  EXPECT_EQ(rows[0].model_version, "stub-1");
  EXPECT_EQ(rows[0].prediction.latency_ms, 0.0);
  ASSERT_EQ(dl.size(), 1u);
  EXPECT_EQ(dl[0].key, "b");
}

//===----------------------------------------------------------------------===//
// JsonlSink
//===----------------------------------------------------------------------===//

TEST(JsonlSinkTest, IdempotentAcrossReopen) {
  TempDir dir;
  auto p = dir / "sink.jsonl";
  {
    JsonlSink s(p, "id");
    EXPECT_EQ(s.append({{{"id", "a"}}, {{"id", "b"}}, {{"id", "a"}}}), 2u);
    EXPECT_EQ(s.append({{{"id", "b"}}, {{"id", "c"}}}), 1u);
  }
  JsonlSink s(p, "id");
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.append({{{"id", "a"}}}), 0u);
  EXPECT_EQ(ReadJsonl(p).size(), 3u);
}

TEST(JsonlSinkTest, PartialLastLineIsDropped) {
  TempDir dir;
  auto p = dir / "sink.jsonl";
  {
    std::ofstream out(p);
    out << R"({"id":"a"})" << '\n' << R"({"id":"b"})" << '\n' << R"({"id":"c)";
  }
  JsonlSink s(p, "id");
  EXPECT_EQ(s.recovered_bytes(), 8u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.append({{{"id", "c"}}}), 1u);
  auto rows = ReadJsonl(p);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2]["id"], "c");
}

TEST(JsonlSinkTest, CorruptCompleteLineRejected) {
  TempDir dir;
  auto p = dir / "sink.jsonl";
  {
    std::ofstream out(p);
    out << "not json\n";
  }
  EXPECT_THROW(JsonlSink(p, "id"), SinkError);
}

TEST(JsonlSinkTest, RetriesTransientFailuresAndShortWrites) {
  TempDir dir;
  int calls = 0;
  SinkOptions opt;
  opt.initial_backoff_ms = 0;
  opt.write = [&](int fd, const char* d, std::size_t n) -> long {
    ++calls;
    if (calls <= 2) {
      errno = EIO;
      return -1;
    }
    return ::write(fd, d, std::min<std::size_t>(n, 5));  // short writes
  };
  JsonlSink s(dir / "s.jsonl", "id", opt);
  EXPECT_EQ(s.append({{{"id", "a"}, {"v", "0123456789"}}}), 1u);
  auto rows = ReadJsonl(dir / "s.jsonl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["v"], "0123456789");
}

TEST(JsonlSinkTest, GivesUpAfterRetries) {
  TempDir dir;
  int calls = 0;
  SinkOptions opt;
  opt.max_retries = 2;
  opt.initial_backoff_ms = 0;
  opt.write = [&](int, const char*, std::size_t) -> long {
    ++calls;
    errno = ENOSPC;
    return -1;
  };
  JsonlSink s(dir / "s.jsonl", "id", opt);
  EXPECT_THROW(s.append({{{"id", "a"}}}), SinkError);
  EXPECT_EQ(calls, 3);
  EXPECT_FALSE(s.contains("a"));
  EXPECT_THROW(s.append({{{"id", "b"}}}), SinkError);
}

//===----------------------------------------------------------------------===//
// Pipeline
//===----------------------------------------------------------------------===//

PipelineConfig Config(const TempDir& dir, std::size_t cap = 64) {
  PipelineConfig cfg;
  cfg.queue_cap = cap;
  cfg.batch_interval_ms = 5;
  cfg.max_batch = 32;
  cfg.sink_path = dir / "sink.jsonl";
  cfg.dead_letter_path = dir / "dead.jsonl";
  return cfg;
}

TEST(PipelineTest, ReplayPreservesOrderAndCounts) {
  TempDir dir;
  {
    std::ofstream out(dir / "in.jsonl");
    out << R"({"id":"1","text":"a","source":"s","fetched_at":1})" << '\n'
        << "{broken\n"
        << R"({"id":"2","text":"bb","source":"s","fetched_at":2})" << '\n'
        << '\n'
        << R"({"id":"3","text":"ccc","source":"s","fetched_at":3})" << '\n';
  }
  Pipeline p(Config(dir), std::make_shared<StubClassifier>());
  p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
  p.start();
  p.wait();
  auto rows = ReadJsonl(dir / "sink.jsonl");
  ASSERT_EQ(rows.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i]["id"], std::to_string(i + 1));
    EXPECT_EQ(rows[i]["seq"], i + 1);
  }
  EXPECT_EQ(rows[2]["label_code"], 0.0);
  EXPECT_EQ(ReadJsonl(dir / "dead.jsonl").size(), 1u);
  auto st = p.stats();
  EXPECT_EQ(st.ingested, 3u);
  EXPECT_EQ(st.written, 3u);
  EXPECT_EQ(st.dead_letters, 1u);
}

TEST(PipelineTest, ConservationAcrossTwoSources) {
  TempDir dir;
  WriteReplay(dir / "a.jsonl", 700, "a");
  WriteReplay(dir / "b.jsonl", 500, "b");
  {
    std::ofstream out(dir / "b.jsonl", std::ios::app);
    out << json{{"id", "bad"}, {"text", "boom"}}.dump() << '\n';
  }
  Pipeline p(Config(dir, 16), std::make_shared<StubClassifier>());
  p.add_source(std::make_unique<ReplaySource>(dir / "a.jsonl", 0, "ra"));
  p.add_source(std::make_unique<ReplaySource>(dir / "b.jsonl", 0, "rb"));
  std::size_t observed = 0;
  p.on_row([&](const SinkRow&) { ++observed; });
  p.start();
  p.wait();
  auto rows = ReadJsonl(dir / "sink.jsonl");
  ASSERT_EQ(rows.size(), 1200u);
  EXPECT_EQ(observed, 1200u);
  std::map<std::string, std::uint64_t> last_seq;
  std::set<std::string> ids;
  for (const auto& r : rows) {
    EXPECT_TRUE(ids.insert(r["id"].get<std::string>()).second);
    auto src = r["id"].get<std::string>().substr(0, 1);
    EXPECT_GT(r["seq"].get<std::uint64_t>(), last_seq[src]);
    last_seq[src] = r["seq"];
  }
  auto dl = ReadJsonl(dir / "dead.jsonl");
  ASSERT_EQ(dl.size(), 1u);
  EXPECT_EQ(dl[0]["key"], "bad");
  EXPECT_LE(p.stats().max_in_flight, 16u);
}

TEST(PipelineTest, SlowSinkAppliesBackpressure) {
  TempDir dir;
  WriteReplay(dir / "in.jsonl", 300);
  auto cfg = Config(dir, 8);
  cfg.max_batch = 4;
  cfg.sink_options.write = [](int fd, const char* d, std::size_t n) -> long {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return ::write(fd, d, n);
  };
  Pipeline p(cfg, std::make_shared<StubClassifier>());
  p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
  p.start();
  p.wait();
  EXPECT_EQ(p.stats().written, 300u);
  EXPECT_LE(p.stats().max_in_flight, 8u);
  EXPECT_GE(p.stats().max_in_flight, 4u);
}

TEST(PipelineTest, CrashThenRestartLeavesNoDuplicates) {
  TempDir dir;
  WriteReplay(dir / "in.jsonl", 2000);
  {
    auto cfg = Config(dir);
    cfg.sink_options.max_retries = 0;
    std::size_t budget = 60000;  // bytes before the simulated crash
    cfg.sink_options.write = [&](int fd, const char* d, std::size_t n) -> long {
      if (budget == 0) {
        errno = EIO;
        return -1;
      }
      const std::size_t k = std::min(n, budget);
      budget -= k;
      return ::write(fd, d, k);
    };
    Pipeline p(cfg, std::make_shared<StubClassifier>());
    p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
    p.start();
    EXPECT_THROW(p.wait(), SinkError);
    EXPECT_TRUE(p.halted());
  }
  EXPECT_EQ(fs::file_size(dir / "sink.jsonl"), 60000u);
  {
    Pipeline p(Config(dir), std::make_shared<StubClassifier>());
    p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
    p.start();
    p.wait();
    EXPECT_GT(p.stats().skipped_duplicates, 0u);
  }
  auto rows = ReadJsonl(dir / "sink.jsonl");
  std::set<std::string> ids;
  for (const auto& r : rows) ids.insert(r["id"].get<std::string>());
  EXPECT_EQ(rows.size(), 2000u);
  EXPECT_EQ(ids.size(), 2000u);
}

TEST(PipelineTest, DeterministicWithManualClock) {
  std::string first;
  for (int run = 0; run < 2; ++run) {
    TempDir dir;
    WriteReplay(dir / "in.jsonl", 500);
    Pipeline p(Config(dir), std::make_shared<StubClassifier>(), std::make_shared<ManualClock>(1700000000000));
    p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
    p.start();
    p.wait();
    std::ifstream in(dir / "sink.jsonl");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (run == 0) {
      first = content;
    } else {
      EXPECT_EQ(content, first);
    }
  }
  EXPECT_FALSE(first.empty());
}

TEST(PipelineTest, StopDrainsInFlight) {
  TempDir dir;
  WriteReplay(dir / "in.jsonl", 100000);
  Pipeline p(Config(dir), std::make_shared<StubClassifier>());
  p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl"));
  p.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  p.stop();
  auto st = p.stats();
  EXPECT_EQ(st.written, st.ingested);
  EXPECT_EQ(ReadJsonl(dir / "sink.jsonl").size(), st.written);
}

TEST(PipelineTest, ReplayRateIsPaced) {
  TempDir dir;
  WriteReplay(dir / "in.jsonl", 10);
  auto clock = std::make_shared<ManualClock>(0);
  Pipeline p(Config(dir), std::make_shared<StubClassifier>(), clock);
  p.add_source(std::make_unique<ReplaySource>(dir / "in.jsonl", 100.0));
  p.start();
  p.wait();
  // Ten records at 100/s: the last one is due 90 ms after the first.
  EXPECT_EQ(clock->wall_ms(), 90);
}

//===----------------------------------------------------------------------===//
// Network sources
//===----------------------------------------------------------------------===//

void SendTcp(std::uint16_t port, const std::string& payload) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  ASSERT_EQ(::send(fd, payload.data(), payload.size(), 0), static_cast<ssize_t>(payload.size()));
  ::close(fd);
}

template <typename Pred>
bool WaitFor(Pred pred, int ms = 5000) {
  for (int i = 0; i < ms / 5; ++i) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return pred();
}

TEST(TcpSourceTest, ValidAndMalformedLines) {
  TempDir dir;
  auto src = std::make_unique<TcpSource>("127.0.0.1", 0);
  const auto port = src->port();
  ASSERT_GT(port, 0);
  Pipeline p(Config(dir), std::make_shared<StubClassifier>());
  p.add_source(std::move(src));
  p.start();
  SendTcp(port, R"({"id":"t1","text":"hello","source":"yt","fetched_at":5})"
                "\nnot-json\n"
                R"({"id":"t2","text":"again"})");
  ASSERT_TRUE(WaitFor([&] { return p.stats().written == 2 && p.stats().dead_letters == 1; }));
  p.stop();
  auto rows = ReadJsonl(dir / "sink.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["id"], "t1");
  EXPECT_EQ(rows[0]["source"], "yt");
  EXPECT_EQ(rows[1]["source"], "tcp");
  EXPECT_EQ(p.dead_letters()[0].raw, "not-json");
}

TEST(HttpPollSourceTest, DeduplicatesAndSendsParameters) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_query;
  std::mutex mu;
  server.Get("/comments", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = ++hits;
    {
      std::lock_guard lock(mu);
      seen_query = req.get_param_value("maxResults") + "|" + req.get_param_value("textFormat") + "|" +
                   req.get_param_value("key");
    }
    if (n == 3) {
      res.set_content("<html>oops</html>", "text/html");
      return;
    }
    json page = {{"items",
                  {{{"id", "y1"}, {"text", "one"}},
                   {{"id", "y2"},
                    {"snippet", {{"topLevelComment", {{"snippet", {{"textDisplay", "two"}}}}}}}},
                   {{"text", "no id"}}}}};
    res.set_content(page.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir dir;
  HttpPollConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.interval_ms = 1;
  cfg.max_results = 50;
  cfg.api_key = "k123";
  cfg.max_polls = 4;
  Pipeline p(Config(dir), std::make_shared<StubClassifier>());
  p.add_source(std::make_unique<HttpPollSource>(cfg));
  p.start();
  p.wait();
  server.stop();
  th.join();

  EXPECT_EQ(hits.load(), 4);
  EXPECT_EQ(seen_query, "50|plainText|k123");
  auto rows = ReadJsonl(dir / "sink.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["id"], "y1");
  EXPECT_EQ(rows[1]["text"], "two");
  // Three item-level failures (one per good page) plus one malformed page.
  EXPECT_EQ(p.stats().dead_letters, 4u);
}

TEST(OpenSourceTest, Factory) {
  TempDir dir;
  WriteReplay(dir / "in.jsonl", 1);
  EXPECT_EQ(open_source(json{{"kind", "replay"}, {"path", (dir / "in.jsonl").string()}})->name(), "replay");
  EXPECT_EQ(open_source(json{{"kind", "tcp"}, {"port", 0}})->name(), "tcp");
  EXPECT_EQ(open_source(json{{"kind", "http_poll"}, {"base_url", "http://127.0.0.1:1"}})->name(),
            "http_poll");
  EXPECT_THROW(open_source(json{{"kind", "kafka"}}), Error);
  EXPECT_THROW(open_source(json{{"kind", "replay"}}), Error);
}

}  // namespace
}  // namespace viso::stream
