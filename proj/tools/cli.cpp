#include "cli.h"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "viso/augment.h"
#include "viso/baseline.h"
#include "viso/dataset.h"
#include "viso/gateway.h"
#include "viso/metrics.h"
#include "viso/pipeline.h"
#include "viso/stream.h"
#include "viso/textcnn.h"
#include "viso/utf8.h"

#ifndef VISO_DEFAULT_DATA_DIR
#define VISO_DEFAULT_DATA_DIR "data"
#endif

namespace viso::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupt{false};

fs::path data_dir() {
  if (const char* d = std::getenv("VISO_DATA_DIR"); d && *d) return d;
  return VISO_DEFAULT_DATA_DIR;
}

struct ModelOptions {
  std::string resources;
  std::string model;
  std::string embeddings;

  void add_to(CLI::App* app, bool with_model) {
    app->add_option("--resources", resources, "Directory with protected.txt, teencode.tsv, stopwords.txt, lexicon.txt");
    if (with_model) {
      app->add_option("--model", model, "Text-CNN checkpoint (default: bundled fixture)");
      app->add_option("--embeddings", embeddings, "Word vectors in text format (default: bundled fixture)");
    }
  }
  fs::path resource_dir() const { return resources.empty() ? data_dir() : fs::path(resources); }
  fs::path model_path() const { return model.empty() ? data_dir() / "fixtures" / "textcnn.ckpt" : fs::path(model); }
  fs::path embeddings_path() const {
    if (!embeddings.empty()) return embeddings;
    if (!model.empty()) {
      auto beside = fs::path(model).parent_path() / "embeddings.vec";
      if (fs::exists(beside)) return beside;
    }
    return data_dir() / "fixtures" / "embeddings.vec";
  }
  ResourcePaths paths() const { return ResourcePaths::in_directory(resource_dir()); }
  std::shared_ptr<TextCnnClassifier> classifier() const {
    return gateway::load_textcnn_classifier(model_path(), embeddings_path(), paths());
  }
};

std::vector<std::string> input_lines(const std::vector<std::string>& texts) {
  if (!texts.empty()) return texts;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(std::cin, line)) lines.push_back(line);
  return lines;
}

json report_json(const metrics::MetricReport& r) {
  json cm = json::array();
  for (const auto& row : r.confusion.counts) cm.push_back(row);
  return {{"accuracy", r.accuracy},
          {"precision_macro", r.precision_macro},
          {"recall_macro", r.recall_macro},
          {"f1_macro", r.f1},
          {"standard_accuracy", r.standard_accuracy},
          {"mean_class_f1", r.mean_class_f1},
          {"confusion", cm},
          {"n", r.confusion.total()}};
}

json prediction_json(const std::string& id, const Prediction& p, const std::string& version) {
  return {{"id", id},
          {"label", label_name(p.label)},
          {"label_code", p.code()},
          {"probs", p.probs},
          {"empty_input", p.empty_input},
          {"model_version", version}};
}

augment::LabelCounts parse_targets(const std::string& s) {
  augment::LabelCounts t{};
  std::stringstream ss(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= kNumClasses) throw Error("targets need exactly 3 comma-separated counts");
    try {
      std::size_t used = 0;
      t[i++] = std::stoull(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw Error("bad target count '" + part + "'");
    }
  }
  if (i != kNumClasses) throw Error("targets need exactly 3 comma-separated counts");
  return t;
}

augment::EdaConfig eda_config(double alpha, std::uint64_t seed, const std::string& synonyms) {
  augment::EdaConfig cfg;
  cfg.alpha = alpha;
  cfg.seed = seed;
  fs::path syn = synonyms.empty() ? data_dir() / "synonyms.tsv" : fs::path(synonyms);
  if (fs::exists(syn)) cfg.synonyms = augment::load_synonyms(syn);
  return cfg;
}

json parse_source_config(const std::string& kind, const std::string& raw) {
  json cfg = json::object();
  if (!raw.empty()) {
    std::string text = raw;
    if (raw[0] == '@') {
      std::ifstream in(raw.substr(1));
      if (!in) throw Error("cannot read " + raw.substr(1));
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    try {
      cfg = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(std::string("--source-config is not valid JSON: ") + e.what());
    }
  }
  if (!kind.empty()) cfg["kind"] = kind;
  return cfg;
}

// Runs until every source is exhausted or an interrupt arrives.
void run_until_done(stream::Pipeline& p, double max_seconds) {
  const auto start = std::chrono::steady_clock::now();
  while (!p.finished()) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (g_interrupt || (max_seconds > 0 && elapsed >= max_seconds)) {
      p.request_stop();
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  p.wait();
}

json stats_json(const stream::PipelineStats& s) {
  return {{"ingested", s.ingested},          {"written", s.written},
          {"skipped_duplicates", s.skipped_duplicates}, {"dead_letters", s.dead_letters},
          {"batches", s.batches},            {"max_in_flight", s.max_in_flight}};
}

}  // namespace

void request_interrupt() { g_interrupt = true; }

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  g_interrupt = false;
  CLI::App app{"Vietnamese hate-speech classification and moderation toolkit", "viso"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  // normalize / segment
  std::vector<std::string> texts;
  ModelOptions mo;
  auto* normalize_cmd = app.add_subcommand("normalize", "Apply phase-1 normalization to each text (or stdin line)");
  normalize_cmd->add_option("texts", texts);
  mo.add_to(normalize_cmd, false);

  bool seg_stats = false;
  auto* segment_cmd = app.add_subcommand("segment", "Full preprocessing: print the final tokens per text");
  segment_cmd->add_option("texts", texts);
  segment_cmd->add_flag("--stats", seg_stats, "Print teencode/stopword corpus statistics instead");
  mo.add_to(segment_cmd, false);

  // augment
  std::string input, output, targets, synonyms;
  double alpha = 0.15;
  std::uint64_t seed = 0;
  auto* augment_cmd = app.add_subcommand("augment", "Balance a labeled dataset with EDA");
  augment_cmd->add_option("--input", input)->required();
  augment_cmd->add_option("--output", output)->required();
  augment_cmd->add_option("--targets", targets, "CLEAN,OFFENSIVE,HATE counts")->required();
  augment_cmd->add_option("--alpha", alpha);
  augment_cmd->add_option("--seed", seed);
  augment_cmd->add_option("--synonyms", synonyms);
  mo.add_to(augment_cmd, false);

  // train
  std::string train_path, dev_path, ckpt_out;
  textcnn::TrainConfig tc;
  std::size_t max_len = 20;
  auto* train_cmd = app.add_subcommand("train", "Train the Text-CNN on static embeddings");
  train_cmd->add_option("--train", train_path)->required();
  train_cmd->add_option("--dev", dev_path);
  train_cmd->add_option("--embeddings", mo.embeddings)->required();
  train_cmd->add_option("--out", ckpt_out)->required();
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--batch-size", tc.batch_size);
  train_cmd->add_option("--seed", tc.seed);
  train_cmd->add_option("--max-len", max_len);
  train_cmd->add_option("--balance", targets, "EDA targets CLEAN,OFFENSIVE,HATE applied to --train");
  train_cmd->add_option("--alpha", alpha);
  train_cmd->add_option("--synonyms", synonyms);
  train_cmd->add_option("--resources", mo.resources);

  // eval
  std::string data_path;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset");
  eval_cmd->add_option("--data", data_path)->required();
  mo.add_to(eval_cmd, true);

  // baseline
  std::string baseline_path;
  auto* baseline_cmd = app.add_subcommand("baseline", "TF-IDF + multinomial Naive Bayes");
  baseline_cmd->require_subcommand(1);
  auto* bfit = baseline_cmd->add_subcommand("fit", "Fit on a labeled dataset");
  bfit->add_option("--train", train_path)->required();
  bfit->add_option("--out", baseline_path)->required();
  bfit->add_option("--resources", mo.resources);
  auto* bpred = baseline_cmd->add_subcommand("predict", "Predict a dataset; prints metrics when labeled");
  bpred->add_option("--model", baseline_path)->required();
  bpred->add_option("--data", data_path)->required();
  bpred->add_option("--output", output, "Write per-row predictions as JSONL");
  bpred->add_option("--resources", mo.resources);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Classify texts offline");
  predict_cmd->add_option("--text", texts, "Text to classify (repeatable)");
  predict_cmd->add_option("--input", input, "Dataset file to classify");
  mo.add_to(predict_cmd, true);

  // stream
  std::string source_kind, source_config, sink_path = "sink.jsonl", dead_letter_path;
  stream::PipelineConfig pc;
  double max_seconds = 0;
  auto* stream_cmd = app.add_subcommand("stream", "Run the streaming classifier until the source ends or SIGINT");
  stream_cmd->add_option("--source", source_kind)->check(CLI::IsMember({"replay", "tcp", "http_poll"}));
  stream_cmd->add_option("--source-config", source_config, "JSON object or @file");
  stream_cmd->add_option("--sink", sink_path);
  stream_cmd->add_option("--dead-letter", dead_letter_path);
  stream_cmd->add_option("--batch-interval-ms", pc.batch_interval_ms);
  stream_cmd->add_option("--queue-cap", pc.queue_cap);
  stream_cmd->add_option("--max-batch", pc.max_batch);
  stream_cmd->add_option("--max-seconds", max_seconds, "Stop after this long (0 = no limit)");
  mo.add_to(stream_cmd, true);

  // serve
  std::string config_path, host = "127.0.0.1", decision_log = "decisions.jsonl";
  int port = 8080;
  std::int64_t heartbeat_ms = 15000;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway, optionally with a stream");
  serve_cmd->add_option("--config", config_path, "JSON config file; other flags are ignored");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--source", source_kind)->check(CLI::IsMember({"replay", "tcp", "http_poll"}));
  serve_cmd->add_option("--source-config", source_config);
  serve_cmd->add_option("--sink", sink_path);
  serve_cmd->add_option("--decision-log", decision_log);
  serve_cmd->add_option("--heartbeat-ms", heartbeat_ms);
  serve_cmd->add_option("--max-seconds", max_seconds);
  mo.add_to(serve_cmd, true);

  // bench
  std::size_t bench_n = 10000;
  auto* bench_cmd = app.add_subcommand("bench", "Replay synthetic comments through the stream and report throughput");
  bench_cmd->add_option("--n", bench_n);
  bench_cmd->add_option("--seed", seed);
  bench_cmd->add_option("--queue-cap", pc.queue_cap);
  bench_cmd->add_option("--batch-interval-ms", pc.batch_interval_ms);
  mo.add_to(bench_cmd, true);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (normalize_cmd->parsed()) {
      auto cfg = normalize::load_config(mo.paths().protected_lexicon, mo.paths().teencode);
      for (const auto& t : input_lines(texts)) out << normalize::phase1(t, cfg) << '\n';
      return 0;
    }

    if (segment_cmd->parsed()) {
      const auto pre = Preprocessor::load(mo.paths());
      const auto lines = input_lines(texts);
      if (seg_stats) {
        std::vector<TokenSequence> corpus;
        for (const auto& t : lines) {
          corpus.push_back(segment::word_segment(normalize::phase1(t, pre.normalize), pre.lexicon));
        }
        auto st = segment::corpus_stats(corpus, pre.teencode, pre.stopwords);
        out << json{{"teencode_count", st.teencode_count}, {"teencode_pct", st.teencode_pct},
                    {"stopword_count", st.stopword_count}, {"stopword_pct", st.stopword_pct},
                    {"total_words", st.total_words}}
                   .dump()
            << '\n';
        return 0;
      }
      for (const auto& t : lines) out << utf8::join(pre(t).tokens, " ") << '\n';
      return 0;
    }

    if (augment_cmd->parsed()) {
      const auto pre = Preprocessor::load(mo.paths());
      auto examples = dataset::labeled(dataset::load(input), pre);
      auto balanced = augment::balance_dataset(examples, parse_targets(targets), eda_config(alpha, seed, synonyms));
      dataset::save_jsonl(output, dataset::from_examples(balanced));
      auto counts = augment::count_labels(balanced);
      out << json{{"written", balanced.size()}, {"counts", counts}}.dump() << '\n';
      return 0;
    }

    if (train_cmd->parsed()) {
      const auto pre = Preprocessor::load(mo.paths());
      const auto table = embed::EmbeddingTable::load(mo.embeddings);
      auto train_ex = dataset::labeled(dataset::load(train_path), pre);
      if (!targets.empty()) {
        train_ex = augment::balance_dataset(train_ex, parse_targets(targets), eda_config(alpha, tc.seed, synonyms));
      }
      std::vector<LabeledExample> dev_ex;
      if (!dev_path.empty()) dev_ex = dataset::labeled(dataset::load(dev_path), pre);
      textcnn::Architecture arch;
      arch.dim = table.dim();
      arch.max_len = max_len;
      auto result = textcnn::train(dataset::to_matrices(train_ex, table, max_len),
                                   dataset::to_matrices(dev_ex, table, max_len), arch, tc);
      for (const auto& h : result.history) {
        json line = {{"epoch", h.epoch}, {"train_loss", h.train_loss}};
        if (!dev_ex.empty()) line["dev_f1_macro"] = h.dev_macro_f1;
        out << line.dump() << '\n';
      }
      textcnn::save_checkpoint(ckpt_out, result.best);
      out << json{{"checkpoint", ckpt_out}, {"best_epoch", result.best_epoch},
                  {"model_version", textcnn::model_version(result.best)}}
                 .dump()
          << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      auto clf = mo.classifier();
      std::vector<Label> preds, golds;
      for (const auto& d : dataset::load(data_path)) {
        if (!d.label) throw Error("document '" + d.id + "' has no label");
        preds.push_back(clf->classify(d.id, d.text).label);
        golds.push_back(*d.label);
      }
      out << report_json(metrics::report(metrics::confusion(preds, golds))).dump() << '\n';
      return 0;
    }

    if (bfit->parsed()) {
      const auto pre = Preprocessor::load(mo.paths());
      auto examples = dataset::labeled(dataset::load(train_path), pre);
      std::vector<TokenSequence> docs;
      std::vector<Label> labels;
      for (auto& e : examples) {
        docs.push_back(std::move(e.tokens));
        labels.push_back(e.label);
      }
      auto model = baseline::BaselineModel::fit(docs, labels);
      model.save(baseline_path);
      out << json{{"model", baseline_path}, {"features", model.tfidf.num_features()}, {"documents", docs.size()}}
                 .dump()
          << '\n';
      return 0;
    }

    if (bpred->parsed()) {
      const auto pre = Preprocessor::load(mo.paths());
      const auto model = baseline::BaselineModel::load(baseline_path);
      std::ofstream pred_out;
      if (!output.empty()) pred_out.open(output);
      std::vector<Label> preds, golds;
      bool all_labeled = true;
      for (const auto& d : dataset::load(data_path)) {
        const auto tokens = dataset::tokenize(d, pre);
        Prediction p;
        if (tokens.empty()) {
          p.probs = {1.0, 0.0, 0.0};
          p.empty_input = true;
        } else {
          p = model.predict(tokens);
        }
        if (pred_out.is_open()) pred_out << prediction_json(d.id, p, "tfidf-mnb-v1").dump() << '\n';
        preds.push_back(p.label);
        if (d.label) {
          golds.push_back(*d.label);
        } else {
          all_labeled = false;
        }
      }
      if (all_labeled && !preds.empty()) {
        out << report_json(metrics::report(metrics::confusion(preds, golds))).dump() << '\n';
      } else {
        out << json{{"predicted", preds.size()}}.dump() << '\n';
      }
      return 0;
    }

    if (predict_cmd->parsed()) {
      if (texts.empty() && input.empty()) throw CLI::RequiredError("--text or --input");
      auto clf = mo.classifier();
      for (std::size_t i = 0; i < texts.size(); ++i) {
        const std::string id = "text" + std::to_string(i);
        out << prediction_json(id, clf->classify(id, texts[i]), clf->version()).dump() << '\n';
      }
      if (!input.empty()) {
        for (const auto& d : dataset::load(input)) {
          out << prediction_json(d.id, clf->classify(d.id, d.text), clf->version()).dump() << '\n';
        }
      }
      return 0;
    }

    if (stream_cmd->parsed()) {
      if (source_kind.empty()) throw CLI::RequiredError("--source");
      pc.sink_path = sink_path;
      pc.dead_letter_path = dead_letter_path;
      stream::Pipeline p(pc, mo.classifier());
      p.add_source(stream::open_source(parse_source_config(source_kind, source_config)));
      p.start();
      run_until_done(p, max_seconds);
      out << stats_json(p.stats()).dump() << '\n';
      return 0;
    }

    if (serve_cmd->parsed()) {
      gateway::ServeConfig sc;
      if (!config_path.empty()) {
        sc = gateway::ServeConfig::load(config_path);
      } else {
        sc.model_path = mo.model_path();
        sc.embeddings_path = mo.embeddings_path();
        sc.resources = mo.paths();
        if (!source_kind.empty()) sc.source = parse_source_config(source_kind, source_config);
        sc.sink_path = sink_path;
        sc.decision_log = decision_log;
        sc.host = host;
        sc.port = port;
        sc.heartbeat_ms = heartbeat_ms;
        sc.queue_cap = pc.queue_cap;
        sc.batch_interval_ms = pc.batch_interval_ms;
        sc.max_batch = pc.max_batch;
      }
      auto clf = gateway::load_textcnn_classifier(sc.model_path, sc.embeddings_path, sc.resources);
      gateway::GatewayOptions go;
      go.decision_log = sc.decision_log;
      go.heartbeat_ms = sc.heartbeat_ms;
      gateway::Gateway gw(go, clf);
      gw.preload_sink(sc.sink_path);
      std::unique_ptr<stream::Pipeline> pipeline;
      if (sc.source.is_object()) {
        stream::PipelineConfig cfg;
        cfg.sink_path = sc.sink_path;
        cfg.dead_letter_path = sc.dead_letter_path;
        cfg.queue_cap = sc.queue_cap;
        cfg.batch_interval_ms = sc.batch_interval_ms;
        cfg.max_batch = sc.max_batch;
        pipeline = std::make_unique<stream::Pipeline>(cfg, clf);
        gw.attach(*pipeline);
        pipeline->add_source(stream::open_source(sc.source));
      }
      const int bound = gw.start(sc.host, sc.port);
      out << json{{"listening", sc.host + ":" + std::to_string(bound)}, {"model_version", clf->version()}}.dump()
          << std::endl;
      if (pipeline) pipeline->start();
      const auto start = std::chrono::steady_clock::now();
      while (!g_interrupt) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (max_seconds > 0 && elapsed >= max_seconds) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      if (pipeline) pipeline->stop();
      gw.stop();
      out << gw.stats().to_json().dump() << '\n';
      return 0;
    }

    if (bench_cmd->parsed()) {
      auto clf = mo.classifier();
      const auto dir = fs::temp_directory_path() / ("viso_bench_" + std::to_string(::getpid()));
      fs::remove_all(dir);
      fs::create_directories(dir);
      {
        std::ofstream f(dir / "in.jsonl");
        for (const auto& c : dataset::synthetic_comments(bench_n, seed)) {
          f << json{{"id", c.id}, {"text", c.text}, {"source", c.source}, {"fetched_at", c.fetched_at}}.dump()
            << '\n';
        }
      }
      pc.sink_path = dir / "sink.jsonl";
      double latency_sum = 0;
      const auto t0 = std::chrono::steady_clock::now();
      stream::PipelineStats st;
      {
        stream::Pipeline p(pc, clf);
        p.on_row([&](const stream::SinkRow& r) { latency_sum += r.prediction.latency_ms; });
        p.add_source(std::make_unique<stream::ReplaySource>(dir / "in.jsonl"));
        p.start();
        p.wait();
        st = p.stats();
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fs::remove_all(dir);
      out << json{{"n", bench_n},
                  {"written", st.written},
                  {"seconds", secs},
                  {"comments_per_s", static_cast<double>(st.written) / secs},
                  {"mean_classify_ms", st.written ? latency_sum / static_cast<double>(st.written) : 0.0},
                  {"batches", st.batches},
                  {"model_version", clf->version()}}
                 .dump()
          << '\n';
      return st.written == bench_n ? 0 : 2;
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace viso::cli
