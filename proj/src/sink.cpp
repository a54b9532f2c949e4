#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "viso/stream.h"

namespace viso::stream {

JsonlSink::JsonlSink(std::filesystem::path path, std::string key_field, SinkOptions options,
                     Clock* clock)
    : path_(std::move(path)), key_field_(std::move(key_field)), options_(std::move(options)), clock_(clock) {
  if (!clock_) {
    owned_clock_ = std::make_unique<SystemClock>();
    clock_ = owned_clock_.get();
  }
  if (options_.max_retries < 0) throw Error("max_retries must be >= 0");

  std::error_code ec;
  if (std::filesystem::exists(path_, ec)) {
    std::string content;
    {
      std::ifstream in(path_, std::ios::binary);
      if (!in) throw SinkError("cannot read sink: " + path_.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep < content.size()) {
      recovered_bytes_ = content.size() - keep;
      spdlog::warn("sink {}: dropping {} bytes of a partial last line", path_.string(), recovered_bytes_);
      std::filesystem::resize_file(path_, keep);
    }
    std::size_t start = 0, lineno = 0;
    while (start < keep) {
      const auto nl = content.find('\n', start);
      ++lineno;
      std::string_view line(content.data() + start, nl - start);
      start = nl + 1;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        keys_.insert(j.at(key_field_).get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw SinkError("corrupt sink line " + std::to_string(lineno) + " in " + path_.string() + ": " +
                        e.what());
      }
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw SinkError("cannot open sink " + path_.string() + ": " + std::strerror(errno));
}

JsonlSink::~JsonlSink() {
  if (fd_ >= 0) ::close(fd_);
}

void JsonlSink::write_all(const std::string& data) {
  std::size_t off = 0;
  int failures = 0;
  double backoff = options_.initial_backoff_ms;
  while (off < data.size()) {
    long n = options_.write ? options_.write(fd_, data.data() + off, data.size() - off)
                            : ::write(fd_, data.data() + off, data.size() - off);
    if (n > 0) {
      off += static_cast<std::size_t>(n);
      failures = 0;
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    const std::string why = n < 0 ? std::strerror(errno) : "no progress";
    if (failures >= options_.max_retries) {
      // The file may now end in a partial line; the next open repairs it.
      fd_broken_ = true;
      throw SinkError("sink write to " + path_.string() + " failed after " +
                      std::to_string(failures) + " retries: " + why);
    }
    ++failures;
    spdlog::warn("sink write failed ({}), retry {} in {} ms", why, failures, backoff);
    clock_->sleep_ms(backoff);
    backoff *= 2;
  }
  if (options_.fsync && ::fdatasync(fd_) != 0) {
    fd_broken_ = true;
    throw SinkError("fdatasync failed on " + path_.string() + ": " + std::strerror(errno));
  }
}

std::size_t JsonlSink::append(const std::vector<nlohmann::json>& objects) {
  if (fd_broken_) throw SinkError("sink " + path_.string() + " is unusable after a failed write");
  std::string buf;
  std::vector<std::string> fresh;
  std::unordered_set<std::string> batch;
  for (const auto& obj : objects) {
    auto key = obj.at(key_field_).get<std::string>();
    if (keys_.contains(key) || !batch.insert(key).second) continue;
    buf += obj.dump();
    buf += '\n';
    fresh.push_back(std::move(key));
  }
  if (fresh.empty()) return 0;
  write_all(buf);
  for (auto& k : fresh) keys_.insert(std::move(k));
  return fresh.size();
}

}  // namespace viso::stream
