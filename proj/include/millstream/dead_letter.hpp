#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>

#include <millstream/common.hpp>
#include <millstream/record.hpp>

namespace millstream {

/// Sink for records the pipeline refuses to process. Same line framing as the
/// CDC log plus an error-reason field. Shared by producer and processor.
class DeadLetterSink {
public:
  explicit DeadLetterSink(std::filesystem::path path) : path_(std::move(path)) {}

  void divert(const ChangeRecord& rec, const std::string& reason) {
    std::scoped_lock lk(mu_);
    if (!out_.is_open()) out_.open(path_, std::ios::app);
    ordered_json j;
    j["reason"] = reason;
    j["record"] = json::parse(rec.encode());
    out_ << j.dump() << '\n';
    out_.flush();
    ++count_;
  }

  void divert_raw(const std::string& payload, const std::string& reason) {
    std::scoped_lock lk(mu_);
    if (!out_.is_open()) out_.open(path_, std::ios::app);
    ordered_json j;
    j["reason"] = reason;
    j["raw"] = payload;
    out_ << j.dump() << '\n';
    out_.flush();
    ++count_;
  }

  std::uint64_t count() const {
    std::scoped_lock lk(mu_);
    return count_;
  }

private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
};

}  // namespace millstream
