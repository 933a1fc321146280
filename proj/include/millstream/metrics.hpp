#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <millstream/common.hpp>

namespace millstream {

/// Per-worker counters and a records/s time series in 100 ms buckets.
/// Each worker appends to its own metrics without locks; the harness reads
/// them racily while running and exactly after joining the workers.
class WorkerMetrics {
public:
  static constexpr std::int64_t kBucketMs = 100;
  static constexpr std::size_t kMaxBuckets = 36000;  // one hour of runtime

  explicit WorkerMetrics(std::string worker_id, std::chrono::steady_clock::time_point epoch)
      : worker_id_(std::move(worker_id)), epoch_(epoch), buckets_(kMaxBuckets) {}

  void on_processed() {
    processed_.fetch_add(1, std::memory_order_relaxed);
    const std::size_t b = bucket_now();
    if (b < buckets_.size()) buckets_[b].fetch_add(1, std::memory_order_relaxed);
  }

  void on_dead_letter() { dead_letters_.fetch_add(1, std::memory_order_relaxed); }
  void on_correction() { corrections_.fetch_add(1, std::memory_order_relaxed); }
  void on_reprocessed() { reprocessed_.fetch_add(1, std::memory_order_relaxed); }
  void set_buffered(std::int64_t n) { buffered_.store(n, std::memory_order_relaxed); }
  void add_bootstrap_ms(double ms) {
    std::scoped_lock lk(mu_);
    bootstrap_ms_.push_back(ms);
  }

  const std::string& worker_id() const { return worker_id_; }
  std::uint64_t processed() const { return processed_.load(std::memory_order_relaxed); }
  std::uint64_t dead_letters() const { return dead_letters_.load(std::memory_order_relaxed); }
  std::uint64_t corrections() const { return corrections_.load(std::memory_order_relaxed); }
  std::uint64_t reprocessed() const { return reprocessed_.load(std::memory_order_relaxed); }
  std::int64_t buffered() const { return buffered_.load(std::memory_order_relaxed); }

  std::vector<double> bootstrap_ms() const {
    std::scoped_lock lk(mu_);
    return bootstrap_ms_;
  }

  /// Processed count over [from_ms, to_ms) since the epoch.
  std::uint64_t processed_between(std::int64_t from_ms, std::int64_t to_ms) const {
    std::uint64_t total = 0;
    for (std::size_t b = static_cast<std::size_t>(std::max<std::int64_t>(0, from_ms / kBucketMs));
         b < buckets_.size() && static_cast<std::int64_t>(b) * kBucketMs < to_ms; ++b)
      total += buckets_[b].load(std::memory_order_relaxed);
    return total;
  }

  std::size_t bucket_now() const {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - epoch_)
                        .count();
    return static_cast<std::size_t>(ms / kBucketMs);
  }

  const std::vector<std::atomic<std::uint32_t>>& buckets() const { return buckets_; }

private:
  std::string worker_id_;
  std::chrono::steady_clock::time_point epoch_;
  std::vector<std::atomic<std::uint32_t>> buckets_;
  std::atomic<std::uint64_t> processed_{0};
  std::atomic<std::uint64_t> dead_letters_{0};
  std::atomic<std::uint64_t> corrections_{0};
  std::atomic<std::uint64_t> reprocessed_{0};
  std::atomic<std::int64_t> buffered_{0};
  mutable std::mutex mu_;
  std::vector<double> bootstrap_ms_;
};

/// Run-wide registry; owns the epoch and writes the CSV sink.
class MetricsRegistry {
public:
  MetricsRegistry() : epoch_(std::chrono::steady_clock::now()) {}

  WorkerMetrics& register_worker(const std::string& worker_id) {
    std::scoped_lock lk(mu_);
    workers_.push_back(std::make_unique<WorkerMetrics>(worker_id, epoch_));
    return *workers_.back();
  }

  void record_stage_count(const std::string& stage, const std::string& id, std::uint64_t count) {
    std::scoped_lock lk(mu_);
    stage_counts_[stage + "/" + id] = count;
  }

  std::chrono::steady_clock::time_point epoch() const { return epoch_; }

  std::int64_t now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 epoch_)
        .count();
  }

  std::vector<const WorkerMetrics*> workers() const {
    std::scoped_lock lk(mu_);
    std::vector<const WorkerMetrics*> out;
    for (const auto& w : workers_) out.push_back(w.get());
    return out;
  }

  std::uint64_t total_processed() const {
    std::uint64_t n = 0;
    for (const auto* w : workers()) n += w->processed();
    return n;
  }

  std::uint64_t processed_between(std::int64_t from_ms, std::int64_t to_ms) const {
    std::uint64_t n = 0;
    for (const auto* w : workers()) n += w->processed_between(from_ms, to_ms);
    return n;
  }

  /// CSV columns: timestamp_ms, stage, worker_id, records_per_s, buffered,
  /// dead_letters. One row per second per worker, plus one bootstrap row per
  /// cache rebuild (records_per_s column carries the duration in ms there).
  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << "timestamp_ms,stage,worker_id,records_per_s,buffered,dead_letters\n";
    for (const auto* w : workers()) {
      const auto& buckets = w->buckets();
      const std::size_t per_second = 1000 / WorkerMetrics::kBucketMs;
      for (std::size_t s = 0; s * per_second < buckets.size(); ++s) {
        std::uint64_t count = 0;
        for (std::size_t i = s * per_second; i < (s + 1) * per_second && i < buckets.size(); ++i)
          count += buckets[i].load(std::memory_order_relaxed);
        if (count == 0) continue;
        out << s * 1000 << ",processor," << w->worker_id() << ',' << count << ','
            << w->buffered() << ',' << w->dead_letters() << '\n';
      }
      for (double ms : w->bootstrap_ms())
        out << 0 << ",bootstrap_ms," << w->worker_id() << ',' << ms << ",0,0\n";
    }
    std::scoped_lock lk(mu_);
    for (const auto& [key, count] : stage_counts_) {
      const auto slash = key.find('/');
      out << 0 << ',' << key.substr(0, slash) << ',' << key.substr(slash + 1) << ',' << count
          << ",0,0\n";
    }
  }

private:
  std::chrono::steady_clock::time_point epoch_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<WorkerMetrics>> workers_;
  std::map<std::string, std::uint64_t> stage_counts_;
};

}  // namespace millstream
