#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <thread>

#include <millstream/broker.hpp>
#include <millstream/cdc_log.hpp>
#include <millstream/common.hpp>
#include <millstream/dead_letter.hpp>
#include <millstream/record.hpp>
#include <millstream/table_config.hpp>

namespace millstream {

/// Partition key for a captured record: row key for master tables, business
/// key for operational tables, rendered canonically.
inline std::optional<std::string> select_key(const ChangeRecord& rec, const TableConfig& cfg) {
  const std::string& column =
      cfg.nature == TableNature::kMaster ? cfg.row_key_column : cfg.business_key_column;
  auto it = rec.row.find(column);
  if (it == rec.row.end()) return std::nullopt;
  return canonical_key_string(it->second);
}

struct PumpOptions {
  std::size_t batch_size = 512;
  std::chrono::milliseconds poll_interval{50};
  double duplicate_fraction = 0.0;  // injected redelivery rate, for idempotence tests
  std::uint64_t duplicate_seed = 0;
  int max_publish_retries = 50;
};

struct PumpCounters {
  std::uint64_t published = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t dead_letters = 0;
};

/// One Message Producer stream: tail a table from the CDC log, select keys,
/// publish, then checkpoint. Checkpoint-after-ack chooses duplicates over
/// loss; downstream idempotence absorbs the duplicates.
class Pump {
public:
  Pump(CdcLogReader reader, TableConfig cfg, Broker& broker, CheckpointStore checkpoint,
       DeadLetterSink& dead_letters, PumpOptions options = {})
      : reader_(std::move(reader)),
        cfg_(std::move(cfg)),
        broker_(broker),
        checkpoint_(std::move(checkpoint)),
        dead_letters_(dead_letters),
        options_(options),
        dup_rng_(options.duplicate_seed ^ fnv1a64(cfg_.table)) {
    cfg_.validate();
    if (auto persisted = checkpoint_.load()) offset_ = *persisted;
  }

  /// Drains whatever the log currently holds for this table. Returns the
  /// number of records published in this call.
  std::uint64_t pump_once() {
    std::uint64_t published = 0;
    for (;;) {
      PollResult batch = reader_.poll(cfg_.table, offset_, options_.batch_size);
      if (batch.records.empty() && batch.offset == offset_) break;
      for (const ChangeRecord& rec : batch.records) {
        publish_one(rec);
        ++published;
      }
      offset_ = batch.offset;
      checkpoint_.store(offset_);
      if (batch.records.size() < options_.batch_size) break;
    }
    return published;
  }

  /// Tail loop: poll, publish, checkpoint, sleep when caught up. Runs until
  /// stop() is called or, if expected_records is set, until that many records
  /// have been published at least once.
  void run(std::atomic<bool>& stop, std::uint64_t expected_records = 0) {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::uint64_t n = pump_once();
      if (expected_records && counters_.published - counters_.duplicates >= expected_records)
        break;
      if (n == 0) std::this_thread::sleep_for(options_.poll_interval);
    }
  }

  const PumpCounters& counters() const { return counters_; }
  const LogOffset& offset() const { return offset_; }

private:
  void publish_one(const ChangeRecord& rec) {
    auto key = select_key(rec, cfg_);
    if (!key) {
      dead_letters_.divert(rec, "missing or non-scalar partition key column");
      ++counters_.dead_letters;
      return;
    }
    const bool tombstone = rec.op == Op::kDelete;
    publish_with_retry(*key, rec.encode(), tombstone);
    ++counters_.published;
    if (options_.duplicate_fraction > 0.0 && dup_dist_(dup_rng_) < options_.duplicate_fraction) {
      publish_with_retry(*key, rec.encode(), tombstone);
      ++counters_.published;
      ++counters_.duplicates;
    }
  }

  void publish_with_retry(const std::string& key, const std::string& payload, bool tombstone) {
    for (int attempt = 0;; ++attempt) {
      try {
        broker_.publish(cfg_.table, key, payload, tombstone);
        return;
      } catch (const PipelineError&) {
        if (attempt >= options_.max_publish_retries) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(1 << std::min(attempt, 6)));
      }
    }
  }

  CdcLogReader reader_;
  TableConfig cfg_;
  Broker& broker_;
  CheckpointStore checkpoint_;
  DeadLetterSink& dead_letters_;
  PumpOptions options_;
  LogOffset offset_ = LogOffset::zero();
  PumpCounters counters_;
  std::mt19937_64 dup_rng_;
  std::uniform_real_distribution<double> dup_dist_{0.0, 1.0};
};

}  // namespace millstream
