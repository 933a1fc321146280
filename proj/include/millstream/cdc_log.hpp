#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <millstream/common.hpp>
#include <millstream/record.hpp>
#include <millstream/table_config.hpp>

namespace millstream {

/// Resume point within a segmented log: (segment id, last consumed seq).
struct LogOffset {
  std::uint64_t file_id = 1;
  std::uint64_t seq = 0;

  static LogOffset zero() { return LogOffset{}; }
  bool operator==(const LogOffset&) const = default;
};

namespace detail {

inline std::string segment_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seg-%06llu.log", static_cast<unsigned long long>(id));
  return buf;
}

inline std::filesystem::path segment_path(const std::filesystem::path& dir, std::uint64_t id) {
  return dir / segment_name(id);
}

inline std::vector<std::uint64_t> list_segments(const std::filesystem::path& dir) {
  std::vector<std::uint64_t> ids;
  if (!std::filesystem::exists(dir)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("seg-", 0) == 0 && name.size() > 8 && name.ends_with(".log"))
      ids.push_back(std::strtoull(name.c_str() + 4, nullptr, 10));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace detail

/// Append-only change log for one source database. All tables share one log,
/// interleaved, the way a database transaction log behaves. Single writer.
class CdcLogWriter {
public:
  CdcLogWriter(std::filesystem::path dir, std::vector<TableConfig> configs,
               std::uint64_t records_per_segment = 100000)
      : dir_(std::move(dir)),
        configs_(std::move(configs)),
        records_per_segment_(records_per_segment) {
    if (records_per_segment_ == 0) throw ConfigError("records_per_segment must be positive");
    std::filesystem::create_directories(dir_);
    recover();
  }

  /// Appends one event; the log assigns the sequence number. Returns it.
  std::uint64_t append(const std::string& table, Op op, TimestampMs tx_ts, const Row& row) {
    ChangeRecord rec;
    rec.table = table;
    rec.op = op;
    rec.tx_ts = tx_ts;
    rec.row = row;
    validate(rec);
    rec.seq = next_seq_++;
    if (!out_.is_open() || segment_lines_ >= records_per_segment_) open_next_segment();
    out_ << rec.encode() << '\n';
    out_.flush();
    if (!out_) throw PipelineError("cdc log write failed: " + dir_.string());
    ++segment_lines_;
    return rec.seq;
  }

  std::uint64_t last_seq() const { return next_seq_ - 1; }

private:
  void validate(const ChangeRecord& rec) const {
    const TableConfig* cfg = find_table(configs_, rec.table);
    if (!cfg) throw ConfigError("append to unconfigured table: " + rec.table);
    auto it = rec.row.find(cfg->row_key_column);
    if (it == rec.row.end())
      throw ValidationError(rec.table + ": row lacks row-key column " + cfg->row_key_column);
    if (rec.op != Op::kDelete && std::holds_alternative<std::nullptr_t>(it->second))
      throw ValidationError(rec.table + ": null row key");
  }

  void recover() {
    auto ids = detail::list_segments(dir_);
    if (ids.empty()) {
      segment_id_ = 0;  // first append opens segment 1
      return;
    }
    segment_id_ = ids.back();
    std::ifstream in(detail::segment_path(dir_, segment_id_));
    std::string line;
    std::uint64_t lines = 0, max_seq = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      max_seq = ChangeRecord::decode(line).seq;
      ++lines;
    }
    segment_lines_ = lines;
    next_seq_ = max_seq + 1;
    if (lines > 0)
      out_.open(detail::segment_path(dir_, segment_id_), std::ios::app);
  }

  void open_next_segment() {
    if (out_.is_open()) out_.close();
    ++segment_id_;
    out_.open(detail::segment_path(dir_, segment_id_), std::ios::app);
    if (!out_) throw PipelineError("cannot open log segment in " + dir_.string());
    segment_lines_ = 0;
  }

  std::filesystem::path dir_;
  std::vector<TableConfig> configs_;
  std::uint64_t records_per_segment_;
  std::ofstream out_;
  std::uint64_t segment_id_ = 0;
  std::uint64_t segment_lines_ = 0;
  std::uint64_t next_seq_ = 1;
};

struct PollResult {
  std::vector<ChangeRecord> records;
  LogOffset offset;  // resume point covering everything scanned
};

/// Log Streamer side: reads segments, filters one table per stream, tracks
/// offsets. Read-only over the log directory; it never touches source tables.
class CdcLogReader {
public:
  CdcLogReader(std::filesystem::path dir, std::vector<TableConfig> configs)
      : dir_(std::move(dir)), configs_(std::move(configs)) {}

  /// Yields up to max_records of `table` with seq greater than from.seq, in
  /// seq order. Scans every log line past the offset (the log is shared by
  /// all tables) but emits only the requested table's records.
  PollResult poll(const std::string& table, const LogOffset& from, std::size_t max_records = 1024) {
    if (!find_table(configs_, table)) throw ConfigError("poll of unconfigured table: " + table);
    return scan(from, max_records, &table);
  }

  /// Same scan without a table filter; used by batch consumers of the log.
  PollResult poll_any(const LogOffset& from, std::size_t max_records = 4096) {
    return scan(from, max_records, nullptr);
  }

  /// Reads the whole log from the zero offset.
  std::vector<ChangeRecord> read_all() {
    std::vector<ChangeRecord> all;
    LogOffset at = LogOffset::zero();
    for (;;) {
      PollResult r = poll_any(at, 8192);
      if (r.records.empty() && r.offset == at) break;
      for (auto& rec : r.records) all.push_back(std::move(rec));
      at = r.offset;
    }
    return all;
  }

  std::uint64_t lines_scanned() const { return lines_scanned_; }

private:
  struct Cursor {
    LogOffset offset;
    std::uint64_t byte_pos = 0;
  };

  PollResult scan(const LogOffset& from, std::size_t max_records, const std::string* table) {
    PollResult result;
    result.offset = from;
    const std::string needle = table ? "\"table\":\"" + *table + "\"" : std::string();
    auto ids = detail::list_segments(dir_);

    for (std::size_t i = 0; i < ids.size() && result.records.size() < max_records; ++i) {
      const std::uint64_t id = ids[i];
      if (id < result.offset.file_id) continue;
      std::ifstream in(detail::segment_path(dir_, id), std::ios::binary);
      if (!in) continue;
      std::uint64_t pos = 0;
      if (id == result.offset.file_id) {
        // Resume mid-segment from the cached byte position when it matches.
        auto it = cursors_.find(cursor_key(table));
        if (it != cursors_.end() && it->second.offset == result.offset)
          pos = it->second.byte_pos;
      }
      in.seekg(static_cast<std::streamoff>(pos));
      std::string line;
      while (result.records.size() < max_records && std::getline(in, line)) {
        if (in.eof() && !in.good()) break;  // unterminated tail line: wait for the writer
        const std::uint64_t line_end = pos + line.size() + 1;
        if (!line.empty()) {
          ++lines_scanned_;
          if (!table || line.find(needle) != std::string::npos) {
            ChangeRecord rec;
            try {
              rec = ChangeRecord::decode(line);
            } catch (const DecodeError& e) {
              throw DecodeError("segment " + detail::segment_name(id) + " at byte " +
                                std::to_string(pos) + ": " + e.what());
            }
            if (rec.seq > result.offset.seq) {
              result.offset.seq = rec.seq;
              if (!table || rec.table == *table) {
                annotate_row_key(rec);
                result.records.push_back(std::move(rec));
              }
            }
          } else {
            // Non-matching line: advance seq past it without a full decode.
            std::uint64_t seq = quick_seq(line);
            if (seq > result.offset.seq) result.offset.seq = seq;
          }
        }
        pos = line_end;
      }
      result.offset.file_id = id;
      cursors_[cursor_key(table)] = Cursor{result.offset, pos};
      // Only move past this segment once a later one exists; the writer may
      // still be appending here.
      if (result.records.size() >= max_records) break;
      if (i + 1 < ids.size()) {
        result.offset.file_id = ids[i + 1];
        cursors_[cursor_key(table)] = Cursor{result.offset, 0};
      }
    }
    return result;
  }

  static std::uint64_t quick_seq(const std::string& line) {
    // Lines start with {"seq":N, per the framing contract.
    constexpr std::string_view prefix = "{\"seq\":";
    if (line.rfind(prefix, 0) != 0) return 0;
    return std::strtoull(line.c_str() + prefix.size(), nullptr, 10);
  }

  void annotate_row_key(ChangeRecord& rec) const {
    const TableConfig* cfg = find_table(configs_, rec.table);
    if (!cfg) return;
    auto it = rec.row.find(cfg->row_key_column);
    if (it != rec.row.end())
      if (auto key = canonical_key_string(it->second)) rec.row_key = *key;
  }

  std::string cursor_key(const std::string* table) const { return table ? *table : "\x01*"; }

  std::filesystem::path dir_;
  std::vector<TableConfig> configs_;
  std::map<std::string, Cursor> cursors_;
  std::uint64_t lines_scanned_ = 0;
};

/// Durable resume point for one tailer stream. File format: "segment_id seq".
class CheckpointStore {
public:
  explicit CheckpointStore(std::filesystem::path path) : path_(std::move(path)) {}

  std::optional<LogOffset> load() const {
    std::ifstream in(path_);
    if (!in) return std::nullopt;
    LogOffset off;
    if (!(in >> off.file_id >> off.seq)) return std::nullopt;
    return off;
  }

  void store(const LogOffset& offset) const {
    const auto tmp = path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << offset.file_id << ' ' << offset.seq << '\n';
      if (!out) throw PipelineError("checkpoint write failed: " + path_.string());
    }
    std::filesystem::rename(tmp, path_);
  }

private:
  std::filesystem::path path_;
};

}  // namespace millstream
