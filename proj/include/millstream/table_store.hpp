#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <millstream/common.hpp>
#include <millstream/record.hpp>
#include <millstream/table_config.hpp>

namespace millstream {

/// Query surface the transformation needs over master data, whatever actually
/// backs it (a worker's filtered in-memory cache, the source tables for the
/// look-back baseline, or full tables rebuilt by the batch oracle).
class MasterDataSource {
public:
  virtual ~MasterDataSource() = default;
  /// All current rows of a table for one business key.
  virtual std::vector<Row> rows_for_key(const std::string& table,
                                        const std::string& business_key) const = 0;
  /// Point lookup by row key.
  virtual std::optional<Row> row_by_key(const std::string& table,
                                        const std::string& row_key) const = 0;
  /// Distinct business keys present in a table.
  virtual std::vector<std::string> business_keys(const std::string& table) const = 0;
};

/// The source database's tables, maintained by replaying change records.
/// The workload generator applies rows here while it writes the CDC log; the
/// oracle rebuilds an instance of this from the log alone.
class TableStore : public MasterDataSource {
public:
  explicit TableStore(std::vector<TableConfig> configs) : configs_(std::move(configs)) {
    for (const auto& cfg : configs_) tables_[cfg.table].cfg = &*find_table(configs_, cfg.table);
  }

  void apply(const ChangeRecord& rec) {
    auto it = tables_.find(rec.table);
    if (it == tables_.end()) throw ConfigError("apply to unconfigured table: " + rec.table);
    Table& t = it->second;
    auto rk = rec.row.find(t.cfg->row_key_column);
    if (rk == rec.row.end()) throw ValidationError(rec.table + ": row lacks row key");
    auto key = canonical_key_string(rk->second);
    if (!key) throw ValidationError(rec.table + ": non-scalar row key");
    if (rec.op == Op::kDelete) {
      auto old = t.rows.find(*key);
      if (old != t.rows.end()) {
        unindex(t, *key, old->second);
        t.rows.erase(old);
      }
      return;
    }
    auto old = t.rows.find(*key);
    if (old != t.rows.end()) unindex(t, *key, old->second);
    t.rows[*key] = rec.row;
    index(t, *key, rec.row);
  }

  std::vector<Row> rows_for_key(const std::string& table,
                                const std::string& business_key) const override {
    const Table& t = tables_.at(table);
    std::vector<Row> out;
    auto it = t.by_business.find(business_key);
    if (it == t.by_business.end()) return out;
    for (const auto& row_key : it->second) out.push_back(t.rows.at(row_key));
    return out;
  }

  std::optional<Row> row_by_key(const std::string& table,
                                const std::string& row_key) const override {
    const Table& t = tables_.at(table);
    auto it = t.rows.find(row_key);
    if (it == t.rows.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> business_keys(const std::string& table) const override {
    const Table& t = tables_.at(table);
    std::vector<std::string> keys;
    for (const auto& [k, rows] : t.by_business) keys.push_back(k);
    return keys;
  }

  std::uint64_t row_count(const std::string& table) const {
    return tables_.at(table).rows.size();
  }

  /// Writes every table to `dir` as JSON lines with a per-business-key byte
  /// index, so look-back queries can be served from disk.
  void freeze(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    frozen_dir_ = dir;
    for (auto& [name, t] : tables_) {
      std::ofstream out(dir / (name + ".tbl"), std::ios::trunc | std::ios::binary);
      std::uint64_t pos = 0;
      t.frozen_spans.clear();
      for (const auto& [bkey, row_keys] : t.by_business) {
        const std::uint64_t begin = pos;
        for (const auto& rk : row_keys) {
          const std::string line = row_to_json(t.rows.at(rk)).dump() + "\n";
          out << line;
          pos += line.size();
        }
        t.frozen_spans[bkey] = {begin, pos};
      }
      // Rows of master tables without a business key column live under one span.
      t.frozen_path = dir / (name + ".tbl");
    }
  }

private:
  friend class LookbackSource;

  struct Table {
    const TableConfig* cfg = nullptr;
    std::map<std::string, Row> rows;                          // row key -> row
    std::map<std::string, std::vector<std::string>> by_business;  // business key -> row keys
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> frozen_spans;
    std::filesystem::path frozen_path;
  };

  std::string business_of(const Table& t, const Row& row) const {
    if (t.cfg->business_key_column.empty()) return "";
    auto it = row.find(t.cfg->business_key_column);
    if (it == row.end()) return "";
    return canonical_key_string(it->second).value_or("");
  }

  void index(Table& t, const std::string& row_key, const Row& row) {
    t.by_business[business_of(t, row)].push_back(row_key);
  }

  void unindex(Table& t, const std::string& row_key, const Row& row) {
    auto it = t.by_business.find(business_of(t, row));
    if (it == t.by_business.end()) return;
    std::erase(it->second, row_key);
    if (it->second.empty()) t.by_business.erase(it);
  }

  std::vector<TableConfig> configs_;
  std::map<std::string, Table> tables_;
  std::optional<std::filesystem::path> frozen_dir_;
};

/// Look-back baseline source: every query is served from the frozen on-disk
/// tables through one shared lock, plus a configurable per-query latency that
/// stands in for the round trip to a remote source database.
class LookbackSource : public MasterDataSource {
public:
  LookbackSource(const TableStore& store, std::chrono::microseconds per_query_latency)
      : store_(store), latency_(per_query_latency) {}

  std::vector<Row> rows_for_key(const std::string& table,
                                const std::string& business_key) const override {
    std::scoped_lock lk(mu_);
    pay_latency();
    const TableStore::Table& t = store_.tables_.at(table);
    auto span = t.frozen_spans.find(business_key);
    std::vector<Row> out;
    if (span == t.frozen_spans.end()) return out;
    for (const auto& line : read_span(t, span->second)) out.push_back(row_from_json(json::parse(line)));
    return out;
  }

  std::optional<Row> row_by_key(const std::string& table,
                                const std::string& row_key) const override {
    std::scoped_lock lk(mu_);
    pay_latency();
    // Point lookups hit the in-memory primary key map the way a source
    // database index would; the latency models the communication cost.
    return store_.row_by_key(table, row_key);
  }

  std::vector<std::string> business_keys(const std::string& table) const override {
    std::scoped_lock lk(mu_);
    pay_latency();
    return store_.business_keys(table);
  }

  std::uint64_t queries() const { return queries_; }

private:
  void pay_latency() const {
    ++queries_;
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  }

  std::vector<std::string> read_span(const TableStore::Table& t,
                                     std::pair<std::uint64_t, std::uint64_t> span) const {
    std::ifstream in(t.frozen_path, std::ios::binary);
    if (!in) throw PipelineError("look-back store not frozen: " + t.frozen_path.string());
    in.seekg(static_cast<std::streamoff>(span.first));
    std::string chunk(span.second - span.first, '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    std::vector<std::string> lines;
    std::size_t at = 0;
    while (at < chunk.size()) {
      const std::size_t nl = chunk.find('\n', at);
      if (nl == std::string::npos) break;
      lines.push_back(chunk.substr(at, nl - at));
      at = nl + 1;
    }
    return lines;
  }

  const TableStore& store_;
  std::chrono::microseconds latency_;
  mutable std::mutex mu_;
  mutable std::uint64_t queries_ = 0;
};

}  // namespace millstream
