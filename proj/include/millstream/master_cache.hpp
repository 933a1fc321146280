#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <millstream/broker.hpp>
#include <millstream/common.hpp>
#include <millstream/record.hpp>
#include <millstream/table_config.hpp>
#include <millstream/table_store.hpp>

namespace millstream {

/// One worker's in-memory master tables, filtered to that worker's assigned
/// business keys. Rows reflect, for the filter, exactly the compacted topic
/// snapshot plus every master message consumed since. Tables without a
/// business key column hold replicated lookup data and ignore the filter.
class MasterCache : public MasterDataSource {
public:
  using KeyFilter = std::function<bool(const std::string&)>;

  explicit MasterCache(std::vector<TableConfig> master_configs)
      : configs_(std::move(master_configs)) {
    for (const auto& cfg : configs_) tables_[cfg.table].cfg = &*find_table(configs_, cfg.table);
  }

  void reset(KeyFilter filter) {
    filter_ = std::move(filter);
    for (auto& [name, t] : tables_) {
      t.rows.clear();
      t.by_business.clear();
      t.high_water = 0;
      ++t.version;
    }
  }

  /// Seeds one table from a compacted snapshot (payloads are encoded change
  /// records). Only rows whose business key passes the filter are admitted.
  void bootstrap_table(const std::string& table,
                       const std::map<std::string, std::string>& snapshot) {
    for (const auto& [row_key, payload] : snapshot) {
      ChangeRecord rec = ChangeRecord::decode(payload);
      apply(rec);
    }
  }

  /// Applies one live master record. Returns true when admitted (row upserted
  /// or deleted); non-matching keys are skipped silently.
  bool apply(const ChangeRecord& rec) {
    auto it = tables_.find(rec.table);
    if (it == tables_.end()) throw ConfigError("master cache has no table " + rec.table);
    Table& t = it->second;
    auto rk = rec.row.find(t.cfg->row_key_column);
    if (rk == rec.row.end()) return false;
    auto row_key = canonical_key_string(rk->second);
    if (!row_key) return false;

    if (rec.op == Op::kDelete) {
      auto old = t.rows.find(*row_key);
      if (old == t.rows.end()) return false;  // never admitted (or already compacted away)
      unindex(t, *row_key, old->second.first);
      t.rows.erase(old);
      admit_stamp(t, rec.tx_ts);
      return true;
    }

    std::string bkey;
    if (!t.cfg->business_key_column.empty()) {
      auto bk = rec.row.find(t.cfg->business_key_column);
      if (bk == rec.row.end()) return false;
      auto canon = canonical_key_string(bk->second);
      if (!canon) return false;
      bkey = *canon;
      if (filter_ && !filter_(bkey)) return false;
    }
    auto old = t.rows.find(*row_key);
    if (old != t.rows.end()) unindex(t, *row_key, old->second.first);
    t.rows[*row_key] = {rec.row, rec.tx_ts};
    t.by_business[bkey].insert(*row_key);
    admit_stamp(t, rec.tx_ts);
    return true;
  }

  TimestampMs high_water(const std::string& table) const { return tables_.at(table).high_water; }
  std::uint64_t version(const std::string& table) const { return tables_.at(table).version; }
  std::size_t size(const std::string& table) const { return tables_.at(table).rows.size(); }

  std::vector<Row> rows_for_key(const std::string& table,
                                const std::string& business_key) const override {
    const Table& t = tables_.at(table);
    std::vector<Row> out;
    auto it = t.by_business.find(business_key);
    if (it == t.by_business.end()) return out;
    out.reserve(it->second.size());
    for (const auto& rk : it->second) out.push_back(t.rows.at(rk).first);
    return out;
  }

  std::optional<Row> row_by_key(const std::string& table,
                                const std::string& row_key) const override {
    const Table& t = tables_.at(table);
    auto it = t.rows.find(row_key);
    if (it == t.rows.end()) return std::nullopt;
    return it->second.first;
  }

  std::vector<std::string> business_keys(const std::string& table) const override {
    const Table& t = tables_.at(table);
    std::vector<std::string> keys;
    for (const auto& [k, rows] : t.by_business)
      if (!k.empty()) keys.push_back(k);
    return keys;
  }

private:
  struct Table {
    const TableConfig* cfg = nullptr;
    std::unordered_map<std::string, std::pair<Row, TimestampMs>> rows;  // row key -> (row, tx)
    std::map<std::string, std::set<std::string>> by_business;
    TimestampMs high_water = 0;
    std::uint64_t version = 0;
  };

  void admit_stamp(Table& t, TimestampMs tx) {
    t.high_water = std::max(t.high_water, tx);
    ++t.version;
  }

  void unindex(Table& t, const std::string& row_key, const Row& row) {
    std::string bkey;
    if (!t.cfg->business_key_column.empty()) {
      auto it = row.find(t.cfg->business_key_column);
      if (it != row.end()) bkey = canonical_key_string(it->second).value_or("");
    }
    auto bit = t.by_business.find(bkey);
    if (bit != t.by_business.end()) {
      bit->second.erase(row_key);
      if (bit->second.empty()) t.by_business.erase(bit);
    }
  }

  std::vector<TableConfig> configs_;
  std::map<std::string, Table> tables_;
  KeyFilter filter_;
};

}  // namespace millstream
