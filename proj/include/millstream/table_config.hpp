#pragma once

#include <string>
#include <vector>

#include <millstream/common.hpp>

namespace millstream {

enum class TableNature { kMaster, kOperational };

inline const char* nature_name(TableNature n) {
  return n == TableNature::kMaster ? "MASTER" : "OPERATIONAL";
}

/// Per-table ETL configuration, fixed for a run.
struct TableConfig {
  std::string table;
  TableNature nature = TableNature::kMaster;
  std::string row_key_column;
  // Domain partition/filter key column. Required for operational tables;
  // master tables may leave it empty (small lookup tables are then cached
  // unfiltered on every worker).
  std::string business_key_column;
  int partition_count = 1;

  void validate() const {
    if (table.empty()) throw ConfigError("table name empty");
    if (row_key_column.empty()) throw ConfigError(table + ": row_key_column empty");
    if (nature == TableNature::kOperational && business_key_column.empty())
      throw ConfigError(table + ": operational table needs a business key column");
    if (partition_count < 1) throw ConfigError(table + ": partition_count < 1");
  }
};

inline const TableConfig* find_table(const std::vector<TableConfig>& configs,
                                     std::string_view table) {
  for (const auto& cfg : configs)
    if (cfg.table == table) return &cfg;
  return nullptr;
}

}  // namespace millstream
