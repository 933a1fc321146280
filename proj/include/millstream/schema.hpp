#pragma once

#include <optional>
#include <string>
#include <vector>

#include <millstream/common.hpp>
#include <millstream/oee.hpp>
#include <millstream/table_config.hpp>
#include <millstream/table_store.hpp>

namespace millstream {

enum class SchemaPreset { kSimple, kComplex };

inline const char* preset_name(SchemaPreset p) {
  return p == SchemaPreset::kSimple ? "SIMPLE" : "COMPLEX";
}

inline SchemaPreset preset_from_name(std::string_view s) {
  if (s == "SIMPLE" || s == "simple") return SchemaPreset::kSimple;
  if (s == "COMPLEX" || s == "complex") return SchemaPreset::kComplex;
  throw ConfigError("unknown schema preset: " + std::string(s));
}

// Which join chain a master table belongs to, for correction routing.
enum class ChainKind { kStatus, kQuality, kProductionChain };

/// Either a fully resolved production interval or the first master lookup
/// that failed (table + key), which becomes the buffer entry's reason.
struct ProductionResolution {
  std::optional<ProductionInterval> production;
  std::string missing_table;
  std::string missing_key;
  bool malformed = false;
  std::string malformed_reason;

  bool ok() const { return production.has_value(); }
};

/// Binds the generic pipeline to one of the two steelworks data models.
///
/// SIMPLE: one table per category.
///   production(id, equip, start_ts, end_ts, qty, rate_per_hour)   operational
///   equipment_status(id, equip, state, ts)                        master
///   quality(id, equip, ts, good, defect)                          master
///
/// COMPLEX: each category normalized across three joined tables.
///   production_run(id, equip, order_id, start_ts, end_ts, qty)    operational
///   production_order(id, equip, product_id)                       master
///   product(id, rate_per_hour)                                    master, unkeyed
///   equipment_status_event(id, equip, code_id, ts)                master
///   status_code(id, class_id, label)                              master, unkeyed
///   status_class(id, is_on)                                       master, unkeyed
///   quality_inspection(id, equip, ts, sample_id)                  master
///   quality_sample(id, grade_id, units)                           master, unkeyed
///   quality_grade(id, is_good)                                    master, unkeyed
class SchemaModel {
public:
  SchemaModel(SchemaPreset preset, int operational_partitions) : preset_(preset) {
    auto master = [&](const std::string& name, const std::string& bkey) {
      TableConfig cfg;
      cfg.table = name;
      cfg.nature = TableNature::kMaster;
      cfg.row_key_column = "id";
      cfg.business_key_column = bkey;
      cfg.partition_count = 1;
      tables_.push_back(cfg);
    };
    if (preset == SchemaPreset::kSimple) {
      TableConfig prod;
      prod.table = "production";
      prod.nature = TableNature::kOperational;
      prod.row_key_column = "id";
      prod.business_key_column = "equip";
      prod.partition_count = operational_partitions;
      tables_.push_back(prod);
      master("equipment_status", "equip");
      master("quality", "equip");
      operational_ = "production";
      status_event_table_ = "equipment_status";
    } else {
      TableConfig run;
      run.table = "production_run";
      run.nature = TableNature::kOperational;
      run.row_key_column = "id";
      run.business_key_column = "equip";
      run.partition_count = operational_partitions;
      tables_.push_back(run);
      master("production_order", "equip");
      master("product", "");
      master("equipment_status_event", "equip");
      master("status_code", "");
      master("status_class", "");
      master("quality_inspection", "equip");
      master("quality_sample", "");
      master("quality_grade", "");
      operational_ = "production_run";
      status_event_table_ = "equipment_status_event";
    }
  }

  SchemaPreset preset() const { return preset_; }
  const std::vector<TableConfig>& tables() const { return tables_; }
  const std::string& operational_table() const { return operational_; }
  const std::string& status_event_table() const { return status_event_table_; }

  std::vector<TableConfig> master_tables() const {
    std::vector<TableConfig> out;
    for (const auto& t : tables_)
      if (t.nature == TableNature::kMaster) out.push_back(t);
    return out;
  }

  bool keyed(const std::string& table) const {
    const TableConfig* cfg = find_table(tables_, table);
    return cfg && !cfg->business_key_column.empty();
  }

  ChainKind chain(const std::string& table) const {
    if (table.rfind("quality", 0) == 0) return ChainKind::kQuality;
    if (table.rfind("equipment_status", 0) == 0 || table.rfind("status", 0) == 0)
      return ChainKind::kStatus;
    return ChainKind::kProductionChain;
  }

  /// Domain timestamp of a master stream row, for correction ranges.
  std::optional<TimestampMs> event_ts(const std::string& table, const Row& row) const {
    if (table != status_event_table_ && table != "quality" && table != "quality_inspection")
      return std::nullopt;
    auto it = row.find("ts");
    if (it == row.end()) return std::nullopt;
    return value_as_int(it->second);
  }

  ProductionResolution resolve_production(const Row& row, const MasterDataSource& source) const {
    ProductionResolution res;
    auto equip = str_col(row, "equip");
    auto start = int_col(row, "start_ts");
    auto end = int_col(row, "end_ts");
    auto qty = num_col(row, "qty");
    if (!equip || !start || !end || !qty || *start >= *end) {
      res.malformed = true;
      res.malformed_reason = "production row lacks equip/start_ts/end_ts/qty or has empty interval";
      return res;
    }
    double rate = 0;
    if (preset_ == SchemaPreset::kSimple) {
      auto r = num_col(row, "rate_per_hour");
      if (!r || *r <= 0) {
        res.malformed = true;
        res.malformed_reason = "production row lacks a positive rate_per_hour";
        return res;
      }
      rate = *r;
    } else {
      auto order_id = int_col(row, "order_id");
      if (!order_id) {
        res.malformed = true;
        res.malformed_reason = "production_run row lacks order_id";
        return res;
      }
      auto order = source.row_by_key("production_order", std::to_string(*order_id));
      if (!order) {
        res.missing_table = "production_order";
        res.missing_key = std::to_string(*order_id);
        return res;
      }
      auto product_id = int_col(*order, "product_id");
      if (!product_id) {
        res.malformed = true;
        res.malformed_reason = "production_order row lacks product_id";
        return res;
      }
      auto product = source.row_by_key("product", std::to_string(*product_id));
      if (!product) {
        res.missing_table = "product";
        res.missing_key = std::to_string(*product_id);
        return res;
      }
      auto r = num_col(*product, "rate_per_hour");
      if (!r || *r <= 0) {
        res.malformed = true;
        res.malformed_reason = "product row lacks a positive rate_per_hour";
        return res;
      }
      rate = *r;
    }
    res.production = ProductionInterval{*equip, *start, *end, *qty, rate};
    return res;
  }

  /// Status intervals for one equipment over [0, horizon), from whatever
  /// events currently resolve. Consecutive events bound each interval; the
  /// last one runs to the horizon.
  std::vector<StatusInterval> status_timeline(const std::string& equip,
                                              const MasterDataSource& source,
                                              TimestampMs horizon) const {
    struct Event {
      TimestampMs ts;
      std::int64_t id;
      bool on;
    };
    std::vector<Event> events;
    for (const Row& row : source.rows_for_key(status_event_table_, equip)) {
      auto ts = int_col(row, "ts");
      auto id = int_col(row, "id");
      if (!ts || !id) continue;
      std::optional<bool> on;
      if (preset_ == SchemaPreset::kSimple) {
        auto state = str_col(row, "state");
        if (state) on = (*state == "ON");
      } else {
        auto code_id = int_col(row, "code_id");
        if (code_id) {
          auto code = source.row_by_key("status_code", std::to_string(*code_id));
          if (code) {
            auto class_id = int_col(*code, "class_id");
            if (class_id) {
              auto cls = source.row_by_key("status_class", std::to_string(*class_id));
              if (cls) {
                auto is_on = cls->find("is_on");
                if (is_on != cls->end())
                  if (const bool* b = std::get_if<bool>(&is_on->second)) on = *b;
              }
            }
          }
        }
      }
      if (!on) continue;  // unresolved lookup; a later arrival re-splits
      events.push_back({*ts, *id, *on});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.id < b.id;
    });
    std::vector<StatusInterval> intervals;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const TimestampMs end = i + 1 < events.size() ? events[i + 1].ts : horizon;
      if (events[i].ts < end) intervals.push_back({equip, events[i].on, events[i].ts, end});
    }
    return intervals;
  }

  std::vector<QualityRecord> quality_records(const std::string& equip,
                                             const MasterDataSource& source) const {
    std::vector<QualityRecord> out;
    if (preset_ == SchemaPreset::kSimple) {
      for (const Row& row : source.rows_for_key("quality", equip)) {
        auto ts = int_col(row, "ts");
        auto good = int_col(row, "good");
        auto defect = int_col(row, "defect");
        if (!ts || !good || !defect) continue;
        out.push_back({equip, *ts, *good, *defect});
      }
    } else {
      for (const Row& row : source.rows_for_key("quality_inspection", equip)) {
        auto ts = int_col(row, "ts");
        auto sample_id = int_col(row, "sample_id");
        if (!ts || !sample_id) continue;
        auto sample = source.row_by_key("quality_sample", std::to_string(*sample_id));
        if (!sample) continue;
        auto grade_id = int_col(*sample, "grade_id");
        auto units = int_col(*sample, "units");
        if (!grade_id || !units) continue;
        auto grade = source.row_by_key("quality_grade", std::to_string(*grade_id));
        if (!grade) continue;
        auto is_good = grade->find("is_good");
        if (is_good == grade->end()) continue;
        const bool* b = std::get_if<bool>(&is_good->second);
        if (!b) continue;
        out.push_back({equip, *ts, *b ? *units : 0, *b ? 0 : *units});
      }
    }
    std::sort(out.begin(), out.end(), [](const QualityRecord& a, const QualityRecord& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.good + a.defect < b.good + b.defect;
    });
    return out;
  }

private:
  static std::optional<std::string> str_col(const Row& row, const std::string& col) {
    auto it = row.find(col);
    if (it == row.end()) return std::nullopt;
    return value_as_string(it->second);
  }
  static std::optional<std::int64_t> int_col(const Row& row, const std::string& col) {
    auto it = row.find(col);
    if (it == row.end()) return std::nullopt;
    return value_as_int(it->second);
  }
  static std::optional<double> num_col(const Row& row, const std::string& col) {
    auto it = row.find(col);
    if (it == row.end()) return std::nullopt;
    return value_as_double(it->second);
  }

  SchemaPreset preset_;
  std::vector<TableConfig> tables_;
  std::string operational_;
  std::string status_event_table_;
};

}  // namespace millstream
