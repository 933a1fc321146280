#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <millstream/cdc_log.hpp>
#include <millstream/common.hpp>
#include <millstream/oee.hpp>
#include <millstream/producer.hpp>
#include <millstream/schema.hpp>
#include <millstream/table_store.hpp>
#include <millstream/uploader.hpp>

namespace millstream {

/// Synthetic steelworks workload: temporally coherent status / production /
/// quality data per equipment unit, deterministic for a given seed.
struct WorkloadSpec {
  int equipment_count = 20;
  int records_per_table = 2000;
  SchemaPreset preset = SchemaPreset::kSimple;
  std::uint64_t seed = 1;
  double late_master_fraction = 0.0;  // master rows withheld past their dependents
  double duplicate_fraction = 0.0;    // redeliveries injected by the pumps
  TimestampMs window_ms = 3'600'000;  // one hour of simulated time

  void validate() const {
    if (equipment_count < 1) throw ConfigError("equipment_count must be >= 1");
    if (records_per_table < 1) throw ConfigError("records_per_table must be >= 1");
    if (late_master_fraction < 0 || late_master_fraction > 1)
      throw ConfigError("late_master_fraction must be in [0,1]");
    if (duplicate_fraction < 0 || duplicate_fraction > 1)
      throw ConfigError("duplicate_fraction must be in [0,1]");
    if (window_ms < 1000) throw ConfigError("window_ms too small");
  }
};

struct Manifest {
  std::uint64_t seed = 0;
  SchemaPreset preset = SchemaPreset::kSimple;
  TimestampMs window_ms = 0;
  int equipment_count = 0;
  std::map<std::string, std::uint64_t> counts;
  std::vector<std::string> business_keys;
  std::uint64_t displaced_master = 0;
  std::uint64_t total_records = 0;
  std::uint64_t operational_records = 0;

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["preset"] = preset_name(preset);
    j["window_ms"] = window_ms;
    j["equipment_count"] = equipment_count;
    j["counts"] = counts;
    j["business_keys"] = business_keys;
    j["displaced_master"] = displaced_master;
    j["total_records"] = total_records;
    j["operational_records"] = operational_records;
    return j;
  }

  static Manifest from_json(const json& j) {
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.preset = preset_from_name(j.at("preset").get<std::string>());
    m.window_ms = j.at("window_ms").get<std::int64_t>();
    m.equipment_count = j.at("equipment_count").get<int>();
    for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it)
      m.counts[it.key()] = it.value().get<std::uint64_t>();
    m.business_keys = j.at("business_keys").get<std::vector<std::string>>();
    m.displaced_master = j.at("displaced_master").get<std::uint64_t>();
    m.total_records = j.at("total_records").get<std::uint64_t>();
    m.operational_records = j.at("operational_records").get<std::uint64_t>();
    return m;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << to_json().dump(2) << '\n';
  }

  static Manifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest not found: " + path.string());
    json j;
    in >> j;
    return from_json(j);
  }
};

namespace workload_detail {

struct Pending {
  std::string table;
  std::int64_t id = 0;
  TimestampMs tx = 0;
  Row row;
  bool operational = false;
  std::string equip;  // empty for unkeyed lookup rows
};

// Sort key: natural order is (tx, table, id); a displaced master row adopts
// the position right after its target operational row.
struct OrderKey {
  TimestampMs tx;
  std::string table;
  std::int64_t id;
  int displaced;           // 0 natural, 1 displaced-after-target
  std::int64_t orig_id;    // tie break among rows displaced to one target

  bool operator<(const OrderKey& o) const {
    return std::tie(tx, table, id, displaced, orig_id) <
           std::tie(o.tx, o.table, o.id, o.displaced, o.orig_id);
  }
};

}  // namespace workload_detail

/// Generates the workload into the CDC log (and, when given, the source table
/// store the look-back baseline queries). Returns the manifest.
inline Manifest generate(const WorkloadSpec& spec, const SchemaModel& schema, CdcLogWriter& log,
                         TableStore* source_tables = nullptr) {
  using workload_detail::OrderKey;
  using workload_detail::Pending;
  spec.validate();
  if ((spec.preset == SchemaPreset::kSimple) != (schema.preset() == SchemaPreset::kSimple))
    throw ConfigError("schema preset does not match workload spec");

  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };

  const TimestampMs W = spec.window_ms;
  const int E = spec.equipment_count;
  const int per_equip = std::max(2, spec.records_per_table / E);
  const bool complex = spec.preset == SchemaPreset::kComplex;

  std::vector<Pending> records;
  std::map<std::string, std::int64_t> next_id;  // per table id counters
  auto add = [&](const std::string& table, TimestampMs tx, Row row, bool operational,
                 const std::string& equip) {
    Pending p;
    p.table = table;
    p.id = ++next_id[table];
    p.tx = tx;
    row["id"] = p.id;
    p.row = std::move(row);
    p.operational = operational;
    p.equip = equip;
    records.push_back(std::move(p));
    return p.id;
  };

  // Lookup tables, created when the plant model is configured (time ~0).
  std::vector<std::int64_t> off_codes, product_ids;
  std::int64_t on_code = 0, good_grade = 0, bad_grade = 0;
  if (complex) {
    add("status_class", 0, Row{{"is_on", true}}, false, "");        // id 1
    add("status_class", 1, Row{{"is_on", false}}, false, "");       // id 2
    add("status_class", 2, Row{{"is_on", false}}, false, "");       // id 3
    on_code = add("status_code", 3, Row{{"class_id", std::int64_t{1}}, {"label", "RUN"}}, false, "");
    off_codes.push_back(
        add("status_code", 4, Row{{"class_id", std::int64_t{2}}, {"label", "DOWN"}}, false, ""));
    off_codes.push_back(
        add("status_code", 5, Row{{"class_id", std::int64_t{3}}, {"label", "SETUP"}}, false, ""));
    off_codes.push_back(
        add("status_code", 6, Row{{"class_id", std::int64_t{2}}, {"label", "CLEAN"}}, false, ""));
    good_grade = add("quality_grade", 7, Row{{"is_good", true}, {"label", "PRIME"}}, false, "");
    bad_grade = add("quality_grade", 8, Row{{"is_good", false}, {"label", "SCRAP"}}, false, "");
    const int products = std::max(4, E / 2);
    for (int i = 0; i < products; ++i)
      product_ids.push_back(add("product", 9 + i,
                                Row{{"rate_per_hour", std::floor(uniform(1800, 7200))}}, false, ""));
  }

  std::vector<std::string> business_keys;
  std::uint64_t op_count = 0;
  for (int e = 1; e <= E; ++e) {
    const std::string equip = "E" + std::to_string(e);
    business_keys.push_back(equip);
    const double rate = std::floor(uniform(1800, 7200));  // parts per hour

    // Status timeline: first event at 0, terminal event at the horizon,
    // interior switch points in between, states alternating.
    const int n_events = std::max(2, per_equip);
    std::vector<TimestampMs> event_ts{0};
    {
      std::set<TimestampMs> interior;
      while (static_cast<int>(interior.size()) < n_events - 2)
        interior.insert(uniform_int(1, W - 1));
      event_ts.insert(event_ts.end(), interior.begin(), interior.end());
      event_ts.push_back(W);
    }
    bool on = uniform(0, 1) < 0.6;
    std::vector<std::pair<TimestampMs, TimestampMs>> on_segments;
    for (std::size_t i = 0; i + 1 < event_ts.size(); ++i) {
      const TimestampMs ts = event_ts[i];
      if (complex) {
        const std::int64_t code =
            on ? on_code : off_codes[static_cast<std::size_t>(uniform_int(0, 2))];
        add("equipment_status_event", ts, Row{{"equip", equip}, {"code_id", code}, {"ts", ts}},
            false, equip);
      } else {
        add("equipment_status", ts, Row{{"equip", equip}, {"state", on ? "ON" : "OFF"}, {"ts", ts}},
            false, equip);
      }
      if (on) on_segments.emplace_back(ts, event_ts[i + 1]);
      on = !on;
    }
    // Terminal sentinel row: closes the last interval and carries the
    // table's transaction watermark past every production in the window.
    if (complex)
      add("equipment_status_event", W, Row{{"equip", equip}, {"code_id", on_code}, {"ts", W}},
          false, equip);
    else
      add("equipment_status", W, Row{{"equip", equip}, {"state", "ON"}, {"ts", W}}, false, equip);

    // Production runs inside ON segments.
    struct Run {
      TimestampMs start, end;
      std::int64_t qty;
    };
    std::vector<Run> runs;
    const int n_runs = per_equip;
    if (!on_segments.empty()) {
      const int per_segment =
          std::max<int>(1, static_cast<int>((n_runs + on_segments.size() - 1) / on_segments.size()));
      for (const auto& [a, b] : on_segments) {
        if (static_cast<int>(runs.size()) >= n_runs) break;
        const TimestampMs slot = (b - a) / per_segment;
        if (slot < 400) continue;
        for (int s = 0; s < per_segment && static_cast<int>(runs.size()) < n_runs; ++s) {
          const TimestampMs s0 = a + s * slot;
          const TimestampMs start = s0 + static_cast<TimestampMs>(uniform(0.02, 0.15) * slot);
          const TimestampMs end =
              start + std::max<TimestampMs>(200, static_cast<TimestampMs>(uniform(0.5, 0.8) * slot));
          if (end >= s0 + slot || end >= W) continue;
          const double eff = uniform(0.55, 0.98);
          const auto qty = static_cast<std::int64_t>(
              std::llround(rate / 3600000.0 * static_cast<double>(end - start) * eff));
          runs.push_back({start, end, qty});
        }
      }
    }

    if (complex) {
      // Group consecutive runs under orders; the product fixes the rate.
      std::size_t r = 0;
      while (r < runs.size()) {
        const std::size_t group = std::min<std::size_t>(
            runs.size() - r, static_cast<std::size_t>(uniform_int(1, 3)));
        const std::int64_t product =
            product_ids[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(product_ids.size()) - 1))];
        const TimestampMs order_tx =
            std::max<TimestampMs>(0, runs[r].start - uniform_int(1, 5000));
        const std::int64_t order_id =
            add("production_order", order_tx, Row{{"equip", equip}, {"product_id", product}},
                false, equip);
        for (std::size_t k = 0; k < group; ++k, ++r) {
          add("production_run", runs[r].end,
              Row{{"equip", equip},
                  {"order_id", order_id},
                  {"start_ts", runs[r].start},
                  {"end_ts", runs[r].end},
                  {"qty", runs[r].qty}},
              true, equip);
          ++op_count;
        }
      }
    } else {
      for (const Run& run : runs) {
        add("production", run.end,
            Row{{"equip", equip},
                {"start_ts", run.start},
                {"end_ts", run.end},
                {"qty", run.qty},
                {"rate_per_hour", rate}},
            true, equip);
        ++op_count;
      }
    }

    // Quality inspections inside production runs.
    if (!runs.empty()) {
      const int n_quality = per_equip;
      for (int q = 0; q < n_quality; ++q) {
        const Run& run = runs[static_cast<std::size_t>(uniform_int(
            0, static_cast<std::int64_t>(runs.size()) - 1))];
        if (run.end - run.start < 2) continue;
        const TimestampMs ts = uniform_int(run.start, run.end - 1);
        const auto sample = uniform_int(1, 20);
        const auto defect = static_cast<std::int64_t>(
            std::llround(static_cast<double>(sample) * uniform(0.0, 0.25)));
        const std::int64_t good = sample - defect;
        if (complex) {
          const bool is_defect_sample = defect > 0 && uniform(0, 1) < 0.5;
          const std::int64_t units = is_defect_sample ? defect : good;
          if (units <= 0) continue;
          const std::int64_t sample_id =
              add("quality_sample", ts,
                  Row{{"grade_id", is_defect_sample ? bad_grade : good_grade}, {"units", units}},
                  false, "");
          add("quality_inspection", ts, Row{{"equip", equip}, {"ts", ts}, {"sample_id", sample_id}},
              false, equip);
        } else {
          add("quality", ts, Row{{"equip", equip}, {"ts", ts}, {"good", good}, {"defect", defect}},
              false, equip);
        }
      }
    }
  }

  // Natural order interleaves all tables by transaction time; the late
  // fraction then withholds chosen master rows until just after the next
  // operational row they feed.
  std::vector<std::pair<OrderKey, std::size_t>> order;
  order.reserve(records.size());
  std::vector<std::size_t> op_indices;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].operational) op_indices.push_back(i);
  std::sort(op_indices.begin(), op_indices.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    return std::tie(ra.tx, ra.table, ra.id) < std::tie(rb.tx, rb.table, rb.id);
  });
  std::map<std::string, std::vector<std::size_t>> ops_by_equip;
  for (std::size_t oi : op_indices) ops_by_equip[records[oi].equip].push_back(oi);

  auto first_op_at_or_after = [&](const std::vector<std::size_t>& ops,
                                  TimestampMs tx) -> const Pending* {
    auto it = std::lower_bound(ops.begin(), ops.end(), tx, [&](std::size_t oi, TimestampMs t) {
      return records[oi].tx < t;
    });
    return it == ops.end() ? nullptr : &records[*it];
  };

  std::uint64_t displaced = 0;
  std::uniform_real_distribution<double> pick(0, 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Pending& r = records[i];
    OrderKey key{r.tx, r.table, r.id, 0, 0};
    if (!r.operational && spec.late_master_fraction > 0 &&
        pick(rng) < spec.late_master_fraction) {
      // First operational row at or after this master row's transaction time
      // (same equipment when the master row is keyed).
      const Pending* target = nullptr;
      if (!r.equip.empty()) {
        auto it = ops_by_equip.find(r.equip);
        if (it != ops_by_equip.end()) target = first_op_at_or_after(it->second, r.tx);
      } else {
        target = first_op_at_or_after(op_indices, r.tx);
      }
      if (target) {
        key = OrderKey{target->tx, target->table, target->id, 1, r.id};
        ++displaced;
      }
    }
    order.emplace_back(key, i);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  Manifest manifest;
  manifest.seed = spec.seed;
  manifest.preset = spec.preset;
  manifest.window_ms = W;
  manifest.equipment_count = E;
  manifest.business_keys = business_keys;
  manifest.displaced_master = displaced;
  manifest.operational_records = op_count;
  for (const auto& [key, idx] : order) {
    const Pending& r = records[idx];
    log.append(r.table, Op::kInsert, r.tx, r.row);
    if (source_tables) {
      ChangeRecord rec;
      rec.table = r.table;
      rec.op = Op::kInsert;
      rec.tx_ts = r.tx;
      rec.row = r.row;
      source_tables->apply(rec);
    }
    ++manifest.counts[r.table];
    ++manifest.total_records;
  }
  return manifest;
}

/// Independent batch recomputation from the log bytes alone: rebuild full
/// tables, assemble per-key inputs, run the same split/KPI math once per key,
/// and export the canonical dump. No broker, no workers, no caches.
inline std::string oracle_dump(const std::filesystem::path& log_dir, const SchemaModel& schema,
                               TimestampMs window_ms) {
  CdcLogReader reader(log_dir, schema.tables());
  TableStore tables(schema.tables());
  const TableConfig* op_cfg = find_table(schema.tables(), schema.operational_table());
  for (const ChangeRecord& rec : reader.read_all()) {
    if (rec.table == op_cfg->table) {
      // Mirror the pump's dead-letter rule: records without a usable
      // partition key never enter the pipeline.
      if (!select_key(rec, *op_cfg)) continue;
    }
    tables.apply(rec);
  }

  FactStore store(window_ms);
  std::set<std::string> keys;
  for (const auto& k : tables.business_keys(op_cfg->table)) keys.insert(k);
  for (const auto& k : tables.business_keys(schema.status_event_table())) keys.insert(k);
  keys.erase("");
  for (const std::string& equip : keys) {
    std::vector<ProductionInterval> prods;
    for (const Row& row : tables.rows_for_key(op_cfg->table, equip)) {
      ProductionResolution res = schema.resolve_production(row, tables);
      if (res.ok()) prods.push_back(*res.production);
    }
    std::sort(prods.begin(), prods.end(), [](const auto& a, const auto& b) {
      return a.start_ts != b.start_ts ? a.start_ts < b.start_ts : a.end_ts < b.end_ts;
    });
    auto timeline = schema.status_timeline(equip, tables, window_ms);
    auto quality = schema.quality_records(equip, tables);
    SplitDiagnostics diag;
    auto grains = split(timeline, prods, quality, 0, window_ms, &diag);
    std::vector<FactRow> rows;
    rows.reserve(grains.size());
    for (FactGrain& g : grains)
      rows.push_back(fact_from_grain(kpis(std::move(g), window_ms, &diag), window_ms));
    store.load(rows);
  }
  return store.export_dump();
}

}  // namespace millstream
