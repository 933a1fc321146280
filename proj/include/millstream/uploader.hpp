#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <millstream/common.hpp>
#include <millstream/oee.hpp>

namespace millstream {

/// One row of the star-schema fact table. fact_id is a pure function of the
/// grain's identity, so re-upserting a recomputed grain is idempotent.
struct FactRow {
  std::uint64_t fact_id = 0;
  std::string equip;
  std::int64_t bucket = 0;  // time bucket dimension: start_ts / window length
  std::string kind;         // OFF | ON_IDLE | ON_PRODUCING | SUMMARY
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
  double qty = 0;
  double theoretical_qty = 0;
  double good = 0;
  double defect = 0;
  std::optional<double> availability;
  std::optional<double> performance;
  std::optional<double> quality;
  std::optional<double> oee;

  bool operator==(const FactRow&) const = default;
};

inline std::uint64_t fact_id_of(const std::string& equip, TimestampMs start, TimestampMs end,
                                const std::string& kind) {
  std::string key = equip;
  key += '\x1f';
  key += std::to_string(start);
  key += '\x1f';
  key += std::to_string(end);
  key += '\x1f';
  key += kind;
  return fnv1a64(key);
}

inline FactRow fact_from_grain(const FactGrain& g, TimestampMs window_ms) {
  FactRow r;
  r.equip = g.equip;
  r.kind = grain_kind_name(g.kind);
  r.start_ts = g.start_ts;
  r.end_ts = g.end_ts;
  r.bucket = window_ms > 0 ? g.start_ts / window_ms : 0;
  r.qty = g.qty;
  r.theoretical_qty = g.theoretical_qty;
  r.good = g.good;
  r.defect = g.defect;
  r.availability = g.availability;
  r.performance = g.performance;
  r.quality = g.quality;
  r.oee = g.oee;
  r.fact_id = fact_id_of(r.equip, r.start_ts, r.end_ts, r.kind);
  return r;
}

/// Embedded target store: keyed upserts, a ranged replace for grain
/// re-splits, and a canonical byte-stable dump. Safe for concurrent loads
/// from distinct partitions.
class FactStore {
public:
  explicit FactStore(TimestampMs window_ms) : window_ms_(window_ms) {}

  /// Upserts each row by fact_id; identical overwrites count as no-ops.
  /// Returns the number of rows actually inserted or changed.
  std::size_t load(const std::vector<FactRow>& rows, int /*partition_id*/ = 0) {
    std::scoped_lock lk(mu_);
    std::size_t applied = 0;
    for (const FactRow& row : rows) applied += upsert(row);
    return applied;
  }

  /// Replaces all grains of one equipment lying inside [lo, hi) with `rows`.
  /// Grains never straddle boundary-aligned ranges; a straddler found here is
  /// counted as a consistency warning and evicted anyway.
  std::size_t replace_range(const std::string& equip, TimestampMs lo, TimestampMs hi,
                            const std::vector<FactRow>& rows) {
    std::scoped_lock lk(mu_);
    auto eq = index_.find(equip);
    if (eq != index_.end()) {
      auto& ordered = eq->second;
      for (auto it = ordered.lower_bound({lo, std::numeric_limits<TimestampMs>::min(), ""});
           it != ordered.end() && std::get<0>(it->first) < hi;) {
        const auto [start, end, kind] = it->first;
        if (end > hi) ++straddlers_;  // should not happen with aligned ranges
        facts_.erase(it->second);
        it = ordered.erase(it);
      }
      // A grain starting before lo must not reach into the range either.
      if (!ordered.empty()) {
        auto it = ordered.lower_bound({lo, std::numeric_limits<TimestampMs>::min(), ""});
        if (it != ordered.begin()) {
          --it;
          if (std::get<1>(it->first) > lo) {
            ++straddlers_;
            facts_.erase(it->second);
            ordered.erase(it);
          }
        }
      }
    }
    std::size_t applied = 0;
    for (const FactRow& row : rows) applied += upsert(row);
    return applied;
  }

  std::size_t row_count() const {
    std::scoped_lock lk(mu_);
    return facts_.size();
  }

  std::uint64_t straddler_warnings() const {
    std::scoped_lock lk(mu_);
    return straddlers_;
  }

  std::vector<FactRow> rows() const {
    std::scoped_lock lk(mu_);
    std::vector<FactRow> out;
    out.reserve(facts_.size());
    for (const auto& [id, row] : facts_) out.push_back(row);
    return out;
  }

  /// Canonical dump: grains plus one derived SUMMARY row per equipment and
  /// bucket, sorted by fact id, ratios to six decimal places. Byte-stable.
  std::string export_dump() const {
    std::scoped_lock lk(mu_);
    std::map<std::uint64_t, const FactRow*> sorted;
    std::vector<FactRow> summaries;
    for (const auto& [equip, ordered] : index_) {
      std::map<std::int64_t, std::vector<FactGrain>> per_bucket;
      for (const auto& [key, id] : ordered) {
        const FactRow& row = facts_.at(id);
        FactGrain g;
        g.equip = row.equip;
        g.start_ts = row.start_ts;
        g.end_ts = row.end_ts;
        g.kind = grain_kind_from_name(row.kind);
        g.qty = row.qty;
        g.theoretical_qty = row.theoretical_qty;
        g.good = row.good;
        g.defect = row.defect;
        per_bucket[row.bucket].push_back(std::move(g));
      }
      for (const auto& [bucket, grains] : per_bucket) {
        WindowSummary s = aggregate(grains, window_ms_);
        FactRow row;
        row.equip = equip;
        row.bucket = bucket;
        row.kind = "SUMMARY";
        row.start_ts = bucket * window_ms_;
        row.end_ts = (bucket + 1) * window_ms_;
        row.qty = s.qty;
        row.theoretical_qty = s.theoretical_qty;
        row.good = s.good;
        row.defect = s.defect;
        row.availability = s.availability;
        row.performance = s.performance;
        row.quality = s.quality;
        row.oee = s.oee;
        row.fact_id = fact_id_of(row.equip, row.start_ts, row.end_ts, row.kind);
        summaries.push_back(std::move(row));
      }
    }
    for (const auto& [id, row] : facts_) sorted[id] = &row;
    for (const FactRow& row : summaries) sorted[row.fact_id] = &row;
    std::string out;
    for (const auto& [id, row] : sorted) append_line(out, *row);
    return out;
  }

  void export_to_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << export_dump();
    if (!out) throw PipelineError("dump write failed: " + path.string());
  }

private:
  std::size_t upsert(const FactRow& row) {
    auto it = facts_.find(row.fact_id);
    if (it != facts_.end()) {
      if (it->second == row) return 0;
      // Correction overwrite (late quality): identity fields are fixed by the
      // fact id; only measures may change.
      index_[it->second.equip].erase({it->second.start_ts, it->second.end_ts, it->second.kind});
      it->second = row;
    } else {
      facts_[row.fact_id] = row;
    }
    index_[row.equip][{row.start_ts, row.end_ts, row.kind}] = row.fact_id;
    return 1;
  }

  static void append_line(std::string& out, const FactRow& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(r.fact_id));
    out += buf;
    out += ' ';
    out += r.equip;
    out += ' ';
    out += std::to_string(r.bucket);
    out += ' ';
    out += r.kind;
    out += ' ';
    out += std::to_string(r.start_ts);
    out += ' ';
    out += std::to_string(r.end_ts);
    append_num(out, r.qty);
    append_num(out, r.theoretical_qty);
    append_num(out, r.good);
    append_num(out, r.defect);
    append_ratio(out, r.availability);
    append_ratio(out, r.performance);
    append_ratio(out, r.quality);
    append_ratio(out, r.oee);
    out += '\n';
  }

  static void append_num(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), " %.6f", v);
    out += buf;
  }

  static void append_ratio(std::string& out, const std::optional<double>& v) {
    if (!v) {
      out += " null";
      return;
    }
    append_num(out, *v);
  }

  TimestampMs window_ms_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, FactRow> facts_;
  std::map<std::string, std::map<std::tuple<TimestampMs, TimestampMs, std::string>, std::uint64_t>>
      index_;
  std::uint64_t straddlers_ = 0;
};

/// Parses a canonical dump back into rows keyed by fact id.
inline std::map<std::string, std::vector<std::string>> parse_dump(const std::string& text) {
  std::map<std::string, std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(f);
    if (fields.size() != 14) throw DecodeError("malformed dump line: " + line);
    rows[fields[0]] = fields;
  }
  return rows;
}

/// Field-by-field dump comparison with numeric tolerance on the measures.
/// An empty report means the dumps agree.
inline std::vector<std::string> verify_dumps(const std::string& a, const std::string& b,
                                             double tolerance = 1e-9) {
  static const char* kFieldNames[14] = {"fact_id", "equip", "bucket",      "kind",  "start_ts",
                                        "end_ts",  "qty",   "theoretical", "good",  "defect",
                                        "availability", "performance", "quality", "oee"};
  std::vector<std::string> diffs;
  auto ra = parse_dump(a), rb = parse_dump(b);
  for (const auto& [id, fields] : ra)
    if (!rb.count(id)) diffs.push_back("fact " + id + " only in first dump");
  for (const auto& [id, fields] : rb)
    if (!ra.count(id)) diffs.push_back("fact " + id + " only in second dump");
  for (const auto& [id, fa] : ra) {
    auto it = rb.find(id);
    if (it == rb.end()) continue;
    const auto& fb = it->second;
    for (std::size_t i = 1; i < 14; ++i) {
      if (i >= 6) {  // numeric measures
        const bool na = fa[i] == "null", nb = fb[i] == "null";
        if (na != nb) {
          diffs.push_back("fact " + id + " field " + kFieldNames[i] + ": " + fa[i] + " vs " +
                          fb[i]);
          continue;
        }
        if (na) continue;
        if (std::abs(std::stod(fa[i]) - std::stod(fb[i])) > tolerance)
          diffs.push_back("fact " + id + " field " + kFieldNames[i] + ": " + fa[i] + " vs " +
                          fb[i]);
      } else if (fa[i] != fb[i]) {
        diffs.push_back("fact " + id + " field " + kFieldNames[i] + ": " + fa[i] + " vs " + fb[i]);
      }
    }
  }
  return diffs;
}

}  // namespace millstream
