#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <millstream/common.hpp>

namespace millstream {

enum class GrainKind { kOff, kOnIdle, kOnProducing };

inline const char* grain_kind_name(GrainKind k) {
  switch (k) {
    case GrainKind::kOff: return "OFF";
    case GrainKind::kOnIdle: return "ON_IDLE";
    case GrainKind::kOnProducing: return "ON_PRODUCING";
  }
  return "?";
}

inline GrainKind grain_kind_from_name(std::string_view s) {
  if (s == "OFF") return GrainKind::kOff;
  if (s == "ON_IDLE") return GrainKind::kOnIdle;
  if (s == "ON_PRODUCING") return GrainKind::kOnProducing;
  throw DecodeError("unknown grain kind: " + std::string(s));
}

struct StatusInterval {
  std::string equip;
  bool on = false;
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
};

struct ProductionInterval {
  std::string equip;
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
  double qty = 0;             // parts produced over the whole interval
  double rate_per_hour = 0;   // maximum theoretical speed
};

struct QualityRecord {
  std::string equip;
  TimestampMs ts = 0;
  std::int64_t good = 0;
  std::int64_t defect = 0;
};

/// Smallest time-interval intersection of status x production x quality for
/// one equipment unit; the unit loaded into the star schema.
struct FactGrain {
  std::string equip;
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
  GrainKind kind = GrainKind::kOff;
  double qty = 0;
  double good = 0;
  double defect = 0;
  double theoretical_qty = 0;  // parts the grain could have produced at max rate
  std::optional<double> availability;
  std::optional<double> performance;
  std::optional<double> quality;
  std::optional<double> oee;

  TimestampMs duration() const { return end_ts - start_ts; }
};

struct SplitDiagnostics {
  std::int64_t status_gap_ms = 0;      // uncovered time treated as OFF
  std::int64_t dropped_quality = 0;    // quality records outside grain coverage
  std::int64_t rate_anomalies = 0;     // production faster than theoretical, clamped
};

namespace oee_detail {

struct Clipped {
  TimestampMs lo = 0;
  TimestampMs hi = 0;
  std::size_t source = 0;
};

template <typename T>
std::vector<Clipped> clip_sorted(const std::vector<T>& in, TimestampMs t0, TimestampMs t1) {
  std::vector<Clipped> out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const TimestampMs lo = std::max<TimestampMs>(in[i].start_ts, t0);
    const TimestampMs hi = std::min<TimestampMs>(in[i].end_ts, t1);
    if (lo < hi) out.push_back({lo, hi, i});
  }
  std::sort(out.begin(), out.end(), [](const Clipped& a, const Clipped& b) {
    return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
  });
  return out;
}

// Index of the clipped interval containing t, or npos.
inline std::size_t containing(const std::vector<Clipped>& sorted, TimestampMs t) {
  auto it = std::upper_bound(sorted.begin(), sorted.end(), t,
                             [](TimestampMs v, const Clipped& c) { return v < c.lo; });
  if (it == sorted.begin()) return static_cast<std::size_t>(-1);
  --it;
  return t < it->hi ? static_cast<std::size_t>(it - sorted.begin()) : static_cast<std::size_t>(-1);
}

}  // namespace oee_detail

/// Breaks one equipment's window down into fact grains: boundaries are the
/// sorted distinct endpoints of status and production intervals (clipped to
/// the window); each grain is labeled OFF / ON_IDLE / ON_PRODUCING; production
/// quantity is apportioned to grains proportionally to overlap duration, and
/// quality counts land in the grain containing their timestamp. Time not
/// covered by any status interval counts as OFF and is reported as gap time.
inline std::vector<FactGrain> split(const std::vector<StatusInterval>& status,
                                    const std::vector<ProductionInterval>& production,
                                    const std::vector<QualityRecord>& quality, TimestampMs t0,
                                    TimestampMs t1, SplitDiagnostics* diag = nullptr) {
  using oee_detail::Clipped;
  if (t0 >= t1) throw ValidationError("split window is empty");
  std::vector<Clipped> st = oee_detail::clip_sorted(status, t0, t1);
  std::vector<Clipped> pr = oee_detail::clip_sorted(production, t0, t1);
  for (std::size_t i = 1; i < pr.size(); ++i)
    if (pr[i].lo < pr[i - 1].hi)
      throw ValidationError("overlapping production intervals for one equipment");

  std::vector<TimestampMs> bounds;
  for (const auto& c : st) {
    bounds.push_back(c.lo);
    bounds.push_back(c.hi);
  }
  for (const auto& c : pr) {
    bounds.push_back(c.lo);
    bounds.push_back(c.hi);
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

  std::vector<FactGrain> grains;
  if (bounds.size() < 2) {
    if (diag) diag->dropped_quality += static_cast<std::int64_t>(quality.size());
    return grains;
  }

  const std::string& equip = !status.empty()   ? status.front().equip
                             : !production.empty() ? production.front().equip
                                                   : quality.front().equip;
  grains.reserve(bounds.size() - 1);
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    FactGrain g;
    g.equip = equip;
    g.start_ts = bounds[i];
    g.end_ts = bounds[i + 1];
    const std::size_t si = oee_detail::containing(st, g.start_ts);
    const bool covered = si != static_cast<std::size_t>(-1);
    const bool on = covered && status[st[si].source].on;
    if (!covered && diag) diag->status_gap_ms += g.duration();
    const std::size_t pi = oee_detail::containing(pr, g.start_ts);
    if (pi != static_cast<std::size_t>(-1)) {
      const ProductionInterval& p = production[pr[pi].source];
      // Apportion against the full (unclipped) production duration so any
      // sub-range recomputation lands on identical values.
      const double share =
          static_cast<double>(g.duration()) / static_cast<double>(p.end_ts - p.start_ts);
      g.qty = p.qty * share;
      if (on) {
        g.kind = GrainKind::kOnProducing;
        g.theoretical_qty = p.rate_per_hour / 3600000.0 * static_cast<double>(g.duration());
      } else {
        g.kind = GrainKind::kOff;
      }
    } else {
      g.kind = on ? GrainKind::kOnIdle : GrainKind::kOff;
    }
    grains.push_back(std::move(g));
  }

  for (const QualityRecord& q : quality) {
    if (q.ts < t0 || q.ts >= t1) continue;
    auto it = std::upper_bound(grains.begin(), grains.end(), q.ts,
                               [](TimestampMs v, const FactGrain& g) { return v < g.start_ts; });
    if (it == grains.begin() || q.ts >= (it - 1)->end_ts) {
      if (diag) ++diag->dropped_quality;
      continue;
    }
    (it - 1)->good += static_cast<double>(q.good);
    (it - 1)->defect += static_cast<double>(q.defect);
  }
  return grains;
}

/// Fills availability / performance / quality / OEE on one grain.
///   availability: the grain contributes its duration as uptime iff status ON.
///   performance: ON_PRODUCING only, actual rate vs theoretical, clamped to 1.
///   quality: good / (good + defect) when any counts exist.
///   oee: product of the three when all are defined.
inline FactGrain kpis(FactGrain grain, TimestampMs planned_time_ms,
                      SplitDiagnostics* diag = nullptr) {
  if (grain.duration() <= 0) throw ValidationError("zero-duration grain");
  if (planned_time_ms <= 0) throw ValidationError("planned time must be positive");
  const double planned = static_cast<double>(planned_time_ms);
  grain.availability =
      grain.kind == GrainKind::kOff ? 0.0 : static_cast<double>(grain.duration()) / planned;
  if (grain.kind == GrainKind::kOnProducing && grain.theoretical_qty > 0) {
    const double raw = grain.qty / grain.theoretical_qty;
    if (raw > 1.0 && diag) ++diag->rate_anomalies;
    grain.performance = std::min(1.0, raw);
  } else {
    grain.performance = std::nullopt;
  }
  const double inspected = grain.good + grain.defect;
  grain.quality = inspected > 0 ? std::optional<double>(grain.good / inspected) : std::nullopt;
  if (grain.availability && grain.performance && grain.quality)
    grain.oee = *grain.availability * *grain.performance * *grain.quality;
  else
    grain.oee = std::nullopt;
  return grain;
}

/// Window-level KPI roll-up for one equipment: pooled from summed numerators
/// and denominators, never from averaged ratios.
struct WindowSummary {
  std::string equip;
  TimestampMs on_ms = 0;
  double qty = 0;
  double producing_qty = 0;
  double good = 0;
  double defect = 0;
  double theoretical_qty = 0;
  std::optional<double> availability;
  std::optional<double> performance;
  std::optional<double> quality;
  std::optional<double> oee;
};

inline WindowSummary aggregate(const std::vector<FactGrain>& grains, TimestampMs planned_time_ms) {
  WindowSummary s;
  if (grains.empty()) return s;
  if (planned_time_ms <= 0) throw ValidationError("planned time must be positive");
  s.equip = grains.front().equip;
  for (const FactGrain& g : grains) {
    if (g.kind != GrainKind::kOff) s.on_ms += g.duration();
    if (g.kind == GrainKind::kOnProducing) {
      s.producing_qty += g.qty;
      s.theoretical_qty += g.theoretical_qty;
    }
    s.qty += g.qty;
    s.good += g.good;
    s.defect += g.defect;
  }
  s.availability = static_cast<double>(s.on_ms) / static_cast<double>(planned_time_ms);
  if (s.theoretical_qty > 0) s.performance = std::min(1.0, s.producing_qty / s.theoretical_qty);
  const double inspected = s.good + s.defect;
  if (inspected > 0) s.quality = s.good / inspected;
  if (s.availability && s.performance && s.quality)
    s.oee = *s.availability * *s.performance * *s.quality;
  return s;
}

}  // namespace millstream
