#include <millstream/oee.hpp>

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace millstream {
namespace {

StatusInterval st(bool on, TimestampMs a, TimestampMs b) { return {"E1", on, a, b}; }
ProductionInterval pr(TimestampMs a, TimestampMs b, double qty, double rate) {
  return {"E1", a, b, qty, rate};
}

TEST(Split, StatusTimesProductionIntersection) {
  auto grains = split({st(false, 0, 100), st(true, 100, 200)}, {pr(120, 180, 30, 1800000.0)},
                      {}, 0, 200);
  ASSERT_EQ(grains.size(), 4u);
  EXPECT_EQ(grains[0].start_ts, 0);
  EXPECT_EQ(grains[0].end_ts, 100);
  EXPECT_EQ(grains[0].kind, GrainKind::kOff);
  EXPECT_EQ(grains[1].start_ts, 100);
  EXPECT_EQ(grains[1].end_ts, 120);
  EXPECT_EQ(grains[1].kind, GrainKind::kOnIdle);
  EXPECT_EQ(grains[2].start_ts, 120);
  EXPECT_EQ(grains[2].end_ts, 180);
  EXPECT_EQ(grains[2].kind, GrainKind::kOnProducing);
  EXPECT_DOUBLE_EQ(grains[2].qty, 30.0);
  EXPECT_EQ(grains[3].start_ts, 180);
  EXPECT_EQ(grains[3].end_ts, 200);
  EXPECT_EQ(grains[3].kind, GrainKind::kOnIdle);
}

TEST(Split, NoProductionGivesSingleIdleGrain) {
  auto grains = split({st(true, 0, 500)}, {}, {}, 0, 500);
  ASSERT_EQ(grains.size(), 1u);
  EXPECT_EQ(grains[0].kind, GrainKind::kOnIdle);
  EXPECT_EQ(grains[0].duration(), 500);
}

TEST(Split, GapsCountAsOffWithDiagnostics) {
  SplitDiagnostics diag;
  auto grains = split({st(true, 0, 100), st(true, 150, 200)}, {}, {}, 0, 200, &diag);
  ASSERT_EQ(grains.size(), 3u);
  EXPECT_EQ(grains[1].kind, GrainKind::kOff);
  EXPECT_EQ(diag.status_gap_ms, 50);
}

TEST(Split, OverlappingProductionRejected) {
  EXPECT_THROW(
      split({st(true, 0, 100)}, {pr(10, 60, 1, 60), pr(50, 90, 1, 60)}, {}, 0, 100),
      ValidationError);
}

TEST(Split, QualityAttachesToContainingGrain) {
  SplitDiagnostics diag;
  auto grains = split({st(true, 0, 200)}, {pr(50, 150, 10, 360000.0)},
                      {{"E1", 60, 9, 1}, {"E1", 160, 5, 0}, {"E1", 500, 1, 1}}, 0, 600, &diag);
  ASSERT_EQ(grains.size(), 3u);
  EXPECT_DOUBLE_EQ(grains[1].good, 9.0);
  EXPECT_DOUBLE_EQ(grains[1].defect, 1.0);
  EXPECT_DOUBLE_EQ(grains[2].good, 5.0);
  EXPECT_EQ(diag.dropped_quality, 1);  // ts 500 is past grain coverage
}

TEST(Split, SubRangeRecomputationMatchesFullSplit) {
  // Re-splitting between any two boundary points must reproduce the full
  // split's grains exactly, including apportioned quantities.
  std::vector<StatusInterval> status = {st(false, 0, 40), st(true, 40, 260), st(false, 260, 300)};
  std::vector<ProductionInterval> prod = {pr(60, 160, 50, 900000.0), pr(200, 240, 10, 900000.0)};
  std::vector<QualityRecord> qual = {{"E1", 70, 3, 1}, {"E1", 210, 2, 0}};
  auto full = split(status, prod, qual, 0, 300);
  auto part1 = split(status, prod, qual, 0, 160);
  auto part2 = split(status, prod, qual, 160, 300);
  std::vector<FactGrain> stitched = part1;
  stitched.insert(stitched.end(), part2.begin(), part2.end());
  ASSERT_EQ(stitched.size(), full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(stitched[i].start_ts, full[i].start_ts);
    EXPECT_EQ(stitched[i].end_ts, full[i].end_ts);
    EXPECT_EQ(stitched[i].kind, full[i].kind);
    EXPECT_DOUBLE_EQ(stitched[i].qty, full[i].qty);
    EXPECT_DOUBLE_EQ(stitched[i].theoretical_qty, full[i].theoretical_qty);
  }
}

// Brute-force point-sampling oracle at 1 ms resolution.
TEST(Split, RandomizedTilingIsGaplessAndConservesQty) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 1000; ++round) {
    std::uniform_int_distribution<TimestampMs> len(1, 60);
    std::vector<StatusInterval> status;
    TimestampMs t = 0;
    std::bernoulli_distribution flip(0.5);
    bool on = flip(rng);
    const int segments = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < segments; ++i) {
      TimestampMs end = t + len(rng);
      if (!(rng() % 4 == 0)) status.push_back(st(on, t, end));  // occasional gap
      t = end;
      on = !on;
    }
    const TimestampMs horizon = t;
    std::vector<ProductionInterval> prod;
    TimestampMs p = rng() % std::max<TimestampMs>(1, horizon / 2);
    while (p < horizon) {
      TimestampMs end = std::min<TimestampMs>(horizon, p + len(rng));
      if (end > p && !(rng() % 3 == 0))
        prod.push_back(pr(p, end, static_cast<double>(1 + rng() % 20), 360000.0));
      p = end + static_cast<TimestampMs>(rng() % 20);
    }
    if (status.empty() && prod.empty()) continue;

    auto grains = split(status, prod, {}, 0, horizon + 10);

    // Tiling: contiguous, ordered, no overlap, covering [min, max) endpoint.
    TimestampMs lo = std::numeric_limits<TimestampMs>::max(), hi = 0;
    for (const auto& s : status) {
      lo = std::min(lo, s.start_ts);
      hi = std::max(hi, s.end_ts);
    }
    for (const auto& q : prod) {
      lo = std::min(lo, q.start_ts);
      hi = std::max(hi, q.end_ts);
    }
    ASSERT_FALSE(grains.empty());
    EXPECT_EQ(grains.front().start_ts, lo);
    EXPECT_EQ(grains.back().end_ts, hi);
    for (std::size_t i = 1; i < grains.size(); ++i)
      EXPECT_EQ(grains[i].start_ts, grains[i - 1].end_ts);

    // Point sampling: label per ms matches the raw inputs.
    for (TimestampMs ms = lo; ms < hi; ++ms) {
      auto git = std::find_if(grains.begin(), grains.end(), [&](const FactGrain& g) {
        return g.start_ts <= ms && ms < g.end_ts;
      });
      ASSERT_NE(git, grains.end()) << "gap at " << ms;
      bool ison = false;
      for (const auto& s : status)
        if (s.start_ts <= ms && ms < s.end_ts) ison = s.on;
      bool producing = false;
      for (const auto& q : prod)
        if (q.start_ts <= ms && ms < q.end_ts) producing = true;
      GrainKind expected = !ison ? GrainKind::kOff
                           : producing ? GrainKind::kOnProducing
                                       : GrainKind::kOnIdle;
      ASSERT_EQ(git->kind, expected) << "at " << ms;
    }

    double total_qty = 0, produced = 0;
    for (const auto& g : grains) total_qty += g.qty;
    for (const auto& q : prod) produced += q.qty;
    EXPECT_NEAR(total_qty, produced, 1e-9 * std::max(1.0, produced));
  }
}

TEST(Kpis, PerfectProductionScoresOne) {
  // ON across the whole window, production at exactly the theoretical rate,
  // no defects.
  FactGrain g = split({st(true, 0, 3600000)}, {pr(0, 3600000, 120, 120.0)},
                      {{"E1", 100, 50, 0}}, 0, 3600000)[0];
  g = kpis(g, 3600000);
  EXPECT_DOUBLE_EQ(g.availability.value(), 1.0);
  EXPECT_DOUBLE_EQ(g.performance.value(), 1.0);
  EXPECT_DOUBLE_EQ(g.quality.value(), 1.0);
  EXPECT_DOUBLE_EQ(g.oee.value(), 1.0);
}

TEST(Kpis, OffGrainContributesZeroAvailability) {
  FactGrain g;
  g.equip = "E1";
  g.start_ts = 0;
  g.end_ts = 1000;
  g.kind = GrainKind::kOff;
  g = kpis(g, 10000);
  EXPECT_DOUBLE_EQ(g.availability.value(), 0.0);
  EXPECT_FALSE(g.performance.has_value());
  EXPECT_FALSE(g.quality.has_value());
  EXPECT_FALSE(g.oee.has_value());
}

TEST(Kpis, HandDerivedSteelworksCase) {
  // Window 100 min; ON for 80 min, producing the whole time; 40 parts against
  // a theoretical 60 parts over those 80 min; 36 good, 4 defect.
  const TimestampMs window = 100 * 60000;
  const TimestampMs on_ms = 80 * 60000;
  const double rate_per_hour = 45.0;  // 45/h * (80/60)h = 60 parts
  auto grains = split({st(false, on_ms, window), st(true, 0, on_ms)},
                      {pr(0, on_ms, 40, rate_per_hour)}, {{"E1", 10, 36, 4}}, 0, window);
  ASSERT_EQ(grains.size(), 2u);
  FactGrain g = kpis(grains[0], window);
  ASSERT_EQ(g.kind, GrainKind::kOnProducing);
  EXPECT_NEAR(g.availability.value(), 0.8, 1e-12);
  EXPECT_NEAR(g.performance.value(), 40.0 / 60.0, 1e-12);
  EXPECT_NEAR(g.quality.value(), 0.9, 1e-12);
  EXPECT_NEAR(g.oee.value(), 0.48, 1e-12 * 0.48);

  auto summary = aggregate({kpis(grains[0], window), kpis(grains[1], window)}, window);
  EXPECT_NEAR(summary.availability.value(), 0.8, 1e-12);
  EXPECT_NEAR(summary.performance.value(), 40.0 / 60.0, 1e-12);
  EXPECT_NEAR(summary.quality.value(), 0.9, 1e-12);
  EXPECT_NEAR(summary.oee.value(), 0.48, 1e-12 * 0.48);
}

TEST(Kpis, PerformanceClampsAndCountsAnomaly) {
  SplitDiagnostics diag;
  FactGrain g = split({st(true, 0, 1000)}, {pr(0, 1000, 100, 3600.0)}, {}, 0, 1000)[0];
  // theoretical over 1s at 3600/h = 1 part; 100 parts is an anomaly
  g = kpis(g, 1000, &diag);
  EXPECT_DOUBLE_EQ(g.performance.value(), 1.0);
  EXPECT_EQ(diag.rate_anomalies, 1);
}

TEST(Kpis, ZeroDurationGrainRejected) {
  FactGrain g;
  g.start_ts = 5;
  g.end_ts = 5;
  EXPECT_THROW(kpis(g, 1000), ValidationError);
}

TEST(Aggregate, PoolsFromSummedNumerators) {
  // Two equal-duration producing grains with performance 0.5 and 1.0 against
  // equal theoretical denominators pool to 0.75, not to an average of ratios.
  FactGrain a, b;
  a.equip = b.equip = "E1";
  a.kind = b.kind = GrainKind::kOnProducing;
  a.start_ts = 0;
  a.end_ts = 1000;
  b.start_ts = 1000;
  b.end_ts = 2000;
  a.qty = 5;
  a.theoretical_qty = 10;
  b.qty = 10;
  b.theoretical_qty = 10;
  auto summary = aggregate({kpis(a, 2000), kpis(b, 2000)}, 2000);
  EXPECT_DOUBLE_EQ(summary.performance.value(), 0.75);
  EXPECT_DOUBLE_EQ(summary.availability.value(), 1.0);
  EXPECT_FALSE(summary.quality.has_value());
  EXPECT_FALSE(summary.oee.has_value());

  auto single = aggregate({kpis(a, 2000)}, 2000);
  EXPECT_DOUBLE_EQ(single.performance.value(), kpis(a, 2000).performance.value());

  EXPECT_FALSE(aggregate({}, 2000).availability.has_value());
}

TEST(Invariants, CompositionHoldsToTightTolerance) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    FactGrain g;
    g.equip = "E";
    g.kind = GrainKind::kOnProducing;
    g.start_ts = 0;
    g.end_ts = 1 + static_cast<TimestampMs>(rng() % 10000);
    g.qty = static_cast<double>(rng() % 100);
    g.theoretical_qty = 1.0 + static_cast<double>(rng() % 200);
    g.good = static_cast<double>(rng() % 50);
    g.defect = static_cast<double>(rng() % 10);
    g = kpis(g, 20000);
    for (auto v : {g.availability, g.performance, g.quality}) {
      ASSERT_TRUE(v.has_value());
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 1.0);
    }
    const double want = *g.availability * *g.performance * *g.quality;
    EXPECT_LE(std::abs(g.oee.value() - want), 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST(Invariants, SplitIsDeterministic) {
  std::vector<StatusInterval> status = {st(false, 0, 50), st(true, 50, 300)};
  std::vector<ProductionInterval> prod = {pr(60, 120, 7, 240000.0)};
  std::vector<QualityRecord> qual = {{"E1", 70, 3, 1}};
  auto a = split(status, prod, qual, 0, 300);
  auto b = split(status, prod, qual, 0, 300);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].start_ts, b[i].start_ts);
    EXPECT_EQ(std::memcmp(&a[i].qty, &b[i].qty, sizeof(double)), 0);
  }
}

}  // namespace
}  // namespace millstream
