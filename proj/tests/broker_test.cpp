#include <millstream/broker.hpp>

#include <map>
#include <random>
#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "testutil.hpp"

namespace millstream {
namespace {

using testutil::TempDir;

TEST(Broker, PublishAssignsOffsetsPerPartition) {
  Broker broker;
  broker.create_topic("t", 1, TableNature::kOperational);
  auto [p1, o1] = broker.publish("t", "a", "v1");
  auto [p2, o2] = broker.publish("t", "b", "v2");
  EXPECT_EQ(p1, 0);
  EXPECT_EQ(p2, 0);
  EXPECT_EQ(o1, 0u);
  EXPECT_EQ(o2, 1u);
  EXPECT_THROW(broker.publish("nope", "a", "v"), ConfigError);
}

TEST(Broker, SameKeyStaysInOnePartitionInOrder) {
  Broker broker;
  broker.create_topic("t", 4, TableNature::kOperational);
  int first = -1;
  for (int i = 0; i < 1000; ++i) {
    auto [p, o] = broker.publish("t", "E7", std::to_string(i));
    if (first < 0) first = p;
    EXPECT_EQ(p, first);
    EXPECT_EQ(o, static_cast<std::uint64_t>(i));
  }
}

TEST(Broker, PartitionPlacementMatchesBruteForceRepartition) {
  Broker broker;
  const int partitions = 20;
  broker.create_topic("t", partitions, TableNature::kOperational);
  std::map<int, std::vector<std::string>> expected;
  for (int k = 1; k <= 20; ++k) {
    const std::string key = "E" + std::to_string(k);
    for (int i = 0; i < 25; ++i) {
      const std::string payload = key + ":" + std::to_string(i);
      broker.publish("t", key, payload);
      expected[Broker::partition_for(key, partitions)].push_back(payload);
    }
  }
  for (int p = 0; p < partitions; ++p) {
    auto msgs = broker.fetch("t", p, 0, 100000);
    std::vector<std::string> got;
    std::map<std::string, std::vector<std::string>> per_key;
    for (const auto& m : msgs) per_key[m.key].push_back(m.payload);
    std::map<std::string, std::vector<std::string>> expected_per_key;
    for (const auto& payload : expected[p])
      expected_per_key[payload.substr(0, payload.find(':'))].push_back(payload);
    EXPECT_EQ(per_key, expected_per_key) << "partition " << p;
  }
}

TEST(Broker, SnapshotIsLastWriterWinsWithTombstones) {
  Broker broker;
  broker.create_topic("m", 1, TableNature::kMaster);
  broker.publish("m", "k1", "v1");
  broker.publish("m", "k2", "v1");
  broker.publish("m", "k1", "v2");
  auto snap = broker.snapshot("m");
  ASSERT_EQ(snap.size(), 2u);
  EXPECT_EQ(snap["k1"], "v2");
  EXPECT_EQ(snap["k2"], "v1");

  broker.publish("m", "k1", "", true);
  broker.publish("m", "k2", "", true);
  EXPECT_TRUE(broker.snapshot("m").empty());

  broker.create_topic("op", 2, TableNature::kOperational);
  EXPECT_THROW(broker.snapshot("op"), ConfigError);
}

// Snapshot vs a sequential replay of the full publish transcript.
TEST(Broker, SnapshotEqualsTranscriptReplayOracle) {
  std::mt19937_64 rng(42);
  for (int round = 0; round < 20; ++round) {
    Broker broker;
    broker.create_topic("m", 3, TableNature::kMaster);
    std::map<std::string, std::string> oracle;
    std::uniform_int_distribution<int> key_dist(0, 99);
    std::uniform_real_distribution<double> del(0, 1);
    for (int i = 0; i < 10000; ++i) {
      const std::string key = "k" + std::to_string(key_dist(rng));
      if (del(rng) < 0.2) {
        broker.publish("m", key, "", true);
        oracle.erase(key);
      } else {
        const std::string value = "v" + std::to_string(i);
        broker.publish("m", key, value);
        oracle[key] = value;
      }
    }
    EXPECT_EQ(broker.snapshot("m"), oracle) << "round " << round;
  }
}

TEST(Broker, SingleConsumerGetsAllPartitions) {
  Broker broker;
  broker.create_topic("t", 2, TableNature::kOperational);
  broker.publish("t", "a", "1");
  broker.publish("t", "b", "2");
  broker.publish("t", "c", "3");
  broker.join_group("g", "c1", {"t"});
  GroupPoll first = broker.poll("g", "c1");
  ASSERT_TRUE(first.rebalance.has_value());
  EXPECT_EQ(first.rebalance->partitions.size(), 2u);
  EXPECT_TRUE(first.messages.empty());
  GroupPoll second = broker.poll("g", "c1");
  EXPECT_FALSE(second.rebalance.has_value());
  EXPECT_EQ(second.messages.size(), 3u);
}

TEST(Broker, TwoConsumersSplitPartitionsExclusively) {
  Broker broker;
  broker.create_topic("t", 2, TableNature::kOperational);
  broker.join_group("g", "c1", {"t"});
  broker.join_group("g", "c2", {"t"});
  auto a1 = broker.poll("g", "c1");
  auto a2 = broker.poll("g", "c2");
  ASSERT_TRUE(a1.rebalance && a2.rebalance);
  EXPECT_EQ(a1.rebalance->partitions.size(), 1u);
  EXPECT_EQ(a2.rebalance->partitions.size(), 1u);
  EXPECT_NE(a1.rebalance->partitions[0].partition, a2.rebalance->partitions[0].partition);

  // At no instant do two members own one partition.
  for (const auto& ev : broker.ownership_log()) {
    std::set<TopicPartition> seen;
    for (const auto& [tp, owner] : ev.owner) EXPECT_TRUE(seen.insert(tp).second);
  }
}

TEST(Broker, JoinMidRunEmitsRebalanceBeforeMovedMessages) {
  Broker broker;
  broker.create_topic("t", 2, TableNature::kOperational);
  broker.join_group("g", "c1", {"t"});
  ASSERT_TRUE(broker.poll("g", "c1").rebalance.has_value());
  for (int i = 0; i < 10; ++i) broker.publish("t", "k" + std::to_string(i), "v");

  broker.join_group("g", "c2", {"t"});
  // c1 must see the assignment change before any further message, and c2 gets
  // nothing until everyone acknowledged the new generation.
  GroupPoll c2first = broker.poll("g", "c2");
  ASSERT_TRUE(c2first.rebalance.has_value());
  GroupPoll c2blocked = broker.poll("g", "c2");
  EXPECT_FALSE(c2blocked.rebalance.has_value());
  EXPECT_TRUE(c2blocked.messages.empty());

  GroupPoll c1ev = broker.poll("g", "c1");
  ASSERT_TRUE(c1ev.rebalance.has_value());
  // Scale from 1 to 2 consumers: the original assignment strictly shrinks.
  EXPECT_EQ(c1ev.rebalance->partitions.size(), 1u);

  GroupPoll c2now = broker.poll("g", "c2");
  EXPECT_FALSE(c2now.rebalance.has_value());
  for (const auto& m : c2now.messages)
    EXPECT_TRUE(c2first.rebalance->partitions.empty() ||
                c2first.rebalance->owns({m.topic, m.partition}));
}

TEST(Broker, KillingConsumersReassignsEverything) {
  Broker broker;
  broker.create_topic("t", 20, TableNature::kOperational);
  std::vector<std::string> ids = {"w0", "w1", "w2", "w3", "w4"};
  for (const auto& id : ids) broker.join_group("g", id, {"t"});
  for (const auto& id : ids) broker.poll("g", id);  // ack

  broker.leave_group("g", "w1");
  broker.leave_group("g", "w3");
  std::set<TopicPartition> covered;
  for (const auto& id : {"w0", "w2", "w4"}) {
    auto ev = broker.poll("g", id);
    ASSERT_TRUE(ev.rebalance.has_value()) << id;
    for (const auto& tp : ev.rebalance->partitions) EXPECT_TRUE(covered.insert(tp).second);
  }
  EXPECT_EQ(covered.size(), 20u);
}

TEST(Broker, CommittedOffsetsBoundRedeliveryAcrossRebalance) {
  Broker broker;
  broker.create_topic("t", 1, TableNature::kOperational);
  for (int i = 0; i < 6; ++i) broker.publish("t", "k", "v" + std::to_string(i));
  broker.join_group("g", "c1", {"t"});
  broker.poll("g", "c1");
  auto batch = broker.poll("g", "c1", 4);
  ASSERT_EQ(batch.messages.size(), 4u);
  broker.commit("g", {"t", 0}, 2);  // only the first two fully processed

  broker.join_group("g", "c2", {"t"});
  broker.poll("g", "c1");
  broker.poll("g", "c2");
  auto redelivered = broker.poll("g", "c1", 100);
  ASSERT_EQ(redelivered.messages.size(), 4u);
  EXPECT_EQ(redelivered.messages[0].offset, 2u);  // duplicates only across the boundary
}

TEST(Broker, SharedStoreLastWriterWins) {
  Broker broker;
  EXPECT_FALSE(broker.get_shared("k").has_value());
  broker.put_shared("k", "v1");
  broker.put_shared("k", "v2");
  EXPECT_EQ(broker.get_shared("k").value(), "v2");
  broker.put_shared("buffer/t/0/5", "entry");
  auto scan = broker.scan_shared("buffer/");
  ASSERT_EQ(scan.size(), 1u);
  EXPECT_EQ(scan[0].first, "buffer/t/0/5");
  broker.erase_shared("buffer/t/0/5");
  EXPECT_TRUE(broker.scan_shared("buffer/").empty());
  broker.update_shared("n", [](const auto& cur) {
    return std::to_string(cur ? std::stoi(*cur) + 1 : 1);
  });
  broker.update_shared("n", [](const auto& cur) {
    return std::to_string(cur ? std::stoi(*cur) + 1 : 1);
  });
  EXPECT_EQ(broker.get_shared("n").value(), "2");
}

TEST(Broker, PersistenceSurvivesReopen) {
  TempDir dir("broker");
  {
    Broker broker(dir.path());
    broker.create_topic("m", 1, TableNature::kMaster);
    broker.publish("m", "k1", "v1");
    broker.publish("m", "k2", "v2");
    broker.publish("m", "k1", "", true);
    broker.put_shared("buffer/x", "pending");
    broker.join_group("g", "c1", {"m"});
    broker.poll("g", "c1");
    broker.commit("g", {"m", 0}, 3);
  }
  Broker reopened(dir.path());
  EXPECT_EQ(reopened.partition_count("m"), 1);
  auto snap = reopened.snapshot("m");
  ASSERT_EQ(snap.size(), 1u);
  EXPECT_EQ(snap["k2"], "v2");
  EXPECT_EQ(reopened.get_shared("buffer/x").value(), "pending");
  EXPECT_EQ(reopened.committed("g", {"m", 0}), 3u);
  EXPECT_EQ(reopened.end_offset("m", 0), 3u);
}

TEST(Broker, ReopenToleratesTornTailLine) {
  TempDir dir("broker");
  {
    Broker broker(dir.path());
    broker.create_topic("m", 1, TableNature::kMaster);
    broker.publish("m", "k1", "v1");
    broker.publish("m", "k2", "v2");
  }
  {
    std::ofstream out(dir / "m.p0.log", std::ios::app);
    out << "{\"offset\":2,\"key\":\"k3\",\"tom";  // abort mid-write
  }
  Broker reopened(dir.path());
  EXPECT_EQ(reopened.end_offset("m", 0), 2u);
  EXPECT_EQ(reopened.snapshot("m").size(), 2u);
}

TEST(Broker, PerKeyOrderSurvivesConcurrentPublishers) {
  Broker broker;
  broker.create_topic("t", 4, TableNature::kOperational);
  constexpr int kPerKey = 2000;
  auto worker = [&](const std::string& key) {
    for (int i = 0; i < kPerKey; ++i) broker.publish("t", key, key + ":" + std::to_string(i));
  };
  std::thread t1(worker, "E1"), t2(worker, "E2"), t3(worker, "E3");
  t1.join();
  t2.join();
  t3.join();
  for (const std::string key : {"E1", "E2", "E3"}) {
    const int p = Broker::partition_for(key, 4);
    int next = 0;
    for (const auto& m : broker.fetch("t", p, 0, 100000)) {
      if (m.key != key) continue;
      EXPECT_EQ(m.payload, key + ":" + std::to_string(next));
      ++next;
    }
    EXPECT_EQ(next, kPerKey);
  }
}

}  // namespace
}  // namespace millstream
