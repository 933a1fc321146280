#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <millstream/common.hpp>
#include <millstream/table_config.hpp>

namespace millstream {

struct TopicPartition {
  std::string topic;
  int partition = 0;
  auto operator<=>(const TopicPartition&) const = default;
};

/// Keyed, offset-addressed broker record within a topic partition.
struct Message {
  std::string topic;
  int partition = 0;
  std::uint64_t offset = 0;
  std::string key;
  std::string payload;
  bool tombstone = false;
};

/// Partition ownership of one consumer at one group generation.
struct Assignment {
  std::string group;
  std::string consumer_id;
  std::uint64_t generation = 0;
  std::vector<TopicPartition> partitions;  // sorted

  bool owns(const TopicPartition& tp) const {
    return std::binary_search(partitions.begin(), partitions.end(), tp);
  }
};

struct GroupPoll {
  std::optional<Assignment> rebalance;  // delivered before any message from gained partitions
  std::vector<Message> messages;
};

struct OwnershipEvent {
  std::uint64_t generation = 0;
  std::map<TopicPartition, std::string> owner;
};

/// Embedded publish/subscribe message queue with per-key ordering, keyed
/// compaction for snapshot reads, consumer groups with range assignment, and
/// a small durable shared key-value store. Single process, thread-safe.
class Broker {
public:
  Broker() = default;

  /// Opens a broker with on-disk persistence of partition logs, topic
  /// metadata and the shared store. Reopening the same directory restores
  /// prior state; a torn final line from an abort is dropped.
  explicit Broker(std::filesystem::path persist_dir) : dir_(std::move(persist_dir)) {
    std::filesystem::create_directories(*dir_);
    load_topics();
    load_shared();
  }

  void create_topic(const std::string& name, int partition_count, TableNature nature) {
    std::scoped_lock lk(admin_mu_);
    if (partition_count < 1) throw ConfigError("topic " + name + ": partition_count < 1");
    auto it = topics_.find(name);
    if (it != topics_.end()) {
      if (it->second->partition_count() != partition_count || it->second->nature != nature)
        throw ConfigError("topic " + name + " already exists with a different config");
      return;  // reopen path
    }
    auto topic = std::make_unique<TopicState>(name, partition_count, nature, dir_);
    topics_[name] = std::move(topic);
    if (dir_) {
      std::ofstream meta(*dir_ / "topics.meta", std::ios::app);
      ordered_json j;
      j["name"] = name;
      j["partitions"] = partition_count;
      j["nature"] = nature_name(nature);
      meta << j.dump() << '\n';
    }
  }

  bool has_topic(const std::string& name) const {
    std::scoped_lock lk(admin_mu_);
    return topics_.count(name) > 0;
  }

  int partition_count(const std::string& topic) const { return state(topic).partition_count(); }
  TableNature topic_nature(const std::string& topic) const { return state(topic).nature; }

  static int partition_for(const std::string& key, int partition_count) {
    return static_cast<int>(fnv1a64(key) % static_cast<std::uint64_t>(partition_count));
  }

  /// Appends a keyed message; returns (partition, offset). Messages with one
  /// key land in one partition and are totally ordered there.
  std::pair<int, std::uint64_t> publish(const std::string& topic, const std::string& key,
                                        std::string payload, bool tombstone = false) {
    TopicState& t = state(topic);
    const int p = partition_for(key, t.partition_count());
    PartitionState& part = *t.partitions[static_cast<std::size_t>(p)];
    std::scoped_lock plk(part.mu);
    Message msg;
    msg.topic = topic;
    msg.partition = p;
    msg.offset = part.log.size();
    msg.key = key;
    msg.payload = std::move(payload);
    msg.tombstone = tombstone;
    part.append(msg);
    {
      std::scoped_lock clk(t.compact_mu);
      t.compacted[key] = {msg.payload, tombstone};
    }
    return {p, msg.offset};
  }

  std::uint64_t end_offset(const std::string& topic, int partition) const {
    const TopicState& t = state(topic);
    PartitionState& part = *t.partitions.at(static_cast<std::size_t>(partition));
    std::scoped_lock lk(part.mu);
    return part.log.size();
  }

  /// Latest payload per key, tombstoned keys absent: the current table state
  /// reconstructed from the compacted topic. Master topics only.
  std::map<std::string, std::string> snapshot(const std::string& topic) const {
    return snapshot_with_position(topic).rows;
  }

  struct Snapshot {
    std::map<std::string, std::string> rows;
    std::vector<std::uint64_t> end_offsets;  // per partition; live reads resume here
  };

  Snapshot snapshot_with_position(const std::string& topic) const {
    const TopicState& t = state(topic);
    if (t.nature != TableNature::kMaster)
      throw ConfigError("snapshot of operational topic " + topic);
    Snapshot snap;
    // Lock all partitions, then the compaction map, so the map and the end
    // offsets describe one instant.
    std::vector<std::unique_lock<std::mutex>> locks;
    locks.reserve(t.partitions.size());
    for (const auto& part : t.partitions) locks.emplace_back(part->mu);
    {
      std::scoped_lock clk(t.compact_mu);
      for (const auto& [key, entry] : t.compacted)
        if (!entry.second) snap.rows[key] = entry.first;
    }
    for (const auto& part : t.partitions) snap.end_offsets.push_back(part->log.size());
    return snap;
  }

  /// Group-less fetch from one partition, used for broadcast consumption of
  /// master topics (every worker follows all master data for its keys).
  std::vector<Message> fetch(const std::string& topic, int partition, std::uint64_t from_offset,
                             std::size_t max_messages = 256) const {
    const TopicState& t = state(topic);
    PartitionState& part = *t.partitions.at(static_cast<std::size_t>(partition));
    std::scoped_lock lk(part.mu);
    std::vector<Message> out;
    for (std::uint64_t o = from_offset; o < part.log.size() && out.size() < max_messages; ++o)
      out.push_back(part.log[o]);
    return out;
  }

  // --- consumer groups -------------------------------------------------

  void join_group(const std::string& group, const std::string& consumer_id,
                  const std::vector<std::string>& topics) {
    std::scoped_lock lk(group_mu_);
    GroupState& g = groups_[group];
    g.name = group;
    for (const auto& t : topics) g.topics.insert(t);
    g.members[consumer_id];  // default state
    rebalance(g);
  }

  void leave_group(const std::string& group, const std::string& consumer_id) {
    std::scoped_lock lk(group_mu_);
    auto git = groups_.find(group);
    if (git == groups_.end()) return;
    GroupState& g = git->second;
    g.members.erase(consumer_id);
    if (!g.members.empty()) rebalance(g);
  }

  /// Delivers a pending Assignment first; once every live member has seen the
  /// current generation, delivers messages from owned partitions in offset
  /// order, resuming from the group's committed positions.
  GroupPoll poll(const std::string& group, const std::string& consumer_id,
                 std::size_t max_messages = 256) {
    std::scoped_lock lk(group_mu_);
    GroupState& g = group_state(group);
    auto mit = g.members.find(consumer_id);
    if (mit == g.members.end()) throw ConfigError("unknown consumer " + consumer_id);
    MemberState& m = mit->second;
    GroupPoll out;
    if (m.acked_generation < g.generation) {
      m.acked_generation = g.generation;
      out.rebalance = make_assignment(g, consumer_id);
      return out;
    }
    if (!synced(g)) return out;  // another member has not seen the new generation yet
    for (const TopicPartition& tp : m.partitions) {
      if (out.messages.size() >= max_messages) break;
      std::uint64_t& pos = g.positions[tp];
      auto batch = fetch(tp.topic, tp.partition, pos, max_messages - out.messages.size());
      pos += batch.size();
      for (auto& msg : batch) out.messages.push_back(std::move(msg));
    }
    return out;
  }

  /// Records that the group has fully processed offsets below `next_offset`.
  void commit(const std::string& group, const TopicPartition& tp, std::uint64_t next_offset) {
    std::scoped_lock lk(group_mu_);
    GroupState& g = group_state(group);
    std::uint64_t& cur = g.committed[tp];
    cur = std::max(cur, next_offset);
    if (dir_) persist_shared_entry(commit_key(group, tp), std::to_string(cur), false);
  }

  std::uint64_t committed(const std::string& group, const TopicPartition& tp) const {
    std::scoped_lock lk(group_mu_);
    auto git = groups_.find(group);
    if (git == groups_.end()) return 0;
    auto it = git->second.committed.find(tp);
    return it == git->second.committed.end() ? 0 : it->second;
  }

  std::vector<OwnershipEvent> ownership_log() const {
    std::scoped_lock lk(group_mu_);
    return ownership_log_;
  }

  // --- shared key-value store ------------------------------------------

  void put_shared(const std::string& key, const std::string& value) {
    std::scoped_lock lk(shared_mu_);
    shared_[key] = value;
    if (dir_) persist_shared_entry(key, value, false);
  }

  std::optional<std::string> get_shared(const std::string& key) const {
    std::scoped_lock lk(shared_mu_);
    auto it = shared_.find(key);
    if (it == shared_.end()) return std::nullopt;
    return it->second;
  }

  void erase_shared(const std::string& key) {
    std::scoped_lock lk(shared_mu_);
    shared_.erase(key);
    if (dir_) persist_shared_entry(key, "", true);
  }

  /// Atomic read-modify-write; fn returns the new value or nullopt to erase.
  void update_shared(const std::string& key,
                     const std::function<std::optional<std::string>(
                         const std::optional<std::string>&)>& fn) {
    std::scoped_lock lk(shared_mu_);
    auto it = shared_.find(key);
    std::optional<std::string> cur;
    if (it != shared_.end()) cur = it->second;
    auto next = fn(cur);
    if (next) {
      shared_[key] = *next;
      if (dir_) persist_shared_entry(key, *next, false);
    } else if (it != shared_.end()) {
      shared_.erase(it);
      if (dir_) persist_shared_entry(key, "", true);
    }
  }

  std::vector<std::pair<std::string, std::string>> scan_shared(const std::string& prefix) const {
    std::scoped_lock lk(shared_mu_);
    std::vector<std::pair<std::string, std::string>> out;
    for (auto it = shared_.lower_bound(prefix); it != shared_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      out.emplace_back(it->first, it->second);
    }
    return out;
  }

private:
  struct PartitionState {
    PartitionState(const std::optional<std::filesystem::path>& dir, const std::string& topic,
                   int index) {
      if (dir) path = *dir / (topic + ".p" + std::to_string(index) + ".log");
    }

    void append(const Message& msg) {
      log.push_back(msg);
      if (!path) return;
      if (!out.is_open()) out.open(*path, std::ios::app);
      ordered_json j;
      j["offset"] = msg.offset;
      j["key"] = msg.key;
      j["tombstone"] = msg.tombstone;
      j["payload"] = msg.payload;
      out << j.dump() << '\n';
      out.flush();
    }

    mutable std::mutex mu;
    std::vector<Message> log;
    std::optional<std::filesystem::path> path;
    std::ofstream out;
  };

  struct TopicState {
    TopicState(std::string name_, int count, TableNature nature_,
               const std::optional<std::filesystem::path>& dir)
        : name(std::move(name_)), nature(nature_) {
      for (int i = 0; i < count; ++i)
        partitions.push_back(std::make_unique<PartitionState>(dir, name, i));
    }

    int partition_count() const { return static_cast<int>(partitions.size()); }

    std::string name;
    TableNature nature;
    std::vector<std::unique_ptr<PartitionState>> partitions;
    mutable std::mutex compact_mu;
    std::map<std::string, std::pair<std::string, bool>> compacted;  // key -> (payload, tombstone)
  };

  struct MemberState {
    std::uint64_t acked_generation = 0;
    std::vector<TopicPartition> partitions;
  };

  struct GroupState {
    std::string name;
    std::set<std::string> topics;
    std::map<std::string, MemberState> members;
    std::uint64_t generation = 0;
    std::map<TopicPartition, std::uint64_t> positions;  // delivery cursors
    std::map<TopicPartition, std::uint64_t> committed;
  };

  TopicState& state(const std::string& topic) const {
    std::scoped_lock lk(admin_mu_);
    auto it = topics_.find(topic);
    if (it == topics_.end()) throw ConfigError("unknown topic " + topic);
    return *it->second;
  }

  GroupState& group_state(const std::string& group) {
    auto it = groups_.find(group);
    if (it == groups_.end()) throw ConfigError("unknown group " + group);
    return it->second;
  }

  static bool synced(const GroupState& g) {
    for (const auto& [id, m] : g.members)
      if (m.acked_generation < g.generation) return false;
    return true;
  }

  Assignment make_assignment(const GroupState& g, const std::string& consumer_id) const {
    Assignment a;
    a.group = g.name;
    a.consumer_id = consumer_id;
    a.generation = g.generation;
    a.partitions = g.members.at(consumer_id).partitions;
    return a;
  }

  /// Range strategy: sorted partitions split into contiguous chunks over
  /// sorted consumer ids. Deterministic; extra consumers get nothing.
  void rebalance(GroupState& g) {
    ++g.generation;
    std::vector<TopicPartition> tps;
    for (const auto& topic : g.topics) {
      const TopicState& t = state(topic);
      for (int p = 0; p < t.partition_count(); ++p) tps.push_back({topic, p});
    }
    std::sort(tps.begin(), tps.end());
    std::vector<std::string> ids;
    for (const auto& [id, m] : g.members) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    const std::size_t n = tps.size(), c = ids.size();
    std::size_t at = 0;
    OwnershipEvent ev;
    ev.generation = g.generation;
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t take = n / c + (i < n % c ? 1 : 0);
      MemberState& m = g.members[ids[i]];
      m.partitions.assign(tps.begin() + static_cast<std::ptrdiff_t>(at),
                          tps.begin() + static_cast<std::ptrdiff_t>(at + take));
      for (const auto& tp : m.partitions) ev.owner[tp] = ids[i];
      at += take;
    }
    // Delivery restarts from committed offsets: duplicates are possible only
    // across this boundary.
    for (const auto& tp : tps) g.positions[tp] = g.committed[tp];
    ownership_log_.push_back(std::move(ev));
  }

  static std::string commit_key(const std::string& group, const TopicPartition& tp) {
    return "__commit/" + group + "/" + tp.topic + "/" + std::to_string(tp.partition);
  }

  void persist_shared_entry(const std::string& key, const std::string& value, bool erased) {
    std::scoped_lock lk(persist_mu_);
    if (!shared_out_.is_open()) shared_out_.open(*dir_ / "shared.log", std::ios::app);
    ordered_json j;
    j["k"] = key;
    if (erased)
      j["erased"] = true;
    else
      j["v"] = value;
    shared_out_ << j.dump() << '\n';
    shared_out_.flush();
  }

  void load_topics() {
    std::ifstream meta(*dir_ / "topics.meta");
    std::string line;
    while (std::getline(meta, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        continue;  // torn line from an abort
      }
      const std::string name = j.at("name").get<std::string>();
      const int count = j.at("partitions").get<int>();
      const TableNature nature = j.at("nature").get<std::string>() == "MASTER"
                                     ? TableNature::kMaster
                                     : TableNature::kOperational;
      if (topics_.count(name)) continue;
      auto topic = std::make_unique<TopicState>(name, count, nature, std::nullopt);
      for (int p = 0; p < count; ++p) {
        PartitionState& part = *topic->partitions[static_cast<std::size_t>(p)];
        part.path = *dir_ / (name + ".p" + std::to_string(p) + ".log");
        std::ifstream in(*part.path);
        std::string mline;
        while (std::getline(in, mline)) {
          if (mline.empty()) continue;
          json mj;
          try {
            mj = json::parse(mline);
          } catch (const json::exception&) {
            break;  // torn tail; drop the rest
          }
          Message msg;
          msg.topic = name;
          msg.partition = p;
          msg.offset = mj.at("offset").get<std::uint64_t>();
          msg.key = mj.at("key").get<std::string>();
          msg.tombstone = mj.at("tombstone").get<bool>();
          msg.payload = mj.at("payload").get<std::string>();
          if (msg.offset != part.log.size()) break;  // gap means corruption; keep the prefix
          part.log.push_back(msg);
          std::scoped_lock clk(topic->compact_mu);
          topic->compacted[msg.key] = {msg.payload, msg.tombstone};
        }
      }
      topics_[name] = std::move(topic);
    }
  }

  void load_shared() {
    std::ifstream in(*dir_ / "shared.log");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        break;
      }
      const std::string key = j.at("k").get<std::string>();
      if (j.contains("erased"))
        shared_.erase(key);
      else
        shared_[key] = j.at("v").get<std::string>();
    }
    // Committed offsets ride on the shared log under a reserved prefix.
    for (auto it = shared_.lower_bound("__commit/"); it != shared_.end(); ++it) {
      if (it->first.rfind("__commit/", 0) != 0) break;
      std::string rest = it->first.substr(9);
      const auto s1 = rest.find('/');
      const auto s2 = rest.rfind('/');
      if (s1 == std::string::npos || s2 == s1) continue;
      GroupState& g = groups_[rest.substr(0, s1)];
      g.name = rest.substr(0, s1);
      TopicPartition tp{rest.substr(s1 + 1, s2 - s1 - 1), std::stoi(rest.substr(s2 + 1))};
      g.committed[tp] = std::stoull(it->second);
    }
    std::erase_if(shared_, [](const auto& kv) { return kv.first.rfind("__commit/", 0) == 0; });
  }

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex admin_mu_;
  std::map<std::string, std::unique_ptr<TopicState>> topics_;
  mutable std::mutex group_mu_;
  std::map<std::string, GroupState> groups_;
  std::vector<OwnershipEvent> ownership_log_;
  mutable std::mutex shared_mu_;
  std::map<std::string, std::string> shared_;
  std::mutex persist_mu_;
  std::ofstream shared_out_;
};

}  // namespace millstream
