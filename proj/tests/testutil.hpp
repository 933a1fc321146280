#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <millstream/common.hpp>
#include <millstream/record.hpp>
#include <millstream/table_config.hpp>

namespace millstream::testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("millstream-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

private:
  std::filesystem::path path_;
};

inline TableConfig master_table(const std::string& name, const std::string& row_key,
                                const std::string& business_key = "") {
  TableConfig cfg;
  cfg.table = name;
  cfg.nature = TableNature::kMaster;
  cfg.row_key_column = row_key;
  cfg.business_key_column = business_key;
  cfg.partition_count = 1;
  return cfg;
}

inline TableConfig operational_table(const std::string& name, const std::string& row_key,
                                     const std::string& business_key, int partitions = 4) {
  TableConfig cfg;
  cfg.table = name;
  cfg.nature = TableNature::kOperational;
  cfg.row_key_column = row_key;
  cfg.business_key_column = business_key;
  cfg.partition_count = partitions;
  return cfg;
}

}  // namespace millstream::testutil
