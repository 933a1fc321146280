#pragma once

#include <cstdint>
#include <string>

#include <millstream/common.hpp>

namespace millstream {

enum class Op { kInsert, kUpdate, kDelete };

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInsert: return "INSERT";
    case Op::kUpdate: return "UPDATE";
    case Op::kDelete: return "DELETE";
  }
  return "?";
}

inline Op op_from_name(std::string_view name) {
  if (name == "INSERT") return Op::kInsert;
  if (name == "UPDATE") return Op::kUpdate;
  if (name == "DELETE") return Op::kDelete;
  throw DecodeError("unknown op: " + std::string(name));
}

/// One captured insert/update/delete of one table row.
struct ChangeRecord {
  std::uint64_t seq = 0;  // assigned by the log on append
  std::string table;
  Op op = Op::kInsert;
  TimestampMs tx_ts = 0;
  Row row;
  std::string row_key;  // value of the configured row-key column, for fast access

  /// Wire framing: one self-describing JSON object per line, fields in fixed
  /// order (seq, table, op, tx_ts, row); row columns alphabetical.
  std::string encode() const {
    ordered_json obj;
    obj["seq"] = seq;
    obj["table"] = table;
    obj["op"] = op_name(op);
    obj["tx_ts"] = tx_ts;
    obj["row"] = row_to_json(row);
    return obj.dump();
  }

  static ChangeRecord decode(std::string_view line) {
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DecodeError(std::string("bad record line: ") + e.what());
    }
    if (!obj.is_object()) throw DecodeError("record line is not an object");
    ChangeRecord rec;
    try {
      rec.seq = obj.at("seq").get<std::uint64_t>();
      rec.table = obj.at("table").get<std::string>();
      rec.op = op_from_name(obj.at("op").get<std::string>());
      rec.tx_ts = obj.at("tx_ts").get<std::int64_t>();
      rec.row = row_from_json(obj.at("row"));
    } catch (const json::exception& e) {
      throw DecodeError(std::string("bad record fields: ") + e.what());
    }
    return rec;
  }
};

}  // namespace millstream
