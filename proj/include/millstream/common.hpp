#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace millstream {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Milliseconds of simulated (or wall) time since epoch 0.
using TimestampMs = std::int64_t;

// Scalar cell value of a source table row.
using Value = std::variant<std::nullptr_t, bool, std::int64_t, double, std::string>;

// One table row: column name -> value. Ordered map so encodings are canonical.
using Row = std::map<std::string, Value>;

class PipelineError : public std::runtime_error {
public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public PipelineError {
public:
  explicit ValidationError(const std::string& what) : PipelineError(what) {}
};

class ConfigError : public PipelineError {
public:
  explicit ConfigError(const std::string& what) : PipelineError(what) {}
};

class DecodeError : public PipelineError {
public:
  explicit DecodeError(const std::string& what) : PipelineError(what) {}
};

/// 64-bit FNV-1a. Fixed hash so partition placement and fact ids are
/// reproducible across runs and ports.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

inline Value value_from_json(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return nullptr;
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return j.get<std::int64_t>();
    case json::value_t::number_float: return j.get<double>();
    case json::value_t::string: return j.get<std::string>();
    default: throw DecodeError("unsupported cell type: " + std::string(j.type_name()));
  }
}

inline json row_to_json(const Row& row) {
  json obj = json::object();
  for (const auto& [col, v] : row) obj[col] = value_to_json(v);
  return obj;
}

inline Row row_from_json(const json& obj) {
  if (!obj.is_object()) throw DecodeError("row is not an object");
  Row row;
  for (auto it = obj.begin(); it != obj.end(); ++it) row[it.key()] = value_from_json(it.value());
  return row;
}

/// Canonical key rendering: strings pass through, integers in plain decimal.
/// Other types make poor partition keys and are rejected.
inline std::optional<std::string> canonical_key_string(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::nullopt;
}

inline std::optional<std::int64_t> value_as_int(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  return std::nullopt;
}

inline std::optional<double> value_as_double(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::nullopt;
}

inline std::optional<std::string> value_as_string(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return std::nullopt;
}

}  // namespace millstream
