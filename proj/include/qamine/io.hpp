#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qamine/common.hpp"

namespace qamine {

namespace fs = std::filesystem;

/// Writes via a sibling temp file and rename(), so the final name only ever
/// holds a complete artifact.
void write_file_atomic(const fs::path& path, const std::function<void(std::ostream&)>& writer);
void write_file_atomic(const fs::path& path, std::string_view contents);

std::string read_file(const fs::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

nlohmann::ordered_json to_json(const QAPair& pair);
QAPair qa_pair_from_json(const nlohmann::json& j);

/// One JSON object per line.
std::string dump_jsonl(const std::vector<QAPair>& pairs);
void write_pairs_jsonl(const fs::path& path, const std::vector<QAPair>& pairs);
/// Blank lines are skipped; malformed lines raise DataError naming the line.
std::vector<QAPair> read_pairs_jsonl(const fs::path& path);
std::vector<QAPair> parse_pairs_jsonl(std::istream& in, const std::string& source_name);

/// Serialization used for reports: 2-space indent, invalid UTF-8 replaced.
std::string dump_json(const nlohmann::ordered_json& j);

// Little-endian binary primitives for checkpoint and index files.
namespace binio {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw DataError("unexpected end of binary file");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_string(std::ostream& out, std::string_view s);
std::string get_string(std::istream& in);

}  // namespace binio

}  // namespace qamine
