#pragma once

// On-disk container shared by error matrices, extractor checkpoints and
// representation libraries:
//
//   [8 bytes magic "ZOOSELB1"][u64 header length][u64 header FNV-1a]
//   [JSON header][f64 payload]
//
// All integers and floats are little-endian.
//
// The header always carries "version", "kind" and a "blocks" array of
// {name, rows, cols}; the payload is the concatenation of those blocks in
// row-major order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "zoosel/matrix.hpp"

namespace zoosel::blob {

inline constexpr std::string_view kMagic = "ZOOSELB1";
inline constexpr int kVersion = 1;

struct Block {
  std::string name;
  Matrix values;
};

struct Blob {
  std::string kind;
  nlohmann::json header;  // user fields; version/kind/blocks are added on write
  std::vector<Block> blocks;

  [[nodiscard]] const Matrix& block(std::string_view name) const;
};

/// Serializes into the byte layout above. Output is deterministic for equal
/// inputs (the JSON header is dumped with sorted keys).
std::string encode(const Blob& blob);
Blob decode(std::string_view bytes, std::string_view expected_kind);

void write_file(const std::filesystem::path& path, const Blob& blob);
Blob read_file(const std::filesystem::path& path, std::string_view expected_kind);

std::string read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::string_view bytes);

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fingerprint(std::string_view bytes);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = kFnvOffsetBasis);
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed = kFnvOffsetBasis);

}  // namespace zoosel::blob
