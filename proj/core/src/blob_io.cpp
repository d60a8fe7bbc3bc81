#include "zoosel/blob_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace zoosel::blob {

static_assert(std::endian::native == std::endian::little,
              "blob format assumes a little-endian host");

namespace {

constexpr std::size_t kPrefix = 8 + 8 + 8;

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data() + offset, 8);
  return v;
}

}  // namespace

const Matrix& Blob::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b.values;
  }
  fail(Errc::malformed_header, "blob has no block named '" + std::string(name) + "'");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(values.data()),
                                values.size() * sizeof(double)),
               seed);
}

std::string fingerprint(std::string_view bytes) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(bytes);
  return os.str();
}

std::string encode(const Blob& blob) {
  nlohmann::json header = blob.header.is_null() ? nlohmann::json::object() : blob.header;
  header["version"] = kVersion;
  header["kind"] = blob.kind;
  auto blocks = nlohmann::json::array();
  std::uint64_t payload_hash = kFnvOffsetBasis;
  for (const auto& b : blob.blocks) {
    blocks.push_back({{"name", b.name}, {"rows", b.values.rows()}, {"cols", b.values.cols()}});
    payload_hash = fnv1a(b.values.flat(), payload_hash);
  }
  header["blocks"] = std::move(blocks);
  header["payload_fnv"] = payload_hash;
  const std::string text = header.dump();

  std::string out;
  out.append(kMagic);
  put_u64(out, text.size());
  put_u64(out, fnv1a(text));
  out.append(text);
  for (const auto& b : blob.blocks) {
    out.append(reinterpret_cast<const char*>(b.values.data().data()),
               b.values.size() * sizeof(double));
  }
  return out;
}

Blob decode(std::string_view bytes, std::string_view expected_kind) {
  if (bytes.size() < kPrefix) fail(Errc::truncated_file, "file shorter than fixed prefix");
  if (bytes.substr(0, 8) != kMagic) fail(Errc::malformed_header, "bad magic bytes");
  const std::uint64_t header_len = get_u64(bytes, 8);
  const std::uint64_t header_hash = get_u64(bytes, 16);
  if (header_len > bytes.size() - kPrefix) {
    fail(Errc::truncated_file, "header length exceeds file size");
  }
  const std::string_view text = bytes.substr(kPrefix, header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_header, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("version") || !header["version"].is_number_integer()) {
    fail(Errc::malformed_header, "header lacks an integer version");
  }
  if (header["version"].get<int>() != kVersion) {
    fail(Errc::version_mismatch, "unsupported version " + header["version"].dump());
  }
  if (fnv1a(text) != header_hash) fail(Errc::malformed_header, "header checksum mismatch");
  if (!header.contains("kind") || !header["kind"].is_string() || header["kind"] != expected_kind) {
    fail(Errc::malformed_header, "expected a '" + std::string(expected_kind) + "' file");
  }
  if (!header.contains("blocks") || !header["blocks"].is_array()) {
    fail(Errc::malformed_header, "header lacks block table");
  }

  Blob blob;
  blob.kind = header["kind"].get<std::string>();
  std::size_t offset = kPrefix + header_len;
  std::uint64_t payload_hash = kFnvOffsetBasis;
  for (const auto& entry : header["blocks"]) {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    try {
      name = entry.at("name").get<std::string>();
      rows = entry.at("rows").get<std::size_t>();
      cols = entry.at("cols").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_header, std::string("bad block table entry: ") + e.what());
    }
    const std::size_t avail = (bytes.size() - offset) / sizeof(double);
    if ((cols != 0 && rows > avail / cols) || rows * cols > avail) {
      fail(Errc::truncated_file, "payload block '" + name + "' is truncated");
    }
    const std::size_t nbytes = rows * cols * sizeof(double);
    std::vector<double> values(rows * cols);
    std::memcpy(values.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
    Block b{name, Matrix(rows, cols, std::move(values))};
    payload_hash = fnv1a(b.values.flat(), payload_hash);
    blob.blocks.push_back(std::move(b));
  }
  if (offset != bytes.size()) fail(Errc::corrupt_payload, "trailing bytes after payload");
  if (!header.contains("payload_fnv") || !header["payload_fnv"].is_number_unsigned() ||
      header["payload_fnv"].get<std::uint64_t>() != payload_hash) {
    fail(Errc::corrupt_payload, "payload checksum mismatch");
  }
  for (const char* key : {"version", "kind", "blocks", "payload_fnv"}) header.erase(key);
  blob.header = std::move(header);
  return blob;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // write a sibling then rename, so readers never see a partial file
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(Errc::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io_error, "cannot replace " + path.string() + ": " + ec.message());
}

void write_file(const std::filesystem::path& path, const Blob& blob) {
  write_bytes(path, encode(blob));
}

Blob read_file(const std::filesystem::path& path, std::string_view expected_kind) {
  return decode(read_bytes(path), expected_kind);
}

}  // namespace zoosel::blob
