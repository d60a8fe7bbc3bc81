#include <cstring>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "zoosel/blob_io.hpp"

namespace zoosel {
namespace {

blob::Blob sample_blob() {
  std::mt19937_64 rng(1);
  blob::Blob b;
  b.kind = "thing";
  b.header = {{"note", "hello"}, {"n", 3}};
  b.blocks.push_back({"a", testing::random_matrix(3, 4, rng)});
  b.blocks.push_back({"b", testing::random_matrix(1, 2, rng)});
  b.blocks.push_back({"empty", Matrix(0, 5)});
  return b;
}

TEST(Blob, RoundTripIsBitExact) {
  const auto b = sample_blob();
  const std::string bytes = blob::encode(b);
  EXPECT_EQ(bytes.substr(0, 8), "ZOOSELB1");
  const auto back = blob::decode(bytes, "thing");
  EXPECT_EQ(back.kind, "thing");
  EXPECT_EQ(back.header, b.header);
  ASSERT_EQ(back.blocks.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.blocks[i].name, b.blocks[i].name);
    EXPECT_EQ(back.blocks[i].values, b.blocks[i].values);
  }
  EXPECT_EQ(blob::encode(back), bytes);
  EXPECT_ZOOSEL_ERROR((void)back.block("zzz"), Errc::malformed_header);
}

TEST(Blob, WrongKindIsRejected) {
  EXPECT_ZOOSEL_ERROR((void)blob::decode(blob::encode(sample_blob()), "other"), Errc::malformed_header);
}

TEST(Blob, TruncationAtEveryLengthFails) {
  const std::string bytes = blob::encode(sample_blob());
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    try {
      (void)blob::decode(std::string_view(bytes).substr(0, len), "thing");
      ADD_FAILURE() << "truncated to " << len << " decoded";
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == Errc::truncated_file || e.code() == Errc::malformed_header ||
                  e.code() == Errc::corrupt_payload)
          << len << ": " << e.what();
    }
  }
}

TEST(Blob, EverySingleByteCorruptionIsDetected) {
  const std::string bytes = blob::encode(sample_blob());
  for (std::size_t pos = 0; pos < bytes.size(); ++pos) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x5a);
    try {
      (void)blob::decode(bad, "thing");
      ADD_FAILURE() << "corruption at byte " << pos << " went unnoticed";
    } catch (const Error& e) {
      const auto c = e.code();
      EXPECT_TRUE(c == Errc::truncated_file || c == Errc::malformed_header || c == Errc::version_mismatch ||
                  c == Errc::corrupt_payload)
          << pos << ": " << e.what();
    }
  }
}

TEST(Blob, PayloadCorruptionReportsCorruptPayload) {
  std::string bytes = blob::encode(sample_blob());
  bytes[bytes.size() - 3] ^= 0x01;
  EXPECT_ZOOSEL_ERROR((void)blob::decode(bytes, "thing"), Errc::corrupt_payload);
}

TEST(Blob, TrailingBytesAreRejected) {
  EXPECT_ZOOSEL_ERROR((void)blob::decode(blob::encode(sample_blob()) + "x", "thing"), Errc::corrupt_payload);
}

TEST(Blob, VersionMismatchIsDistinct) {
  // Rewrite the header with another version but a valid checksum.
  const std::string bytes = blob::encode(sample_blob());
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  auto header = nlohmann::json::parse(bytes.substr(24, len));
  header["version"] = 2;
  const std::string text = header.dump();
  std::string out = "ZOOSELB1";
  const std::uint64_t new_len = text.size();
  const std::uint64_t hash = blob::fnv1a(text);
  out.append(reinterpret_cast<const char*>(&new_len), 8);
  out.append(reinterpret_cast<const char*>(&hash), 8);
  out += text;
  out += bytes.substr(24 + len);
  EXPECT_ZOOSEL_ERROR((void)blob::decode(out, "thing"), Errc::version_mismatch);
}

TEST(Blob, FilesAndFingerprint) {
  testing::TempDir dir("blob");
  blob::write_file(dir.path() / "sub" / "x.bin", sample_blob());
  EXPECT_EQ(blob::read_file(dir.path() / "sub" / "x.bin", "thing").blocks[0].values, sample_blob().blocks[0].values);
  EXPECT_ZOOSEL_ERROR((void)blob::read_bytes(dir.path() / "nope.bin"), Errc::io_error);
  EXPECT_EQ(blob::fingerprint(""), "cbf29ce484222325");
  EXPECT_EQ(blob::fingerprint("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(blob::fingerprint("abc").size(), 16u);
}

}  // namespace
}  // namespace zoosel
