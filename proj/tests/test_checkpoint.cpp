#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "kiras/checkpoint.hpp"

using namespace kiras;

TEST_SUITE("checkpoint") {

TEST_CASE("all section kinds round-trip through bytes") {
  CheckpointFile f;
  Vec v(3);
  v << 1.5, -2.25, 3.0e-8;
  f.add_f64("plain", v);
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  f.add_f64_mat("matrix", m);
  f.add_f64_scalar("scalar", 0.1);
  f.add_i64("ints", {-1, 0, 42});
  f.add_i64_scalar("count", 7);
  f.add_str("text", "hello\nworld");
  Vec q(2);
  q << 0.1, 1.0 / 3.0;
  f.add_f32("quantized", q);

  const std::string bytes = encode_checkpoint(f);
  const CheckpointFile back = decode_checkpoint(bytes);
  CHECK(back.f64("plain") == v);
  CHECK(back.f64_mat("matrix") == m);
  CHECK(back.f64_scalar("scalar") == 0.1);
  CHECK(back.i64("ints") == std::vector<std::int64_t>{-1, 0, 42});
  CHECK(back.i64_scalar("count") == 7);
  CHECK(back.str("text") == "hello\nworld");
  const Vec qb = back.f32("quantized");
  CHECK(qb(0) == static_cast<double>(static_cast<float>(0.1)));
  CHECK(qb(1) == static_cast<double>(static_cast<float>(1.0 / 3.0)));
  // decode → encode is byte-stable
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("f64 sections keep doubles exactly, f32 sections quantize") {
  CheckpointFile f;
  Vec v(1);
  v << 0.1;  // not representable in float
  f.add_f64("d", v);
  f.add_f32("s", v);
  const CheckpointFile back = decode_checkpoint(encode_checkpoint(f));
  CHECK(back.f64("d")(0) == 0.1);
  CHECK(back.f32("s")(0) != 0.1);
  CHECK(back.f32("s")(0) == doctest::Approx(0.1).epsilon(1e-7));
}

TEST_CASE("corrupt streams are rejected with diagnostics") {
  CheckpointFile f;
  f.add_i64_scalar("x", 1);
  std::string bytes = encode_checkpoint(f);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), IoError);

  std::string bad_version = bytes;
  bad_version[4] = 99;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad_version),
                       "unsupported checkpoint version 99 (expected 1)", IoError);

  const std::string truncated = bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), IoError);

  std::string trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), IoError);

  CHECK_THROWS_AS(decode_checkpoint(""), IoError);
}

TEST_CASE("missing or mistyped sections throw") {
  CheckpointFile f;
  f.add_i64_scalar("n", 3);
  f.add_str("s", "x");
  CHECK_THROWS_AS(f.f64("nope"), IoError);
  CHECK_THROWS_AS(f.f64("n"), IoError);       // wrong kind
  CHECK_THROWS_AS(f.i64_scalar("s"), IoError);
  CHECK(f.has("n"));
  CHECK_FALSE(f.has("nope"));
}

TEST_CASE("file io round-trips and cleans up its temp file") {
  namespace fs = std::filesystem;
  CheckpointFile f;
  f.add_str("payload", "data");
  const std::string path = "ckpt_roundtrip_test.kira";
  write_checkpoint_file(path, f);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  const CheckpointFile back = read_checkpoint_file(path);
  CHECK(back.str("payload") == "data");
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_checkpoint_file("missing_checkpoint.kira"), IoError);
}

}  // TEST_SUITE
