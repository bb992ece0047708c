#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "any2full/io.hpp"
#include "any2full/rng.hpp"

using namespace a2f;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

DepthMap seeded_map(int h, int w, std::uint64_t seed, double invalid_prob = 0.2) {
  Rng rng(seed);
  DepthMap d(h, w);
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    if (rng.uniform() < invalid_prob) continue;
    d.values[i] = rng.uniform(0.1, 5.0);
    d.valid[i] = 1;
  }
  return d;
}

}  // namespace

TEST_CASE("pfm header layout", "[io]") {
  DepthMap d(32, 32);
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    d.values[i] = 1.0 + double(i) * 1e-3;
    d.valid[i] = 1;
  }
  const std::string bytes = encode_pfm(d);
  const std::string header = "Pf\n32 32\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 4096);
  CHECK(bytes.compare(0, header.size(), header) == 0);
}

TEST_CASE("pfm round trip preserves validity and float32 values", "[io]") {
  const DepthMap d = seeded_map(12, 9, 42);
  const DepthMap back = decode_pfm(encode_pfm(d));
  REQUIRE(back.height == d.height);
  REQUIRE(back.width == d.width);
  CHECK(back.valid == d.valid);
  for (std::size_t i = 0; i < d.pixels(); ++i)
    if (d.valid[i]) CHECK(back.values[i] == double(float(d.values[i])));

  // second trip is exact: float32 quantization is idempotent
  const DepthMap back2 = decode_pfm(encode_pfm(back));
  CHECK(back2.values == back.values);
  CHECK(encode_pfm(back2) == encode_pfm(back));
}

TEST_CASE("pfm error paths", "[io]") {
  DepthMap nan_map(2, 2);
  nan_map.values = {1.0, std::nan(""), 1.0, 1.0};
  nan_map.valid = {1, 1, 1, 1};
  CHECK_THROWS_AS(encode_pfm(nan_map), DataError);

  CHECK_THROWS_AS(decode_pfm("PF\n2 2\n-1.0\n"), FormatError);  // color pfm unsupported
  CHECK_THROWS_AS(decode_pfm("Px\n2 2\n-1.0\n"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n2 x\n-1.0\n"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n2 2\n-1.0\nxx"), FormatError);  // truncated data
}

TEST_CASE("big-endian pfm is byte-swapped on read", "[io]") {
  // hand-crafted: positive scale means big-endian floats
  const float vals[4] = {1.5f, 0.25f, 3.0f, 0.0f};
  std::string be = "Pf\n2 2\n1.0\n";
  for (float v : vals) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    be.push_back(char((bits >> 24) & 0xff));
    be.push_back(char((bits >> 16) & 0xff));
    be.push_back(char((bits >> 8) & 0xff));
    be.push_back(char(bits & 0xff));
  }
  const DepthMap d = decode_pfm(be);
  // rows are stored bottom-up: first data row is image row 1
  CHECK(d.values[d.idx(1, 0)] == 1.5);
  CHECK(d.values[d.idx(1, 1)] == 0.25);
  CHECK(d.values[d.idx(0, 0)] == 3.0);
  CHECK(!d.valid[d.idx(0, 1)]);  // 0.0 reads back invalid
}

TEST_CASE("golden pfm files round-trip byte-exactly", "[io]") {
  const std::string le_path = std::string(A2F_GOLDEN_DIR) + "/ramp_8x6.pfm";
  const std::string be_path = std::string(A2F_GOLDEN_DIR) + "/ramp_8x6_be.pfm";
  const std::string le_bytes = slurp(le_path);
  const DepthMap le = decode_pfm(le_bytes);
  CHECK(encode_pfm(le) == le_bytes);

  const DepthMap be = decode_pfm(slurp(be_path));
  CHECK(be.values == le.values);
  CHECK(be.valid == le.valid);
}

TEST_CASE("ppm encode/decode", "[io]") {
  RgbImage img(3, 5);
  Rng rng(7);
  for (auto& v : img.rgb) v = rng.uniform();
  const std::string bytes = encode_ppm(img);
  const std::string header = "P6\n5 3\n255\n";
  CHECK(bytes.compare(0, header.size(), header) == 0);
  REQUIRE(bytes.size() == header.size() + 45);

  const RgbImage back = decode_ppm(bytes);
  REQUIRE(back.height == 3);
  REQUIRE(back.width == 5);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    CHECK(back.rgb[i] == Catch::Approx(img.rgb[i]).margin(0.5 / 255.0 + 1e-12));
  CHECK(encode_ppm(back) == bytes);

  CHECK_THROWS_AS(decode_ppm("P5\n1 1\n255\nx"), FormatError);
}

TEST_CASE("falsecolor render shape", "[io]") {
  const DepthMap d = seeded_map(6, 7, 9);
  const RgbImage img = falsecolor(d);
  CHECK(img.height == 6);
  CHECK(img.width == 7);
  for (std::size_t i = 0; i < d.pixels(); ++i)
    if (!d.valid[i])
      for (int c = 0; c < 3; ++c) CHECK(img.rgb[i * 3 + c] == 0.0);
}

TEST_CASE("a2f1 container round-trips byte-exactly", "[io]") {
  ModelBundle b;
  b.model = make_model_params(b.backbone);
  b.sape = make_sape_params(b.backbone, b.sape_config);

  const std::string bytes = encode_params(b);
  CHECK(bytes.compare(0, 4, "A2F1") == 0);
  const ModelBundle back = decode_params(bytes);
  CHECK(encode_params(back) == bytes);

  // parameter values survive bitwise
  std::vector<double> flat_a, flat_b;
  b.model.visit([&](const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) flat_a.push_back(t[i]);
  });
  back.model.visit([&](const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) flat_b.push_back(t[i]);
  });
  CHECK(flat_a == flat_b);

  std::string bad = bytes;
  bad[0] = 'B';
  CHECK_THROWS_AS(decode_params(bad), FormatError);
  CHECK_THROWS_AS(decode_params(bytes.substr(0, bytes.size() / 2)), FormatError);
}

TEST_CASE("golden a2f1 container is stable", "[io]") {
  const std::string path = std::string(A2F_GOLDEN_DIR) + "/params_toy.a2f";
  const std::string bytes = slurp(path);
  const ModelBundle b = decode_params(bytes);
  CHECK(encode_params(b) == bytes);

  // the default-seeded bundle still serializes to the same container,
  // guarding the initialization and field order
  ModelBundle fresh;
  fresh.model = make_model_params(fresh.backbone);
  fresh.sape = make_sape_params(fresh.backbone, fresh.sape_config);
  CHECK(encode_params(fresh) == bytes);
}

TEST_CASE("atomic write leaves no temp file", "[io]") {
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string path = dir + "/a2f_io_test.bin";
  write_file_atomic(path, "payload");
  CHECK(slurp(path) == "payload");
  CHECK(!std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove(path);
}
