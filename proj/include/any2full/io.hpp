#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "any2full/common.hpp"
#include "any2full/maps.hpp"
#include "any2full/mde_backbone.hpp"
#include "any2full/sape.hpp"

// File formats:
//   PFM  — grayscale "Pf", dims line, scale line (-1.0 = little endian),
//          float32 rows bottom-up. Invalid pixels are stored as 0.0; on read,
//          0.0 and non-finite values are marked invalid.
//   PPM  — binary P6, maxval 255.
//   A2F1 — parameter container: magic "A2F1", version u32, backbone and
//          prompt-encoder config fields, then the raw f64 parameter blocks in
//          visit order (ModelParams first, SapeParams second). All integers
//          and floats little-endian. Byte-exact round trips are part of the
//          contract.

namespace a2f {

// ---------------------------------------------------------------------------
// Byte helpers (explicit little-endian, host-order independent)

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit ByteReader(const std::string& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("container truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return data;
}

}  // namespace detail

// Write-once, atomically: temp file in the same directory, then rename.
inline void write_file_atomic(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + tmp + " for writing");
    f.write(data.data(), std::streamsize(data.size()));
    if (!f) throw FormatError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// PFM

inline std::string encode_pfm(const DepthMap& d) {
  std::string out = "Pf\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n-1.0\n";
  for (int y = d.height - 1; y >= 0; --y)
    for (int x = 0; x < d.width; ++x) {
      const std::size_t i = d.idx(y, x);
      float v = 0.0f;
      if (d.valid[i]) {
        if (!std::isfinite(d.values[i])) throw DataError("write_pfm: non-finite value at valid pixel");
        v = float(d.values[i]);
      }
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(char((bits >> (8 * b)) & 0xff));
    }
  return out;
}

inline void write_pfm(const std::string& path, const DepthMap& d) {
  write_file_atomic(path, encode_pfm(d));
}

inline void write_pfm(const std::string& path, const RelativeMap& m) {
  DepthMap d(m.height, m.width);
  d.values = m.values;
  d.valid = m.valid;
  write_pfm(path, d);
}

inline DepthMap decode_pfm(const std::string& data) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() && std::isspace(std::uint8_t(data[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(std::uint8_t(data[pos]))) ++pos;
    if (start == pos) throw FormatError("pfm: truncated header");
    return data.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "Pf") throw FormatError("pfm: expected grayscale magic 'Pf'");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw FormatError("pfm: malformed header");
  }
  if (w < 1 || h < 1 || scale == 0.0) throw FormatError("pfm: malformed header");
  if (pos >= data.size()) throw FormatError("pfm: truncated header");
  ++pos;  // single whitespace byte separates header from data
  const bool big_endian = scale > 0.0;
  const std::size_t need = std::size_t(w) * h * 4;
  if (data.size() - pos < need) throw FormatError("pfm: truncated pixel data");

  DepthMap d(h, w);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits = 0;
      if (big_endian) {
        for (int b = 0; b < 4; ++b) bits = (bits << 8) | std::uint8_t(data[pos++]);
      } else {
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t(std::uint8_t(data[pos++])) << (8 * b);
      }
      const float v = std::bit_cast<float>(bits);
      const std::size_t i = d.idx(y, x);
      if (v != 0.0f && std::isfinite(v)) {
        d.values[i] = double(v);
        d.valid[i] = 1;
      }
    }
  return d;
}

inline DepthMap read_pfm(const std::string& path) { return decode_pfm(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// PPM (binary P6)

inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img.rgb[img.idx(y, x, c)];
        const int q = int(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
        out.push_back(char(q));
      }
  return out;
}

inline void write_ppm(const std::string& path, const RgbImage& img) {
  write_file_atomic(path, encode_ppm(img));
}

inline RgbImage decode_ppm(const std::string& data) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() && std::isspace(std::uint8_t(data[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(std::uint8_t(data[pos]))) ++pos;
    if (start == pos) throw FormatError("ppm: truncated header");
    return data.substr(start, pos - start);
  };
  if (token() != "P6") throw FormatError("ppm: expected magic 'P6'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("ppm: malformed header");
  }
  if (w < 1 || h < 1 || maxval != 255) throw FormatError("ppm: unsupported header");
  ++pos;
  if (data.size() - pos < std::size_t(w) * h * 3) throw FormatError("ppm: truncated pixel data");
  RgbImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.rgb[img.idx(y, x, c)] = double(std::uint8_t(data[pos++])) / 255.0;
  return img;
}

inline RgbImage read_ppm(const std::string& path) { return decode_ppm(detail::read_file(path)); }

// Five-anchor gradient for depth and error renders; invalid pixels are black.
inline RgbImage falsecolor(const DepthMap& d) {
  static const double anchors[5][3] = {
      {0.05, 0.05, 0.35}, {0.0, 0.55, 0.85}, {0.1, 0.75, 0.25}, {0.95, 0.85, 0.1}, {0.85, 0.1, 0.1}};
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < d.pixels(); ++i) {
    if (!d.valid[i]) continue;
    if (first) {
      lo = hi = d.values[i];
      first = false;
    } else {
      lo = std::min(lo, d.values[i]);
      hi = std::max(hi, d.values[i]);
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;
  RgbImage img(d.height, d.width);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const std::size_t i = d.idx(y, x);
      if (!d.valid[i]) continue;
      const double t = (d.values[i] - lo) / span * 4.0;
      const int k = std::min(3, int(t));
      const double f = t - k;
      for (int c = 0; c < 3; ++c)
        img.rgb[img.idx(y, x, c)] = anchors[k][c] + f * (anchors[k + 1][c] - anchors[k][c]);
    }
  return img;
}

// ---------------------------------------------------------------------------
// A2F1 parameter container

inline constexpr std::uint32_t kContainerVersion = 1;

struct ModelBundle {
  BackboneConfig backbone;
  SapeConfig sape_config;
  ModelParams model;
  SapeParams sape;
};

inline std::string encode_params(const ModelBundle& b) {
  std::string out = "A2F1";
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, std::uint32_t(b.backbone.input_height));
  detail::put_u32(out, std::uint32_t(b.backbone.input_width));
  detail::put_u32(out, std::uint32_t(b.backbone.patch));
  detail::put_u32(out, std::uint32_t(b.backbone.dim));
  detail::put_u32(out, std::uint32_t(b.backbone.heads));
  detail::put_u32(out, std::uint32_t(b.backbone.groups));
  detail::put_u32(out, std::uint32_t(b.backbone.blocks_per_group));
  detail::put_f64(out, b.backbone.mlp_ratio);
  detail::put_u64(out, b.backbone.seed);
  detail::put_u32(out, std::uint32_t(b.sape_config.prompted_levels));
  detail::put_u32(out, std::uint32_t(b.sape_config.embed_divisors.size()));
  for (int d : b.sape_config.embed_divisors) detail::put_u32(out, std::uint32_t(d));
  detail::put_u64(out, b.sape_config.seed);

  std::size_t n_model = 0, n_sape = 0;
  b.model.visit([&](const Tensor& t) { n_model += t.size(); });
  b.sape.visit([&](const Tensor& t) { n_sape += t.size(); });
  detail::put_u64(out, n_model);
  b.model.visit([&](const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64(out, t[i]);
  });
  detail::put_u64(out, n_sape);
  b.sape.visit([&](const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64(out, t[i]);
  });
  return out;
}

inline void write_params(const std::string& path, const ModelBundle& b) {
  write_file_atomic(path, encode_params(b));
}

inline ModelBundle decode_params(const std::string& data) {
  if (data.size() < 4 || data.compare(0, 4, "A2F1") != 0)
    throw FormatError("params: bad magic, expected A2F1");
  detail::ByteReader r(data);
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) throw FormatError("params: unsupported container version");

  ModelBundle b;
  b.backbone.input_height = int(r.u32());
  b.backbone.input_width = int(r.u32());
  b.backbone.patch = int(r.u32());
  b.backbone.dim = r.u32();
  b.backbone.heads = r.u32();
  b.backbone.groups = r.u32();
  b.backbone.blocks_per_group = r.u32();
  b.backbone.mlp_ratio = r.f64();
  b.backbone.seed = r.u64();
  b.sape_config.prompted_levels = r.u32();
  const std::uint32_t nd = r.u32();
  b.sape_config.embed_divisors.clear();
  for (std::uint32_t i = 0; i < nd; ++i) b.sape_config.embed_divisors.push_back(int(r.u32()));
  b.sape_config.seed = r.u64();

  b.model = make_model_params(b.backbone);
  b.sape = make_sape_params(b.backbone, b.sape_config);

  const std::uint64_t n_model = r.u64();
  std::size_t expect = 0;
  b.model.visit([&](const Tensor& t) { expect += t.size(); });
  if (n_model != expect) throw FormatError("params: model block size mismatch");
  b.model.visit([&](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  });
  const std::uint64_t n_sape = r.u64();
  expect = 0;
  b.sape.visit([&](const Tensor& t) { expect += t.size(); });
  if (n_sape != expect) throw FormatError("params: prompt-encoder block size mismatch");
  b.sape.visit([&](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  });
  if (r.pos != data.size()) throw FormatError("params: trailing bytes");
  return b;
}

inline ModelBundle read_params(const std::string& path) {
  return decode_params(detail::read_file(path));
}

}  // namespace a2f
