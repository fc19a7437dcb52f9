#pragma once

// File formats: SDFG/UPHY binary grids, SPC1 binary point clouds, ASCII PLY
// point clouds and grayscale PFM images. All binary fields are little-endian.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/sdf_field.hpp"
#include "physdf/spmc.hpp"
#include "physdf/uncertainty.hpp"

namespace physdf::io {

using Bytes = std::vector<std::uint8_t>;

inline void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}
inline void put_u64(Bytes& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}
inline void put_f32(Bytes& b, float v) { put_u32(b, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(Bytes& b, double v) { put_u64(b, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const Bytes& b, std::string what) : b_(b), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string tag(std::size_t n) {
    need(n);
    std::string s(b_.begin() + std::ptrdiff_t(pos_), b_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error(what_ + ": truncated file");
  }
  const Bytes& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline void write_text(const std::string& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kGridVersion = 1;

inline Bytes encode_grid(const std::string& magic, const Dims& dims, const Aabb& bbox,
                         const std::vector<double>& values) {
  Bytes b(magic.begin(), magic.end());
  put_u32(b, kGridVersion);
  for (auto d : dims) put_u32(b, std::uint32_t(d));
  for (int d = 0; d < 3; ++d) put_f64(b, bbox.min[d]);
  for (int d = 0; d < 3; ++d) put_f64(b, bbox.max[d]);
  for (double v : values) put_f32(b, float(v));
  return b;
}

struct DecodedGrid {
  Dims dims{};
  Aabb bbox{};
  std::vector<double> values;
};

inline DecodedGrid decode_grid(const std::string& magic, const Bytes& data) {
  Reader r(data, magic + " grid");
  if (r.tag(4) != magic) throw Error("not a " + magic + " file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kGridVersion)
    throw Error(magic + ": unsupported version " + std::to_string(version));
  DecodedGrid g;
  for (auto& d : g.dims) d = r.u32();
  for (int d = 0; d < 3; ++d) g.bbox.min[d] = r.f64();
  for (int d = 0; d < 3; ++d) g.bbox.max[d] = r.f64();
  const std::size_t count = g.dims[0] * g.dims[1] * g.dims[2];
  if (r.remaining() != count * 4) throw Error(magic + ": value count does not match dims");
  g.values.resize(count);
  for (auto& v : g.values) v = r.f32();
  return g;
}

inline Bytes encode_sdf(const SdfGrid& g) { return encode_grid("SDFG", g.dims(), g.bbox(), g.values()); }

inline SdfGrid decode_sdf(const Bytes& data) {
  DecodedGrid g = decode_grid("SDFG", data);
  return SdfGrid(g.dims, g.bbox, std::move(g.values));
}

inline void save_sdf(const std::string& path, const SdfGrid& g) { write_file(path, encode_sdf(g)); }
inline SdfGrid load_sdf(const std::string& path) { return decode_sdf(read_file(path)); }

inline Bytes encode_uncertainty(const UncertaintyGrid& g) {
  return encode_grid("UPHY", g.dims(), g.bbox(), g.values());
}

inline UncertaintyGrid decode_uncertainty(const Bytes& data) {
  DecodedGrid g = decode_grid("UPHY", data);
  return UncertaintyGrid(g.dims, g.bbox, std::move(g.values));
}

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

/// SPC1: magic, u64 count, count xyz f64 triples, then optionally count normals.
inline Bytes encode_spc1(const SurfacePointCloud& c) {
  Bytes b{'S', 'P', 'C', '1'};
  put_u64(b, c.size());
  for (const auto& p : c.points)
    for (int d = 0; d < 3; ++d) put_f64(b, p[d]);
  if (c.has_normals())
    for (const auto& n : c.normals)
      for (int d = 0; d < 3; ++d) put_f64(b, n[d]);
  return b;
}

inline SurfacePointCloud decode_spc1(const Bytes& data) {
  Reader r(data, "SPC1");
  if (r.tag(4) != "SPC1") throw Error("not an SPC1 file (bad magic)");
  const std::uint64_t n = r.u64();
  const std::size_t block = std::size_t(n) * 24;
  const bool normals = r.remaining() == 2 * block;
  if (!normals && r.remaining() != block) throw Error("SPC1: length does not match point count");
  SurfacePointCloud c;
  c.points.resize(std::size_t(n));
  for (auto& p : c.points)
    for (int d = 0; d < 3; ++d) p[d] = r.f64();
  if (normals) {
    c.normals.resize(std::size_t(n));
    for (auto& q : c.normals)
      for (int d = 0; d < 3; ++d) q[d] = r.f64();
  }
  return c;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string encode_ply(const SurfacePointCloud& c) {
  const bool normals = c.has_normals();
  std::string s = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(c.size()) +
                  "\nproperty double x\nproperty double y\nproperty double z\n";
  if (normals) s += "property double nx\nproperty double ny\nproperty double nz\n";
  s += "end_header\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    s += fmt17(c.points[i][0]) + ' ' + fmt17(c.points[i][1]) + ' ' + fmt17(c.points[i][2]);
    if (normals)
      s += ' ' + fmt17(c.normals[i][0]) + ' ' + fmt17(c.normals[i][1]) + ' ' + fmt17(c.normals[i][2]);
    s += '\n';
  }
  return s;
}

/// Reads ASCII PLY vertex positions and, when declared, normals.
inline SurfacePointCloud decode_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw Error("PLY: missing 'ply' header");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error("PLY: only ascii format is supported");
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  auto find = [&](const std::string& n) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == n) return int(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) throw Error("PLY: vertex x, y, z properties are required");
  const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
  SurfacePointCloud c;
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : row)
      if (!(in >> v)) throw Error("PLY: truncated vertex list");
    c.points.push_back({row[std::size_t(ix)], row[std::size_t(iy)], row[std::size_t(iz)]});
    if (normals) c.normals.push_back({row[std::size_t(inx)], row[std::size_t(iny)], row[std::size_t(inz)]});
  }
  return c;
}

/// Loads a point cloud, choosing the format from the file's leading bytes.
inline SurfacePointCloud load_points(const std::string& path) {
  const Bytes b = read_file(path);
  if (b.size() >= 4 && std::string(b.begin(), b.begin() + 4) == "SPC1") return decode_spc1(b);
  return decode_ply(std::string(b.begin(), b.end()));
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Grayscale PFM ("Pf"), little-endian (scale -1), rows stored bottom to top.
/// `pixels` is row-major with row 0 at the top.
inline Bytes encode_pfm(std::size_t width, std::size_t height, const std::vector<double>& pixels) {
  if (pixels.size() != width * height) throw Error("PFM: pixel count does not match size");
  const std::string header = "Pf\n" + std::to_string(width) + " " + std::to_string(height) + "\n-1\n";
  Bytes b(header.begin(), header.end());
  for (std::size_t row = height; row-- > 0;)
    for (std::size_t x = 0; x < width; ++x) put_f32(b, float(pixels[row * width + x]));
  return b;
}

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, top row first
};

inline Image decode_pfm(const Bytes& data) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size() && std::isspace(data[pos])) ++pos;
    std::string t;
    while (pos < data.size() && !std::isspace(data[pos])) t.push_back(char(data[pos++]));
    return t;
  };
  if (token() != "Pf") throw Error("PFM: only grayscale 'Pf' images are supported");
  Image img;
  img.width = std::stoul(token());
  img.height = std::stoul(token());
  const double scale = std::stod(token());
  if (scale >= 0.0) throw Error("PFM: big-endian files are not supported");
  ++pos;  // single whitespace after the scale
  Bytes body(data.begin() + std::ptrdiff_t(pos), data.end());
  Reader r(body, "PFM");
  img.pixels.resize(img.width * img.height);
  for (std::size_t row = img.height; row-- > 0;)
    for (std::size_t x = 0; x < img.width; ++x) img.pixels[row * img.width + x] = r.f32();
  return img;
}

}  // namespace physdf::io
