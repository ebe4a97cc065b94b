#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajvis/geometry.hpp"
#include "trajvis/image.hpp"
#include "trajvis/trajectory.hpp"
#include "trajvis/types.hpp"

namespace trajvis {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// PPM (binary P6)

inline void write_ppm(const std::string& path, const ColorFrame& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << f.width << " " << f.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(f.data.data()),
            static_cast<std::streamsize>(f.data.size()));
  if (!out) throw IoError("short write: " + path);
}

namespace detail {

inline int ppm_next_value(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  for (;;) {
    const int c = in.peek();
    if (c == EOF) throw IoError("truncated PPM header: " + path);
    if (c == '#') {
      std::string dummy;
      std::getline(in, dummy);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v;
  if (!(in >> v)) throw IoError("bad PPM header: " + path);
  return v;
}

}  // namespace detail

inline ColorFrame read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6')
    throw IoError("not a binary PPM (P6): " + path);
  const int w = detail::ppm_next_value(in, path);
  const int h = detail::ppm_next_value(in, path);
  const int maxval = detail::ppm_next_value(in, path);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw IoError("unsupported PPM geometry in " + path);
  in.get();  // single whitespace after maxval
  ColorFrame f(w, h);
  in.read(reinterpret_cast<char*>(f.data.data()),
          static_cast<std::streamsize>(f.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(f.data.size()))
    throw IoError("truncated PPM data: " + path);
  return f;
}

// ---------------------------------------------------------------------------
// PNG: 8-bit only; writes truecolor non-interlaced, reads color types
// 0/2/3/4/6 non-interlaced. Compression via zlib.

namespace detail {

inline void png_put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::uint8_t* data, std::size_t len) {
  png_put_u32(out, static_cast<std::uint32_t>(len));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_pos, static_cast<uInt>(4 + len));
  png_put_u32(out, static_cast<std::uint32_t>(crc));
}

inline std::uint32_t png_get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace detail

inline void write_png(const std::string& path, const ColorFrame& f) {
  const std::size_t row = static_cast<std::size_t>(f.width) * 3;
  std::vector<std::uint8_t> raw((row + 1) * f.height);
  for (int y = 0; y < f.height; ++y) {
    raw[(row + 1) * y] = 0;  // filter: none
    std::memcpy(raw.data() + (row + 1) * y + 1, f.data.data() + row * y, row);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()),
                Z_BEST_SPEED) != Z_OK)
    throw IoError("zlib compression failed for " + path);

  std::vector<std::uint8_t> out;
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);
  std::uint8_t ihdr[13];
  ihdr[0] = static_cast<std::uint8_t>(f.width >> 24);
  ihdr[1] = static_cast<std::uint8_t>(f.width >> 16);
  ihdr[2] = static_cast<std::uint8_t>(f.width >> 8);
  ihdr[3] = static_cast<std::uint8_t>(f.width);
  ihdr[4] = static_cast<std::uint8_t>(f.height >> 24);
  ihdr[5] = static_cast<std::uint8_t>(f.height >> 16);
  ihdr[6] = static_cast<std::uint8_t>(f.height >> 8);
  ihdr[7] = static_cast<std::uint8_t>(f.height);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // truecolor
  ihdr[10] = 0;  // compression
  ihdr[11] = 0;  // filter
  ihdr[12] = 0;  // no interlace
  detail::png_chunk(out, "IHDR", ihdr, 13);
  detail::png_chunk(out, "IDAT", comp.data(), comp_len);
  detail::png_chunk(out, "IEND", nullptr, 0);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("short write: " + path);
}

inline ColorFrame read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw IoError("not a PNG: " + path);

  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> idat, palette;
  std::size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = detail::png_get_u32(file.data() + pos);
    if (pos + 12 + len > file.size()) throw IoError("truncated PNG: " + path);
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const std::uint8_t* data = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("bad IHDR in " + path);
      width = static_cast<int>(detail::png_get_u32(data));
      height = static_cast<int>(detail::png_get_u32(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw IoError("interlaced PNG unsupported: " + path);
      if (bit_depth != 8)
        throw IoError("only 8-bit PNGs supported: " + path);
      if (color_type != 0 && color_type != 2 && color_type != 3 && color_type != 4 &&
          color_type != 6)
        throw IoError("unsupported PNG color type: " + path);
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      palette.assign(data, data + len);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || idat.empty())
    throw IoError("incomplete PNG: " + path);

  const int channels = color_type == 2 ? 3 : color_type == 6 ? 4 : color_type == 4 ? 2 : 1;
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw((row + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) !=
          Z_OK ||
      raw_len != raw.size())
    throw IoError("PNG inflate failed: " + path);

  // Undo per-row filters in place.
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    std::uint8_t* r = raw.data() + (row + 1) * y + 1;
    const std::uint8_t* up = y > 0 ? raw.data() + (row + 1) * (y - 1) + 1 : nullptr;
    const int filter = raw[(row + 1) * y];
    switch (filter) {
      case 0:
        break;
      case 1:
        for (std::size_t x = bpp; x < row; ++x) r[x] += r[x - bpp];
        break;
      case 2:
        if (up)
          for (std::size_t x = 0; x < row; ++x) r[x] += up[x];
        break;
      case 3:
        for (std::size_t x = 0; x < row; ++x) {
          const int a = x >= static_cast<std::size_t>(bpp) ? r[x - bpp] : 0;
          const int b = up ? up[x] : 0;
          r[x] += static_cast<std::uint8_t>((a + b) / 2);
        }
        break;
      case 4:
        for (std::size_t x = 0; x < row; ++x) {
          const int a = x >= static_cast<std::size_t>(bpp) ? r[x - bpp] : 0;
          const int b = up ? up[x] : 0;
          const int c = (up && x >= static_cast<std::size_t>(bpp)) ? up[x - bpp] : 0;
          r[x] += detail::paeth(a, b, c);
        }
        break;
      default:
        throw IoError("bad PNG filter type: " + path);
    }
  }

  ColorFrame f(width, height);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* r = raw.data() + (row + 1) * y + 1;
    std::uint8_t* dst = f.data.data() + static_cast<std::size_t>(y) * width * 3;
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* s = r + static_cast<std::size_t>(x) * channels;
      switch (color_type) {
        case 0:
        case 4:
          dst[3 * x] = dst[3 * x + 1] = dst[3 * x + 2] = s[0];
          break;
        case 2:
        case 6:
          dst[3 * x] = s[0];
          dst[3 * x + 1] = s[1];
          dst[3 * x + 2] = s[2];
          break;
        case 3: {
          const std::size_t pi = static_cast<std::size_t>(s[0]) * 3;
          if (pi + 2 >= palette.size()) throw IoError("palette index out of range: " + path);
          dst[3 * x] = palette[pi];
          dst[3 * x + 1] = palette[pi + 1];
          dst[3 * x + 2] = palette[pi + 2];
          break;
        }
      }
    }
  }
  return f;
}

inline ColorFrame read_image(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw IoError("unsupported image extension: " + path);
}

inline void write_image(const std::string& path, const ColorFrame& f) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ppm") return write_ppm(path, f);
  if (ext == ".png") return write_png(path, f);
  throw IoError("unsupported image extension: " + path);
}

// ---------------------------------------------------------------------------
// Homography files: 9 coefficients per line, row-major, canonical scale.
// %.17g so a write/read cycle reproduces the doubles exactly.

inline void write_homographies(std::ostream& out, const std::vector<Homography>& hs) {
  char buf[512];
  for (const Homography& h : hs) {
    const auto& m = h.coeffs();
    std::snprintf(buf, sizeof(buf),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", m[0],
                  m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]);
    out << buf;
  }
}

inline void save_homographies(const std::string& path, const std::vector<Homography>& hs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_homographies(out, hs);
}

inline std::vector<Homography> parse_homographies(std::istream& in) {
  std::vector<Homography> hs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::array<double, 9> m{};
    if (!(fields >> m[0])) continue;  // blank line
    for (int i = 1; i < 9; ++i)
      if (!(fields >> m[i])) throw ParseError(lineno, "expected 9 coefficients");
    double extra;
    if (fields >> extra) throw ParseError(lineno, "trailing fields");
    hs.emplace_back(m);
  }
  return hs;
}

inline std::vector<Homography> load_homographies(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_homographies(in);
}

// ---------------------------------------------------------------------------
// Trajectory record files: per frame, the frame index and the surviving
// points as (origin:x:y) triples, semicolon-separated, 3-decimal coords.
// A `# frame_size w h` comment carries the frame dimensions.

struct RecordFile {
  std::vector<FrameRecord> records;
  int frame_w = 0;
  int frame_h = 0;
};

inline void write_records(std::ostream& out, const std::vector<FrameRecord>& records,
                          int frame_w, int frame_h) {
  out << "# frame_size " << frame_w << " " << frame_h << "\n";
  char buf[96];
  for (const FrameRecord& rec : records) {
    out << rec.frame;
    bool first = true;
    for (const TrajPoint& tp : rec.points) {
      std::snprintf(buf, sizeof(buf), "%s(%d:%.3f:%.3f)", first ? " " : ";",
                    tp.origin_frame, tp.p.x, tp.p.y);
      out << buf;
      first = false;
    }
    out << "\n";
  }
}

inline void save_records(const std::string& path, const std::vector<FrameRecord>& records,
                         int frame_w, int frame_h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_records(out, records, frame_w, frame_h);
}

inline RecordFile parse_records(std::istream& in) {
  RecordFile rf;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# frame_size", 0) == 0) {
      std::istringstream hdr(line.substr(12));
      if (!(hdr >> rf.frame_w >> rf.frame_h))
        throw ParseError(lineno, "bad frame_size header");
      continue;
    }
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    FrameRecord rec;
    if (!(fields >> rec.frame)) continue;  // blank line
    std::string rest;
    std::getline(fields, rest);
    std::size_t i = 0;
    while (i < rest.size()) {
      if (std::isspace(static_cast<unsigned char>(rest[i])) || rest[i] == ';') {
        ++i;
        continue;
      }
      if (rest[i] != '(') throw ParseError(lineno, "expected '('");
      const auto close = rest.find(')', i);
      if (close == std::string::npos) throw ParseError(lineno, "unterminated point");
      std::string triple = rest.substr(i + 1, close - i - 1);
      std::replace(triple.begin(), triple.end(), ':', ' ');
      std::istringstream ts(triple);
      TrajPoint tp;
      if (!(ts >> tp.origin_frame >> tp.p.x >> tp.p.y))
        throw ParseError(lineno, "expected origin:x:y");
      rec.points.push_back(tp);
      i = close + 1;
    }
    if (!rf.records.empty() && rec.frame != rf.records.back().frame + 1)
      throw ParseError(lineno, "frame indices must be contiguous");
    if (rf.records.empty() && rec.frame != 0)
      throw ParseError(lineno, "records must start at frame 0");
    rf.records.push_back(std::move(rec));
  }
  return rf;
}

inline RecordFile load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_records(in);
}

// ---------------------------------------------------------------------------
// Frame directories: %06d.png or %06d.ppm counted from zero, no gaps.

namespace detail {

inline std::string frame_basename(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

}  // namespace detail

// Returns the ordered frame paths. A numbering gap is a hard error naming
// the first missing file.
inline std::vector<std::string> scan_frame_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  int max_index = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() != 10) continue;
    const std::string stem = name.substr(0, 6), ext = name.substr(6);
    if (ext != ".png" && ext != ".ppm") continue;
    if (!std::all_of(stem.begin(), stem.end(),
                     [](char c) { return c >= '0' && c <= '9'; }))
      continue;
    max_index = std::max(max_index, std::stoi(stem));
  }
  if (max_index < 0) throw IoError("no frames found in " + dir);
  std::vector<std::string> paths;
  paths.reserve(static_cast<std::size_t>(max_index) + 1);
  for (int i = 0; i <= max_index; ++i) {
    const std::string base = (fs::path(dir) / detail::frame_basename(i)).string();
    if (fs::exists(base + ".png"))
      paths.push_back(base + ".png");
    else if (fs::exists(base + ".ppm"))
      paths.push_back(base + ".ppm");
    else
      throw IoError("missing frame file: " + base + ".png|.ppm");
  }
  return paths;
}

}  // namespace trajvis
