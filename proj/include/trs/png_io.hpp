#pragma once

#include <zlib.h>

#include <fstream>

#include "trs/renderer.hpp"

namespace trs {

// Minimal 8-bit PNG codec (grayscale and RGB/RGBA), enough for render
// outputs and backbone inputs. Output bytes are a pure function of the pixel
// data, so identical renders give byte-identical files.

namespace detail {

inline void png_be32(std::string& s, std::uint32_t v) {
  s.push_back(char(v >> 24));
  s.push_back(char(v >> 16));
  s.push_back(char(v >> 8));
  s.push_back(char(v));
}

inline void png_chunk(std::string& out, const char type[4], const std::string& data) {
  png_be32(out, std::uint32_t(data.size()));
  std::size_t crc_start = out.size();
  out.append(type, 4);
  out += data;
  std::uint32_t crc = ::crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                              uInt(out.size() - crc_start));
  png_be32(out, crc);
}

}  // namespace detail

// `pixels` is row-major with `channels` interleaved bytes per pixel
// (1 = gray, 3 = rgb).
inline void write_png(const std::string& path, const std::vector<unsigned char>& pixels,
                      int width, int height, int channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (pixels.size() != std::size_t(width) * height * channels)
    throw std::invalid_argument("write_png: pixel buffer size mismatch");
  std::string raw;
  raw.reserve((std::size_t(width) * channels + 1) * height);
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter type 0
    raw.append(reinterpret_cast<const char*>(pixels.data() + std::size_t(y) * width * channels),
               std::size_t(width) * channels);
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::string comp(comp_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_len,
                reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 9) != Z_OK)
    throw std::runtime_error("write_png: deflate failed");
  comp.resize(comp_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::png_be32(ihdr, std::uint32_t(width));
  detail::png_be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);                              // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);          // color type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

struct PngImage {
  int width = 0, height = 0, channels = 0;
  std::vector<unsigned char> pixels;  // interleaved
};

inline PngImage read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || data.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw std::runtime_error(path + ": not a PNG file");

  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(std::uint8_t(data[at])) << 24) |
           (std::uint32_t(std::uint8_t(data[at + 1])) << 16) |
           (std::uint32_t(std::uint8_t(data[at + 2])) << 8) |
           std::uint32_t(std::uint8_t(data[at + 3]));
  };

  PngImage img;
  int bit_depth = 0, color_type = 0, interlace = 0;
  std::string idat;
  std::size_t pos = 8;
  while (pos + 8 <= data.size()) {
    std::uint32_t len = be32(pos);
    std::string type = data.substr(pos + 4, 4);
    if (pos + 12 + len > data.size()) throw std::runtime_error(path + ": truncated chunk");
    if (type == "IHDR") {
      img.width = int(be32(pos + 8));
      img.height = int(be32(pos + 12));
      bit_depth = std::uint8_t(data[pos + 16]);
      color_type = std::uint8_t(data[pos + 17]);
      interlace = std::uint8_t(data[pos + 20]);
    } else if (type == "IDAT") {
      idat += data.substr(pos + 8, len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (bit_depth != 8 || interlace != 0)
    throw std::runtime_error(path + ": only 8-bit non-interlaced PNG supported");
  switch (color_type) {
    case 0: img.channels = 1; break;
    case 2: img.channels = 3; break;
    case 4: img.channels = 2; break;
    case 6: img.channels = 4; break;
    default: throw std::runtime_error(path + ": unsupported color type");
  }

  std::size_t stride = std::size_t(img.width) * img.channels;
  uLongf raw_len = uLongf((stride + 1) * img.height);
  std::vector<unsigned char> raw(raw_len);
  if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                 uLong(idat.size())) != Z_OK ||
      raw_len != (stride + 1) * std::size_t(img.height))
    throw std::runtime_error(path + ": inflate failed");

  // Undo per-row filters.
  img.pixels.resize(stride * img.height);
  const int bpp = img.channels;
  for (int y = 0; y < img.height; ++y) {
    const unsigned char* src = raw.data() + std::size_t(y) * (stride + 1);
    unsigned char filter = src[0];
    unsigned char* cur = img.pixels.data() + std::size_t(y) * stride;
    const unsigned char* up = y > 0 ? cur - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      int a = i >= std::size_t(bpp) ? cur[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= std::size_t(bpp)) ? up[i - bpp] : 0;
      int x = src[1 + i];
      switch (filter) {
        case 0: cur[i] = (unsigned char)x; break;
        case 1: cur[i] = (unsigned char)(x + a); break;
        case 2: cur[i] = (unsigned char)(x + b); break;
        case 3: cur[i] = (unsigned char)(x + (a + b) / 2); break;
        case 4: {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          cur[i] = (unsigned char)(x + pred);
          break;
        }
        default: throw std::runtime_error(path + ": unknown filter type");
      }
    }
  }
  return img;
}

inline void write_rgb_png(const std::string& path, const RenderOutput& render) {
  std::vector<unsigned char> px(std::size_t(render.width) * render.height * 3);
  for (std::size_t i = 0; i < render.rgb.size(); ++i)
    for (int c = 0; c < 3; ++c)
      px[i * 3 + c] = (unsigned char)std::lround(clamp01(render.rgb[i][c]) * 255.0);
  write_png(path, px, render.width, render.height, 3);
}

inline void write_mask_png(const std::string& path, const RenderOutput& render) {
  std::vector<unsigned char> px(render.mask.size());
  for (std::size_t i = 0; i < render.mask.size(); ++i)
    px[i] = (unsigned char)std::lround(clamp01(render.mask[i]) * 255.0);
  write_png(path, px, render.width, render.height, 1);
}

// Loads a PNG as an rgb image in [0,1]; gray replicates to rgb, alpha is
// dropped.
inline RenderOutput read_rgb_png(const std::string& path) {
  PngImage img = read_png(path);
  RenderOutput out(img.width, img.height);
  for (std::size_t i = 0; i < out.rgb.size(); ++i) {
    const unsigned char* p = img.pixels.data() + i * img.channels;
    if (img.channels <= 2)
      out.rgb[i] = {p[0] / 255.0, p[0] / 255.0, p[0] / 255.0};
    else
      out.rgb[i] = {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
  }
  return out;
}

}  // namespace trs
