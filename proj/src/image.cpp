// Copyright 2026 The irender Authors.
// SPDX-License-Identifier: Apache-2.0

#include "irender/image.hpp"

#include "irender/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace irender {

Eigen::Vector3d Image::rgb(int x, int y) const {
  if (channels >= 3) return {at(x, y, 0), at(x, y, 1), at(x, y, 2)};
  return Eigen::Vector3d::Constant(at(x, y, 0));
}

void Image::set_rgb(int x, int y, const Eigen::Vector3d& v) {
  for (int c = 0; c < std::min(channels, 3); ++c) at(x, y, c) = v(c);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  throw InputError("PNG error in " + *where + ": " + msg);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw InputError("cannot open image " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw InputError(path.string() + " is not a PNG file");
  }
  std::string where = path.string();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &where, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  Image img;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int type = png_get_color_type(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * c);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * w * c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    img = Image(w, h, c);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  int type = 0;
  switch (img.channels) {
    case 1: type = PNG_COLOR_TYPE_GRAY; break;
    case 3: type = PNG_COLOR_TYPE_RGB; break;
    case 4: type = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw ContractViolation("write_png: unsupported channel count " + std::to_string(img.channels));
  }
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw InputError("cannot write image " + path.string());
  std::string where = path.string();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &where, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        const double v = img.data[static_cast<std::size_t>(y) * row.size() + i];
        row[i] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0) {
    throw InputError(path.string() + " is not a PFM file");
  }
  const int c = magic == "PF" ? 3 : 1;
  std::vector<float> buf(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw InputError(path.string() + ": truncated PFM");
  const bool little = scale < 0.0;
  if (little != (std::endian::native == std::endian::little)) {
    for (float& v : buf) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&v, &u, 4);
    }
  }
  Image img(w, h, c);
  for (int y = 0; y < h; ++y) {
    const int src = h - 1 - y;  // stored bottom-up
    for (int i = 0; i < w * c; ++i) {
      img.data[static_cast<std::size_t>(y) * w * c + i] = buf[static_cast<std::size_t>(src) * w * c + i];
    }
  }
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractViolation("write_pfm: need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image " + path.string());
  out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1\n";
  const int row = img.width * img.channels;
  std::vector<float> buf(static_cast<std::size_t>(row));
  for (int y = img.height - 1; y >= 0; --y) {
    for (int i = 0; i < row; ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(img.data[static_cast<std::size_t>(y) * row + i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

}  // namespace irender
