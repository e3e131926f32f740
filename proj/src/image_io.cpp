#include "keyforge/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "keyforge/errors.hpp"

namespace keyforge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint8_t to_byte(float v) {
  float s = v <= 0.0f ? 0.0f : (v >= 1.0f ? 1.0f : v);
  return static_cast<uint8_t>(std::lround(s * 255.0f));
}

}  // namespace

RasterImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoFailure("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoFailure("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoFailure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit gray or RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure(path + ": unsupported channel count " + std::to_string(channels));
  }

  RasterImage img = RasterImage::zeros(static_cast<int>(w), static_cast<int>(h), channels);
  std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (size_t i = 0; i < row.size(); ++i)
      img.samples[static_cast<size_t>(y) * w * channels + i] = row[i] / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const RasterImage& img) {
  if (img.width <= 0 || img.height <= 0) throw IoFailure("empty image for " + path);
  if (img.channels != 1 && img.channels != 3)
    throw IoFailure("unsupported channel count " + std::to_string(img.channels));

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoFailure("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoFailure("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoFailure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (size_t i = 0; i < row.size(); ++i)
      row[i] = to_byte(img.samples[static_cast<size_t>(y) * img.width * img.channels + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

BitMask read_mask_png(const std::string& path) {
  RasterImage img = read_png(path);
  return image_to_mask(img);
}

void write_mask_png(const std::string& path, const BitMask& mask) {
  write_png(path, mask_to_image(mask));
}

RasterImage mask_to_image(const BitMask& mask) {
  RasterImage img = RasterImage::zeros(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.bits.size(); ++i) img.samples[i] = mask.bits[i] ? 1.0f : 0.0f;
  return img;
}

BitMask image_to_mask(const RasterImage& img, float threshold) {
  BitMask mask = BitMask::zeros(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float v = 0.0f;
      for (int c = 0; c < img.channels; ++c) v += img.at(x, y, c);
      mask.set(x, y, v / img.channels >= threshold);
    }
  return mask;
}

}  // namespace keyforge
