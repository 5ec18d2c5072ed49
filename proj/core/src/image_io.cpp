// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "semmix/error.hpp"
#include "semmix/manifest.hpp"

namespace semmix {

std::uint8_t quantize_pixel(double v) {
  if (std::isnan(v)) throw_numeric("cannot quantize a NaN pixel");
  const double scaled = (std::clamp(v, -1.0, 1.0) + 1.0) * 127.5;
  return static_cast<std::uint8_t>(std::nearbyint(scaled));
}

double dequantize_pixel(std::uint8_t q) { return static_cast<double>(q) / 127.5 - 1.0; }

GrayImage to_gray(std::span<const double> values, int width, int height) {
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw_invalid("to_gray: value count does not match the image size");
  }
  GrayImage img(width, height);
  std::transform(values.begin(), values.end(), img.pixels.begin(), quantize_pixel);
  return img;
}

std::vector<double> from_gray(const GrayImage& image) {
  std::vector<double> out(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), out.begin(), dequantize_pixel);
  return out;
}

namespace {

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  std::string_view bytes;
  std::size_t pos = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes.size()) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, cur->bytes.data() + cur->pos, n);
  cur->pos += n;
}

void write_to_string(png_structp png, png_bytep data, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), n);
}

void flush_noop(png_structp) {}

}  // namespace

std::string encode_png(const GrayImage& image) {
  if (image.width <= 0 || image.height <= 0) throw_invalid("cannot encode an empty image");
  std::string err;
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw_io("png: out of memory");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw_io("png encode failed: " + err);
  }
  png_set_write_fn(png, &out, write_to_string, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(image.pixels.data()) + static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width);
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

GrayImage decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw_io("not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw_io("png: out of memory");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes, 0};
  GrayImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw_io("malformed PNG: " + err);
  }
  png_set_read_fn(png, &cursor, read_from_memory);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (w == 0 || h == 0 || w > 1u << 14 || h > 1u << 14) png_error(png, "unsupported image size");
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 1) png_error(png, "could not convert to grayscale");
  img = GrayImage(static_cast<int>(w), static_cast<int>(h));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_file_atomic(path, encode_png(image));
}

GrayImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

namespace {

// Rows top to bottom, three pixels each.
const char* glyph(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case '0': return "111101101101111";
    case '1': return "010110010010111";
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '5': return "111100111001111";
    case '6': return "111100111101111";
    case '7': return "111001001010010";
    case '8': return "111101111101111";
    case '9': return "111101111001111";
    case 'a': return "010101111101101";
    case 'b': return "110101110101110";
    case 'c': return "011100100100011";
    case 'd': return "110101101101110";
    case 'e': return "111100110100111";
    case 'f': return "111100110100100";
    case 'g': return "011100101101011";
    case 'h': return "101101111101101";
    case 'i': return "111010010010111";
    case 'j': return "001001001101010";
    case 'k': return "101101110101101";
    case 'l': return "100100100100111";
    case 'm': return "101111111101101";
    case 'n': return "110101101101101";
    case 'o': return "010101101101010";
    case 'p': return "110101110100100";
    case 'q': return "010101101110011";
    case 'r': return "110101110101101";
    case 's': return "011100010001110";
    case 't': return "111010010010010";
    case 'u': return "101101101101111";
    case 'v': return "101101101101010";
    case 'w': return "101101111111101";
    case 'x': return "101101010101101";
    case 'y': return "101101010010010";
    case 'z': return "111001010100111";
    case '=': return "000111000111000";
    case '.': return "000000000000010";
    case '-': return "000000111000000";
    case ':': return "000010000010000";
    case '_': return "000000000000111";
    case '+': return "000010111010000";
    case ' ': return "000000000000000";
    default: return "111001010000010";
  }
}

constexpr int kGlyphW = 3;
constexpr int kGlyphH = 5;
constexpr int kLineH = kGlyphH + 2;

}  // namespace

void draw_text(GrayImage& image, int x, int y, std::string_view text, std::uint8_t ink) {
  for (char c : text) {
    const char* g = glyph(c);
    for (int gy = 0; gy < kGlyphH; ++gy) {
      for (int gx = 0; gx < kGlyphW; ++gx) {
        const int px = x + gx;
        const int py = y + gy;
        if (g[gy * kGlyphW + gx] == '1' && px >= 0 && py >= 0 && px < image.width && py < image.height) {
          image.at(px, py) = ink;
        }
      }
    }
    x += kGlyphW + 1;
  }
}

int caption_height(int lines) { return lines > 0 ? lines * kLineH + 1 : 0; }

GrayImage montage(const std::vector<std::span<const double>>& cells, int rows, int cols, int side,
                  const std::vector<std::vector<std::string>>& labels, int gap) {
  if (rows < 1 || cols < 1 || side < 1 || gap < 0) throw_invalid("montage: bad grid geometry");
  if (cells.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw_invalid("montage: cell count does not match the grid");
  }
  if (!labels.empty() && labels.size() != cells.size()) throw_invalid("montage: need one label set per cell");
  std::size_t lines = 0;
  for (const auto& l : labels) lines = std::max(lines, l.size());
  const int cap = caption_height(static_cast<int>(lines));
  const int cell_h = side + cap;
  GrayImage img(cols * side + (cols + 1) * gap, rows * cell_h + (rows + 1) * gap, 255);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto idx = static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
      const auto& cell = cells[idx];
      if (cell.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side)) {
        throw_invalid("montage: cell is not side x side");
      }
      const int x0 = gap + c * (side + gap);
      const int y0 = gap + r * (cell_h + gap);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          img.at(x0 + x, y0 + y) = quantize_pixel(cell[static_cast<std::size_t>(y * side + x)]);
        }
      }
      if (!labels.empty()) {
        const auto max_chars = static_cast<std::size_t>((side + 1) / (kGlyphW + 1));
        for (std::size_t line = 0; line < labels[idx].size(); ++line) {
          const std::string_view text = std::string_view(labels[idx][line]).substr(0, max_chars);
          draw_text(img, x0, y0 + side + 2 + static_cast<int>(line) * kLineH, text);
        }
      }
    }
  }
  return img;
}

}  // namespace semmix
