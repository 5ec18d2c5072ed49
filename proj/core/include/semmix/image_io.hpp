// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace semmix {

/// 8-bit grayscale raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// [-1, 1] -> 0..255 with round-half-even; 0 maps to 128.
std::uint8_t quantize_pixel(double v);
double dequantize_pixel(std::uint8_t q);

GrayImage to_gray(std::span<const double> values, int width, int height);
std::vector<double> from_gray(const GrayImage& image);

std::string encode_png(const GrayImage& image);
GrayImage decode_png(std::string_view bytes);
void write_png(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_png(const std::filesystem::path& path);

/// Square samples of side `side` laid out in a grid with `gap` pixel borders
/// and a caption strip under every cell (one text line per label entry,
/// truncated to the cell width).
/// Size: cols*side + (cols+1)*gap wide, rows*(side+caption) + (rows+1)*gap high.
GrayImage montage(const std::vector<std::span<const double>>& cells, int rows, int cols, int side,
                  const std::vector<std::vector<std::string>>& labels = {}, int gap = 2);

/// Caption height for `lines` text lines (0 when there are none).
int caption_height(int lines);

/// Burns `text` with the 3x5 bitmap font, lower-case letters, digits, and
/// "=.-:_+ " supported (other characters render as '?').
void draw_text(GrayImage& image, int x, int y, std::string_view text, std::uint8_t ink = 0);

}  // namespace semmix
