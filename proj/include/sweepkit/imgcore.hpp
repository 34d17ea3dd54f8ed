#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sweepkit/image.hpp"

namespace sweepkit {

enum class ResizeMode { Bilinear, Nearest };

/// 256-entry lookup table indexed by input pixel value.
using Lut = std::array<std::uint8_t, 256>;

/// Per-pixel real source coordinates for remap(), row-major over the output.
struct RemapField {
    int height = 0;
    int width = 0;
    std::vector<double> map_x; // source column
    std::vector<double> map_y; // source row
};

/// Bilinear resampling uses half-pixel centers, src = (dst + 0.5) * old / new - 0.5,
/// clamped to the valid range; results go through to_pixel(). Nearest picks
/// floor((dst + 0.5) * old / new).
Image resize(const Image& img, int new_height, int new_width, ResizeMode mode = ResizeMode::Bilinear);

Image pad_zero(const Image& img, int left, int right, int top, int bottom);

/// Sub-rectangle copy; the rectangle must lie inside the image.
Image crop(const Image& img, int top, int left, int height, int width);

/// out(u, v) = in(floor(map_y), floor(map_x)) when both indices are in bounds,
/// otherwise 0 in every channel.
Image remap(const Image& img, const RemapField& field);

Image apply_lut(const Image& img, const Lut& lut);

/// Per-channel median over a kernel x kernel window with reflect-101 borders.
/// The median of k*k samples is the element at index k*k/2 after sorting.
Image median_filter(const Image& img, int kernel);

/// Reflect-101 index into [0, n): -1 -> 1, n -> n - 2.
int reflect101(int i, int n);

} // namespace sweepkit
