#pragma once

#include <vector>

#include "cae/core/types.hpp"

namespace cae {

/// Unnormalized raster, HWC row-major, values nominally in [0, 255].
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Bilinear resampling with half-pixel centers (no antialiasing). Works on
/// arbitrary HWC float buffers.
std::vector<float> resize_bilinear(const std::vector<float>& src, int height, int width,
                                   int channels, int out_height, int out_width);

/// Center-crop to the short side, bilinear resize to target_size, and map
/// [0, 255] linearly onto [-1, 1].
ImageTensor normalize_image(const RawImage& raw, int target_size);

/// Inverse value map of normalize_image, for writing images back out.
RawImage to_raw(const ImageTensor& img);

ImageTensor mirror_horizontal(const ImageTensor& img);

/// Draws exactly one value from rng; mirrors when it falls below p.
ImageTensor horizontal_flip_maybe(const ImageTensor& img, double p, RandomStream& rng);

}  // namespace cae
