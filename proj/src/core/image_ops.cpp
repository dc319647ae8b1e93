#include "cae/core/image_ops.hpp"

#include <algorithm>
#include <cmath>

namespace cae {

std::vector<float> resize_bilinear(const std::vector<float>& src, int height, int width,
                                   int channels, int out_height, int out_width) {
  std::vector<float> out(static_cast<std::size_t>(out_height) * out_width * channels);
  const double sy = static_cast<double>(height) / out_height;
  const double sx = static_cast<double>(width) / out_width;
  auto src_at = [&](int y, int x, int c) {
    return src[(static_cast<std::size_t>(y) * width + x) * channels + c];
  };
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), height - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), width - 1);
      const int x1 = std::min(x0 + 1, width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < channels; ++c) {
        const double top = src_at(y0, x0, c) * (1.0 - wx) + src_at(y0, x1, c) * wx;
        const double bottom = src_at(y1, x0, c) * (1.0 - wx) + src_at(y1, x1, c) * wx;
        out[(static_cast<std::size_t>(oy) * out_width + ox) * channels + c] =
            static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

ImageTensor normalize_image(const RawImage& raw, int target_size) {
  if (raw.height <= 0 || raw.width <= 0 || raw.data.empty()) {
    throw Error("normalize_image: empty image");
  }
  if (raw.channels != 1 && raw.channels != 3) {
    throw Error("normalize_image: unsupported channel count " + std::to_string(raw.channels) +
                " (expected 1 or 3)");
  }
  if (raw.data.size() != static_cast<std::size_t>(raw.height) * raw.width * raw.channels) {
    throw Error("normalize_image: data length does not match shape");
  }
  if (target_size <= 0) throw Error("normalize_image: target size must be positive");
  for (float v : raw.data) {
    if (!std::isfinite(v)) throw Error("normalize_image: non-finite pixel value");
  }

  const int side = std::min(raw.height, raw.width);
  const int top = (raw.height - side) / 2;
  const int left = (raw.width - side) / 2;
  std::vector<float> crop(static_cast<std::size_t>(side) * side * raw.channels);
  for (int y = 0; y < side; ++y) {
    const auto* row = raw.data.data() +
                      (static_cast<std::size_t>(y + top) * raw.width + left) * raw.channels;
    std::copy(row, row + static_cast<std::size_t>(side) * raw.channels,
              crop.begin() + static_cast<std::ptrdiff_t>(y) * side * raw.channels);
  }
  std::vector<float> resized =
      side == target_size
          ? std::move(crop)
          : resize_bilinear(crop, side, side, raw.channels, target_size, target_size);
  for (float& v : resized) {
    v = std::clamp(v / 127.5f - 1.0f, -1.0f, 1.0f);
  }
  return ImageTensor(target_size, raw.channels, std::move(resized));
}

RawImage to_raw(const ImageTensor& img) {
  RawImage raw{img.height(), img.width(), img.channels(), {}};
  raw.data.reserve(img.size());
  for (float v : img.data()) raw.data.push_back((v + 1.0f) * 127.5f);
  return raw;
}

ImageTensor mirror_horizontal(const ImageTensor& img) {
  const int n = img.side();
  const int ch = img.channels();
  std::vector<float> out(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < ch; ++c) {
        out[(static_cast<std::size_t>(y) * n + x) * ch + c] = img.at(y, n - 1 - x, c);
      }
    }
  }
  return ImageTensor(n, ch, std::move(out));
}

ImageTensor horizontal_flip_maybe(const ImageTensor& img, double p, RandomStream& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("horizontal_flip_maybe: p outside [0, 1]");
  return rng.uniform() < p ? mirror_horizontal(img) : img;
}

}  // namespace cae
