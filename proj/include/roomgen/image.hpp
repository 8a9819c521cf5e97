#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace roomgen {

using Color3 = std::array<double, 3>;

// Row-major interleaved image, double precision so finite-difference
// oracles see a smooth path through the renderer. Pixel (x, y) channel c lives at
// data[(y * width + x) * channels + c].
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0) {}

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  size_t size() const { return data.size(); }
  bool same_shape(const ImageF& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Bilinear sample at continuous coords (pixel centers at i + 0.5).
// Clamps to the image border.
inline void bilinear_sample(const ImageF& img, double u, double v, double* out) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const auto cl = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  const int x1 = cl(x0 + 1, img.width), y1 = cl(y0 + 1, img.height);
  x0 = cl(x0, img.width);
  y0 = cl(y0, img.height);
  for (int c = 0; c < img.channels; ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[c] = (1.0 - fy) * top + fy * bot;
  }
}

// Box-average downsample to (w, h); source dimensions must be multiples.
inline ImageF box_downsample(const ImageF& img, int w, int h) {
  assert(img.width % w == 0 && img.height % h == 0);
  const int bx = img.width / w, by = img.height / h;
  ImageF out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int j = 0; j < by; ++j)
          for (int i = 0; i < bx; ++i) acc += img.at(x * bx + i, y * by + j, c);
        out.at(x, y, c) = acc / (bx * by);
      }
  return out;
}

// Nearest / block-replicate upsample, the adjoint of box_downsample up to
// scale.
inline ImageF block_upsample(const ImageF& img, int w, int h) {
  assert(w % img.width == 0 && h % img.height == 0);
  const int bx = w / img.width, by = h / img.height;
  ImageF out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x / bx, y / by, c);
  return out;
}

inline double mean_squared_error(const ImageF& a, const ImageF& b) {
  assert(a.same_shape(b));
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

// PSNR in dB for images in [0, 1].
inline double psnr_db(double mse) { return 10.0 * std::log10(1.0 / std::max(mse, 1e-12)); }

}  // namespace roomgen
