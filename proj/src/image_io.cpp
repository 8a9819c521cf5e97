#include "roomgen/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <vector>

#include "roomgen/errors.hpp"

namespace roomgen {

void write_png(const ImageF& image, const std::filesystem::path& path) {
  if (image.channels != 3) throw Error("write_png expects a 3-channel image");
  std::vector<png_byte> bytes(image.data.size());
  for (size_t i = 0; i < image.data.size(); ++i) {
    const double v = image.data[i];
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    bytes[i] = static_cast<png_byte>(c * 255.0 + 0.5);
  }

  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), image.width * 3, nullptr))
    throw Error("PNG write failed: " + path.string() + " (" + img.message + ")");
}

void write_pfm(const ImageF& image, const std::filesystem::path& path) {
  if (image.channels != 1) throw Error("write_pfm expects a single-channel image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open PFM file for writing: " + path.string());
  out << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
  // PFM stores rows bottom to top, 32-bit floats.
  std::vector<float> row(image.width);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) row[x] = static_cast<float>(image.at(x, y, 0));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(sizeof(float) * row.size()));
  }
  if (!out) throw Error("PFM write failed: " + path.string());
}

}  // namespace roomgen
