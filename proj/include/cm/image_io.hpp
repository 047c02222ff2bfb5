#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cm/image.hpp"
#include "cm/text.hpp"

namespace cm {

/// Linear scaling applied on export: byte = round(value * scale), chosen so
/// the maximum pixel maps to 255. Recorded in the sidecar for exactness.
struct ImageScale {
  double max_value = 0.0;
  double scale = 0.0;
};

namespace detail {

inline std::pair<std::vector<std::uint8_t>, ImageScale> quantize(const EventImage& img) {
  ImageScale s;
  for (double v : img.values) s.max_value = std::max(s.max_value, v);
  s.scale = s.max_value > 0 ? 255.0 / s.max_value : 0.0;
  std::vector<std::uint8_t> bytes(img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const double q = std::lround(img.values[i] * s.scale);
    bytes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return {std::move(bytes), s};
}

}  // namespace detail

inline ImageScale write_pgm(const std::string& path, const EventImage& img) {
  auto [bytes, scale] = detail::quantize(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image: " + path);
  return scale;
}

inline ImageScale write_png(const std::string& path, const EventImage& img) {
  auto [bytes, scale] = detail::quantize(img);
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng failure writing: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * img.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  return scale;
}

/// Dispatch on extension: ".png" writes PNG, anything else PGM.
inline ImageScale write_image(const std::string& path, const EventImage& img) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") return write_png(path, img);
  return write_pgm(path, img);
}

inline void write_sidecar(const std::string& path, double contrast_value,
                          const ImageScale& scale) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sidecar: " + path);
  out << "contrast=" << format_double(contrast_value) << "\nscale=" << format_double(scale.scale)
      << "\nmax_value=" << format_double(scale.max_value) << '\n';
}

}  // namespace cm
