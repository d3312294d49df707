#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cevo/errors.hpp"

namespace cevo {

/// An RGB observation, H x W x 3, channel values in [0, 1], stored HWC.
struct Frame {
  static constexpr std::size_t channels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * channels, fill) {}

  std::size_t size() const { return pixels.size(); }
  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Mean over all H*W*3 values of |a - b|.
inline double recon_error(const Frame& a, const Frame& b) {
  if (a.height != b.height || a.width != b.width || a.size() != b.size())
    throw ConfigError("recon_error dimension mismatch: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                      " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(double(a.pixels[i]) - double(b.pixels[i]));
  return a.size() ? sum / double(a.size()) : 0.0;
}

/// round(v * 255) clamped to [0, 255].
inline std::uint8_t quantize_channel(float v) {
  const double q = std::round(double(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

/// Input on the left, second frame on the right; output width is 2 * W.
inline Frame side_by_side(const Frame& left, const Frame& right) {
  if (left.height != right.height || left.width != right.width)
    throw ConfigError("side_by_side needs frames of equal size");
  Frame out(left.height, left.width * 2);
  for (std::size_t y = 0; y < left.height; ++y)
    for (std::size_t x = 0; x < left.width; ++x)
      for (std::size_t c = 0; c < Frame::channels; ++c) {
        out.at(y, x, c) = left.at(y, x, c);
        out.at(y, x + left.width, c) = right.at(y, x, c);
      }
  return out;
}

/// Binary PPM (P6), maxval 255.
inline void write_ppm(const std::string& path, const Frame& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "P6\n" << f.width << ' ' << f.height << "\n255\n";
  std::string bytes(f.size(), '\0');
  for (std::size_t i = 0; i < f.size(); ++i) bytes[i] = static_cast<char>(quantize_channel(f.pixels[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

inline Frame read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || !w || !h) throw FormatError("'" + path + "' is not an 8-bit P6 image");
  in.get();
  std::string bytes(w * h * 3, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("truncated PPM '" + path + "'");
  Frame f(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) f.pixels[i] = float(static_cast<unsigned char>(bytes[i])) / 255.0f;
  return f;
}

}  // namespace cevo
