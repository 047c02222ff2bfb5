#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cm/events.hpp"
#include "cm/warp.hpp"

namespace cm {

enum class ImageKind { discrete, continuous };

/// Gaussian accumulation kernel, delta(v) = exp(-|v|^2 / (2 sigma^2)) with
/// delta(0) = 1, cut off radially at truncation * sigma.
struct KernelSpec {
  double sigma = 1.0;       // pixels
  double truncation = 6.0;  // multiples of sigma, >= 3

  double radius() const { return truncation * sigma; }
  double operator()(double dist) const {
    if (dist > radius()) return 0.0;
    return std::exp(-dist * dist / (2.0 * sigma * sigma));
  }
};

/// P-pixel accumulation grid. Pixel (x, y) is centred on the integer lattice;
/// its cell is the half-open square [x-0.5, x+0.5) x [y-0.5, y+0.5).
struct EventImage {
  int width = 0;
  int height = 0;
  ImageKind kind = ImageKind::discrete;
  std::vector<double> values;  // row-major

  EventImage() = default;
  EventImage(int w, int h, ImageKind k)
      : width(w), height(h), kind(k), values(static_cast<std::size_t>(w) * h, 0.0) {}

  int pixel_count() const { return width * height; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

namespace detail {

// Round-to-nearest with half-up ties; events on the integer lattice bin into
// the pixel they name.
inline bool bin_position(const Eigen::Vector2d& pos, int width, int height, int& ix, int& iy) {
  ix = static_cast<int>(std::floor(pos.x() + 0.5));
  iy = static_cast<int>(std::floor(pos.y() + 0.5));
  return ix >= 0 && ix < width && iy >= 0 && iy < height;
}

}  // namespace detail

/// Discrete event image: pixel j counts the events whose warp bins into it.
/// Off-sensor and behind-camera warps contribute nothing.
inline EventImage render_discrete(const EventWindow& window, const AngularVelocity& omega,
                                  const CameraIntrinsics& k) {
  EventImage img(k.width, k.height, ImageKind::discrete);
  for (const Event& e : window.events) {
    const auto pos = warp_event(e.u, e.t, omega, k);
    if (!pos) continue;
    int ix = 0, iy = 0;
    if (detail::bin_position(*pos, k.width, k.height, ix, iy)) img.at(ix, iy) += 1.0;
  }
  return img;
}

/// Continuous event image: kernel mass of every warped event, evaluated at
/// pixel centres within the truncation radius.
inline EventImage render_continuous(const EventWindow& window, const AngularVelocity& omega,
                                    const CameraIntrinsics& k,
                                    const KernelSpec& kernel = {}) {
  EventImage img(k.width, k.height, ImageKind::continuous);
  const double r = kernel.radius();
  for (const Event& e : window.events) {
    const auto pos = warp_event(e.u, e.t, omega, k);
    if (!pos) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(pos->x() - r)));
    const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(pos->x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(pos->y() - r)));
    const int y1 = std::min(k.height - 1, static_cast<int>(std::floor(pos->y() + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = (Eigen::Vector2d(x, y) - *pos).norm();
        if (d <= r) img.at(x, y) += kernel(d);
      }
    }
  }
  return img;
}

inline double mean(const EventImage& img) {
  double sum = 0.0;
  for (double v : img.values) sum += v;
  return sum / img.pixel_count();
}

/// Contrast = variance of the pixel values.
inline double contrast(const EventImage& img) {
  if (img.pixel_count() < 1) throw std::invalid_argument("empty image");
  const double mu = mean(img);
  double acc = 0.0;
  for (double v : img.values) {
    const double d = v - mu;
    acc += d * d;
  }
  return acc / img.pixel_count();
}

/// Reward objective: contrast plus the mean of e^-H + e^H. Values clamp at
/// 700 before exponentiation so count images cannot overflow.
inline double reward(const EventImage& img) {
  if (img.pixel_count() < 1) throw std::invalid_argument("empty image");
  double acc = 0.0;
  for (double v : img.values) {
    const double h = std::min(v, 700.0);
    acc += std::exp(-h) + std::exp(h);
  }
  return contrast(img) + acc / img.pixel_count();
}

}  // namespace cm
