#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "cm/events.hpp"
#include "cm/warp.hpp"

namespace cm {

/// Static scene as unit bearing vectors in the t = 0 camera frame.
struct SynthScene {
  std::vector<Eigen::Vector3d> points;
};

/// Convention for generated data: focal 4 * min(W, H) (override via `focal`),
/// principal point at the sensor centre, no distortion.
inline CameraIntrinsics default_synth_intrinsics(int width, int height, double focal = 0.0) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = focal > 0 ? focal : 4.0 * std::min(width, height);
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  return k;
}

/// Random scene whose t = 0 projections fall inside the sensor with a margin.
inline SynthScene random_scene(const CameraIntrinsics& k, int count, std::mt19937_64& rng,
                               double margin_fraction = 0.15) {
  SynthScene scene;
  scene.points.reserve(count);
  const double mx = margin_fraction * k.width;
  const double my = margin_fraction * k.height;
  std::uniform_real_distribution<double> ux(mx, k.width - 1 - mx);
  std::uniform_real_distribution<double> uy(my, k.height - 1 - my);
  for (int i = 0; i < count; ++i) {
    const Eigen::Vector2d pix(ux(rng), uy(rng));
    scene.points.push_back(bearing(pix, k));
  }
  return scene;
}

/// Generate an event window under constant angular velocity with known ground
/// truth. Each point fires round(rate * t_max) events at uniform times; the
/// event position is the projection of the point rotated by R(t)^-1, so
/// warping with omega_true recovers the t = 0 projection. Gaussian pixel
/// noise of scale noise_px is added, off-sensor events are dropped, output is
/// time-sorted.
inline EventWindow synthesize(const SynthScene& scene, const AngularVelocity& omega_true,
                              const CameraIntrinsics& k, double t_max, double rate,
                              double noise_px, std::mt19937_64& rng) {
  if (rate <= 0) throw std::invalid_argument("synthesize: rate must be positive");
  if (t_max <= 0) throw std::invalid_argument("synthesize: duration must be positive");
  bool any_visible = false;
  for (const auto& p : scene.points) {
    const auto pos = project(p, k);
    if (pos && pos->x() >= 0 && pos->x() < k.width && pos->y() >= 0 && pos->y() < k.height) {
      any_visible = true;
      break;
    }
  }
  if (!any_visible)
    throw std::invalid_argument("synthesize: scene projects entirely outside the sensor");

  EventWindow window;
  window.t_max = t_max;
  window.source_offset = 0.0;
  const auto per_point = static_cast<long long>(std::llround(rate * t_max));
  std::uniform_real_distribution<double> ut(0.0, t_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& point : scene.points) {
    for (long long i = 0; i < per_point; ++i) {
      const double t = ut(rng);
      const Eigen::Vector3d ray = exp_map(omega_true * t).transpose() * point;
      const auto pos = project(ray, k);
      if (!pos) continue;
      Eigen::Vector2d u = *pos;
      if (noise_px > 0) u += noise_px * Eigen::Vector2d(noise(rng), noise(rng));
      if (u.x() < 0 || u.x() >= k.width || u.y() < 0 || u.y() >= k.height) continue;
      window.events.push_back({u, t, 1});
    }
  }
  std::stable_sort(window.events.begin(), window.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return window;
}

}  // namespace cm
