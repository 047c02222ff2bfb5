#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cm/events.hpp"
#include "cm/image.hpp"
#include "cm/warp.hpp"

namespace cm {

/// Axis-aligned cube in omega-space, [centre - h*1, centre + h*1].
/// h = 0 denotes the singleton {centre}.
struct SearchCube {
  Eigen::Vector3d centre{0, 0, 0};
  double half_width = 0.0;

  bool singleton() const { return half_width == 0.0; }

  /// Distance from the origin to the nearest point of the cube.
  double distance_to_origin() const {
    Eigen::Vector3d nearest;
    for (int i = 0; i < 3; ++i) {
      nearest[i] = std::clamp(0.0, centre[i] - half_width, centre[i] + half_width);
    }
    return nearest.norm();
  }

  bool contains(const Eigen::Vector3d& omega) const {
    return (omega - centre).cwiseAbs().maxCoeff() <= half_width;
  }
};

/// Half-angle of the rotation-uncertainty cone for an event at time t:
/// 0.5 * |omega_p t - omega_q t| over opposite cube corners = h * t * sqrt(3).
/// The rotated bearing under any omega in the cube stays within this angle of
/// the bearing rotated by the cube centre.
inline double rotation_uncertainty(const SearchCube& cube, double t) {
  return cube.half_width * t * std::numbers::sqrt3;
}

struct EllipseParams {
  Eigen::Vector2d centre{0, 0};
  double a = 0.0;  // semi-major length, pixels
  double b = 0.0;  // semi-minor length, pixels
  Eigen::Vector2d major_dir{1, 0};
};

/// Smallest disc containing the image-plane projection of an event's
/// uncertainty cone: the reachable set of the warped event over the cube.
struct UncertaintyDisc {
  Eigen::Vector2d centre{0, 0};
  double radius = 0.0;
  EllipseParams ellipse;
  bool on_image = false;  // disc fully inside [-0.5, W-0.5) x [-0.5, H-0.5)
  bool valid = false;     // cone projects onto the image plane
};

namespace detail {

// Matches the binning domain of render_discrete: positions in
// [-0.5, W-0.5) x [-0.5, H-0.5) land in some pixel.
inline bool disc_inside_sensor(const Eigen::Vector2d& c, double radius,
                               const CameraIntrinsics& k) {
  return c.x() - radius >= -0.5 && c.x() + radius < k.width - 0.5 &&
         c.y() - radius >= -0.5 && c.y() + radius < k.height - 0.5;
}

inline constexpr double kConeZEps = 1e-9;

}  // namespace detail

/// Project an event's rotation-uncertainty cone onto the image plane and
/// enclose it in a disc.
///
/// The cone axis is the bearing rotated by the cube centre; the section with
/// the image plane is an ellipse whose major axis lies along the in-plane
/// direction of the axis. Centre and semi-axes follow in closed form from the
/// half-angle alpha and the axis tilt beta, then map through K (anisotropic
/// focal lengths handled with the conjugate-diameter relation). Cones with an
/// extreme ray at z <= 1e-9 are flagged invalid rather than thrown so callers
/// can drop them.
inline UncertaintyDisc project_cone(const SearchCube& cube, const Event& event,
                                    const CameraIntrinsics& k) {
  UncertaintyDisc disc;
  const double alpha = rotation_uncertainty(cube, event.t);

  if (alpha == 0.0) {
    // Singleton collapse: the disc is the warped point itself.
    const auto pos = warp_event(event.u, event.t, cube.centre, k);
    if (!pos) return disc;
    disc.valid = true;
    disc.centre = *pos;
    disc.radius = 0.0;
    disc.ellipse.centre = *pos;
    disc.on_image = detail::disc_inside_sensor(*pos, 0.0, k);
    return disc;
  }
  if (alpha >= std::numbers::pi / 2.0) return disc;  // cone wraps behind the camera

  const Eigen::Vector3d axis = warp_ray(event.u, event.t, cube.centre, k);
  const double sin_beta = axis.head<2>().norm();
  const double cos_beta = axis.z();

  // In-plane direction of the cone axis; any orthogonal pair serves when the
  // axis is aligned with the optical axis (the section is a circle).
  const Eigen::Vector2d ydir =
      sin_beta > 1e-12 ? Eigen::Vector2d(axis.x() / sin_beta, axis.y() / sin_beta)
                       : Eigen::Vector2d(1, 0);
  const Eigen::Vector2d zdir(-ydir.y(), ydir.x());

  // Extreme rays u_hat +- tan(alpha) * {y_hat, z_hat}; the far in-plane ray has
  // the smallest z component.
  const double tan_alpha = std::tan(alpha);
  const double z_far = cos_beta - tan_alpha * sin_beta;
  const double z_near = cos_beta + tan_alpha * sin_beta;
  if (std::min({z_far, z_near, cos_beta}) <= detail::kConeZEps) return disc;
  disc.valid = true;

  // Exact central section in normalized coordinates.
  const double beta = std::atan2(sin_beta, cos_beta);
  const double d = std::cos(alpha + beta) * std::cos(alpha - beta);
  const double centre_n = sin_beta * cos_beta / d;
  const double a_n = std::sin(alpha) * std::cos(alpha) / d;
  const double b_n = std::sin(alpha) / std::sqrt(d);

  disc.ellipse.centre = Eigen::Vector2d(k.fx * centre_n * ydir.x() + k.cx,
                                        k.fy * centre_n * ydir.y() + k.cy);
  // Images of the section's semi-axes are conjugate semi-diameters of the
  // pixel-space ellipse.
  const Eigen::Vector2d va(k.fx * a_n * ydir.x(), k.fy * a_n * ydir.y());
  const Eigen::Vector2d vb(k.fx * b_n * zdir.x(), k.fy * b_n * zdir.y());
  const double p = va.squaredNorm();
  const double q = vb.squaredNorm();
  const double cross = va.dot(vb);
  const double root = std::sqrt((p - q) * (p - q) + 4.0 * cross * cross);
  disc.ellipse.a = std::sqrt(0.5 * (p + q + root));
  disc.ellipse.b = std::sqrt(std::max(0.5 * (p + q - root), 0.0));
  const double theta = 0.5 * std::atan2(2.0 * cross, p - q);
  const Eigen::Vector2d major = std::cos(theta) * va + std::sin(theta) * vb;
  if (major.norm() > 1e-300) disc.ellipse.major_dir = major.normalized();

  disc.centre = disc.ellipse.centre;
  disc.radius = disc.ellipse.a;
  disc.on_image = detail::disc_inside_sensor(disc.centre, disc.radius, k);
  return disc;
}

/// One disc per event, in event order. Invalid cones stay in the list
/// (flagged) so indices line up with the window.
inline std::vector<UncertaintyDisc> make_discs(const SearchCube& cube,
                                               const EventWindow& window,
                                               const CameraIntrinsics& k) {
  std::vector<UncertaintyDisc> discs;
  discs.reserve(window.events.size());
  for (const Event& e : window.events) discs.push_back(project_cone(cube, e, k));
  return discs;
}

// ---------------------------------------------------------------------------
// Continuous bounds
// ---------------------------------------------------------------------------

/// Upper bound on one continuous pixel value: kernel of the distance from the
/// pixel centre to each disc boundary (zero inside). Invalid discs contribute
/// nothing under the truncated kernel.
inline double pixel_upper_continuous(const Eigen::Vector2d& x,
                                     std::span<const UncertaintyDisc> discs,
                                     const KernelSpec& kernel = {}) {
  double acc = 0.0;
  for (const UncertaintyDisc& d : discs) {
    if (!d.valid) continue;
    const double dist = std::max((x - d.centre).norm() - d.radius, 0.0);
    if (dist <= kernel.radius()) acc += kernel(dist);
  }
  return acc;
}

namespace detail {

// Splat-based grids for the continuous bounds. Accumulation order per pixel
// equals disc (= event) order, so singleton cubes reproduce the rendered
// image bit for bit.
inline std::vector<double> upper_grid_continuous(std::span<const UncertaintyDisc> discs,
                                                 const CameraIntrinsics& k,
                                                 const KernelSpec& kernel) {
  std::vector<double> grid(static_cast<std::size_t>(k.pixel_count()), 0.0);
  const double r = kernel.radius();
  for (const UncertaintyDisc& d : discs) {
    if (!d.valid) continue;
    const double reach = d.radius + r;
    const int x0 = std::max(0, static_cast<int>(std::ceil(d.centre.x() - reach)));
    const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(d.centre.x() + reach)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(d.centre.y() - reach)));
    const int y1 = std::min(k.height - 1, static_cast<int>(std::floor(d.centre.y() + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dist =
            std::max((Eigen::Vector2d(x, y) - d.centre).norm() - d.radius, 0.0);
        if (dist <= r) grid[static_cast<std::size_t>(y) * k.width + x] += kernel(dist);
      }
    }
  }
  return grid;
}

}  // namespace detail

/// SoS upper bound for the continuous image over the cube the discs came from.
inline double sos_upper_continuous(std::span<const UncertaintyDisc> discs,
                                   const CameraIntrinsics& k,
                                   const KernelSpec& kernel = {}) {
  const auto grid = detail::upper_grid_continuous(discs, k, kernel);
  double acc = 0.0;
  for (double v : grid) acc += v * v;
  return acc;
}

/// Mean lower bound for the continuous image: kernel of the farthest distance
/// from each pixel centre to the disc.
inline double mean_lower_continuous(std::span<const UncertaintyDisc> discs,
                                    const CameraIntrinsics& k,
                                    const KernelSpec& kernel = {}) {
  std::vector<double> grid(static_cast<std::size_t>(k.pixel_count()), 0.0);
  const double r = kernel.radius();
  for (const UncertaintyDisc& d : discs) {
    if (!d.valid) continue;
    const double reach = r - d.radius;  // farthest point must stay inside the kernel
    if (reach < 0) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(d.centre.x() - reach)));
    const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(d.centre.x() + reach)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(d.centre.y() - reach)));
    const int y1 = std::min(k.height - 1, static_cast<int>(std::floor(d.centre.y() + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dist = (Eigen::Vector2d(x, y) - d.centre).norm() + d.radius;
        if (dist <= r) grid[static_cast<std::size_t>(y) * k.width + x] += kernel(dist);
      }
    }
  }
  double acc = 0.0;
  for (double v : grid) acc += v;
  return acc / k.pixel_count();
}

// ---------------------------------------------------------------------------
// Discrete bounds
// ---------------------------------------------------------------------------

/// Sparse disc-pixel intersection structure. Rows are the retained discs
/// (valid and touching at least one pixel); `retained[r]` maps a row back to
/// its disc index. Both row-wise and column-wise adjacency are kept, plus the
/// per-pixel column sums (the discrete pixel upper-bound image).
struct IntersectionTable {
  int width = 0;
  int height = 0;
  std::vector<int> retained;
  std::vector<std::vector<int>> row_pixels;  // row -> linear pixel ids, ascending
  std::vector<std::vector<int>> pixel_rows;  // pixel -> row ids, ascending
  std::vector<int> counts;                   // column sums per pixel

  int pixel_count() const { return width * height; }
};

/// T_{i,j} = 1 iff disc i's closed disc meets pixel j's closed unit square
/// (tangency counts). Discs that intersect no pixel are dropped from the rows.
inline IntersectionTable intersections(std::span<const UncertaintyDisc> discs,
                                       const CameraIntrinsics& k) {
  IntersectionTable t;
  t.width = k.width;
  t.height = k.height;
  t.pixel_rows.assign(static_cast<std::size_t>(k.pixel_count()), {});
  t.counts.assign(static_cast<std::size_t>(k.pixel_count()), 0);
  for (std::size_t i = 0; i < discs.size(); ++i) {
    const UncertaintyDisc& d = discs[i];
    if (!d.valid) continue;
    const double r = d.radius;
    const int x0 = std::max(0, static_cast<int>(std::ceil(d.centre.x() - r - 0.5)));
    const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(d.centre.x() + r + 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(d.centre.y() - r - 0.5)));
    const int y1 = std::min(k.height - 1, static_cast<int>(std::floor(d.centre.y() + r + 0.5)));
    std::vector<int> pixels;
    for (int y = y0; y <= y1; ++y) {
      const double dy = d.centre.y() - std::clamp(d.centre.y(), y - 0.5, y + 0.5);
      for (int x = x0; x <= x1; ++x) {
        const double dx = d.centre.x() - std::clamp(d.centre.x(), x - 0.5, x + 0.5);
        if (dx * dx + dy * dy <= r * r) pixels.push_back(y * k.width + x);
      }
    }
    if (pixels.empty()) continue;  // fully off-image
    const int row = static_cast<int>(t.retained.size());
    for (int j : pixels) {
      t.pixel_rows[static_cast<std::size_t>(j)].push_back(row);
      ++t.counts[static_cast<std::size_t>(j)];
    }
    t.retained.push_back(static_cast<int>(i));
    t.row_pixels.push_back(std::move(pixels));
  }
  return t;
}

/// Discrete pixel upper-bound image: column sums of T.
inline EventImage pixel_upper_discrete(const IntersectionTable& t) {
  EventImage img(t.width, t.height, ImageKind::discrete);
  for (int j = 0; j < t.pixel_count(); ++j) img.values[j] = t.counts[j];
  return img;
}

/// Distinct columns of T selected by the dominant-column sweep; `disc_count`
/// is the retained-disc count and the R-IQP quota. Column density is its size.
struct DominantColumns {
  std::vector<std::vector<int>> columns;  // each ascending row-index set
  int disc_count = 0;
};

namespace detail {

struct IntVecHash {
  std::size_t operator()(const std::vector<int>& v) const {
    std::size_t h = 1469598103934665603ull;
    for (int x : v) {
      h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace detail

/// Dominant-column extraction: for each disc, emit the distinct columns of T
/// among its highest-count pixels, skipping pixels already visited. The full
/// connected-component set is never materialised.
inline DominantColumns dominant_columns(const IntersectionTable& t) {
  DominantColumns out;
  out.disc_count = static_cast<int>(t.retained.size());
  std::vector<char> visited(static_cast<std::size_t>(t.pixel_count()), 0);
  std::unordered_set<std::vector<int>, detail::IntVecHash> seen;
  for (const auto& pixels : t.row_pixels) {
    int cmax = 0;
    for (int j : pixels) cmax = std::max(cmax, t.counts[static_cast<std::size_t>(j)]);
    for (int j : pixels) {
      if (t.counts[static_cast<std::size_t>(j)] != cmax || visited[static_cast<std::size_t>(j)])
        continue;
      visited[static_cast<std::size_t>(j)] = 1;
      const auto& column = t.pixel_rows[static_cast<std::size_t>(j)];
      if (seen.insert(column).second) out.columns.push_back(column);
    }
  }
  return out;
}

/// All distinct columns of T, for oracle comparisons against the dominant set.
inline DominantColumns all_distinct_columns(const IntersectionTable& t) {
  DominantColumns out;
  out.disc_count = static_cast<int>(t.retained.size());
  std::unordered_set<std::vector<int>, detail::IntVecHash> seen;
  for (int j = 0; j < t.pixel_count(); ++j) {
    const auto& column = t.pixel_rows[static_cast<std::size_t>(j)];
    if (column.empty()) continue;
    if (seen.insert(column).second) out.columns.push_back(column);
  }
  return out;
}

/// Exact IQP optimum by exhaustive assignment of each disc to one covering
/// column. Exponential by design; refuses instances with more than 12 discs.
inline std::int64_t iqp_exact(const DominantColumns& cols) {
  const int n = cols.disc_count;
  if (n == 0) return 0;
  if (n > 12) throw std::invalid_argument("iqp_exact: instance too large");
  const int kcols = static_cast<int>(cols.columns.size());
  std::vector<std::vector<int>> eligible(static_cast<std::size_t>(n));
  for (int c = 0; c < kcols; ++c) {
    for (int i : cols.columns[static_cast<std::size_t>(c)])
      eligible[static_cast<std::size_t>(i)].push_back(c);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return eligible[static_cast<std::size_t>(a)].size() <
           eligible[static_cast<std::size_t>(b)].size();
  });
  for (int i = 0; i < n; ++i) {
    if (eligible[static_cast<std::size_t>(i)].empty())
      throw std::invalid_argument("iqp_exact: disc covered by no column");
  }

  std::vector<std::int64_t> load(static_cast<std::size_t>(kcols), 0);
  std::int64_t best = 0;
  std::int64_t current = 0;
  std::int64_t top = 0;  // largest current load
  auto dfs = [&](auto&& self, int depth) -> void {
    const std::int64_t remaining = n - depth;
    // Optimistic: every remaining disc joins the largest cluster.
    if (current + remaining * (2 * top + remaining) <= best && depth < n) return;
    if (depth == n) {
      best = std::max(best, current);
      return;
    }
    const int disc = order[static_cast<std::size_t>(depth)];
    for (int c : eligible[static_cast<std::size_t>(disc)]) {
      const std::int64_t before = load[static_cast<std::size_t>(c)];
      current += 2 * before + 1;
      load[static_cast<std::size_t>(c)] = before + 1;
      const std::int64_t old_top = top;
      top = std::max(top, before + 1);
      self(self, depth + 1);
      top = old_top;
      load[static_cast<std::size_t>(c)] = before;
      current -= 2 * before + 1;
    }
  };
  dfs(dfs, 0);
  return best;
}

/// Greedy R-IQP solution: fill the densest columns until the quota of
/// disc_count selections is met, the shortfall squared on the next column.
inline std::int64_t sos_upper_discrete(const DominantColumns& cols) {
  const std::int64_t n = cols.disc_count;
  if (n == 0) return 0;
  std::vector<std::int64_t> densities;
  densities.reserve(cols.columns.size());
  for (const auto& c : cols.columns) densities.push_back(static_cast<std::int64_t>(c.size()));
  std::sort(densities.begin(), densities.end(), std::greater<>());
  std::int64_t acc = 0;
  std::int64_t used = 0;
  for (std::int64_t delta : densities) {
    if (used + delta < n) {
      acc += delta * delta;
      used += delta;
    } else {
      const std::int64_t rest = n - used;
      acc += rest * rest;
      return acc;
    }
  }
  // Column densities always sum to at least the quota.
  throw std::logic_error("sos_upper_discrete: densities below quota");
}

/// Discrete mean lower bound: fraction of discs fully inside the sensor.
inline double mean_lower_discrete(std::span<const UncertaintyDisc> discs, int pixel_count) {
  int on = 0;
  for (const UncertaintyDisc& d : discs) {
    if (d.valid && d.on_image) ++on;
  }
  return static_cast<double>(on) / pixel_count;
}

/// Assembled contrast upper bound over a cube, valid for every omega inside
/// it and collapsing to the exact contrast on singletons.
inline double contrast_upper(const SearchCube& cube, const EventWindow& window,
                             const CameraIntrinsics& k, ImageKind mode,
                             const KernelSpec& kernel = {}) {
  const auto discs = make_discs(cube, window, k);
  const double p = k.pixel_count();
  if (mode == ImageKind::discrete) {
    const auto t = intersections(discs, k);
    const auto dom = dominant_columns(t);
    const double s = static_cast<double>(sos_upper_discrete(dom));
    const double mu = mean_lower_discrete(discs, k.pixel_count());
    return s / p - mu * mu;
  }
  const double s = sos_upper_continuous(discs, k, kernel);
  const double mu = mean_lower_continuous(discs, k, kernel);
  return s / p - mu * mu;
}

}  // namespace cm
