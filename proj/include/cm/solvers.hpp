#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cm/bounds.hpp"
#include "cm/events.hpp"
#include "cm/image.hpp"
#include "cm/warp.hpp"

namespace cm {

enum class Objective { contrast, reward };

struct SolverConfig {
  double r_max = 20.0;   // rad/s, feasible ball radius
  double tau = 0.0;      // absolute gap; <= 0 resolves to 1e-3 * N^2 / P
  double tau_rel = 1e-2; // relative gap
  ImageKind mode = ImageKind::discrete;
  KernelSpec kernel{};   // continuous mode only
  std::uint64_t max_iterations = 1'000'000;
  bool parallel = false;
  bool keep_trace = true;
};

struct TracePoint {
  std::uint64_t iteration = 0;
  double elapsed_s = 0.0;
  double lower = 0.0;  // best incumbent contrast
  double upper = 0.0;  // queue-top upper bound
};

struct SolveResult {
  AngularVelocity omega{0, 0, 0};
  double contrast = 0.0;
  double upper_bound_at_exit = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t iterations = 0;
  std::uint64_t cubes_pruned = 0;
  double runtime_s = 0.0;
  bool certified = false;
  std::vector<TracePoint> trace;
};

/// Contrast of the rendered image at omega, in the requested mode. All
/// solvers and oracles score candidates through this one path.
inline double evaluate_contrast(const EventWindow& window, const AngularVelocity& omega,
                                const CameraIntrinsics& k, ImageKind mode,
                                const KernelSpec& kernel = {}) {
  return mode == ImageKind::discrete ? contrast(render_discrete(window, omega, k))
                                     : contrast(render_continuous(window, omega, k, kernel));
}

namespace detail {

inline double resolve_tau(const SolverConfig& cfg, const EventWindow& window,
                          const CameraIntrinsics& k) {
  if (cfg.tau > 0) return cfg.tau;
  const double n = static_cast<double>(window.events.size());
  return 1e-3 * n * n / k.pixel_count();
}

inline double gap_threshold(double tau, double tau_rel, double best) {
  return std::max(tau, tau_rel * std::max(best, 1.0));
}

inline Eigen::Vector3d clamp_to_ball(const Eigen::Vector3d& v, double r_max) {
  const double n = v.norm();
  if (n <= r_max || n == 0.0) return v;
  return v * (r_max / n);
}

}  // namespace detail

/// Best-first branch-and-bound over the r_max ball. Dequeues the cube with
/// the highest upper bound, terminates once that bound meets the incumbent
/// within the gap threshold, otherwise scores the (ball-clamped) cube centre
/// and splits into octants. Octants entirely outside the ball are discarded;
/// the rest enqueue when their bound can still beat the incumbent. Child
/// bounds inherit min(parent, child), which keeps the dequeued upper sequence
/// non-increasing.
inline SolveResult solve_bnb(const EventWindow& window, const CameraIntrinsics& k,
                             const SolverConfig& cfg) {
  if (window.empty()) throw std::invalid_argument("solve_bnb: empty window");
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const double tau = detail::resolve_tau(cfg, window, k);

  struct Node {
    double upper;
    std::uint64_t seq;
    SearchCube cube;
  };
  struct Cmp {
    bool operator()(const Node& a, const Node& b) const {
      if (a.upper != b.upper) return a.upper < b.upper;
      return a.seq > b.seq;  // FIFO on ties
    }
  };

  const auto bound = [&](const SearchCube& cube) {
    return contrast_upper(cube, window, k, cfg.mode, cfg.kernel);
  };
  const auto evaluate = [&](const AngularVelocity& omega) {
    return evaluate_contrast(window, omega, k, cfg.mode, cfg.kernel);
  };

  SolveResult result;
  std::uint64_t seq = 0;
  std::priority_queue<Node, std::vector<Node>, Cmp> queue;

  const SearchCube root{Eigen::Vector3d::Zero(), cfg.r_max};
  result.omega = root.centre;
  double best = evaluate(result.omega);
  queue.push({bound(root), seq++, root});

  while (!queue.empty()) {
    const Node node = queue.top();
    queue.pop();
    ++result.iterations;
    if (cfg.keep_trace)
      result.trace.push_back({result.iterations, elapsed(), best, node.upper});

    if (node.upper - best <= detail::gap_threshold(tau, cfg.tau_rel, best)) {
      result.certified = true;
      result.upper_bound_at_exit = node.upper;
      break;
    }
    if (result.iterations >= cfg.max_iterations) {
      result.upper_bound_at_exit = node.upper;
      break;
    }

    const Eigen::Vector3d centre = detail::clamp_to_ball(node.cube.centre, cfg.r_max);
    const double value = evaluate(centre);
    if (value >= best) {
      best = value;
      result.omega = centre;
    }

    const double child_h = node.cube.half_width / 2.0;
    std::vector<SearchCube> children;
    children.reserve(8);
    for (int dz : {-1, 1}) {
      for (int dy : {-1, 1}) {
        for (int dx : {-1, 1}) {
          SearchCube child;
          child.centre = node.cube.centre + child_h * Eigen::Vector3d(dx, dy, dz);
          child.half_width = child_h;
          if (child.distance_to_origin() > cfg.r_max) {
            ++result.cubes_pruned;
            continue;
          }
          children.push_back(child);
        }
      }
    }

    std::vector<double> uppers(children.size());
    if (cfg.parallel && children.size() > 1) {
      std::vector<std::future<double>> jobs;
      jobs.reserve(children.size());
      for (const SearchCube& child : children)
        jobs.push_back(std::async(std::launch::async, [&bound, child] { return bound(child); }));
      for (std::size_t i = 0; i < jobs.size(); ++i) uppers[i] = jobs[i].get();
    } else {
      for (std::size_t i = 0; i < children.size(); ++i) uppers[i] = bound(children[i]);
    }
    for (std::size_t i = 0; i < children.size(); ++i) {
      const double ub = std::min(uppers[i], node.upper);
      if (ub >= best) {
        queue.push({ub, seq++, children[i]});
      } else {
        ++result.cubes_pruned;
      }
    }
  }
  if (!result.certified && result.iterations < cfg.max_iterations && queue.empty())
    throw std::logic_error("solve_bnb: queue exhausted before gap closure");

  result.contrast = best;
  result.runtime_s = elapsed();
  return result;
}

/// Central finite-difference gradient of the continuous objective.
inline Eigen::Vector3d fd_gradient(const EventWindow& window, const CameraIntrinsics& k,
                                   const KernelSpec& kernel, Objective objective,
                                   const AngularVelocity& omega, double step = 1e-5) {
  const auto f = [&](const AngularVelocity& w) {
    const EventImage img = render_continuous(window, w, k, kernel);
    return objective == Objective::contrast ? contrast(img) : reward(img);
  };
  Eigen::Vector3d g;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d hi = omega, lo = omega;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

/// Gradient ascent with backtracking line search on the continuous objective
/// (contrast or reward). Monotone: a step is only taken when it improves.
/// Iterates are projected onto the r_max ball; no certificate is produced.
inline SolveResult solve_local(const EventWindow& window, const CameraIntrinsics& k,
                               const SolverConfig& cfg, Objective objective,
                               const AngularVelocity& init) {
  if (window.empty()) throw std::invalid_argument("solve_local: empty window");
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = [&](const AngularVelocity& w) {
    const EventImage img = render_continuous(window, w, k, cfg.kernel);
    return objective == Objective::contrast ? contrast(img) : reward(img);
  };

  SolveResult result;
  AngularVelocity omega = detail::clamp_to_ball(init, cfg.r_max);
  double value = f(omega);
  double step_len = 0.05 * cfg.r_max;
  const double min_step = 1e-10 * cfg.r_max;

  for (int iter = 0; iter < 200; ++iter) {
    ++result.iterations;
    const Eigen::Vector3d g = fd_gradient(window, k, cfg.kernel, objective, omega);
    const double gn = g.norm();
    if (gn < 1e-14) break;
    const Eigen::Vector3d dir = g / gn;

    double trial = step_len;
    bool improved = false;
    double gained = 0.0;
    while (trial >= min_step) {
      const AngularVelocity cand = detail::clamp_to_ball(omega + trial * dir, cfg.r_max);
      const double fc = f(cand);
      if (fc > value) {
        gained = fc - value;
        omega = cand;
        value = fc;
        step_len = std::min(trial * 2.0, 0.2 * cfg.r_max);
        improved = true;
        break;
      }
      trial /= 2.0;
    }
    if (!improved) break;
    if (gained < 1e-7 * std::max(std::abs(value), 1.0)) break;
  }

  result.omega = omega;
  result.contrast = evaluate_contrast(window, omega, k, ImageKind::continuous, cfg.kernel);
  result.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Exhaustive contrast evaluation over the uniform grid on the r_max cube,
/// restricted to the ball. Deterministic: the first grid point (lexicographic
/// index order) achieving the maximum wins.
inline std::pair<AngularVelocity, double> grid_oracle(const EventWindow& window,
                                                      const CameraIntrinsics& k,
                                                      const SolverConfig& cfg,
                                                      int steps_per_axis) {
  if (steps_per_axis < 2) throw std::invalid_argument("grid_oracle: need >= 2 steps");
  if (window.empty()) throw std::invalid_argument("grid_oracle: empty window");
  AngularVelocity best_omega = Eigen::Vector3d::Zero();
  double best = -std::numeric_limits<double>::infinity();
  const double lo = -cfg.r_max;
  const double span = 2.0 * cfg.r_max;
  for (int i = 0; i < steps_per_axis; ++i) {
    for (int j = 0; j < steps_per_axis; ++j) {
      for (int l = 0; l < steps_per_axis; ++l) {
        const Eigen::Vector3d w(lo + span * i / (steps_per_axis - 1),
                                lo + span * j / (steps_per_axis - 1),
                                lo + span * l / (steps_per_axis - 1));
        if (w.norm() > cfg.r_max) continue;
        const double c = evaluate_contrast(window, w, k, cfg.mode, cfg.kernel);
        if (c > best) {
          best = c;
          best_omega = w;
        }
      }
    }
  }
  return {best_omega, best};
}

struct ErrorMetrics {
  double eps = 0.0;  // | truth - estimate |_2
  double phi = 0.0;  // | |truth| - |estimate| |
};

inline ErrorMetrics error_metrics(const AngularVelocity& truth, const AngularVelocity& est) {
  return {(truth - est).norm(), std::abs(truth.norm() - est.norm())};
}

}  // namespace cm
