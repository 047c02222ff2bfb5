#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cm/text.hpp"

namespace cm {

/// One sensor event. Polarity is kept for file fidelity only; no estimator
/// reads it.
struct Event {
  Eigen::Vector2d u{0.0, 0.0};  // pixel position
  double t = 0.0;               // seconds
  int p = 1;                    // -1 or +1
};

/// Contiguous slice of a stream, rebased to a window-local clock:
/// stored t = original t - source_offset, all t in [0, t_max].
struct EventWindow {
  std::vector<Event> events;
  double t_max = 0.0;
  double source_offset = 0.0;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

struct DistortionCoeffs {
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0, k3 = 0;
  bool any() const { return k1 != 0 || k2 != 0 || p1 != 0 || p2 != 0 || k3 != 0; }
};

struct CameraIntrinsics {
  double fx = 1, fy = 1;
  double cx = 0, cy = 0;
  int width = 1, height = 1;
  DistortionCoeffs dist{};

  int pixel_count() const { return width * height; }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

/// Sampled angular-velocity ground truth, timestamps strictly increasing.
struct GroundTruthTrack {
  struct Sample {
    double t = 0.0;
    Eigen::Vector3d omega{0, 0, 0};
  };
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }

  /// Sample with timestamp closest to t (earlier sample wins ties).
  const Sample& nearest(double t) const {
    if (samples.empty()) throw std::logic_error("empty ground-truth track");
    auto it = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const Sample& s, double v) { return s.t < v; });
    if (it == samples.begin()) return *it;
    if (it == samples.end()) return samples.back();
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    return (t - lo.t) <= (hi.t - t) ? lo : hi;
  }

  /// Linear interpolation at t; clamps outside the sampled range.
  Eigen::Vector3d interpolate(double t) const {
    if (samples.empty()) throw std::logic_error("empty ground-truth track");
    auto it = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const Sample& s, double v) { return s.t < v; });
    if (it == samples.begin()) return it->omega;
    if (it == samples.end()) return samples.back().omega;
    const auto& lo = *(it - 1);
    const auto& hi = *it;
    const double w = (t - lo.t) / (hi.t - lo.t);
    return (1.0 - w) * lo.omega + w * hi.omega;
  }
};

namespace detail {
// Out-of-order timestamps within this tolerance are sensor clock jitter and
// get re-sorted; anything worse is a corrupt file.
inline constexpr double kJitterTolerance = 1e-6;
}  // namespace detail

/// Parse a `t x y p` text stream. Lines starting with '#' and blank lines are
/// skipped. p may be {0,1} or {-1,+1}; 0 maps to -1. If intrinsics are given,
/// coordinates are validated against [0,W)x[0,H).
inline std::vector<Event> parse_events(std::istream& in,
                                       const CameraIntrinsics* validate = nullptr) {
  std::vector<Event> events;
  std::vector<int> lines;
  std::string line;
  int line_no = 0;
  bool needs_sort = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto fields = split_ws(stripped);
    if (fields.size() != 4)
      throw ParseError("expected 4 fields `t x y p`, got " + std::to_string(fields.size()),
                       line_no);
    Event ev;
    double px = 0, py = 0;
    long long pol = 0;
    if (!parse_double(fields[0], ev.t)) throw ParseError("bad timestamp", line_no);
    if (!parse_double(fields[1], px)) throw ParseError("bad x coordinate", line_no);
    if (!parse_double(fields[2], py)) throw ParseError("bad y coordinate", line_no);
    if (!parse_int(fields[3], pol)) throw ParseError("bad polarity", line_no);
    if (ev.t < 0) throw ParseError("negative timestamp", line_no);
    if (pol != 0 && pol != 1 && pol != -1)
      throw ParseError("polarity must be 0, 1 or -1", line_no);
    ev.p = pol == 0 ? -1 : static_cast<int>(pol);
    ev.u = Eigen::Vector2d(px, py);
    if (validate) {
      if (px < 0 || px >= validate->width || py < 0 || py >= validate->height)
        throw ParseError("coordinate outside sensor", line_no);
    }
    if (!events.empty() && ev.t < events.back().t) {
      if (events.back().t - ev.t > detail::kJitterTolerance)
        throw ParseError("timestamps out of order beyond jitter tolerance", line_no);
      needs_sort = true;
    }
    events.push_back(ev);
    lines.push_back(line_no);
  }
  if (needs_sort) {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
  }
  return events;
}

inline std::vector<Event> load_events(const std::string& path,
                                      const CameraIntrinsics* validate = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event file: " + path);
  try {
    return parse_events(in, validate);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void serialize_events(std::ostream& out, std::span<const Event> events) {
  for (const Event& e : events) {
    out << format_double(e.t) << ' ' << format_double(e.u.x()) << ' '
        << format_double(e.u.y()) << ' ' << e.p << '\n';
  }
}

inline void save_events(const std::string& path, std::span<const Event> events) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write event file: " + path);
  serialize_events(out, events);
}

/// Contiguous half-open windows [k*w, (k+1)*w), each rebased so its left
/// boundary is t = 0. Empty windows are omitted.
inline std::vector<EventWindow> split_windows(std::span<const Event> events, double window) {
  if (window <= 0) throw std::invalid_argument("window duration must be positive");
  std::vector<EventWindow> out;
  std::size_t i = 0;
  while (i < events.size()) {
    const auto k = static_cast<std::int64_t>(std::floor(events[i].t / window));
    const double start = static_cast<double>(k) * window;
    const double end = static_cast<double>(k + 1) * window;
    EventWindow w;
    w.t_max = window;
    w.source_offset = start;
    while (i < events.size() && events[i].t < end) {
      Event e = events[i];
      e.t -= start;
      w.events.push_back(e);
      ++i;
    }
    out.push_back(std::move(w));
  }
  return out;
}

/// Inverse Brown-Conrady pass: maps distorted pixel coordinates to the ideal
/// pinhole positions assumed by the warp. Fixed-point iteration in normalized
/// coordinates.
inline std::vector<Event> undistort_events(std::span<const Event> events,
                                           const CameraIntrinsics& k) {
  std::vector<Event> out(events.begin(), events.end());
  if (!k.dist.any()) return out;
  const auto& d = k.dist;
  for (Event& e : out) {
    const double xd = (e.u.x() - k.cx) / k.fx;
    const double yd = (e.u.y() - k.cy) / k.fy;
    double x = xd, y = yd;
    for (int it = 0; it < 10; ++it) {
      const double r2 = x * x + y * y;
      const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
      const double dx = 2 * d.p1 * x * y + d.p2 * (r2 + 2 * x * x);
      const double dy = d.p1 * (r2 + 2 * y * y) + 2 * d.p2 * x * y;
      x = (xd - dx) / radial;
      y = (yd - dy) / radial;
    }
    e.u = Eigen::Vector2d(k.fx * x + k.cx, k.fy * y + k.cy);
  }
  return out;
}

/// Calibration file: `key=value` lines (fx, fy, cx, cy, width, height and
/// optional k1 k2 p1 p2 k3). '#' comments allowed.
inline CameraIntrinsics parse_calibration(std::istream& in) {
  CameraIntrinsics k;
  bool saw_fx = false, saw_fy = false, saw_w = false, saw_h = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    const std::string_view key = trim(stripped.substr(0, eq));
    const std::string_view value = trim(stripped.substr(eq + 1));
    double v = 0;
    if (!parse_double(value, v)) throw ParseError("bad numeric value", line_no);
    if (key == "fx") { k.fx = v; saw_fx = true; }
    else if (key == "fy") { k.fy = v; saw_fy = true; }
    else if (key == "cx") k.cx = v;
    else if (key == "cy") k.cy = v;
    else if (key == "width") { k.width = static_cast<int>(v); saw_w = true; }
    else if (key == "height") { k.height = static_cast<int>(v); saw_h = true; }
    else if (key == "k1") k.dist.k1 = v;
    else if (key == "k2") k.dist.k2 = v;
    else if (key == "p1") k.dist.p1 = v;
    else if (key == "p2") k.dist.p2 = v;
    else if (key == "k3") k.dist.k3 = v;
    else throw ParseError("unknown calibration key: " + std::string(key), line_no);
  }
  if (!saw_fx || !saw_fy || !saw_w || !saw_h)
    throw ParseError("calibration must define fx, fy, width, height");
  if (k.fx <= 0 || k.fy <= 0) throw ParseError("focal lengths must be positive");
  if (k.width < 1 || k.height < 1) throw ParseError("sensor size must be at least 1x1");
  return k;
}

inline CameraIntrinsics load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file: " + path);
  try {
    return parse_calibration(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_calibration(const std::string& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration file: " + path);
  out << "fx=" << format_double(k.fx) << "\nfy=" << format_double(k.fy)
      << "\ncx=" << format_double(k.cx) << "\ncy=" << format_double(k.cy)
      << "\nwidth=" << k.width << "\nheight=" << k.height << '\n';
  if (k.dist.any()) {
    out << "k1=" << format_double(k.dist.k1) << "\nk2=" << format_double(k.dist.k2)
        << "\np1=" << format_double(k.dist.p1) << "\np2=" << format_double(k.dist.p2)
        << "\nk3=" << format_double(k.dist.k3) << '\n';
  }
}

/// Ground-truth file: `t wx wy wz` per line, rad/s.
inline GroundTruthTrack parse_track(std::istream& in) {
  GroundTruthTrack track;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto fields = split_ws(stripped);
    if (fields.size() != 4) throw ParseError("expected `t wx wy wz`", line_no);
    GroundTruthTrack::Sample s;
    double wx = 0, wy = 0, wz = 0;
    if (!parse_double(fields[0], s.t) || !parse_double(fields[1], wx) ||
        !parse_double(fields[2], wy) || !parse_double(fields[3], wz))
      throw ParseError("bad numeric field", line_no);
    s.omega = Eigen::Vector3d(wx, wy, wz);
    if (!track.samples.empty() && s.t <= track.samples.back().t)
      throw ParseError("ground-truth timestamps must be strictly increasing", line_no);
    track.samples.push_back(s);
  }
  return track;
}

inline GroundTruthTrack load_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ground-truth file: " + path);
  try {
    return parse_track(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_track(const std::string& path, const GroundTruthTrack& track) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ground-truth file: " + path);
  for (const auto& s : track.samples) {
    out << format_double(s.t) << ' ' << format_double(s.omega.x()) << ' '
        << format_double(s.omega.y()) << ' ' << format_double(s.omega.z()) << '\n';
  }
}

}  // namespace cm
