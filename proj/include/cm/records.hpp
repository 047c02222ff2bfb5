#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cm/events.hpp"
#include "cm/solvers.hpp"
#include "cm/text.hpp"

namespace cm {

/// One estimation result per (window, method).
struct RunRecord {
  double window_start = 0.0;
  Eigen::Vector3d omega{0, 0, 0};
  double contrast = 0.0;
  std::string method;
  double runtime_s = 0.0;
  std::uint64_t iterations = 0;
  bool certified = false;
};

inline constexpr const char* kRecordsHeader =
    "window_start,wx,wy,wz,contrast,method,runtime_s,iterations,certified";

inline void write_records_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << kRecordsHeader << '\n';
  for (const RunRecord& r : records) {
    out << format_double(r.window_start) << ',' << format_double(r.omega.x()) << ','
        << format_double(r.omega.y()) << ',' << format_double(r.omega.z()) << ','
        << format_double(r.contrast) << ',' << r.method << ',' << format_double(r.runtime_s)
        << ',' << r.iterations << ',' << (r.certified ? 1 : 0) << '\n';
  }
}

inline std::vector<RunRecord> parse_records_csv(std::istream& in) {
  std::vector<RunRecord> records;
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view stripped = trim(line);
    if (stripped.empty()) continue;
    if (!saw_header) {
      if (stripped != kRecordsHeader) throw ParseError("unexpected records header", line_no);
      saw_header = true;
      continue;
    }
    const auto f = split_char(stripped, ',');
    if (f.size() != 9) throw ParseError("expected 9 CSV fields", line_no);
    RunRecord r;
    double wx = 0, wy = 0, wz = 0;
    long long iters = 0, cert = 0;
    if (!parse_double(f[0], r.window_start) || !parse_double(f[1], wx) ||
        !parse_double(f[2], wy) || !parse_double(f[3], wz) || !parse_double(f[4], r.contrast) ||
        !parse_double(f[6], r.runtime_s) || !parse_int(f[7], iters) || !parse_int(f[8], cert))
      throw ParseError("bad numeric field", line_no);
    r.omega = Eigen::Vector3d(wx, wy, wz);
    r.method = std::string(trim(f[5]));
    r.iterations = static_cast<std::uint64_t>(iters);
    r.certified = cert != 0;
    records.push_back(std::move(r));
  }
  if (!saw_header) throw ParseError("empty records file");
  return records;
}

inline std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records file: " + path);
  try {
    return parse_records_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace) {
  out << "iteration,elapsed_s,lower,upper\n";
  for (const TracePoint& p : trace) {
    out << p.iteration << ',' << format_double(p.elapsed_s) << ',' << format_double(p.lower)
        << ',' << format_double(p.upper) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Benchmark aggregation
// ---------------------------------------------------------------------------

struct EvalOptions {
  double window = 0.01;      // window duration, to place midpoints
  bool interpolate = false;  // linear interpolation instead of nearest sample
  bool degrees = false;      // report deg/s instead of rad/s
};

struct MethodStats {
  std::string method;
  std::size_t windows = 0;
  double mean_eps = 0.0;
  double mean_phi = 0.0;
  double std_eps = 0.0;  // population standard deviation
  double std_phi = 0.0;
};

struct EvalReport {
  std::vector<MethodStats> stats;           // method-sorted
  std::vector<std::size_t> excluded;        // record indices without usable truth
  bool degrees = false;
};

/// Associates each record with the ground-truth sample nearest its window
/// midpoint. Windows whose span contains no sample are excluded and reported.
inline EvalReport evaluate_records(std::span<const RunRecord> records,
                                   const GroundTruthTrack& track, const EvalOptions& opt) {
  EvalReport report;
  report.degrees = opt.degrees;
  const double unit = opt.degrees ? 180.0 / std::numbers::pi : 1.0;
  std::map<std::string, std::vector<ErrorMetrics>> per_method;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RunRecord& r = records[i];
    const double mid = r.window_start + opt.window / 2.0;
    Eigen::Vector3d truth;
    if (opt.interpolate) {
      if (track.empty() || mid < track.samples.front().t || mid > track.samples.back().t) {
        report.excluded.push_back(i);
        continue;
      }
      truth = track.interpolate(mid);
    } else {
      if (track.empty()) {
        report.excluded.push_back(i);
        continue;
      }
      const auto& s = track.nearest(mid);
      if (s.t < r.window_start || s.t > r.window_start + opt.window) {
        report.excluded.push_back(i);
        continue;
      }
      truth = s.omega;
    }
    ErrorMetrics m = error_metrics(truth, r.omega);
    m.eps *= unit;
    m.phi *= unit;
    per_method[r.method].push_back(m);
  }
  for (const auto& [method, errs] : per_method) {
    MethodStats s;
    s.method = method;
    s.windows = errs.size();
    for (const auto& e : errs) {
      s.mean_eps += e.eps;
      s.mean_phi += e.phi;
    }
    s.mean_eps /= errs.size();
    s.mean_phi /= errs.size();
    for (const auto& e : errs) {
      s.std_eps += (e.eps - s.mean_eps) * (e.eps - s.mean_eps);
      s.std_phi += (e.phi - s.mean_phi) * (e.phi - s.mean_phi);
    }
    s.std_eps = std::sqrt(s.std_eps / errs.size());
    s.std_phi = std::sqrt(s.std_phi / errs.size());
    report.stats.push_back(std::move(s));
  }
  return report;
}

inline std::string format_stats_table(const EvalReport& report) {
  std::ostringstream out;
  const char* unit = report.degrees ? "deg/s" : "rad/s";
  out << std::left << std::setw(16) << "method" << std::right << std::setw(9) << "windows"
      << std::setw(12) << "mu(eps)" << std::setw(12) << "mu(phi)" << std::setw(12)
      << "sigma(eps)" << std::setw(12) << "sigma(phi)" << "   [" << unit << "]\n";
  out << std::setfill('-') << std::setw(76) << "" << std::setfill(' ') << '\n';
  for (const auto& s : report.stats) {
    out << std::left << std::setw(16) << s.method << std::right << std::setw(9) << s.windows
        << std::fixed << std::setprecision(4) << std::setw(12) << s.mean_eps << std::setw(12)
        << s.mean_phi << std::setw(12) << s.std_eps << std::setw(12) << s.std_phi << '\n';
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

inline void write_stats_csv(std::ostream& out, const EvalReport& report) {
  out << "method,windows,mean_eps,mean_phi,std_eps,std_phi\n";
  for (const auto& s : report.stats) {
    out << s.method << ',' << s.windows << ',' << format_double(s.mean_eps) << ','
        << format_double(s.mean_phi) << ',' << format_double(s.std_eps) << ','
        << format_double(s.std_phi) << '\n';
  }
}

}  // namespace cm
