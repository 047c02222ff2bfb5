// Command-line frontend: estimation over windows, rendering, synthesis,
// bound tracing, and benchmark evaluation.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cm/bounds.hpp"
#include "cm/events.hpp"
#include "cm/image.hpp"
#include "cm/image_io.hpp"
#include "cm/records.hpp"
#include "cm/solvers.hpp"
#include "cm/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNotCertified = 3;

Eigen::Vector3d parse_vec3(const std::string& text) {
  const auto parts = cm::split_char(text, ',');
  double x = 0, y = 0, z = 0;
  if (parts.size() != 3 || !cm::parse_double(parts[0], x) || !cm::parse_double(parts[1], y) ||
      !cm::parse_double(parts[2], z))
    throw CLI::ValidationError("expected `x,y,z`: " + text);
  return {x, y, z};
}

std::pair<int, int> parse_sensor(const std::string& text) {
  const auto pos = text.find('x');
  long long w = 0, h = 0;
  if (pos == std::string::npos || !cm::parse_int(text.substr(0, pos), w) ||
      !cm::parse_int(text.substr(pos + 1), h) || w < 1 || h < 1)
    throw CLI::ValidationError("expected `WIDTHxHEIGHT`: " + text);
  return {static_cast<int>(w), static_cast<int>(h)};
}

struct EstimateOptions {
  std::string events_path;
  std::string calib_path;
  std::string method;
  double window = 0.010;
  double r_max = 20.0;
  double tau = 0.0;
  double tau_rel = 1e-2;
  double sigma = 1.0;
  double truncation = 6.0;
  std::uint64_t max_iterations = 1'000'000;
  int grid_steps = 21;
  bool warm_start = false;
  bool parallel = false;
  bool undistort = false;
  bool require_certificate = false;
  std::string out_path;
  std::string trace_path;
};

cm::SolverConfig make_config(const EstimateOptions& opt, cm::ImageKind mode) {
  cm::SolverConfig cfg;
  cfg.r_max = opt.r_max;
  cfg.tau = opt.tau;
  cfg.tau_rel = opt.tau_rel;
  cfg.mode = mode;
  cfg.kernel = {opt.sigma, opt.truncation};
  cfg.max_iterations = opt.max_iterations;
  cfg.parallel = opt.parallel;
  return cfg;
}

cm::RunRecord run_method(const EstimateOptions& opt, const cm::EventWindow& window,
                         const cm::CameraIntrinsics& calib,
                         const Eigen::Vector3d& warm_init,
                         std::vector<cm::TracePoint>* trace_out) {
  cm::RunRecord rec;
  rec.window_start = window.source_offset;
  rec.method = opt.method;
  if (opt.method == "bnb-discrete" || opt.method == "bnb-continuous") {
    const auto mode = opt.method == "bnb-discrete" ? cm::ImageKind::discrete
                                                   : cm::ImageKind::continuous;
    auto cfg = make_config(opt, mode);
    cfg.keep_trace = trace_out != nullptr;
    const auto res = cm::solve_bnb(window, calib, cfg);
    rec.omega = res.omega;
    rec.contrast = res.contrast;
    rec.runtime_s = res.runtime_s;
    rec.iterations = res.iterations;
    rec.certified = res.certified;
    if (trace_out) *trace_out = res.trace;
  } else if (opt.method == "local-gd" || opt.method == "local-reward") {
    const auto objective =
        opt.method == "local-gd" ? cm::Objective::contrast : cm::Objective::reward;
    const auto cfg = make_config(opt, cm::ImageKind::continuous);
    const Eigen::Vector3d init = opt.warm_start ? warm_init : Eigen::Vector3d::Zero();
    const auto res = cm::solve_local(window, calib, cfg, objective, init);
    rec.omega = res.omega;
    rec.contrast = res.contrast;
    rec.runtime_s = res.runtime_s;
    rec.iterations = res.iterations;
    rec.certified = false;
  } else if (opt.method == "grid") {
    const auto cfg = make_config(opt, cm::ImageKind::discrete);
    const auto t0 = std::chrono::steady_clock::now();
    const auto [omega, value] = cm::grid_oracle(window, calib, cfg, opt.grid_steps);
    rec.omega = omega;
    rec.contrast = value;
    rec.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.iterations = static_cast<std::uint64_t>(opt.grid_steps) * opt.grid_steps *
                     opt.grid_steps;
    rec.certified = false;
  } else {
    throw CLI::ValidationError("unknown method: " + opt.method);
  }
  return rec;
}

int cmd_estimate(const EstimateOptions& opt) {
  const auto calib = cm::load_calibration(opt.calib_path);
  auto events = cm::load_events(opt.events_path, &calib);
  if (opt.undistort) events = cm::undistort_events(events, calib);
  const auto windows = cm::split_windows(events, opt.window);
  if (windows.empty()) throw cm::IoError("no events in " + opt.events_path);

  std::vector<cm::RunRecord> records(windows.size());
  std::vector<cm::TracePoint> trace;
  const bool sequential = opt.warm_start || !opt.parallel;
  if (sequential) {
    Eigen::Vector3d warm = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < windows.size(); ++i) {
      records[i] = run_method(opt, windows[i], calib, warm,
                              i == 0 && !opt.trace_path.empty() ? &trace : nullptr);
      warm = records[i].omega;
    }
  } else {
    std::vector<std::future<cm::RunRecord>> jobs;
    jobs.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      jobs.push_back(std::async(std::launch::async, [&, i] {
        std::vector<cm::TracePoint> t;
        return run_method(opt, windows[i], calib, Eigen::Vector3d::Zero(),
                          i == 0 && !opt.trace_path.empty() ? &t : nullptr);
      }));
    }
    for (std::size_t i = 0; i < windows.size(); ++i) records[i] = jobs[i].get();
    if (!opt.trace_path.empty()) {
      // deterministic trace needs the sequential path; recompute window 0
      records[0] = run_method(opt, windows[0], calib, Eigen::Vector3d::Zero(), &trace);
    }
  }
  std::sort(records.begin(), records.end(),
            [](const cm::RunRecord& a, const cm::RunRecord& b) {
              return a.window_start < b.window_start;
            });

  if (!opt.trace_path.empty()) {
    std::ofstream out(opt.trace_path);
    if (!out) throw cm::IoError("cannot write trace: " + opt.trace_path);
    cm::write_trace_csv(out, trace);
  }
  if (opt.out_path.empty()) {
    cm::write_records_csv(std::cout, records);
  } else {
    std::ofstream out(opt.out_path);
    if (!out) throw cm::IoError("cannot write records: " + opt.out_path);
    cm::write_records_csv(out, records);
  }
  if (opt.require_certificate) {
    for (const auto& r : records) {
      if (!r.certified) {
        std::cerr << "window at t=" << cm::format_double(r.window_start)
                  << " has no certificate\n";
        return kExitNotCertified;
      }
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrast maximisation for event-based rotational motion estimation"};
  app.require_subcommand(1);
  app.set_config("--config");

  const std::vector<std::string> methods = {"bnb-discrete", "bnb-continuous", "local-gd",
                                            "local-reward", "grid"};

  // --- estimate -------------------------------------------------------------
  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "Estimate angular velocity per window");
  estimate->add_option("--events", est.events_path, "Event file")->required();
  estimate->add_option("--calib", est.calib_path, "Calibration file")->required();
  estimate->add_option("--method", est.method, "Solver")
      ->required()
      ->check(CLI::IsMember(methods));
  estimate->add_option("--window", est.window, "Window duration, seconds");
  estimate->add_option("--rmax", est.r_max, "Maximum angular rate, rad/s");
  estimate->add_option("--tau", est.tau, "Absolute gap threshold (0 = auto)");
  estimate->add_option("--tau-rel", est.tau_rel, "Relative gap threshold");
  estimate->add_option("--sigma", est.sigma, "Kernel bandwidth, pixels");
  estimate->add_option("--truncation", est.truncation, "Kernel cutoff, multiples of sigma");
  estimate->add_option("--max-iterations", est.max_iterations, "BnB iteration cap");
  estimate->add_option("--steps", est.grid_steps, "Grid steps per axis (method grid)");
  estimate->add_flag("--warm-start", est.warm_start,
                     "Init local solver from previous window");
  estimate->add_flag("--parallel", est.parallel, "Process in parallel");
  estimate->add_flag("--undistort", est.undistort, "Undistort events at load");
  estimate->add_flag("--require-certificate", est.require_certificate,
                     "Exit 3 unless every window is certified");
  estimate->add_option("--out", est.out_path, "Records CSV (default stdout)");
  estimate->add_option("--trace", est.trace_path, "Trace CSV of the first window");

  // --- render ---------------------------------------------------------------
  struct {
    std::string events_path, calib_path, omega_text, mode = "discrete", out_path;
    double sigma = 1.0, truncation = 6.0;
    bool undistort = false;
  } ren;
  auto* render = app.add_subcommand("render", "Write a motion-compensated event image");
  render->add_option("--events", ren.events_path, "Event file")->required();
  render->add_option("--calib", ren.calib_path, "Calibration file")->required();
  render->add_option("--omega", ren.omega_text, "Angular velocity `wx,wy,wz`")->required();
  render->add_option("--mode", ren.mode, "discrete|continuous")
      ->check(CLI::IsMember({"discrete", "continuous"}));
  render->add_option("--sigma", ren.sigma, "Kernel bandwidth, pixels");
  render->add_option("--truncation", ren.truncation, "Kernel cutoff, multiples of sigma");
  render->add_flag("--undistort", ren.undistort, "Undistort events at load");
  render->add_option("--out", ren.out_path, "Output image (.png or PGM)")->required();

  // --- eval -----------------------------------------------------------------
  struct {
    std::string records_path, truth_path, out_path;
    double window = 0.010;
    bool degrees = false, interpolate = false;
  } ev;
  auto* eval = app.add_subcommand("eval", "Aggregate error metrics against ground truth");
  eval->add_option("--records", ev.records_path, "Records CSV from estimate")->required();
  eval->add_option("--truth", ev.truth_path, "Ground-truth track file")->required();
  eval->add_option("--window", ev.window, "Window duration used by estimate");
  eval->add_flag("--deg", ev.degrees, "Report deg/s");
  eval->add_flag("--interpolate", ev.interpolate, "Interpolate the track linearly");
  eval->add_option("--out", ev.out_path, "Also write stats CSV");

  // --- synth ----------------------------------------------------------------
  struct {
    int points = 50;
    std::string omega_text = "0,0,0", sensor = "64x64";
    double duration = 0.01, rate = 5000, noise = 0.0, focal = 0.0;
    std::uint64_t seed = 7;
    std::string out_events, out_truth, out_calib;
  } sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic event stream");
  synth->add_option("--points", sy.points, "Scene points")->check(CLI::PositiveNumber);
  synth->add_option("--omega", sy.omega_text, "True angular velocity `wx,wy,wz`");
  synth->add_option("--sensor", sy.sensor, "Sensor size WIDTHxHEIGHT");
  synth->add_option("--duration", sy.duration, "Stream duration, seconds");
  synth->add_option("--rate", sy.rate, "Events per second per point");
  synth->add_option("--noise", sy.noise, "Pixel noise sigma");
  synth->add_option("--focal", sy.focal, "Focal length override, pixels");
  synth->add_option("--seed", sy.seed, "RNG seed");
  synth->add_option("--out-events", sy.out_events, "Event file")->required();
  synth->add_option("--out-truth", sy.out_truth, "Ground-truth file")->required();
  synth->add_option("--out-calib", sy.out_calib, "Also write the calibration file");

  // --- bound-trace ----------------------------------------------------------
  struct {
    EstimateOptions est;
    int window_index = 0;
    std::string dump_discs, cube_text;
  } bt;
  bt.est.method = "bnb-discrete";
  auto* trace = app.add_subcommand("bound-trace", "Trace BnB bounds on one window");
  trace->add_option("--events", bt.est.events_path, "Event file")->required();
  trace->add_option("--calib", bt.est.calib_path, "Calibration file")->required();
  trace->add_option("--method", bt.est.method, "bnb-discrete|bnb-continuous")
      ->check(CLI::IsMember({"bnb-discrete", "bnb-continuous"}));
  trace->add_option("--window", bt.est.window, "Window duration, seconds");
  trace->add_option("--window-index", bt.window_index, "Which window to trace");
  trace->add_option("--rmax", bt.est.r_max, "Maximum angular rate, rad/s");
  trace->add_option("--tau", bt.est.tau, "Absolute gap threshold (0 = auto)");
  trace->add_option("--tau-rel", bt.est.tau_rel, "Relative gap threshold");
  trace->add_option("--sigma", bt.est.sigma, "Kernel bandwidth, pixels");
  trace->add_option("--max-iterations", bt.est.max_iterations, "BnB iteration cap");
  trace->add_flag("--parallel", bt.est.parallel, "Bound octants in parallel");
  trace->add_option("--out", bt.est.trace_path, "Trace CSV")->required();
  trace->add_option("--dump-discs", bt.dump_discs, "Debug CSV of per-event discs");
  trace->add_option("--cube", bt.cube_text, "Cube `cx,cy,cz,h` for --dump-discs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (estimate->parsed()) return cmd_estimate(est);

    if (render->parsed()) {
      const auto calib = cm::load_calibration(ren.calib_path);
      auto events = cm::load_events(ren.events_path, &calib);
      if (ren.undistort) events = cm::undistort_events(events, calib);
      cm::EventWindow window;
      window.events = std::move(events);
      window.t_max = window.events.empty() ? 0.0 : window.events.back().t;
      const Eigen::Vector3d omega = parse_vec3(ren.omega_text);
      const cm::KernelSpec kernel{ren.sigma, ren.truncation};
      const cm::EventImage img =
          ren.mode == "discrete" ? cm::render_discrete(window, omega, calib)
                                 : cm::render_continuous(window, omega, calib, kernel);
      const auto scale = cm::write_image(ren.out_path, img);
      cm::write_sidecar(ren.out_path + ".txt", cm::contrast(img), scale);
      return kExitOk;
    }

    if (eval->parsed()) {
      const auto records = cm::load_records(ev.records_path);
      const auto track = cm::load_track(ev.truth_path);
      cm::EvalOptions opt;
      opt.window = ev.window;
      opt.degrees = ev.degrees;
      opt.interpolate = ev.interpolate;
      const auto report = cm::evaluate_records(records, track, opt);
      for (std::size_t idx : report.excluded) {
        std::cerr << "excluded: window at t="
                  << cm::format_double(records[idx].window_start) << " (" << records[idx].method
                  << "): no ground-truth sample within the window span\n";
      }
      std::cout << cm::format_stats_table(report);
      if (!ev.out_path.empty()) {
        std::ofstream out(ev.out_path);
        if (!out) throw cm::IoError("cannot write stats: " + ev.out_path);
        cm::write_stats_csv(out, report);
      }
      return kExitOk;
    }

    if (synth->parsed()) {
      const auto [w, h] = parse_sensor(sy.sensor);
      const auto calib = cm::default_synth_intrinsics(w, h, sy.focal);
      const Eigen::Vector3d omega = parse_vec3(sy.omega_text);
      std::mt19937_64 rng(sy.seed);
      const auto scene = cm::random_scene(calib, sy.points, rng);
      const auto window = cm::synthesize(scene, omega, calib, sy.duration, sy.rate,
                                         sy.noise, rng);
      cm::save_events(sy.out_events, window.events);
      cm::GroundTruthTrack track;
      track.samples.push_back({0.0, omega});
      track.samples.push_back({sy.duration, omega});
      cm::save_track(sy.out_truth, track);
      if (!sy.out_calib.empty()) cm::save_calibration(sy.out_calib, calib);
      return kExitOk;
    }

    if (trace->parsed()) {
      const auto calib = cm::load_calibration(bt.est.calib_path);
      const auto events = cm::load_events(bt.est.events_path, &calib);
      const auto windows = cm::split_windows(events, bt.est.window);
      if (windows.empty()) throw cm::IoError("no events in " + bt.est.events_path);
      if (bt.window_index < 0 || bt.window_index >= static_cast<int>(windows.size()))
        throw cm::IoError("window index out of range");
      const auto& window = windows[static_cast<std::size_t>(bt.window_index)];

      if (!bt.dump_discs.empty()) {
        cm::SearchCube cube{Eigen::Vector3d::Zero(), bt.est.r_max};
        if (!bt.cube_text.empty()) {
          const auto parts = cm::split_char(bt.cube_text, ',');
          double cx = 0, cy = 0, cz = 0, hw = 0;
          if (parts.size() != 4 || !cm::parse_double(parts[0], cx) ||
              !cm::parse_double(parts[1], cy) || !cm::parse_double(parts[2], cz) ||
              !cm::parse_double(parts[3], hw))
            throw CLI::ValidationError("expected --cube `cx,cy,cz,h`");
          cube = {Eigen::Vector3d(cx, cy, cz), hw};
        }
        const auto discs = cm::make_discs(cube, window, calib);
        std::ofstream out(bt.dump_discs);
        if (!out) throw cm::IoError("cannot write disc dump: " + bt.dump_discs);
        out << "event_index,c_x,c_y,rho,a,b,on_image,valid\n";
        for (std::size_t i = 0; i < discs.size(); ++i) {
          const auto& d = discs[i];
          out << i << ',' << cm::format_double(d.centre.x()) << ','
              << cm::format_double(d.centre.y()) << ',' << cm::format_double(d.radius) << ','
              << cm::format_double(d.ellipse.a) << ',' << cm::format_double(d.ellipse.b) << ','
              << (d.on_image ? 1 : 0) << ',' << (d.valid ? 1 : 0) << '\n';
        }
      }

      const auto mode = bt.est.method == "bnb-discrete" ? cm::ImageKind::discrete
                                                        : cm::ImageKind::continuous;
      auto cfg = make_config(bt.est, mode);
      cfg.keep_trace = true;
      const auto res = cm::solve_bnb(window, calib, cfg);
      std::ofstream out(bt.est.trace_path);
      if (!out) throw cm::IoError("cannot write trace: " + bt.est.trace_path);
      cm::write_trace_csv(out, res.trace);
      std::cerr << "omega = " << cm::format_double(res.omega.x()) << ','
                << cm::format_double(res.omega.y()) << ',' << cm::format_double(res.omega.z())
                << " contrast = " << cm::format_double(res.contrast)
                << " certified = " << (res.certified ? 1 : 0) << '\n';
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
