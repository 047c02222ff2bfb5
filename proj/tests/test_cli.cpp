#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cm/records.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const auto out_path = dir / "stdout.txt";
  const std::string cmd =
      std::string(CM_CLI_PATH) + " " + args + " > " + out_path.string() + " 2> " +
      (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synth is byte-identical under a fixed seed", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  const std::string base = "synth --points 20 --omega 0.4,-0.2,0.8 --sensor 48x48 "
                           "--duration 0.02 --rate 500 --noise 0.5 --seed 7 ";
  auto r1 = run_cli(base + "--out-events " + (dir / "e1.txt").string() + " --out-truth " +
                        (dir / "g1.txt").string() + " --out-calib " + (dir / "c1.txt").string(),
                    dir);
  auto r2 = run_cli(base + "--out-events " + (dir / "e2.txt").string() + " --out-truth " +
                        (dir / "g2.txt").string(),
                    dir);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir / "e1.txt") == slurp(dir / "e2.txt"));
  CHECK(slurp(dir / "g1.txt") == slurp(dir / "g2.txt"));
  fs::remove_all(dir);
}

TEST_CASE("synth writes a zero track for zero motion", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  const auto r = run_cli("synth --points 5 --omega 0,0,0 --sensor 32x32 --duration 0.01 "
                         "--rate 200 --seed 3 --out-events " +
                             (dir / "e.txt").string() + " --out-truth " +
                             (dir / "g.txt").string(),
                         dir);
  REQUIRE(r.exit_code == 0);
  const auto track = cm::load_track((dir / "g.txt").string());
  for (const auto& s : track.samples) CHECK(s.omega == Eigen::Vector3d::Zero());
  fs::remove_all(dir);
}

TEST_CASE("estimate closes the loop on synthetic data", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  REQUIRE(run_cli("synth --points 20 --omega 0.4,-0.2,0.8 --sensor 32x32 --duration 0.05 "
                  "--rate 200 --seed 11 --focal 150 --out-events " +
                      (dir / "e.txt").string() + " --out-truth " + (dir / "g.txt").string() +
                      " --out-calib " + (dir / "c.txt").string(),
                  dir)
              .exit_code == 0);
  // window longer than the sequence -> a single window over all events
  const auto r = run_cli("estimate --events " + (dir / "e.txt").string() + " --calib " +
                             (dir / "c.txt").string() +
                             " --method bnb-discrete --window 1.0 --rmax 2 --tau-rel 1e-2 "
                             "--require-certificate --out " +
                             (dir / "r.csv").string() + " --trace " + (dir / "t.csv").string(),
                         dir);
  REQUIRE(r.exit_code == 0);
  const auto records = cm::load_records((dir / "r.csv").string());
  REQUIRE(records.size() == 1);
  CHECK(records[0].certified);
  CHECK(records[0].method == "bnb-discrete");
  CHECK((records[0].omega - Eigen::Vector3d(0.4, -0.2, 0.8)).norm() < 0.2);

  // trace is monotone with a closed gap
  std::ifstream trace((dir / "t.csv").string());
  std::string header;
  std::getline(trace, header);
  CHECK(header == "iteration,elapsed_s,lower,upper");
  double prev_lower = -1e300, prev_upper = 1e300, lower = 0, upper = 0;
  std::string line;
  int rows = 0;
  while (std::getline(trace, line)) {
    const auto f = cm::split_char(line, ',');
    REQUIRE(f.size() == 4);
    REQUIRE(cm::parse_double(f[2], lower));
    REQUIRE(cm::parse_double(f[3], upper));
    CHECK(lower >= prev_lower);
    CHECK(upper <= prev_upper + 1e-12);
    prev_lower = lower;
    prev_upper = upper;
    ++rows;
  }
  CHECK(rows >= 1);
  fs::remove_all(dir);
}

TEST_CASE("estimate grid method emits coarse records", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  REQUIRE(run_cli("synth --points 10 --omega 0.2,0,0.4 --sensor 32x32 --duration 0.02 "
                  "--rate 100 --seed 5 --out-events " +
                      (dir / "e.txt").string() + " --out-truth " + (dir / "g.txt").string() +
                      " --out-calib " + (dir / "c.txt").string(),
                  dir)
              .exit_code == 0);
  const auto r = run_cli("estimate --events " + (dir / "e.txt").string() + " --calib " +
                             (dir / "c.txt").string() +
                             " --method grid --steps 2 --window 1.0 --rmax 2",
                         dir);
  REQUIRE(r.exit_code == 0);
  std::istringstream records_in(r.out);
  const auto records = cm::parse_records_csv(records_in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].iterations == 8);
  CHECK(!records[0].certified);
  fs::remove_all(dir);
}

TEST_CASE("render writes images and sidecars; optimised omega wins", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  REQUIRE(run_cli("synth --points 20 --omega 0.5,-0.3,1.0 --sensor 32x32 --duration 0.05 "
                  "--rate 100 --seed 13 --focal 150 --out-events " +
                      (dir / "e.txt").string() + " --out-truth " + (dir / "g.txt").string() +
                      " --out-calib " + (dir / "c.txt").string(),
                  dir)
              .exit_code == 0);
  const std::string base = "render --events " + (dir / "e.txt").string() + " --calib " +
                           (dir / "c.txt").string();
  REQUIRE(run_cli(base + " --omega 0,0,0 --mode discrete --out " + (dir / "id.pgm").string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli(base + " --omega 0.5,-0.3,1.0 --mode discrete --out " +
                      (dir / "true.pgm").string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli(base + " --omega 0.5,-0.3,1.0 --mode continuous --sigma 1 --out " +
                      (dir / "true.png").string(),
                  dir)
              .exit_code == 0);
  CHECK(fs::exists(dir / "id.pgm"));
  CHECK(fs::exists(dir / "true.pgm"));
  CHECK(fs::exists(dir / "true.png"));
  CHECK(slurp(dir / "true.pgm") != slurp(dir / "id.pgm"));

  const auto contrast_of = [&](const fs::path& sidecar) {
    std::ifstream in(sidecar);
    std::string line;
    while (std::getline(in, line)) {
      if (line.starts_with("contrast=")) {
        double v = 0;
        REQUIRE(cm::parse_double(line.substr(9), v));
        return v;
      }
    }
    FAIL("no contrast in sidecar");
    return 0.0;
  };
  CHECK(contrast_of(dir / "true.pgm.txt") > contrast_of(dir / "id.pgm.txt"));
  fs::remove_all(dir);
}

TEST_CASE("eval reproduces hand-computed statistics", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  // truth: constant (1,0,0)
  {
    std::ofstream g(dir / "g.txt");
    g << "0.0 1 0 0\n0.1 1 0 0\n";
  }
  // method A matches truth; method B is offset by (0.1, 0, 0)
  {
    std::vector<cm::RunRecord> records;
    for (int w = 0; w < 4; ++w) {
      cm::RunRecord a;
      a.window_start = 0.01 * w;
      a.omega = {1, 0, 0};
      a.method = "A";
      records.push_back(a);
      cm::RunRecord b = a;
      b.omega = {1.1, 0, 0};
      b.method = "B";
      records.push_back(b);
    }
    std::ofstream out(dir / "r.csv");
    cm::write_records_csv(out, records);
  }
  const auto r = run_cli("eval --records " + (dir / "r.csv").string() + " --truth " +
                             (dir / "g.txt").string() + " --window 0.01 --out " +
                             (dir / "stats.csv").string(),
                         dir);
  REQUIRE(r.exit_code == 0);
  const std::string stats = slurp(dir / "stats.csv");
  std::istringstream in(stats);
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,windows,mean_eps,mean_phi,std_eps,std_phi");
  bool saw_a = false, saw_b = false;
  while (std::getline(in, line)) {
    const auto f = cm::split_char(line, ',');
    REQUIRE(f.size() == 6);
    double mean_eps = 0, mean_phi = 0, std_eps = 0;
    REQUIRE(cm::parse_double(f[2], mean_eps));
    REQUIRE(cm::parse_double(f[3], mean_phi));
    REQUIRE(cm::parse_double(f[4], std_eps));
    if (f[0] == "A") {
      saw_a = true;
      CHECK(mean_eps == 0.0);
      CHECK(mean_phi == 0.0);
    } else if (f[0] == "B") {
      saw_b = true;
      CHECK(mean_eps == Catch::Approx(0.1).margin(1e-12));
      CHECK(mean_phi == Catch::Approx(0.1).margin(1e-12));
      CHECK(std_eps == Catch::Approx(0.0).margin(1e-12));
    }
  }
  CHECK(saw_a);
  CHECK(saw_b);
  fs::remove_all(dir);
}

TEST_CASE("eval excludes windows outside the track", "[cli]") {
  std::vector<cm::RunRecord> records;
  cm::RunRecord inside;
  inside.window_start = 0.0;
  inside.omega = {1, 0, 0};
  inside.method = "A";
  cm::RunRecord outside = inside;
  outside.window_start = 5.0;
  records = {inside, outside};
  cm::GroundTruthTrack track;
  track.samples.push_back({0.005, {1, 0, 0}});
  const auto report = cm::evaluate_records(records, track, {});
  REQUIRE(report.excluded.size() == 1);
  CHECK(report.excluded[0] == 1);
  REQUIRE(report.stats.size() == 1);
  CHECK(report.stats[0].windows == 1);
}

TEST_CASE("single eps=sqrt(2) window aggregates to itself", "[cli]") {
  std::vector<cm::RunRecord> records(1);
  records[0].window_start = 0.0;
  records[0].omega = {0, 1, 0};
  records[0].method = "M";
  cm::GroundTruthTrack track;
  track.samples.push_back({0.005, {1, 0, 0}});
  const auto report = cm::evaluate_records(records, track, {});
  REQUIRE(report.stats.size() == 1);
  CHECK(report.stats[0].mean_eps == Catch::Approx(std::numbers::sqrt2).margin(1e-15));
  CHECK(report.stats[0].mean_phi == 0.0);
  CHECK(report.stats[0].std_eps == 0.0);
}

TEST_CASE("records CSV round-trips losslessly", "[cli]") {
  std::vector<cm::RunRecord> records(3);
  records[0] = {0.01, {0.123456789012345678, -1.0 / 3.0, 2e-17}, 1.5, "bnb-discrete", 0.25, 42,
                true};
  records[1] = {0.02, {-0.4, 0.5, 0.6}, 2.75, "local-gd", 0.5, 7, false};
  records[2] = {0.03, {1e300, -1e-300, 0.0}, 0.0, "grid", 0.0, 8, false};
  std::ostringstream out;
  cm::write_records_csv(out, records);
  std::istringstream in(out.str());
  const auto back = cm::parse_records_csv(in);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].window_start == records[i].window_start);
    CHECK(back[i].omega == records[i].omega);
    CHECK(back[i].contrast == records[i].contrast);
    CHECK(back[i].method == records[i].method);
    CHECK(back[i].runtime_s == records[i].runtime_s);
    CHECK(back[i].iterations == records[i].iterations);
    CHECK(back[i].certified == records[i].certified);
  }
}

TEST_CASE("cli exit codes", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  // missing file -> 2
  CHECK(run_cli("estimate --events /nonexistent.txt --calib /nonexistent.txt "
                "--method bnb-discrete",
                dir)
            .exit_code == 2);
  // usage errors -> 1
  CHECK(run_cli("estimate", dir).exit_code == 1);
  CHECK(run_cli("estimate --events a --calib b --method bogus", dir).exit_code == 1);
  // non-certified under --require-certificate -> 3
  REQUIRE(run_cli("synth --points 10 --omega 0.3,0,0.5 --sensor 32x32 --duration 0.02 "
                  "--rate 100 --seed 2 --out-events " +
                      (dir / "e.txt").string() + " --out-truth " + (dir / "g.txt").string() +
                      " --out-calib " + (dir / "c.txt").string(),
                  dir)
              .exit_code == 0);
  CHECK(run_cli("estimate --events " + (dir / "e.txt").string() + " --calib " +
                    (dir / "c.txt").string() +
                    " --method bnb-discrete --window 1.0 --rmax 2 --max-iterations 2 "
                    "--require-certificate --out " +
                    (dir / "r.csv").string(),
                dir)
            .exit_code == 3);
  fs::remove_all(dir);
}

TEST_CASE("bound-trace emits a closed, monotone trace and a disc dump", "[cli]") {
  const auto dir = oracle::make_temp_dir("cm-cli");
  REQUIRE(run_cli("synth --points 15 --omega 0.3,-0.2,0.6 --sensor 32x32 --duration 0.02 "
                  "--rate 150 --seed 17 --focal 150 --out-events " +
                      (dir / "e.txt").string() + " --out-truth " + (dir / "g.txt").string() +
                      " --out-calib " + (dir / "c.txt").string(),
                  dir)
              .exit_code == 0);
  const auto r = run_cli("bound-trace --events " + (dir / "e.txt").string() + " --calib " +
                             (dir / "c.txt").string() +
                             " --method bnb-discrete --window 1.0 --rmax 2 --out " +
                             (dir / "t.csv").string() + " --dump-discs " +
                             (dir / "discs.csv").string() + " --cube 0,0,0,0.5",
                         dir);
  REQUIRE(r.exit_code == 0);
  std::ifstream trace(dir / "t.csv");
  std::string line;
  std::getline(trace, line);
  REQUIRE(line == "iteration,elapsed_s,lower,upper");
  double lower = 0, upper = 0;
  while (std::getline(trace, line)) {
    const auto f = cm::split_char(line, ',');
    REQUIRE(cm::parse_double(f[2], lower));
    REQUIRE(cm::parse_double(f[3], upper));
  }
  CHECK(upper - lower <= std::max(1e-2 * std::max(lower, 1.0),
                                  1e-3 * 15.0 * 150.0 * 0.02 * 15.0 * 150.0 * 0.02 / 1024.0) +
                             1e-12);

  std::ifstream discs(dir / "discs.csv");
  std::getline(discs, line);
  CHECK(line == "event_index,c_x,c_y,rho,a,b,on_image,valid");
  int rows = 0;
  while (std::getline(discs, line)) ++rows;
  CHECK(rows > 0);
  fs::remove_all(dir);
}
