#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "cm/synth.hpp"
#include "cm/warp.hpp"
#include "oracles.hpp"

using Catch::Approx;

TEST_CASE("exp_map of zero is exactly the identity", "[warp]") {
  const Eigen::Matrix3d r = cm::exp_map(Eigen::Vector3d::Zero());
  CHECK(r == Eigen::Matrix3d::Identity());
}

TEST_CASE("exp_map half turn about z", "[warp]") {
  const Eigen::Matrix3d r = cm::exp_map({0, 0, std::numbers::pi});
  Eigen::Matrix3d expected = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("exp_map matches the quaternion oracle", "[warp]") {
  CHECK((cm::exp_map({0.1, -0.2, 0.3}) - oracle::quat_matrix(oracle::quat_exp({0.1, -0.2, 0.3})))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d v(u(rng), u(rng), u(rng));
    v *= std::numbers::pi * std::abs(u(rng));
    const Eigen::Matrix3d a = cm::exp_map(v);
    const Eigen::Matrix3d b = oracle::quat_matrix(oracle::quat_exp(v));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.transpose() * a - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.determinant() == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("exp_map inverse composition", "[warp]") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d v(u(rng), u(rng), u(rng));
    v = v.normalized() * std::numbers::pi * std::abs(u(rng));
    const Eigen::Matrix3d r = cm::exp_map(v) * cm::exp_map(-v);
    CHECK((r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("exp_map small-angle branch stays smooth", "[warp]") {
  const Eigen::Vector3d tiny(3e-10, -2e-10, 1e-10);
  const Eigen::Matrix3d a = cm::exp_map(tiny);
  const Eigen::Matrix3d b = oracle::quat_matrix(oracle::quat_exp(tiny));
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("warp_event identity cases", "[warp]") {
  cm::CameraIntrinsics k = cm::default_synth_intrinsics(64, 64, 120);
  const Eigen::Vector2d u(17.25, 40.5);
  const auto same = cm::warp_event(u, 0.37, Eigen::Vector3d::Zero(), k);
  REQUIRE(same);
  CHECK((*same - u).norm() < 1e-12);
  const auto at0 = cm::warp_event(u, 0.0, {1.0, -2.0, 0.5}, k);
  REQUIRE(at0);
  CHECK((*at0 - u).norm() < 1e-12);
}

TEST_CASE("warp_event circles points around the principal axis", "[warp]") {
  cm::CameraIntrinsics k;
  k.fx = k.fy = 1;
  k.cx = k.cy = 0;
  k.width = k.height = 100;
  for (double theta : {0.1, 0.7, -0.4}) {
    const double t = 0.01;
    const auto pos = cm::warp_event({1, 0}, t, {0, 0, theta / t}, k);
    REQUIRE(pos);
    CHECK(pos->x() == Approx(std::cos(theta)).margin(1e-12));
    CHECK(pos->y() == Approx(std::sin(theta)).margin(1e-12));
  }
}

TEST_CASE("warp_event signals behind-camera rays distinctly", "[warp]") {
  cm::CameraIntrinsics k;
  k.fx = k.fy = 1;
  k.cx = k.cy = 0;
  k.width = k.height = 10;
  // pitch the optical-axis ray past the principal plane
  const auto gone = cm::warp_event({0, 0}, 1.0, {0, std::numbers::pi / 2 + 0.1, 0}, k);
  CHECK(!gone.has_value());
}

TEST_CASE("warp_ray basics", "[warp]") {
  cm::CameraIntrinsics k = cm::default_synth_intrinsics(64, 64, 120);
  const Eigen::Vector3d pp = cm::warp_ray({k.cx, k.cy}, 0.1, Eigen::Vector3d::Zero(), k);
  CHECK((pp - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0, 63);
  std::uniform_real_distribution<double> w(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d px(u(rng), u(rng));
    const Eigen::Vector3d omega(w(rng), w(rng), w(rng));
    const double t = 0.01 * std::abs(w(rng));
    const Eigen::Vector3d ray = cm::warp_ray(px, t, omega, k);
    CHECK(ray.norm() == Approx(1.0).margin(1e-12));
    const Eigen::Vector3d expected =
        oracle::quat_rotate(oracle::quat_exp(omega * t), cm::bearing(px, k));
    CHECK((ray - expected).norm() < 1e-12);
  }
}

TEST_CASE("warp_event is smooth in omega", "[warp]") {
  cm::CameraIntrinsics k = cm::default_synth_intrinsics(64, 64, 120);
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(10, 53);
  std::uniform_real_distribution<double> w(-1.5, 1.5);
  const auto jac = [&](const Eigen::Vector2d& px, double t, const Eigen::Vector3d& omega,
                       double h) {
    Eigen::Matrix<double, 2, 3> j;
    for (int c = 0; c < 3; ++c) {
      Eigen::Vector3d hi = omega, lo = omega;
      hi[c] += h;
      lo[c] -= h;
      j.col(c) = (*cm::warp_event(px, t, hi, k) - *cm::warp_event(px, t, lo, k)) / (2 * h);
    }
    return j;
  };
  for (int i = 0; i < 30; ++i) {
    const Eigen::Vector2d px(u(rng), u(rng));
    const Eigen::Vector3d omega(w(rng), w(rng), w(rng));
    const double t = 0.005 + 0.005 * std::abs(w(rng));
    const auto a = jac(px, t, omega, 1e-6);
    const auto b = jac(px, t, omega, 1e-5);
    const double scale = std::max(a.norm(), 1e-9);
    CHECK((a - b).norm() / scale < 1e-4);
  }
}

TEST_CASE("warp composition consistency", "[warp]") {
  cm::CameraIntrinsics k = cm::default_synth_intrinsics(64, 64, 120);
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(5, 58);
  std::uniform_real_distribution<double> w(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d px(u(rng), u(rng));
    const Eigen::Vector3d omega(w(rng), w(rng), w(rng));
    const double t = 0.02;
    const auto a = cm::warp_event(px, t, omega, k);
    const auto b = cm::warp_event(px, t / 2, 2 * omega, k);
    REQUIRE(a);
    REQUIRE(b);
    CHECK((*a - *b).norm() < 1e-10);
  }
}
