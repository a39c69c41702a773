#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <random>

#include "semtraj/geometry.hpp"
#include "semtraj/triangulation.hpp"

using namespace semtraj;

namespace {

// Five cameras on a ring, all aimed at the origin region.
Rig ring_rig() {
  Rig rig;
  const int n = 5;
  for (int i = 0; i < n; ++i) {
    Camera c;
    c.id = i;
    c.intrinsics = {900.0, 900.0, 640.0, 512.0};
    c.width = 1280;
    c.height = 1024;
    const double a = 2.0 * M_PI * i / n;
    c.center = Eigen::Vector3d(2.0 * std::cos(a), 2.0 * std::sin(a), 1.0);
    // Look at the point (0,0,1): build a right-handed frame with +z toward
    // the target.
    const Eigen::Vector3d fwd = (Eigen::Vector3d(0, 0, 1) - c.center).normalized();
    Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ());
    if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
    right.normalize();
    const Eigen::Vector3d down = fwd.cross(right).normalized();
    Eigen::Matrix3d R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = fwd.transpose();
    c.rotation = R;
    rig.cameras.push_back(c);
  }
  rig.frame_rate = 30.0;
  return rig;
}

std::vector<Observation> project_all(const Rig& rig, const Eigen::Vector3d& X) {
  std::vector<Observation> obs;
  for (const Camera& c : rig.cameras) {
    const auto p = c.project(X);
    REQUIRE(p.has_value());
    REQUIRE(c.in_bounds(*p));
    obs.push_back({c.id, *p, 0});
  }
  return obs;
}

}  // namespace

TEST_SUITE("triangulation") {

TEST_CASE("noiseless five-view round trip recovers the point to 1e-6") {
  const Rig rig = ring_rig();
  const Eigen::Vector3d truth(0.21, -0.34, 1.13);
  const auto obs = project_all(rig, truth);

  const auto result = triangulate(rig, obs, RansacParams{});
  REQUIRE(result.has_value());
  CHECK((result->point - truth).norm() < 1e-6);
  CHECK(result->inliers.size() == obs.size());
}

TEST_CASE("dlt alone recovers a noiseless point") {
  const Rig rig = ring_rig();
  const Eigen::Vector3d truth(-0.4, 0.1, 0.9);
  const auto obs = project_all(rig, truth);
  const auto point = triangulate_dlt(rig, obs);
  REQUIRE(point.has_value());
  CHECK((*point - truth).norm() < 1e-6);
}

TEST_CASE("gross outliers are excluded and the inlier set is exact") {
  const Rig rig = ring_rig();
  const Eigen::Vector3d truth(0.05, 0.3, 1.4);
  auto obs = project_all(rig, truth);
  // Two gross outliers 50 px off, duplicated views of cameras 0 and 2.
  Observation bad0 = obs[0];
  bad0.pixel += Eigen::Vector2d(50.0, 0.0);
  Observation bad2 = obs[2];
  bad2.pixel += Eigen::Vector2d(-35.0, 35.0);
  obs[0] = bad0;
  obs[2] = bad2;

  const auto result = triangulate(rig, obs, RansacParams{});
  REQUIRE(result.has_value());
  CHECK((result->point - truth).norm() < 1e-6);
  CHECK(result->inliers == std::vector<int>({1, 3, 4}));
}

TEST_CASE("noisy observations with outliers still localize within 3 sigma") {
  const Rig rig = ring_rig();
  const Eigen::Vector3d truth(0.0, 0.0, 1.2);
  auto obs = project_all(rig, truth);
  std::mt19937_64 gen(99);
  std::normal_distribution<double> px(0.0, 0.5);
  for (auto& ob : obs) ob.pixel += Eigen::Vector2d(px(gen), px(gen));
  // Plant two gross outliers.
  obs[1].pixel += Eigen::Vector2d(50.0, -20.0);
  obs[4].pixel += Eigen::Vector2d(0.0, 60.0);

  const auto result = triangulate(rig, obs, RansacParams{});
  REQUIRE(result.has_value());
  // 0.5 px noise at ~900 px focal and ~2.3 m range: 3 sigma is a loose 5 mm.
  CHECK((result->point - truth).norm() < 5e-3);
  CHECK(result->inliers == std::vector<int>({0, 2, 3}));
}

TEST_CASE("parallel rays are degenerate") {
  // Two cameras side by side with identical orientation, observing the same
  // pixel: rays never converge.
  Rig rig;
  for (int i = 0; i < 2; ++i) {
    Camera c;
    c.id = i;
    c.intrinsics = {1000.0, 1000.0, 640.0, 512.0};
    c.width = 1280;
    c.height = 1024;
    c.rotation = Eigen::Matrix3d::Identity();
    c.center = Eigen::Vector3d(0.2 * i, 0.0, 0.0);
    rig.cameras.push_back(c);
  }
  std::vector<Observation> obs{
      {0, Eigen::Vector2d(640.0, 512.0), 0},
      {1, Eigen::Vector2d(640.0, 512.0), 0},
  };
  CHECK_FALSE(triangulate(rig, obs, RansacParams{}).has_value());
}

TEST_CASE("fewer than two observations is degenerate") {
  const Rig rig = ring_rig();
  std::vector<Observation> obs{{0, Eigen::Vector2d(640.0, 512.0), 0}};
  CHECK_FALSE(triangulate(rig, obs, RansacParams{}).has_value());
}

TEST_CASE("refinement never loses inliers") {
  const Rig rig = ring_rig();
  std::mt19937_64 gen(1234);
  std::normal_distribution<double> px(0.0, 1.0);
  std::uniform_real_distribution<double> pos(-0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d truth(pos(gen), pos(gen), 1.0 + 0.5 * pos(gen));
    auto obs = project_all(rig, truth);
    for (auto& ob : obs) ob.pixel += Eigen::Vector2d(px(gen), px(gen));

    const auto dlt = triangulate_dlt(rig, obs);
    REQUIRE(dlt.has_value());
    std::vector<int> before;
    for (size_t i = 0; i < obs.size(); ++i) {
      const auto p = rig.cameras[obs[i].camera_id].project(*dlt);
      if (p && (*p - obs[i].pixel).norm() < 2.0) {
        before.push_back(static_cast<int>(i));
      }
    }
    const Eigen::Vector3d refined = refine_point(rig, obs, before, *dlt);
    size_t after = 0;
    for (size_t i = 0; i < obs.size(); ++i) {
      const auto p = rig.cameras[obs[i].camera_id].project(refined);
      if (p && (*p - obs[i].pixel).norm() < 2.0) ++after;
    }
    CHECK(after >= before.size());
  }
}

TEST_CASE("ransac is deterministic for a fixed seed") {
  const Rig rig = ring_rig();
  const Eigen::Vector3d truth(0.1, 0.2, 1.1);
  auto obs = project_all(rig, truth);
  obs[0].pixel += Eigen::Vector2d(42.0, 0.0);

  const auto a = triangulate(rig, obs, RansacParams{}, 555);
  const auto b = triangulate(rig, obs, RansacParams{}, 555);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->point == b->point);
  CHECK(a->inliers == b->inliers);
}

}  // TEST_SUITE
