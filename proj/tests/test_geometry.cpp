#include <doctest.h>

#include <random>

#include "c4d/geometry.hpp"

using namespace c4d;

namespace {

std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

CameraPose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  CameraPose p;
  p.rotation = Quat(nd(rng), nd(rng), nd(rng), nd(rng)).normalized();
  p.translation = Vec3(nd(rng), nd(rng), nd(rng));
  return p;
}

}  // namespace

TEST_CASE("unproject at identity reproduces the pixel ray") {
  DepthMap d(8, 6);
  for (size_t i = 0; i < d.values.size(); ++i) {
    d.values[i] = 1.0;
    d.validity[i] = 1;
  }
  Intrinsics k{1, 1, 0, 0};
  Pointmap pm = unproject(d, k, CameraPose{});
  CHECK((pm.points.at(3, 2) - Vec3(3, 2, 1)).norm() < 1e-15);

  CameraPose shifted;
  shifted.translation = Vec3(1, 2, 3);
  pm = unproject(d, k, shifted);
  CHECK((pm.points.at(3, 2) - Vec3(4, 4, 4)).norm() < 1e-15);
}

TEST_CASE("unproject matches the homogeneous matrix oracle") {
  auto rng = make_rng(17);
  std::uniform_real_distribution<double> ud(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    DepthMap d(5, 4);
    for (size_t i = 0; i < d.values.size(); ++i) {
      d.values[i] = ud(rng);
      d.validity[i] = 1;
    }
    Intrinsics k{ud(rng) * 20, ud(rng) * 20, 2.0, 1.5};
    CameraPose pose = random_pose(rng);
    Pointmap pm = unproject(d, k, pose);
    Mat4 m = pose_to_world_from_camera(pose);
    Mat3 kinv = Mat3::Zero();
    kinv(0, 0) = 1.0 / k.fx;
    kinv(1, 1) = 1.0 / k.fy;
    kinv(0, 2) = -k.cx / k.fx;
    kinv(1, 2) = -k.cy / k.fy;
    kinv(2, 2) = 1.0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        const double depth = d.values.at(x, y);
        Eigen::Vector4d h;
        h.head<3>() = kinv * Vec3(x * depth, y * depth, depth);
        h(3) = 1.0;
        const Vec3 want = (m * h).head<3>();
        CHECK((pm.points.at(x, y) - want).norm() < 1e-10);
      }
  }
}

TEST_CASE("project inverts unproject on the pixel grid") {
  auto rng = make_rng(23);
  std::uniform_real_distribution<double> ud(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    DepthMap d(6, 5);
    for (size_t i = 0; i < d.values.size(); ++i) {
      d.values[i] = ud(rng);
      d.validity[i] = 1;
    }
    Intrinsics k{30 + ud(rng), 30 + ud(rng), 2.5, 2.0};
    CameraPose pose = random_pose(rng);
    Projection pr = project(unproject(d, k, pose).points, k, pose);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        CHECK(pr.in_front.at(x, y));
        CHECK((pr.pixels.at(x, y) - Vec2(x, y)).norm() < 1e-8);
        CHECK(pr.depths.at(x, y) == doctest::Approx(d.values.at(x, y)).epsilon(1e-10));
      }
  }
  // on-axis point
  auto [px, z] = project_point(Vec3(0, 0, 2), Intrinsics{100, 100, 50, 50},
                               CameraPose{});
  CHECK((px - Vec2(50, 50)).norm() < 1e-12);
  CHECK(z == doctest::Approx(2.0));
}

TEST_CASE("ego flow of a static camera is zero and planar parallax is uniform") {
  DepthMap d(8, 6);
  const double z0 = 2.5;
  for (size_t i = 0; i < d.values.size(); ++i) {
    d.values[i] = z0;
    d.validity[i] = 1;
  }
  Intrinsics k{40, 40, 3.5, 2.5};
  CameraPose a;  // identity
  FlowField zero = ego_flow(d, k, a, a, k, 0, 1);
  for (size_t i = 0; i < zero.displacement.size(); ++i) {
    CHECK(zero.validity[i]);
    CHECK(zero.displacement[i].norm() < 1e-12);
  }

  CameraPose b;
  b.translation = Vec3(0.3, 0, 0);  // camera moves +x
  FlowField f = ego_flow(d, k, a, b, k, 0, 1);
  const Vec2 want(-k.fx * 0.3 / z0, 0.0);
  for (size_t i = 0; i < f.displacement.size(); ++i)
    CHECK((f.displacement[i] - want).norm() < 1e-10);
}

TEST_CASE("umeyama recovers exact similarity transforms") {
  auto rng = make_rng(31);
  std::normal_distribution<double> nd;
  std::vector<Vec3> src(50);
  for (auto& p : src) p = Vec3(nd(rng), nd(rng), nd(rng));

  Similarity self = umeyama_align(src, src, {}, true);
  CHECK(self.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((self.rotation - Mat3::Identity()).norm() < 1e-10);
  CHECK(self.translation.norm() < 1e-10);

  std::vector<Vec3> doubled(src.size());
  for (size_t i = 0; i < src.size(); ++i) doubled[i] = 2.0 * src[i];
  Similarity sc = umeyama_align(src, doubled, {}, true);
  CHECK(sc.scale == doctest::Approx(2.0).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    Similarity gt;
    gt.scale = 0.3 + 2.0 * std::abs(nd(rng));
    gt.rotation = Quat(nd(rng), nd(rng), nd(rng), nd(rng))
                      .normalized()
                      .toRotationMatrix();
    gt.translation = Vec3(nd(rng), nd(rng), nd(rng));
    std::vector<Vec3> dst(src.size());
    for (size_t i = 0; i < src.size(); ++i) dst[i] = gt.apply(src[i]);
    Similarity rec = umeyama_align(src, dst, {}, true);
    CHECK(std::abs(rec.scale - gt.scale) < 1e-10);
    CHECK((rec.rotation - gt.rotation).norm() < 1e-10);
    CHECK((rec.translation - gt.translation).norm() < 1e-9);
  }

  CHECK_THROWS_AS(umeyama_align({Vec3(0, 0, 0), Vec3(1, 1, 1)},
                                {Vec3(0, 0, 0), Vec3(1, 1, 1)}, {}, true),
                  Error);
}

TEST_CASE("bilinear sampling interpolates and flags out-of-bounds") {
  Grid<double> g(3, 3, 0.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) g.at(x, y) = x + 10.0 * y;
  CHECK(*bilinear_sample(g, Vec2(1, 1)) == doctest::Approx(11.0));
  CHECK(*bilinear_sample(g, Vec2(0.5, 0.5)) == doctest::Approx(5.5));
  CHECK(*bilinear_sample(g, Vec2(1.25, 0.0)) == doctest::Approx(1.25));
  CHECK(!bilinear_sample(g, Vec2(2.5, 0.5)).has_value());
  CHECK(!bilinear_sample(g, Vec2(-0.5, 0.5)).has_value());
  Grid<uint8_t> valid(3, 3, 1);
  valid.at(2, 2) = 0;
  CHECK(!bilinear_sample(g, Vec2(1.5, 1.5), &valid).has_value());
  CHECK(bilinear_sample(g, Vec2(0.5, 0.5), &valid).has_value());
}

TEST_CASE("quaternion rotation jacobians match finite differences") {
  auto rng = make_rng(41);
  std::normal_distribution<double> nd;
  const double h = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    Quat q = Quat(nd(rng), nd(rng), nd(rng), nd(rng)).normalized();
    Vec3 v(nd(rng), nd(rng), nd(rng));
    auto j = rotate_point_jacobian(q, v);
    auto jt = rotate_point_transpose_jacobian(q, v);
    for (int c = 0; c < 4; ++c) {
      Vec4 coeff(q.w(), q.x(), q.y(), q.z());
      Vec4 plus = coeff, minus = coeff;
      plus(c) += h;
      minus(c) -= h;
      // The analytic jacobian is defined for unit quaternions, so compare
      // directional derivatives along tangent directions of the unit sphere.
      auto rotn = [&](const Vec4& cw) {
        Quat qq = Quat(cw(0), cw(1), cw(2), cw(3)).normalized();
        return Vec3(qq.toRotationMatrix() * v);
      };
      const Vec3 fd = (rotn(plus) - rotn(minus)) / (2 * h);
      Vec4 e = Vec4::Zero();
      e(c) = 1.0;
      const Vec4 qc(q.w(), q.x(), q.y(), q.z());
      const Vec4 et = e - qc * qc.dot(e);
      const Vec3 want = j * et;
      CHECK((want - fd).norm() < 1e-5 * std::max(1.0, fd.norm()));

      auto rotnt = [&](const Vec4& cw) {
        Quat qq = Quat(cw(0), cw(1), cw(2), cw(3)).normalized();
        return Vec3(qq.toRotationMatrix().transpose() * v);
      };
      const Vec3 fdt = (rotnt(plus) - rotnt(minus)) / (2 * h);
      const Vec3 wantt = jt * et;
      CHECK((wantt - fdt).norm() < 1e-5 * std::max(1.0, fdt.norm()));
    }
  }
}

TEST_CASE("dlt resection recovers pose and intrinsics from exact points") {
  auto rng = make_rng(53);
  std::uniform_real_distribution<double> ud(0.5, 4.0);
  DepthMap d(10, 8);
  for (size_t i = 0; i < d.values.size(); ++i) {
    d.values[i] = ud(rng);
    d.validity[i] = 1;
  }
  Intrinsics k{45, 45, 4.5, 3.5};
  CameraPose pose = random_pose(rng);
  Pointmap pm = unproject(d, k, pose);
  std::vector<Vec2> pixels;
  std::vector<Vec3> world;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) {
      pixels.emplace_back(x, y);
      world.push_back(pm.points.at(x, y));
    }
  Resection r = dlt_resection(pixels, world);
  CHECK(r.K.fx == doctest::Approx(k.fx).epsilon(1e-6));
  CHECK(r.K.fy == doctest::Approx(k.fy).epsilon(1e-6));
  CHECK((r.pose.translation - pose.translation).norm() < 1e-6);
  CHECK(r.pose.rotation.angularDistance(pose.rotation) < 1e-6);
}
