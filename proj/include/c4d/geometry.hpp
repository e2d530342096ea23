#pragma once

#include <optional>

#include "c4d/types.hpp"

namespace c4d {

// Pixel convention: (i, j) = (column, row), pixel centers at integer
// coordinates. Camera ray at pixel (i, j): K^-1 (i, j, 1).

Pointmap unproject(const DepthMap& depth, const Intrinsics& K,
                   const CameraPose& pose);

struct Projection {
  Grid<Vec2> pixels;
  Grid<double> depths;
  Grid<uint8_t> in_front;
};

// Project a single world point. Returns (pixel, camera depth).
inline std::pair<Vec2, double> project_point(const Vec3& world,
                                             const Intrinsics& K,
                                             const CameraPose& pose) {
  const Vec3 cam = pose.rotation.conjugate() * (world - pose.translation);
  const Vec2 px(K.fx * cam.x() / cam.z() + K.cx,
                K.fy * cam.y() / cam.z() + K.cy);
  return {px, cam.z()};
}

Projection project(const Grid<Vec3>& world_points, const Intrinsics& K,
                   const CameraPose& pose);

FlowField ego_flow(const DepthMap& depth_t, const Intrinsics& K_t,
                   const CameraPose& pose_t, const CameraPose& pose_tp,
                   const Intrinsics& K_tp, int frame_t, int frame_tp);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

// Weighted Umeyama: minimizes sum w_i || dst_i - (s R src_i + t) ||^2.
// Empty weights = uniform. s = 1 when with_scale is false.
Similarity umeyama_align(const std::vector<Vec3>& src,
                         const std::vector<Vec3>& dst,
                         const std::vector<double>& weights, bool with_scale);

// Bilinear sample of a vector-valued grid; invalid when any of the four
// neighbors is out of bounds or flagged invalid.
template <typename T>
std::optional<T> bilinear_sample(const Grid<T>& grid, const Vec2& pos,
                                 const Grid<uint8_t>* validity = nullptr) {
  const int x0 = static_cast<int>(std::floor(pos.x()));
  const int y0 = static_cast<int>(std::floor(pos.y()));
  const int x1 = x0 + 1;
  const int y1 = y0 + 1;
  if (!grid.in_bounds(x0, y0) || !grid.in_bounds(x1, y1)) return std::nullopt;
  if (validity && (!(*validity).at(x0, y0) || !(*validity).at(x1, y0) ||
                   !(*validity).at(x0, y1) || !(*validity).at(x1, y1)))
    return std::nullopt;
  const double ax = pos.x() - x0;
  const double ay = pos.y() - y0;
  return (1 - ax) * (1 - ay) * grid.at(x0, y0) +
         ax * (1 - ay) * grid.at(x1, y0) +
         (1 - ax) * ay * grid.at(x0, y1) + ax * ay * grid.at(x1, y1);
}

// d(R(q) v)/dq for unit q, columns ordered (w, x, y, z).
Eigen::Matrix<double, 3, 4> rotate_point_jacobian(const Quat& q, const Vec3& v);

// d(R(q)^T v)/dq, same column order.
Eigen::Matrix<double, 3, 4> rotate_point_transpose_jacobian(const Quat& q,
                                                            const Vec3& v);

// Chain dL/dR (3x3) to dL/dq for unit q.
Vec4 rotation_matrix_grad_to_quat(const Quat& q, const Mat3& dL_dR);

// Camera resection from dense pixel <-> world correspondences (DLT with
// Hartley normalization). Returns intrinsics and the camera-to-world pose.
struct Resection {
  Intrinsics K;
  CameraPose pose;  // camera-to-world
};
Resection dlt_resection(const std::vector<Vec2>& pixels,
                        const std::vector<Vec3>& world);

}  // namespace c4d
