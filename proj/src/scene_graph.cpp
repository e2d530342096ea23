#include <algorithm>

#include "c4d/types.hpp"

namespace c4d {

SceneGraph build_scene_graph(int num_frames, int window, int stride) {
  if (num_frames < 2)
    throw Error(ErrorCode::InvalidInput, "scene graph needs T >= 2");
  if (window < 1 || stride < 1)
    throw Error(ErrorCode::InvalidInput, "window and stride must be >= 1");

  std::vector<int> offsets{1};
  for (int d = stride; d <= window; d += stride)
    if (d != 1) offsets.push_back(d);
  std::sort(offsets.begin(), offsets.end());

  SceneGraph g;
  g.num_frames = num_frames;
  g.window = window;
  g.stride = stride;
  for (int i = 0; i < num_frames; ++i)
    for (int d : offsets)
      if (i + d < num_frames) g.edges.emplace_back(i, i + d);
  std::sort(g.edges.begin(), g.edges.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first < b.first;
              return a.second - a.first < b.second - b.first;
            });
  return g;
}

Mat4 pose_to_world_from_camera(const CameraPose& pose) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = pose.rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = pose.translation;
  return m;
}

Mat4 pose_to_camera_from_world(const CameraPose& pose) {
  Mat4 m = Mat4::Identity();
  const Mat3 rt = pose.rotation.toRotationMatrix().transpose();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * pose.translation;
  return m;
}

CameraPose pose_from_matrix(const Mat4& world_from_camera) {
  CameraPose p;
  p.rotation = Quat(Mat3(world_from_camera.topLeftCorner<3, 3>()));
  p.rotation.normalize();
  p.translation = world_from_camera.topRightCorner<3, 1>();
  return p;
}

CameraPose pose_inverse(const CameraPose& pose) {
  CameraPose p;
  p.rotation = pose.rotation.conjugate();
  p.translation = -(p.rotation * pose.translation);
  return p;
}

CameraPose pose_compose(const CameraPose& a, const CameraPose& b) {
  CameraPose p;
  p.rotation = a.rotation * b.rotation;
  p.rotation.normalize();
  p.translation = a.rotation * b.translation + a.translation;
  return p;
}

}  // namespace c4d
