#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "c4d/error.hpp"
#include "c4d/grid.hpp"

namespace c4d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate(int width, int height) const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw Error(ErrorCode::InvalidInput, "intrinsics: focal must be > 0");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
      throw Error(ErrorCode::InvalidInput,
                  "intrinsics: principal point outside image");
  }
};

// Camera-to-world transform: X_world = R * X_cam + t.
struct CameraPose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const {
    if (std::abs(rotation.norm() - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidInput, "pose: quaternion not unit norm");
  }
};

struct DepthMap {
  Grid<double> values;
  Grid<uint8_t> validity;

  DepthMap() = default;
  DepthMap(int w, int h) : values(w, h, 0.0), validity(w, h, 0) {}

  void validate() const {
    if (values.width() != validity.width() ||
        values.height() != validity.height())
      throw Error(ErrorCode::ShapeMismatch, "depth: value/validity shape");
    for (size_t i = 0; i < values.size(); ++i) {
      if (validity[i] && !(values[i] > 0.0 && std::isfinite(values[i])))
        throw Error(ErrorCode::ValidationFailure,
                    "depth: valid entry not positive finite at index " +
                        std::to_string(i));
    }
  }
};

enum class PointmapFrame { PairLocal, World };

struct Pointmap {
  Grid<Vec3> points;
  PointmapFrame frame_tag = PointmapFrame::World;

  Pointmap() = default;
  Pointmap(int w, int h, PointmapFrame tag)
      : points(w, h, Vec3::Zero()), frame_tag(tag) {}
};

struct ConfidenceMap {
  Grid<double> values;

  ConfidenceMap() = default;
  ConfidenceMap(int w, int h, double fill = 1.0) : values(w, h, fill) {}

  void validate() const {
    for (size_t i = 0; i < values.size(); ++i)
      if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
        throw Error(ErrorCode::ValidationFailure,
                    "confidence: negative or non-finite entry");
  }
};

// Pointmaps of both frames of edge (n, m), expressed in frame n's camera.
struct PairPrediction {
  int n = 0;
  int m = 0;
  Pointmap pointmap_n;
  Pointmap pointmap_m;
  ConfidenceMap conf_n;
  ConfidenceMap conf_m;

  void validate() const {
    if (n == m) throw Error(ErrorCode::InvalidInput, "pair: n == m");
    const int w = pointmap_n.points.width();
    const int h = pointmap_n.points.height();
    if (!pointmap_m.points.same_shape(w, h) ||
        !conf_n.values.same_shape(w, h) || !conf_m.values.same_shape(w, h))
      throw Error(ErrorCode::ShapeMismatch, "pair: grid shapes differ");
  }
};

struct FlowField {
  int from = 0;
  int to = 0;
  Grid<Vec2> displacement;
  Grid<uint8_t> validity;

  FlowField() = default;
  FlowField(int from_, int to_, int w, int h)
      : from(from_), to(to_),
        displacement(w, h, Vec2::Zero()), validity(w, h, 0) {}

  void validate() const {
    if (from == to) throw Error(ErrorCode::InvalidInput, "flow: from == to");
    if (displacement.width() != validity.width() ||
        displacement.height() != validity.height())
      throw Error(ErrorCode::ShapeMismatch, "flow: shape mismatch");
    for (size_t i = 0; i < displacement.size(); ++i)
      if (validity[i] && !displacement[i].allFinite())
        throw Error(ErrorCode::ValidationFailure,
                    "flow: non-finite valid displacement");
  }
};

// N long-term tracks over T frames.
struct TrackSet {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<Vec2> positions;      // N*T, row-major (track, frame)
  std::vector<uint8_t> visibility;  // N*T
  std::vector<double> confidence;   // N*T, in [0,1]
  std::vector<uint8_t> mobility;    // N*T, true = dynamic in world coords
  std::vector<int> query_frame;     // N

  size_t idx(int track, int frame) const {
    return static_cast<size_t>(track) * num_frames + frame;
  }

  void resize(int n, int t) {
    num_tracks = n;
    num_frames = t;
    positions.assign(static_cast<size_t>(n) * t, Vec2::Zero());
    visibility.assign(static_cast<size_t>(n) * t, 0);
    confidence.assign(static_cast<size_t>(n) * t, 1.0);
    mobility.assign(static_cast<size_t>(n) * t, 0);
    query_frame.assign(n, 0);
  }

  void validate() const {
    const size_t nt = static_cast<size_t>(num_tracks) * num_frames;
    if (positions.size() != nt || visibility.size() != nt ||
        confidence.size() != nt || mobility.size() != nt ||
        query_frame.size() != static_cast<size_t>(num_tracks))
      throw Error(ErrorCode::ShapeMismatch, "tracks: inconsistent shapes");
    for (size_t i = 0; i < nt; ++i) {
      if (visibility[i] && !positions[i].allFinite())
        throw Error(ErrorCode::ValidationFailure,
                    "tracks: non-finite visible position");
      if (confidence[i] < 0.0 || confidence[i] > 1.0)
        throw Error(ErrorCode::ValidationFailure,
                    "tracks: confidence outside [0,1]");
    }
  }
};

struct MotionMask {
  int frame = 0;
  Grid<uint8_t> dynamic;  // true = moving in world coordinates

  MotionMask() = default;
  MotionMask(int frame_, int w, int h) : frame(frame_), dynamic(w, h, 0) {}
};

struct SceneGraph {
  int num_frames = 0;
  std::vector<std::pair<int, int>> edges;  // (n, m), n < m, sorted by (n, m-n)
  int window = 1;
  int stride = 1;

  bool has_edge(int n, int m) const {
    for (const auto& e : edges)
      if (e.first == n && e.second == m) return true;
    return false;
  }
};

// build_scene_graph: edges (i, i+d) for d in {1} ∪ {k*stride <= window}.
SceneGraph build_scene_graph(int num_frames, int window, int stride);

Mat4 pose_to_world_from_camera(const CameraPose& pose);
Mat4 pose_to_camera_from_world(const CameraPose& pose);
CameraPose pose_from_matrix(const Mat4& world_from_camera);
CameraPose pose_inverse(const CameraPose& pose);
// a ∘ b: apply b first, then a.
CameraPose pose_compose(const CameraPose& a, const CameraPose& b);

// The optimizable state. Depth is stored as log-depth, per-edge scale as
// log sigma; positivity holds by construction.
struct SceneEstimate {
  int width = 0;
  int height = 0;
  int num_frames = 0;

  std::vector<std::vector<double>> log_depth;   // T x (H*W)
  std::vector<Grid<uint8_t>> depth_validity;    // T
  std::vector<double> focal;                    // T (fx = fy)
  double cx = 0.0;
  double cy = 0.0;
  std::vector<CameraPose> poses;                // T, camera-to-world

  std::vector<std::pair<int, int>> edges;       // mirrors SceneGraph order
  std::vector<double> log_sigma;                // per edge
  std::vector<CameraPose> edge_pose;            // per edge, pair-local-to-world

  void init(int w, int h, int t, const SceneGraph& graph) {
    width = w;
    height = h;
    num_frames = t;
    log_depth.assign(t, std::vector<double>(static_cast<size_t>(w) * h, 0.0));
    depth_validity.assign(t, Grid<uint8_t>(w, h, 1));
    focal.assign(t, 1.0);
    cx = (w - 1) / 2.0;
    cy = (h - 1) / 2.0;
    poses.assign(t, CameraPose{});
    edges = graph.edges;
    log_sigma.assign(edges.size(), 0.0);
    edge_pose.assign(edges.size(), CameraPose{});
  }

  DepthMap depth_map(int t) const {
    DepthMap d(width, height);
    for (size_t i = 0; i < d.values.size(); ++i) {
      d.values[i] = std::exp(log_depth[t][i]);
      d.validity[i] = depth_validity[t][i];
    }
    return d;
  }

  Intrinsics intrinsics(int t) const {
    return Intrinsics{focal[t], focal[t], cx, cy};
  }

  // Loss-preserving gauge projection: shift sum(log sigma) to zero and
  // rescale depths and camera translations by the compensating factor.
  void project_gauge() {
    if (log_sigma.empty()) return;
    double mean = 0.0;
    for (double s : log_sigma) mean += s;
    mean /= static_cast<double>(log_sigma.size());
    if (mean == 0.0) return;
    for (double& s : log_sigma) s -= mean;
    const double factor = std::exp(-mean);
    for (auto& ld : log_depth)
      for (double& v : ld) v -= mean;
    for (auto& p : poses) p.translation *= factor;
  }

  void renormalize_quaternions() {
    for (auto& p : poses) p.rotation.normalize();
    for (auto& p : edge_pose) p.rotation.normalize();
  }
};

}  // namespace c4d
