#pragma once

#include <vector>

#include "c4d/types.hpp"

namespace c4d {

// N tracks over a window of T_w frames, lifted to world coordinates.
struct Trajectory3D {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<Vec3> points;        // N * T_w
  std::vector<uint8_t> visibility;  // N * T_w

  size_t idx(int track, int frame) const {
    return static_cast<size_t>(track) * num_frames + frame;
  }

  void resize(int n, int t) {
    num_tracks = n;
    num_frames = t;
    points.assign(static_cast<size_t>(n) * t, Vec3::Zero());
    visibility.assign(static_cast<size_t>(n) * t, 0);
  }
};

struct SmoothingConfig {
  int kernel_size = 5;   // uniform kernel, odd
  double decay = 1.0;    // weight decay lambda
  int window = 20;       // non-overlapping retained window, frames
  int pad = 5;           // extension on each end
  int lbd_k = 4;         // nearest control points
  double lbd_eps = 1e-8;

  void validate() const {
    if (kernel_size % 2 == 0 || kernel_size < 1)
      throw Error(ErrorCode::InvalidInput, "kernel size must be odd");
    if (window < kernel_size)
      throw Error(ErrorCode::InvalidInput, "window must be >= kernel size");
    if (lbd_k < 1) throw Error(ErrorCode::InvalidInput, "lbd_k must be >= 1");
  }
};

// Tracks visible at every frame of [begin, end).
std::vector<int> select_window_tracks(const TrackSet& tracks, int begin,
                                      int end);

// Bilinear sample of the per-frame world pointmaps at the 2D positions.
// Samples that fall outside the grid (or on invalid pixels) are marked
// invisible.
Trajectory3D lift_tracks(const TrackSet& tracks,
                         const std::vector<int>& track_indices, int begin,
                         int end, const std::vector<Grid<Vec3>>& pointmaps,
                         const std::vector<Grid<uint8_t>>* validity = nullptr);

// Adaptive-weight moving average: per-frame weights exp(-lambda * step norm),
// uniform kernel, replicate padding of both signal and weights.
Trajectory3D smooth_trajectories(const Trajectory3D& traj,
                                 const SmoothingConfig& cfg);

// Inverse-distance blend of control displacements onto the queries using the
// lbd_k nearest controls. A query within lbd_eps (squared) of a control
// copies that control's displacement exactly.
std::vector<Vec3> lbd_transform(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& controls,
                                const std::vector<Vec3>& displacements,
                                const SmoothingConfig& cfg);

// k-NN indices of each query into the control set (exposed so that a caller
// can cache them across LBD evaluations).
std::vector<std::vector<int>> lbd_knn_indices(const std::vector<Vec3>& queries,
                                              const std::vector<Vec3>& controls,
                                              int k);

std::vector<Vec3> lbd_transform_with_indices(
    const std::vector<Vec3>& queries, const std::vector<Vec3>& controls,
    const std::vector<Vec3>& displacements,
    const std::vector<std::vector<int>>& knn, const SmoothingConfig& cfg);

// Cached structure for repeated smoothed-pointmap evaluation during stage 2.
struct PtsCache {
  bool valid = false;
  // Per window: selected track indices.
  std::vector<std::vector<int>> window_tracks;
  // Per frame: per-pixel k-NN indices into that frame's control set.
  std::vector<std::vector<std::vector<int>>> frame_knn;
};

// Smoothed pointmap targets for every frame: non-overlapping windows of
// cfg.window extended by cfg.pad, per-window track selection, lifting,
// smoothing, and LBD densification. Windows without eligible tracks fall
// back to the current pointmaps (identity target).
std::vector<Grid<Vec3>> smoothed_pointmaps(const SceneEstimate& state,
                                           const TrackSet& tracks,
                                           const SmoothingConfig& cfg,
                                           PtsCache* cache = nullptr,
                                           bool refresh_cache = true);

}  // namespace c4d
