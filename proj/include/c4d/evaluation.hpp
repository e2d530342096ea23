#pragma once

#include <vector>

#include "c4d/geometry.hpp"
#include "c4d/types.hpp"

namespace c4d {

struct PoseMetrics {
  double ate = 0.0;          // scene units
  double rpe_trans = 0.0;    // scene units
  double rpe_rot_deg = 0.0;  // degrees
};

struct DepthMetrics {
  double abs_rel = 0.0;
  double rmse = 0.0;
  double delta_125 = 0.0;
};

struct TapMetrics {
  double aj = 0.0;
  double delta_avg = 0.0;
  double oa = 0.0;
};

struct MetricsReport {
  PoseMetrics pose;
  DepthMetrics depth_scale;        // per-sequence median-ratio scale
  DepthMetrics depth_scale_shift;  // per-sequence least-squares scale+shift
  double mask_iou = 0.0;
  double d_acc = 0.0;
  TapMetrics tap;
};

// Sim(3) alignment of estimated camera centers to ground truth, then RMSE.
double ate(const std::vector<CameraPose>& est,
           const std::vector<CameraPose>& gt,
           Similarity* alignment = nullptr);

// Per-step relative pose error at the given frame delta. Estimated
// translations are pre-scaled by the Sim(3) scale from the ATE alignment.
std::pair<double, double> rpe(const std::vector<CameraPose>& est,
                              const std::vector<CameraPose>& gt,
                              int delta = 1);

enum class DepthAlignment { Scale, ScaleShift };

DepthMetrics depth_metrics(const std::vector<DepthMap>& est,
                           const std::vector<DepthMap>& gt,
                           DepthAlignment mode);

// |pred & gt| / |pred | gt|; 1.0 when both masks are empty.
double mask_iou(const MotionMask& pred, const MotionMask& gt);

// Confusion-matrix accuracy of mobility over visible entries.
double d_acc(const TrackSet& pred, const TrackSet& gt);

// TAP-style metrics, positions rescaled to the 256x256 evaluation
// convention. Thresholds {1,2,4,8,16} px.
TapMetrics tap_metrics(const TrackSet& pred, const TrackSet& gt, int width,
                       int height);

}  // namespace c4d
