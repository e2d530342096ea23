#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "c4d/types.hpp"

namespace c4d {

// Rank-2, unit-Frobenius-norm fundamental matrix.
struct FundamentalMatrix {
  Mat3 f = Mat3::Zero();
};

// Force rank 2 and unit Frobenius norm, with a deterministic sign convention
// (largest-magnitude entry positive).
FundamentalMatrix normalize_fundamental(const Mat3& f);

struct Correspondence {
  Vec2 x;   // pixel in the first image
  Vec2 xp;  // pixel in the second image
};

// Sampson error in squared pixels. Returns +inf when the denominator
// degenerates (point at both epipoles).
double sampson_error(const FundamentalMatrix& f, const Vec2& x, const Vec2& xp);

struct RobustFit {
  FundamentalMatrix f;
  std::vector<uint8_t> inliers;
  double robust_scale = 0.0;     // pixels
  double median_residual = 0.0;  // squared pixels
};

struct LmedsConfig {
  int max_samples = 1177;  // 99% success at 50% outliers for 8-point samples
  uint64_t seed = 0;
};

RobustFit estimate_fundamental_lmeds(const std::vector<Correspondence>& corrs,
                                     const LmedsConfig& cfg);

struct MaskConfig {
  double theta_abs = 1.0;  // absolute residual floor, pixels
  double kappa = 3.0;      // multiple of the robust scale
  bool median_filter = true;
  int lmeds_max_samples = 1177;
  uint64_t seed = 0;
};

struct PairMaskResult {
  Grid<double> error_map;  // Sampson error per valid-flow pixel, squared px
  Grid<uint8_t> raw_mask;
  RobustFit fit;
  bool used_mobility = true;  // false when the static-point fallback fired
  bool all_static_fallback = false;
};

// Fit F on the static (mobility = false) track correspondences through the
// given flow, then threshold the dense Sampson error map.
PairMaskResult motion_mask_for_pair(const FlowField& flow,
                                    const TrackSet& tracks,
                                    const MaskConfig& cfg);

// Union of the per-pair raw masks over every graph edge containing t,
// followed by an optional 3x3 median filter.
MotionMask motion_mask_for_frame(
    int t, const SceneGraph& graph,
    const std::map<std::pair<int, int>, FlowField>& flows,
    const TrackSet& tracks, const MaskConfig& cfg);

std::vector<MotionMask> motion_masks_all_frames(
    const SceneGraph& graph,
    const std::map<std::pair<int, int>, FlowField>& flows,
    const TrackSet& tracks, const MaskConfig& cfg, int workers = 1);

}  // namespace c4d
