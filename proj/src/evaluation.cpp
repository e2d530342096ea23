#include "c4d/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace c4d {

namespace {

double median_of(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

Similarity align_centers(const std::vector<CameraPose>& est,
                         const std::vector<CameraPose>& gt) {
  std::vector<Vec3> src(est.size()), dst(gt.size());
  for (size_t i = 0; i < est.size(); ++i) src[i] = est[i].translation;
  for (size_t i = 0; i < gt.size(); ++i) dst[i] = gt[i].translation;
  try {
    return umeyama_align(src, dst, {}, true);
  } catch (const Error&) {
    // Collinear trajectory: scale from spread, translation from means. Any
    // residual rotation about the common axis does not move the centers.
    std::cerr << "c4d: degenerate trajectory, SE(3)+spread-scale fallback\n";
    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (const Vec3& p : src) mu_s += p;
    for (const Vec3& p : dst) mu_d += p;
    mu_s /= double(src.size());
    mu_d /= double(dst.size());
    double vs = 0.0, vd = 0.0;
    for (const Vec3& p : src) vs += (p - mu_s).squaredNorm();
    for (const Vec3& p : dst) vd += (p - mu_d).squaredNorm();
    Similarity sim;
    sim.scale = vs > 1e-30 ? std::sqrt(vd / vs) : 1.0;
    // Rotation aligning the principal directions of the two point sets.
    Mat3 cov = Mat3::Zero();
    for (size_t i = 0; i < src.size(); ++i)
      cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 s_diag = Vec3::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
      s_diag(2) = -1.0;
    sim.rotation =
        svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
    sim.translation = mu_d - sim.scale * (sim.rotation * mu_s);
    return sim;
  }
}

}  // namespace

double ate(const std::vector<CameraPose>& est,
           const std::vector<CameraPose>& gt, Similarity* alignment) {
  if (est.size() != gt.size() || est.size() < 3)
    throw Error(ErrorCode::InvalidInput, "ATE: need equal length >= 3");
  const Similarity sim = align_centers(est, gt);
  if (alignment) *alignment = sim;
  double sum = 0.0;
  for (size_t i = 0; i < est.size(); ++i)
    sum += (gt[i].translation - sim.apply(est[i].translation)).squaredNorm();
  return std::sqrt(sum / double(est.size()));
}

std::pair<double, double> rpe(const std::vector<CameraPose>& est,
                              const std::vector<CameraPose>& gt, int delta) {
  if (est.size() != gt.size() ||
      est.size() < static_cast<size_t>(delta) + 1)
    throw Error(ErrorCode::InvalidInput, "RPE: need length >= delta+1");
  Similarity sim;
  ate(est, gt, &sim);

  std::vector<CameraPose> scaled = est;
  for (auto& p : scaled) p.translation *= sim.scale;

  double sum_t = 0.0, sum_r = 0.0;
  size_t n = 0;
  for (size_t i = 0; i + delta < est.size(); ++i, ++n) {
    const CameraPose rel_gt =
        pose_compose(pose_inverse(gt[i]), gt[i + delta]);
    const CameraPose rel_est =
        pose_compose(pose_inverse(scaled[i]), scaled[i + delta]);
    const CameraPose err = pose_compose(pose_inverse(rel_gt), rel_est);
    sum_t += err.translation.squaredNorm();
    const double angle =
        2.0 * std::atan2(err.rotation.vec().norm(), std::abs(err.rotation.w()));
    sum_r += angle * angle;
  }
  const double rad2deg = 180.0 / 3.14159265358979323846;
  return {std::sqrt(sum_t / double(n)), rad2deg * std::sqrt(sum_r / double(n))};
}

DepthMetrics depth_metrics(const std::vector<DepthMap>& est,
                           const std::vector<DepthMap>& gt,
                           DepthAlignment mode) {
  if (est.size() != gt.size() || est.empty())
    throw Error(ErrorCode::InvalidInput, "depth metrics: sequence mismatch");

  // One global alignment over all valid pixels of the sequence.
  double s = 1.0, b = 0.0;
  {
    std::vector<double> ratios;
    double see = 0.0, seg = 0.0, se = 0.0, sg = 0.0;
    size_t n = 0;
    for (size_t t = 0; t < est.size(); ++t) {
      if (!est[t].values.same_shape(gt[t].values.width(),
                                    gt[t].values.height()))
        throw Error(ErrorCode::ShapeMismatch, "depth metrics: frame shape");
      for (size_t k = 0; k < est[t].values.size(); ++k) {
        if (!est[t].validity[k] || !gt[t].validity[k]) continue;
        const double de = est[t].values[k];
        const double dg = gt[t].values[k];
        if (mode == DepthAlignment::Scale) {
          ratios.push_back(dg / de);
        } else {
          see += de * de;
          seg += de * dg;
          se += de;
          sg += dg;
          ++n;
        }
      }
    }
    if (mode == DepthAlignment::Scale) {
      if (ratios.empty())
        throw Error(ErrorCode::InvalidInput, "depth metrics: no valid pixels");
      s = median_of(std::move(ratios));
    } else {
      if (n == 0)
        throw Error(ErrorCode::InvalidInput, "depth metrics: no valid pixels");
      const double det = see * double(n) - se * se;
      if (std::abs(det) < 1e-30)
        throw Error(ErrorCode::DegenerateConfiguration,
                    "depth metrics: singular scale-shift system");
      s = (seg * double(n) - se * sg) / det;
      b = (see * sg - se * seg) / det;
    }
  }

  DepthMetrics out;
  size_t frames = 0;
  for (size_t t = 0; t < est.size(); ++t) {
    double abs_rel = 0.0, sq = 0.0, inlier = 0.0;
    size_t n = 0;
    for (size_t k = 0; k < est[t].values.size(); ++k) {
      if (!est[t].validity[k] || !gt[t].validity[k]) continue;
      const double dh = s * est[t].values[k] + b;
      const double dg = gt[t].values[k];
      abs_rel += std::abs(dh - dg) / dg;
      sq += (dh - dg) * (dh - dg);
      if (dh > 0.0 && std::max(dh / dg, dg / dh) < 1.25) inlier += 1.0;
      ++n;
    }
    if (n == 0) continue;
    out.abs_rel += abs_rel / double(n);
    out.rmse += std::sqrt(sq / double(n));
    out.delta_125 += inlier / double(n);
    ++frames;
  }
  if (frames == 0)
    throw Error(ErrorCode::InvalidInput, "depth metrics: no valid frames");
  out.abs_rel /= double(frames);
  out.rmse /= double(frames);
  out.delta_125 /= double(frames);
  return out;
}

double mask_iou(const MotionMask& pred, const MotionMask& gt) {
  if (!pred.dynamic.same_shape(gt.dynamic.width(), gt.dynamic.height()))
    throw Error(ErrorCode::ShapeMismatch, "mask IoU: shape mismatch");
  size_t inter = 0, uni = 0;
  for (size_t k = 0; k < pred.dynamic.size(); ++k) {
    const bool p = pred.dynamic[k] != 0;
    const bool g = gt.dynamic[k] != 0;
    if (p && g) ++inter;
    if (p || g) ++uni;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double d_acc(const TrackSet& pred, const TrackSet& gt) {
  if (pred.num_tracks != gt.num_tracks || pred.num_frames != gt.num_frames)
    throw Error(ErrorCode::ShapeMismatch, "D-ACC: shape mismatch");
  size_t correct = 0, total = 0;
  for (size_t k = 0; k < gt.mobility.size(); ++k) {
    if (!gt.visibility[k]) continue;
    ++total;
    if ((pred.mobility[k] != 0) == (gt.mobility[k] != 0)) ++correct;
  }
  if (total == 0)
    throw Error(ErrorCode::InvalidInput, "D-ACC: no visible entries");
  return double(correct) / double(total);
}

TapMetrics tap_metrics(const TrackSet& pred, const TrackSet& gt, int width,
                       int height) {
  if (pred.num_tracks != gt.num_tracks || pred.num_frames != gt.num_frames)
    throw Error(ErrorCode::ShapeMismatch, "TAP metrics: shape mismatch");
  const double sx = 256.0 / width;
  const double sy = 256.0 / height;
  const double thresholds[] = {1.0, 2.0, 4.0, 8.0, 16.0};

  TapMetrics out;
  size_t oa_correct = 0;
  const size_t total = gt.visibility.size();
  for (size_t k = 0; k < total; ++k)
    if ((pred.visibility[k] != 0) == (gt.visibility[k] != 0)) ++oa_correct;
  out.oa = total ? double(oa_correct) / double(total) : 0.0;

  for (double thr : thresholds) {
    size_t within = 0, gt_vis = 0;
    size_t inter = 0, uni = 0;
    for (size_t k = 0; k < total; ++k) {
      const Vec2 d((pred.positions[k].x() - gt.positions[k].x()) * sx,
                   (pred.positions[k].y() - gt.positions[k].y()) * sy);
      const bool close = d.norm() < thr;
      const bool in_a = pred.visibility[k] && close;
      const bool in_b = gt.visibility[k] != 0;
      if (in_b) {
        ++gt_vis;
        if (close) ++within;
      }
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
    out.delta_avg += gt_vis ? double(within) / double(gt_vis) : 0.0;
    out.aj += uni ? double(inter) / double(uni) : 1.0;
  }
  out.delta_avg /= 5.0;
  out.aj /= 5.0;
  return out;
}

}  // namespace c4d
