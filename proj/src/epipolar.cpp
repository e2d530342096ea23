#include "c4d/epipolar.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <atomic>
#include <limits>
#include <map>
#include <thread>

#include "c4d/geometry.hpp"
#include "c4d/rng.hpp"

namespace c4d {

namespace {

double median_of(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

// Normalized 8-point solve over the given correspondence subset. Returns
// false when the linear system is rank-deficient.
bool eight_point(const std::vector<Correspondence>& corrs,
                 const std::vector<int>& idx, Mat3* out) {
  Vec2 mu1 = Vec2::Zero(), mu2 = Vec2::Zero();
  for (int i : idx) {
    mu1 += corrs[i].x;
    mu2 += corrs[i].xp;
  }
  mu1 /= double(idx.size());
  mu2 /= double(idx.size());
  double s1 = 0.0, s2 = 0.0;
  for (int i : idx) {
    s1 += (corrs[i].x - mu1).norm();
    s2 += (corrs[i].xp - mu2).norm();
  }
  if (s1 < 1e-12 || s2 < 1e-12) return false;
  s1 = std::sqrt(2.0) * idx.size() / s1;
  s2 = std::sqrt(2.0) * idx.size() / s2;

  Eigen::MatrixXd a(idx.size(), 9);
  for (size_t r = 0; r < idx.size(); ++r) {
    const Vec2 p = s1 * (corrs[idx[r]].x - mu1);
    const Vec2 q = s2 * (corrs[idx[r]].xp - mu2);
    a.row(r) << q.x() * p.x(), q.x() * p.y(), q.x(), q.y() * p.x(),
        q.y() * p.y(), q.y(), p.x(), p.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // For a minimal 8-point sample the system must have exactly a 1-D
  // nullspace; a tiny second-smallest singular value means degeneracy.
  if (idx.size() == 8 && sv(7) < 1e-10 * std::max(sv(0), 1e-30)) return false;
  const Eigen::VectorXd fvec = svd.matrixV().col(8);
  Mat3 fn;
  fn << fvec(0), fvec(1), fvec(2), fvec(3), fvec(4), fvec(5), fvec(6), fvec(7),
      fvec(8);

  Mat3 t1 = Mat3::Identity(), t2 = Mat3::Identity();
  t1(0, 0) = t1(1, 1) = s1;
  t1(0, 2) = -s1 * mu1.x();
  t1(1, 2) = -s1 * mu1.y();
  t2(0, 0) = t2(1, 1) = s2;
  t2(0, 2) = -s2 * mu2.x();
  t2(1, 2) = -s2 * mu2.y();
  *out = t2.transpose() * fn * t1;
  return out->allFinite();
}

}  // namespace

FundamentalMatrix normalize_fundamental(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sv = svd.singularValues();
  sv(2) = 0.0;
  Mat3 r = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
  const double norm = r.norm();
  if (norm < 1e-300)
    throw Error(ErrorCode::DegenerateConfiguration, "zero fundamental matrix");
  r /= norm;
  // Deterministic sign: largest-magnitude entry positive.
  int mi = 0, mj = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(r(i, j)) > best) {
        best = std::abs(r(i, j));
        mi = i;
        mj = j;
      }
  if (r(mi, mj) < 0) r = -r;
  return FundamentalMatrix{r};
}

double sampson_error(const FundamentalMatrix& f, const Vec2& x,
                     const Vec2& xp) {
  const Vec3 xh(x.x(), x.y(), 1.0);
  const Vec3 xph(xp.x(), xp.y(), 1.0);
  const Vec3 fx = f.f * xh;
  const Vec3 ftxp = f.f.transpose() * xph;
  const double num = xph.dot(fx);
  const double den =
      fx(0) * fx(0) + fx(1) * fx(1) + ftxp(0) * ftxp(0) + ftxp(1) * ftxp(1);
  if (den < 1e-18) return std::numeric_limits<double>::infinity();
  return num * num / den;
}

RobustFit estimate_fundamental_lmeds(const std::vector<Correspondence>& corrs,
                                     const LmedsConfig& cfg) {
  const int n = static_cast<int>(corrs.size());
  if (n < 8)
    throw Error(ErrorCode::InsufficientData,
                "LMedS needs >= 8 correspondences, got " + std::to_string(n));

  // Sample count for 99% success probability at the 50% breakdown point.
  const int needed = static_cast<int>(
      std::ceil(std::log(1.0 - 0.99) / std::log(1.0 - std::pow(0.5, 8))));
  const int num_samples = std::min(cfg.max_samples, needed);

  Rng rng(cfg.seed);
  std::vector<int> pool(n);
  std::vector<int> sample(8);
  std::vector<double> residuals(n);

  double best_median = std::numeric_limits<double>::infinity();
  FundamentalMatrix best_f;
  bool found = false;

  for (int s = 0; s < num_samples; ++s) {
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int k = 0; k < 8; ++k) {
      const int pick = k + static_cast<int>(rng.uniform_index(n - k));
      std::swap(pool[k], pool[pick]);
      sample[k] = pool[k];
    }
    Mat3 fraw;
    if (!eight_point(corrs, sample, &fraw)) continue;
    FundamentalMatrix f;
    try {
      f = normalize_fundamental(fraw);
    } catch (const Error&) {
      continue;
    }
    for (int i = 0; i < n; ++i)
      residuals[i] = sampson_error(f, corrs[i].x, corrs[i].xp);
    const double med = median_of(residuals);
    if (med < best_median) {
      best_median = med;
      best_f = f;
      found = true;
    }
  }
  if (!found)
    throw Error(ErrorCode::DegenerateConfiguration,
                "all LMedS samples were rank-deficient");

  RobustFit fit;
  fit.median_residual = best_median;
  fit.robust_scale =
      1.4826 * (1.0 + 5.0 / (n - 8)) * std::sqrt(std::max(best_median, 0.0));
  const double thresh = std::max(2.5 * fit.robust_scale, 1e-9);
  fit.inliers.assign(n, 0);
  std::vector<int> inlier_idx;
  for (int i = 0; i < n; ++i) {
    const double e = sampson_error(best_f, corrs[i].x, corrs[i].xp);
    if (std::sqrt(e) < thresh) {
      fit.inliers[i] = 1;
      inlier_idx.push_back(i);
    }
  }
  if (inlier_idx.size() < 8)
    throw Error(ErrorCode::DegenerateConfiguration,
                "fewer than 8 LMedS inliers");

  Mat3 refit;
  fit.f = best_f;
  if (eight_point(corrs, inlier_idx, &refit)) {
    try {
      fit.f = normalize_fundamental(refit);
    } catch (const Error&) {
      // keep the LMedS-best estimate
    }
  }
  return fit;
}

PairMaskResult motion_mask_for_pair(const FlowField& flow,
                                    const TrackSet& tracks,
                                    const MaskConfig& cfg) {
  const int t = flow.from;
  if (t < 0 || t >= tracks.num_frames)
    throw Error(ErrorCode::InvalidInput, "tracks do not cover frame");
  const int w = flow.displacement.width();
  const int h = flow.displacement.height();

  bool any_valid = false;
  for (size_t i = 0; i < flow.validity.size(); ++i)
    if (flow.validity[i]) {
      any_valid = true;
      break;
    }
  if (!any_valid)
    throw Error(ErrorCode::InvalidInput, "flow field has no valid pixels");

  auto gather = [&](bool static_only) {
    std::vector<Correspondence> corrs;
    for (int j = 0; j < tracks.num_tracks; ++j) {
      const size_t k = tracks.idx(j, t);
      if (!tracks.visibility[k]) continue;
      if (static_only && tracks.mobility[k]) continue;
      const Vec2 p = tracks.positions[k];
      const auto d = bilinear_sample(flow.displacement, p, &flow.validity);
      if (!d) continue;
      corrs.push_back({p, p + *d});
    }
    return corrs;
  };

  PairMaskResult res;
  res.error_map = Grid<double>(w, h, 0.0);
  res.raw_mask = Grid<uint8_t>(w, h, 0);

  std::vector<Correspondence> corrs = gather(true);
  if (corrs.size() < 8) {
    corrs = gather(false);
    res.used_mobility = false;
  }
  if (corrs.size() < 8) {
    // Conservative fallback: an all-static mask degrades toward plain
    // global alignment instead of dropping the frame.
    res.all_static_fallback = true;
    return res;
  }

  LmedsConfig lcfg;
  lcfg.max_samples = cfg.lmeds_max_samples;
  lcfg.seed = cfg.seed;
  res.fit = estimate_fundamental_lmeds(corrs, lcfg);

  const double thresh = std::max(cfg.theta_abs, cfg.kappa * res.fit.robust_scale);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!flow.validity.at(i, j)) continue;
      const Vec2 p(i, j);
      const double e = sampson_error(res.fit.f, p, p + flow.displacement.at(i, j));
      res.error_map.at(i, j) = e;
      if (std::sqrt(e) > thresh) res.raw_mask.at(i, j) = 1;
    }
  }
  return res;
}

namespace {
Grid<uint8_t> median_filter_3x3(const Grid<uint8_t>& in) {
  Grid<uint8_t> out(in.width(), in.height(), 0);
  for (int j = 0; j < in.height(); ++j) {
    for (int i = 0; i < in.width(); ++i) {
      int count = 0, set = 0;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (!in.in_bounds(i + di, j + dj)) continue;
          ++count;
          if (in.at(i + di, j + dj)) ++set;
        }
      out.at(i, j) = 2 * set > count ? 1 : 0;
    }
  }
  return out;
}
}  // namespace

MotionMask motion_mask_for_frame(
    int t, const SceneGraph& graph,
    const std::map<std::pair<int, int>, FlowField>& flows,
    const TrackSet& tracks, const MaskConfig& cfg) {
  std::vector<int> neighbors;
  for (const auto& [n, m] : graph.edges) {
    if (n == t) neighbors.push_back(m);
    if (m == t) neighbors.push_back(n);
  }
  if (neighbors.empty())
    throw Error(ErrorCode::InvalidInput, "frame not covered by the graph");

  MotionMask mask;
  mask.frame = t;
  bool first = true;
  for (int tp : neighbors) {
    auto it = flows.find({t, tp});
    if (it == flows.end())
      throw Error(ErrorCode::MissingEntry,
                  "flow_" + std::to_string(t) + "_" + std::to_string(tp));
    MaskConfig pair_cfg = cfg;
    pair_cfg.seed = cfg.seed * 1000003ULL + uint64_t(t) * 4096 + uint64_t(tp);
    const PairMaskResult r = motion_mask_for_pair(it->second, tracks, pair_cfg);
    if (first) {
      mask.dynamic = r.raw_mask;
      first = false;
    } else {
      for (size_t i = 0; i < mask.dynamic.size(); ++i)
        mask.dynamic[i] = mask.dynamic[i] || r.raw_mask[i];
    }
  }
  if (cfg.median_filter) mask.dynamic = median_filter_3x3(mask.dynamic);
  return mask;
}

std::vector<MotionMask> motion_masks_all_frames(
    const SceneGraph& graph,
    const std::map<std::pair<int, int>, FlowField>& flows,
    const TrackSet& tracks, const MaskConfig& cfg, int workers) {
  const int t_count = graph.num_frames;
  std::vector<MotionMask> masks(t_count);
  if (workers <= 1) {
    for (int t = 0; t < t_count; ++t)
      masks[t] = motion_mask_for_frame(t, graph, flows, tracks, cfg);
    return masks;
  }
  std::vector<std::thread> threads;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  for (int wkr = 0; wkr < workers; ++wkr) {
    threads.emplace_back([&, wkr] {
      try {
        for (int t = next.fetch_add(1); t < t_count; t = next.fetch_add(1))
          masks[t] = motion_mask_for_frame(t, graph, flows, tracks, cfg);
      } catch (...) {
        errors[wkr] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return masks;
}

}  // namespace c4d
