#include "c4d/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "c4d/geometry.hpp"
#include "c4d/objectives.hpp"

namespace c4d {

std::vector<int> select_window_tracks(const TrackSet& tracks, int begin,
                                      int end) {
  if (begin < 0 || end > tracks.num_frames || begin >= end)
    throw Error(ErrorCode::InvalidInput, "window outside video bounds");
  std::vector<int> out;
  for (int n = 0; n < tracks.num_tracks; ++n) {
    bool all = true;
    for (int t = begin; t < end && all; ++t)
      all = tracks.visibility[tracks.idx(n, t)] != 0;
    if (all) out.push_back(n);
  }
  return out;
}

Trajectory3D lift_tracks(const TrackSet& tracks,
                         const std::vector<int>& track_indices, int begin,
                         int end, const std::vector<Grid<Vec3>>& pointmaps,
                         const std::vector<Grid<uint8_t>>* validity) {
  Trajectory3D traj;
  traj.resize(static_cast<int>(track_indices.size()), end - begin);
  for (size_t a = 0; a < track_indices.size(); ++a) {
    const int n = track_indices[a];
    for (int t = begin; t < end; ++t) {
      const size_t k = tracks.idx(n, t);
      if (!tracks.visibility[k]) continue;
      const auto p = bilinear_sample(pointmaps[t], tracks.positions[k],
                                     validity ? &(*validity)[t] : nullptr);
      if (!p) continue;
      traj.points[traj.idx(static_cast<int>(a), t - begin)] = *p;
      traj.visibility[traj.idx(static_cast<int>(a), t - begin)] = 1;
    }
  }
  return traj;
}

Trajectory3D smooth_trajectories(const Trajectory3D& traj,
                                 const SmoothingConfig& cfg) {
  cfg.validate();
  const int tw = traj.num_frames;
  Trajectory3D out = traj;
  if (tw < 2) return out;
  const int half = cfg.kernel_size / 2;

  std::vector<double> w(tw);
  for (int n = 0; n < traj.num_tracks; ++n) {
    // Weight at frame t reflects the step into t (shifted by one, first
    // frame replicated).
    for (int t = 0; t < tw; ++t) {
      const int d = std::max(t, 1);
      const double step =
          (traj.points[traj.idx(n, d)] - traj.points[traj.idx(n, d - 1)])
              .norm();
      w[t] = std::exp(-cfg.decay * step);
    }
    for (int t = 0; t < tw; ++t) {
      Vec3 num = Vec3::Zero();
      double den = 0.0;
      for (int o = -half; o <= half; ++o) {
        const int s = std::clamp(t + o, 0, tw - 1);  // replicate padding
        num += w[s] * traj.points[traj.idx(n, s)];
        den += w[s];
      }
      out.points[out.idx(n, t)] = num / den;
    }
  }
  return out;
}

std::vector<std::vector<int>> lbd_knn_indices(const std::vector<Vec3>& queries,
                                              const std::vector<Vec3>& controls,
                                              int k) {
  if (controls.empty())
    throw Error(ErrorCode::InvalidInput, "LBD: empty control set");
  const int kk = std::min<int>(k, static_cast<int>(controls.size()));
  std::vector<std::vector<int>> out(queries.size());
  std::vector<std::pair<double, int>> dist(controls.size());
  for (size_t q = 0; q < queries.size(); ++q) {
    for (size_t c = 0; c < controls.size(); ++c)
      dist[c] = {(queries[q] - controls[c]).squaredNorm(),
                 static_cast<int>(c)};
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    out[q].resize(kk);
    for (int i = 0; i < kk; ++i) out[q][i] = dist[i].second;
  }
  return out;
}

std::vector<Vec3> lbd_transform_with_indices(
    const std::vector<Vec3>& queries, const std::vector<Vec3>& controls,
    const std::vector<Vec3>& displacements,
    const std::vector<std::vector<int>>& knn, const SmoothingConfig& cfg) {
  if (controls.size() != displacements.size())
    throw Error(ErrorCode::InvalidInput, "LBD: control/displacement mismatch");
  std::vector<Vec3> out(queries.size());
  for (size_t q = 0; q < queries.size(); ++q) {
    const std::vector<int>& nn = knn[q];
    double best_d2 = std::numeric_limits<double>::infinity();
    int best_c = -1;
    double wsum = 0.0;
    Vec3 blend = Vec3::Zero();
    for (int c : nn) {
      const double d2 = (queries[q] - controls[c]).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_c = c;
      }
      const double wi = 1.0 / (d2 + cfg.lbd_eps);
      wsum += wi;
      blend += wi * displacements[c];
    }
    if (best_d2 < cfg.lbd_eps) {
      out[q] = queries[q] + displacements[best_c];  // coincidence snap
    } else {
      out[q] = queries[q] + blend / wsum;
    }
  }
  return out;
}

std::vector<Vec3> lbd_transform(const std::vector<Vec3>& queries,
                                const std::vector<Vec3>& controls,
                                const std::vector<Vec3>& displacements,
                                const SmoothingConfig& cfg) {
  return lbd_transform_with_indices(
      queries, controls, displacements,
      lbd_knn_indices(queries, controls, cfg.lbd_k), cfg);
}

std::vector<Grid<Vec3>> smoothed_pointmaps(const SceneEstimate& state,
                                           const TrackSet& tracks,
                                           const SmoothingConfig& cfg,
                                           PtsCache* cache,
                                           bool refresh_cache) {
  cfg.validate();
  const int t_count = state.num_frames;
  const std::vector<Grid<Vec3>> current = world_pointmaps(state);
  std::vector<Grid<Vec3>> targets = current;

  const bool use_cache = cache && cache->valid && !refresh_cache;
  if (cache && !use_cache) {
    cache->window_tracks.clear();
    cache->frame_knn.assign(t_count, {});
  }

  int window_index = 0;
  for (int w0 = 0; w0 < t_count; w0 += cfg.window, ++window_index) {
    const int w1 = std::min(w0 + cfg.window, t_count);
    const int e0 = std::max(0, w0 - cfg.pad);
    const int e1 = std::min(t_count, w1 + cfg.pad);

    std::vector<int> selected;
    if (use_cache) {
      selected = cache->window_tracks[window_index];
    } else {
      selected = select_window_tracks(tracks, e0, e1);
      if (cache) cache->window_tracks.push_back(selected);
    }
    if (selected.empty()) {
      std::cerr << "c4d: window [" << w0 << "," << w1
                << ") has no fully visible tracks; identity target\n";
      continue;
    }

    Trajectory3D lifted = lift_tracks(tracks, selected, e0, e1, current,
                                      &state.depth_validity);
    // Keep only tracks whose samples are valid at every window frame.
    std::vector<int> complete;
    for (int a = 0; a < lifted.num_tracks; ++a) {
      bool all = true;
      for (int t = 0; t < lifted.num_frames && all; ++t)
        all = lifted.visibility[lifted.idx(a, t)] != 0;
      if (all) complete.push_back(a);
    }
    if (complete.empty()) {
      std::cerr << "c4d: window [" << w0 << "," << w1
                << ") has no liftable tracks; identity target\n";
      continue;
    }
    if (complete.size() != static_cast<size_t>(lifted.num_tracks)) {
      Trajectory3D filtered;
      filtered.resize(static_cast<int>(complete.size()), lifted.num_frames);
      for (size_t a = 0; a < complete.size(); ++a)
        for (int t = 0; t < lifted.num_frames; ++t) {
          filtered.points[filtered.idx(static_cast<int>(a), t)] =
              lifted.points[lifted.idx(complete[a], t)];
          filtered.visibility[filtered.idx(static_cast<int>(a), t)] = 1;
        }
      lifted = std::move(filtered);
    }

    const Trajectory3D smoothed = smooth_trajectories(lifted, cfg);

    for (int t = w0; t < w1; ++t) {
      const int lt = t - e0;
      std::vector<Vec3> controls(lifted.num_tracks);
      std::vector<Vec3> displacements(lifted.num_tracks);
      for (int a = 0; a < lifted.num_tracks; ++a) {
        controls[a] = lifted.points[lifted.idx(a, lt)];
        displacements[a] =
            smoothed.points[smoothed.idx(a, lt)] - controls[a];
      }

      std::vector<Vec3> queries;
      std::vector<size_t> pixel_index;
      const Grid<uint8_t>& dv = state.depth_validity[t];
      for (size_t k = 0; k < dv.size(); ++k) {
        if (!dv[k]) continue;
        queries.push_back(current[t][k]);
        pixel_index.push_back(k);
      }
      if (queries.empty()) continue;

      std::vector<std::vector<int>>* knn_ptr = nullptr;
      std::vector<std::vector<int>> knn_local;
      if (use_cache) {
        knn_ptr = &cache->frame_knn[t];
      } else {
        knn_local = lbd_knn_indices(queries, controls, cfg.lbd_k);
        if (cache) {
          cache->frame_knn[t] = std::move(knn_local);
          knn_ptr = &cache->frame_knn[t];
        } else {
          knn_ptr = &knn_local;
        }
      }
      const std::vector<Vec3> moved = lbd_transform_with_indices(
          queries, controls, displacements, *knn_ptr, cfg);
      for (size_t q = 0; q < moved.size(); ++q)
        targets[t][pixel_index[q]] = moved[q];
    }
  }
  if (cache && !use_cache) cache->valid = true;
  return targets;
}

}  // namespace c4d
