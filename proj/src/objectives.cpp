#include "c4d/objectives.hpp"

#include <cmath>

#include "c4d/geometry.hpp"

namespace c4d {

namespace {

constexpr double kNormEps = 1e-15;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void add_vec3(std::vector<double>& g, size_t off, const Vec3& v) {
  g[off] += v.x();
  g[off + 1] += v.y();
  g[off + 2] += v.z();
}

void add_vec4(std::vector<double>& g, size_t off, const Vec4& v) {
  for (int i = 0; i < 4; ++i) g[off + i] += v(i);
}

// Accumulators for one frame / one edge; converted to quaternion gradients
// once per term to keep the per-pixel work cheap.
struct PoseAccum {
  Mat3 dR = Mat3::Zero();
  Vec3 dT = Vec3::Zero();
  double dF = 0.0;

  void flush_frame(const SceneEstimate& s, const ParamLayout& lay, int t,
                   double scale, std::vector<double>& g) {
    add_vec4(g, lay.quat_offset(t),
             scale * rotation_matrix_grad_to_quat(s.poses[t].rotation, dR));
    add_vec3(g, lay.trans_offset(t), scale * dT);
    g[lay.focal_offset(t)] += scale * dF;
  }
};

void project_quat_tangent(const SceneEstimate& s, const ParamLayout& lay,
                          std::vector<double>& g) {
  auto project = [&](size_t off, const Quat& q) {
    const Vec4 qv(q.w(), q.x(), q.y(), q.z());
    Vec4 gv(g[off], g[off + 1], g[off + 2], g[off + 3]);
    gv -= gv.dot(qv) * qv;
    for (int i = 0; i < 4; ++i) g[off + i] = gv(i);
  };
  for (int t = 0; t < lay.num_frames; ++t)
    project(lay.quat_offset(t), s.poses[t].rotation);
  for (int e = 0; e < lay.num_edges; ++e)
    project(lay.edge_quat_offset(e), s.edge_pose[e].rotation);
}

}  // namespace

void state_to_params(const SceneEstimate& s, std::vector<double>* params) {
  const ParamLayout lay(s);
  params->assign(lay.total(), 0.0);
  std::vector<double>& p = *params;
  for (int t = 0; t < s.num_frames; ++t) {
    std::copy(s.log_depth[t].begin(), s.log_depth[t].end(),
              p.begin() + lay.log_depth_offset(t));
    p[lay.focal_offset(t)] = s.focal[t];
    const Quat& q = s.poses[t].rotation;
    p[lay.quat_offset(t)] = q.w();
    p[lay.quat_offset(t) + 1] = q.x();
    p[lay.quat_offset(t) + 2] = q.y();
    p[lay.quat_offset(t) + 3] = q.z();
    for (int i = 0; i < 3; ++i)
      p[lay.trans_offset(t) + i] = s.poses[t].translation(i);
  }
  for (size_t e = 0; e < s.edges.size(); ++e) {
    p[lay.log_sigma_offset(e)] = s.log_sigma[e];
    const Quat& q = s.edge_pose[e].rotation;
    p[lay.edge_quat_offset(e)] = q.w();
    p[lay.edge_quat_offset(e) + 1] = q.x();
    p[lay.edge_quat_offset(e) + 2] = q.y();
    p[lay.edge_quat_offset(e) + 3] = q.z();
    for (int i = 0; i < 3; ++i)
      p[lay.edge_trans_offset(e) + i] = s.edge_pose[e].translation(i);
  }
}

void params_to_state(const std::vector<double>& p, SceneEstimate* state) {
  SceneEstimate& s = *state;
  const ParamLayout lay(s);
  for (int t = 0; t < s.num_frames; ++t) {
    std::copy(p.begin() + lay.log_depth_offset(t),
              p.begin() + lay.log_depth_offset(t) + lay.pixels(),
              s.log_depth[t].begin());
    s.focal[t] = p[lay.focal_offset(t)];
    Quat q(p[lay.quat_offset(t)], p[lay.quat_offset(t) + 1],
           p[lay.quat_offset(t) + 2], p[lay.quat_offset(t) + 3]);
    q.normalize();
    s.poses[t].rotation = q;
    s.poses[t].translation = Vec3(p[lay.trans_offset(t)],
                                  p[lay.trans_offset(t) + 1],
                                  p[lay.trans_offset(t) + 2]);
  }
  for (size_t e = 0; e < s.edges.size(); ++e) {
    s.log_sigma[e] = p[lay.log_sigma_offset(e)];
    Quat q(p[lay.edge_quat_offset(e)], p[lay.edge_quat_offset(e) + 1],
           p[lay.edge_quat_offset(e) + 2], p[lay.edge_quat_offset(e) + 3]);
    q.normalize();
    s.edge_pose[e].rotation = q;
    s.edge_pose[e].translation = Vec3(p[lay.edge_trans_offset(e)],
                                      p[lay.edge_trans_offset(e) + 1],
                                      p[lay.edge_trans_offset(e) + 2]);
  }
}

std::vector<Grid<Vec3>> world_pointmaps(const SceneEstimate& state) {
  std::vector<Grid<Vec3>> out;
  out.reserve(state.num_frames);
  for (int t = 0; t < state.num_frames; ++t)
    out.push_back(unproject(state.depth_map(t), state.intrinsics(t),
                            state.poses[t]).points);
  return out;
}

double loss_ga(const SceneEstimate& state,
               const std::vector<PairPrediction>& pairs,
               const SceneGraph& graph, double weight,
               std::vector<double>* grad) {
  const ParamLayout lay(state);
  if (pairs.size() != graph.edges.size())
    throw Error(ErrorCode::InvalidInput, "GA: pairs do not match the graph");

  double value = 0.0;
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const PairPrediction& pp = pairs[e];
    if (pp.n != graph.edges[e].first || pp.m != graph.edges[e].second)
      throw Error(ErrorCode::InvalidInput, "GA: pair/edge order mismatch");
    const double sigma = std::exp(state.log_sigma[e]);
    const Mat3 Re = state.edge_pose[e].rotation.toRotationMatrix();
    const Vec3 te = state.edge_pose[e].translation;

    for (int side = 0; side < 2; ++side) {
      const int t = side == 0 ? pp.n : pp.m;
      const Pointmap& pm = side == 0 ? pp.pointmap_n : pp.pointmap_m;
      const ConfidenceMap& cm = side == 0 ? pp.conf_n : pp.conf_m;
      const Mat3 Rt = state.poses[t].rotation.toRotationMatrix();
      const Vec3 Tt = state.poses[t].translation;
      const double f = state.focal[t];
      const std::vector<double>& ld = state.log_depth[t];
      const Grid<uint8_t>& dv = state.depth_validity[t];

      size_t n_valid = 0;
      for (size_t i = 0; i < dv.size(); ++i)
        if (dv[i]) ++n_valid;
      if (n_valid == 0) continue;
      const double inv_n = 1.0 / static_cast<double>(n_valid);

      double term = 0.0;
      PoseAccum frame_acc;
      Mat3 dRe = Mat3::Zero();
      Vec3 dte = Vec3::Zero();
      double dls = 0.0;

      size_t k = 0;
      for (int j = 0; j < state.height; ++j) {
        for (int i = 0; i < state.width; ++i, ++k) {
          if (!dv[k]) continue;
          const double d = std::exp(ld[k]);
          const double sx = (i - state.cx) / f * d;
          const double sy = (j - state.cy) / f * d;
          const Vec3 s(sx, sy, d);
          const Vec3 x_world = Rt * s + Tt;
          const Vec3 pred = sigma * (Re * pm.points.at(i, j) + te);
          const Vec3 r = x_world - pred;
          const double nr = r.norm();
          const double c = cm.values.at(i, j);
          term += c * nr;
          if (!grad || nr < kNormEps) continue;
          const Vec3 g = (c / nr) * r;  // scaled by weight * inv_n at flush
          (*grad)[lay.log_depth_offset(t) + k] +=
              weight * inv_n * g.dot(x_world - Tt);
          frame_acc.dF += g.dot(Rt * Vec3(-sx / f, -sy / f, 0.0));
          frame_acc.dT += g;
          frame_acc.dR += g * s.transpose();
          dls -= g.dot(pred);
          dte -= sigma * g;
          dRe -= sigma * g * pm.points.at(i, j).transpose();
        }
      }
      value += term * inv_n;
      if (grad) {
        frame_acc.flush_frame(state, lay, t, weight * inv_n, *grad);
        (*grad)[lay.log_sigma_offset(e)] += weight * inv_n * dls;
        add_vec3(*grad, lay.edge_trans_offset(e), weight * inv_n * dte);
        add_vec4(*grad, lay.edge_quat_offset(e),
                 weight * inv_n *
                     rotation_matrix_grad_to_quat(
                         state.edge_pose[e].rotation, dRe));
      }
    }
  }
  if (grad) project_quat_tangent(state, lay, *grad);
  return value;
}

double loss_cma(const SceneEstimate& state,
                const std::map<std::pair<int, int>, FlowField>& flows,
                const std::vector<MotionMask>& masks, const SceneGraph& graph,
                double weight, std::vector<double>* grad) {
  const ParamLayout lay(state);
  if (static_cast<int>(masks.size()) != state.num_frames)
    throw Error(ErrorCode::InvalidInput, "CMA: mask per frame required");

  double value = 0.0;
  std::vector<double> ld_grad(lay.pixels());
  for (const auto& [n, m] : graph.edges) {
    for (const auto& [t, tp] : {std::pair{n, m}, std::pair{m, n}}) {
      auto it = flows.find({t, tp});
      if (it == flows.end())
        throw Error(ErrorCode::MissingEntry,
                    "flow_" + std::to_string(t) + "_" + std::to_string(tp));
      const FlowField& flow = it->second;

      const Mat3 Rt = state.poses[t].rotation.toRotationMatrix();
      const Vec3 Tt = state.poses[t].translation;
      const double f = state.focal[t];
      const Mat3 Rp = state.poses[tp].rotation.toRotationMatrix();
      const Mat3 Rpt = Rp.transpose();
      const Vec3 Tp = state.poses[tp].translation;
      const double fp = state.focal[tp];
      const std::vector<double>& ld = state.log_depth[t];
      const Grid<uint8_t>& dv = state.depth_validity[t];
      const Grid<uint8_t>& dyn = masks[t].dynamic;

      double term = 0.0;
      size_t n_px = 0;
      PoseAccum acc_t, acc_tp;
      std::fill(ld_grad.begin(), ld_grad.end(), 0.0);

      size_t k = 0;
      for (int j = 0; j < state.height; ++j) {
        for (int i = 0; i < state.width; ++i, ++k) {
          if (!dv[k] || dyn[k] || !flow.validity[k]) continue;
          const double d = std::exp(ld[k]);
          const double sx = (i - state.cx) / f * d;
          const double sy = (j - state.cy) / f * d;
          const Vec3 s(sx, sy, d);
          const Vec3 x_world = Rt * s + Tt;
          const Vec3 v = x_world - Tp;
          const Vec3 y = Rpt * v;
          if (y.z() <= 1e-12) continue;
          const double iz = 1.0 / y.z();
          const Vec2 ego(fp * y.x() * iz + state.cx - i,
                         fp * y.y() * iz + state.cy - j);
          const Vec2 a = ego - flow.displacement[k];
          term += std::abs(a.x()) + std::abs(a.y());
          ++n_px;
          if (!grad) continue;
          const Vec2 g2(sign_of(a.x()), sign_of(a.y()));
          const Vec3 gy(fp * iz * g2.x(), fp * iz * g2.y(),
                        -fp * iz * iz * (y.x() * g2.x() + y.y() * g2.y()));
          acc_tp.dF += g2.x() * y.x() * iz + g2.y() * y.y() * iz;
          acc_tp.dR += v * gy.transpose();
          const Vec3 gX = Rp * gy;
          acc_tp.dT -= gX;
          ld_grad[k] += gX.dot(x_world - Tt);
          acc_t.dF += gX.dot(Rt * Vec3(-sx / f, -sy / f, 0.0));
          acc_t.dT += gX;
          acc_t.dR += gX * s.transpose();
        }
      }
      if (n_px == 0) continue;  // empty static set contributes nothing
      const double inv_n = 1.0 / static_cast<double>(n_px);
      value += term * inv_n;
      if (grad) {
        const double scale = weight * inv_n;
        for (size_t i = 0; i < lay.pixels(); ++i)
          (*grad)[lay.log_depth_offset(t) + i] += scale * ld_grad[i];
        acc_t.flush_frame(state, lay, t, scale, *grad);
        acc_tp.flush_frame(state, lay, tp, scale, *grad);
      }
    }
  }
  if (grad) project_quat_tangent(state, lay, *grad);
  return value;
}

double loss_cts(const SceneEstimate& state, double weight,
                std::vector<double>* grad) {
  const ParamLayout lay(state);
  if (state.num_frames < 2)
    throw Error(ErrorCode::InvalidInput, "CTS needs T >= 2");

  double value = 0.0;
  std::vector<Mat3> dR(state.num_frames, Mat3::Zero());
  std::vector<Vec3> dT(state.num_frames, Vec3::Zero());

  // World-to-camera rotation R_wc = R_cw^T, translation T_wc = -R_cw^T t.
  std::vector<Mat3> Rcw(state.num_frames);
  std::vector<Vec3> Twc(state.num_frames);
  for (int t = 0; t < state.num_frames; ++t) {
    Rcw[t] = state.poses[t].rotation.toRotationMatrix();
    Twc[t] = -Rcw[t].transpose() * state.poses[t].translation;
  }

  for (int t = 0; t + 1 < state.num_frames; ++t) {
    // Rotation term: || R_wc^t^T R_wc^{t+1} - I ||_F = || R_cw^t R_cw^{t+1}^T - I ||_F
    const Mat3 m = Rcw[t] * Rcw[t + 1].transpose();
    const Mat3 diff = m - Mat3::Identity();
    const double fn = diff.norm();
    value += fn;
    if (grad && fn > kNormEps) {
      const Mat3 g = diff / fn;
      dR[t] += g * Rcw[t + 1];
      dR[t + 1] += g.transpose() * Rcw[t];
    }

    // Translation term on world-to-camera translations.
    const Vec3 dt = Twc[t + 1] - Twc[t];
    const double nt = dt.norm();
    value += nt;
    if (grad && nt > kNormEps) {
      const Vec3 gd = dt / nt;
      // T_wc = -R_cw^T tr  =>  dL/dtr = -R_cw g,  dL/dR_cw = -tr g^T
      dT[t + 1] += -Rcw[t + 1] * gd;
      dR[t + 1] += -state.poses[t + 1].translation * gd.transpose();
      dT[t] += Rcw[t] * gd;
      dR[t] += state.poses[t].translation * gd.transpose();
    }
  }
  if (grad) {
    for (int t = 0; t < state.num_frames; ++t) {
      add_vec4(*grad, lay.quat_offset(t),
               weight * rotation_matrix_grad_to_quat(state.poses[t].rotation,
                                                     dR[t]));
      add_vec3(*grad, lay.trans_offset(t), weight * dT[t]);
    }
    project_quat_tangent(state, lay, *grad);
  }
  return value;
}

double loss_pts(const SceneEstimate& state,
                const std::vector<Grid<Vec3>>& targets, double weight,
                std::vector<double>* grad) {
  const ParamLayout lay(state);
  if (static_cast<int>(targets.size()) != state.num_frames)
    throw Error(ErrorCode::InvalidInput, "PTS: one target per frame required");

  double value = 0.0;
  for (int t = 0; t < state.num_frames; ++t) {
    if (!targets[t].same_shape(state.width, state.height))
      throw Error(ErrorCode::ShapeMismatch, "PTS target shape");
    const Mat3 Rt = state.poses[t].rotation.toRotationMatrix();
    const Vec3 Tt = state.poses[t].translation;
    const double f = state.focal[t];
    const std::vector<double>& ld = state.log_depth[t];
    const Grid<uint8_t>& dv = state.depth_validity[t];

    size_t n_valid = 0;
    for (size_t i = 0; i < dv.size(); ++i)
      if (dv[i]) ++n_valid;
    if (n_valid == 0) continue;
    const double inv_n = 1.0 / static_cast<double>(n_valid);

    double term = 0.0;
    PoseAccum acc;
    size_t k = 0;
    for (int j = 0; j < state.height; ++j) {
      for (int i = 0; i < state.width; ++i, ++k) {
        if (!dv[k]) continue;
        const double d = std::exp(ld[k]);
        const double sx = (i - state.cx) / f * d;
        const double sy = (j - state.cy) / f * d;
        const Vec3 s(sx, sy, d);
        const Vec3 x_world = Rt * s + Tt;
        const Vec3 r = x_world - targets[t][k];
        term += std::abs(r.x()) + std::abs(r.y()) + std::abs(r.z());
        if (!grad) continue;
        const Vec3 g(sign_of(r.x()), sign_of(r.y()), sign_of(r.z()));
        (*grad)[lay.log_depth_offset(t) + k] +=
            weight * inv_n * g.dot(x_world - Tt);
        acc.dF += g.dot(Rt * Vec3(-sx / f, -sy / f, 0.0));
        acc.dT += g;
        acc.dR += g * s.transpose();
      }
    }
    value += term * inv_n;
    if (grad) acc.flush_frame(state, lay, t, weight * inv_n, *grad);
  }
  if (grad) project_quat_tangent(state, lay, *grad);
  return value;
}

LossReport total_loss(const SceneEstimate& state, const ObjectiveData& data,
                      const LossWeights& weights, bool with_grad) {
  const ParamLayout lay(state);
  LossReport rep;
  if (with_grad) rep.grad.assign(lay.total(), 0.0);
  std::vector<double>* g = with_grad ? &rep.grad : nullptr;

  if (weights.ga != 0.0) {
    if (!data.pairs || !data.graph)
      throw Error(ErrorCode::InvalidInput, "GA active but pairs/graph missing");
    rep.ga = loss_ga(state, *data.pairs, *data.graph, weights.ga, g);
  }
  if (weights.cma != 0.0) {
    if (!data.flows || !data.masks || !data.graph)
      throw Error(ErrorCode::InvalidInput,
                  "CMA active but flows/masks/graph missing");
    rep.cma = loss_cma(state, *data.flows, *data.masks, *data.graph,
                       weights.cma, g);
  }
  if (weights.cts != 0.0) rep.cts = loss_cts(state, weights.cts, g);
  if (weights.pts != 0.0) {
    if (!data.pts_targets)
      throw Error(ErrorCode::InvalidInput, "PTS active but targets missing");
    rep.pts = loss_pts(state, *data.pts_targets, weights.pts, g);
  }
  rep.total = weights.ga * rep.ga + weights.cma * rep.cma +
              weights.cts * rep.cts + weights.pts * rep.pts;
  if (!std::isfinite(rep.total))
    throw Error(ErrorCode::NumericFailure, "non-finite loss");
  return rep;
}

}  // namespace c4d
