#pragma once

#include <map>
#include <vector>

#include "c4d/objectives.hpp"
#include "c4d/rng.hpp"
#include "c4d/types.hpp"

namespace c4d::testutil {

struct GradScene {
  SceneEstimate state;
  SceneGraph graph;
  std::vector<PairPrediction> pairs;
  std::map<std::pair<int, int>, FlowField> flows;
  std::vector<MotionMask> masks;
  std::vector<Grid<Vec3>> targets;
};

// Small random scene in generic position (residuals bounded away from the
// norm kinks) for derivative checks.
inline GradScene random_grad_scene(uint64_t seed, int w = 8, int h = 6,
                                   int t = 3) {
  Rng rng(seed);
  GradScene gs;
  gs.graph = build_scene_graph(t, 4, 2);
  gs.state.init(w, h, t, gs.graph);

  auto random_quat = [&]() {
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q;
  };

  for (int f = 0; f < t; ++f) {
    for (auto& v : gs.state.log_depth[f]) v = rng.uniform(-0.6, 1.1);
    for (size_t i = 0; i < gs.state.depth_validity[f].size(); ++i)
      gs.state.depth_validity[f][i] = rng.uniform() < 0.9 ? 1 : 0;
    gs.state.focal[f] = rng.uniform(8.0, 12.0);
    gs.state.poses[f].rotation = random_quat();
    gs.state.poses[f].translation =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  for (size_t e = 0; e < gs.graph.edges.size(); ++e) {
    gs.state.log_sigma[e] = rng.uniform(-0.3, 0.3);
    gs.state.edge_pose[e].rotation = random_quat();
    gs.state.edge_pose[e].translation =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }

  for (const auto& [n, m] : gs.graph.edges) {
    PairPrediction pp;
    pp.n = n;
    pp.m = m;
    pp.pointmap_n = Pointmap(w, h, PointmapFrame::PairLocal);
    pp.pointmap_m = Pointmap(w, h, PointmapFrame::PairLocal);
    pp.conf_n = ConfidenceMap(w, h);
    pp.conf_m = ConfidenceMap(w, h);
    for (size_t i = 0; i < pp.pointmap_n.points.size(); ++i) {
      pp.pointmap_n.points[i] = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                     rng.uniform(0.5, 4));
      pp.pointmap_m.points[i] = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                     rng.uniform(0.5, 4));
      pp.conf_n.values[i] = rng.uniform(0.2, 1.0);
      pp.conf_m.values[i] = rng.uniform(0.2, 1.0);
    }
    gs.pairs.push_back(std::move(pp));
  }

  for (const auto& [n, m] : gs.graph.edges) {
    for (auto [a, b] : {std::pair{n, m}, std::pair{m, n}}) {
      FlowField ff(a, b, w, h);
      for (size_t i = 0; i < ff.displacement.size(); ++i) {
        ff.displacement[i] = Vec2(rng.uniform(-2, 2), rng.uniform(-2, 2));
        ff.validity[i] = rng.uniform() < 0.9 ? 1 : 0;
      }
      gs.flows.emplace(std::pair{a, b}, std::move(ff));
    }
  }

  for (int f = 0; f < t; ++f) {
    MotionMask mm(f, w, h);
    for (size_t i = 0; i < mm.dynamic.size(); ++i)
      mm.dynamic[i] = rng.uniform() < 0.25 ? 1 : 0;
    gs.masks.push_back(std::move(mm));
  }

  for (int f = 0; f < t; ++f) {
    Grid<Vec3> g(w, h, Vec3::Zero());
    for (size_t i = 0; i < g.size(); ++i)
      g[i] = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    gs.targets.push_back(std::move(g));
  }
  return gs;
}

// Central finite differences of fn over the flat parameter vector.
template <typename Fn>
std::vector<double> finite_diff(const SceneEstimate& state, Fn&& fn,
                                double h = 1e-4) {
  std::vector<double> p;
  state_to_params(state, &p);
  std::vector<double> g(p.size(), 0.0);
  SceneEstimate s = state;
  for (size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    params_to_state(p, &s);
    const double hi = fn(s);
    p[i] = saved - h;
    params_to_state(p, &s);
    const double lo = fn(s);
    p[i] = saved;
    g[i] = (hi - lo) / (2.0 * h);
  }
  params_to_state(p, &s);
  return g;
}

inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& fd,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double rel =
        std::abs(analytic[i] - fd[i]) / std::max(std::abs(fd[i]), floor);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace c4d::testutil
