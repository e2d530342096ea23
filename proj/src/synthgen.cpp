#include "c4d/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "c4d/geometry.hpp"
#include "c4d/rng.hpp"

namespace c4d {

namespace {

constexpr double kRayEps = 1e-6;

// Substream ids keep the noise draws independent of generation order.
constexpr uint64_t kStreamPairs = 1'000'000;
constexpr uint64_t kStreamFlows = 2'000'000;
constexpr uint64_t kStreamTracks = 3'000'000;
constexpr uint64_t kStreamQueries = 4'000'000;

struct Hit {
  bool valid = false;
  double depth = 0.0;  // camera z; ray direction has unit z in camera frame
  int object = -1;     // >= 0: sphere index; -1: ground plane; -2: back wall
  Vec3 world = Vec3::Zero();
};

struct Tracer {
  const SynthConfig* cfg;
  std::vector<CameraPose> poses;
  std::vector<Mat3> rot;  // camera-to-world
  double f;

  explicit Tracer(const SynthConfig& c) : cfg(&c) {
    f = c.focal > 0.0 ? c.focal : 0.9 * c.width;
    for (int t = 0; t < c.frames; ++t) {
      poses.push_back(synth_camera_pose(c, t));
      rot.push_back(poses.back().rotation.toRotationMatrix());
    }
  }

  double cx() const { return (cfg->width - 1) / 2.0; }
  double cy() const { return (cfg->height - 1) / 2.0; }

  // Ray through continuous pixel (px, py) at the given frame; direction is
  // left unnormalized so the hit parameter equals camera-frame depth.
  Hit cast(double px, double py, int frame) const {
    const Vec3 dir_cam((px - cx()) / f, (py - cy()) / f, 1.0);
    const Vec3 o = poses[frame].translation;
    const Vec3 d = rot[frame] * dir_cam;

    Hit best;
    double best_t = std::numeric_limits<double>::infinity();
    auto consider = [&](double t, int object) {
      if (t > kRayEps && t < best_t) {
        best_t = t;
        best.valid = true;
        best.depth = t;
        best.object = object;
        best.world = o + t * d;
      }
    };

    for (size_t k = 0; k < cfg->spheres.size(); ++k) {
      const Vec3 c = cfg->spheres[k].center_at(frame, cfg->frames);
      const Vec3 oc = o - c;
      const double a = d.dot(d);
      const double b = 2.0 * d.dot(oc);
      const double q = oc.dot(oc) - cfg->spheres[k].radius * cfg->spheres[k].radius;
      const double disc = b * b - 4.0 * a * q;
      if (disc < 0.0) continue;
      const double s = std::sqrt(disc);
      consider((-b - s) / (2.0 * a), static_cast<int>(k));
      consider((-b + s) / (2.0 * a), static_cast<int>(k));
    }
    if (std::abs(d.y()) > 1e-15) {
      const double t = (cfg->plane_y - o.y()) / d.y();
      if (t > kRayEps && (o + t * d).z() <= cfg->wall_z) consider(t, -1);
    }
    if (std::abs(d.z()) > 1e-15) {
      const double t = (cfg->wall_z - o.z()) / d.z();
      if (t > kRayEps && (o + t * d).y() <= cfg->plane_y) consider(t, -2);
    }
    return best;
  }

  // Where the surface point hit at `from` sits at time `to`.
  Vec3 advect(const Hit& h, int from, int to) const {
    if (h.object < 0) return h.world;
    const auto& s = cfg->spheres[h.object];
    return h.world - s.center_at(from, cfg->frames) + s.center_at(to, cfg->frames);
  }

  Vec3 to_camera(const Vec3& world, int frame) const {
    return rot[frame].transpose() * (world - poses[frame].translation);
  }

  bool project(const Vec3& world, int frame, Vec2* px, double* depth) const {
    const Vec3 c = to_camera(world, frame);
    if (!(c.z() > kRayEps)) return false;
    *px = Vec2(f * c.x() / c.z() + cx(), f * c.y() / c.z() + cy());
    *depth = c.z();
    return true;
  }
};

}  // namespace

Vec3 SphereSpec::center_at(int frame, int num_frames) const {
  if (path == SpherePath::Linear) return center + velocity * frame;
  const double phase = 2.0 * M_PI * frequency * frame / num_frames;
  return center + amplitude * std::sin(phase);
}

CameraPose synth_camera_pose(const SynthConfig& cfg, int frame) {
  CameraPose p;
  const double u = cfg.frames > 1
                       ? static_cast<double>(frame) / (cfg.frames - 1) - 0.5
                       : 0.0;
  switch (cfg.camera_path) {
    case CameraPath::Static:
      break;
    case CameraPath::Pan:
      p.translation = Vec3(cfg.magnitude * u, 0, 0);
      break;
    case CameraPath::Orbit: {
      const Vec3 pivot(0, 0, 3);
      const double theta = cfg.magnitude * u;
      p.rotation = Quat(Eigen::AngleAxisd(theta, Vec3::UnitY()));
      p.translation = pivot - 3.0 * (p.rotation * Vec3(0, 0, 1));
      break;
    }
  }
  return p;
}

SynthConfig synth_preset(const std::string& name) {
  SynthConfig cfg;
  if (name == "small") {
    cfg.width = 64;
    cfg.height = 48;
    cfg.frames = 8;
    cfg.camera_path = CameraPath::Orbit;
    cfg.magnitude = 0.5;
    cfg.track_grid = 4;
    SphereSpec s;
    s.center = Vec3(0.5, 0.3, 2.5);
    s.radius = 0.45;
    s.path = SpherePath::Linear;
    s.velocity = Vec3(-0.04, 0.1, 0.03);
    SphereSpec anchor;  // stationary, breaks the planar static structure
    anchor.center = Vec3(-0.7, 0.45, 3.2);
    anchor.radius = 0.4;
    cfg.spheres = {s, anchor};
  } else if (name == "medium") {
    cfg.width = 128;
    cfg.height = 96;
    cfg.frames = 30;
    cfg.camera_path = CameraPath::Orbit;
    cfg.magnitude = 0.8;
    cfg.track_grid = 16;
    // Bounded oscillating objects: per-frame image motion stays a few
    // pixels at any sequence length, and nothing drifts out of frame.
    SphereSpec a;
    a.center = Vec3(-0.8, 0.2, 3.2);
    a.radius = 0.4;
    a.path = SpherePath::Sinusoidal;
    a.amplitude = Vec3(0.5, -0.25, 0.0);
    a.frequency = 2.0;
    SphereSpec b;
    b.center = Vec3(0.7, 0.0, 2.8);
    b.radius = 0.35;
    b.path = SpherePath::Sinusoidal;
    b.amplitude = Vec3(0.3, 0.15, 0.0);
    b.frequency = 3.0;
    SphereSpec c;
    c.center = Vec3(0.0, 0.5, 3.6);
    c.radius = 0.5;
    c.path = SpherePath::Sinusoidal;
    c.amplitude = Vec3(0.0, -0.3, 0.25);
    c.frequency = 2.0;
    cfg.spheres = {a, b, c};
  } else {
    throw Error(ErrorCode::InvalidInput, "unknown preset: " + name);
  }
  return cfg;
}

std::vector<std::pair<int, int>> sample_query_points(
    const Grid<double>& gradient, int grid, uint64_t seed) {
  if (grid < 1) throw Error(ErrorCode::InvalidInput, "query grid < 1");
  const int cells_x = gradient.width() / grid;
  const int cells_y = gradient.height() / grid;
  if (cells_x < 1 || cells_y < 1)
    throw Error(ErrorCode::InsufficientData, "image smaller than query grid");

  Rng rng = Rng::substream(seed, kStreamQueries);
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(cells_x) * cells_y * 2);
  for (int gy = 0; gy < cells_y; ++gy) {
    for (int gx = 0; gx < cells_x; ++gx) {
      const int x0 = gx * grid;
      const int y0 = gy * grid;
      int bx = x0, by = y0;
      double best = -1.0;
      for (int y = y0; y < y0 + grid; ++y)
        for (int x = x0; x < x0 + grid; ++x)
          if (gradient.at(x, y) > best) {
            best = gradient.at(x, y);
            bx = x;
            by = y;
          }
      out.emplace_back(bx, by);
      const size_t r = rng.uniform_index(static_cast<size_t>(grid) * grid);
      out.emplace_back(x0 + static_cast<int>(r % grid),
                       y0 + static_cast<int>(r / grid));
    }
  }
  return out;
}

SceneData generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  const int W = cfg.width, H = cfg.height, T = cfg.frames;
  Tracer tr(cfg);
  const SceneGraph graph = build_scene_graph(T, cfg.graph_window, cfg.graph_stride);

  std::vector<bool> sphere_dynamic(cfg.spheres.size(), false);
  for (size_t k = 0; k < cfg.spheres.size(); ++k) {
    double max_step = 0.0;
    for (int t = 0; t + 1 < T; ++t)
      max_step = std::max(max_step,
                          (cfg.spheres[k].center_at(t + 1, T) -
                           cfg.spheres[k].center_at(t, T)).norm());
    sphere_dynamic[k] = max_step > cfg.mobility_threshold;
  }
  auto hit_dynamic = [&](const Hit& h) {
    return h.valid && h.object >= 0 && sphere_dynamic[h.object];
  };

  // One full-resolution cast per frame; everything else reuses it.
  std::vector<Grid<Hit>> hits(T, Grid<Hit>(W, H, Hit{}));
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) hits[t].at(x, y) = tr.cast(x, y, t);

  SceneData scene;
  scene.width = W;
  scene.height = H;
  scene.num_frames = T;
  scene.graph_window = cfg.graph_window;
  scene.graph_stride = cfg.graph_stride;

  GroundTruth gt;
  gt.depths.reserve(T);
  for (int t = 0; t < T; ++t) {
    DepthMap d(W, H);
    MotionMask m(t, W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Hit& h = hits[t].at(x, y);
        if (h.valid) {
          d.values.at(x, y) = h.depth;
          d.validity.at(x, y) = 1;
        }
        m.dynamic.at(x, y) = hit_dynamic(h) ? 1 : 0;
      }
    gt.depths.push_back(std::move(d));
    gt.masks.push_back(std::move(m));
    gt.poses.push_back(tr.poses[t]);
    gt.intrinsics.push_back(Intrinsics{tr.f, tr.f, tr.cx(), tr.cy()});
  }

  const double pair_conf = 1.0 / (1.0 + cfg.pointmap_sigma);
  for (const auto& [n, m] : graph.edges) {
    PairPrediction pp;
    pp.n = n;
    pp.m = m;
    pp.pointmap_n = Pointmap(W, H, PointmapFrame::PairLocal);
    pp.pointmap_m = Pointmap(W, H, PointmapFrame::PairLocal);
    pp.conf_n = ConfidenceMap(W, H, 0.0);
    pp.conf_m = ConfidenceMap(W, H, 0.0);
    Rng rng = Rng::substream(cfg.seed, kStreamPairs + static_cast<uint64_t>(n) * T + m);
    auto fill = [&](int frame, Pointmap* pm, ConfidenceMap* conf) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Hit& h = hits[frame].at(x, y);
          if (!h.valid) continue;
          // Both sides of the pair live in frame n's camera.
          Vec3 p = tr.to_camera(h.world, n);
          if (cfg.pointmap_sigma > 0.0) {
            const double s = cfg.pointmap_sigma * h.depth;
            p += Vec3(rng.normal() * s, rng.normal() * s, rng.normal() * s);
          }
          pm->points.at(x, y) = p;
          conf->values.at(x, y) = pair_conf;
        }
    };
    fill(n, &pp.pointmap_n, &pp.conf_n);
    fill(m, &pp.pointmap_m, &pp.conf_m);
    scene.pairs.push_back(std::move(pp));
  }

  for (const auto& [n, m] : graph.edges) {
    for (auto [a, b] : {std::pair{n, m}, std::pair{m, n}}) {
      FlowField ff(a, b, W, H);
      Rng rng = Rng::substream(cfg.seed, kStreamFlows + static_cast<uint64_t>(a) * T + b);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Hit& h = hits[a].at(x, y);
          if (!h.valid) continue;
          Vec2 px;
          double depth;
          if (!tr.project(tr.advect(h, a, b), b, &px, &depth)) continue;
          Vec2 flow = px - Vec2(x, y);
          if (cfg.outlier_fraction > 0.0 && rng.uniform() < cfg.outlier_fraction) {
            flow = Vec2(rng.uniform(-W / 2.0, W / 2.0),
                        rng.uniform(-H / 2.0, H / 2.0));
          } else if (cfg.flow_sigma > 0.0) {
            flow += Vec2(rng.normal() * cfg.flow_sigma,
                         rng.normal() * cfg.flow_sigma);
          }
          ff.displacement.at(x, y) = flow;
          ff.validity.at(x, y) = 1;
        }
      scene.flows.emplace(std::pair{a, b}, std::move(ff));
    }
  }

  // Long-term tracks queried at frame 0 on depth-gradient and random pixels.
  Grid<double> grad(W, H, 0.0);
  const DepthMap& d0 = gt.depths[0];
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double gx = d0.values.at(std::min(x + 1, W - 1), y) -
                        d0.values.at(std::max(x - 1, 0), y);
      const double gy = d0.values.at(x, std::min(y + 1, H - 1)) -
                        d0.values.at(x, std::max(y - 1, 0));
      grad.at(x, y) = std::hypot(gx, gy);
    }
  const auto queries = sample_query_points(grad, cfg.track_grid, cfg.seed);

  std::vector<Hit> track_hits;
  for (const auto& [qx, qy] : queries) {
    const Hit& h = hits[0].at(qx, qy);
    if (h.valid) track_hits.push_back(h);
  }
  const int N = static_cast<int>(track_hits.size());
  if (N == 0)
    throw Error(ErrorCode::InsufficientData, "synth: no castable query points");

  TrackSet tracks;
  tracks.resize(N, T);
  gt.tracks.resize(N, T);
  Rng trng = Rng::substream(cfg.seed, kStreamTracks);
  const double track_conf = 1.0 / (1.0 + cfg.track_sigma);
  for (int i = 0; i < N; ++i) {
    const Hit& h = track_hits[i];
    const uint8_t dyn = hit_dynamic(h) ? 1 : 0;
    for (int t = 0; t < T; ++t) {
      const size_t k = tracks.idx(i, t);
      Vec2 px;
      double depth;
      bool vis = tr.project(tr.advect(h, 0, t), t, &px, &depth);
      if (vis)
        vis = px.x() >= 0.0 && px.x() <= W - 1 && px.y() >= 0.0 && px.y() <= H - 1;
      if (vis) {
        // Occluded when something nearer sits on the same ray.
        const Hit front = tr.cast(px.x(), px.y(), t);
        vis = front.valid && depth <= front.depth + 1e-6;
      }
      if (vis) {
        // Trackers lose points whose neighborhood straddles a surface
        // boundary; require the bilinear footprint to lie on one object.
        const int x0 = static_cast<int>(std::floor(px.x()));
        const int y0 = static_cast<int>(std::floor(px.y()));
        for (int dy = 0; dy <= 1 && vis; ++dy)
          for (int dx = 0; dx <= 1 && vis; ++dx) {
            const int nx = std::min(x0 + dx, W - 1);
            const int ny = std::min(y0 + dy, H - 1);
            const Hit& nb = hits[t].at(nx, ny);
            vis = nb.valid && nb.object == h.object;
          }
      }
      gt.tracks.positions[k] = vis ? px : Vec2::Zero();
      gt.tracks.visibility[k] = vis ? 1 : 0;
      gt.tracks.mobility[k] = dyn;
      Vec2 noisy = gt.tracks.positions[k];
      if (vis && cfg.track_sigma > 0.0)
        noisy += Vec2(trng.normal() * cfg.track_sigma,
                      trng.normal() * cfg.track_sigma);
      tracks.positions[k] = noisy;
      tracks.visibility[k] = vis ? 1 : 0;
      tracks.mobility[k] = dyn;
      tracks.confidence[k] = track_conf;
    }
    tracks.query_frame[i] = 0;
    gt.tracks.query_frame[i] = 0;
  }

  scene.tracks = std::move(tracks);
  scene.ground_truth = std::move(gt);
  return scene;
}

}  // namespace c4d
