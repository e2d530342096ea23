#include "c4d/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace c4d {

namespace {

std::string frame_key(const char* prefix, int t) {
  return std::string(prefix) + "_" + std::to_string(t);
}

std::string pair_key(int n, int m) {
  return "pair_" + std::to_string(n) + "_" + std::to_string(m);
}

std::string flow_key(int from, int to) {
  return "flow_" + std::to_string(from) + "_" + std::to_string(to);
}

std::string resolve(const std::string& dir, const json& section,
                    const std::string& key) {
  if (!section.contains(key))
    throw Error(ErrorCode::MissingEntry, key);
  const fs::path p = fs::path(dir) / section.at(key).get<std::string>();
  if (!fs::exists(p))
    throw Error(ErrorCode::MissingEntry, key + ": file not found " + p.string());
  return p.string();
}

void check_finite_f32(const Tensor& t, const std::string& what) {
  for (size_t i = 0; i < t.f32.size(); ++i)
    if (!std::isfinite(t.f32[i]))
      throw Error(ErrorCode::ValidationFailure,
                  what + ": non-finite value at index " + std::to_string(i));
}

void check_dims(const Tensor& t, const std::vector<uint32_t>& dims,
                const std::string& what) {
  if (t.dims != dims)
    throw Error(ErrorCode::ShapeMismatch, what + ": unexpected dims");
}

json read_manifest(const std::string& dir) {
  const fs::path p = fs::path(dir) / "manifest.json";
  std::ifstream f(p);
  if (!f)
    throw Error(ErrorCode::MissingEntry, "manifest.json not found in " + dir);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationFailure,
                std::string("manifest parse error: ") + e.what());
  }
  return j;
}

Tensor pair_to_tensor(const PairPrediction& pp) {
  const int w = pp.pointmap_n.points.width();
  const int h = pp.pointmap_n.points.height();
  std::vector<float> data;
  data.reserve(size_t(2) * h * w * 4);
  for (int side = 0; side < 2; ++side) {
    const Pointmap& pm = side == 0 ? pp.pointmap_n : pp.pointmap_m;
    const ConfidenceMap& cm = side == 0 ? pp.conf_n : pp.conf_m;
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        const Vec3& v = pm.points.at(i, j);
        data.push_back(static_cast<float>(v.x()));
        data.push_back(static_cast<float>(v.y()));
        data.push_back(static_cast<float>(v.z()));
        data.push_back(static_cast<float>(cm.values.at(i, j)));
      }
  }
  return Tensor::make_f32(
      {2, uint32_t(h), uint32_t(w), 4}, std::move(data));
}

PairPrediction tensor_to_pair(const Tensor& t, int n, int m,
                              const std::string& what) {
  if (t.dims.size() != 4 || t.dims[0] != 2 || t.dims[3] != 4)
    throw Error(ErrorCode::ShapeMismatch, what + ": bad pair tensor dims");
  check_finite_f32(t, what);
  const int h = static_cast<int>(t.dims[1]);
  const int w = static_cast<int>(t.dims[2]);
  PairPrediction pp;
  pp.n = n;
  pp.m = m;
  pp.pointmap_n = Pointmap(w, h, PointmapFrame::PairLocal);
  pp.pointmap_m = Pointmap(w, h, PointmapFrame::PairLocal);
  pp.conf_n = ConfidenceMap(w, h);
  pp.conf_m = ConfidenceMap(w, h);
  size_t k = 0;
  for (int side = 0; side < 2; ++side) {
    Pointmap& pm = side == 0 ? pp.pointmap_n : pp.pointmap_m;
    ConfidenceMap& cm = side == 0 ? pp.conf_n : pp.conf_m;
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        pm.points.at(i, j) = Vec3(t.f32[k], t.f32[k + 1], t.f32[k + 2]);
        cm.values.at(i, j) = t.f32[k + 3];
        k += 4;
      }
  }
  pp.validate();
  return pp;
}

Tensor flow_to_tensor(const FlowField& f) {
  const int w = f.displacement.width();
  const int h = f.displacement.height();
  std::vector<float> data;
  data.reserve(size_t(h) * w * 3);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      data.push_back(static_cast<float>(f.displacement.at(i, j).x()));
      data.push_back(static_cast<float>(f.displacement.at(i, j).y()));
      data.push_back(f.validity.at(i, j) ? 1.0f : 0.0f);
    }
  return Tensor::make_f32({uint32_t(h), uint32_t(w), 3}, std::move(data));
}

FlowField tensor_to_flow(const Tensor& t, int from, int to,
                         const std::string& what) {
  if (t.dims.size() != 3 || t.dims[2] != 3)
    throw Error(ErrorCode::ShapeMismatch, what + ": bad flow tensor dims");
  const int h = static_cast<int>(t.dims[0]);
  const int w = static_cast<int>(t.dims[1]);
  FlowField f(from, to, w, h);
  size_t k = 0;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      f.displacement.at(i, j) = Vec2(t.f32[k], t.f32[k + 1]);
      f.validity.at(i, j) = t.f32[k + 2] != 0.0f ? 1 : 0;
      k += 3;
    }
  f.validate();
  return f;
}

Tensor mask_to_tensor(const MotionMask& m) {
  return Tensor::make_u8({uint32_t(m.dynamic.height()),
                          uint32_t(m.dynamic.width())},
                         m.dynamic.data());
}

MotionMask tensor_to_mask(const Tensor& t, int frame) {
  if (t.dims.size() != 2)
    throw Error(ErrorCode::ShapeMismatch, "mask: bad dims");
  MotionMask m(frame, static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]));
  m.dynamic.data() = t.u8;
  return m;
}

void save_tracks(const std::string& dir, json& section, const TrackSet& ts,
                 const std::string& stem) {
  const uint32_t n = static_cast<uint32_t>(ts.num_tracks);
  const uint32_t t = static_cast<uint32_t>(ts.num_frames);
  std::vector<float> pos(size_t(n) * t * 2);
  std::vector<float> conf(size_t(n) * t);
  for (size_t i = 0; i < size_t(n) * t; ++i) {
    pos[2 * i] = static_cast<float>(ts.positions[i].x());
    pos[2 * i + 1] = static_cast<float>(ts.positions[i].y());
    conf[i] = static_cast<float>(ts.confidence[i]);
  }
  std::vector<int32_t> qf(ts.query_frame.begin(), ts.query_frame.end());
  const struct {
    const char* key;
    Tensor tensor;
  } parts[] = {
      {"positions", Tensor::make_f32({n, t, 2}, std::move(pos))},
      {"visibility", Tensor::make_u8({n, t}, ts.visibility)},
      {"confidence", Tensor::make_f32({n, t}, std::move(conf))},
      {"mobility", Tensor::make_u8({n, t}, ts.mobility)},
      {"query_frame", Tensor::make_i32({n}, std::move(qf))},
  };
  json sub;
  for (const auto& part : parts) {
    const std::string file = stem + "_" + part.key + ".c4dt";
    write_tensor((fs::path(dir) / file).string(), part.tensor);
    sub[part.key] = file;
  }
  section = sub;
}

TrackSet load_tracks(const std::string& dir, const json& section) {
  const Tensor pos = read_tensor(resolve(dir, section, "positions"));
  const Tensor vis = read_tensor(resolve(dir, section, "visibility"));
  const Tensor conf = read_tensor(resolve(dir, section, "confidence"));
  const Tensor mob = read_tensor(resolve(dir, section, "mobility"));
  const Tensor qf = read_tensor(resolve(dir, section, "query_frame"));
  if (pos.dims.size() != 3 || pos.dims[2] != 2)
    throw Error(ErrorCode::ShapeMismatch, "tracks positions: bad dims");
  const int n = static_cast<int>(pos.dims[0]);
  const int t = static_cast<int>(pos.dims[1]);
  check_dims(vis, {uint32_t(n), uint32_t(t)}, "tracks visibility");
  check_dims(conf, {uint32_t(n), uint32_t(t)}, "tracks confidence");
  check_dims(mob, {uint32_t(n), uint32_t(t)}, "tracks mobility");
  check_dims(qf, {uint32_t(n)}, "tracks query_frame");
  TrackSet ts;
  ts.resize(n, t);
  for (size_t i = 0; i < size_t(n) * t; ++i) {
    ts.positions[i] = Vec2(pos.f32[2 * i], pos.f32[2 * i + 1]);
    ts.visibility[i] = vis.u8[i];
    ts.confidence[i] = conf.f32[i];
    ts.mobility[i] = mob.u8[i];
  }
  ts.query_frame.assign(qf.i32.begin(), qf.i32.end());
  ts.validate();
  return ts;
}

}  // namespace

Tensor depth_to_tensor(const DepthMap& d) {
  const int w = d.values.width();
  const int h = d.values.height();
  std::vector<float> data(size_t(w) * h);
  for (size_t i = 0; i < data.size(); ++i)
    data[i] = d.validity[i] ? static_cast<float>(d.values[i]) : 0.0f;
  return Tensor::make_f32({uint32_t(h), uint32_t(w)}, std::move(data));
}

DepthMap tensor_to_depth(const Tensor& t) {
  if (t.dims.size() != 2)
    throw Error(ErrorCode::ShapeMismatch, "depth: bad dims");
  check_finite_f32(t, "depth");
  DepthMap d(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]));
  for (size_t i = 0; i < t.f32.size(); ++i) {
    d.values[i] = t.f32[i];
    d.validity[i] = t.f32[i] > 0.0f ? 1 : 0;
  }
  d.validate();
  return d;
}

Tensor pose_to_tensor(const CameraPose& p) {
  return Tensor::make_f32(
      {7}, {static_cast<float>(p.rotation.w()), static_cast<float>(p.rotation.x()),
            static_cast<float>(p.rotation.y()), static_cast<float>(p.rotation.z()),
            static_cast<float>(p.translation.x()),
            static_cast<float>(p.translation.y()),
            static_cast<float>(p.translation.z())});
}

CameraPose tensor_to_pose(const Tensor& t) {
  check_dims(t, {7}, "pose");
  check_finite_f32(t, "pose");
  CameraPose p;
  p.rotation = Quat(t.f32[0], t.f32[1], t.f32[2], t.f32[3]);
  p.rotation.normalize();
  p.translation = Vec3(t.f32[4], t.f32[5], t.f32[6]);
  return p;
}

Tensor intrinsics_to_tensor(const Intrinsics& k) {
  return Tensor::make_f32({4}, {static_cast<float>(k.fx),
                                static_cast<float>(k.fy),
                                static_cast<float>(k.cx),
                                static_cast<float>(k.cy)});
}

Intrinsics tensor_to_intrinsics(const Tensor& t) {
  check_dims(t, {4}, "intrinsics");
  check_finite_f32(t, "intrinsics");
  return Intrinsics{t.f32[0], t.f32[1], t.f32[2], t.f32[3]};
}

SceneData load_scene(const std::string& dir) {
  const json j = read_manifest(dir);
  SceneData s;
  try {
    s.num_frames = j.at("num_frames").get<int>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.graph_window = j.at("graph").at("window").get<int>();
    s.graph_stride = j.at("graph").at("stride").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingEntry,
                std::string("manifest: ") + e.what());
  }

  const SceneGraph graph =
      build_scene_graph(s.num_frames, s.graph_window, s.graph_stride);
  const json pairs = j.value("pairs", json::object());
  const json flows = j.value("flows", json::object());
  for (const auto& [n, m] : graph.edges) {
    const std::string pk = pair_key(n, m);
    PairPrediction pp =
        tensor_to_pair(read_tensor(resolve(dir, pairs, pk)), n, m, pk);
    if (!pp.pointmap_n.points.same_shape(s.width, s.height))
      throw Error(ErrorCode::ShapeMismatch, pk + ": resolution mismatch");
    s.pairs.push_back(std::move(pp));
    for (const auto& [a, b] : {std::pair{n, m}, std::pair{m, n}}) {
      const std::string fk = flow_key(a, b);
      FlowField ff =
          tensor_to_flow(read_tensor(resolve(dir, flows, fk)), a, b, fk);
      if (!ff.displacement.same_shape(s.width, s.height))
        throw Error(ErrorCode::ShapeMismatch, fk + ": resolution mismatch");
      s.flows.emplace(std::pair{a, b}, std::move(ff));
    }
  }

  if (!j.contains("tracks"))
    throw Error(ErrorCode::MissingEntry, "tracks");
  s.tracks = load_tracks(dir, j.at("tracks"));
  if (s.tracks.num_frames != s.num_frames)
    throw Error(ErrorCode::ShapeMismatch, "tracks: frame count mismatch");

  if (j.contains("ground_truth")) {
    const json& g = j.at("ground_truth");
    GroundTruth gt;
    const json frames = g.value("frames", json::object());
    const json masks = g.value("masks", json::object());
    for (int t = 0; t < s.num_frames; ++t) {
      gt.depths.push_back(
          tensor_to_depth(read_tensor(resolve(dir, frames, frame_key("depth", t)))));
      gt.poses.push_back(
          tensor_to_pose(read_tensor(resolve(dir, frames, frame_key("pose", t)))));
      gt.intrinsics.push_back(tensor_to_intrinsics(
          read_tensor(resolve(dir, frames, frame_key("intrinsics", t)))));
      gt.masks.push_back(
          tensor_to_mask(read_tensor(resolve(dir, masks, frame_key("mask", t))), t));
    }
    gt.tracks = load_tracks(dir, g.at("tracks"));
    s.ground_truth = std::move(gt);
  }
  return s;
}

void save_scene(const std::string& dir, const SceneData& scene) {
  fs::create_directories(dir);
  json j;
  j["num_frames"] = scene.num_frames;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["graph"] = {{"window", scene.graph_window}, {"stride", scene.graph_stride}};

  json pairs = json::object();
  for (const PairPrediction& pp : scene.pairs) {
    const std::string key = pair_key(pp.n, pp.m);
    const std::string file = key + ".c4dt";
    write_tensor((fs::path(dir) / file).string(), pair_to_tensor(pp));
    pairs[key] = file;
  }
  j["pairs"] = pairs;

  json flows = json::object();
  for (const auto& [key, ff] : scene.flows) {
    const std::string name = flow_key(key.first, key.second);
    const std::string file = name + ".c4dt";
    write_tensor((fs::path(dir) / file).string(), flow_to_tensor(ff));
    flows[name] = file;
  }
  j["flows"] = flows;

  save_tracks(dir, j["tracks"], scene.tracks, "tracks");

  if (scene.ground_truth) {
    const GroundTruth& gt = *scene.ground_truth;
    json frames = json::object();
    json masks = json::object();
    for (int t = 0; t < scene.num_frames; ++t) {
      const std::string df = frame_key("gt_depth", t) + ".c4dt";
      write_tensor((fs::path(dir) / df).string(), depth_to_tensor(gt.depths[t]));
      frames[frame_key("depth", t)] = df;
      const std::string pf = frame_key("gt_pose", t) + ".c4dt";
      write_tensor((fs::path(dir) / pf).string(), pose_to_tensor(gt.poses[t]));
      frames[frame_key("pose", t)] = pf;
      const std::string kf = frame_key("gt_intrinsics", t) + ".c4dt";
      write_tensor((fs::path(dir) / kf).string(),
                   intrinsics_to_tensor(gt.intrinsics[t]));
      frames[frame_key("intrinsics", t)] = kf;
      const std::string mf = frame_key("gt_mask", t) + ".c4dt";
      write_tensor((fs::path(dir) / mf).string(), mask_to_tensor(gt.masks[t]));
      masks[frame_key("mask", t)] = mf;
    }
    json g;
    g["frames"] = frames;
    g["masks"] = masks;
    save_tracks(dir, g["tracks"], gt.tracks, "gt_tracks");
    j["ground_truth"] = g;
  }

  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

SceneOutputs load_outputs(const std::string& dir) {
  const json j = read_manifest(dir);
  SceneOutputs o;
  o.num_frames = j.at("num_frames").get<int>();
  o.width = j.at("width").get<int>();
  o.height = j.at("height").get<int>();
  const json frames = j.value("frames", json::object());
  const json masks = j.value("masks", json::object());
  for (int t = 0; t < o.num_frames; ++t) {
    o.depths.push_back(
        tensor_to_depth(read_tensor(resolve(dir, frames, frame_key("depth", t)))));
    o.poses.push_back(
        tensor_to_pose(read_tensor(resolve(dir, frames, frame_key("pose", t)))));
    o.intrinsics.push_back(tensor_to_intrinsics(
        read_tensor(resolve(dir, frames, frame_key("intrinsics", t)))));
    o.masks.push_back(
        tensor_to_mask(read_tensor(resolve(dir, masks, frame_key("mask", t))), t));
  }
  o.tracks = load_tracks(dir, j.at("tracks"));
  if (j.contains("tracks3d")) {
    const json& t3 = j.at("tracks3d");
    const Tensor pts = read_tensor(resolve(dir, t3, "points"));
    const Tensor vis = read_tensor(resolve(dir, t3, "visibility"));
    if (pts.dims.size() != 3 || pts.dims[2] != 3)
      throw Error(ErrorCode::ShapeMismatch, "tracks3d: bad dims");
    const size_t n = pts.count() / 3;
    o.tracks3d.resize(n);
    for (size_t i = 0; i < n; ++i)
      o.tracks3d[i] = Vec3(pts.f32[3 * i], pts.f32[3 * i + 1], pts.f32[3 * i + 2]);
    o.tracks3d_visibility = vis.u8;
  }
  return o;
}

void save_outputs(const std::string& dir, const SceneOutputs& out) {
  fs::create_directories(dir);
  json j;
  j["num_frames"] = out.num_frames;
  j["width"] = out.width;
  j["height"] = out.height;
  json frames = json::object();
  json masks = json::object();
  for (int t = 0; t < out.num_frames; ++t) {
    const std::string df = frame_key("depth", t) + ".c4dt";
    write_tensor((fs::path(dir) / df).string(), depth_to_tensor(out.depths[t]));
    frames[frame_key("depth", t)] = df;
    const std::string pf = frame_key("pose", t) + ".c4dt";
    write_tensor((fs::path(dir) / pf).string(), pose_to_tensor(out.poses[t]));
    frames[frame_key("pose", t)] = pf;
    const std::string kf = frame_key("intrinsics", t) + ".c4dt";
    write_tensor((fs::path(dir) / kf).string(),
                 intrinsics_to_tensor(out.intrinsics[t]));
    frames[frame_key("intrinsics", t)] = kf;
    const std::string mf = frame_key("mask", t) + ".c4dt";
    write_tensor((fs::path(dir) / mf).string(), mask_to_tensor(out.masks[t]));
    masks[frame_key("mask", t)] = mf;
  }
  j["frames"] = frames;
  j["masks"] = masks;
  save_tracks(dir, j["tracks"], out.tracks, "tracks");

  if (!out.tracks3d.empty()) {
    const uint32_t n = static_cast<uint32_t>(out.tracks.num_tracks);
    const uint32_t t = static_cast<uint32_t>(out.tracks.num_frames);
    std::vector<float> pts(out.tracks3d.size() * 3);
    for (size_t i = 0; i < out.tracks3d.size(); ++i) {
      pts[3 * i] = static_cast<float>(out.tracks3d[i].x());
      pts[3 * i + 1] = static_cast<float>(out.tracks3d[i].y());
      pts[3 * i + 2] = static_cast<float>(out.tracks3d[i].z());
    }
    write_tensor((fs::path(dir) / "tracks3d_points.c4dt").string(),
                 Tensor::make_f32({n, t, 3}, std::move(pts)));
    write_tensor((fs::path(dir) / "tracks3d_visibility.c4dt").string(),
                 Tensor::make_u8({n, t}, out.tracks3d_visibility));
    j["tracks3d"] = {{"points", "tracks3d_points.c4dt"},
                     {"visibility", "tracks3d_visibility.c4dt"}};
  }

  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

void export_ply(const std::vector<Grid<Vec3>>& world_points,
                const std::vector<Grid<uint8_t>>* validity,
                const std::vector<Grid<Vec3>>* colors,
                const std::vector<Grid<uint8_t>>* dynamic_masks,
                const std::string& path, const PlyOptions& options) {
  struct Vertex {
    float x, y, z;
    uint8_t r, g, b;
  };
  const bool with_color = colors != nullptr || options.flag_dynamic_red;
  std::vector<Vertex> verts;
  for (size_t t = 0; t < world_points.size(); ++t) {
    const Grid<Vec3>& pm = world_points[t];
    for (int j = 0; j < pm.height(); ++j) {
      for (int i = 0; i < pm.width(); ++i) {
        if (validity && !(*validity)[t].at(i, j)) continue;
        const bool dyn = dynamic_masks && (*dynamic_masks)[t].at(i, j);
        if (options.drop_dynamic && dyn) continue;
        const Vec3& p = pm.at(i, j);
        Vertex v{static_cast<float>(p.x()), static_cast<float>(p.y()),
                 static_cast<float>(p.z()), 200, 200, 200};
        if (colors) {
          const Vec3& c = (*colors)[t].at(i, j);
          v.r = static_cast<uint8_t>(std::clamp(c.x(), 0.0, 255.0));
          v.g = static_cast<uint8_t>(std::clamp(c.y(), 0.0, 255.0));
          v.b = static_cast<uint8_t>(std::clamp(c.z(), 0.0, 255.0));
        }
        if (options.flag_dynamic_red && dyn) {
          v.r = 255;
          v.g = 0;
          v.b = 0;
        }
        verts.push_back(v);
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open for write: " + path);
  f << "ply\n";
  f << (options.binary ? "format binary_little_endian 1.0\n"
                       : "format ascii 1.0\n");
  f << "element vertex " << verts.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  if (with_color)
    f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  for (const Vertex& v : verts) {
    if (options.binary) {
      f.write(reinterpret_cast<const char*>(&v.x), 4);
      f.write(reinterpret_cast<const char*>(&v.y), 4);
      f.write(reinterpret_cast<const char*>(&v.z), 4);
      if (with_color) {
        f.put(static_cast<char>(v.r));
        f.put(static_cast<char>(v.g));
        f.put(static_cast<char>(v.b));
      }
    } else {
      f << v.x << " " << v.y << " " << v.z;
      if (with_color)
        f << " " << int(v.r) << " " << int(v.g) << " " << int(v.b);
      f << "\n";
    }
  }
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

}  // namespace c4d
