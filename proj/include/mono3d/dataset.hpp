#pragma once
// Dataset generation and the on-disk scene format: one tensor file per map
// (NOC, mask, instance, depth, features) tied together by manifest.json.
// Everything is a pure function of (arguments, seed), so regenerating a
// dataset reproduces it byte for byte.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mono3d/scene.hpp"
#include "mono3d/solvers.hpp"
#include "mono3d/tensor_io.hpp"

namespace mono3d {

// Sampling ranges for synthetic scenes. Box centers are drawn by picking a
// projected center inside the image (u/v fractions) and a depth, then
// backprojecting, so every object is visible by construction.
struct SceneRanges {
  int width = 160, height = 120;
  double fx = 160, fy = 160, cx = 80, cy = 60;
  double depth_lo = 5.0, depth_hi = 60.0;
  double u_frac_lo = 0.30, u_frac_hi = 0.70;
  double v_frac_lo = 0.40, v_frac_hi = 0.65;
  double w_lo = 1.5, w_hi = 2.0;
  double h_lo = 1.3, h_hi = 1.8;
  double l_lo = 3.5, l_hi = 4.6;
  int boxes_per_scene = 1;
  int feature_channels = 8;

  void validate() const {
    if (width <= 0 || height <= 0 || boxes_per_scene < 1 || feature_channels < 1 ||
        !(depth_lo > 0) || !(depth_lo < depth_hi) || !(w_lo > 0) || !(h_lo > 0) ||
        !(l_lo > 0) || w_hi < w_lo || h_hi < h_lo || l_hi < l_lo) {
      throw InvalidInputError("SceneRanges: inconsistent ranges");
    }
  }

  CameraIntrinsics camera() const { return CameraIntrinsics(fx, fy, cx, cy); }
};

struct GeneratedScene {
  SceneSample sample;                   // corrupted maps + proposals, GT boxes
  std::vector<KeypointSet> keypoints;   // observed corners per instance
};

// Deterministic scene synthesis: boxes, render, features, corruption and
// corner observations each draw from an independent (seed, scene, stage)
// stream, so scenes can be generated in any order or in parallel.
inline GeneratedScene make_scene(const SceneRanges& ranges, const CorruptionConfig& cfg,
                                 std::uint64_t seed, int scene_index) {
  ranges.validate();
  cfg.validate();
  const CameraIntrinsics K = ranges.camera();
  Rng rng = Rng::stream(seed, {kStageScene, static_cast<std::uint64_t>(scene_index)});

  std::vector<Box3D> boxes;
  for (int b = 0; b < ranges.boxes_per_scene; ++b) {
    const double z = rng.uniform(ranges.depth_lo, ranges.depth_hi);
    const double u = ranges.width * rng.uniform(ranges.u_frac_lo, ranges.u_frac_hi);
    const double v = ranges.height * rng.uniform(ranges.v_frac_lo, ranges.v_frac_hi);
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Dimensions dims(rng.uniform(ranges.w_lo, ranges.w_hi),
                          rng.uniform(ranges.h_lo, ranges.h_hi),
                          rng.uniform(ranges.l_lo, ranges.l_hi));
    boxes.push_back(Box3D{ObjectPose(yaw, backproject(K, {u, v}, z)), dims, 0});
  }

  SceneSample sample = render_scene(boxes, K, ranges.width, ranges.height);
  const std::uint64_t feature_seed =
      Rng::stream(seed, {kStageScene, static_cast<std::uint64_t>(scene_index),
                         kStageFeatureWave})
          .next_u64();
  sample.features = render_features(sample, ranges.feature_channels, feature_seed);
  const std::uint64_t corrupt_seed =
      Rng::stream(seed, {kStageScene, static_cast<std::uint64_t>(scene_index),
                         kStageNocNoise})
          .next_u64();
  sample.rng_seed = seed;
  GeneratedScene out;
  out.sample = corrupt(sample, cfg, corrupt_seed);

  Rng corner_rng = Rng::stream(seed, {kStageScene, static_cast<std::uint64_t>(scene_index),
                                      kStageCorners});
  for (const Box3D& gt : boxes) {
    KeypointSet kps;
    const auto corners = box_corners(gt);
    for (std::size_t i = 0; i < corners.size(); ++i) {
      const double du = corner_rng.normal() * cfg.corner_noise_px;
      const double dv = corner_rng.normal() * cfg.corner_noise_px;
      const bool occluded = corner_rng.bernoulli(cfg.corner_occlusion_prob);
      const auto projected = try_project(K, corners[i]);
      if (!projected) {
        kps.valid[i] = false;
        continue;
      }
      kps.corners[i] = PixelPoint{projected->u + du, projected->v + dv};
      kps.valid[i] = !occluded;
    }
    out.keypoints.push_back(kps);
  }
  return out;
}

struct SceneEntry {
  int id = 0;
  int width = 0, height = 0;
  CameraIntrinsics camera;
  std::string noc_file, mask_file, instance_file, depth_file, features_file;
  std::vector<Box3D> boxes;
  std::vector<Box3D> proposals;
  std::vector<double> proposal_depth_sigma;
  std::vector<KeypointSet> keypoints;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  SceneRanges ranges;
  CorruptionConfig corruption;
  std::vector<SceneEntry> scenes;
};

namespace detail {

using Json = nlohmann::ordered_json;

inline Json box_to_json(const Box3D& b) {
  Json j;
  j["yaw"] = b.pose.yaw;
  j["center"] = {b.pose.center.x(), b.pose.center.y(), b.pose.center.z()};
  j["dims"] = {b.dims.w, b.dims.h, b.dims.l};
  j["class_id"] = b.class_id;
  return j;
}

inline Box3D box_from_json(const nlohmann::json& j) {
  const auto c = j.at("center");
  const auto d = j.at("dims");
  return Box3D{ObjectPose(j.at("yaw").get<double>(),
                          {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()}),
               Dimensions(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()),
               j.at("class_id").get<int>()};
}

inline Json ranges_to_json(const SceneRanges& r) {
  Json j;
  j["width"] = r.width;
  j["height"] = r.height;
  j["fx"] = r.fx;
  j["fy"] = r.fy;
  j["cx"] = r.cx;
  j["cy"] = r.cy;
  j["depth_lo"] = r.depth_lo;
  j["depth_hi"] = r.depth_hi;
  j["u_frac_lo"] = r.u_frac_lo;
  j["u_frac_hi"] = r.u_frac_hi;
  j["v_frac_lo"] = r.v_frac_lo;
  j["v_frac_hi"] = r.v_frac_hi;
  j["w_lo"] = r.w_lo;
  j["w_hi"] = r.w_hi;
  j["h_lo"] = r.h_lo;
  j["h_hi"] = r.h_hi;
  j["l_lo"] = r.l_lo;
  j["l_hi"] = r.l_hi;
  j["boxes_per_scene"] = r.boxes_per_scene;
  j["feature_channels"] = r.feature_channels;
  return j;
}

inline SceneRanges ranges_from_json(const nlohmann::json& j) {
  SceneRanges r;
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.fx = j.at("fx").get<double>();
  r.fy = j.at("fy").get<double>();
  r.cx = j.at("cx").get<double>();
  r.cy = j.at("cy").get<double>();
  r.depth_lo = j.at("depth_lo").get<double>();
  r.depth_hi = j.at("depth_hi").get<double>();
  r.u_frac_lo = j.at("u_frac_lo").get<double>();
  r.u_frac_hi = j.at("u_frac_hi").get<double>();
  r.v_frac_lo = j.at("v_frac_lo").get<double>();
  r.v_frac_hi = j.at("v_frac_hi").get<double>();
  r.w_lo = j.at("w_lo").get<double>();
  r.w_hi = j.at("w_hi").get<double>();
  r.h_lo = j.at("h_lo").get<double>();
  r.h_hi = j.at("h_hi").get<double>();
  r.l_lo = j.at("l_lo").get<double>();
  r.l_hi = j.at("l_hi").get<double>();
  r.boxes_per_scene = j.at("boxes_per_scene").get<int>();
  r.feature_channels = j.at("feature_channels").get<int>();
  return r;
}

inline Json corruption_to_json(const CorruptionConfig& c) {
  Json j;
  j["noc_noise_sigma"] = c.noc_noise_sigma;
  j["textureless_patch_fraction"] = c.textureless_patch_fraction;
  j["textureless_noc_noise_mult"] = c.textureless_noc_noise_mult;
  j["pose_depth_sigma"] = c.pose_depth_sigma;
  j["pose_depth_sigma_rel"] = c.pose_depth_sigma_rel;
  j["yaw_sigma"] = c.yaw_sigma;
  j["dims_sigma_frac"] = c.dims_sigma_frac;
  j["occluder_count"] = c.occluder_count;
  j["corner_noise_px"] = c.corner_noise_px;
  j["corner_occlusion_prob"] = c.corner_occlusion_prob;
  return j;
}

inline CorruptionConfig corruption_from_json(const nlohmann::json& j) {
  CorruptionConfig c;
  c.noc_noise_sigma = j.value("noc_noise_sigma", 0.0);
  c.textureless_patch_fraction = j.value("textureless_patch_fraction", 0.0);
  c.textureless_noc_noise_mult = j.value("textureless_noc_noise_mult", 4.0);
  c.pose_depth_sigma = j.value("pose_depth_sigma", 0.0);
  c.pose_depth_sigma_rel = j.value("pose_depth_sigma_rel", 0.0);
  c.yaw_sigma = j.value("yaw_sigma", 0.0);
  c.dims_sigma_frac = j.value("dims_sigma_frac", 0.0);
  c.occluder_count = j.value("occluder_count", 0);
  c.corner_noise_px = j.value("corner_noise_px", 0.0);
  c.corner_occlusion_prob = j.value("corner_occlusion_prob", 0.0);
  c.validate();
  return c;
}

inline std::string scene_file_name(int id, const char* map) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scene_%06d_%s.bin", id, map);
  return buf;
}

inline TensorF32 map_to_tensor(const NocMap& noc, const char* which) {
  TensorF32 t;
  if (std::string(which) == "noc") {
    t.name = "noc";
    t.shape = {static_cast<std::size_t>(noc.height), static_cast<std::size_t>(noc.width), 3};
    t.data.reserve(noc.coords.size() * 3);
    for (const auto& c : noc.coords) {
      t.data.push_back(static_cast<float>(c.x()));
      t.data.push_back(static_cast<float>(c.y()));
      t.data.push_back(static_cast<float>(c.z()));
    }
  } else if (std::string(which) == "mask") {
    t.name = "mask";
    t.shape = {static_cast<std::size_t>(noc.height), static_cast<std::size_t>(noc.width)};
    for (auto v : noc.valid) t.data.push_back(static_cast<float>(v));
  } else {
    t.name = "instance";
    t.shape = {static_cast<std::size_t>(noc.height), static_cast<std::size_t>(noc.width)};
    for (auto v : noc.instance) t.data.push_back(static_cast<float>(v));
  }
  return t;
}

}  // namespace detail

// Writes the scene maps + manifest.json under out_dir and returns the
// manifest. I/O failures surface with the offending path.
inline DatasetManifest generate_dataset(int scene_count, const SceneRanges& ranges,
                                        const CorruptionConfig& cfg, std::uint64_t seed,
                                        const std::filesystem::path& out_dir) {
  if (scene_count < 0) throw InvalidInputError("generate_dataset: negative scene count");
  ranges.validate();
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.ranges = ranges;
  manifest.corruption = cfg;

  detail::Json scenes_json = detail::Json::array();
  for (int id = 0; id < scene_count; ++id) {
    const GeneratedScene g = make_scene(ranges, cfg, seed, id);
    const SceneSample& s = g.sample;

    SceneEntry entry;
    entry.id = id;
    entry.width = s.width;
    entry.height = s.height;
    entry.camera = s.camera;
    entry.noc_file = detail::scene_file_name(id, "noc");
    entry.mask_file = detail::scene_file_name(id, "mask");
    entry.instance_file = detail::scene_file_name(id, "instance");
    entry.depth_file = detail::scene_file_name(id, "depth");
    entry.features_file = detail::scene_file_name(id, "features");
    entry.boxes = s.boxes;
    entry.proposals = s.proposals;
    entry.proposal_depth_sigma = s.proposal_depth_sigma;
    entry.keypoints = g.keypoints;

    write_tensor(out_dir / entry.noc_file, detail::map_to_tensor(s.noc, "noc"));
    write_tensor(out_dir / entry.mask_file, detail::map_to_tensor(s.noc, "mask"));
    write_tensor(out_dir / entry.instance_file, detail::map_to_tensor(s.noc, "instance"));
    {
      TensorF32 t;
      t.name = "depth";
      t.shape = {static_cast<std::size_t>(s.height), static_cast<std::size_t>(s.width)};
      for (double v : s.depth.depth) t.data.push_back(static_cast<float>(v));
      write_tensor(out_dir / entry.depth_file, t);
    }
    {
      TensorF32 t;
      t.name = "features";
      t.shape = {static_cast<std::size_t>(s.height), static_cast<std::size_t>(s.width),
                 static_cast<std::size_t>(s.features.channels)};
      for (double v : s.features.values) t.data.push_back(static_cast<float>(v));
      write_tensor(out_dir / entry.features_file, t);
    }

    detail::Json sj;
    sj["id"] = id;
    sj["width"] = entry.width;
    sj["height"] = entry.height;
    sj["camera"] = {{"fx", s.camera.fx}, {"fy", s.camera.fy}, {"cx", s.camera.cx},
                    {"cy", s.camera.cy}};
    sj["files"] = {{"noc", entry.noc_file},
                   {"mask", entry.mask_file},
                   {"instance", entry.instance_file},
                   {"depth", entry.depth_file},
                   {"features", entry.features_file}};
    sj["boxes"] = detail::Json::array();
    for (const auto& b : entry.boxes) sj["boxes"].push_back(detail::box_to_json(b));
    sj["proposals"] = detail::Json::array();
    for (const auto& b : entry.proposals) sj["proposals"].push_back(detail::box_to_json(b));
    sj["proposal_depth_sigma"] = entry.proposal_depth_sigma;
    sj["keypoints"] = detail::Json::array();
    for (const auto& kp : entry.keypoints) {
      detail::Json kj;
      kj["u"] = detail::Json::array();
      kj["v"] = detail::Json::array();
      kj["valid"] = detail::Json::array();
      for (std::size_t i = 0; i < 8; ++i) {
        kj["u"].push_back(kp.corners[i].u);
        kj["v"].push_back(kp.corners[i].v);
        kj["valid"].push_back(kp.valid[i]);
      }
      sj["keypoints"].push_back(kj);
    }
    scenes_json.push_back(sj);
    manifest.scenes.push_back(std::move(entry));
  }

  detail::Json root;
  root["format"] = "mono3d-dataset-v1";
  root["seed"] = seed;
  root["scene_count"] = scene_count;
  root["ranges"] = detail::ranges_to_json(ranges);
  root["corruption"] = detail::corruption_to_json(cfg);
  root["scenes"] = scenes_json;

  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + manifest_path.string());
  out << root.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest_path.string());
  return manifest;
}

inline DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || root.value("format", "") != "mono3d-dataset-v1") {
    throw CorruptDataError(manifest_path.string() + ": not a mono3d dataset manifest");
  }
  DatasetManifest manifest;
  manifest.seed = root.at("seed").get<std::uint64_t>();
  manifest.ranges = detail::ranges_from_json(root.at("ranges"));
  manifest.corruption = detail::corruption_from_json(root.at("corruption"));
  for (const auto& sj : root.at("scenes")) {
    SceneEntry entry;
    entry.id = sj.at("id").get<int>();
    entry.width = sj.at("width").get<int>();
    entry.height = sj.at("height").get<int>();
    entry.camera = CameraIntrinsics(sj.at("camera").at("fx").get<double>(),
                                    sj.at("camera").at("fy").get<double>(),
                                    sj.at("camera").at("cx").get<double>(),
                                    sj.at("camera").at("cy").get<double>());
    entry.noc_file = sj.at("files").at("noc").get<std::string>();
    entry.mask_file = sj.at("files").at("mask").get<std::string>();
    entry.instance_file = sj.at("files").at("instance").get<std::string>();
    entry.depth_file = sj.at("files").at("depth").get<std::string>();
    entry.features_file = sj.at("files").at("features").get<std::string>();
    for (const auto& bj : sj.at("boxes")) entry.boxes.push_back(detail::box_from_json(bj));
    for (const auto& bj : sj.at("proposals")) {
      entry.proposals.push_back(detail::box_from_json(bj));
    }
    entry.proposal_depth_sigma =
        sj.at("proposal_depth_sigma").get<std::vector<double>>();
    for (const auto& kj : sj.at("keypoints")) {
      KeypointSet kp;
      for (std::size_t i = 0; i < 8; ++i) {
        kp.corners[i] = PixelPoint{kj.at("u").at(i).get<double>(),
                                   kj.at("v").at(i).get<double>()};
        kp.valid[i] = kj.at("valid").at(i).get<bool>();
      }
      entry.keypoints.push_back(kp);
    }
    manifest.scenes.push_back(std::move(entry));
  }
  return manifest;
}

// Loads one scene back from its tensor files (float32 on disk -> double).
inline GeneratedScene load_scene(const DatasetManifest& manifest, std::size_t index,
                                 const std::filesystem::path& base_dir) {
  if (index >= manifest.scenes.size()) {
    throw InvalidInputError("load_scene: scene index out of range");
  }
  const SceneEntry& entry = manifest.scenes[index];
  const TensorF32 noc_t = read_tensor(base_dir / entry.noc_file);
  const TensorF32 mask_t = read_tensor(base_dir / entry.mask_file);
  const TensorF32 inst_t = read_tensor(base_dir / entry.instance_file);
  const TensorF32 depth_t = read_tensor(base_dir / entry.depth_file);
  const TensorF32 feat_t = read_tensor(base_dir / entry.features_file);

  const std::size_t n = static_cast<std::size_t>(entry.width) *
                        static_cast<std::size_t>(entry.height);
  if (noc_t.data.size() != n * 3 || mask_t.data.size() != n ||
      inst_t.data.size() != n || depth_t.data.size() != n ||
      feat_t.data.size() % n != 0) {
    throw CorruptDataError("load_scene: tensor sizes disagree with manifest for scene " +
                           std::to_string(entry.id));
  }

  GeneratedScene g;
  SceneSample& s = g.sample;
  s.camera = entry.camera;
  s.width = entry.width;
  s.height = entry.height;
  s.boxes = entry.boxes;
  s.proposals = entry.proposals;
  s.proposal_depth_sigma = entry.proposal_depth_sigma;
  s.rng_seed = manifest.seed;
  s.noc = NocMap(entry.width, entry.height);
  s.depth = DepthMap(entry.width, entry.height);
  const int channels = static_cast<int>(feat_t.data.size() / n);
  s.features = FeatureMap(entry.width, entry.height, channels);
  for (std::size_t i = 0; i < n; ++i) {
    const bool valid = mask_t.data[i] != 0.0f;
    s.noc.valid[i] = valid ? 1 : 0;
    s.noc.instance[i] = static_cast<std::int32_t>(inst_t.data[i]);
    if (valid) {
      s.noc.coords[i] = Eigen::Vector3d(noc_t.data[i * 3], noc_t.data[i * 3 + 1],
                                        noc_t.data[i * 3 + 2]);
      s.depth.depth[i] = depth_t.data[i];
      s.depth.valid[i] = 1;
    }
  }
  for (std::size_t i = 0; i < feat_t.data.size(); ++i) {
    s.features.values[i] = feat_t.data[i];
  }
  g.keypoints = entry.keypoints;
  return g;
}

}  // namespace mono3d
