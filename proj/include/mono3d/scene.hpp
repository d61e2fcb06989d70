#pragma once
// Synthetic scene harness: ray-casts cuboid scenes into ground-truth NOC,
// depth and validity maps, renders procedural semantic features, and applies
// controllable corruption that stands in for learned-network error.
//
// Pixel (x, y) samples the ray through (x + 0.5, y + 0.5). Rays are
// parameterized by camera-frame depth z, so recorded depths are z values,
// not ray lengths. Surface NOC points have one coordinate at +-1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mono3d/geometry.hpp"

namespace mono3d {

struct PixelRect {
  int x = 0, y = 0, width = 0, height = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
  bool empty() const { return width <= 0 || height <= 0; }
};

// Per-pixel normalized object coordinates. Invalid pixels carry NaN coords
// and instance -1; energy ops never read them (NaN-poisoning tested).
struct NocMap {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3d> coords;
  std::vector<std::uint8_t> valid;
  std::vector<std::int32_t> instance;

  NocMap() = default;
  NocMap(int w, int h)
      : width(w),
        height(h),
        coords(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
               Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN())),
        valid(coords.size(), 0),
        instance(coords.size(), -1) {
    if (w <= 0 || h <= 0) throw InvalidInputError("NocMap: empty dimensions");
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
};

struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0),
        valid(depth.size(), 0) {}

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
};

// Dense per-pixel feature vectors, row-major with channel fastest.
// channels == 0 is a legal featureless map (geometry-only cost volumes).
struct FeatureMap {
  int width = 0, height = 0, channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int w, int h, int c)
      : width(w), height(h), channels(c),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                   static_cast<std::size_t>(c),
               0.0) {
    if (w <= 0 || h <= 0 || c < 0) throw InvalidInputError("FeatureMap: bad dimensions");
  }

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(channels);
  }
  double* at(int x, int y) { return values.data() + index(x, y); }
  const double* at(int x, int y) const { return values.data() + index(x, y); }
};

// Stand-ins for proposal-stage error. All sigmas >= 0, fractions in [0, 1].
// Textureless patches flatten semantic features AND degrade the NOC estimate
// inside the patch (noise sigma multiplied by textureless_noc_noise_mult),
// mirroring how correspondence networks fail on untextured regions.
struct CorruptionConfig {
  double noc_noise_sigma = 0.0;            // NOC units, per axis
  double textureless_patch_fraction = 0.0; // fraction of valid pixels
  double textureless_noc_noise_mult = 4.0;
  double pose_depth_sigma = 0.0;           // meters
  double pose_depth_sigma_rel = 0.0;       // meters of sigma per meter of depth
  double yaw_sigma = 0.0;                  // radians
  double dims_sigma_frac = 0.0;            // relative
  int occluder_count = 0;
  double corner_noise_px = 0.0;            // keypoint observation noise
  double corner_occlusion_prob = 0.0;      // per-corner dropout probability

  void validate() const {
    const bool sigmas_ok = noc_noise_sigma >= 0 && pose_depth_sigma >= 0 &&
                           pose_depth_sigma_rel >= 0 && yaw_sigma >= 0 &&
                           dims_sigma_frac >= 0 && corner_noise_px >= 0 &&
                           textureless_noc_noise_mult >= 0;
    const bool fracs_ok = textureless_patch_fraction >= 0 &&
                          textureless_patch_fraction <= 1 &&
                          corner_occlusion_prob >= 0 && corner_occlusion_prob <= 1;
    if (!sigmas_ok || !fracs_ok || occluder_count < 0) {
      throw InvalidInputError("CorruptionConfig: sigma/fraction out of range");
    }
  }
};

struct SceneSample {
  CameraIntrinsics camera;
  int width = 0, height = 0;
  std::vector<Box3D> boxes;      // ground truth, immutable reference
  std::vector<Box3D> proposals;  // corrupted copies (== boxes when clean)
  std::vector<double> proposal_depth_sigma;  // belief sigma per instance
  NocMap noc;
  DepthMap depth;
  FeatureMap features;
  std::uint64_t rng_seed = 0;
};

// RNG stage keys; one independent stream per (seed, stage, ...) tuple.
inline constexpr std::uint64_t kStageFeatureWave = 0xF001;
inline constexpr std::uint64_t kStageFeaturePhase = 0xF002;
inline constexpr std::uint64_t kStagePatches = 0xC001;
inline constexpr std::uint64_t kStageNocNoise = 0xC002;
inline constexpr std::uint64_t kStageOccluders = 0xC003;
inline constexpr std::uint64_t kStageProposals = 0xC004;
inline constexpr std::uint64_t kStageCorners = 0xC005;
inline constexpr std::uint64_t kStageScene = 0xA001;

namespace detail {

// Ray/oriented-box intersection in the object frame. The ray is
// p(t) = origin + t * dir with t the camera-frame depth; returns the entry
// depth into [-1,1]^3 or nullopt.
inline std::optional<double> ray_box_entry(const Eigen::Vector3d& origin,
                                           const Eigen::Vector3d& dir) {
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = origin[a], d = dir[a];
    if (std::abs(d) < 1e-14) {
      if (std::abs(o) > 1.0) return std::nullopt;
      continue;
    }
    double t1 = (-1.0 - o) / d;
    double t2 = (1.0 - o) / d;
    if (t1 > t2) std::swap(t1, t2);
    t_lo = std::max(t_lo, t1);
    t_hi = std::min(t_hi, t2);
  }
  if (t_lo > t_hi || !(t_lo > kMinDepth)) return std::nullopt;
  return t_lo;
}

}  // namespace detail

// Casts one ray per pixel, intersects every box, keeps the nearest hit
// (z-buffer) and records the hit point in object coordinates. Deterministic.
inline SceneSample render_scene(const std::vector<Box3D>& boxes,
                                const CameraIntrinsics& K, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw InvalidInputError("render_scene: image must be non-empty");
  }
  for (const Box3D& b : boxes) {
    if (!(b.pose.center.z() > 0)) {
      throw InvalidInputError("render_scene: every box needs z > 0");
    }
  }

  SceneSample s;
  s.camera = K;
  s.width = width;
  s.height = height;
  s.boxes = boxes;
  s.proposals = boxes;
  s.proposal_depth_sigma.assign(boxes.size(), 0.0);
  s.noc = NocMap(width, height);
  s.depth = DepthMap(width, height);
  s.features = FeatureMap(width, height, 0);

  struct BoxFrame {
    Eigen::Matrix3d to_obj;      // S^-1 * R^T
    Eigen::Vector3d origin_obj;  // camera origin in the object frame
  };
  std::vector<BoxFrame> frames;
  frames.reserve(boxes.size());
  for (const Box3D& b : boxes) {
    const Eigen::Matrix3d rt = rotation_y(b.pose.yaw).transpose();
    const Eigen::Vector3d inv_scale(2.0 / b.dims.w, 2.0 / b.dims.h, 2.0 / b.dims.l);
    BoxFrame f;
    f.to_obj = inv_scale.asDiagonal() * rt;
    f.origin_obj = f.to_obj * (-b.pose.center);
    frames.push_back(f);
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d dir((x + 0.5 - K.cx) / K.fx, (y + 0.5 - K.cy) / K.fy, 1.0);
      double best_t = std::numeric_limits<double>::infinity();
      int best_box = -1;
      for (std::size_t b = 0; b < frames.size(); ++b) {
        const Eigen::Vector3d dir_obj = frames[b].to_obj * dir;
        if (auto t = detail::ray_box_entry(frames[b].origin_obj, dir_obj)) {
          if (*t < best_t) {
            best_t = *t;
            best_box = static_cast<int>(b);
          }
        }
      }
      if (best_box < 0) continue;
      const std::size_t i = s.noc.index(x, y);
      const Eigen::Vector3d dir_obj = frames[static_cast<std::size_t>(best_box)].to_obj * dir;
      s.noc.coords[i] = frames[static_cast<std::size_t>(best_box)].origin_obj + best_t * dir_obj;
      s.noc.valid[i] = 1;
      s.noc.instance[i] = best_box;
      s.depth.depth[i] = best_t;
      s.depth.valid[i] = 1;
    }
  }
  return s;
}

// Procedural semantic features: channel c of a pixel with instance id i and
// normalized coordinate n is
//     sin(pi * dot(k_c, n) + phi_{i,c})
// where the integer wave vector k_c (components in {+-1,+-2,+-3}) comes from
// Rng::stream(seed, {kStageFeatureWave, c}) as (uniform_int(1,3) * sign) per
// axis, and phi_{i,c} = 2*pi*uniform() from
// Rng::stream(seed, {kStageFeaturePhase, i, c}). Features depend only on
// (instance, NOC), so the same object-surface point yields the same feature
// at any depth; invalid pixels are zero.
inline FeatureMap render_features(const SceneSample& sample, int channels,
                                  std::uint64_t seed) {
  if (channels < 1) throw InvalidInputError("render_features: channels must be >= 1");
  FeatureMap out(sample.width, sample.height, channels);

  std::vector<Eigen::Vector3d> waves;
  waves.reserve(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    Rng rng = Rng::stream(seed, {kStageFeatureWave, static_cast<std::uint64_t>(c)});
    Eigen::Vector3d k;
    for (int a = 0; a < 3; ++a) {
      const double mag = rng.uniform_int(1, 3);
      k[a] = rng.bernoulli(0.5) ? mag : -mag;
    }
    waves.push_back(k);
  }

  const int n_instances = static_cast<int>(sample.boxes.size());
  std::vector<double> phases(static_cast<std::size_t>(std::max(n_instances, 1)) *
                             static_cast<std::size_t>(channels));
  for (int i = 0; i < n_instances; ++i) {
    for (int c = 0; c < channels; ++c) {
      Rng rng = Rng::stream(seed, {kStageFeaturePhase, static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(c)});
      phases[static_cast<std::size_t>(i) * static_cast<std::size_t>(channels) +
             static_cast<std::size_t>(c)] = 2.0 * std::numbers::pi * rng.uniform();
    }
  }

  for (int y = 0; y < sample.height; ++y) {
    for (int x = 0; x < sample.width; ++x) {
      const std::size_t i = sample.noc.index(x, y);
      if (!sample.noc.valid[i]) continue;
      const int inst = sample.noc.instance[i];
      const Eigen::Vector3d& n = sample.noc.coords[i];
      double* f = out.at(x, y);
      for (int c = 0; c < channels; ++c) {
        const double phase = phases[static_cast<std::size_t>(inst) *
                                        static_cast<std::size_t>(channels) +
                                    static_cast<std::size_t>(c)];
        f[c] = std::sin(std::numbers::pi * waves[static_cast<std::size_t>(c)].dot(n) + phase);
      }
    }
  }
  return out;
}

// Applies the corruption model to copies; ground-truth boxes are never
// touched. Deterministic in (sample, cfg, seed); an all-zero config returns
// the sample bitwise unchanged.
inline SceneSample corrupt(const SceneSample& sample, const CorruptionConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  SceneSample out = sample;

  const std::size_t n_px = out.noc.coords.size();

  // Bounding rectangle of valid pixels; patches and occluders sample inside it.
  int bx0 = out.width, by0 = out.height, bx1 = -1, by1 = -1;
  std::size_t n_valid = 0;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      if (!out.noc.valid[out.noc.index(x, y)]) continue;
      ++n_valid;
      bx0 = std::min(bx0, x);
      by0 = std::min(by0, y);
      bx1 = std::max(bx1, x);
      by1 = std::max(by1, y);
    }
  }

  std::vector<std::uint8_t> in_patch(n_px, 0);
  if (cfg.textureless_patch_fraction > 0 && n_valid > 0) {
    Rng rng = Rng::stream(seed, {kStagePatches});
    const std::size_t target = static_cast<std::size_t>(
        std::llround(cfg.textureless_patch_fraction * static_cast<double>(n_valid)));
    const int bw = bx1 - bx0 + 1, bh = by1 - by0 + 1;
    std::size_t flattened = 0;
    for (int attempt = 0; attempt < 20000 && flattened < target; ++attempt) {
      const int pw = std::max(1, static_cast<int>(std::lround(rng.uniform(0.04, 0.15) * bw)));
      const int ph = std::max(1, static_cast<int>(std::lround(rng.uniform(0.04, 0.15) * bh)));
      const int px0 = rng.uniform_int(bx0, std::max(bx0, bx1 - pw + 1));
      const int py0 = rng.uniform_int(by0, std::max(by0, by1 - ph + 1));
      const int px1 = std::min(px0 + pw - 1, out.width - 1);
      const int py1 = std::min(py0 + ph - 1, out.height - 1);

      // Flat value per patch: the mean original feature inside the patch.
      std::size_t count = 0;
      std::vector<double> mean(static_cast<std::size_t>(std::max(out.features.channels, 0)), 0.0);
      for (int y = py0; y <= py1; ++y) {
        for (int x = px0; x <= px1; ++x) {
          if (!out.noc.valid[out.noc.index(x, y)]) continue;
          ++count;
          const double* f = sample.features.channels > 0 ? sample.features.at(x, y) : nullptr;
          for (int c = 0; c < out.features.channels; ++c) mean[static_cast<std::size_t>(c)] += f[c];
        }
      }
      if (count == 0) continue;
      for (double& m : mean) m /= static_cast<double>(count);
      for (int y = py0; y <= py1; ++y) {
        for (int x = px0; x <= px1; ++x) {
          const std::size_t i = out.noc.index(x, y);
          if (!out.noc.valid[i]) continue;
          if (!in_patch[i]) {
            in_patch[i] = 1;
            ++flattened;
          }
          if (out.features.channels > 0) {
            double* f = out.features.at(x, y);
            for (int c = 0; c < out.features.channels; ++c) f[c] = mean[static_cast<std::size_t>(c)];
          }
        }
      }
    }
  }

  if (cfg.noc_noise_sigma > 0) {
    Rng rng = Rng::stream(seed, {kStageNocNoise});
    for (std::size_t i = 0; i < n_px; ++i) {
      if (!out.noc.valid[i]) continue;
      const double sigma = cfg.noc_noise_sigma *
                           (in_patch[i] ? cfg.textureless_noc_noise_mult : 1.0);
      for (int a = 0; a < 3; ++a) {
        out.noc.coords[i][a] =
            std::clamp(out.noc.coords[i][a] + rng.normal(0.0, sigma), -1.0, 1.0);
      }
    }
  }

  if (cfg.occluder_count > 0 && n_valid > 0) {
    Rng rng = Rng::stream(seed, {kStageOccluders});
    const int bw = bx1 - bx0 + 1, bh = by1 - by0 + 1;
    for (int k = 0; k < cfg.occluder_count; ++k) {
      const int pw = std::max(1, static_cast<int>(std::lround(rng.uniform(0.15, 0.35) * bw)));
      const int ph = std::max(1, static_cast<int>(std::lround(rng.uniform(0.15, 0.35) * bh)));
      const int px0 = rng.uniform_int(bx0, std::max(bx0, bx1 - pw + 1));
      const int py0 = rng.uniform_int(by0, std::max(by0, by1 - ph + 1));
      for (int y = py0; y <= std::min(py0 + ph - 1, out.height - 1); ++y) {
        for (int x = px0; x <= std::min(px0 + pw - 1, out.width - 1); ++x) {
          const std::size_t i = out.noc.index(x, y);
          out.noc.valid[i] = 0;
          out.noc.instance[i] = -1;
          out.noc.coords[i] = Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
          out.depth.valid[i] = 0;
          out.depth.depth[i] = 0.0;
          if (out.features.channels > 0) {
            double* f = out.features.at(x, y);
            for (int c = 0; c < out.features.channels; ++c) f[c] = 0.0;
          }
        }
      }
    }
  }

  const bool pose_stage = cfg.pose_depth_sigma > 0 || cfg.pose_depth_sigma_rel > 0 ||
                          cfg.yaw_sigma > 0 || cfg.dims_sigma_frac > 0;
  if (pose_stage) {
    Rng rng = Rng::stream(seed, {kStageProposals});
    for (std::size_t b = 0; b < out.boxes.size(); ++b) {
      const Box3D& gt = out.boxes[b];
      const double z = gt.pose.center.z();
      const double sigma_z = cfg.pose_depth_sigma + cfg.pose_depth_sigma_rel * z;
      // Noise draws are unconditional so that configs differing in one sigma
      // stay paired under the same seed.
      const double dz = rng.normal() * sigma_z;
      const double dyaw = rng.normal() * cfg.yaw_sigma;
      const double fw = std::max(0.2, 1.0 + rng.normal() * cfg.dims_sigma_frac);
      const double fh = std::max(0.2, 1.0 + rng.normal() * cfg.dims_sigma_frac);
      const double fl = std::max(0.2, 1.0 + rng.normal() * cfg.dims_sigma_frac);

      const double z_new = std::max(z + dz, 0.25);  // keep proposals in front
      const PixelPoint center_px = project(out.camera, gt.pose.center);
      Box3D prop = gt;
      prop.pose = ObjectPose(gt.pose.yaw + dyaw, backproject(out.camera, center_px, z_new));
      prop.dims = Dimensions(gt.dims.w * fw, gt.dims.h * fh, gt.dims.l * fl);
      out.proposals[b] = prop;
      out.proposal_depth_sigma[b] = sigma_z;
    }
  }

  return out;
}

}  // namespace mono3d
