#pragma once
// Pixel-level geometric, semantic and joint energies over a hypothesized box,
// bilinear feature sampling, depth->energy profiling and the Laplacian depth
// negative log-likelihood.
//
// Observed pixel locations are pixel centers (x+0.5, y+0.5) in image
// coordinates. Feature values live on the integer grid: a point p in image
// coordinates reads the grid at image_to_grid(p) = p - (0.5, 0.5).
// bilinear_sample takes grid coordinates and is exact at integers.
//
// Pixels whose transformed point lands behind the camera or outside the
// feature map are excluded from the means (never clamped) and reported in
// the breakdown.

#include <limits>
#include <vector>

#include "mono3d/scene.hpp"

namespace mono3d {

enum class PixelNorm { kL1, kL2 };

// Per-channel mean distances: kMeanL1 = sum|d|/C, kMeanL2 = sqrt(sum d^2 / C).
enum class FeatureMetric { kMeanL1, kMeanL2 };

struct EnergyConfig {
  double beta = 1.0;  // weight of the semantic term in the joint energy
  PixelNorm pixel_norm = PixelNorm::kL2;
  FeatureMetric feature_metric = FeatureMetric::kMeanL1;
  int min_pixels = 1;

  void validate() const {
    if (!std::isfinite(beta) || beta < 0) {
      throw InvalidInputError("EnergyConfig: beta must be finite and >= 0");
    }
    if (min_pixels < 1) throw InvalidInputError("EnergyConfig: min_pixels must be >= 1");
  }
};

struct PixelIndex {
  int x = 0, y = 0;
};
using PixelSet = std::vector<PixelIndex>;

// Valid pixels of the map, optionally restricted to one instance.
inline PixelSet pixels_from_mask(const NocMap& noc, int instance = -1) {
  PixelSet out;
  for (int y = 0; y < noc.height; ++y) {
    for (int x = 0; x < noc.width; ++x) {
      const std::size_t i = noc.index(x, y);
      if (!noc.valid[i]) continue;
      if (instance >= 0 && noc.instance[i] != instance) continue;
      out.push_back({x, y});
    }
  }
  return out;
}

inline PixelSet pixels_in_rect(PixelRect rect) {
  PixelSet out;
  out.reserve(static_cast<std::size_t>(std::max(rect.width, 0)) *
              static_cast<std::size_t>(std::max(rect.height, 0)));
  for (int y = rect.y; y < rect.y + rect.height; ++y) {
    for (int x = rect.x; x < rect.x + rect.width; ++x) out.push_back({x, y});
  }
  return out;
}

// Tight bounding rectangle (inclusive pixels -> width/height in pixels).
inline PixelRect pixel_set_bounds(const PixelSet& pixels) {
  if (pixels.empty()) return {};
  int x0 = pixels[0].x, x1 = pixels[0].x, y0 = pixels[0].y, y1 = pixels[0].y;
  for (const PixelIndex& p : pixels) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

struct EnergyBreakdown {
  int used = 0;
  int skipped_invalid = 0;
  int skipped_behind = 0;
  int skipped_outside = 0;
};

inline PixelPoint image_to_grid(PixelPoint p) { return {p.u - 0.5, p.v - 0.5}; }

inline bool in_grid_domain(const FeatureMap& map, PixelPoint g) {
  return g.u >= 0.0 && g.u <= map.width - 1 && g.v >= 0.0 && g.v <= map.height - 1;
}

namespace detail {

inline void bilinear_into(const FeatureMap& map, PixelPoint g, double* out) {
  int x0 = static_cast<int>(std::floor(g.u));
  int y0 = static_cast<int>(std::floor(g.v));
  x0 = std::clamp(x0, 0, map.width - 1);
  y0 = std::clamp(y0, 0, map.height - 1);
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const double fx = g.u - x0;
  const double fy = g.v - y0;
  const double* v00 = map.at(x0, y0);
  const double* v10 = map.at(x1, y0);
  const double* v01 = map.at(x0, y1);
  const double* v11 = map.at(x1, y1);
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy, w11 = fx * fy;
  for (int c = 0; c < map.channels; ++c) {
    out[c] = w00 * v00[c] + w10 * v10[c] + w01 * v01[c] + w11 * v11[c];
  }
}

inline double feature_distance(const double* a, const double* b, int channels,
                               FeatureMetric metric) {
  if (channels == 0) return 0.0;
  double acc = 0.0;
  if (metric == FeatureMetric::kMeanL1) {
    for (int c = 0; c < channels; ++c) acc += std::abs(a[c] - b[c]);
    return acc / channels;
  }
  for (int c = 0; c < channels; ++c) {
    const double d = a[c] - b[c];
    acc += d * d;
  }
  return std::sqrt(acc / channels);
}

inline double pixel_distance(double du, double dv, PixelNorm norm) {
  return norm == PixelNorm::kL2 ? std::sqrt(du * du + dv * dv)
                                : std::abs(du) + std::abs(dv);
}

}  // namespace detail

// Bilinear blend of the four neighbors at grid point g; exact at integers.
inline Eigen::VectorXd bilinear_sample(const FeatureMap& map, PixelPoint g) {
  if (map.width < 1 || map.height < 1) throw InvalidInputError("bilinear_sample: empty map");
  if (!in_grid_domain(map, g)) {
    throw OutOfBoundsError("bilinear_sample: point outside [0,W-1]x[0,H-1]");
  }
  Eigen::VectorXd out(map.channels);
  detail::bilinear_into(map, g, out.data());
  return out;
}

// Mean reprojection distance between each selected pixel and the projection
// of its normalized object coordinate under the hypothesized box.
inline double geometric_energy(const NocMap& noc, const PixelSet& pixels,
                               const Box3D& box, const CameraIntrinsics& K,
                               const EnergyConfig& cfg,
                               EnergyBreakdown* breakdown = nullptr) {
  cfg.validate();
  const Eigen::Matrix3d rs = rotation_scale_matrix(box.pose.yaw, box.dims);
  EnergyBreakdown d;
  double sum = 0.0;
  for (const PixelIndex& px : pixels) {
    if (px.x < 0 || px.x >= noc.width || px.y < 0 || px.y >= noc.height) {
      ++d.skipped_invalid;
      continue;
    }
    const std::size_t i = noc.index(px.x, px.y);
    if (!noc.valid[i]) {
      ++d.skipped_invalid;
      continue;
    }
    const Eigen::Vector3d p_cam = rs * noc.coords[i] + box.pose.center;
    const auto projected = try_project(K, p_cam);
    if (!projected) {
      ++d.skipped_behind;
      continue;
    }
    const double du = projected->u - (px.x + 0.5);
    const double dv = projected->v - (px.y + 0.5);
    sum += detail::pixel_distance(du, dv, cfg.pixel_norm);
    ++d.used;
  }
  if (d.used < cfg.min_pixels) {
    throw InsufficientSupportError("geometric_energy: " + std::to_string(d.used) +
                                   " usable pixels < min_pixels");
  }
  if (breakdown) *breakdown = d;
  return sum / d.used;
}

// Mean feature distance between the features at each pixel and at the
// projection of its NOC point. Projections outside the map are skipped.
inline double semantic_energy(const FeatureMap& features, const NocMap& noc,
                              const PixelSet& pixels, const Box3D& box,
                              const CameraIntrinsics& K, const EnergyConfig& cfg,
                              EnergyBreakdown* breakdown = nullptr) {
  cfg.validate();
  if (features.width != noc.width || features.height != noc.height) {
    throw InvalidInputError("semantic_energy: feature/NOC size mismatch");
  }
  const Eigen::Matrix3d rs = rotation_scale_matrix(box.pose.yaw, box.dims);
  EnergyBreakdown d;
  double sum = 0.0;
  std::vector<double> sampled(static_cast<std::size_t>(std::max(features.channels, 1)));
  for (const PixelIndex& px : pixels) {
    if (px.x < 0 || px.x >= noc.width || px.y < 0 || px.y >= noc.height) {
      ++d.skipped_invalid;
      continue;
    }
    const std::size_t i = noc.index(px.x, px.y);
    if (!noc.valid[i]) {
      ++d.skipped_invalid;
      continue;
    }
    const Eigen::Vector3d p_cam = rs * noc.coords[i] + box.pose.center;
    const auto projected = try_project(K, p_cam);
    if (!projected) {
      ++d.skipped_behind;
      continue;
    }
    const PixelPoint g = image_to_grid(*projected);
    if (!in_grid_domain(features, g)) {
      ++d.skipped_outside;
      continue;
    }
    // The source sample sits exactly on the integer grid point (x, y).
    detail::bilinear_into(features, g, sampled.data());
    sum += detail::feature_distance(features.at(px.x, px.y), sampled.data(),
                                    features.channels, cfg.feature_metric);
    ++d.used;
  }
  if (d.used < cfg.min_pixels) {
    throw InsufficientSupportError("semantic_energy: " + std::to_string(d.used) +
                                   " usable pixels < min_pixels");
  }
  if (breakdown) *breakdown = d;
  return sum / d.used;
}

// Dimensionless mix: geometric / ROI-diagonal + beta * semantic, with the ROI
// taken as the tight bounding rectangle of the selected pixel set.
inline double joint_energy(const FeatureMap& features, const NocMap& noc,
                           const PixelSet& pixels, const Box3D& box,
                           const CameraIntrinsics& K, const EnergyConfig& cfg,
                           EnergyBreakdown* breakdown = nullptr) {
  const PixelRect roi = pixel_set_bounds(pixels);
  if (roi.empty()) throw InsufficientSupportError("joint_energy: empty pixel set");
  const double diag_px = std::sqrt(static_cast<double>(roi.width) * roi.width +
                                   static_cast<double>(roi.height) * roi.height);
  EnergyBreakdown geo_d, sem_d;
  const double geo = geometric_energy(noc, pixels, box, K, cfg, &geo_d);
  const double sem = semantic_energy(features, noc, pixels, box, K, cfg, &sem_d);
  if (breakdown) {
    *breakdown = geo_d;
    breakdown->skipped_outside = sem_d.skipped_outside;
  }
  return geo / diag_px + cfg.beta * sem;
}

// Sampled depth -> energy curve. Failed evaluations are recorded as NaN gaps
// rather than aborting the profile.
struct EnergyProfile {
  std::vector<double> depths;
  std::vector<double> energies;
  double argmin_depth = std::numeric_limits<double>::quiet_NaN();
  int argmin_index = -1;
};

// energy_fn: double(const Box3D&). The box center slides along the ray
// through its projected center (box_at_depth) for each candidate depth.
template <typename EnergyFn>
EnergyProfile energy_profile(EnergyFn&& energy_fn, const Box3D& box,
                             const CameraIntrinsics& K, double depth_lo,
                             double depth_hi, int samples) {
  if (!(depth_lo < depth_hi)) throw InvalidInputError("energy_profile: empty range");
  if (samples < 2) throw InvalidInputError("energy_profile: need >= 2 samples");
  EnergyProfile profile;
  profile.depths.reserve(static_cast<std::size_t>(samples));
  profile.energies.reserve(static_cast<std::size_t>(samples));
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double z = depth_lo + (depth_hi - depth_lo) * i / (samples - 1);
    double e = std::numeric_limits<double>::quiet_NaN();
    if (z > kMinDepth) {
      try {
        e = energy_fn(box_at_depth(box, K, z));
      } catch (const Error&) {
        // gap
      }
    }
    profile.depths.push_back(z);
    profile.energies.push_back(e);
    if (std::isfinite(e) && e < best) {
      best = e;
      profile.argmin_index = i;
      profile.argmin_depth = z;
    }
  }
  return profile;
}

// "depth,energy" rows; gaps serialize as empty energy fields.
inline std::string profile_to_csv(const EnergyProfile& profile) {
  std::string out = "depth,energy\n";
  for (std::size_t i = 0; i < profile.depths.size(); ++i) {
    out += format_double(profile.depths[i]);
    out += ',';
    if (std::isfinite(profile.energies[i])) out += format_double(profile.energies[i]);
    out += '\n';
  }
  return out;
}

// Uncertainty-weighted depth loss: sqrt(2)/sigma * |z_hat - z*| +
// log sigma (natural log).
inline double laplacian_depth_nll(double z_hat, double sigma_z, double z_true) {
  if (!(sigma_z > 0) || !std::isfinite(sigma_z)) {
    throw InvalidInputError("laplacian_depth_nll: sigma_z must be positive");
  }
  if (!std::isfinite(z_hat) || !std::isfinite(z_true)) {
    throw InvalidInputError("laplacian_depth_nll: non-finite depth");
  }
  return std::numbers::sqrt2 / sigma_z * std::abs(z_hat - z_true) + std::log(sigma_z);
}

struct LaplacianNllGrad {
  double wrt_z_hat = 0.0;
  double wrt_sigma = 0.0;
};

// Analytic partials; wrt_z_hat uses sign(z_hat - z_true) and is 0 at the kink.
inline LaplacianNllGrad laplacian_depth_nll_grad(double z_hat, double sigma_z,
                                                 double z_true) {
  if (!(sigma_z > 0)) throw InvalidInputError("laplacian_depth_nll_grad: sigma_z must be positive");
  const double diff = z_hat - z_true;
  const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  LaplacianNllGrad g;
  g.wrt_z_hat = std::numbers::sqrt2 / sigma_z * sign;
  g.wrt_sigma = -std::numbers::sqrt2 * std::abs(diff) / (sigma_z * sigma_z) + 1.0 / sigma_z;
  return g;
}

}  // namespace mono3d
