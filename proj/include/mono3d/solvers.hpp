#pragma once
// Depth recovery by constraint minimization along the projected-center ray:
// coarse grid scan + golden-section refinement, the sparse 8-corner energy,
// and the exhaustive brute-force oracle the solvers are cross-checked
// against. All solvers are deterministic pure functions.

#include <array>
#include <string>

#include "mono3d/energy.hpp"

namespace mono3d {

enum class SolverVariant { kSparseGeo, kDenseGeo, kJoint, kOracle, kRefine };

inline const char* solver_variant_name(SolverVariant v) {
  switch (v) {
    case SolverVariant::kSparseGeo: return "sparse_geo";
    case SolverVariant::kDenseGeo: return "dense_geo";
    case SolverVariant::kJoint: return "joint";
    case SolverVariant::kOracle: return "oracle";
    case SolverVariant::kRefine: return "refine";
  }
  return "unknown";
}

struct SolverResult {
  double depth = 0.0;
  double energy_at_solution = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  SolverVariant variant = SolverVariant::kDenseGeo;
};

// Observed 2D corners in the fixed kCornerSigns ordering.
struct KeypointSet {
  std::array<PixelPoint, 8> corners{};
  std::array<bool, 8> valid{};

  int valid_count() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

namespace detail {

template <typename EnergyFn>
class DepthObjective {
 public:
  DepthObjective(EnergyFn& fn, const Box3D& proposal, const CameraIntrinsics& K)
      : fn_(fn), proposal_(proposal), K_(K) {}

  double operator()(double z) {
    ++evaluations_;
    if (!(z > kMinDepth)) return std::numeric_limits<double>::infinity();
    try {
      return fn_(box_at_depth(proposal_, K_, z));
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  long evaluations() const { return evaluations_; }

 private:
  EnergyFn& fn_;
  const Box3D& proposal_;
  const CameraIntrinsics& K_;
  long evaluations_ = 0;
};

}  // namespace detail

// Coarse scan over [search_lo, search_hi] followed by golden-section
// refinement inside the best bracket; stops once the bracket is below tol.
// energy_fn: double(const Box3D&), evaluated with the center slid along the
// proposal's projected-center ray. Returns the best depth actually evaluated,
// so energy_at_solution always equals a direct evaluation at that depth.
template <typename EnergyFn>
SolverResult solve_depth_1d(EnergyFn&& energy_fn, const Box3D& proposal,
                            const CameraIntrinsics& K, double search_lo,
                            double search_hi, int coarse_steps, double tol,
                            SolverVariant tag = SolverVariant::kDenseGeo) {
  if (!(search_lo < search_hi)) throw InvalidInputError("solve_depth_1d: empty range");
  if (coarse_steps < 3) throw InvalidInputError("solve_depth_1d: need >= 3 coarse steps");
  if (!(tol > 0)) throw InvalidInputError("solve_depth_1d: tol must be positive");

  detail::DepthObjective<EnergyFn> objective(energy_fn, proposal, K);
  double best_z = 0.0;
  double best_e = std::numeric_limits<double>::infinity();
  const auto eval = [&](double z) {
    const double e = objective(z);
    if (e < best_e) {
      best_e = e;
      best_z = z;
    }
    return e;
  };

  std::vector<double> grid(static_cast<std::size_t>(coarse_steps));
  int best_idx = -1;
  double best_coarse = std::numeric_limits<double>::infinity();
  for (int i = 0; i < coarse_steps; ++i) {
    const double z = search_lo + (search_hi - search_lo) * i / (coarse_steps - 1);
    grid[static_cast<std::size_t>(i)] = z;
    const double e = eval(z);
    if (e < best_coarse) {
      best_coarse = e;
      best_idx = i;
    }
  }
  if (best_idx < 0) {
    throw NoSupportError("solve_depth_1d: energy undefined over the whole range");
  }

  double a = grid[static_cast<std::size_t>(std::max(best_idx - 1, 0))];
  double c = grid[static_cast<std::size_t>(std::min(best_idx + 1, coarse_steps - 1))];
  constexpr double kGolden = 0.6180339887498949;
  double x1 = c - kGolden * (c - a);
  double x2 = a + kGolden * (c - a);
  double f1 = eval(x1);
  double f2 = eval(x2);
  while (c - a > tol) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - kGolden * (c - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (c - a);
      f2 = eval(x2);
    }
  }

  SolverResult result;
  result.depth = best_z;
  result.energy_at_solution = best_e;
  result.evaluations = objective.evaluations();
  result.variant = tag;
  return result;
}

// Mean reprojection distance between observed corner pixels and the
// projections of box_corners(box), over valid corners. Corners whose 3D
// point falls behind the camera are excluded like invalid ones.
inline double sparse_corner_energy(const KeypointSet& keypoints, const Box3D& box,
                                   const CameraIntrinsics& K) {
  if (keypoints.valid_count() < 2) {
    throw InsufficientSupportError("sparse_corner_energy: need >= 2 valid corners");
  }
  const auto corners = box_corners(box);
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    if (!keypoints.valid[i]) continue;
    const auto projected = try_project(K, corners[i]);
    if (!projected) continue;
    const double du = projected->u - keypoints.corners[i].u;
    const double dv = projected->v - keypoints.corners[i].v;
    sum += std::sqrt(du * du + dv * dv);
    ++used;
  }
  if (used < 2) {
    throw InsufficientSupportError("sparse_corner_energy: fewer than 2 projectable corners");
  }
  return sum / used;
}

// Corner-keypoint sparse solve: dimensions and yaw from the proposal stage, the
// center constrained to the ray through center_px, depth the only unknown.
inline SolverResult solve_sparse(const KeypointSet& keypoints, const Dimensions& dims,
                                 double yaw, PixelPoint center_px,
                                 const CameraIntrinsics& K, double search_lo,
                                 double search_hi, int coarse_steps, double tol) {
  const double mid = 0.5 * (search_lo + search_hi);
  const Box3D proposal{
      ObjectPose(yaw, backproject(K, center_px, std::max(mid, 2.0 * kMinDepth))), dims, 0};
  const auto fn = [&](const Box3D& b) { return sparse_corner_energy(keypoints, b, K); };
  return solve_depth_1d(fn, proposal, K, search_lo, search_hi, coarse_steps, tol,
                        SolverVariant::kSparseGeo);
}

// Exhaustive fixed-grid scan; never refined, deliberately simple.
template <typename EnergyFn>
SolverResult brute_force_oracle(EnergyFn&& energy_fn, const Box3D& proposal,
                                const CameraIntrinsics& K, double search_lo,
                                double search_hi, double step) {
  if (!(step > 0)) throw InvalidInputError("brute_force_oracle: step must be positive");
  if (!(search_lo < search_hi)) throw InvalidInputError("brute_force_oracle: empty range");

  detail::DepthObjective<EnergyFn> objective(energy_fn, proposal, K);
  const long n = static_cast<long>(std::floor((search_hi - search_lo) / step + 1e-9)) + 1;
  SolverResult result;
  result.variant = SolverVariant::kOracle;
  for (long i = 0; i < n; ++i) {
    const double z = search_lo + step * static_cast<double>(i);
    const double e = objective(z);
    if (e < result.energy_at_solution) {
      result.energy_at_solution = e;
      result.depth = z;
    }
  }
  result.evaluations = objective.evaluations();
  if (!std::isfinite(result.energy_at_solution)) {
    throw NoSupportError("brute_force_oracle: energy undefined over the whole range");
  }
  return result;
}

}  // namespace mono3d
