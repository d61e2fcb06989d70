#include "mono3d/solvers.hpp"

#include <algorithm>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mono3d {
namespace {

SceneSample far_scene(double z, double yaw, std::uint64_t seed = 3) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(yaw, {0.3, 0.4, z}), Dimensions(1.8, 1.5, 4.2), 0};
  SceneSample s = render_scene({box}, K, 200, 150);
  s.features = render_features(s, 4, seed);
  return s;
}

KeypointSet exact_keypoints(const Box3D& box, const CameraIntrinsics& K) {
  KeypointSet kps;
  const auto corners = box_corners(box);
  for (std::size_t i = 0; i < corners.size(); ++i) {
    kps.corners[i] = project(K, corners[i]);
    kps.valid[i] = true;
  }
  return kps;
}

TEST(SolveDepth1D, RecoversTruthOnCleanScene) {
  const SceneSample s = far_scene(20.0, 0.4);
  const PixelSet pixels = pixels_from_mask(s.noc);
  EnergyConfig cfg;
  const auto fn = [&](const Box3D& b) {
    return geometric_energy(s.noc, pixels, b, s.camera, cfg);
  };
  const SolverResult r =
      solve_depth_1d(fn, s.boxes[0], s.camera, 18.4, 21.6, 33, 0.005);
  EXPECT_LT(std::abs(r.depth - 20.0), 0.01);
  EXPECT_LT(r.energy_at_solution, 0.05);
  EXPECT_GT(r.evaluations, 33);
}

TEST(SolveDepth1D, ReturnedEnergyMatchesDirectEvaluation) {
  const SceneSample s = far_scene(15.0, -0.7);
  const PixelSet pixels = pixels_from_mask(s.noc);
  EnergyConfig cfg;
  const auto fn = [&](const Box3D& b) {
    return geometric_energy(s.noc, pixels, b, s.camera, cfg);
  };
  const SolverResult r = solve_depth_1d(fn, s.boxes[0], s.camera, 13.4, 16.6, 17, 0.01);
  const double direct = fn(box_at_depth(s.boxes[0], s.camera, r.depth));
  EXPECT_DOUBLE_EQ(r.energy_at_solution, direct);
}

TEST(SolveDepth1D, AgreesWithBruteForceOracle) {
  Rng rng(211);
  EnergyConfig cfg;
  const double tol = 0.005;
  for (int t = 0; t < 25; ++t) {
    const SceneSample s = far_scene(rng.uniform(10, 45), rng.uniform(-1.5, 1.5),
                                    rng.next_u64());
    const PixelSet pixels = pixels_from_mask(s.noc);
    if (pixels.size() < 30) continue;
    const double z_true = s.boxes[0].pose.center.z();
    const auto fn = [&](const Box3D& b) {
      return geometric_energy(s.noc, pixels, b, s.camera, cfg);
    };
    const SolverResult fine =
        solve_depth_1d(fn, s.boxes[0], s.camera, z_true - 1.6, z_true + 1.6, 33, tol);
    const SolverResult oracle = brute_force_oracle(fn, s.boxes[0], s.camera,
                                                   z_true - 1.6, z_true + 1.6, tol / 2);
    EXPECT_LT(std::abs(fine.depth - oracle.depth), tol + tol / 2);
    // Oracle dominance: refinement never ends above the grid minimum.
    EXPECT_LE(fine.energy_at_solution, oracle.energy_at_solution + 1e-9);
  }
}

TEST(SolveDepth1D, DeterministicAndValidatesArgs) {
  const SceneSample s = far_scene(12.0, 0.1);
  const PixelSet pixels = pixels_from_mask(s.noc);
  EnergyConfig cfg;
  const auto fn = [&](const Box3D& b) {
    return geometric_energy(s.noc, pixels, b, s.camera, cfg);
  };
  const SolverResult a = solve_depth_1d(fn, s.boxes[0], s.camera, 10.4, 13.6, 21, 0.01);
  const SolverResult b = solve_depth_1d(fn, s.boxes[0], s.camera, 10.4, 13.6, 21, 0.01);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.energy_at_solution, b.energy_at_solution);
  EXPECT_EQ(a.evaluations, b.evaluations);

  EXPECT_THROW(solve_depth_1d(fn, s.boxes[0], s.camera, 5, 5, 9, 0.01), InvalidInputError);
  EXPECT_THROW(solve_depth_1d(fn, s.boxes[0], s.camera, 5, 6, 2, 0.01), InvalidInputError);
  EXPECT_THROW(solve_depth_1d(fn, s.boxes[0], s.camera, 5, 6, 9, 0.0), InvalidInputError);
}

TEST(SolveDepth1D, NoSupportOverWholeRange) {
  const auto fn = [](const Box3D&) -> double {
    throw InsufficientSupportError("nothing");
  };
  const Box3D box{ObjectPose(0, {0, 0, 10}), Dimensions(1, 1, 1), 0};
  const CameraIntrinsics K(100, 100, 0, 0);
  EXPECT_THROW(solve_depth_1d(fn, box, K, 8, 12, 9, 0.01), NoSupportError);
}

TEST(SparseCornerEnergy, ZeroAtExactProjections) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(0.5, {0.3, 0.2, 25}), Dimensions(1.8, 1.5, 4.2), 0};
  const KeypointSet kps = exact_keypoints(box, K);
  EXPECT_NEAR(sparse_corner_energy(kps, box, K), 0.0, 1e-9);
}

TEST(SparseCornerEnergy, SingleOffsetCornerMean) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(0.0, {0, 0, 30}), Dimensions(2, 2, 4), 0};
  KeypointSet kps = exact_keypoints(box, K);
  kps.corners[2].u += 3.0;
  kps.corners[2].v += 4.0;
  EXPECT_NEAR(sparse_corner_energy(kps, box, K), 5.0 / 8.0, 1e-9);
}

TEST(SparseCornerEnergy, NeedsTwoValidCorners) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(0.0, {0, 0, 30}), Dimensions(2, 2, 4), 0};
  KeypointSet kps = exact_keypoints(box, K);
  for (std::size_t i = 1; i < 8; ++i) kps.valid[i] = false;
  EXPECT_THROW(sparse_corner_energy(kps, box, K), InsufficientSupportError);
}

TEST(SparseCornerEnergy, DegenerateDenseEquivalence) {
  // A NOC map whose 8 valid pixels carry the corner coordinates, observed at
  // their own pixel centers, makes the dense geometric energy coincide with
  // the sparse corner energy.
  const CameraIntrinsics K(100, 100, 32, 32);
  const Box3D box{ObjectPose(0.2, {0.1, -0.2, 12}), Dimensions(2.0, 1.6, 3.6), 0};
  NocMap noc(64, 64);
  KeypointSet kps;
  for (std::size_t i = 0; i < 8; ++i) {
    const int x = 4 + static_cast<int>(i) * 7, y = 40;
    const std::size_t idx = noc.index(x, y);
    noc.coords[idx] = Eigen::Vector3d(kCornerSigns[i][0], kCornerSigns[i][1],
                                      kCornerSigns[i][2]);
    noc.valid[idx] = 1;
    noc.instance[idx] = 0;
    kps.corners[i] = PixelPoint{x + 0.5, y + 0.5};
    kps.valid[i] = true;
  }
  PixelSet pixels;
  for (std::size_t i = 0; i < 8; ++i) pixels.push_back({4 + static_cast<int>(i) * 7, 40});

  EnergyConfig cfg;
  const Box3D hyp = box_at_depth(box, K, 12.7);
  const double dense = geometric_energy(noc, pixels, hyp, K, cfg);
  const double sparse = sparse_corner_energy(kps, hyp, K);
  EXPECT_NEAR(dense, sparse, 1e-12);
}

TEST(SolveSparse, NoiselessKeypointsRecoverTruth) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(-0.3, {0.5, 0.3, 22}), Dimensions(1.8, 1.5, 4.2), 0};
  const KeypointSet kps = exact_keypoints(box, K);
  const PixelPoint center_px = project(K, box.pose.center);
  const SolverResult r =
      solve_sparse(kps, box.dims, box.pose.yaw, center_px, K, 20.4, 23.6, 33, 0.005);
  EXPECT_LT(std::abs(r.depth - 22.0), 0.01);
  EXPECT_EQ(r.variant, SolverVariant::kSparseGeo);
}

TEST(SolveSparse, WorksWithFourOccludedCorners) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(0.8, {-0.4, 0.2, 18}), Dimensions(1.8, 1.5, 4.2), 0};
  KeypointSet kps = exact_keypoints(box, K);
  for (std::size_t i : {1u, 3u, 4u, 6u}) kps.valid[i] = false;
  const PixelPoint center_px = project(K, box.pose.center);
  const SolverResult r =
      solve_sparse(kps, box.dims, box.pose.yaw, center_px, K, 16.4, 19.6, 33, 0.005);
  EXPECT_LT(std::abs(r.depth - 18.0), 0.02);
}

TEST(SolveSparse, OccludedCornersProvablyUnused) {
  const CameraIntrinsics K(700, 700, 100, 75);
  const Box3D box{ObjectPose(0.8, {-0.4, 0.2, 18}), Dimensions(1.8, 1.5, 4.2), 0};
  KeypointSet kps = exact_keypoints(box, K);
  for (std::size_t i : {1u, 3u, 4u, 6u}) kps.valid[i] = false;
  KeypointSet poisoned = kps;
  for (std::size_t i : {1u, 3u, 4u, 6u}) {
    poisoned.corners[i] = {std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN()};
  }
  const PixelPoint center_px = project(K, box.pose.center);
  const SolverResult a =
      solve_sparse(kps, box.dims, box.pose.yaw, center_px, K, 16.4, 19.6, 17, 0.01);
  const SolverResult b = solve_sparse(poisoned, box.dims, box.pose.yaw, center_px, K,
                                      16.4, 19.6, 17, 0.01);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.energy_at_solution, b.energy_at_solution);
}

TEST(SolveSparse, NoisyCornersWorseThanDense) {
  // 1 px corner noise at 40 m, fx = 700: the sparse solver's error
  // distribution must be clearly wider than the dense solver's.
  Rng rng(223);
  std::vector<double> sparse_err, dense_err;
  EnergyConfig cfg;
  for (int t = 0; t < 30; ++t) {
    const SceneSample s = far_scene(40.0, rng.uniform(-1.5, 1.5), rng.next_u64());
    const PixelSet pixels = pixels_from_mask(s.noc);
    if (pixels.size() < 30) continue;
    KeypointSet kps = exact_keypoints(s.boxes[0], s.camera);
    for (auto& c : kps.corners) {
      c.u += rng.normal(0, 1.0);
      c.v += rng.normal(0, 1.0);
    }
    const PixelPoint center_px = project(s.camera, s.boxes[0].pose.center);
    const SolverResult sp = solve_sparse(kps, s.boxes[0].dims, s.boxes[0].pose.yaw,
                                         center_px, s.camera, 38.4, 41.6, 33, 0.005);
    const auto fn = [&](const Box3D& b) {
      return geometric_energy(s.noc, pixels, b, s.camera, cfg);
    };
    const SolverResult de =
        solve_depth_1d(fn, s.boxes[0], s.camera, 38.4, 41.6, 33, 0.005);
    sparse_err.push_back(std::abs(sp.depth - 40.0));
    dense_err.push_back(std::abs(de.depth - 40.0));
  }
  ASSERT_GE(sparse_err.size(), 20u);
  std::sort(sparse_err.begin(), sparse_err.end());
  std::sort(dense_err.begin(), dense_err.end());
  const double sparse_median = sparse_err[sparse_err.size() / 2];
  const double dense_median = dense_err[dense_err.size() / 2];
  EXPECT_GT(sparse_median, dense_median);
}

TEST(BruteForceOracle, StepEqualToRangeEvaluatesEndpoints) {
  const Box3D box{ObjectPose(0, {0, 0, 10}), Dimensions(2, 2, 2), 0};
  const CameraIntrinsics K(100, 100, 0, 0);
  int calls = 0;
  const auto fn = [&](const Box3D& b) {
    ++calls;
    return std::abs(b.pose.center.z() - 10.3);
  };
  const SolverResult r = brute_force_oracle(fn, box, K, 9.0, 11.0, 2.0);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(r.evaluations, 2);
  EXPECT_DOUBLE_EQ(r.depth, 11.0);
}

TEST(BruteForceOracle, MonotoneEnergyReturnsBoundary) {
  const Box3D box{ObjectPose(0, {0, 0, 10}), Dimensions(2, 2, 2), 0};
  const CameraIntrinsics K(100, 100, 0, 0);
  const auto fn = [](const Box3D& b) { return b.pose.center.z(); };
  const SolverResult r = brute_force_oracle(fn, box, K, 5.0, 9.0, 0.5);
  EXPECT_DOUBLE_EQ(r.depth, 5.0);
}

TEST(Solvers, TranslationEquivariance) {
  // Shifting the whole scene by +s shifts solver outputs by +s within tol.
  const double shift = 7.0;
  const double tol = 0.005;
  EnergyConfig cfg;
  const CameraIntrinsics K(700, 700, 100, 75);
  for (double z : {15.0, 25.0}) {
    const Box3D near_box{ObjectPose(0.35, {0.3, 0.4, z}), Dimensions(1.8, 1.5, 4.2), 0};
    const Box3D far_box = {ObjectPose(0.35, {0.3 * (z + shift) / z, 0.4 * (z + shift) / z,
                                             z + shift}),
                           near_box.dims, 0};
    SceneSample a = render_scene({near_box}, K, 200, 150);
    SceneSample b = render_scene({far_box}, K, 200, 150);
    const PixelSet pa = pixels_from_mask(a.noc);
    const PixelSet pb = pixels_from_mask(b.noc);
    const auto fa = [&](const Box3D& bx) {
      return geometric_energy(a.noc, pa, bx, K, cfg);
    };
    const auto fb = [&](const Box3D& bx) {
      return geometric_energy(b.noc, pb, bx, K, cfg);
    };
    const SolverResult ra = solve_depth_1d(fa, a.boxes[0], K, z - 1.6, z + 1.6, 33, tol);
    const SolverResult rb = solve_depth_1d(fb, b.boxes[0], K, z + shift - 1.6,
                                           z + shift + 1.6, 33, tol);
    EXPECT_NEAR(rb.depth - ra.depth, shift, 2 * tol);
  }
}

}  // namespace
}  // namespace mono3d
