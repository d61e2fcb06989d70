#include "mono3d/eval.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mono3d {
namespace {

Box3D bev_box(double x, double z, double w, double l, double yaw, double y = 0,
              double h = 1.5) {
  return Box3D{ObjectPose(yaw, {x, y, z}), Dimensions(w, h, l), 0};
}

// Monte-Carlo point-in-polygon IoU oracle over the joint bounding rectangle.
double monte_carlo_bev_iou(const Box3D& a, const Box3D& b, int samples, Rng& rng) {
  const auto inside = [](const Box3D& box, double x, double z) {
    const double c = std::cos(box.pose.yaw), s = std::sin(box.pose.yaw);
    const double dx = x - box.pose.center.x();
    const double dz = z - box.pose.center.z();
    // Inverse of the footprint rotation.
    const double ox = c * dx - s * dz;
    const double oz = s * dx + c * dz;
    return std::abs(ox) <= box.dims.w / 2.0 && std::abs(oz) <= box.dims.l / 2.0;
  };
  double x_lo = 1e30, x_hi = -1e30, z_lo = 1e30, z_hi = -1e30;
  for (const Box3D* box : {&a, &b}) {
    const double r = std::hypot(box->dims.w, box->dims.l) / 2.0;
    x_lo = std::min(x_lo, box->pose.center.x() - r);
    x_hi = std::max(x_hi, box->pose.center.x() + r);
    z_lo = std::min(z_lo, box->pose.center.z() - r);
    z_hi = std::max(z_hi, box->pose.center.z() + r);
  }
  long in_a = 0, in_b = 0, in_both = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = rng.uniform(x_lo, x_hi);
    const double z = rng.uniform(z_lo, z_hi);
    const bool ia = inside(a, x, z), ib = inside(b, x, z);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const long uni = in_a + in_b - in_both;
  return uni > 0 ? static_cast<double>(in_both) / static_cast<double>(uni) : 0.0;
}

Box3D rotate_about_camera_y(const Box3D& box, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double x = box.pose.center.x(), z = box.pose.center.z();
  Box3D out = box;
  out.pose = ObjectPose(box.pose.yaw + angle,
                        {c * x + s * z, box.pose.center.y(), -s * x + c * z});
  return out;
}

// Independent AP reference: enumerate the PR curve explicitly from a
// TP/FP sequence already sorted by descending score.
double reference_ap_r40(const std::vector<bool>& tp_sequence, std::size_t gt_count) {
  double ap = 0.0;
  for (int level = 1; level <= 40; ++level) {
    const double r = level / 40.0;
    double best = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < tp_sequence.size(); ++k) {
      tp += tp_sequence[k] ? 1 : 0;
      const double recall = static_cast<double>(tp) / static_cast<double>(gt_count);
      const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
      if (recall >= r - 1e-12) best = std::max(best, precision);
    }
    ap += best;
  }
  return ap / 40.0;
}

TEST(BevIou, IdenticalBoxesGiveOne) {
  const Box3D a = bev_box(1.0, 10.0, 1.8, 4.2, 0.45);
  EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
}

TEST(BevIou, DisjointBoxesGiveZero) {
  const Box3D a = bev_box(0, 10, 2, 4, 0.0);
  const Box3D b = bev_box(10, 10, 2, 4, 0.7);
  EXPECT_EQ(bev_iou(a, b), 0.0);
}

TEST(BevIou, RotatedUnitSquaresClosedForm) {
  // Unit squares, same center, one rotated 45 degrees: intersection is the
  // regular octagon 2(sqrt(2)-1); IoU = that over 2 - that.
  const Box3D a = bev_box(0, 5, 1, 1, 0.0);
  const Box3D b = bev_box(0, 5, 1, 1, std::numbers::pi / 4.0);
  const double inter = 2.0 * (std::numbers::sqrt2 - 1.0);
  const double expected = inter / (2.0 - inter);
  EXPECT_NEAR(bev_iou(a, b), expected, 1e-12);

  Rng rng(7);
  const double mc = monte_carlo_bev_iou(a, b, 1000000, rng);
  EXPECT_NEAR(bev_iou(a, b), mc, 2e-3);
}

TEST(BevIou, MatchesMonteCarloOnRandomPairs) {
  Rng rng(11);
  for (int t = 0; t < 25; ++t) {
    const Box3D a = bev_box(rng.uniform(-2, 2), rng.uniform(8, 12),
                            rng.uniform(1, 3), rng.uniform(2, 5),
                            rng.uniform(-3, 3));
    const Box3D b = bev_box(a.pose.center.x() + rng.uniform(-1.5, 1.5),
                            a.pose.center.z() + rng.uniform(-1.5, 1.5),
                            rng.uniform(1, 3), rng.uniform(2, 5),
                            rng.uniform(-3, 3));
    const double exact = bev_iou(a, b);
    const double mc = monte_carlo_bev_iou(a, b, 200000, rng);
    EXPECT_NEAR(exact, mc, 6e-3);
  }
}

TEST(BevIou, SymmetricAndBounded) {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const Box3D a = bev_box(rng.uniform(-3, 3), rng.uniform(5, 15), rng.uniform(0.5, 3),
                            rng.uniform(0.5, 5), rng.uniform(-3, 3));
    const Box3D b = bev_box(rng.uniform(-3, 3), rng.uniform(5, 15), rng.uniform(0.5, 3),
                            rng.uniform(0.5, 5), rng.uniform(-3, 3));
    const double ab = bev_iou(a, b);
    EXPECT_NEAR(ab, bev_iou(b, a), 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(iou_3d(a, b), iou_3d(b, a), 1e-12);
  }
}

TEST(BevIou, RotationEquivariance) {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    const Box3D a = bev_box(rng.uniform(-3, 3), rng.uniform(5, 15), rng.uniform(1, 3),
                            rng.uniform(2, 5), rng.uniform(-3, 3));
    const Box3D b = bev_box(a.pose.center.x() + rng.uniform(-2, 2),
                            a.pose.center.z() + rng.uniform(-2, 2), rng.uniform(1, 3),
                            rng.uniform(2, 5), rng.uniform(-3, 3));
    const double angle = rng.uniform(-3, 3);
    const double before = bev_iou(a, b);
    const double after = bev_iou(rotate_about_camera_y(a, angle),
                                 rotate_about_camera_y(b, angle));
    EXPECT_NEAR(before, after, 1e-9);
  }
}

TEST(Iou3d, HandComputedCases) {
  const Box3D a{ObjectPose(0.0, {0, 0, 10}), Dimensions(2, 2, 2), 0};
  EXPECT_NEAR(iou_3d(a, a), 1.0, 1e-12);

  Box3D lifted = a;
  lifted.pose = ObjectPose(0.0, {0, 2.0, 10});  // vertical offset == h
  EXPECT_EQ(iou_3d(a, lifted), 0.0);

  Box3D shifted = a;
  shifted.pose = ObjectPose(0.0, {1.0, 0, 10});
  EXPECT_NEAR(iou_3d(a, shifted), 1.0 / 3.0, 1e-12);
}

TEST(ApR40, PerfectDetectionsGiveOne) {
  Rng rng(19);
  std::vector<Box3D> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 6; ++i) {
    const Box3D b = bev_box(3.0 * i, 10 + 2.0 * i, 1.8, 4.2, rng.uniform(-3, 3));
    gts.push_back(b);
    dets.push_back({b, rng.uniform(0, 1)});
  }
  EXPECT_NEAR(ap_r40(dets, gts, 0.7, IouKind::kBev), 1.0, 1e-12);
  EXPECT_NEAR(ap_r40(dets, gts, 0.7, IouKind::k3d), 1.0, 1e-12);
}

TEST(ApR40, NoDetectionsGiveZero) {
  const std::vector<Box3D> gts = {bev_box(0, 10, 2, 4, 0)};
  EXPECT_EQ(ap_r40({}, gts, 0.5, IouKind::kBev), 0.0);
}

TEST(ApR40, EmptyGroundTruthFlagsDiagnostic) {
  ApDiagnostics diag;
  const std::vector<Detection> dets = {{bev_box(0, 10, 2, 4, 0), 0.9}};
  EXPECT_EQ(ap_r40(dets, {}, 0.5, IouKind::kBev, &diag), 0.0);
  EXPECT_TRUE(diag.empty_ground_truth);
  EXPECT_EQ(diag.false_positives, 1);
}

TEST(ApR40, ThreeDetectionsTwoTruthsMatchesReference) {
  // Ranks 1 and 3 are true matches, rank 2 is a false positive.
  const Box3D gt1 = bev_box(0, 10, 1.8, 4.2, 0.2);
  const Box3D gt2 = bev_box(5, 14, 1.8, 4.2, -0.4);
  const std::vector<Box3D> gts = {gt1, gt2};
  const std::vector<Detection> dets = {
      {gt1, 0.9}, {bev_box(-8, 20, 1.8, 4.2, 0.0), 0.8}, {gt2, 0.7}};
  const double ap = ap_r40(dets, gts, 0.5, IouKind::kBev);
  const double expected = reference_ap_r40({true, false, true}, 2);
  EXPECT_NEAR(ap, expected, 1e-12);
  EXPECT_NEAR(expected, (20.0 * 1.0 + 20.0 * (2.0 / 3.0)) / 40.0, 1e-12);
}

TEST(ApR40, AddingTopScoredCorrectDetectionNeverHurts) {
  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    std::vector<Box3D> gts;
    std::vector<Detection> dets;
    const int n_gt = rng.uniform_int(2, 6);
    for (int g = 0; g < n_gt; ++g) {
      gts.push_back(bev_box(6.0 * g, 10 + 3.0 * g, 1.8, 4.2, rng.uniform(-3, 3)));
    }
    const int n_det = rng.uniform_int(0, 5);
    for (int d = 0; d < n_det; ++d) {
      Box3D b = gts[static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))];
      if (rng.bernoulli(0.4)) {
        b.pose = ObjectPose(b.pose.yaw, b.pose.center + Eigen::Vector3d(30, 0, 30));
      }
      dets.push_back({b, rng.uniform(0, 0.9)});
    }
    const double before = ap_r40(dets, gts, 0.5, IouKind::kBev);
    // Add a correct detection for an unmatched GT at the top score.
    std::vector<Detection> more = dets;
    more.push_back({gts[0], 0.95});
    const double after = ap_r40(more, gts, 0.5, IouKind::kBev);
    EXPECT_GE(after, before - 1e-12);
  }
}

TEST(ApR40, GroupedMatchingDoesNotCrossScenes) {
  // Same geometry in two scenes: a detection may only match its own scene.
  const Box3D gt = bev_box(0, 10, 1.8, 4.2, 0.0);
  ApGroup scene_a{{{gt, 0.9}}, {gt}};
  ApGroup scene_b{{}, {gt}};
  const double ap = ap_r40_grouped({scene_a, scene_b}, 0.5, IouKind::kBev);
  // One of two GTs found at precision 1: AP = levels up to recall 0.5.
  EXPECT_NEAR(ap, 0.5, 1e-12);
}

TEST(MatchDetections, TableIdentifiesTpAndFp) {
  const Box3D gt1 = bev_box(0, 10, 1.8, 4.2, 0.2);
  const Box3D gt2 = bev_box(5, 14, 1.8, 4.2, -0.4);
  const ApGroup group{{{gt1, 0.9}, {bev_box(-8, 20, 1.8, 4.2, 0.0), 0.8}, {gt2, 0.7}},
                      {gt1, gt2}};
  const auto rows = match_detections({group}, 0.5, IouKind::kBev);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].detection, 0);
  EXPECT_EQ(rows[0].ground_truth, 0);
  EXPECT_NEAR(rows[0].iou, 1.0, 1e-12);
  EXPECT_EQ(rows[1].detection, 1);
  EXPECT_EQ(rows[1].ground_truth, -1);
  EXPECT_EQ(rows[2].detection, 2);
  EXPECT_EQ(rows[2].ground_truth, 1);
  EXPECT_EQ(rows[0].group, 0);
}

TEST(MatchDetections, EachGroundTruthMatchedOnce) {
  const Box3D gt = bev_box(0, 10, 1.8, 4.2, 0.0);
  const ApGroup group{{{gt, 0.9}, {gt, 0.8}}, {gt}};
  const auto rows = match_detections({group}, 0.5, IouKind::kBev);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].ground_truth, 0);   // higher score wins the GT
  EXPECT_EQ(rows[1].ground_truth, -1);  // duplicate becomes a false positive
}

TEST(DepthErrorStats, HandComputedCases) {
  const DepthErrorStats zero = depth_error_stats({{10, 10}, {20, 20}});
  EXPECT_EQ(zero.mean_abs, 0.0);
  EXPECT_EQ(zero.median_abs, 0.0);
  EXPECT_EQ(zero.p90_abs, 0.0);

  const DepthErrorStats s =
      depth_error_stats({{11, 10}, {22, 20}, {33, 30}});  // errors 1, 2, 3
  EXPECT_NEAR(s.mean_abs, 2.0, 1e-12);
  EXPECT_NEAR(s.median_abs, 2.0, 1e-12);
  EXPECT_NEAR(s.mean_signed, 2.0, 1e-12);

  EXPECT_THROW(depth_error_stats({}), InvalidInputError);
}

TEST(DepthErrorStats, LaplacianMedianMatchesTheory) {
  Rng rng(29);
  const double scale = 0.8;
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 10000; ++i) {
    pairs.push_back({20.0 + rng.laplace(scale), 20.0});
  }
  const DepthErrorStats s = depth_error_stats(pairs);
  const double expected_median = scale * std::log(2.0);
  EXPECT_NEAR(s.median_abs, expected_median, 0.05 * expected_median);
}

}  // namespace
}  // namespace mono3d
