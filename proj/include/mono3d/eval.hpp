#pragma once
// Measurement surface: rotated-box BEV / 3D IoU via convex polygon clipping,
// AP|R40 with greedy score-ordered matching, and depth-error statistics.
//
// BEV works in the camera X-Z ground plane; footprints are the yaw-rotated
// w x l rectangles. Boxes are gravity-aligned, so 3D intersection is the BEV
// intersection area times the vertical overlap.

#include <algorithm>
#include <string>
#include <vector>

#include "mono3d/geometry.hpp"

namespace mono3d {

struct Detection {
  Box3D box;
  double score = 0.0;

  int class_id() const { return box.class_id; }
};

struct IouFlags {
  bool degenerate = false;
};

enum class IouKind { kBev, k3d };

namespace detail {

using Vec2 = Eigen::Vector2d;  // (x, z)

// Footprint corners in CCW order (positive shoelace area).
inline std::array<Vec2, 4> bev_footprint(const Box3D& box) {
  const double c = std::cos(box.pose.yaw), s = std::sin(box.pose.yaw);
  const double hw = box.dims.w / 2.0, hl = box.dims.l / 2.0;
  const double cx = box.pose.center.x(), cz = box.pose.center.z();
  const auto corner = [&](double sx, double sz) {
    return Vec2(c * sx * hw + s * sz * hl + cx, -s * sx * hw + c * sz * hl + cz);
  };
  return {corner(+1, +1), corner(-1, +1), corner(-1, -1), corner(+1, -1)};
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return std::abs(acc) / 2.0;
}

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Sutherland-Hodgman: clip `subject` against the CCW convex polygon `clip`.
template <std::size_t N>
std::vector<Vec2> clip_polygon(const std::array<Vec2, N>& clip,
                               std::vector<Vec2> subject) {
  for (std::size_t e = 0; e < N && !subject.empty(); ++e) {
    const Vec2& e1 = clip[e];
    const Vec2& e2 = clip[(e + 1) % N];
    const Vec2 edge = e2 - e1;
    std::vector<Vec2> output;
    output.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& prev = subject[(i + subject.size() - 1) % subject.size()];
      const Vec2& cur = subject[i];
      const bool prev_in = cross2(edge, prev - e1) >= 0.0;
      const bool cur_in = cross2(edge, cur - e1) >= 0.0;
      if (cur_in != prev_in) {
        const Vec2 d = cur - prev;
        const double denom = cross2(edge, d);
        if (denom != 0.0) {
          const double t = cross2(edge, e1 - prev) / denom;
          output.push_back(prev + t * d);
        }
      }
      if (cur_in) output.push_back(cur);
    }
    subject = std::move(output);
  }
  return subject;
}

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const std::vector<Vec2> subject(fa.begin(), fa.end());
  return polygon_area(clip_polygon(fb, subject));
}

}  // namespace detail

// IoU of the yaw-rotated ground-plane rectangles.
inline double bev_iou(const Box3D& a, const Box3D& b, IouFlags* flags = nullptr) {
  const double area_a = a.dims.w * a.dims.l;
  const double area_b = b.dims.w * b.dims.l;
  if (flags) flags->degenerate = false;
  if (area_a < 1e-12 || area_b < 1e-12) {
    if (flags) flags->degenerate = true;
    return 0.0;
  }
  const double inter = detail::bev_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Volume IoU for gravity-aligned boxes.
inline double iou_3d(const Box3D& a, const Box3D& b, IouFlags* flags = nullptr) {
  const double vol_a = a.dims.w * a.dims.h * a.dims.l;
  const double vol_b = b.dims.w * b.dims.h * b.dims.l;
  if (flags) flags->degenerate = false;
  if (vol_a < 1e-12 || vol_b < 1e-12) {
    if (flags) flags->degenerate = true;
    return 0.0;
  }
  const double a_lo = a.pose.center.y() - a.dims.h / 2.0;
  const double a_hi = a.pose.center.y() + a.dims.h / 2.0;
  const double b_lo = b.pose.center.y() - b.dims.h / 2.0;
  const double b_hi = b.pose.center.y() + b.dims.h / 2.0;
  const double overlap = std::min(a_hi, b_hi) - std::max(a_lo, b_lo);
  if (overlap <= 0.0) return 0.0;
  const double inter = detail::bev_intersection_area(a, b) * overlap;
  const double uni = vol_a + vol_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double iou(const Box3D& a, const Box3D& b, IouKind kind) {
  return kind == IouKind::kBev ? bev_iou(a, b) : iou_3d(a, b);
}

// One group per scene/image; matching never crosses groups.
struct ApGroup {
  std::vector<Detection> detections;
  std::vector<Box3D> ground_truth;
};

struct ApDiagnostics {
  bool empty_ground_truth = false;
  int true_positives = 0;
  int false_positives = 0;
};

// One row per detection: which ground truth (if any) it claimed.
struct MatchRow {
  int group = 0;
  int detection = 0;      // index into the group's detection list
  int ground_truth = -1;  // -1 when unmatched (false positive)
  double iou = 0.0;
  double score = 0.0;
};

namespace detail {

// Greedy score-descending matching inside one group: every detection takes
// the highest-IoU unmatched ground truth if that IoU clears the threshold.
// Score ties break by ascending depth, then insertion order.
inline std::vector<MatchRow> greedy_match_group(const ApGroup& group, double iou_thresh,
                                                IouKind kind) {
  std::vector<std::size_t> order(group.detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const Detection& a = group.detections[i];
    const Detection& b = group.detections[j];
    if (a.score != b.score) return a.score > b.score;
    return a.box.pose.center.z() < b.box.pose.center.z();
  });
  std::vector<bool> taken(group.ground_truth.size(), false);
  std::vector<MatchRow> rows;
  rows.reserve(order.size());
  for (std::size_t i : order) {
    const Detection& det = group.detections[i];
    double best_iou = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < group.ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(det.box, group.ground_truth[g], kind);
      if (v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    MatchRow row;
    row.detection = static_cast<int>(i);
    row.score = det.score;
    row.iou = best_iou;
    if (best_gt >= 0 && best_iou >= iou_thresh) {
      row.ground_truth = best_gt;
      taken[static_cast<std::size_t>(best_gt)] = true;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

// Detection <-> ground-truth match table across all groups, in score order
// within each group.
inline std::vector<MatchRow> match_detections(const std::vector<ApGroup>& groups,
                                              double iou_thresh, IouKind kind) {
  std::vector<MatchRow> rows;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (MatchRow row : detail::greedy_match_group(groups[g], iou_thresh, kind)) {
      row.group = static_cast<int>(g);
      rows.push_back(row);
    }
  }
  return rows;
}

// AP at 40 recall levels {1/40 .. 1}: at each level take the maximum
// precision among operating points whose recall reaches the level.
inline double ap_r40_grouped(const std::vector<ApGroup>& groups, double iou_thresh,
                             IouKind kind, ApDiagnostics* diag = nullptr) {
  std::size_t total_gt = 0;
  for (const ApGroup& g : groups) total_gt += g.ground_truth.size();

  struct Ranked {
    double score, tiebreak_z;
    bool tp;
  };
  std::vector<Ranked> ranked;
  ApDiagnostics local;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const MatchRow& row : detail::greedy_match_group(groups[g], iou_thresh, kind)) {
      const bool tp = row.ground_truth >= 0;
      ranked.push_back({row.score,
                        groups[g]
                            .detections[static_cast<std::size_t>(row.detection)]
                            .box.pose.center.z(),
                        tp});
      tp ? ++local.true_positives : ++local.false_positives;
    }
  }
  local.empty_ground_truth = total_gt == 0;
  if (diag) *diag = local;
  if (total_gt == 0) return 0.0;

  // Pool detections across groups in score order to build the PR curve.
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tiebreak_z < b.tiebreak_z;
  });
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& r : ranked) {
    r.tp ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  double ap = 0.0;
  for (int level = 1; level <= 40; ++level) {
    const double r = static_cast<double>(level) / 40.0;
    double best = 0.0;
    for (std::size_t k = 0; k < precision.size(); ++k) {
      if (recall[k] >= r - 1e-12) best = std::max(best, precision[k]);
    }
    ap += best;
  }
  return ap / 40.0;
}

inline double ap_r40(const std::vector<Detection>& detections,
                     const std::vector<Box3D>& ground_truth, double iou_thresh,
                     IouKind kind, ApDiagnostics* diag = nullptr) {
  return ap_r40_grouped({ApGroup{detections, ground_truth}}, iou_thresh, kind, diag);
}

struct DepthErrorStats {
  std::size_t count = 0;
  double mean_abs = 0, median_abs = 0, p90_abs = 0;
  double mean_signed = 0, median_signed = 0, p90_signed = 0;
};

namespace detail {

// Linear-interpolation percentile on a sorted copy (same convention as the
// usual "type 7" quantile).
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace detail

// errors: (estimated depth, true depth) pairs.
inline DepthErrorStats depth_error_stats(
    const std::vector<std::pair<double, double>>& est_truth) {
  if (est_truth.empty()) throw InvalidInputError("depth_error_stats: no data");
  DepthErrorStats out;
  out.count = est_truth.size();
  std::vector<double> signed_err, abs_err;
  signed_err.reserve(est_truth.size());
  abs_err.reserve(est_truth.size());
  double sum_s = 0, sum_a = 0;
  for (const auto& [est, truth] : est_truth) {
    const double d = est - truth;
    signed_err.push_back(d);
    abs_err.push_back(std::abs(d));
    sum_s += d;
    sum_a += std::abs(d);
  }
  out.mean_signed = sum_s / static_cast<double>(out.count);
  out.mean_abs = sum_a / static_cast<double>(out.count);
  out.median_signed = detail::percentile(signed_err, 0.5);
  out.median_abs = detail::percentile(abs_err, 0.5);
  out.p90_signed = detail::percentile(signed_err, 0.9);
  out.p90_abs = detail::percentile(abs_err, 0.9);
  return out;
}

}  // namespace mono3d
