#pragma once
// KITTI object-label and calibration text formats.
//
// Label lines carry 15 whitespace-separated fields (16 with a trailing
// score): type truncated occluded alpha left top right bottom h w l x y z
// rotation_y [score]. Dimensions are ordered h, w, l and the location is the
// BOTTOM-center of the box in camera coordinates; conversions to Box3D move
// the reference point to the geometric center and reorder dims to (w, h, l).

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mono3d/geometry.hpp"
#include "mono3d/tensor_io.hpp"

namespace mono3d {

struct KittiLabel {
  std::string type = "Car";
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;  // 2D box, pixels
  double h = 0.0, w = 0.0, l = 0.0;                         // meters
  double x = 0.0, y = 0.0, z = 0.0;  // bottom-center, camera frame
  double rotation_y = 0.0;
  std::optional<double> score;
};

inline const std::array<std::string, 8>& kitti_class_names() {
  static const std::array<std::string, 8> names = {
      "Car", "Van", "Truck", "Pedestrian", "Person_sitting",
      "Cyclist", "Tram", "Misc"};
  return names;
}

inline int kitti_class_id(std::string_view type) {
  const auto& names = kitti_class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == type) return static_cast<int>(i);
  }
  return -1;
}

inline std::string kitti_class_name(int class_id) {
  const auto& names = kitti_class_names();
  if (class_id >= 0 && class_id < static_cast<int>(names.size())) {
    return names[static_cast<std::size_t>(class_id)];
  }
  return "Misc";
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string token;
  while (ss >> token) fields.push_back(token);
  return fields;
}

}  // namespace detail

inline std::vector<KittiLabel> parse_label_file(std::string_view text) {
  std::vector<KittiLabel> labels;
  std::istringstream stream{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 15 && fields.size() != 16) {
      throw ParseError("label line " + std::to_string(line_no) + ": expected 15 or 16 fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string where = "label line " + std::to_string(line_no);
    KittiLabel lab;
    lab.type = fields[0];
    lab.truncated = parse_double(fields[1], where);
    lab.occluded = static_cast<int>(parse_long(fields[2], where));
    lab.alpha = parse_double(fields[3], where);
    lab.left = parse_double(fields[4], where);
    lab.top = parse_double(fields[5], where);
    lab.right = parse_double(fields[6], where);
    lab.bottom = parse_double(fields[7], where);
    lab.h = parse_double(fields[8], where);
    lab.w = parse_double(fields[9], where);
    lab.l = parse_double(fields[10], where);
    lab.x = parse_double(fields[11], where);
    lab.y = parse_double(fields[12], where);
    lab.z = parse_double(fields[13], where);
    lab.rotation_y = parse_double(fields[14], where);
    if (fields.size() == 16) lab.score = parse_double(fields[15], where);
    if (lab.type != "DontCare") {
      if (lab.right < lab.left || lab.bottom < lab.top) {
        throw ParseError(where + ": inverted 2D box");
      }
    }
    labels.push_back(std::move(lab));
  }
  return labels;
}

inline std::string serialize_label(const KittiLabel& lab) {
  std::string out = lab.type;
  for (double v : {lab.truncated}) out += " " + format_double(v);
  out += " " + std::to_string(lab.occluded);
  for (double v : {lab.alpha, lab.left, lab.top, lab.right, lab.bottom, lab.h,
                   lab.w, lab.l, lab.x, lab.y, lab.z, lab.rotation_y}) {
    out += " " + format_double(v);
  }
  if (lab.score) out += " " + format_double(*lab.score);
  return out;
}

inline std::string serialize_labels(const std::vector<KittiLabel>& labels) {
  std::string out;
  for (const auto& lab : labels) {
    out += serialize_label(lab);
    out += '\n';
  }
  return out;
}

inline Box3D kitti_to_box(const KittiLabel& lab) {
  if (lab.type == "DontCare") {
    throw InvalidInputError("kitti_to_box: DontCare labels carry no box");
  }
  const Dimensions dims(lab.w, lab.h, lab.l);  // throws on nonpositive dims
  const Eigen::Vector3d center(lab.x, lab.y - lab.h / 2.0, lab.z);
  return Box3D{ObjectPose(lab.rotation_y, center), dims, kitti_class_id(lab.type)};
}

// Inverse of kitti_to_box for the 3D fields; 2D box, alpha, truncation and
// occlusion are copied from `base` when given (they are not derivable from a
// Box3D alone), otherwise left at defaults with alpha recomputed.
inline KittiLabel box_to_kitti(const Box3D& box, const KittiLabel* base = nullptr) {
  KittiLabel lab = base ? *base : KittiLabel{};
  if (!base) {
    lab.type = kitti_class_name(box.class_id);
    lab.alpha = wrap_angle(box.pose.yaw -
                           std::atan2(box.pose.center.x(), box.pose.center.z()));
  }
  lab.h = box.dims.h;
  lab.w = box.dims.w;
  lab.l = box.dims.l;
  lab.x = box.pose.center.x();
  lab.y = box.pose.center.y() + box.dims.h / 2.0;
  lab.z = box.pose.center.z();
  lab.rotation_y = box.pose.yaw;
  return lab;
}

// KITTI difficulty buckets, decided by 2D box height, occlusion level and
// truncation. Standard cutoffs: Easy 40 px / occ 0 / trunc 0.15, Moderate
// 25 px / occ 1 / trunc 0.30, Hard 25 px / occ 2 / trunc 0.50.
enum class KittiDifficulty { kEasy = 0, kModerate = 1, kHard = 2 };

inline bool passes_difficulty(const KittiLabel& lab, KittiDifficulty level) {
  static constexpr double kMinHeight[3] = {40.0, 25.0, 25.0};
  static constexpr int kMaxOcclusion[3] = {0, 1, 2};
  static constexpr double kMaxTruncation[3] = {0.15, 0.30, 0.50};
  const auto i = static_cast<std::size_t>(level);
  return (lab.bottom - lab.top) >= kMinHeight[i] &&
         lab.occluded <= kMaxOcclusion[i] && lab.truncated <= kMaxTruncation[i];
}

inline std::vector<KittiLabel> filter_by_difficulty(const std::vector<KittiLabel>& labels,
                                                    KittiDifficulty level) {
  std::vector<KittiLabel> out;
  for (const KittiLabel& lab : labels) {
    if (lab.type != "DontCare" && passes_difficulty(lab, level)) out.push_back(lab);
  }
  return out;
}

struct KittiCalib {
  std::array<double, 12> p2{};  // row-major 3x4 projection matrix

  CameraIntrinsics intrinsics() const {
    std::array<double, 12> m = p2;
    if (m[10] == 0.0) throw InvalidInputError("KittiCalib: P2[2][2] is zero");
    if (m[10] != 1.0) {
      for (double& v : m) v /= p2[10];
    }
    return CameraIntrinsics(m[0], m[5], m[2], m[6]);
  }

  // Stereo baseline term P2[0][3]; retained but unused (monocular).
  double baseline_offset() const { return p2[3]; }
};

inline KittiCalib parse_calib(std::string_view text) {
  std::istringstream stream{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto fields = detail::split_fields(line);
    if (fields.empty() || fields[0] != "P2:") continue;
    if (fields.size() != 13) {
      throw ParseError("calib line " + std::to_string(line_no) + ": P2 row has " +
                       std::to_string(fields.size() - 1) + " values, expected 12");
    }
    KittiCalib calib;
    for (int i = 0; i < 12; ++i) {
      calib.p2[static_cast<std::size_t>(i)] =
          parse_double(fields[static_cast<std::size_t>(i + 1)],
                       "calib line " + std::to_string(line_no));
    }
    return calib;
  }
  throw ParseError("calib: no P2 row found");
}

inline std::string serialize_calib(const KittiCalib& calib) {
  std::string out = "P2:";
  for (double v : calib.p2) out += " " + format_double(v);
  out += '\n';
  return out;
}

}  // namespace mono3d
