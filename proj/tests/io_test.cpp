#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mono3d/kitti.hpp"
#include "mono3d/tensor_io.hpp"
#include "test_util.hpp"

namespace mono3d {
namespace {

namespace fs = std::filesystem;

class TensorIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "mono3d_io_test";
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(TensorIoTest, RoundTripIsBitExact) {
  Rng rng(101);
  TensorF32 t;
  t.name = "noc";
  t.shape = {7, 5, 3};
  for (std::size_t i = 0; i < t.element_count(); ++i) {
    t.data.push_back(static_cast<float>(rng.uniform(-10, 10)));
  }
  const fs::path path = dir_ / "t.bin";
  write_tensor(path, t);
  const TensorF32 back = read_tensor(path);
  EXPECT_EQ(back.name, t.name);
  EXPECT_EQ(back.shape, t.shape);
  ASSERT_EQ(back.data.size(), t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data[i]),
              std::bit_cast<std::uint32_t>(t.data[i]));
  }
}

TEST_F(TensorIoTest, TruncatedPayloadRejected) {
  TensorF32 t;
  t.name = "depth";
  t.shape = {4, 4};
  t.data.assign(16, 1.0f);
  const fs::path path = dir_ / "trunc.bin";
  write_tensor(path, t);
  // Chop off the last 8 bytes.
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 8);
  EXPECT_THROW(read_tensor(path), CorruptDataError);
}

TEST_F(TensorIoTest, ShapePayloadMismatchRejected) {
  const fs::path path = dir_ / "bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << R"({"dtype":"float32","shape":[2,2],"name":"x"})" << '\n';
    const float vals[6] = {1, 2, 3, 4, 5, 6};  // header promises 4
    out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
  }
  EXPECT_THROW(read_tensor(path), CorruptDataError);
}

TEST_F(TensorIoTest, MalformedHeaderRejected) {
  const fs::path path = dir_ / "header.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not json\n";
  }
  EXPECT_THROW(read_tensor(path), CorruptDataError);
  EXPECT_THROW(read_tensor(dir_ / "does_not_exist.bin"), IoError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  Rng rng(55);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal(0, 1e3) * std::pow(10.0, rng.uniform_int(-12, 12));
    const std::string s = format_double(v);
    EXPECT_EQ(parse_double(s, "fmt"), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.0), "-2");
}

TEST(KittiLabels, EmptyFileGivesEmptyList) {
  EXPECT_TRUE(parse_label_file("").empty());
  EXPECT_TRUE(parse_label_file("\n\n").empty());
}

TEST(KittiLabels, HandWrittenCarLine) {
  const std::string line =
      "Car 0.1 1 -1.57 300.5 150.25 420 260 1.52 1.73 4.1 -2.5 1.65 28.4 0.25";
  const auto labels = parse_label_file(line);
  ASSERT_EQ(labels.size(), 1u);
  const KittiLabel& lab = labels[0];
  EXPECT_EQ(lab.type, "Car");
  EXPECT_EQ(lab.truncated, 0.1);
  EXPECT_EQ(lab.occluded, 1);
  EXPECT_EQ(lab.alpha, -1.57);
  EXPECT_EQ(lab.left, 300.5);
  EXPECT_EQ(lab.top, 150.25);
  EXPECT_EQ(lab.right, 420.0);
  EXPECT_EQ(lab.bottom, 260.0);
  EXPECT_EQ(lab.h, 1.52);
  EXPECT_EQ(lab.w, 1.73);
  EXPECT_EQ(lab.l, 4.1);
  EXPECT_EQ(lab.x, -2.5);
  EXPECT_EQ(lab.y, 1.65);
  EXPECT_EQ(lab.z, 28.4);
  EXPECT_EQ(lab.rotation_y, 0.25);
  EXPECT_FALSE(lab.score.has_value());
}

TEST(KittiLabels, ScoreFieldParsed) {
  const auto labels = parse_label_file(
      "Pedestrian 0 0 0.5 10 20 30 40 1.8 0.6 0.9 1 2 12 0.1 0.87");
  ASSERT_EQ(labels.size(), 1u);
  ASSERT_TRUE(labels[0].score.has_value());
  EXPECT_EQ(*labels[0].score, 0.87);
}

TEST(KittiLabels, WrongFieldCountNamesLine) {
  const std::string text =
      "Car 0 0 0 1 2 3 4 1.5 1.7 4 0 1 20 0\n"
      "Car 0 0 0 1 2 3\n";
  try {
    parse_label_file(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(KittiLabels, BadNumberNamesLine) {
  EXPECT_THROW(parse_label_file("Car 0 0 zero 1 2 3 4 1.5 1.7 4 0 1 20 0"),
               ParseError);
}

TEST(KittiLabels, ParseSerializeParseFixpoint) {
  const std::string text =
      "Car 0.1 1 -1.5707963267948966 300.5 150.25 420 260 1.52 1.73 4.1 -2.5 1.65 28.4 0.25\n"
      "DontCare -1 -1 -10 559.62 175.83 575.4 183.15 -1 -1 -1 -1000 -1000 -1000 -10\n"
      "Cyclist 0 3 0.25 0 0 12.5 20 1.7 0.6 1.76 3.2 1.61 17.93 1.0 0.5\n";
  const auto first = parse_label_file(text);
  const std::string emitted = serialize_labels(first);
  const auto second = parse_label_file(emitted);
  ASSERT_EQ(first.size(), second.size());
  EXPECT_EQ(emitted, serialize_labels(second));
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].type, second[i].type);
    EXPECT_EQ(first[i].rotation_y, second[i].rotation_y);
    EXPECT_EQ(first[i].score.has_value(), second[i].score.has_value());
  }
}

TEST(KittiLabels, DontCarePreserved) {
  const auto labels = parse_label_file(
      "DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10");
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].type, "DontCare");
  EXPECT_THROW(kitti_to_box(labels[0]), InvalidInputError);
}

TEST(KittiToBox, BottomCenterMovesToCenter) {
  KittiLabel lab;
  lab.type = "Car";
  lab.h = 2.0;
  lab.w = 1.8;
  lab.l = 4.2;
  lab.x = 0.0;
  lab.y = 1.0;
  lab.z = 10.0;
  lab.rotation_y = 0.0;
  const Box3D box = kitti_to_box(lab);
  EXPECT_LT((box.pose.center - Eigen::Vector3d(0, 0, 10)).norm(), 1e-15);
  EXPECT_EQ(box.dims.w, 1.8);
  EXPECT_EQ(box.dims.h, 2.0);
  EXPECT_EQ(box.dims.l, 4.2);
  EXPECT_EQ(box.pose.yaw, 0.0);
  EXPECT_EQ(box.class_id, 0);
}

TEST(KittiToBox, RoundTripThroughBox) {
  const std::string line =
      "Van 0.2 2 1.1 5 6 100 120 2.1 1.9 5.3 -3.25 1.8 42.7 -0.4";
  const auto labels = parse_label_file(line);
  const Box3D box = kitti_to_box(labels[0]);
  const KittiLabel back = box_to_kitti(box, &labels[0]);
  EXPECT_EQ(back.type, labels[0].type);
  EXPECT_NEAR(back.h, labels[0].h, 1e-9);
  EXPECT_NEAR(back.w, labels[0].w, 1e-9);
  EXPECT_NEAR(back.l, labels[0].l, 1e-9);
  EXPECT_NEAR(back.x, labels[0].x, 1e-9);
  EXPECT_NEAR(back.y, labels[0].y, 1e-9);
  EXPECT_NEAR(back.z, labels[0].z, 1e-9);
  EXPECT_NEAR(back.rotation_y, labels[0].rotation_y, 1e-9);
  EXPECT_EQ(back.left, labels[0].left);
  EXPECT_EQ(back.alpha, labels[0].alpha);
}

TEST(KittiToBox, NonPositiveDimsRejected) {
  KittiLabel lab;
  lab.type = "Car";
  lab.h = 0.0;
  lab.w = 1.0;
  lab.l = 4.0;
  EXPECT_THROW(kitti_to_box(lab), InvalidInputError);
}

TEST(KittiDifficultyFilter, StandardBuckets) {
  KittiLabel easy;
  easy.type = "Car";
  easy.top = 100;
  easy.bottom = 145;  // 45 px tall
  easy.occluded = 0;
  easy.truncated = 0.1;

  KittiLabel moderate = easy;
  moderate.bottom = 130;  // 30 px tall
  moderate.occluded = 1;

  KittiLabel hard = easy;
  hard.occluded = 2;
  hard.truncated = 0.45;

  KittiLabel beyond = easy;
  beyond.bottom = 115;  // 15 px: below every height cutoff

  EXPECT_TRUE(passes_difficulty(easy, KittiDifficulty::kEasy));
  EXPECT_FALSE(passes_difficulty(moderate, KittiDifficulty::kEasy));
  EXPECT_TRUE(passes_difficulty(moderate, KittiDifficulty::kModerate));
  EXPECT_FALSE(passes_difficulty(hard, KittiDifficulty::kModerate));
  EXPECT_TRUE(passes_difficulty(hard, KittiDifficulty::kHard));
  EXPECT_FALSE(passes_difficulty(beyond, KittiDifficulty::kHard));

  KittiLabel dont_care = easy;
  dont_care.type = "DontCare";
  const auto kept = filter_by_difficulty({easy, moderate, hard, dont_care},
                                         KittiDifficulty::kModerate);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_TRUE(passes_difficulty(kept[0], KittiDifficulty::kModerate));
}

TEST(KittiCalib, IntrinsicsFromP2) {
  const std::string text =
      "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"
      "P2: 700 0 600 44.85 0 700 180 0.21 0 0 1 0.003\n"
      "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  const KittiCalib calib = parse_calib(text);
  const CameraIntrinsics K = calib.intrinsics();
  EXPECT_EQ(K.fx, 700.0);
  EXPECT_EQ(K.fy, 700.0);
  EXPECT_EQ(K.cx, 600.0);
  EXPECT_EQ(K.cy, 180.0);
  EXPECT_EQ(calib.baseline_offset(), 44.85);
}

TEST(KittiCalib, MissingP2Rejected) {
  EXPECT_THROW(parse_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"), ParseError);
  EXPECT_THROW(parse_calib("P2: 1 2 3\n"), ParseError);
}

TEST(KittiCalib, SerializeParseFixpoint) {
  const std::string text = "P2: 721.5377 0 609.5593 44.85728 0 721.5377 172.854 0.2163791 0 0 1 0.002745884\n";
  const KittiCalib calib = parse_calib(text);
  const std::string emitted = serialize_calib(calib);
  const KittiCalib again = parse_calib(emitted);
  EXPECT_EQ(serialize_calib(again), emitted);
  EXPECT_EQ(again.p2, calib.p2);
}

}  // namespace
}  // namespace mono3d
